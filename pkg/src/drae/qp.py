"""Best-response quadratic programs over the floored simplex.

The feasible set is ``{x : x_i >= eps, sum(x) = 1}``. Both programs are
solved by a primal active-set method on the convex form
``min 0.5 x^T Q x + c^T x``; with ``Q`` positive definite the method
terminates at the unique optimum in finitely many steps.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .game import ContractError, InfeasibleFloorError, MixedStrategy, DEFAULT_EPS
from .risk import RiskMatrix, Stage

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 10_000


@dataclass(frozen=True)
class QPSolution:
    strategy: MixedStrategy
    objective: float
    kkt_residual: float
    iterations: int
    converged: bool
    history: tuple = field(default=(), repr=False)


def _check_floor(n: int, eps: float) -> None:
    if eps < 0 or eps * n > 1 + 1e-12:
        raise InfeasibleFloorError(f"eps={eps} is infeasible for {n} actions")


def project_simplex_floor(v, eps: float = 0.0) -> np.ndarray:
    """Euclidean projection of ``v`` onto ``{x >= eps, sum(x) = 1}``."""
    v = np.asarray(v, dtype=float)
    n = v.size
    _check_floor(n, eps)
    mass = 1.0 - n * eps
    y = v - eps
    if mass <= 0:
        return np.full(n, eps)
    u = np.sort(y)[::-1]
    css = np.cumsum(u) - mass
    k = np.arange(1, n + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    theta = css[rho] / (rho + 1)
    return np.maximum(y - theta, 0.0) + eps


def projected_gradient_norm(x, grad_ascent, eps: float) -> float:
    """``||P(x + g) - x||_2``; zero exactly at a maximizer over the floored simplex."""
    return float(np.linalg.norm(project_simplex_floor(x + grad_ascent, eps) - x))


def _as_matrix(risk) -> np.ndarray:
    if isinstance(risk, RiskMatrix):
        if risk.stage is Stage.RAW:
            raise ContractError("optimize against a symmetrized or PD-projected risk matrix")
        return risk.values
    m = np.asarray(risk, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ContractError("risk must be a square matrix")
    return m


def _active_set(Q, c, eps, x0, a=None, b=None, max_iter=DEFAULT_MAX_ITER):
    """Primal active-set for ``min 0.5 x'Qx + c'x`` on the floored simplex.

    An optional extra constraint ``a'x >= b`` is supported. ``x0`` must be
    feasible. Returns ``(x, iterations, history, done)``.
    """
    n = c.size
    x = np.array(x0, dtype=float)
    scale = 1.0 + np.abs(c).max(initial=0.0) + np.abs(Q).max(initial=0.0)
    mult_tol = 1e-11 * scale

    bound = x <= eps + 1e-14
    if bound.all():
        return x, 0, (float(0.5 * x @ Q @ x + c @ x),), True
    if bound.any():
        # snapping to the floor moves mass; hand it back to the free coordinates
        x[bound] = eps
        x[~bound] += (1.0 - x.sum()) / (~bound).sum()
    extra = False
    if a is not None and not np.isfinite(b):
        a = None
    if a is not None and a @ x - b <= 1e-13 * (1 + abs(b)):
        extra = True

    def f(z):
        return float(0.5 * z @ Q @ z + c @ z)

    history = [f(x)]
    done = False
    it = 0
    for it in range(1, max_iter + 1):
        free = np.flatnonzero(~bound)
        grad = Q @ x + c
        rows = [np.ones(free.size)]
        if extra:
            rows.append(a[free])
        A = np.vstack(rows)
        m = A.shape[0]
        K = np.zeros((free.size + m, free.size + m))
        K[: free.size, : free.size] = Q[np.ix_(free, free)]
        K[: free.size, free.size:] = -A.T
        K[free.size:, : free.size] = A
        # a constant gradient shift is absorbed by the simplex multiplier; removing
        # it first keeps rounding from being amplified by a near-singular Q
        gf = grad[free]
        shift = gf.mean()
        rhs = np.concatenate([-(gf - shift), np.zeros(m)])
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        p_free = sol[: free.size]
        mults = sol[free.size:]

        if np.abs(p_free).max(initial=0.0) <= 1e-12:
            nu = mults[0] + shift
            mu = mults[1] if extra else 0.0
            lam = grad - nu - (mu * a if a is not None else 0.0)
            lam_w = np.where(bound, lam, np.inf)
            worst = int(np.argmin(lam_w))
            drop_extra = extra and mu < -mult_tol and mu <= lam_w[worst]
            if drop_extra:
                extra = False
            elif lam_w[worst] < -mult_tol:
                bound[worst] = False
            else:
                done = True
                break
            continue

        p = np.zeros(n)
        p[free] = p_free
        alpha, block, block_extra = 1.0, -1, False
        neg = free[p_free < 0]
        if neg.size:
            ratios = (eps - x[neg]) / p[neg]
            k = int(np.argmin(ratios))
            if ratios[k] < alpha:
                alpha, block = max(float(ratios[k]), 0.0), int(neg[k])
        if a is not None and not extra:
            ap = a @ p
            if ap < 0:
                r = max((a @ x - b) / -ap, 0.0)
                if r < alpha:
                    alpha, block, block_extra = r, -1, True
        x = x + alpha * p
        if block_extra:
            extra = True
        elif block >= 0:
            bound[block] = True
            x[block] = eps
        history.append(f(x))
    return x, it, tuple(history), done


def _lp_argmax(g, eps):
    """Floored LP maximizer of ``g'x``; ties share the mass uniformly."""
    n = g.size
    top = g.max()
    ties = g >= top - 1e-12 * max(1.0, abs(top))
    return eps + (1.0 - n * eps) * ties / ties.sum()


def solve_best_response(meanM, varsigma, risk, gamma: float, eps: float = DEFAULT_EPS,
                        tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                        init=None) -> QPSolution:
    """Maximize ``sigma' M varsigma - gamma sigma' Sigma sigma`` over the floored simplex.

    Never raises on slow convergence: the last iterate is returned with
    ``converged=False``.
    """
    meanM = np.asarray(meanM, dtype=float)
    opp = varsigma.probs if isinstance(varsigma, MixedStrategy) else np.asarray(varsigma, float)
    n = meanM.shape[0]
    _check_floor(n, eps)
    if gamma < 0:
        raise ContractError("gamma must be non-negative")
    if opp.shape != (meanM.shape[1],):
        raise ContractError("opponent strategy does not match the reward matrix")
    g = meanM @ opp
    S = _as_matrix(risk) if gamma > 0 else np.zeros((n, n))
    if S.shape != (n, n):
        raise ContractError(f"risk matrix {S.shape} does not match {n} actions")

    # risk term below double resolution of the objective: the LP vertex is optimal
    negligible = gamma * np.abs(S).max(initial=0.0) <= np.finfo(float).eps ** 2 * max(1.0, np.abs(g).max())
    if gamma == 0 or negligible:
        x = _lp_argmax(g, eps)
        iters, history = 0, ()
    else:
        if init is None:
            x0 = np.full(n, 1.0 / n)
        else:
            x0 = np.asarray(init.probs if isinstance(init, MixedStrategy) else init, float)
            x0 = project_simplex_floor(x0, eps)
        x, iters, history, _ = _active_set(2.0 * gamma * S, -g, eps, x0, max_iter=max_iter)
        history = tuple(-h for h in history)

    # renormalize only after a clip; rescaling an already feasible point just adds rounding
    if np.any(x < eps):
        x = np.maximum(x, eps)
        x /= x.sum()
    grad = g - 2.0 * gamma * (S @ x)
    resid = projected_gradient_norm(x, grad, eps)
    obj = float(g @ x - gamma * x @ S @ x)
    strategy = MixedStrategy(x, eps)
    return QPSolution(strategy, obj, resid, iters, resid <= tol, history)


def max_attainable_return(meanM, varsigma, eps: float) -> float:
    opp = varsigma.probs if isinstance(varsigma, MixedStrategy) else np.asarray(varsigma, float)
    g = np.asarray(meanM, float) @ opp
    return float(g @ _lp_argmax(g, eps))


def solve_min_risk(risk, meanM, varsigma, mu_b: float, eps: float = DEFAULT_EPS,
                   tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> QPSolution:
    """Minimize ``sigma' Sigma sigma`` subject to expected return ``>= mu_b``.

    ``objective`` holds the minimized risk.
    """
    S = _as_matrix(risk)
    meanM = np.asarray(meanM, dtype=float)
    opp = varsigma.probs if isinstance(varsigma, MixedStrategy) else np.asarray(varsigma, float)
    n = S.shape[0]
    _check_floor(n, eps)
    g = meanM @ opp
    vertex = _lp_argmax(g, eps)
    er_max = float(g @ vertex)
    slack = 1e-12 * max(1.0, abs(er_max))
    if mu_b > er_max + slack:
        raise ContractError(
            f"mu_b={mu_b} is not attainable; the largest expected return is {er_max}"
        )

    uniform = np.full(n, 1.0 / n)
    er_uniform = float(g @ uniform)
    if not np.isfinite(mu_b) or er_uniform >= mu_b:
        x0 = uniform
    elif mu_b >= er_max - slack:
        x0 = vertex
    else:
        theta = (mu_b - er_uniform) / (er_max - er_uniform)
        x0 = (1 - theta) * uniform + theta * vertex
    a = g if np.isfinite(mu_b) else None
    x, iters, history, _ = _active_set(2.0 * S, np.zeros(n), eps, x0, a=a,
                                       b=mu_b, max_iter=max_iter)
    x = np.maximum(x, eps)
    x /= x.sum()
    risk_val = float(x @ S @ x)
    # KKT check on the Lagrangian form at the multiplier implied by the solution
    resid = _min_risk_residual(S, g, x, eps, mu_b)
    return QPSolution(MixedStrategy(x, eps), risk_val, resid, iters, resid <= tol, history)


def _min_risk_residual(S, g, x, eps, mu_b) -> float:
    grad = -2.0 * S @ x
    if not np.isfinite(mu_b) or g @ x - mu_b > 1e-9 * max(1.0, abs(mu_b)):
        return projected_gradient_norm(x, grad, eps)
    # binding return constraint: pick the multiplier that best zeroes the
    # free-coordinate stationarity residual
    free = x > eps + 1e-12
    if free.sum() <= 1:
        return 0.0
    gf, hf = g[free] - g[free].mean(), grad[free] - grad[free].mean()
    denom = gf @ gf
    mu = max(0.0, -(gf @ hf) / denom) if denom > 0 else 0.0
    return projected_gradient_norm(x, grad + mu * g, eps)
