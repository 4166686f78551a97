"""Lower-partial-moment risk matrices, symmetrization and PD repair.

Every quantity here is computed exactly from the game tensor against an
opponent mixed strategy ``varsigma``. Shortfalls below the threshold are
``D[i, k, s] = max(0, tau - r(a_i, a_k, s))``.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path

import numpy as np

from .game import ContractError, MixedStrategy, StateGame, mean_reward_matrix

log = logging.getLogger(__name__)

DEFAULT_PD_JITTER = 1e-8


class Scheme(str, Enum):
    RHO = "rho"
    DUAL = "dual"
    TRANSPOSE = "transpose"


class Stage(str, Enum):
    RAW = "raw"
    SYMMETRIZED = "symmetrized"
    PD_PROJECTED = "pd_projected"


@dataclass(frozen=True)
class RiskConfig:
    tau: float = 0.0
    degree: float = 2.0
    gamma: float = 1.0
    scheme: Scheme = Scheme.TRANSPOSE
    pd_jitter: float = DEFAULT_PD_JITTER

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if not self.degree > 1:
            raise ContractError(f"degree must be > 1, got {self.degree}")
        if not self.gamma >= 0:
            raise ContractError(f"gamma must be >= 0, got {self.gamma}")
        if not self.pd_jitter >= 0:
            raise ContractError(f"pd_jitter must be >= 0, got {self.pd_jitter}")
        if not np.isfinite(self.tau):
            raise ContractError("tau must be finite")

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "degree": self.degree,
            "gamma": self.gamma,
            "scheme": self.scheme.value,
            "pd_jitter": self.pd_jitter,
        }

    def with_(self, **kw) -> "RiskConfig":
        return replace(self, **kw)


@dataclass(frozen=True, eq=False)
class RiskMatrix:
    values: np.ndarray
    stage: Stage
    config: RiskConfig
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ContractError(f"risk matrix must be square, got {v.shape}")
        stage = Stage(self.stage)
        if stage is not Stage.RAW and not np.array_equal(v, v.T):
            raise ContractError(f"{stage.value} risk matrix is not symmetric")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "stage", stage)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    def min_eigenvalue(self) -> float:
        sym = 0.5 * (self.values + self.values.T)
        return float(np.linalg.eigvalsh(sym)[0])


def _sym(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + m.T)


def _opp_probs(varsigma, n: int) -> np.ndarray:
    p = varsigma.probs if isinstance(varsigma, MixedStrategy) else np.asarray(varsigma, float)
    if p.shape != (n,):
        raise ContractError(f"opponent strategy length {p.shape} != {n} actions")
    return p


class RiskKernel:
    """Precomputed shortfall tensors for one ``(game, tau, degree)``.

    Rebuilding risk matrices against a changing opponent strategy then costs
    a single matrix product per call.
    """

    def __init__(self, game: StateGame, tau: float, degree: float):
        self.game = game
        self.tau = float(tau)
        self.degree = float(degree)
        n, _, s = game.rewards.shape
        self.n = n
        gap = self.tau - game.rewards  # tau - r(i, k, s), unguarded
        short = np.maximum(gap, 0.0)
        self._gap = gap.reshape(n, n * s)
        self._short = short.reshape(n, n * s)
        self._short_d = (short ** self.degree).reshape(n, n * s)
        self._short_dm1 = (short ** (self.degree - 1.0)).reshape(n, n * s) if self.degree > 1 else None
        self._r = game.rewards.reshape(n, n * s)
        self._rho = None
        self._rho_undefined = 0

    def weights(self, varsigma) -> np.ndarray:
        p = _opp_probs(varsigma, self.n)
        return np.outer(p, self.game.state_probs).ravel()

    def lpm_vector(self, varsigma) -> np.ndarray:
        return self._short_d @ self.weights(varsigma) / self.n

    def clpm_matrix(self, varsigma) -> np.ndarray:
        if self._short_dm1 is None:
            raise ContractError("co-LPM needs degree > 1")
        w = self.weights(varsigma)
        return (self._short_dm1 * w) @ self._gap.T / self.n

    def raw(self, varsigma) -> np.ndarray:
        m = self.clpm_matrix(varsigma)
        np.fill_diagonal(m, self.lpm_vector(varsigma))
        return m

    def dual(self, varsigma) -> np.ndarray:
        # [x^(d-1) y^(d-1)]^(1/(d-1)) == x*y for non-negative shortfalls
        w = self.weights(varsigma)
        return _sym((self._short * w) @ self._short.T / self.n)

    def rho_matrix(self) -> np.ndarray:
        if self._rho is None:
            u = mean_reward_matrix(self.game)
            centered = u - u.mean(axis=1, keepdims=True)
            norms = np.sqrt((centered ** 2).sum(axis=1))
            undefined = norms <= 1e-14 * max(1.0, float(np.abs(u).max(initial=0.0)))
            safe = np.where(undefined, 1.0, norms)
            rho = (centered @ centered.T) / np.outer(safe, safe)
            rho[undefined, :] = 0.0
            rho[:, undefined] = 0.0
            np.fill_diagonal(rho, 1.0)
            self._rho = _sym(np.clip(rho, -1.0, 1.0))
            k = int(undefined.sum())
            # unordered off-diagonal pairs touching a constant reward vector
            self._rho_undefined = k * (self.n - k) + k * (k - 1) // 2
            if k:
                log.debug("rho undefined for %d constant reward vectors", k)
        return self._rho

    def rho(self, varsigma) -> np.ndarray:
        lpm = self.lpm_vector(varsigma)
        m = np.outer(lpm, lpm) ** (1.0 / self.degree) * self.rho_matrix()
        m = _sym(m)
        np.fill_diagonal(m, lpm)
        return m

    def covariance(self, varsigma) -> np.ndarray:
        w = self.weights(varsigma)
        mu = self._r @ w
        c = self._r - mu[:, None]
        c[np.ptp(self._r, axis=1) == 0] = 0.0  # constant rows deviate by exactly nothing
        return _sym((c * w) @ c.T)


def _check_index(game: StateGame, *idx) -> None:
    for i in idx:
        if not 0 <= i < game.n_actions:
            raise ContractError(f"action index {i} out of range for {game.n_actions} actions")


def lpm(game: StateGame, i: int, varsigma, tau: float, d: float) -> float:
    """Lower partial moment of degree ``d`` of action ``i`` against ``varsigma``."""
    _check_index(game, i)
    if not d > 0:
        raise ContractError("degree must be positive")
    p = _opp_probs(varsigma, game.n_actions)
    short = np.maximum(tau - game.rewards[i], 0.0) ** d  # (k, s)
    return float(p @ short @ game.state_probs / game.n_actions)


def clpm(game: StateGame, i: int, j: int, varsigma, tau: float, d: float) -> float:
    """Co-LPM of action ``i`` with action ``j``; may be negative."""
    _check_index(game, i, j)
    if not d > 1:
        raise ContractError("co-LPM needs degree > 1")
    p = _opp_probs(varsigma, game.n_actions)
    term = np.maximum(tau - game.rewards[i], 0.0) ** (d - 1) * (tau - game.rewards[j])
    return float(p @ term @ game.state_probs / game.n_actions)


def raw_risk_matrix(game: StateGame, varsigma, cfg: RiskConfig, kernel: RiskKernel | None = None) -> RiskMatrix:
    """LPM on the diagonal, co-LPM off it. Generally asymmetric."""
    kernel = kernel or RiskKernel(game, cfg.tau, cfg.degree)
    return RiskMatrix(kernel.raw(varsigma), Stage.RAW, cfg)


def symmetrize_rho(raw: RiskMatrix, game: StateGame, varsigma, cfg: RiskConfig,
                   kernel: RiskKernel | None = None) -> RiskMatrix:
    """``(LPM_i LPM_j)^(1/d) * rho_ij`` off the diagonal, LPM on it.

    ``rho_ij`` is the Pearson correlation of the state-expected reward rows
    of actions i and j; it is taken as 0 when either row is constant.
    """
    if raw.stage is not Stage.RAW:
        raise ContractError("symmetrize_rho expects a raw risk matrix")
    kernel = kernel or RiskKernel(game, cfg.tau, cfg.degree)
    lpm_diag = np.diag(raw.values)
    rho = kernel.rho_matrix()
    m = _sym(np.outer(lpm_diag, lpm_diag) ** (1.0 / cfg.degree) * rho)
    np.fill_diagonal(m, lpm_diag)
    return RiskMatrix(m, Stage.SYMMETRIZED, cfg,
                      {"rho_undefined_pairs": kernel._rho_undefined})


def symmetrize_dual(game: StateGame, varsigma, cfg: RiskConfig,
                    kernel: RiskKernel | None = None) -> RiskMatrix:
    """Co-LPM counting only opponent actions where both i and j fall short."""
    kernel = kernel or RiskKernel(game, cfg.tau, cfg.degree)
    return RiskMatrix(kernel.dual(varsigma), Stage.SYMMETRIZED, cfg)


def transpose_part(raw: RiskMatrix) -> RiskMatrix:
    """Symmetric part of a raw matrix; it has the same quadratic form."""
    if raw.stage is not Stage.RAW:
        raise ContractError("the transpose scheme expects a raw risk matrix")
    return RiskMatrix(_sym(raw.values), Stage.SYMMETRIZED, raw.config)


def symmetrize_transpose(raw: RiskMatrix, pd_jitter: float | None = None) -> RiskMatrix:
    """Keep the symmetric part, then repair it to PD."""
    sym = transpose_part(raw)
    delta = raw.config.pd_jitter if pd_jitter is None else pd_jitter
    return RiskMatrix(nearest_pd(sym.values, delta), Stage.PD_PROJECTED, raw.config)


def nearest_pd(m, delta: float = DEFAULT_PD_JITTER) -> np.ndarray:
    """Frobenius-nearest symmetric matrix with every eigenvalue >= ``delta``.

    Eigenvalues below ``delta`` are clipped up to it. Matrices that already
    qualify are returned unchanged.
    """
    m = np.asarray(m, dtype=float)
    scale = max(1.0, float(np.abs(m).max(initial=0.0)))
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ContractError("nearest_pd expects a square matrix")
    if np.abs(m - m.T).max(initial=0.0) > 1e-10 * scale:
        raise ContractError("nearest_pd expects a symmetric matrix")
    m = _sym(m)
    n = m.shape[0]
    try:
        np.linalg.cholesky(m - delta * np.eye(n))
        return m
    except np.linalg.LinAlgError:
        pass
    w, v = np.linalg.eigh(m)
    if w[0] >= delta:
        return m
    out = (v * np.maximum(w, delta)) @ v.T
    return _sym(out)


def project_pd(risk: RiskMatrix, delta: float | None = None) -> RiskMatrix:
    if risk.stage is Stage.RAW:
        raise ContractError("symmetrize a raw matrix before projecting it")
    delta = risk.config.pd_jitter if delta is None else delta
    return RiskMatrix(nearest_pd(risk.values, delta), Stage.PD_PROJECTED,
                      risk.config, dict(risk.diagnostics))


def covariance_matrix(game: StateGame, varsigma, cfg: RiskConfig | None = None,
                      kernel: RiskKernel | None = None) -> RiskMatrix:
    """Reward covariance between actions induced by the opponent and the state draw.

    Returned before any jitter; callers project it for optimization.
    """
    cfg = cfg or RiskConfig()
    if kernel is None:
        kernel = RiskKernel(game, cfg.tau, cfg.degree)
    return RiskMatrix(kernel.covariance(varsigma), Stage.SYMMETRIZED, cfg)


def drae_risk_matrix(game: StateGame, varsigma, cfg: RiskConfig,
                     kernel: RiskKernel | None = None) -> RiskMatrix:
    """Full DRAE pipeline: raw LPM matrix, symmetrize per ``cfg.scheme``, PD-project."""
    kernel = kernel or RiskKernel(game, cfg.tau, cfg.degree)
    if cfg.scheme is Scheme.TRANSPOSE:
        return symmetrize_transpose(RiskMatrix(kernel.raw(varsigma), Stage.RAW, cfg))
    if cfg.scheme is Scheme.DUAL:
        return project_pd(symmetrize_dual(game, varsigma, cfg, kernel))
    m = kernel.rho(varsigma)
    sym = RiskMatrix(m, Stage.SYMMETRIZED, cfg, {"rho_undefined_pairs": kernel._rho_undefined})
    return project_pd(sym)


def portfolio_risk(sigma, risk) -> float:
    """Quadratic form ``sigma^T Sigma sigma``."""
    p = sigma.probs if isinstance(sigma, MixedStrategy) else np.asarray(sigma, float)
    m = risk.values if isinstance(risk, RiskMatrix) else np.asarray(risk, float)
    if p.shape != (m.shape[0],):
        raise ContractError(f"strategy length {p.shape} does not match risk matrix {m.shape}")
    return float(p @ m @ p)


def save_risk_matrix(risk: RiskMatrix, path) -> Path:
    """Write ``path`` as CSV and a JSON sidecar next to it; returns the sidecar path."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(range(risk.n))
        for row in risk.values:
            w.writerow([repr(float(x)) for x in row])
    meta = {
        "stage": risk.stage.value,
        "scheme": risk.config.scheme.value,
        "tau": risk.config.tau,
        "degree": risk.config.degree,
        "min_eigenvalue": risk.min_eigenvalue(),
    }
    sidecar = path.with_suffix(".json")
    sidecar.write_text(json.dumps(meta, indent=2))
    return sidecar


def load_risk_matrix(path) -> RiskMatrix:
    path = Path(path)
    with path.open() as fh:
        rows = list(csv.reader(fh))[1:]
    meta = json.loads(path.with_suffix(".json").read_text())
    cfg = RiskConfig(tau=meta["tau"], degree=meta["degree"], scheme=meta["scheme"])
    return RiskMatrix(np.array(rows, dtype=float), Stage(meta["stage"]), cfg)
