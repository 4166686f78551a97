"""Risk-aversion sweeps, frontier comparison, state-count and degree ablations.

Grid points are independent solves; ``jobs > 1`` fans them out to worker
processes and results are merged by sort key, so output never depends on
``jobs``.
"""

from __future__ import annotations

import csv
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from .environments import AssetSpec, default_tau, gen_asset_game, skew_game
from .game import ContractError, StateGame
from .risk import RiskConfig
from .solver import Concept, EquilibriumProfile, sfp_solve, score_profile, strategy_distance

log = logging.getLogger(__name__)

CSV_FIELDS = ("concept", "gamma", "tau", "degree", "scheme", "er", "variance", "lpm",
              "iterations", "converged", "seed")

GAMMA_MATCHING_NOTE = (
    "Concepts are compared at the same numeric gamma; no cross-concept calibration is applied."
)


@dataclass(frozen=True)
class SolveOptions:
    eps: float = 1e-4
    max_iter: int = 1000
    drift_tol: float = 1e-6


@dataclass(frozen=True)
class FrontierRow:
    concept: str
    gamma: float
    tau: float
    degree: float
    scheme: str
    er: float
    variance: float
    lpm: float
    iterations: int
    converged: bool
    seed: int

    @classmethod
    def from_profile(cls, p: EquilibriumProfile, seed: int) -> "FrontierRow":
        c = p.config
        return cls(p.concept.value, c.gamma, c.tau, c.degree, c.scheme.value, p.er,
                   p.variance, p.lpm, p.iterations, p.converged, seed)

    def key(self):
        return (self.seed, self.concept, self.gamma)


def default_gamma_grid(lo: float = 1e-2, hi: float = 1e4, n: int = 16) -> list[float]:
    return [float(g) for g in np.logspace(np.log10(lo), np.log10(hi), n)]


def _pmap(fn, items, jobs: int):
    items = list(items)
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


def _solve(args) -> EquilibriumProfile:
    game, cfg, concept, opts = args
    return sfp_solve(game, cfg, concept, eps=opts.eps, max_iter=opts.max_iter,
                     drift_tol=opts.drift_tol)


def gamma_sweep(game: StateGame, concepts, gammas, cfg: RiskConfig, seed: int = 0,
                opts: SolveOptions = SolveOptions(), jobs: int = 1) -> list[FrontierRow]:
    """One SFP solve per ``(concept, gamma)``; every row is scored on variance and LPM."""
    tasks = [(game, cfg.with_(gamma=float(g)), Concept(c), opts) for c in concepts for g in gammas]
    profiles = _pmap(_solve, tasks, jobs)
    rows = [FrontierRow.from_profile(p, seed) for p in profiles]
    nonconv = sum(not r.converged for r in rows)
    if nonconv:
        log.info("%d of %d sweep points hit max_iter", nonconv, len(rows))
    return sorted(rows, key=lambda r: (r.concept, r.gamma))


def _frontier(rows) -> tuple[np.ndarray, np.ndarray]:
    er = np.array([r.er for r in rows], dtype=float)
    lp = np.array([r.lpm for r in rows], dtype=float)
    # merge duplicate returns so the frontier is a function of er
    uniq, inv = np.unique(er, return_inverse=True)
    lp_mean = np.bincount(inv, weights=lp) / np.bincount(inv)
    return uniq, lp_mean


def downside_auc_ratio(drae_rows, rae_rows) -> float:
    """Area under DRAE's LPM-vs-return curve over RAE's, on their common return range.

    Both curves are linearly interpolated; the trapezoid rule on the union of
    breakpoints is then exact.
    """
    xd, yd = _frontier(drae_rows)
    xr, yr = _frontier(rae_rows)
    if xd.size < 2 or xr.size < 2:
        raise ContractError("each frontier needs at least two distinct expected returns")
    lo, hi = max(xd[0], xr[0]), min(xd[-1], xr[-1])
    if not lo < hi:
        raise ContractError(f"frontiers do not overlap: common return interval [{lo}, {hi}] is empty")
    grid = np.unique(np.concatenate([[lo, hi], xd[(xd > lo) & (xd < hi)], xr[(xr > lo) & (xr < hi)]]))
    area_d = np.trapezoid(np.interp(grid, xd, yd), grid)
    area_r = np.trapezoid(np.interp(grid, xr, yr), grid)
    if area_r == 0:
        raise ContractError("RAE frontier has zero area on the common interval")
    return float(area_d / area_r)


def split_by_concept(rows, seed=None) -> dict[str, list[FrontierRow]]:
    out: dict[str, list[FrontierRow]] = {}
    for r in rows:
        if seed is None or r.seed == seed:
            out.setdefault(r.concept, []).append(r)
    return out


@dataclass(frozen=True)
class SkewRow:
    kappa: float
    mean_distance: float
    std_distance: float
    n_seeds: int


def _skew_point(args):
    n_actions, kappa, seed, cfg, opts = args
    game = skew_game(n_actions, kappa, seed)
    c = cfg.with_(tau=default_tau(game))
    rae = _solve((game, c, Concept.RAE, opts))
    drae = _solve((game, c, Concept.DRAE, opts))
    return kappa, seed, strategy_distance(drae, rae), (rae, drae)


def skew_distance_curve(kappas, n_actions: int = 100, seeds=range(50), cfg: RiskConfig = RiskConfig(),
                        opts: SolveOptions = SolveOptions(), jobs: int = 1, return_rows: bool = False):
    """Mean and std over seeds of the DRAE-RAE strategy distance per skewness ``kappa``.

    Each game has i.i.d. zero-mean unit-variance skew-normal entries and uses
    its own mean payoff as threshold.
    """
    tasks = [(n_actions, float(k), int(s), cfg, opts) for k in kappas for s in seeds]
    results = _pmap(_skew_point, tasks, jobs)
    out = []
    for k in kappas:
        d = np.array([r[2] for r in results if r[0] == float(k)])
        out.append(SkewRow(float(k), float(d.mean()), float(d.std()), d.size))
    if return_rows:
        rows = [FrontierRow.from_profile(p, s) for k, s, _, pair in results for p in pair]
        return out, rows
    return out


@dataclass(frozen=True)
class StateRow:
    n_states: int
    concept: str
    seed: int
    lpm: float
    er: float
    tau: float


def _state_point(args):
    spec, concept, cfg, opts, tau = args
    game = gen_asset_game(spec)
    c = cfg.with_(tau=default_tau(game) if tau is None else tau)
    p = _solve((game, c, Concept(concept), opts))
    return StateRow(spec.n_states, p.concept.value, spec.seed, p.lpm, p.er, c.tau), p


def state_count_sweep(base_spec: AssetSpec, state_counts, cfg: RiskConfig, seeds,
                      opts: SolveOptions = SolveOptions(), jobs: int = 1, tau: float | None = None,
                      concepts=(Concept.DRAE, Concept.RAE), return_rows: bool = False):
    """Equilibrium LPM of each concept on the asset game as states are added.

    ``tau=None`` uses each regenerated game's random-portfolio expected return.
    """
    tasks = [(replace(base_spec, n_states=int(n), seed=int(s)), Concept(c).value, cfg, opts, tau)
             for n in state_counts for s in seeds for c in concepts]
    results = _pmap(_state_point, tasks, jobs)
    rows = sorted((r for r, _ in results), key=lambda r: (r.n_states, r.concept, r.seed))
    if return_rows:
        frows = [FrontierRow.from_profile(p, r.seed) for r, p in results]
        return rows, frows
    return rows


@dataclass(frozen=True)
class DegreeRow:
    degree: float
    lpm: float
    lpm_reference: float
    er: float
    converged: bool


def _degree_point(args):
    game, cfg, opts, ref = args
    p = _solve((game, cfg, Concept.DRAE, opts))
    _, _, lpm_ref = score_profile(game, p.strategy_p1, p.strategy_p2, cfg.with_(degree=ref))
    return DegreeRow(cfg.degree, p.lpm, lpm_ref, p.er, p.converged), p


def degree_sweep(game: StateGame, degrees, cfg: RiskConfig, opts: SolveOptions = SolveOptions(),
                 reference_degree: float = 2.0, jobs: int = 1, return_rows: bool = False):
    """One DRAE solve per degree, scored at its own degree and at ``reference_degree``."""
    tasks = [(game, cfg.with_(degree=float(d)), opts, reference_degree) for d in degrees]
    results = _pmap(_degree_point, tasks, jobs)
    rows = sorted((r for r, _ in results), key=lambda r: r.degree)
    if return_rows:
        return rows, [FrontierRow.from_profile(p, 0) for _, p in results]
    return rows


# -- CSV ----------------------------------------------------------------------------

def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_rows(rows, path, header=None) -> None:
    """Write dataclass rows as CSV with full float precision."""
    rows = list(rows)
    if header is None:
        header = CSV_FIELDS if not rows or isinstance(rows[0], FrontierRow) else [f.name for f in fields(rows[0])]
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            d = asdict(r)
            w.writerow([_fmt(d[h]) for h in header])


def read_frontier_csv(path) -> list[FrontierRow]:
    with Path(path).open() as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_FIELDS:
            raise ContractError(f"unexpected CSV header {reader.fieldnames}")
        out = []
        for d in reader:
            out.append(FrontierRow(
                d["concept"], float(d["gamma"]), float(d["tau"]), float(d["degree"]), d["scheme"],
                float(d["er"]), float(d["variance"]), float(d["lpm"]), int(d["iterations"]),
                d["converged"] == "true", int(d["seed"]),
            ))
        return out
