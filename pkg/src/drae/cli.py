"""Command-line entry point: ``drae generate|solve|experiment|validate``.

Exit codes: 0 success, 2 usage or validation error, 3 solver non-convergence.
Config files are JSON; explicit flags override file values and the
effective configuration is written to the run metadata.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .environments import (SOBOL_NAME, AssetSpec, PPMSpec, SyntheticSpec, default_tau, gen_asset_game,
                           gen_ppm_game, gen_synthetic, spec_to_dict)
from .experiments import (GAMMA_MATCHING_NOTE, SolveOptions, default_gamma_grid, degree_sweep,
                          gamma_sweep, skew_distance_curve, state_count_sweep, write_rows)
from .game import ContractError, load_game, save_game
from .risk import RiskConfig, Scheme, save_risk_matrix
from .solver import Concept, risk_at, sfp_solve

log = logging.getLogger("drae")

EXIT_OK, EXIT_USAGE, EXIT_NONCONV = 0, 2, 3

SPECS = {"synthetic": SyntheticSpec, "asset": AssetSpec, "ppm": PPMSpec}
GENERATORS = {"synthetic": gen_synthetic, "asset": gen_asset_game, "ppm": gen_ppm_game}
EXPERIMENTS = ("frontier", "skew", "states", "degree")

# generator flags -> spec field
SPEC_FLAGS = {
    "actions": "n_actions", "states": "n_states", "portfolios": "n_portfolios",
    "assets": "n_assets", "products": "n_products", "segments": "n_segments",
}


class UsageError(Exception):
    pass


def _read_json(path) -> dict:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read config {path}: {e}") from e
    if not isinstance(data, dict):
        raise UsageError(f"config {path} must hold a JSON object")
    return data


def build_spec(kind: str, values: dict):
    cls = SPECS[kind]
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(values) - known)
    if unknown:
        raise UsageError(f"unknown {kind} spec field {unknown[0]!r}; valid fields: {sorted(known)}")
    try:
        return cls(**values)
    except (ContractError, TypeError, ValueError) as e:
        raise UsageError(f"invalid {kind} spec: {e}") from e


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _metadata(**extra) -> dict:
    return {
        "tool": "drae",
        "version": __version__,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        **extra,
    }


def _sidecar(path: Path) -> Path:
    return path.with_name(path.stem + ".meta.json")


# -- generate -------------------------------------------------------------------------

def cmd_generate(args) -> int:
    values = _read_json(args.config)
    for flag, name in SPEC_FLAGS.items():
        v = getattr(args, flag)
        if v is not None:
            values[name] = v
    values["seed"] = args.seed if args.seed is not None else values.get("seed", 0)
    spec = build_spec(args.env, values)
    game = GENERATORS[args.env](spec)
    out = Path(args.out)
    save_game(game, out)
    meta = _metadata(generator=args.env, spec=spec_to_dict(spec), seed=spec.seed,
                     default_tau=default_tau(game))
    if args.env == "asset":
        meta["low_discrepancy"] = SOBOL_NAME
    _write_json(_sidecar(out), meta)
    print(f"wrote {out} ({game.n_actions} actions, {game.n_states} states)")
    return EXIT_OK


# -- solve ------------------------------------------------------------------------------

def _risk_config(args, base: dict, game=None) -> RiskConfig:
    vals = {"tau": None, "degree": 2.0, "gamma": 1.0, "scheme": "transpose"}
    vals.update({k: base[k] for k in vals if k in base})
    for k in ("tau", "degree", "gamma", "scheme"):
        v = getattr(args, k, None)
        if v is not None:
            vals[k] = v
    if vals["tau"] is None:
        vals["tau"] = default_tau(game) if game is not None else 0.0
    try:
        return RiskConfig(tau=float(vals["tau"]), degree=float(vals["degree"]),
                          gamma=float(vals["gamma"]), scheme=Scheme(vals["scheme"]))
    except (ContractError, ValueError) as e:
        raise UsageError(f"invalid risk config: {e}") from e


def _load_game(path):
    try:
        return load_game(path)
    except (OSError, ContractError) as e:
        raise UsageError(f"invalid game file {path}: {e}") from e


def cmd_solve(args) -> int:
    game = _load_game(args.game)
    cfg = _risk_config(args, {}, game)
    concept = Concept(args.concept)
    prof = sfp_solve(game, cfg, concept, eps=args.eps, max_iter=args.max_iter, drift_tol=args.tol)
    out = Path(args.out)
    _write_json(out, prof.to_dict())
    if args.risk_out:
        save_risk_matrix(risk_at(prof, game), args.risk_out)
    print(f"{concept.value} gamma={cfg.gamma:g} tau={cfg.tau:.6g}: er={prof.er:.6g} "
          f"variance={prof.variance:.6g} lpm={prof.lpm:.6g} iterations={prof.iterations} "
          f"converged={str(prof.converged).lower()}")
    return EXIT_OK if prof.converged else EXIT_NONCONV


# -- experiment -------------------------------------------------------------------------

def _opts(args, conf) -> SolveOptions:
    base = SolveOptions()
    return SolveOptions(
        eps=args.eps if args.eps is not None else conf.get("eps", base.eps),
        max_iter=args.max_iter if args.max_iter is not None else conf.get("max_iter", base.max_iter),
        drift_tol=args.tol if args.tol is not None else conf.get("drift_tol", base.drift_tol),
    )


def _seeds(args, conf) -> list[int]:
    base = args.seed if args.seed is not None else conf.get("seed", 0)
    return [int(base) + k for k in range(int(conf.get("n_seeds", 1)))]


def _gammas(args, conf) -> list[float]:
    if args.gamma is not None:
        return [args.gamma]
    if "gammas" in conf:
        return [float(g) for g in conf["gammas"]]
    grid = conf.get("gamma_grid", {})
    return default_gamma_grid(grid.get("lo", 1e-2), grid.get("hi", 1e4), grid.get("n", 16))


def _env_game(conf, seed):
    env = conf.get("env", "synthetic")
    if env not in SPECS:
        raise UsageError(f"unknown env {env!r}; valid: {sorted(SPECS)}")
    spec = build_spec(env, {**conf.get("spec", {}), "seed": seed})
    return spec, GENERATORS[env](spec)


def run_frontier(args, conf, jobs):
    concepts = [Concept(c) for c in conf.get("concepts", ["rae", "drae"])]
    gammas = _gammas(args, conf)
    opts = _opts(args, conf)
    rows, specs = [], []
    for seed in _seeds(args, conf):
        spec, game = _env_game(conf, seed)
        cfg = _risk_config(args, conf, game)
        specs.append(spec_to_dict(spec))
        rows += gamma_sweep(game, concepts, gammas, cfg, seed, opts, jobs)
    return {"frontier": rows}, {"specs": specs, "gammas": gammas, "concepts": [c.value for c in concepts]}


def run_skew(args, conf, jobs):
    kappas = [float(k) for k in conf.get("kappas", [0, 2, 4, 6, 8])]
    seeds = _seeds(args, {"n_seeds": 50, **conf})
    cfg = _risk_config(args, {"gamma": 10.0, **conf})
    summary, rows = skew_distance_curve(kappas, int(conf.get("n_actions", 100)), seeds, cfg,
                                        _opts(args, conf), jobs, return_rows=True)
    return {"skew": rows, "skew_summary": summary}, {"kappas": kappas, "seeds": seeds}


def run_states(args, conf, jobs):
    counts = [int(n) for n in conf.get("state_counts", [1, 3, 5, 7])]
    seeds = _seeds(args, {"n_seeds": 3, **conf})
    base = build_spec("asset", conf.get("spec", {}))
    cfg = _risk_config(args, conf)
    tau = args.tau if args.tau is not None else conf.get("tau")
    summary, rows = state_count_sweep(base, counts, cfg, seeds, _opts(args, conf), jobs, tau=tau,
                                      return_rows=True)
    return {"states": rows, "states_summary": summary}, {"state_counts": counts, "seeds": seeds,
                                                          "spec": spec_to_dict(base)}


def run_degree(args, conf, jobs):
    degrees = [float(d) for d in conf.get("degrees", [1.5, 2, 2.5, 3, 3.5, 4])]
    seed = _seeds(args, conf)[0]
    spec, game = _env_game({"env": "ppm", **conf}, seed)
    cfg = _risk_config(args, conf, game)
    summary, rows = degree_sweep(game, degrees, cfg, _opts(args, conf), jobs=jobs, return_rows=True)
    return {"degree": rows, "degree_summary": summary}, {"degrees": degrees, "spec": spec_to_dict(spec)}


RUNNERS = {"frontier": run_frontier, "skew": run_skew, "states": run_states, "degree": run_degree}


def cmd_experiment(args) -> int:
    conf = _read_json(args.config)
    outdir = Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    tables, info = RUNNERS[args.name](args, conf, max(1, args.jobs))
    for stem, rows in tables.items():
        write_rows(rows, outdir / f"{stem}.csv")
    effective = {**conf, **{k: getattr(args, k) for k in ("seed", "gamma", "tau", "degree", "scheme",
                                                           "eps", "max_iter", "tol")
                            if getattr(args, k) is not None}}
    _write_json(outdir / f"{args.name}.meta.json",
                _metadata(experiment=args.name, config=effective, gamma_matching=GAMMA_MATCHING_NOTE,
                          low_discrepancy=SOBOL_NAME, **info))
    nonconv = sum(not r.converged for r in tables[args.name])
    print(f"wrote {', '.join(f'{s}.csv' for s in tables)} to {outdir} "
          f"({len(tables[args.name])} solves, {nonconv} hit max-iter)")
    return EXIT_OK


# -- validate ---------------------------------------------------------------------------

def cmd_validate(args) -> int:
    game = _load_game(args.game)
    print(f"ok: {game.n_actions} actions, {game.n_states} states, "
          f"rewards in [{game.rewards.min():.6g}, {game.rewards.max():.6g}], "
          f"default tau {default_tau(game):.6g}")
    return EXIT_OK


# -- parser -----------------------------------------------------------------------------

def _solver_flags(p, defaults: bool):
    d = SolveOptions()
    p.add_argument("--eps", type=float, default=d.eps if defaults else None, help="probability floor")
    p.add_argument("--max-iter", type=int, default=5000 if defaults else None)
    p.add_argument("--tol", type=float, default=d.drift_tol if defaults else None,
                   help="l1 drift tolerance of the joint time average")


def _risk_flags(p):
    p.add_argument("--gamma", type=float)
    p.add_argument("--tau", type=float, help="LPM threshold (default: mean payoff of the game)")
    p.add_argument("--degree", type=float)
    p.add_argument("--scheme", choices=[s.value for s in Scheme])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="drae", description="Downside risk-aware equilibria.")
    parser.add_argument("--version", action="version", version=f"drae {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a game JSON plus metadata sidecar")
    g.add_argument("env", choices=sorted(SPECS))
    g.add_argument("--config", help="JSON spec file")
    g.add_argument("--seed", type=int)
    g.add_argument("--out", required=True)
    for flag in SPEC_FLAGS:
        g.add_argument(f"--{flag}", type=int)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="run SFP on a game file")
    s.add_argument("game")
    s.add_argument("--concept", choices=[c.value for c in Concept], default="drae")
    _risk_flags(s)
    _solver_flags(s, defaults=True)
    s.add_argument("--out", required=True)
    s.add_argument("--risk-out", help="also dump the risk matrix at the fixed point as CSV")
    s.set_defaults(func=cmd_solve)

    e = sub.add_parser("experiment", help="run a named sweep and write CSV")
    e.add_argument("name", choices=EXPERIMENTS)
    e.add_argument("--config", help="JSON experiment config")
    e.add_argument("--seed", type=int)
    _risk_flags(e)
    _solver_flags(e, defaults=False)
    e.add_argument("--jobs", type=int, default=1)
    e.add_argument("--out", required=True, help="output directory")
    e.set_defaults(func=cmd_experiment)

    v = sub.add_parser("validate", help="check a game file")
    v.add_argument("game")
    v.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("DRAE_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
