"""Command-line entry point driven by a JSON configuration file.

Usage::

    python -m cbmlab [--seed N] [-v] <command> [config.json] [--out DIR]

Commands: scale, simulate, mc-passage, mc-explosion, mc-occupation and
``validate {generator, example, cross, coupling}``. Numerics live in the
config file; see README.md for the schema. Exit codes: 0 success, 2 violated
precondition, 3 numerical failure (including a failed validation).
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import catalog
from .cbm_sim import SimConfig, couple_monotone, simulate_batch, superpose
from .errors import CbmError, PreconditionError
from .estimators import config_hash, default_workers, mc_explosion, mc_first_passage, mc_occupation
from .generator_check import ode_residual_phi, ode_residual_psi
from .levy_mech import MechanismPair
from .scale_fns import ScaleEvalConfig, first_passage_lt, phi_many

log = logging.getLogger("cbmlab")

EXIT_OK, EXIT_PRECONDITION, EXIT_NUMERICAL = 0, 2, 3
VALIDATIONS = ("generator", "example", "cross", "coupling")


class ValidationFailed(CbmError):
    """A validation suite ran but one of its checks failed."""


# -- artifacts ----------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(path: Path, header, rows, comment: str = "") -> Path:
    """CSV with a stable column order and floats at 17 significant digits."""
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def write_json(path: Path, record: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(record, fh, sort_keys=True, indent=2, default=_plain)
        fh.write("\n")
    return path


def _plain(obj):
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def emit_plotdata(kind: str, results, out_dir: Path, stem: str, chash: str):
    """Write ``results`` of a given kind; returns the written paths.

    Kinds: ``scale`` (rows x, phi, err_bound), ``mc`` (single JSON record)
    and ``dt_study`` (rows dt, estimate, se, difference, error).
    """
    tag = f"config_hash={chash}"
    if kind == "scale":
        return [write_csv(out_dir / f"{stem}.csv", ["x", "phi", "err_bound"], results, tag)]
    if kind == "mc":
        return [write_json(out_dir / f"{stem}.json", {**results, "config_hash": chash})]
    if kind == "dt_study":
        rows = [(r.dt, r.estimate, r.std_error, r.difference, r.error) for r in results]
        return [write_csv(out_dir / f"{stem}.csv", ["dt", "estimate", "se", "difference", "error"], rows, tag)]
    raise ValueError(f"unknown plot-data kind {kind!r}")


# -- configuration --------------------------------------------------------------


def _pair(cfg: dict, key: str = "pair") -> MechanismPair:
    spec = cfg.get(key)
    if spec is None:
        raise PreconditionError(f"config needs a '{key}' entry")
    if isinstance(spec, str):
        if spec not in catalog.PAIRS:
            raise PreconditionError(f"unknown named pair {spec!r}; known: {sorted(catalog.PAIRS)}")
        return catalog.PAIRS[spec]()
    return MechanismPair.from_dict(spec)


def _sim(cfg: dict) -> SimConfig:
    return SimConfig.from_dict(cfg.get("sim", {}))


def _quad(cfg: dict) -> ScaleEvalConfig:
    return ScaleEvalConfig(**cfg.get("quadrature", {}))


def _params(cfg: dict) -> dict:
    return dict(cfg.get("params", {}))


def _need(p: dict, *names):
    missing = [n for n in names if n not in p]
    if missing:
        raise PreconditionError(f"missing parameters: {', '.join(missing)}")
    return [p[n] for n in names]


# -- commands -----------------------------------------------------------------------


def cmd_scale(cfg, out, chash):
    pair = _pair(cfg)
    p = _params(cfg)
    alpha, alphabar = _need(p, "alpha", "alphabar")
    xs = np.asarray(p.get("x_grid", [0.0, 0.5, 1.0, 2.0, 5.0]), float)
    vals, errs, _ = phi_many(pair, alpha, alphabar, xs, _quad(cfg))
    emit_plotdata("scale", list(zip(xs, vals, errs)), out, "scale", chash)
    return {"n_points": int(xs.size)}


def cmd_simulate(cfg, out, chash):
    pair = _pair(cfg)
    p = _params(cfg)
    (x0,) = _need(p, "x")
    n = int(p.get("n_paths", 1))
    sim = _sim(cfg)
    res = simulate_batch(pair, float(x0), sim, n, int(cfg["seed"]), stop_level=float(p.get("a", 0.0)),
                         scheme=p.get("scheme", "sde"), record=True)
    tag = f"config_hash={chash}"
    counts = {"absorbed": 0, "exploded": 0, "censored": 0}
    for i, path in enumerate(res.paths):
        rows = zip(path.times, path.values, path.theta)
        write_csv(out / f"path_{i:05d}.csv", ["t", "Y", "theta"], rows, tag)
        kind = type(path.status).__name__
        counts[{"Absorbed": "absorbed", "Passed": "absorbed", "ExplodedAbove": "exploded"}.get(kind, "censored")] += 1
    summary = {"n_paths": n, **counts, "clamp_fraction": float(np.mean(res.clamped)), "config_hash": chash}
    write_json(out / "status.json", summary)
    return summary


def _mc(cfg, out, chash, which):
    pair = _pair(cfg)
    p = _params(cfg)
    sim = _sim(cfg)
    seed = int(cfg["seed"])
    workers = int(cfg.get("workers", default_workers()))
    n = int(p.get("n_paths", 10_000))
    x, a, alpha = _need(p, "x", "a", "alpha")
    common = dict(scheme=p.get("scheme", "sde"), workers=workers)
    if which == "passage":
        est = mc_first_passage(pair, x, a, alpha, p.get("alphabar", 0.0), sim, n, seed,
                               eps_tail=p.get("eps_tail", 1e-4), horizon=p.get("horizon"), **common)
    elif which == "explosion":
        est = mc_explosion(pair, x, a, alpha, sim, n, seed, M_sweep=p.get("M_sweep", (1e3, 1e5, 1e7)),
                           eps_tail=p.get("eps_tail", 1e-4), **common)
    else:
        (alphabar,) = _need(p, "alphabar")
        est = mc_occupation(pair, x, a, alpha, alphabar, sim, n, seed, eps_tail=p.get("eps_tail", 1e-4), **common)
    record = est.to_dict()
    record["config_hash"] = chash
    record["estimator_hash"] = est.config_hash
    emit_plotdata("mc", record, out, f"mc_{which}", chash)
    return record


def validate_example(cfg, out, chash):
    """Linear mechanisms: quadrature against (1 + (b/m) x)^(-alpha/b)."""
    qcfg = _quad(cfg)
    tol = float(_params(cfg).get("rel_tol", 1e-6))
    rows, worst = [], 0.0
    for b in (0.5, 1.0, 2.0):
        for m in (0.5, 1.0, 2.0):
            pair = catalog.linear_pair(b, m)
            for alpha in (0.5, 1.0, 2.0):
                for x in (0.5, 1.0, 2.0, 5.0):
                    q = first_passage_lt(pair, alpha, 0.0, x, 0.0, qcfg)
                    exact = (1.0 + b / m * x) ** (-alpha / b)
                    rel = abs(q - exact) / exact
                    worst = max(worst, rel)
                    rows.append((b, m, alpha, x, q, exact, rel))
    write_csv(out / "validate_example.csv", ["b", "m", "alpha", "x", "quadrature", "closed_form", "rel_error"], rows,
              f"config_hash={chash}")
    if worst > tol:
        raise ValidationFailed(f"linear-mechanism check: worst relative error {worst:.3g} > {tol:g}")
    return {"worst_rel_error": worst, "n_cases": len(rows)}


def validate_generator(cfg, out, chash):
    qcfg = _quad(cfg)
    p = _params(cfg)
    xs = p.get("x_grid", [0.25, 0.5, 1.0, 2.0, 5.0, 10.0])
    tol = float(p.get("tol", 1e-4))
    rows, worst = [], 0.0
    for name, pair, alpha, alphabar, with_psi in catalog.generator_cases():
        r_phi = ode_residual_phi(pair, alpha, alphabar, xs, qcfg)
        r_psi = ode_residual_psi(pair, alpha, alphabar, xs, qcfg) if with_psi else math.nan
        worst = max(worst, r_phi, 0.0 if math.isnan(r_psi) else r_psi)
        rows.append((name, alpha, alphabar, r_phi, r_psi))
    write_csv(out / "validate_generator.csv", ["pair", "alpha", "alphabar", "residual_phi", "residual_psi"], rows,
              f"config_hash={chash}")
    if worst > tol:
        raise ValidationFailed(f"generator residual {worst:.3g} > {tol:g}")
    return {"worst_residual": worst}


def validate_cross(cfg, out, chash):
    """Monte Carlo against quadrature on the Brownian-branching pair."""
    pair = _pair(cfg) if "pair" in cfg else catalog.brownian_branching_pair()
    p = _params(cfg)
    sim = _sim(cfg)
    qcfg = _quad(cfg)
    n = int(p.get("n_paths", 100_000))
    seed = int(cfg["seed"])
    z_max = float(p.get("z_max", 4.0))
    points = p.get("points", [[1, 0, 1, 0], [2, 1, 1, 0], [1, 0, 2, 1]])
    rows, worst = [], 0.0
    for k, (x, a, alpha, alphabar) in enumerate(points):
        q = first_passage_lt(pair, alpha, alphabar, x, a, qcfg)
        est = mc_first_passage(pair, x, a, alpha, alphabar, sim, n, seed + k, workers=int(cfg.get("workers", 1)))
        se = max(est.std_error, 1e-300)
        z = (est.mean - q) / se
        # the one-sided bias budget is added to the SE allowance
        excess = max(abs(est.mean - q) - est.bias_bound, 0.0) / se
        worst = max(worst, excess)
        rows.append((x, a, alpha, alphabar, q, est.mean, est.std_error, est.bias_bound, z))
    write_csv(out / "validate_cross.csv", ["x", "a", "alpha", "alphabar", "quadrature", "mc_mean", "mc_se",
                                           "bias_bound", "z_score"], rows, f"config_hash={chash}")
    if worst > z_max:
        raise ValidationFailed(f"cross validation: |z| up to {worst:.3g} > {z_max:g}")
    return {"worst_z": worst}


def validate_coupling(cfg, out, chash):
    """Superposition identity and monotone coupling across seeds."""
    p = _params(cfg)
    sim = _sim(cfg) if "sim" in cfg else SimConfig(dt_base=1e-2, horizon=2.0)
    n_seeds = int(p.get("n_seeds", 100))
    base = int(cfg["seed"])
    pair = _pair(cfg) if "pair" in cfg else catalog.brownian_branching_pair()
    x_low, x_high = p.get("x_low", 1.0), p.get("x_high", 2.0)
    worst_sum, order_violations = 0.0, 0
    for k in range(n_seeds):
        y, y1, y2 = superpose(pair, pair, x_low, x_high, sim, base + k)
        worst_sum = max(worst_sum, superposition_gap(y, y1, y2))
        lo, hi = couple_monotone(pair, x_low, x_high, sim, base + k)
        order_violations += ordering_violations(lo, hi)
    write_json(out / "validate_coupling.json", {"n_seeds": n_seeds, "max_sum_gap": worst_sum,
                                                 "order_violations": order_violations, "config_hash": chash})
    if order_violations or worst_sum > 1e-12:
        raise ValidationFailed(f"coupling: sum gap {worst_sum:.3g}, {order_violations} ordering violations")
    return {"max_sum_gap": worst_sum, "order_violations": order_violations}


def superposition_gap(y, y1, y2) -> float:
    """max |Y - Y1 - Y2| / (1 + |Y|) over grid points before the first stop."""
    n = min(len(y1.times), len(y2.times), len(y.times))
    # exit points of a stopped summand sit off the grid and drop out here
    grid = (y.times[:n] == y1.times[:n]) & (y.times[:n] == y2.times[:n])
    if not np.any(grid):
        return 0.0
    v, v1, v2 = y.values[:n][grid], y1.values[:n][grid], y2.values[:n][grid]
    return float(np.max(np.abs(v - v1 - v2) / (1.0 + np.abs(v))))


def ordering_violations(lo, hi) -> int:
    """Shared grid points before the low path stops where Y_high < Y_low."""
    n = min(len(lo.times), len(hi.times))
    same = lo.times[:n] == hi.times[:n]
    return int(np.sum(same & (hi.values[:n] < lo.values[:n])))


COMMANDS = {
    "scale": cmd_scale,
    "simulate": cmd_simulate,
    "mc-passage": lambda c, o, h: _mc(c, o, h, "passage"),
    "mc-explosion": lambda c, o, h: _mc(c, o, h, "explosion"),
    "mc-occupation": lambda c, o, h: _mc(c, o, h, "occupation"),
}
VALIDATORS = {
    "generator": validate_generator,
    "example": validate_example,
    "cross": validate_cross,
    "coupling": validate_coupling,
}


def _build_parser():
    ap = argparse.ArgumentParser(prog="cbmlab", description="Scale functions and simulation of CBMs.")
    ap.add_argument("--seed", type=int, help="override the config seed")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("config", type=Path)
        sp.add_argument("--out", type=Path, default=Path("cbm_out"))
    sp = sub.add_parser("validate")
    sp.add_argument("suite", choices=VALIDATIONS)
    sp.add_argument("config", type=Path, nargs="?")
    sp.add_argument("--out", type=Path, default=Path("cbm_out"))
    return ap


def load_config(path) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise PreconditionError("config must be a JSON object")
    return cfg


def _precheck(cfg: dict):
    """Fail before any work when the pair is degenerate or the config is malformed."""
    if "pair" in cfg:
        pair = cfg["pair"]
        if isinstance(pair, dict):
            try:
                MechanismPair.from_dict(pair)
            except (KeyError, TypeError) as exc:
                raise PreconditionError(f"malformed pair specification: {exc}") from exc
    if "sim" in cfg:
        _sim(cfg)
    if "quadrature" in cfg:
        _quad(cfg)


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        cfg.setdefault("seed", 0)
        if not 0 <= int(cfg["seed"]) < 2**64:
            raise PreconditionError("seed must be a 64-bit unsigned integer")
        _precheck(cfg)
        task = args.command if args.command != "validate" else f"validate-{args.suite}"
        chash = config_hash({"task": task, **cfg})
        fn = COMMANDS[args.command] if args.command != "validate" else VALIDATORS[args.suite]
        result = fn(cfg, args.out, chash)
    except (PreconditionError, ValueError, KeyError, TypeError, json.JSONDecodeError) as exc:
        print(f"precondition violated: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION
    except (CbmError, FloatingPointError, OverflowError) as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    print(json.dumps(result, sort_keys=True, default=_plain))
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
