"""Monte Carlo estimators of first-passage, explosion and occupation transforms.

Every estimator splits its paths into blocks of ``block_size``; block ``k``
uses the random stream keyed by (seed, scheme, k), so a result depends only
on (seed, configuration) and not on how blocks are scheduled. Blocks may run
in worker processes and are always reduced in block order.

Truncation biases (finite horizon, finite explosion threshold) are reported
as one-sided bounds in ``bias_bound`` and never folded into the standard
error.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial
from typing import Callable, Optional, Sequence

import numpy as np

from .cbm_sim import ABSORBED, CENSORED, EXPLODED, SimConfig, simulate_batch
from .errors import PreconditionError
from .levy_mech import MechanismPair
from .scale_fns import check_explosive

__all__ = [
    "EstimateWithCI",
    "config_hash",
    "default_workers",
    "mc_first_passage",
    "mc_explosion",
    "mc_occupation",
    "dt_convergence_study",
    "DtStudyRow",
]

DEFAULT_BLOCK = 4096
DEFAULT_M_SWEEP = (1e3, 1e5, 1e7)


@dataclass(frozen=True)
class EstimateWithCI:
    """Sample mean of per-path contributions with a one-sided bias bound."""

    mean: float
    std_error: float
    n_paths: int
    bias_bound: float
    config: dict = field(default_factory=dict, compare=False)
    extras: dict = field(default_factory=dict, compare=False)

    @property
    def config_hash(self) -> str:
        return config_hash(self.config)

    def covers(self, target: float, n_se: float = 3.0, extra: float = 0.0) -> bool:
        """|mean - target| <= n_se * SE + bias_bound + extra."""
        return abs(self.mean - target) <= n_se * self.std_error + self.bias_bound + extra

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "se": self.std_error,
            "n": self.n_paths,
            "bias_bound": self.bias_bound,
            "config_hash": self.config_hash,
            **{k: v for k, v in self.extras.items() if not isinstance(v, np.ndarray)},
        }


def config_hash(config: dict) -> str:
    """sha256 of the canonical JSON form of ``config``."""
    text = json.dumps(config, sort_keys=True, separators=(",", ":"), default=_jsonable)
    return hashlib.sha256(text.encode()).hexdigest()


def _jsonable(obj):
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def default_workers() -> int:
    """Worker count from the CBM_THREADS environment variable (default 1)."""
    try:
        return max(1, int(os.environ.get("CBM_THREADS", "1")))
    except ValueError:
        return 1


def _summary(values: np.ndarray):
    n = values.size
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return mean, se


def _run_blocks(task: Callable, n_paths: int, block_size: int, workers: Optional[int]):
    """Run ``task(block, n)`` over all blocks; results in block order."""
    if n_paths < 1:
        raise PreconditionError("n_paths must be positive")
    sizes = [min(block_size, n_paths - k) for k in range(0, n_paths, block_size)]
    workers = default_workers() if workers is None else workers
    if workers <= 1 or len(sizes) == 1:
        return [task(b, n) for b, n in enumerate(sizes)]
    with ProcessPoolExecutor(max_workers=min(workers, len(sizes))) as pool:
        return list(pool.map(task, range(len(sizes)), sizes))


def _echo(**kw) -> dict:
    out = {}
    for k, v in kw.items():
        out[k] = v.to_dict() if hasattr(v, "to_dict") else v
    return out


def _passage_block(block, n, pair, x, a, alpha, alphabar, cfg, seed, scheme):
    r = simulate_batch(pair, x, cfg, n, seed, block=block, stop_level=a, scheme=scheme)
    hit = r.status == ABSORBED
    contrib = np.where(hit, np.exp(-alpha * r.tau - alphabar * r.theta), 0.0)
    return contrib, r.status, r.clamped


def mc_first_passage(pair: MechanismPair, x: float, a: float, alpha: float, alphabar: float, sim_cfg: SimConfig,
                     n_paths: int, seed: int, eps_tail: float = 1e-4, horizon: Optional[float] = None,
                     scheme: str = "sde", block_size: int = DEFAULT_BLOCK,
                     workers: Optional[int] = None) -> EstimateWithCI:
    """E_x[exp(-alpha tau_a - alphabar theta_{tau_a}); tau_a < zeta].

    With alpha > 0 the horizon defaults to ln(1 / eps_tail) / alpha, which
    bounds the censoring bias by eps_tail. With alpha = 0 a horizon must be
    given and the censored fraction is reported as the bias bound.
    """
    if alpha < 0 or alphabar < 0:
        raise PreconditionError("alpha and alphabar must be nonnegative")
    if x < 0 or a < 0:
        raise PreconditionError("x and a must be nonnegative")
    if alpha == 0 and horizon is None:
        raise PreconditionError("alpha = 0 needs an explicit horizon")
    T = horizon if horizon is not None else math.log(1.0 / eps_tail) / alpha
    cfg = replace(sim_cfg, horizon=T)
    echo = _echo(task="mc_first_passage", pair=pair, x=x, a=a, alpha=alpha, alphabar=alphabar, sim=cfg,
                 n_paths=n_paths, seed=seed, scheme=scheme, block_size=block_size)
    if x <= a:
        return EstimateWithCI(1.0, 0.0, n_paths, 0.0, echo)
    task = partial(_passage_block, pair=pair, x=x, a=a, alpha=alpha, alphabar=alphabar, cfg=cfg, seed=seed,
                   scheme=scheme)
    parts = _run_blocks(task, n_paths, block_size, workers)
    contrib = np.concatenate([p[0] for p in parts])
    status = np.concatenate([p[1] for p in parts])
    clamped = np.concatenate([p[2] for p in parts])
    mean, se = _summary(contrib)
    censored = float(np.mean(status == CENSORED))
    bias = censored if alpha == 0 else math.exp(-alpha * T)
    extras = {
        "horizon": T,
        "censored_fraction": censored,
        "exploded_fraction": float(np.mean(status == EXPLODED)),
        "clamp_fraction": float(np.mean(clamped)),
    }
    return EstimateWithCI(mean, se, n_paths, bias, echo, extras)


def _explosion_block(block, n, pair, x, a, cfg, seed, levels, scheme):
    r = simulate_batch(pair, x, cfg, n, seed, block=block, stop_level=a, scheme=scheme, up_levels=levels)
    return r.up_times, r.status, r.tau


def mc_explosion(pair: MechanismPair, x: float, a: float, alpha: float, sim_cfg: SimConfig, n_paths: int,
                 seed: int, M_sweep: Sequence[float] = DEFAULT_M_SWEEP, eps_tail: float = 1e-4,
                 scheme: str = "sde", block_size: int = DEFAULT_BLOCK,
                 workers: Optional[int] = None) -> EstimateWithCI:
    """E_x[exp(-alpha zeta); zeta < tau_a] through the passage times above M.

    One set of paths is run with threshold max(M_sweep) and the first time
    above every M in the sweep is recorded, so the estimates are pathwise
    nonincreasing in M. The largest-M estimate is returned; the bias bound
    adds the last decrement of the sweep to the horizon bound
    exp(-alpha T) with T = ln(1 / eps_tail) / alpha.
    """
    if not alpha > 0:
        raise PreconditionError("alpha must be positive")
    if x < 0 or a < 0:
        raise PreconditionError("x and a must be nonnegative")
    check_explosive(pair.branching)
    levels = np.sort(np.asarray(M_sweep, float))
    if levels.size < 1 or not levels[0] > max(x, a):
        raise PreconditionError("M_sweep levels must exceed x and a")
    T = math.log(1.0 / eps_tail) / alpha
    cfg = replace(sim_cfg, horizon=T, explosion_threshold=float(levels[-1]),
                  truncation_level=max(sim_cfg.n_trunc, 10.0 * float(levels[-1])))
    echo = _echo(task="mc_explosion", pair=pair, x=x, a=a, alpha=alpha, sim=cfg, n_paths=n_paths, seed=seed,
                 M_sweep=[float(v) for v in levels], scheme=scheme, block_size=block_size)
    if x <= a:
        return EstimateWithCI(0.0, 0.0, n_paths, 0.0, echo, {"sweep": [(float(m), 0.0, 0.0) for m in levels]})
    task = partial(_explosion_block, pair=pair, x=x, a=a, cfg=cfg, seed=seed, levels=levels, scheme=scheme)
    parts = _run_blocks(task, n_paths, block_size, workers)
    up = np.concatenate([p[0] for p in parts])
    status = np.concatenate([p[1] for p in parts])
    tau = np.concatenate([p[2] for p in parts])
    # a level counts only if reached before entering [0, a]
    passed_at = np.where(status == ABSORBED, tau, np.inf)
    sweep = []
    for j, m in enumerate(levels):
        ok = np.isfinite(up[:, j]) & (up[:, j] < passed_at)
        mean, se = _summary(np.where(ok, np.exp(-alpha * np.where(ok, up[:, j], 0.0)), 0.0))
        sweep.append((float(m), mean, se))
    mean, se = sweep[-1][1], sweep[-1][2]
    decrement = max(sweep[-2][1] - mean, 0.0) if len(sweep) > 1 else 0.0
    extras = {
        "horizon": T,
        "sweep": sweep,
        "decrement": decrement,
        "exploded_fraction": float(np.mean(status == EXPLODED)),
    }
    return EstimateWithCI(mean, se, n_paths, decrement + math.exp(-alpha * T), echo, extras)


def _occupation_block(block, n, pair, x, a, alpha, alphabar, cfg, seed, scheme):
    r = simulate_batch(pair, x, cfg, n, seed, block=block, stop_level=a, scheme=scheme,
                       occupation=(alpha, alphabar))
    return r.occupation, r.status


def mc_occupation(pair: MechanismPair, x: float, a: float, alpha: float, alphabar: float, sim_cfg: SimConfig,
                  n_paths: int, seed: int, eps_tail: float = 1e-4, scheme: str = "sde",
                  block_size: int = DEFAULT_BLOCK, workers: Optional[int] = None) -> EstimateWithCI:
    """E_x[int_0^{tau_a ^ zeta} exp(-alpha s - alphabar theta_s) ds].

    The horizon T solves exp(-alpha T) / alpha = eps_tail, which is then the
    bias bound.
    """
    if not (alpha > 0 and alphabar > 0):
        raise PreconditionError("alpha and alphabar must be positive")
    if x < 0 or a < 0:
        raise PreconditionError("x and a must be nonnegative")
    T = max(math.log(1.0 / (alpha * eps_tail)) / alpha, sim_cfg.dt_base)
    cfg = replace(sim_cfg, horizon=T)
    echo = _echo(task="mc_occupation", pair=pair, x=x, a=a, alpha=alpha, alphabar=alphabar, sim=cfg,
                 n_paths=n_paths, seed=seed, scheme=scheme, block_size=block_size)
    if x <= a:
        return EstimateWithCI(0.0, 0.0, n_paths, 0.0, echo)
    task = partial(_occupation_block, pair=pair, x=x, a=a, alpha=alpha, alphabar=alphabar, cfg=cfg, seed=seed,
                   scheme=scheme)
    parts = _run_blocks(task, n_paths, block_size, workers)
    occ = np.concatenate([p[0] for p in parts])
    status = np.concatenate([p[1] for p in parts])
    mean, se = _summary(occ)
    extras = {"horizon": T, "exploded_fraction": float(np.mean(status == EXPLODED)), "max_contribution": float(occ.max())}
    return EstimateWithCI(mean, se, n_paths, math.exp(-alpha * T) / alpha, echo, extras)


@dataclass(frozen=True)
class DtStudyRow:
    dt: float
    estimate: float
    std_error: float
    difference: float
    error: float


def dt_convergence_study(run: Callable[[float], EstimateWithCI], dt_list: Sequence[float],
                         reference: Optional[float] = None):
    """Rerun ``run(dt)`` over ``dt_list`` (common seeds are the caller's choice).

    Each row carries the difference to the previous estimate and, when a
    reference value is known, the error against it (nan otherwise).
    """
    rows = []
    prev = None
    for dt in dt_list:
        est = run(float(dt))
        diff = est.mean - prev if prev is not None else math.nan
        err = est.mean - reference if reference is not None else math.nan
        rows.append(DtStudyRow(float(dt), est.mean, est.std_error, diff, err))
        prev = est.mean
    return rows
