"""Discretized spectrally positive Levy paths.

Over a time length dt the Levy-Ito decomposition with a small-jump cutoff
eps gives the increment

    (gamma - int_{(eps,1]} h pi(dh)) dt + sigma sqrt(dt) N
        + (sum of jumps larger than eps) + small-jump part,

where the small-jump part is either dropped (``"drift"``) or replaced by a
centred Gaussian of variance dt int_{(0,eps]} h^2 pi(dh) (``"gaussian"``).
Finite-activity measures are simulated exactly (eps = 0). For infinite
activity the cutoff is raised per increment when needed so that the expected
number of simulated jumps stays below ``jump_cap``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .levy_mech import LevyMechanism, psi, psi_prime_at_zero
from .rng import STREAM_LEVY, stream

__all__ = [
    "LevyPathConfig",
    "LevyIncrement",
    "levy_increments",
    "sample_increments",
    "empirical_laplace_check",
    "LaplaceCheckRow",
]

SMALL_JUMP_MODES = ("gaussian", "drift")


@dataclass(frozen=True)
class LevyPathConfig:
    """Discretization of a Levy path.

    ``eps_jump`` is the small-jump cutoff for infinite-activity measures
    (ignored, i.e. set to 0, for finite activity).
    """

    dt: float = 1e-3
    eps_jump: float = 1e-3
    small_jump_mode: str = "gaussian"
    horizon: float = 1.0
    jump_cap: float = 20.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not 0 < self.eps_jump <= 1:
            raise ValueError("eps_jump must lie in (0, 1]")
        if self.small_jump_mode not in SMALL_JUMP_MODES:
            raise ValueError(f"small_jump_mode must be one of {SMALL_JUMP_MODES}")
        if not self.horizon > 0 or not self.jump_cap > 0:
            raise ValueError("horizon and jump_cap must be positive")


def levy_increments(mech: LevyMechanism, rng: np.random.Generator, dt, cfg: LevyPathConfig = LevyPathConfig()):
    """Vectorized increments over the time lengths ``dt`` (array, >= 0).

    Returns ``(increment, continuous_variance)``; the second output is the
    variance of the Gaussian part, used for bridge corrections.
    """
    dt = np.asarray(dt, float)
    jm = mech.jumps
    n = dt.shape
    normal = rng.standard_normal(n)
    eps = jm.cutoff(dt, 0.0 if jm.finite_activity else cfg.eps_jump, cfg.jump_cap)
    drift = (mech.gamma - jm.comp(eps)) * dt
    jumps = jm.jump_sum(rng, dt, eps)
    var = mech.sigma**2 * dt
    inc = drift + mech.sigma * np.sqrt(dt) * normal + jumps
    small = rng.standard_normal(n)
    if cfg.small_jump_mode == "gaussian":
        sv = jm.small_var(eps) * dt
        inc = inc + np.sqrt(sv) * small
        var = var + sv
    return inc, var


@dataclass(frozen=True)
class LevyIncrement:
    """One step of a Levy path."""

    dt: float
    diffusion: float
    drift: float
    jumps: np.ndarray
    small_jump: float

    @property
    def total(self) -> float:
        return self.diffusion + self.drift + float(self.jumps.sum()) + self.small_jump


def sample_increments(mech: LevyMechanism, cfg: LevyPathConfig, rng) -> Iterator[LevyIncrement]:
    """Step-by-step increments on [0, horizon] with individual jumps listed.

    ``rng`` is a numpy Generator or an integer seed.
    """
    if not isinstance(rng, np.random.Generator):
        rng = stream(int(rng), STREAM_LEVY)
    jm = mech.jumps
    eps = 0.0 if jm.finite_activity else cfg.eps_jump
    comp = float(jm.comp(eps))
    tail = float(jm.tail(eps))
    if not math.isfinite(tail):
        raise ValueError("tail mass above the cutoff is not finite")
    sv = float(jm.small_var(eps))
    n_steps = int(math.ceil(cfg.horizon / cfg.dt - 1e-9))
    t = 0.0
    for _ in range(n_steps):
        dt = min(cfg.dt, cfg.horizon - t)
        t += dt
        diff = mech.sigma * math.sqrt(dt) * rng.standard_normal()
        count = rng.poisson(dt * tail) if tail > 0 else 0
        sizes = jm.sample_sizes(rng, count, eps) if count else np.empty(0)
        small = math.sqrt(sv * dt) * rng.standard_normal() if cfg.small_jump_mode == "gaussian" else 0.0
        yield LevyIncrement(dt, diff, (mech.gamma - comp) * dt, np.asarray(sizes, float), small)


@dataclass(frozen=True)
class LaplaceCheckRow:
    x: float
    empirical: float
    target: float
    std_error: float
    z_score: float


def sample_endpoint(mech: LevyMechanism, cfg: LevyPathConfig, t: float, n_paths: int, seed: int) -> np.ndarray:
    """X_t - X_0 for ``n_paths`` independent paths (vectorized over paths)."""
    rng = stream(seed, STREAM_LEVY, 1)
    n_steps = int(math.ceil(t / cfg.dt - 1e-9))
    out = np.zeros(n_paths)
    done = 0.0
    for _ in range(n_steps):
        h = min(cfg.dt, t - done)
        done += h
        inc, _ = levy_increments(mech, rng, np.full(n_paths, h), cfg)
        out += inc
    return out


def empirical_laplace_check(mech: LevyMechanism, cfg: LevyPathConfig, x_values, t: float, n_paths: int, seed: int):
    """Compare the Monte Carlo mean of exp(-x X_t) with exp(t Psi(x))."""
    xt = sample_endpoint(mech, cfg, t, n_paths, seed)
    rows = []
    for x in np.atleast_1d(x_values):
        w = np.exp(-x * xt)
        emp = float(w.mean())
        se = float(w.std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0
        target = math.exp(t * float(psi(mech, x)))
        if se > 1e-12 * target:
            z = (emp - target) / se
        else:
            z = 0.0 if math.isclose(emp, target, rel_tol=1e-12, abs_tol=0.0) else math.copysign(math.inf, emp - target)
        rows.append(LaplaceCheckRow(float(x), emp, target, se, z))
    return rows


def mean_drift(mech: LevyMechanism) -> float:
    """E[X_1 - X_0] = -Psi'(0+) (may be +inf)."""
    return -psi_prime_at_zero(mech)
