"""Simulation of CBM trajectories.

Two discretizations are provided:

* an Euler scheme for the jump SDE, in which the branching noise over a step
  of length dt is a Levy increment of the branching driver over the
  "population time" min(Y, n) dt (the thinning of the Poisson random measure
  at level Y, localized at n);
* the Lamperti time change Y_t = X_{t ^ tau_0} + L_{theta_t}, with the
  clock theta advanced by forward Euler and L read off its own time grid.

All paths of a batch are advanced together with one random stream. A path
stops when it enters [0, a] (a = 0 for absorption), when it exceeds the
explosion threshold M or the truncation level n, or at the horizon T.
Crossings of the level are located by linear interpolation; when the step
carries a Gaussian part a Brownian bridge test also catches crossings that
happen inside the step.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional, Union

import numpy as np

from .levy_mech import LevyMechanism, MechanismPair, NoJumps
from .levy_path import LevyPathConfig, levy_increments
from .rng import STREAM_COUPLING, STREAM_LAMPERTI, STREAM_RESTART, STREAM_SDE, stream

__all__ = [
    "SimConfig",
    "CbmPath",
    "Absorbed",
    "ExplodedAbove",
    "Censored",
    "Passed",
    "BatchResult",
    "simulate_batch",
    "simulate_sde",
    "simulate_lamperti",
    "couple_monotone",
    "superpose",
]

ABSORBED, EXPLODED, CENSORED = 0, 1, 2
SCHEMES = ("sde", "lamperti")


@dataclass(frozen=True)
class SimConfig:
    """Discretization and stopping parameters.

    With ``adaptive`` the step is ``dt_base / (1 + Y / y_ref)``. The
    truncation level defaults to ``10 * explosion_threshold``. ``max_steps``
    caps the number of steps of a batch; paths still running at the cap are
    censored at their current time.
    """

    dt_base: float = 1e-3
    adaptive: bool = False
    y_ref: float = 10.0
    explosion_threshold: float = 1e6
    horizon: float = 10.0
    truncation_level: Optional[float] = None
    levy_migration: LevyPathConfig = field(default_factory=LevyPathConfig)
    levy_branching: LevyPathConfig = field(default_factory=LevyPathConfig)
    bridge: bool = True
    max_steps: int = 10_000_000

    def __post_init__(self):
        for name in ("dt_base", "y_ref", "explosion_threshold", "horizon"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.truncation_level is not None and not self.truncation_level >= self.explosion_threshold:
            raise ValueError("truncation_level must be at least explosion_threshold")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")

    @property
    def n_trunc(self) -> float:
        return self.truncation_level if self.truncation_level is not None else 10.0 * self.explosion_threshold

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        for key in ("levy_migration", "levy_branching"):
            if key in d and isinstance(d[key], dict):
                d[key] = LevyPathConfig(**d[key])
        return cls(**d)


@dataclass(frozen=True)
class Absorbed:
    tau0: float


@dataclass(frozen=True)
class Passed:
    """Entrance into [0, level] for a stop level above 0."""

    level: float
    tau: float


@dataclass(frozen=True)
class ExplodedAbove:
    M: float
    tauM: float


@dataclass(frozen=True)
class Censored:
    horizon: float


Status = Union[Absorbed, Passed, ExplodedAbove, Censored]


@dataclass(frozen=True)
class CbmPath:
    """A simulated trajectory with theta_t = int_0^t Y_s ds."""

    times: np.ndarray
    values: np.ndarray
    theta: np.ndarray
    status: Status
    clamped: bool = False

    @property
    def end_time(self) -> float:
        return float(self.times[-1])


@dataclass
class BatchResult:
    """Per-path exit data of a batch.

    ``status`` holds ABSORBED (entered [0, a]), EXPLODED or CENSORED; ``tau``
    is the exit time and ``theta`` the clock at that time. ``occupation`` is
    int_0^tau exp(-alpha s - alphabar theta_s) ds when requested.
    """

    status: np.ndarray
    tau: np.ndarray
    theta: np.ndarray
    occupation: Optional[np.ndarray]
    clamped: np.ndarray
    steps: int
    hit_step_cap: bool
    paths: Optional[list] = None
    up_times: Optional[np.ndarray] = None


def _classify(y, y_new, var, dt, u, level, M, bridge):
    """Exit decisions for one step from y to y_new (arrays).

    Returns (crossed, exploded, frac, y_end, clamped) where ``frac`` is the
    fraction of the step elapsed at exit.
    """
    hit = y_new <= level
    with np.errstate(divide="ignore", invalid="ignore"):
        frac = np.where(hit, (y - level) / (y - y_new), 1.0)
    frac = np.clip(np.nan_to_num(frac, nan=1.0), 0.0, 1.0)
    crossed = hit
    if bridge:
        gap = (y - level) * (y_new - level)
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            p = np.where((var > 0) & ~hit, np.exp(-2.0 * gap / var), 0.0)
        via_bridge = u < p
        frac = np.where(via_bridge, 0.5, frac)
        crossed = hit | via_bridge
    exploded = ~crossed & (y_new >= M)
    y_end = np.where(crossed, level, y_new)
    clamped = hit & (y_new < level)
    return crossed, exploded, frac, y_end, clamped


def _sde_increment(pair, rng, y, dt, cfg):
    yc = np.minimum(y, cfg.n_trunc)
    dl, vl = levy_increments(pair.branching, rng, yc * dt, cfg.levy_branching)
    dx, vx = levy_increments(pair.migration, rng, dt, cfg.levy_migration)
    return y + dl + dx, vl + vx


class _SdeScheme:
    def __init__(self, pair, cfg, n, x0):
        self.pair, self.cfg = pair, cfg

    def step(self, rng, idx, y, dt):
        return _sde_increment(self.pair, rng, y, dt, self.cfg)


class _LampertiScheme:
    """Y = X + L(theta) with theta by forward Euler and L on a grid of step h."""

    def __init__(self, pair, cfg, n, x0):
        self.pair, self.cfg = pair, cfg
        self.h = cfg.dt_base
        self.x = np.full(n, float(x0))
        self.lv = np.zeros(n)
        self.k = np.zeros(n, dtype=np.int64)
        self.clock = np.zeros(n)

    def step(self, rng, idx, y, dt):
        cfg = self.cfg
        self.clock[idx] += np.minimum(y, cfg.n_trunc) * dt
        k_new = np.floor(self.clock[idx] / self.h).astype(np.int64)
        dl, vl = levy_increments(self.pair.branching, rng, (k_new - self.k[idx]) * self.h, cfg.levy_branching)
        dx, vx = levy_increments(self.pair.migration, rng, dt, cfg.levy_migration)
        self.k[idx] = k_new
        self.lv[idx] += dl
        self.x[idx] += dx
        return self.x[idx] + self.lv[idx], vl + vx


def _scheme_stream(scheme, seed, block):
    return stream(seed, STREAM_SDE if scheme == "sde" else STREAM_LAMPERTI, block)


def simulate_batch(pair: MechanismPair, x0: float, cfg: SimConfig, n_paths: int, seed: int, block: int = 0,
                   stop_level: float = 0.0, occupation=None, scheme: str = "sde",
                   record: bool = False, up_levels=None) -> BatchResult:
    """Simulate ``n_paths`` paths from ``x0`` with the stream (seed, scheme, block).

    ``occupation`` is an optional pair (alpha, alphabar); ``record`` keeps the
    full trajectories (intended for small batches). For each entry of
    ``up_levels`` the first grid time with Y >= level is stored in
    ``BatchResult.up_times`` (inf if never).
    """
    if scheme not in SCHEMES:
        raise ValueError(f"scheme must be one of {SCHEMES}")
    if x0 < 0 or stop_level < 0:
        raise ValueError("x0 and stop_level must be nonnegative")
    if n_paths < 1:
        raise ValueError("n_paths must be positive")
    rng = _scheme_stream(scheme, seed, block)
    engine = (_SdeScheme if scheme == "sde" else _LampertiScheme)(pair, cfg, n_paths, x0)
    M, T = float(cfg.explosion_threshold), float(cfg.horizon)

    y = np.full(n_paths, float(x0))
    t = np.zeros(n_paths)
    th = np.zeros(n_paths)
    status = np.full(n_paths, CENSORED, dtype=np.int8)
    tau = np.full(n_paths, T)
    th_exit = np.zeros(n_paths)
    clamped = np.zeros(n_paths, dtype=bool)
    occ = np.zeros(n_paths) if occupation is not None else None
    al, alb = occupation if occupation is not None else (0.0, 0.0)
    hist = [(np.arange(n_paths), t.copy(), y.copy(), th.copy())] if record else None
    levels = np.asarray(up_levels if up_levels is not None else [], float)
    up = np.where(float(x0) >= levels[None, :], 0.0, np.inf) * np.ones((n_paths, 1))

    start_in = y <= stop_level
    status[start_in] = ABSORBED
    tau[start_in] = 0.0
    if x0 >= M:
        status[:] = EXPLODED
        tau[:] = 0.0
    idx = np.flatnonzero((status == CENSORED))
    steps = 0
    while idx.size and steps < cfg.max_steps:
        steps += 1
        yi, ti, thi = y[idx], t[idx], th[idx]
        dt = cfg.dt_base / (1.0 + yi / cfg.y_ref) if cfg.adaptive else np.full(idx.size, cfg.dt_base)
        dt = np.minimum(dt, T - ti)
        y_new, var = engine.step(rng, idx, yi, dt)
        u = rng.random(idx.size)
        crossed, exploded, frac, y_end, clp = _classify(yi, y_new, var, dt, u, stop_level, M, cfg.bridge)
        exploded |= ~crossed & (y_new >= cfg.n_trunc)
        h = frac * dt
        t_new = ti + h
        th_new = thi + 0.5 * (yi + y_end) * h
        if occ is not None:
            w0 = np.exp(-al * ti - alb * thi)
            w1 = np.exp(-al * t_new - alb * th_new)
            occ[idx] += 0.5 * (w0 + w1) * h
        y[idx], t[idx], th[idx] = y_end, t_new, th_new
        clamped[idx] = clp
        if levels.size:
            fresh = (y_end[:, None] >= levels[None, :]) & np.isinf(up[idx])
            up[idx] = np.where(fresh, t_new[:, None], up[idx])
        if hist is not None:
            hist.append((idx.copy(), t_new.copy(), y_end.copy(), th_new.copy()))
        censored = ~crossed & ~exploded & (t_new >= T * (1.0 - 1e-12))
        for mask, code in ((crossed, ABSORBED), (exploded, EXPLODED), (censored, CENSORED)):
            j = idx[mask]
            status[j] = code
            tau[j] = t_new[mask]
            th_exit[j] = th_new[mask]
        idx = idx[~(crossed | exploded | censored)]
    hit_cap = bool(idx.size)
    tau[idx] = t[idx]
    th_exit[idx] = th[idx]
    paths = _assemble(hist, n_paths, status, tau, clamped, stop_level, M, T) if record else None
    return BatchResult(status, tau, th_exit, occ, clamped, steps, hit_cap, paths, up)


def _status_obj(code, tau, level, M, T):
    if code == ABSORBED:
        return Absorbed(float(tau)) if level == 0.0 else Passed(float(level), float(tau))
    if code == EXPLODED:
        return ExplodedAbove(float(M), float(tau))
    return Censored(float(T))


def _assemble(hist, n, status, tau, clamped, level, M, T):
    idx = np.concatenate([h[0] for h in hist])
    order = np.argsort(idx, kind="stable")
    cols = [np.concatenate([h[c] for h in hist])[order] for c in (1, 2, 3)]
    bounds = np.searchsorted(idx[order], np.arange(n + 1))
    out = []
    for i in range(n):
        s = slice(bounds[i], bounds[i + 1])
        out.append(CbmPath(cols[0][s], cols[1][s], cols[2][s],
                           _status_obj(status[i], tau[i], level, M, T), bool(clamped[i])))
    return out


def simulate_sde(pair: MechanismPair, x0: float, cfg: SimConfig, seed: int, stop_level: float = 0.0) -> CbmPath:
    """One trajectory of the Euler scheme for the CBM jump SDE."""
    return simulate_batch(pair, x0, cfg, 1, seed, stop_level=stop_level, record=True).paths[0]


def simulate_lamperti(pair: MechanismPair, x0: float, cfg: SimConfig, seed: int, stop_level: float = 0.0) -> CbmPath:
    """One trajectory of the Lamperti time-change scheme."""
    return simulate_batch(pair, x0, cfg, 1, seed, stop_level=stop_level, scheme="lamperti", record=True).paths[0]


# -- couplings ----------------------------------------------------------------


class _Track:
    """Single-path recorder for the coupling constructions."""

    def __init__(self, x0, M, T):
        M, T = float(M), float(T)
        self.t, self.y, self.th = [0.0], [float(x0)], [0.0]
        self.M, self.T = M, T
        self.status = None
        self.clamped = False
        if x0 <= 0.0:
            self.status = Absorbed(0.0)
        elif x0 >= M:
            self.status = ExplodedAbove(M, 0.0)

    @property
    def alive(self):
        return self.status is None

    @property
    def value(self):
        return self.y[-1]

    def push(self, t_new, y_end, th_inc):
        self.t.append(float(t_new))
        self.y.append(float(y_end))
        self.th.append(self.th[-1] + float(th_inc))

    def advance(self, y_new, var, t, dt, u, bridge):
        """Move to y_new over [t, t + dt] with the usual exit rules."""
        y = self.value
        c, e, f, ye, clp = _classify(np.array([y]), np.array([y_new]), np.array([var]), dt, np.array([u]),
                                     0.0, self.M, bridge)
        h = float(f[0]) * dt
        self.push(t + h, ye[0], 0.5 * (y + ye[0]) * h)
        if c[0]:
            self.status = Absorbed(t + h)
            self.clamped = bool(clp[0])
        elif e[0]:
            self.status = ExplodedAbove(self.M, t + h)
        elif t + h >= self.T * (1.0 - 1e-12):
            self.status = Censored(self.T)

    def set_value(self, t_new, y_new):
        """Record an externally computed value (sum constructions)."""
        y = self.value
        dt = t_new - self.t[-1]
        self.push(t_new, y_new, 0.5 * (y + y_new) * dt)
        if y_new <= 0.0:
            self.status = Absorbed(t_new)
        elif y_new >= self.M:
            self.status = ExplodedAbove(self.M, t_new)
        elif t_new >= self.T * (1.0 - 1e-12):
            self.status = Censored(self.T)

    def path(self):
        status = self.status if self.status is not None else Censored(self.t[-1])
        return CbmPath(np.array(self.t), np.array(self.y), np.array(self.th), status, self.clamped)


def _single(mech, rng, length, lcfg):
    if length <= 0.0:
        return 0.0, 0.0
    inc, var = levy_increments(mech, rng, np.array([length]), lcfg)
    return float(inc[0]), float(var[0])


def _continue(track, pair, cfg, rng, t):
    """Run ``track`` as a CBM of ``pair`` from time t on fixed steps."""
    while track.alive:
        dt = min(cfg.dt_base, cfg.horizon - t)
        y = track.value
        dl, vl = _single(pair.branching, rng, min(y, cfg.n_trunc) * dt, cfg.levy_branching)
        dx, vx = _single(pair.migration, rng, dt, cfg.levy_migration)
        track.advance(y + dl + dx, vl + vx, t, dt, rng.random(), cfg.bridge)
        t = track.t[-1]


def couple_monotone(pair: MechanismPair, x_low: float, x_high: float, cfg: SimConfig, seed: int):
    """Paths from x_low and x_high with Y_high >= Y_low until the low path stops.

    The high path is the low path plus an independent CSBP (branching
    mechanism of ``pair``, no migration) started at x_high - x_low. After the
    low path is absorbed the high path continues as a CBM with fresh noise.
    Steps are fixed at ``cfg.dt_base``.
    """
    if not 0.0 <= x_low <= x_high:
        raise ValueError("need 0 <= x_low <= x_high")
    b = pair.branching
    M, T = cfg.explosion_threshold, cfg.horizon
    rng = stream(seed, STREAM_COUPLING)
    low = _Track(x_low, M, T)
    extra = _Track(x_high - x_low, M, T)
    high = _Track(x_high, M, T)
    t = 0.0
    while low.alive and high.alive:
        dt = min(cfg.dt_base, T - t)
        y1 = low.value
        dl, vl = _single(b, rng, min(y1, cfg.n_trunc) * dt, cfg.levy_branching)
        dx, vx = _single(pair.migration, rng, dt, cfg.levy_migration)
        u1, u2 = rng.random(2)
        low.advance(y1 + dx + dl, vl + vx, t, dt, u1, cfg.bridge)
        if extra.alive:
            y2 = extra.value
            d2, v2 = _single(b, rng, min(y2, cfg.n_trunc) * dt, cfg.levy_branching)
            extra.advance(y2 + d2, v2, t, dt, u2, cfg.bridge)
        # a stopped summand keeps its exit value (0 after absorption)
        high.set_value(low.t[-1], low.value + extra.value)
        t += dt
    if high.alive:
        _continue(high, pair, cfg, stream(seed, STREAM_RESTART, STREAM_COUPLING), high.t[-1])
    if low.alive:
        _continue(low, pair, cfg, stream(seed, STREAM_RESTART, STREAM_COUPLING, 2), low.t[-1])
    return low.path(), high.path()


def _is_zero(mech: LevyMechanism) -> bool:
    return mech.sigma == 0.0 and mech.gamma == 0.0 and isinstance(mech.jumps, NoJumps)


def superpose(pair1: MechanismPair, pair2: MechanismPair, x1: float, x2: float, cfg: SimConfig, seed: int):
    """Y = Y1 + Y2 for two CBMs sharing a branching mechanism.

    The branching noise of Y is that of Y1 on population levels [0, Y1) and
    that of Y2 shifted above Y1; its migration is X1 + X2. The identity holds
    at every grid point while each summand is either running or absorbed
    with zero migration (then it stays at 0). Once a summand with a moving
    migration stops, Y runs on with fresh noise. Steps are fixed at
    ``cfg.dt_base``. Returns (Y, Y1, Y2).
    """
    if pair1.branching != pair2.branching:
        raise ValueError("superposition needs equal branching mechanisms")
    if x1 < 0 or x2 < 0:
        raise ValueError("starting points must be nonnegative")
    b = pair1.branching
    M, T = cfg.explosion_threshold, cfg.horizon
    rng = stream(seed, STREAM_COUPLING, 1)
    parts = [(_Track(x1, M, T), pair1.migration), (_Track(x2, M, T), pair2.migration)]
    y = _Track(x1 + x2, M, T)
    t = 0.0

    def joined():
        return all(tr.alive or (isinstance(tr.status, Absorbed) and _is_zero(m)) for tr, m in parts)

    while y.alive and joined():
        dt = min(cfg.dt_base, T - t)
        incs = []
        for tr, m in parts:
            if tr.alive:
                dl, vl = _single(b, rng, min(tr.value, cfg.n_trunc) * dt, cfg.levy_branching)
                dx, vx = _single(m, rng, dt, cfg.levy_migration)
            else:
                dl = vl = dx = vx = 0.0
            incs.append((dl, vl, dx, vx))
        u = rng.random(2)
        ya = y.value
        for (tr, _), (dl, vl, dx, vx), ui in zip(parts, incs, u):
            if tr.alive:
                tr.advance(tr.value + dx + dl, vl + vx, t, dt, ui, cfg.bridge)
        (dl1, vl1, dx1, vx1), (dl2, vl2, dx2, vx2) = incs
        u_y = u[0] if parts[0][0].alive or not parts[1][0].alive else u[1]
        y.advance(ya + (dx1 + dx2) + (dl1 + dl2), vl1 + vl2 + vx1 + vx2, t, dt, u_y, cfg.bridge)
        t += dt
    if y.alive:
        _continue_sum(y, b, pair1.migration, pair2.migration, cfg, stream(seed, STREAM_RESTART, STREAM_COUPLING, 1))
    for k, ((tr, _), pr) in enumerate(zip(parts, (pair1, pair2))):
        if tr.alive:
            _continue(tr, pr, cfg, stream(seed, STREAM_RESTART, STREAM_COUPLING, 3 + k), tr.t[-1])
    return y.path(), parts[0][0].path(), parts[1][0].path()
def _continue_sum(track, b, m1, m2, cfg, rng):
    """Continue a CBM whose migration is the sum of two independent drivers."""
    t = track.t[-1]
    while track.alive:
        dt = min(cfg.dt_base, cfg.horizon - t)
        y = track.value
        dl, vl = _single(b, rng, min(y, cfg.n_trunc) * dt, cfg.levy_branching)
        dx1, v1 = _single(m1, rng, dt, cfg.levy_migration)
        dx2, v2 = _single(m2, rng, dt, cfg.levy_migration)
        track.advance(y + dl + dx1 + dx2, vl + v1 + v2, t, dt, rng.random(), cfg.bridge)
        t = track.t[-1]
