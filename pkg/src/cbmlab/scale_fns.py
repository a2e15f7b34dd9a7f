"""Scale functions and Laplace transforms of first-passage and explosion times.

For a mechanism pair (Psi_b, Psi_m), rates alpha, alphabar >= 0 and
z0 = Psi_b^{-1}(alphabar), the decreasing scale function is

    Phi(x) = int_{z0}^inf dz / (Psi_b(z) - alphabar)
                 * exp(-x z - int_theta^z (Psi_m(u) - alpha) / (Psi_b(u) - alphabar) du)

and, for explosion, Z(x) is the analogous integral over (0, z0) with the
inner integral started at 0.

Numerical scheme
----------------
Near a simple root z0 the inner integrand behaves like -c / (z - z0), with
c = (alpha - Psi_m(z0)) / Psi_b'(z0). The log part is split off exactly, so
the outer integrand is written as ``(s / s_theta)^c exp(-R(s)) / D(s)`` in
s = z - z0, where R is the integral of a bounded function and D is an
accurate difference Psi_b(z0 + s) - Psi_b(z0). R is tabulated once per
(pair, alpha, alphabar, theta) as a piecewise Chebyshev antiderivative on a
dyadic grid accumulating at the singular end; the outer integral is then a
vectorized adaptive Gauss-Kronrod sum over the same grid. The piece below
the finest dyadic level is added analytically from the local power law and
the part above the top level from a geometric extrapolation of the last
panel contributions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import (
    ConditionViolated,
    NotExplosiveError,
    PreconditionError,
    QuadratureError,
    UndecidedByPaper,
)
from .levy_mech import (
    MechanismPair,
    leading_behavior,
    psi,
    psi_inverse,
    psi_prime,
    psi_prime_at_zero,
    psi_shift,
)
from .quadrature import PiecewiseAntiderivative, adaptive_gk

__all__ = [
    "ScaleEvalConfig",
    "ScaleEval",
    "phi",
    "phi_derivatives",
    "first_passage_lt",
    "z_fn",
    "check_explosive",
    "psi_scale",
    "explosion_lt",
    "occupation_lt",
    "hit_zero_prob",
    "HitZero",
]

_EXP_FLOOR = 745.0  # exp(-745) underflows to zero in double precision
_S_CAP = 1e150


@dataclass(frozen=True)
class ScaleEvalConfig:
    """Tolerances for the scale-function quadratures.

    ``max_subdivisions`` bounds the bisection rounds of the outer adaptive rule
    and ``lower_levels`` the number of dyadic levels toward a singular end.
    """

    rel_tol: float = 1e-9
    inner_tol: float = 1e-11
    max_subdivisions: int = 60
    upper_truncation_tail_tol: float = 1e-12
    lower_levels: int = 100

    def __post_init__(self):
        for name in ("rel_tol", "inner_tol", "max_subdivisions", "upper_truncation_tail_tol", "lower_levels"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class ScaleEval:
    value: float
    abs_error_bound: float
    pieces: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise QuadratureError("scale function evaluated to a non-finite value", self.value)
        if not self.abs_error_bound >= 0:
            raise ValueError("abs_error_bound must be nonnegative")

    def __float__(self):
        return self.value


_DEFAULT = ScaleEvalConfig()


def _power_remainder(h_lo, h_2lo, s_lo, exponent=None):
    """int_0^{s_lo} of a function behaving like C s^e, from two samples.

    Returns (value, error). The exponent is taken from the samples at
    s_lo and 2 s_lo unless supplied.
    """
    h_lo = np.asarray(h_lo, float)
    with np.errstate(divide="ignore", invalid="ignore"):
        e_num = np.log2(np.abs(h_2lo) / np.abs(h_lo))
    e = e_num if exponent is None else np.broadcast_to(exponent, h_lo.shape)
    zero = h_lo == 0
    e_safe = np.where(zero, 0.0, e)
    if np.any(~zero & ~(e_safe > -1.0)):
        raise QuadratureError("integrand is not integrable at the singular end")
    val = np.where(zero, 0.0, h_lo * s_lo / (e_safe + 1.0))
    if exponent is None:
        err = np.abs(val) * 1e-2
    else:
        # next-order corrections are O(s) relative to the leading power
        err = np.abs(val) * max(10.0 * s_lo, 1e-15)
    return val, err


class _PhiKernel:
    """Tabulated inner integral and outer quadrature for Phi."""

    def __init__(self, pair: MechanismPair, alpha: float, alphabar: float, theta: float, cfg: ScaleEvalConfig):
        b, m = pair.branching, pair.migration
        self.cfg = cfg
        self.z0 = z0 = psi_inverse(b, alphabar)
        self.n0 = float(psi(m, z0)) - alpha
        db = float(psi_prime(b, z0)) if z0 > 0 else psi_prime_at_zero(b)
        self.db = db
        self.c = -self.n0 / db if db > 0 else 0.0
        if self.c < 0:
            raise ConditionViolated("Psi_m(Psi_b^{-1}(alphabar)) must not exceed alpha")
        if not theta > z0:
            raise PreconditionError("inner-integral delimiter must exceed Psi_b^{-1}(alphabar)")
        self.theta = theta
        self.s_theta = s_theta = theta - z0
        self._b, self._m = b, m

        levels = cfg.lower_levels
        lower = s_theta * 2.0 ** np.arange(-levels, 1)
        self.R = PiecewiseAntiderivative(self._r, lower, s_theta, tol=cfg.inner_tol)

        # for super-singular kernels drop the levels where exp(-R) vanishes
        self.s_lo = lower[0]
        if self.c == 0.0:
            vals = self.R(lower)
            dead = np.nonzero(vals > _EXP_FLOOR + 50)[0]
            if dead.size:
                self.s_lo = lower[dead[-1] + 1] if dead[-1] + 1 < lower.size else s_theta
        self._extend_up()

    # pieces of the integrand -------------------------------------------
    def _D(self, s):
        return psi_shift(self._b, self.z0, s)

    def _r(self, s):
        num = self.n0 + psi_shift(self._m, self.z0, s)
        return num / self._D(s) + self.c / s

    def F(self, s):
        s = np.asarray(s, float)
        with np.errstate(over="ignore", under="ignore", divide="ignore"):
            logp = self.c * np.log(s / self.s_theta) if self.c else 0.0
            return np.exp(logp - self.R(s)) / self._D(s)

    def _panel_mass(self, lo, hi, x=0.0, k=0):
        f = lambda s: self.F(s) * (self.z0 + s) ** k * np.exp(-x * s)
        r = adaptive_gk(f, [lo, hi], rel_tol=self.cfg.rel_tol * 0.1, abs_tol=1e-300)
        return float(r.value[0])

    def _extend_up(self):
        cfg = self.cfg
        hi = self.s_theta
        total = self._panel_mass(self.s_lo, hi) if self.s_lo < hi else 0.0
        prev = None
        while True:
            if hi > _S_CAP:
                raise QuadratureError("upper truncation point not found: tail decays too slowly", total)
            new = 2.0 * hi
            self.R.extend([hi, new])
            mass = self._panel_mass(hi, new)
            hi = new
            total += mass
            if mass == 0.0:
                break
            if prev is not None and prev > 0:
                rho = mass / prev
                if rho < 0.9 and mass * rho / (1.0 - rho) <= cfg.upper_truncation_tail_tol * abs(total):
                    break
            prev = mass
        self.s_top = hi

    # outer integral ----------------------------------------------------
    def evaluate(self, xs, k=0):
        """Return (values, errors, pieces) of the k-th derivative of Phi at xs."""
        xs = np.atleast_1d(np.asarray(xs, float))
        cfg = self.cfg
        z0 = self.z0
        sign = (-1.0) ** k

        def h(s):
            s = np.asarray(s, float)
            w = self.F(s) * (z0 + s) ** k
            return w[:, None] * np.exp(-np.outer(s, xs))

        edges = self.R.panel_edges()
        edges = edges[(edges >= self.s_lo) & (edges <= self.s_top)]
        gk = adaptive_gk(h, edges, rel_tol=cfg.rel_tol * 0.1, abs_tol=1e-300, max_iter=cfg.max_subdivisions)
        value = gk.value.copy()
        err = gk.abs_error.copy()

        # analytic piece on (0, s_lo)
        s_lo = self.s_lo
        h1, h2 = h(np.array([s_lo, 2 * s_lo]))
        if self.c > 0:
            expo = self.c - 1.0 + (k if z0 == 0 else 0)
            rem, rem_err = _power_remainder(h1, h2, s_lo, expo)
        elif float(self.R(np.array([s_lo]))[0]) > _EXP_FLOOR:
            rem, rem_err = np.zeros_like(value), np.zeros_like(value)
        else:
            rem, rem_err = _power_remainder(h1, h2, s_lo)
        value += rem
        err += rem_err

        # geometric tail beyond s_top
        top = self.s_top
        m2 = adaptive_gk(h, [top / 4, top / 2], rel_tol=cfg.rel_tol, abs_tol=1e-300).value
        m1 = adaptive_gk(h, [top / 2, top], rel_tol=cfg.rel_tol, abs_tol=1e-300).value
        with np.errstate(divide="ignore", invalid="ignore"):
            rho = np.where(m2 > 0, m1 / m2, 0.0)
        tail = np.where(m1 <= 0, 0.0, np.where(rho < 1, m1 * rho / (1 - rho), np.inf))
        err += tail

        # exp(-R) carries the inner-integral error as a relative error
        err += np.abs(value) * self.R.error_between(s_lo, top)
        scale = np.exp(-xs * z0)
        value *= scale * sign
        err *= scale
        if not gk.converged or not np.all(np.isfinite(err)):
            bad = int(np.argmax(err))
            raise QuadratureError("outer quadrature for Phi missed its tolerance", float(value[bad]), float(err[bad]))
        pieces = {
            "lower_exponent": (self.c - 1.0) if self.c > 0 else None,
            "lower_cut": self.z0 + s_lo,
            "upper_truncation": self.z0 + top,
            "inner_cache_size": self.R.n_panels,
            "z0": self.z0,
            "c": self.c,
        }
        return value, err, pieces


@lru_cache(maxsize=64)
def _phi_kernel(pair, alpha, alphabar, theta, cfg):
    return _PhiKernel(pair, alpha, alphabar, theta, cfg)


def check_explosive(branching) -> float:
    """Raise unless the branching mechanism is explosive.

    Explosion needs Psi_b^{-1}(0) > 0 and int_0+ dz / |Psi_b(z)| < inf; the
    latter is read off the leading power p of Psi_b at 0+, which is returned.
    """
    if psi_inverse(branching, 0.0) <= 0.0:
        raise NotExplosiveError("Psi_b^{-1}(0) = 0: the branching mechanism is not explosive")
    lead = leading_behavior(branching)
    if lead is None:
        raise ConditionViolated("explosivity of Psi_b cannot be decided from its behaviour at 0+")
    p = lead[1]
    if p >= 1.0:
        raise NotExplosiveError(f"|Psi_b(z)| ~ C z^{p:g} near 0, so int_0+ dz / |Psi_b(z)| diverges")
    return p


class _ZKernel:
    """Integral over (0, z0) defining Z, split at z0 / 2."""

    def __init__(self, pair: MechanismPair, alpha: float, alphabar: float, cfg: ScaleEvalConfig):
        b, m = pair.branching, pair.migration
        self.cfg = cfg
        self._b, self._m = b, m
        self.alpha, self.alphabar = alpha, alphabar
        z0 = psi_inverse(b, alphabar)
        if alphabar == 0.0:
            self.p = check_explosive(b)
        else:
            self.p = None
        self.z0 = z0
        self.n0 = float(psi(m, z0)) - alpha
        if not self.n0 < 0:
            raise ConditionViolated("Z needs Psi_m(Psi_b^{-1}(alphabar)) < alpha")
        self.c = -self.n0 / float(psi_prime(b, z0))
        half = 0.5 * z0
        self.half = half
        L = cfg.lower_levels
        if alphabar == 0.0:
            low_edges = half * 2.0 ** np.arange(-L, 1)
        else:
            low_edges = np.concatenate([[0.0], half * 2.0 ** np.arange(-L, 1)])
        self.low_edges = low_edges
        self.P_low = PiecewiseAntiderivative(self._rho_low, low_edges, low_edges[0], tol=cfg.inner_tol)
        self.p0 = 0.0
        if alphabar == 0.0:
            z_lo = low_edges[0]
            # int_0^{z_lo} rho ~ rho(z_lo) z_lo / (1 - p)
            self.p0 = float(self._rho_low(np.array([z_lo]))[0]) * z_lo / (1.0 - self.p)
        self.up_edges = half * 2.0 ** np.arange(-L, 1)
        self.A_up = PiecewiseAntiderivative(self._rho_up, self.up_edges, half, tol=cfg.inner_tol)
        self.P_half = self.p0 + float(self.P_low(np.array([half]))[0])

    def _rho_low(self, z):
        num = self.alpha - psi(self._m, z)
        den = self.alphabar - psi(self._b, z)
        return num / den - self.c / (self.z0 - z)

    def _den_up(self, t):
        return -psi_shift(self._b, self.z0, -t)

    def _rho_up(self, t):
        num = -self.n0 - psi_shift(self._m, self.z0, -t)
        return num / self._den_up(t) - self.c / t

    def evaluate(self, xs, k=0):
        """Return (values, errors, pieces) of the k-th derivative of Z at xs."""
        xs = np.atleast_1d(np.asarray(xs, float))
        cfg = self.cfg
        z0, c = self.z0, self.c

        def h_low(z):
            P = self.p0 + self.P_low(z)
            w = ((z0 - z) / z0) ** c * np.exp(-P) / (self.alphabar - psi(self._b, z)) * (-z) ** k
            return w[:, None] * np.exp(-np.outer(z, xs))

        def h_up(t):
            P = self.P_half - self.A_up(t)
            w = (t / z0) ** c * np.exp(-P) / self._den_up(t) * (t - z0) ** k
            return w[:, None] * np.exp(-np.outer(z0 - t, xs))

        kw = dict(rel_tol=cfg.rel_tol * 0.1, max_iter=cfg.max_subdivisions)
        g1 = adaptive_gk(h_low, self.P_low.panel_edges(), abs_tol=1e-300, **kw)
        # the upper half only needs accuracy relative to the whole integral
        floor = np.maximum(1e-300, 0.1 * cfg.rel_tol * np.abs(g1.value))
        g2 = adaptive_gk(h_up, self.A_up.panel_edges(), abs_tol=floor, **kw)
        value = g1.value + g2.value
        err = g1.abs_error + g2.abs_error
        t_lo = self.up_edges[0]
        a1, a2 = h_up(np.array([t_lo, 2 * t_lo]))
        rem, rem_err = _power_remainder(a1, a2, t_lo, c - 1.0)
        value += rem
        err += rem_err
        if self.alphabar == 0.0:
            z_lo = self.low_edges[0]
            b1, b2 = h_low(np.array([z_lo, 2 * z_lo]))
            rem, rem_err = _power_remainder(b1, b2, z_lo, k - self.p)
            value += rem
            err += rem_err + np.abs(value) * abs(self.p0) * 1e-2
        err += np.abs(value) * (self.P_low.error + self.A_up.error)
        if not (g1.converged and g2.converged):
            bad = int(np.argmax(err))
            raise QuadratureError("outer quadrature for Z missed its tolerance", float(value[bad]), float(err[bad]))
        pieces = {
            "lower_exponent": c - 1.0,
            "zero_end_exponent": -self.p if self.p is not None else None,
            "upper_truncation": z0,
            "inner_cache_size": self.P_low.n_panels + self.A_up.n_panels,
            "z0": z0,
            "c": c,
        }
        return value, err, pieces


@lru_cache(maxsize=64)
def _z_kernel(pair, alpha, alphabar, cfg):
    return _ZKernel(pair, alpha, alphabar, cfg)


# -- public API --------------------------------------------------------------


def _check_rates(alpha, alphabar):
    if not (alpha >= 0 and alphabar >= 0):
        raise PreconditionError("alpha and alphabar must be nonnegative")


def _regime(pair, alpha, alphabar, theta=None):
    """('boundary', z0) or ('general', theta) per the theorem's two cases."""
    b, m = pair.branching, pair.migration
    z0 = psi_inverse(b, alphabar)
    if float(psi(m, z0)) < alpha:
        if theta is None:
            theta = psi_inverse(m, alpha)
        return "general", float(theta)
    zm = psi_inverse(m, alpha)
    if z0 > 0 and abs(zm - z0) <= 1e-9 * z0:
        return "boundary", z0
    raise ConditionViolated(
        f"Psi_m(Psi_b^{{-1}}(alphabar)) = {float(psi(m, z0)):.6g} >= alpha = {alpha:.6g} "
        "and Psi_b^{-1}(alphabar) != Psi_m^{-1}(alpha): no formula is available"
    )


def phi_many(pair, alpha, alphabar, xs, cfg: ScaleEvalConfig = _DEFAULT, k=0, theta=None):
    """Vectorized Phi^{(k)} at the points ``xs``; returns (values, errors, pieces)."""
    _check_rates(alpha, alphabar)
    xs = np.atleast_1d(np.asarray(xs, float))
    if np.any(xs < 0):
        raise PreconditionError("x must be nonnegative")
    kind, par = _regime(pair, float(alpha), float(alphabar), theta)
    if kind == "boundary":
        vals = (-par) ** k * np.exp(-par * xs)
        return vals, np.zeros_like(vals), {"boundary": True, "Phi": par}
    return _phi_kernel(pair, float(alpha), float(alphabar), par, cfg).evaluate(xs, k)


def phi(pair, alpha, alphabar, x, cfg: ScaleEvalConfig = _DEFAULT, theta=None) -> ScaleEval:
    """Decreasing scale function Phi_{alpha, alphabar}(x).

    ``theta`` overrides the inner-integral delimiter (default Psi_m^{-1}(alpha));
    it rescales Phi by a constant and is exposed for invariance checks.
    """
    v, e, pieces = phi_many(pair, alpha, alphabar, [x], cfg, 0, theta)
    return ScaleEval(float(v[0]), float(e[0]), pieces)


def phi_derivatives(pair, alpha, alphabar, x, k, cfg: ScaleEvalConfig = _DEFAULT) -> float:
    """k-th derivative (k = 1 or 2) of Phi at x > 0."""
    if k not in (1, 2):
        raise PreconditionError("k must be 1 or 2")
    if not x > 0:
        raise PreconditionError("derivatives are evaluated at x > 0 only")
    v, _, _ = phi_many(pair, alpha, alphabar, [x], cfg, k)
    return float(v[0])


def first_passage_lt(pair, alpha, alphabar, x, a, cfg: ScaleEvalConfig = _DEFAULT) -> float:
    """E_x[exp(-alpha sigma_a - alphabar int_0^{sigma_a} Y ds); sigma_a < lifetime]."""
    if not 0 <= a <= x:
        raise PreconditionError("first passage needs 0 <= a <= x")
    if a == x:
        return 1.0
    v, _, _ = phi_many(pair, alpha, alphabar, [x, a], cfg)
    return float(min(1.0, v[0] / v[1]))


def z_fn(pair, alpha, alphabar, x, cfg: ScaleEvalConfig = _DEFAULT) -> ScaleEval:
    """Increasing-side scale function Z_{alpha, alphabar}(x)."""
    v, e, pieces = z_many(pair, alpha, alphabar, [x], cfg)
    return ScaleEval(float(v[0]), float(e[0]), pieces)


def z_many(pair, alpha, alphabar, xs, cfg: ScaleEvalConfig = _DEFAULT, k=0):
    """Vectorized Z^{(k)} at the points ``xs``; returns (values, errors, pieces)."""
    _check_rates(alpha, alphabar)
    xs = np.atleast_1d(np.asarray(xs, float))
    if np.any(xs < 0):
        raise PreconditionError("x must be nonnegative")
    return _z_kernel(pair, float(alpha), float(alphabar), cfg).evaluate(xs, k)


def psi_scale(pair, alpha, x, cfg: ScaleEvalConfig = _DEFAULT) -> ScaleEval:
    """Psi_{alpha,0}(x) = 1 - alpha Z_{alpha,0}(x)."""
    z = z_fn(pair, alpha, 0.0, x, cfg)
    return ScaleEval(1.0 - alpha * z.value, alpha * z.abs_error_bound, z.pieces)


def explosion_lt(pair, alpha, x, a, cfg: ScaleEvalConfig = _DEFAULT) -> float:
    """E_x[exp(-alpha l); l < sigma_a] with l the explosion time."""
    if not 0 <= a <= x:
        raise PreconditionError("explosion transform needs 0 <= a <= x")
    zv, _, _ = z_many(pair, alpha, 0.0, [x, a], cfg)
    if a == x:
        return 0.0
    pv, _, _ = phi_many(pair, alpha, 0.0, [x, a], cfg)
    ps = 1.0 - alpha * zv
    return float(ps[0] - pv[0] / pv[1] * ps[1])


def occupation_lt(pair, alpha, alphabar, x, a, cfg: ScaleEvalConfig = _DEFAULT) -> float:
    """E_x[int_0^{sigma_a ^ l} exp(-alpha s - alphabar int_0^s Y du) ds]."""
    if not alphabar > 0:
        raise PreconditionError("occupation transform needs alphabar > 0")
    if not 0 <= a <= x:
        raise PreconditionError("occupation transform needs 0 <= a <= x")
    zv, _, _ = z_many(pair, alpha, alphabar, [x, a], cfg)
    if a == x:
        return 0.0
    pv, _, _ = phi_many(pair, alpha, alphabar, [x, a], cfg)
    return float(max(0.0, zv[0] - pv[0] / pv[1] * zv[1]))


@dataclass(frozen=True)
class HitZero:
    """Probability of ever hitting zero; ``certain`` marks a proven value of 1."""

    probability: float
    certain: bool
    route: str

    def __iter__(self):
        return iter((self.probability, self.certain))


def _abelian_diverges(pair):
    """Divergence of int_0 dz/Psi_b exp(int_z^theta Psi_m/Psi_b) from power asymptotics."""
    b, m = pair.branching, pair.migration
    lb, lm = leading_behavior(b), leading_behavior(m)
    if lb is None or lm is None:
        raise UndecidedByPaper(
            "a logarithmic factor in the small-z behaviour of a mechanism leaves "
            "the hitting-zero integral test inconclusive"
        )
    (bc, p), (mc, q) = lb, lm
    d = q - p
    if math.isclose(d, -1.0, abs_tol=1e-12):
        return p + mc / bc >= 1.0
    if d > -1.0:
        return True
    return mc > 0.0


def hit_zero_prob(pair, x, cfg: ScaleEvalConfig = _DEFAULT) -> HitZero:
    """P_x(sigma_0 < inf) where the available criteria decide it."""
    if x < 0:
        raise PreconditionError("x must be nonnegative")
    if x == 0:
        return HitZero(1.0, True, "start")
    b, m = pair.branching, pair.migration
    db0 = psi_prime_at_zero(b)
    if db0 >= 0:
        if db0 > 0 and psi_prime_at_zero(m) > -math.inf:
            return HitZero(1.0, True, "slopes")
        if _abelian_diverges(pair):
            return HitZero(1.0, True, "integral-test")
        ker = _phi_kernel(pair, 0.0, 0.0, 1.0, cfg)
        v, _, _ = ker.evaluate([x, 0.0])
        return HitZero(float(v[0] / v[1]), False, "ratio")
    zb = psi_inverse(b, 0.0)
    zm = psi_inverse(m, 0.0)
    if zm >= zb * (1 - 1e-9):
        v, _, _ = phi_many(pair, 0.0, 0.0, [x, 0.0], cfg)
        return HitZero(float(v[0] / v[1]), False, "supercritical")
    raise UndecidedByPaper("Psi_b'(0+) < 0 and Psi_m^{-1}(0) < Psi_b^{-1}(0): not covered")
