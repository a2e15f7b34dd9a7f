"""Numerical application of Levy and CBM generators to test functions.

For a mechanism (sigma, gamma, pi) the Levy generator is

    L f(z) = sigma^2/2 f''(z) + gamma f'(z)
             + int (f(z + h) - f(z) - h f'(z) 1{h <= 1}) pi(dh),

and the CBM generator is A f(z) = L^{Psi_m} f(z) + z L^{Psi_b} f(z).
Jumps below ``delta`` are handled by a Taylor expansion, the rest by
vectorized adaptive Gauss-Kronrod on a dyadic grid in h.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import QuadratureError
from .levy_mech import Atoms, LevyMechanism, MechanismPair, NoJumps
from .quadrature import adaptive_gk
from .scale_fns import ScaleEvalConfig, phi_many, z_many

__all__ = [
    "FunctionProbe",
    "GeneratorValue",
    "exp_probe",
    "constant_probe",
    "phi_probe",
    "z_probe",
    "apply_levy_generator",
    "apply_cbm_generator",
    "ode_residual_phi",
    "ode_residual_psi",
]


@dataclass(frozen=True)
class FunctionProbe:
    """A test function with its first two derivatives.

    All three evaluators accept numpy arrays. ``bound`` is a bound on |f| over
    ``domain`` and ``knots`` lists points where f is not smooth. The optional
    ``envelope(y)`` bounds sup_{u >= y} |f(u)|; it sharpens the truncation of
    the jump integral for decaying probes.
    """

    f: Callable
    df: Callable
    d2f: Callable
    domain: tuple = (0.0, math.inf)
    bound: float = math.inf
    knots: Sequence[float] = field(default_factory=tuple)
    envelope: Optional[Callable] = None

    def contains(self, z):
        lo, hi = self.domain
        return lo <= z < hi


@dataclass(frozen=True)
class GeneratorValue:
    value: float
    abs_error: float

    def __float__(self):
        return self.value


def exp_probe(lam: float) -> FunctionProbe:
    """e_lam(z) = exp(-lam z)."""
    return FunctionProbe(
        lambda z: np.exp(-lam * np.asarray(z, float)),
        lambda z: -lam * np.exp(-lam * np.asarray(z, float)),
        lambda z: lam * lam * np.exp(-lam * np.asarray(z, float)),
        bound=1.0,
        envelope=lambda y: math.exp(-lam * y),
    )


def constant_probe(c: float = 1.0) -> FunctionProbe:
    zero = lambda z: np.zeros_like(np.asarray(z, float))
    return FunctionProbe(lambda z: np.full_like(np.asarray(z, float), c), zero, zero, bound=abs(c))


def _reshape(v, z):
    z = np.asarray(z, float)
    return v.reshape(z.shape) if z.ndim else float(v[0])


def phi_probe(pair, alpha, alphabar, cfg=ScaleEvalConfig()) -> FunctionProbe:
    """Phi_{alpha,alphabar} and its derivatives as a probe."""
    ev = lambda k: (lambda z: _reshape(phi_many(pair, alpha, alphabar, z, cfg, k)[0], z))
    f = ev(0)
    return FunctionProbe(f, ev(1), ev(2), bound=f(0.0), envelope=lambda y: abs(f(y)))


def z_probe(pair, alpha, alphabar, cfg=ScaleEvalConfig()) -> FunctionProbe:
    """Z_{alpha,alphabar} and its derivatives as a probe (decreasing to 0)."""
    ev = lambda k: (lambda z: _reshape(z_many(pair, alpha, alphabar, z, cfg, k)[0], z))
    f = ev(0)
    return FunctionProbe(f, ev(1), ev(2), bound=f(0.0), envelope=lambda y: abs(f(y)))


def _jump_part(jumps, probe: FunctionProbe, z: float, tol: float, delta: float):
    """int (f(z+h) - f(z) - h f'(z) 1{h<=1}) pi(dh) and an error estimate."""
    f0 = float(probe.f(z))
    f1 = float(probe.df(z))
    total = 0.0
    err = 0.0
    for h, m in jumps.atoms_list():
        total += m * (float(probe.f(z + h)) - f0 - h * f1 * (h <= 1.0))
    if isinstance(jumps, Atoms):
        return total, err

    # Taylor expansion on (0, delta], f''' from a difference of f''
    lo = 0.0
    if not jumps.finite_activity:
        f2 = float(probe.d2f(z))
        f3 = (float(probe.d2f(z + delta)) - f2) / delta
        third = f3 / 6.0 * float(jumps.small_moment3(delta))
        total += 0.5 * f2 * float(jumps.small_var(delta)) + third
        err += abs(third)
        lo = delta

    pts = {1.0}
    pts.update(jumps.knots())
    pts.update(k - z for k in probe.knots if k > z)
    if lo > 0:
        pts.update(lo * 2.0 ** np.arange(0, int(np.ceil(np.log2(1.0 / lo))) + 1))
    else:
        pts.update(2.0 ** np.arange(-40, 1))

    # truncate at H where the envelope times the tail mass is negligible
    env = probe.envelope or (lambda y: probe.bound)
    scale = max(abs(f0), 1e-300)
    H = 2.0
    while H < 1e30 and env(z + H) * float(jumps.tail(H)) > 1e-2 * tol * scale:
        H *= 2.0
    # beyond H, f(z+h) is replaced by f(z+H); the difference is at most 2 env
    tail_h = float(jumps.tail(H))
    total += (float(probe.f(z + H)) - f0) * tail_h
    err += 2.0 * env(z + H) * tail_h
    pts.update(2.0 ** np.arange(1, int(np.log2(H)) + 1))
    start = max(lo, 1e-300)
    edges = np.array(sorted(p for p in pts if start <= p <= H))
    if edges[0] > start:
        edges = np.concatenate([[start], edges])

    def g(h):
        fz = np.asarray(probe.f(z + h), float)
        return (fz - f0 - h * f1 * (h <= 1.0)) * jumps.density(h)

    res = adaptive_gk(g, edges, rel_tol=tol, abs_tol=tol * 1e-3 * scale)
    if not res.converged:
        raise QuadratureError("generator jump integral missed its tolerance", float(res.value[0]), float(res.abs_error[0]))
    return total + float(res.value[0]), err + float(res.abs_error[0])


def apply_levy_generator(mech: LevyMechanism, probe: FunctionProbe, z: float, tol: float = 1e-10,
                         delta: float = 1e-4) -> GeneratorValue:
    """L^{Psi} f(z) for the mechanism ``mech``."""
    if not probe.contains(z):
        raise ValueError("z outside the probe domain")
    base = 0.5 * mech.sigma**2 * float(probe.d2f(z)) + mech.gamma * float(probe.df(z))
    jv, je = 0.0, 0.0
    if not isinstance(mech.jumps, NoJumps):
        jv, je = _jump_part(mech.jumps, probe, z, tol, delta)
    return GeneratorValue(base + jv, je)


def apply_cbm_generator(pair: MechanismPair, probe: FunctionProbe, z: float, tol: float = 1e-10) -> GeneratorValue:
    """A f(z) = L^{Psi_m} f(z) + z L^{Psi_b} f(z)."""
    lm = apply_levy_generator(pair.migration, probe, z, tol)
    if z == 0.0:
        return lm
    lb = apply_levy_generator(pair.branching, probe, z, tol)
    return GeneratorValue(lm.value + z * lb.value, lm.abs_error + z * lb.abs_error)


def ode_residual_phi(pair, alpha, alphabar, x_grid, cfg=ScaleEvalConfig(), probe=None, tol=1e-10) -> float:
    """max_x |A Phi(x) - (alpha + alphabar x) Phi(x)| / |Phi(x)|.

    ``probe`` defaults to Phi_{alpha,alphabar} itself; passing another probe
    (for instance Phi at a different alpha) gives a negative control.
    """
    probe = probe or phi_probe(pair, alpha, alphabar, cfg)
    worst = 0.0
    for x in np.atleast_1d(x_grid):
        x = float(x)
        a = apply_cbm_generator(pair, probe, x, tol).value
        f = float(probe.f(x))
        worst = max(worst, abs(a - (alpha + alphabar * x) * f) / abs(f))
    return worst


def ode_residual_psi(pair, alpha, alphabar, x_grid, cfg=ScaleEvalConfig(), probe=None, tol=1e-10) -> float:
    """max_x |A Psi(x) - (alpha + alphabar x) Psi(x) + alphabar x| / (|Psi(x)| + alphabar x).

    Psi = 1 - alpha Z and A kills constants, so the generator is applied to
    the decaying probe Z (``probe`` replaces Z for negative controls).
    """
    probe = probe or z_probe(pair, alpha, alphabar, cfg)
    worst = 0.0
    for x in np.atleast_1d(x_grid):
        x = float(x)
        a = -alpha * apply_cbm_generator(pair, probe, x, tol).value
        f = 1.0 - alpha * float(probe.f(x))
        target = (alpha + alphabar * x) * f - alphabar * x
        worst = max(worst, abs(a - target) / (abs(f) + alphabar * x))
    return worst
