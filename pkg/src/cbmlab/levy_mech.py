"""Laplace exponents of spectrally positive Levy processes.

A mechanism is the triplet (sigma, gamma, pi) with

    Psi(x) = sigma^2 x^2 / 2 - gamma x + int (exp(-x h) - 1 + x h 1{h <= 1}) pi(dh)

for x >= 0. The compensation cutoff is fixed at h = 1.

Each jump family below knows its own contribution to Psi in closed form
(quadrature is only used for the tail extension of :class:`TabulatedTail`),
together with the moments and samplers the path simulators need.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate, special

from .errors import DegenerateMechanismError, NotInvertibleError, QuadratureError

EULER_GAMMA = 0.5772156649015329

__all__ = [
    "JumpMeasure",
    "NoJumps",
    "StableTail",
    "CompoundExponential",
    "Atoms",
    "TabulatedTail",
    "LevyMechanism",
    "MechanismPair",
    "psi",
    "psi_shift",
    "psi_prime",
    "psi_prime_at_zero",
    "psi_inverse",
    "check_nondegenerate",
    "leading_behavior",
    "jumps_from_dict",
]


def _unique_map(fn, x):
    """Apply a scalar function over the distinct entries of ``x`` only."""
    x = np.asarray(x, float)
    u, inv = np.unique(x, return_inverse=True)
    return np.array([fn(float(v)) for v in u], float)[inv].reshape(x.shape)


def _quad(f, a, b, what, **kw):
    kw.setdefault("epsabs", 1e-13)
    kw.setdefault("epsrel", 1e-12)
    kw.setdefault("limit", 200)
    val, err = integrate.quad(f, a, b, **kw)
    if not np.isfinite(val) or err > 1e-10 * (1.0 + abs(val)):
        raise QuadratureError(f"quadrature for {what} did not converge", val, err)
    return val, err


class JumpMeasure:
    """Base class for Levy measures carried by (0, inf).

    Subclasses implement the jump part of the exponent and the pieces of the
    Levy-Ito decomposition used when simulating: tail masses, the signed
    compensator ``comp(eps) = int_{(eps, 1]} h pi(dh)`` (negative for eps > 1),
    the small-jump variance and a sampler for the sum of jumps above a cutoff.
    """

    finite_activity: bool = True

    # -- exponent ---------------------------------------------------------
    def jump_psi(self, x):
        raise NotImplementedError

    def jump_psi_shift(self, v, s):
        """jump_psi(v + s) - jump_psi(v), accurate for small ``s``."""
        v = np.asarray(v, float)
        s = np.asarray(s, float)
        return self.jump_psi(v + s) - self.jump_psi(v)

    def jump_psi_prime(self, x):
        raise NotImplementedError

    # -- moments ----------------------------------------------------------
    def small_mean(self) -> float:
        """int_{(0,1]} h pi(dh); may be inf."""
        raise NotImplementedError

    def large_mean(self) -> float:
        """int_{(1,inf)} h pi(dh); may be inf."""
        raise NotImplementedError

    def second_moment(self) -> float:
        """int h^2 pi(dh); may be inf."""
        raise NotImplementedError

    def tail(self, eps):
        raise NotImplementedError

    def tail_inverse(self, mass):
        raise NotImplementedError

    def comp(self, eps):
        raise NotImplementedError

    def small_var(self, eps):
        raise NotImplementedError

    def asymptotic_terms(self):
        """Non-linear terms of jump_psi as x -> 0+.

        Returns ``(terms, irregular)``: ``terms`` is a list of (power, coef)
        with power in (0, 1) or (1, 2]; ``irregular`` lists powers at which a
        logarithmic factor appears (no pure power law).
        """
        raise NotImplementedError

    # -- simulation -------------------------------------------------------
    def cutoff(self, dtheta, eps_base, cap):
        """Per-path small-jump cutoff so the expected jump count stays <= cap."""
        return np.zeros_like(np.asarray(dtheta, float))

    def jump_sum(self, rng, dtheta, eps):
        """Sum of the jumps larger than ``eps`` over time lengths ``dtheta``."""
        raise NotImplementedError

    def sample_sizes(self, rng, n, eps):
        """``n`` i.i.d. jump sizes from pi restricted to (eps, inf), normalized."""
        raise NotImplementedError

    # -- integration --------------------------------------------------------
    def density(self, h):
        """Lebesgue density of pi (zero for purely atomic measures)."""
        return np.zeros_like(np.asarray(h, float))

    def atoms_list(self):
        """Atoms of pi as (location, mass) pairs."""
        return ()

    def knots(self):
        """Points where the density is not smooth."""
        return ()

    def integrate(self, g: Callable[[float], float], delta: float = 0.0):
        """int_{(delta, inf)} g(h) pi(dh) -> (value, abs_error)."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class NoJumps(JumpMeasure):
    finite_activity = True

    def jump_psi(self, x):
        return np.zeros_like(np.asarray(x, float))

    def jump_psi_shift(self, v, s):
        return np.zeros(np.broadcast(np.asarray(v), np.asarray(s)).shape)

    def jump_psi_prime(self, x):
        return np.zeros_like(np.asarray(x, float))

    def small_mean(self):
        return 0.0

    def large_mean(self):
        return 0.0

    def second_moment(self):
        return 0.0

    def tail(self, eps):
        return np.zeros_like(np.asarray(eps, float))

    def tail_inverse(self, mass):
        return np.zeros_like(np.asarray(mass, float))

    def comp(self, eps):
        return np.zeros_like(np.asarray(eps, float))

    def small_var(self, eps):
        return np.zeros_like(np.asarray(eps, float))

    def asymptotic_terms(self):
        return [], []

    def jump_sum(self, rng, dtheta, eps):
        return np.zeros_like(np.asarray(dtheta, float))

    def sample_sizes(self, rng, n, eps):
        return np.empty(0)

    def integrate(self, g, delta=0.0):
        return 0.0, 0.0

    def to_dict(self):
        return {"kind": "none"}


@dataclass(frozen=True)
class StableTail(JumpMeasure):
    """pi(dh) = c h^(-1-beta) dh on (0, inf), 0 < beta < 2."""

    beta: float
    c: float
    finite_activity = False

    def __post_init__(self):
        if not (0.0 < self.beta < 2.0):
            raise ValueError(f"StableTail needs 0 < beta < 2, got {self.beta}")
        if not self.c > 0.0:
            raise ValueError("StableTail needs c > 0")

    @property
    def _g(self):
        return special.gamma(-self.beta) if self.beta != 1.0 else np.nan

    def jump_psi(self, x):
        x = np.asarray(x, float)
        b, c = self.beta, self.c
        if b == 1.0:
            with np.errstate(divide="ignore", invalid="ignore"):
                out = c * (special.xlogy(x, x) + (EULER_GAMMA - 1.0) * x)
            return out
        return c * self._g * x**b - c * x / (b - 1.0)

    def jump_psi_shift(self, v, s):
        v = np.asarray(v, float)
        s = np.asarray(s, float)
        b, c = self.beta, self.c
        vpos = v > 0
        vs = np.where(vpos, v, 1.0)
        if b == 1.0:
            with np.errstate(divide="ignore", invalid="ignore"):
                tail = np.where(vpos, v * np.log1p(s / vs), 0.0)
                main = special.xlogy(s, v + s)
            return c * (main + tail + (EULER_GAMMA - 1.0) * s)
        with np.errstate(invalid="ignore"):
            pdiff = np.where(vpos, vs**b * np.expm1(b * np.log1p(s / vs)), np.abs(s) ** b)
        return c * self._g * pdiff - c * s / (b - 1.0)

    def jump_psi_prime(self, x):
        x = np.asarray(x, float)
        b, c = self.beta, self.c
        if b == 1.0:
            return c * (np.log(x) + EULER_GAMMA)
        return c * self._g * b * x ** (b - 1.0) - c / (b - 1.0)

    def small_mean(self):
        return self.c / (1.0 - self.beta) if self.beta < 1.0 else math.inf

    def large_mean(self):
        return self.c / (self.beta - 1.0) if self.beta > 1.0 else math.inf

    def second_moment(self):
        return math.inf

    def tail(self, eps):
        eps = np.asarray(eps, float)
        with np.errstate(divide="ignore"):
            return self.c * eps ** (-self.beta) / self.beta

    def tail_inverse(self, mass):
        mass = np.asarray(mass, float)
        with np.errstate(divide="ignore"):
            return (self.c / (self.beta * mass)) ** (1.0 / self.beta)

    def comp(self, eps):
        eps = np.asarray(eps, float)
        b, c = self.beta, self.c
        if b == 1.0:
            return -c * np.log(eps)
        return c * (1.0 - eps ** (1.0 - b)) / (1.0 - b)

    def small_var(self, eps):
        eps = np.asarray(eps, float)
        return self.c * eps ** (2.0 - self.beta) / (2.0 - self.beta)

    def small_moment3(self, eps):
        """int_{(0, eps]} h^3 pi(dh)."""
        return self.c * np.asarray(eps, float) ** (3.0 - self.beta) / (3.0 - self.beta)

    def asymptotic_terms(self):
        if self.beta == 1.0:
            return [], [1.0]
        return [(self.beta, self.c * self._g)], []

    def cutoff(self, dtheta, eps_base, cap):
        dtheta = np.asarray(dtheta, float)
        with np.errstate(divide="ignore"):
            e = self.tail_inverse(cap / np.maximum(dtheta, 1e-300))
        return np.maximum(eps_base, e)

    def jump_sum(self, rng, dtheta, eps):
        dtheta = np.asarray(dtheta, float)
        eps = np.broadcast_to(np.asarray(eps, float), dtheta.shape)
        counts = rng.poisson(dtheta * self.tail(eps))
        total = int(counts.sum())
        out = np.zeros(dtheta.shape)
        if total:
            owner = np.repeat(np.arange(dtheta.size), counts.ravel())
            sizes = eps.ravel()[owner] * rng.random(total) ** (-1.0 / self.beta)
            out.ravel()[:] = np.bincount(owner, weights=sizes, minlength=dtheta.size)
        return out

    def sample_sizes(self, rng, n, eps):
        return eps * rng.random(n) ** (-1.0 / self.beta)

    def density(self, h):
        return self.c * np.asarray(h, float) ** (-1.0 - self.beta)

    def integrate(self, g, delta=0.0):
        b, c = self.beta, self.c
        dens = lambda h: g(h) * c * h ** (-1.0 - b)
        total = err = 0.0
        for lo, hi in ((delta, 1.0), (max(delta, 1.0), math.inf)):
            if hi > lo:
                v, e = _quad(dens, lo, hi, "stable jump integral")
                total += v
                err += e
        return total, err

    def to_dict(self):
        return {"kind": "stable", "beta": self.beta, "c": self.c}


@dataclass(frozen=True)
class CompoundExponential(JumpMeasure):
    """pi = rate * Exponential density with the given mean."""

    rate: float
    mean: float
    finite_activity = True

    def __post_init__(self):
        if not (self.rate > 0 and self.mean > 0):
            raise ValueError("CompoundExponential needs rate > 0 and mean > 0")

    def _mom1(self, lo, hi):
        # int_lo^hi h pi(dh)
        mu, lam = self.mean, self.rate
        F = lambda t: -np.exp(-t / mu) * (t + mu)
        return lam * (F(hi) - F(lo))

    def jump_psi(self, x):
        x = np.asarray(x, float)
        lam, mu = self.rate, self.mean
        return -lam * mu * x / (1.0 + mu * x) + self.small_mean() * x

    def jump_psi_shift(self, v, s):
        v = np.asarray(v, float)
        s = np.asarray(s, float)
        lam, mu = self.rate, self.mean
        return -lam * mu * s / ((1.0 + mu * (v + s)) * (1.0 + mu * v)) + self.small_mean() * s

    def jump_psi_prime(self, x):
        x = np.asarray(x, float)
        lam, mu = self.rate, self.mean
        return -lam * mu / (1.0 + mu * x) ** 2 + self.small_mean()

    def small_mean(self):
        return float(self._mom1(0.0, 1.0))

    def large_mean(self):
        return float(self.rate * math.exp(-1.0 / self.mean) * (1.0 + self.mean))

    def second_moment(self):
        return 2.0 * self.rate * self.mean**2

    def tail(self, eps):
        return self.rate * np.exp(-np.asarray(eps, float) / self.mean)

    def tail_inverse(self, mass):
        mass = np.asarray(mass, float)
        return np.maximum(0.0, self.mean * np.log(self.rate / mass))

    def comp(self, eps):
        return self._mom1(np.asarray(eps, float), 1.0)

    def small_var(self, eps):
        eps = np.asarray(eps, float)
        mu, lam = self.mean, self.rate
        F = lambda t: -np.exp(-t / mu) * (t * t + 2 * mu * t + 2 * mu * mu)
        return lam * (F(eps) - F(0.0))

    def asymptotic_terms(self):
        return [(2.0, 0.5 * self.second_moment())], []

    def jump_sum(self, rng, dtheta, eps):
        # all jumps are simulated: a Poisson number of exponentials sums to a gamma variate
        dtheta = np.asarray(dtheta, float)
        n = rng.poisson(dtheta * self.rate)
        return rng.gamma(n, self.mean) if n.ndim else float(rng.gamma(n, self.mean))

    def sample_sizes(self, rng, n, eps):
        return eps + rng.exponential(self.mean, n)

    def density(self, h):
        return self.rate / self.mean * np.exp(-np.asarray(h, float) / self.mean)

    def integrate(self, g, delta=0.0):
        lam, mu = self.rate, self.mean
        dens = lambda h: g(h) * lam / mu * math.exp(-h / mu)
        total = err = 0.0
        for lo, hi in ((delta, 1.0), (max(delta, 1.0), math.inf)):
            if hi > lo:
                v, e = _quad(dens, lo, hi, "exponential jump integral")
                total += v
                err += e
        return total, err

    def to_dict(self):
        return {"kind": "compound_exponential", "rate": self.rate, "mean": self.mean}


@dataclass(frozen=True)
class Atoms(JumpMeasure):
    """Finitely many atoms: pi = sum_i mass_i delta_{h_i}."""

    atoms: tuple
    finite_activity = True

    def __post_init__(self):
        atoms = tuple((float(h), float(m)) for h, m in self.atoms)
        if not atoms or any(h <= 0 or m <= 0 for h, m in atoms):
            raise ValueError("Atoms needs positive locations and masses")
        object.__setattr__(self, "atoms", atoms)

    @property
    def _h(self):
        return np.array([a[0] for a in self.atoms])

    @property
    def _m(self):
        return np.array([a[1] for a in self.atoms])

    def jump_psi(self, x):
        x = np.asarray(x, float)[..., None]
        h, m = self._h, self._m
        return np.sum(m * (np.expm1(-x * h) + x * h * (h <= 1.0)), axis=-1)

    def jump_psi_shift(self, v, s):
        v = np.asarray(v, float)[..., None]
        s = np.asarray(s, float)[..., None]
        h, m = self._h, self._m
        return np.sum(m * (np.exp(-v * h) * np.expm1(-s * h) + s * h * (h <= 1.0)), axis=-1)

    def jump_psi_prime(self, x):
        x = np.asarray(x, float)[..., None]
        h, m = self._h, self._m
        return np.sum(m * h * ((h <= 1.0) - np.exp(-x * h)), axis=-1)

    def small_mean(self):
        h, m = self._h, self._m
        return float(np.sum(m * h * (h <= 1.0)))

    def large_mean(self):
        h, m = self._h, self._m
        return float(np.sum(m * h * (h > 1.0)))

    def second_moment(self):
        return float(np.sum(self._m * self._h**2))

    def tail(self, eps):
        eps = np.asarray(eps, float)[..., None]
        return np.sum(self._m * (self._h > eps), axis=-1)

    def tail_inverse(self, mass):
        return np.zeros_like(np.asarray(mass, float))

    def comp(self, eps):
        eps = np.asarray(eps, float)[..., None]
        h, m = self._h, self._m
        inner = (h > eps) & (h <= 1.0)
        outer = (h > 1.0) & (h <= eps)
        return np.sum(m * h * (inner.astype(float) - outer), axis=-1)

    def small_var(self, eps):
        eps = np.asarray(eps, float)[..., None]
        return np.sum(self._m * self._h**2 * (self._h <= eps), axis=-1)

    def asymptotic_terms(self):
        return [(2.0, 0.5 * self.second_moment())], []

    def jump_sum(self, rng, dtheta, eps):
        dtheta = np.asarray(dtheta, float)
        out = np.zeros(dtheta.shape)
        for h, m in self.atoms:
            out = out + h * rng.poisson(dtheta * m) * (h > eps)
        return out

    def sample_sizes(self, rng, n, eps):
        h, m = self._h, self._m
        keep = h > eps
        p = m[keep] / m[keep].sum()
        return rng.choice(h[keep], size=n, p=p)

    def atoms_list(self):
        return self.atoms

    def integrate(self, g, delta=0.0):
        return float(sum(m * g(h) for h, m in self.atoms if h > delta)), 0.0

    def to_dict(self):
        return {"kind": "atoms", "atoms": [list(a) for a in self.atoms]}


@dataclass(frozen=True)
class TabulatedTail(JumpMeasure):
    """Tail function pi((h, inf)) given on a grid, linear in between.

    The first grid point is the support lower bound (> 0). Beyond the last
    grid point ``h_n`` the tail is continued according to ``extension``:

    * ``"none"``   -- the tail vanishes (requires ``tail[-1] == 0``);
    * ``"power"``  -- ``T_n (h / h_n)^(-kappa)``;
    * ``"log"``    -- ``T_n log(h_n) / log(h)`` (slowly varying).

    Extensions other than ``"none"`` need ``h_n >= 1`` (``> 1`` for log).
    A power tail with ``kappa <= 1`` or a log tail has an infinite mean,
    so the exponent's derivative at 0+ is -inf.
    """

    h: tuple
    tail_values: tuple
    extension: str = "none"
    kappa: float = 0.0
    finite_activity = True

    def __post_init__(self):
        h = np.asarray(self.h, float)
        t = np.asarray(self.tail_values, float)
        if h.ndim != 1 or h.size < 2 or h.size != t.size:
            raise ValueError("TabulatedTail needs matching grids of length >= 2")
        if h[0] <= 0:
            raise ValueError("TabulatedTail support lower bound must be > 0")
        if np.any(np.diff(h) <= 0):
            raise ValueError("TabulatedTail grid must be strictly increasing")
        if np.any(t < 0) or np.any(np.diff(t) > 0):
            raise ValueError("tail masses must be nonnegative and nonincreasing")
        if self.extension == "none":
            if t[-1] != 0.0:
                raise ValueError("extension 'none' needs a zero final tail value")
        elif self.extension == "power":
            if not self.kappa > 0 or h[-1] < 1.0:
                raise ValueError("power extension needs kappa > 0 and h_n >= 1")
        elif self.extension == "log":
            if h[-1] <= 1.0:
                raise ValueError("log extension needs h_n > 1")
        else:
            raise ValueError(f"unknown extension {self.extension!r}")
        object.__setattr__(self, "h", tuple(h.tolist()))
        object.__setattr__(self, "tail_values", tuple(t.tolist()))

    @property
    def lower_bound(self):
        return self.h[0]

    def _pieces(self):
        h = np.asarray(self.h)
        t = np.asarray(self.tail_values)
        return h[:-1], h[1:], (t[:-1] - t[1:]) / np.diff(h)

    def _ext_density(self, x):
        hn, tn = self.h[-1], self.tail_values[-1]
        if self.extension == "power":
            return self.kappa * tn * hn**self.kappa * x ** (-self.kappa - 1.0)
        if self.extension == "log":
            return tn * math.log(hn) / (x * math.log(x) ** 2)
        return 0.0

    def _ext_tail(self, x):
        hn, tn = self.h[-1], self.tail_values[-1]
        if self.extension == "power":
            return tn * (x / hn) ** (-self.kappa)
        if self.extension == "log":
            return tn * math.log(hn) / math.log(x)
        return 0.0

    def _ext_mass_log(self, u):
        """h times the extension density at h = e^u."""
        hn, tn = self.h[-1], self.tail_values[-1]
        if self.extension == "power":
            return self.kappa * tn * math.exp(-self.kappa * (u - math.log(hn)))
        if self.extension == "log":
            return tn * math.log(hn) / (u * u)
        return 0.0

    def _ext_tail_log(self, u):
        hn, tn = self.h[-1], self.tail_values[-1]
        if self.extension == "power":
            return tn * math.exp(-self.kappa * (u - math.log(hn)))
        if self.extension == "log":
            return tn * math.log(hn) / u
        return 0.0

    def _moment(self, k, lo, hi):
        """int_{(lo, hi]} h^k pi(dh) for k in {1, 2}."""
        if hi <= lo:
            return 0.0
        a, b, rho = self._pieces()
        aa, bb = np.clip(a, lo, hi), np.clip(b, lo, hi)
        total = float(np.sum(rho * (bb ** (k + 1) - aa ** (k + 1)) / (k + 1)))
        hn = self.h[-1]
        if self.extension != "none" and hi > hn:
            l2 = max(lo, hn)
            if self.extension == "power" and math.isinf(hi):
                p = k - self.kappa
                if p >= 0:
                    return math.inf
                total += self.kappa * self.tail_values[-1] * hn**self.kappa * (-(l2**p)) / p
            elif self.extension == "log" and math.isinf(hi):
                return math.inf
            else:
                total += _quad(lambda x: x**k * self._ext_density(x), l2, hi, "tail moment")[0]
        return total

    def _psi_scalar(self, x):
        if x == 0.0:
            return 0.0
        a, b, rho = self._pieces()
        val = 0.0
        for lo, hi, r in zip(a, b, rho):
            if r == 0.0:
                continue
            # int (e^{-xh} - 1) r dh + x r int_{(lo,hi] cap (0,1]} h dh
            q = x * (hi - lo)
            # (1 - e^{-q}) / x, by series when q is tiny or x is subnormal
            frac = (hi - lo) * (1.0 - q / 2.0 + q * q / 6.0) if q < 1e-5 else -math.expm1(-q) / x
            val += r * (math.exp(-x * lo) * frac - (hi - lo))
            c1 = min(hi, 1.0)
            if c1 > lo:
                val += r * x * (c1 * c1 - lo * lo) / 2.0
        if self.extension != "none":
            hn = self.h[-1]
            # work in u = log h; beyond h = 60 / x the factor e^{-xh} is negligible
            lhn, lx = math.log(hn), math.log(x)
            lH = max(lhn, math.log(60.0) - lx)
            if lH > lhn:
                v, _ = _quad(lambda u: math.expm1(-math.exp(u + lx)) * self._ext_mass_log(u), lhn, lH, "tail exponent")
                val += v
            val -= self._ext_tail_log(lH)
        return val

    def jump_psi(self, x):
        x = np.asarray(x, float)
        return np.vectorize(self._psi_scalar, otypes=[float])(x)

    def jump_psi_prime(self, x):
        def one(xx):
            a, b, rho = self._pieces()
            val = 0.0
            for lo, hi, r in zip(a, b, rho):
                # int h (1{h<=1} - e^{-xh}) r dh
                F = lambda t: -math.exp(-xx * t) * (t / xx + 1.0 / xx**2)
                val -= r * (F(hi) - F(lo))
                c1 = min(hi, 1.0)
                if c1 > lo:
                    val += r * (c1 * c1 - lo * lo) / 2.0
            if self.extension != "none":
                val -= _quad(lambda h: h * math.exp(-xx * h) * self._ext_density(h), self.h[-1], math.inf, "tail derivative")[0]
            return val

        return np.vectorize(one, otypes=[float])(np.asarray(x, float))

    def small_mean(self):
        return self._moment(1, 0.0, 1.0)

    def large_mean(self):
        return self._moment(1, 1.0, math.inf)

    def second_moment(self):
        return self._moment(2, 0.0, math.inf)

    def _tail_scalar(self, e):
        h, t = self.h, self.tail_values
        if e < h[0]:
            return t[0]
        if e >= h[-1]:
            return self._ext_tail(e) if e > h[-1] else t[-1]
        return float(np.interp(e, h, t))

    def tail(self, eps):
        return _unique_map(self._tail_scalar, eps)

    def _tail_inverse_scalar(self, m):
        h, t = self.h, self.tail_values
        if m >= t[0]:
            return 0.0
        if m >= t[-1]:
            # piecewise linear decreasing tail: invert on the reversed grid
            return float(np.interp(m, t[::-1], h[::-1]))
        hn, tn = h[-1], t[-1]
        if self.extension == "power":
            return hn * (tn / m) ** (1.0 / self.kappa)
        if self.extension == "log":
            u = tn * math.log(hn) / m
            return math.exp(u) if u < 709.0 else math.inf  # beyond double range
        return hn

    def tail_inverse(self, mass):
        return np.vectorize(self._tail_inverse_scalar, otypes=[float])(np.asarray(mass, float))

    def comp(self, eps):
        def one(e):
            return self._moment(1, e, 1.0) if e <= 1.0 else -self._moment(1, 1.0, e)

        return _unique_map(one, eps)

    def small_var(self, eps):
        return _unique_map(lambda e: self._moment(2, 0.0, e), eps)

    def asymptotic_terms(self):
        if self.extension == "none":
            return [(2.0, 0.5 * self.second_moment())], []
        if self.extension == "log":
            return [], [0.0]
        k = self.kappa
        if k in (1.0, 2.0):
            return [], [k]
        # density ~ kappa T_n h_n^kappa h^(-1-kappa): a stable-type term
        cst = k * self.tail_values[-1] * self.h[-1] ** k
        terms = [(k, cst * special.gamma(-k))]
        if k > 2.0:
            terms = [(2.0, 0.5 * self.second_moment())]
        return terms, []

    def cutoff(self, dtheta, eps_base, cap):
        dtheta = np.asarray(dtheta, float)
        over = dtheta * self.tail_values[0] > cap
        if not np.any(over):
            return np.zeros_like(dtheta)
        out = np.zeros_like(dtheta)
        out[over] = self.tail_inverse(cap / dtheta[over])
        return out

    def jump_sum(self, rng, dtheta, eps):
        dtheta = np.asarray(dtheta, float)
        eps = np.broadcast_to(np.asarray(eps, float), dtheta.shape)
        tails = self.tail(eps)
        counts = rng.poisson(dtheta * tails)
        total = int(counts.sum())
        out = np.zeros(dtheta.shape)
        if total:
            owner = np.repeat(np.arange(dtheta.size), counts.ravel())
            u = rng.random(total)
            sizes = self.tail_inverse(u * tails.ravel()[owner])
            out.ravel()[:] = np.bincount(owner, weights=sizes, minlength=dtheta.size)
        return out

    def sample_sizes(self, rng, n, eps):
        return self.tail_inverse(rng.random(n) * self._tail_scalar(eps))

    def density(self, h):
        h = np.asarray(h, float)
        a, b, rho = self._pieces()
        idx = np.searchsorted(np.asarray(self.h), h, side="left") - 1
        inside = (idx >= 0) & (idx < rho.size) & (h > self.h[0])
        out = np.where(inside, rho[np.clip(idx, 0, rho.size - 1)], 0.0)
        if self.extension != "none":
            beyond = h > self.h[-1]
            if np.any(beyond):
                out = out.copy()
                out[beyond] = np.vectorize(self._ext_density, otypes=[float])(h[beyond])
        return out

    def knots(self):
        return self.h

    def integrate(self, g, delta=0.0):
        a, b, rho = self._pieces()
        total = err = 0.0
        for lo, hi, r in zip(a, b, rho):
            lo = max(lo, delta)
            if hi <= lo or r == 0.0:
                continue
            pts = [1.0] if lo < 1.0 < hi else None
            v, e = _quad(lambda h: g(h) * r, lo, hi, "tabulated jump integral", points=pts)
            total += v
            err += e
        if self.extension != "none":
            lo = max(self.h[-1], delta)
            v, e = _quad(lambda h: g(h) * self._ext_density(h), lo, math.inf, "tabulated tail integral")
            total += v
            err += e
        return total, err

    def to_dict(self):
        d = {"kind": "tabulated", "h": list(self.h), "tail": list(self.tail_values), "extension": self.extension}
        if self.extension == "power":
            d["kappa"] = self.kappa
        return d


def jumps_from_dict(d: Optional[dict]) -> JumpMeasure:
    if not d:
        return NoJumps()
    kind = d.get("kind", "none")
    if kind == "none":
        return NoJumps()
    if kind == "stable":
        return StableTail(float(d["beta"]), float(d["c"]))
    if kind == "compound_exponential":
        return CompoundExponential(float(d["rate"]), float(d["mean"]))
    if kind == "atoms":
        return Atoms(tuple(tuple(a) for a in d["atoms"]))
    if kind == "tabulated":
        return TabulatedTail(tuple(d["h"]), tuple(d["tail"]), d.get("extension", "none"), float(d.get("kappa", 0.0)))
    raise ValueError(f"unknown jump kind {kind!r}")


@dataclass(frozen=True)
class LevyMechanism:
    """Laplace exponent of a spectrally positive Levy process."""

    sigma: float = 0.0
    gamma: float = 0.0
    jumps: JumpMeasure = field(default_factory=NoJumps)

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ValueError("sigma must be >= 0")
        if not math.isfinite(self.gamma):
            raise ValueError("gamma must be finite")

    # Psi and friends ------------------------------------------------------
    def __call__(self, x):
        return psi(self, x)

    @property
    def is_subordinator(self) -> bool:
        """True when the process has a.s. nondecreasing paths."""
        if self.sigma > 0:
            return False
        m = self.jumps.small_mean()
        if math.isinf(m):
            return False
        return self.gamma - m >= 0.0

    @classmethod
    def from_dict(cls, d: dict) -> "LevyMechanism":
        return cls(float(d.get("sigma", 0.0)), float(d.get("gamma", 0.0)), jumps_from_dict(d.get("jumps")))

    def to_dict(self) -> dict:
        return {"sigma": self.sigma, "gamma": self.gamma, "jumps": self.jumps.to_dict()}

    @classmethod
    def linear(cls, slope: float) -> "LevyMechanism":
        """Psi(x) = slope * x (a pure drift of -slope)."""
        return cls(0.0, -float(slope))


@dataclass(frozen=True)
class MechanismPair:
    """Branching and migration mechanisms of a CBM.

    Degenerate pairs (either process a.s. nondecreasing) are rejected here,
    unless ``allow_degenerate`` is set (needed only for internal couplings
    that use a constant migration).
    """

    branching: LevyMechanism
    migration: LevyMechanism
    allow_degenerate: bool = field(default=False, compare=False, repr=False)

    def __post_init__(self):
        if not self.allow_degenerate and not check_nondegenerate(self):
            which = "branching" if self.branching.is_subordinator else "migration"
            raise DegenerateMechanismError(
                f"{which} mechanism drives a.s. nondecreasing paths; "
                "both processes must be non-degenerate (not subordinators)"
            )

    @classmethod
    def from_dict(cls, d: dict) -> "MechanismPair":
        return cls(LevyMechanism.from_dict(d["branching"]), LevyMechanism.from_dict(d["migration"]))

    def to_dict(self) -> dict:
        return {"branching": self.branching.to_dict(), "migration": self.migration.to_dict()}


# -- module level operations ------------------------------------------------


def psi(mech: LevyMechanism, x):
    """Evaluate Psi at x >= 0 (scalar or array)."""
    xa = np.asarray(x, float)
    if np.any(xa < 0):
        raise ValueError("Psi is only defined on [0, inf)")
    out = 0.5 * mech.sigma**2 * xa * xa - mech.gamma * xa + mech.jumps.jump_psi(xa)
    return float(out) if np.ndim(out) == 0 else out


def psi_shift(mech: LevyMechanism, v, s):
    """Psi(v + s) - Psi(v) without cancellation for small |s|."""
    v = np.asarray(v, float)
    s = np.asarray(s, float)
    out = 0.5 * mech.sigma**2 * s * (2.0 * v + s) - mech.gamma * s + mech.jumps.jump_psi_shift(v, s)
    return float(out) if np.ndim(out) == 0 else out


def psi_prime(mech: LevyMechanism, x):
    """Psi'(x) for x > 0."""
    x = np.asarray(x, float)
    out = mech.sigma**2 * x - mech.gamma + mech.jumps.jump_psi_prime(x)
    return float(out) if np.ndim(out) == 0 else out


def psi_prime_at_zero(mech: LevyMechanism) -> float:
    """Psi'(0+) = -gamma - int_{(1,inf)} h pi(dh), possibly -inf."""
    m = mech.jumps.large_mean()
    return -math.inf if math.isinf(m) else -mech.gamma - m


def leading_behavior(mech: LevyMechanism):
    """Leading term ``(coef, power)`` of Psi(x) as x -> 0+, or None.

    None means the leading order carries a logarithmic factor, so no
    pure power law describes Psi near zero.
    """
    terms, irregular = mech.jumps.asymptotic_terms()
    cand = {}
    for p, c in terms:
        cand[p] = cand.get(p, 0.0) + c
    lin = psi_prime_at_zero(mech)
    if math.isfinite(lin):
        cand[1.0] = cand.get(1.0, 0.0) + lin
    if mech.sigma > 0:
        cand[2.0] = cand.get(2.0, 0.0) + 0.5 * mech.sigma**2
    live = sorted((p, c) for p, c in cand.items() if c != 0.0)
    lead = live[0] if live else None
    if irregular and (lead is None or min(irregular) <= lead[0]):
        return None
    if lead is None:
        return None
    return lead[1], lead[0]


def psi_inverse(mech: LevyMechanism, t: float, tol: float = 1e-12) -> float:
    """Right-continuous inverse inf{z >= 0 : Psi(z) > t}.

    Brackets by doubling, then bisects (convexity makes {Psi > t} a right
    half-line). ``tol`` is relative to the returned value.
    """
    if t < 0:
        raise ValueError("psi_inverse needs t >= 0")
    if t == 0.0 and psi_prime_at_zero(mech) >= 0.0:
        if mech.is_subordinator:
            raise NotInvertibleError("Psi is not eventually increasing (subordinator)")
        return 0.0
    hi = 1.0
    while not psi(mech, hi) > t:
        hi *= 2.0
        if hi > 1e300 or not math.isfinite(hi):
            raise NotInvertibleError("could not bracket Psi^{-1}: degenerate mechanism or overflow")
    lo = 0.0
    while psi(mech, hi / 2.0) > t and hi > 1e-300:
        hi /= 2.0
        if psi(mech, hi / 2.0) <= t:
            lo = hi / 2.0
            break
    for _ in range(2000):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi or hi - lo <= tol * hi * 1e-3:
            break
        if psi(mech, mid) > t:
            hi = mid
        else:
            lo = mid
    return hi


def check_nondegenerate(pair: MechanismPair) -> bool:
    """False iff the branching or the migration process is a subordinator."""
    return not (pair.branching.is_subordinator or pair.migration.is_subordinator)
