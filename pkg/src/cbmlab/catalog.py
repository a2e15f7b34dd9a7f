"""Named mechanism pairs used by the validation suites."""
from __future__ import annotations

import math

from .levy_mech import CompoundExponential, LevyMechanism, MechanismPair, StableTail, TabulatedTail

__all__ = [
    "linear_pair",
    "brownian_branching_pair",
    "sqrt_explosive_mechanism",
    "sqrt_explosive_pair",
    "boundary_pair",
    "log_tail_migration_pair",
    "generator_cases",
    "PAIRS",
]


def linear_pair(b: float = 1.0, m: float = 1.0) -> MechanismPair:
    """Psi_b(z) = b z and Psi_m(z) = m z (deterministic dynamics)."""
    return MechanismPair(LevyMechanism.linear(b), LevyMechanism.linear(m))


def brownian_branching_pair() -> MechanismPair:
    """Psi_b(z) = z^2 with a Brownian migration with drift and exponential jumps."""
    return MechanismPair(LevyMechanism(math.sqrt(2.0), 0.0),
                         LevyMechanism(1.0, -1.0, CompoundExponential(1.0, 0.5)))


def sqrt_explosive_mechanism() -> LevyMechanism:
    """Psi(z) = z^2 - sqrt(z): Brownian part plus 1/2-stable jumps."""
    return LevyMechanism(math.sqrt(2.0), 1.0 / math.sqrt(math.pi), StableTail(0.5, 1.0 / (2.0 * math.sqrt(math.pi))))


def sqrt_explosive_pair() -> MechanismPair:
    """Psi_b(z) = z^2 - sqrt(z), Psi_m(z) = z."""
    return MechanismPair(sqrt_explosive_mechanism(), LevyMechanism.linear(1.0))


def boundary_pair() -> MechanismPair:
    """Psi_b = Psi_m = z^2 - z."""
    mech = LevyMechanism(math.sqrt(2.0), 1.0)
    return MechanismPair(mech, mech)


def log_tail_migration_pair() -> MechanismPair:
    """Psi_b(z) = z with a migration whose tail is 2 / log(h) for large h.

    The migration has infinite mean, so Psi_m'(0+) = -inf.
    """
    e2 = math.e**2
    tail = TabulatedTail((1.0, math.e, e2), (2.0, 2.0, 1.0), "log")
    return MechanismPair(LevyMechanism.linear(1.0), LevyMechanism(1.0, -1.0, tail))


def generator_cases():
    """(name, pair, alpha, alphabar, check_psi) for the generator residual suite."""
    sq = sqrt_explosive_mechanism()
    mixed = MechanismPair(sq, LevyMechanism(1.0, -1.0, CompoundExponential(1.0, 0.5)))
    return [
        ("linear", linear_pair(), 1.0, 0.0, False),
        ("brownian_branching", brownian_branching_pair(), 1.0, 0.0, False),
        ("brownian_branching_killed", brownian_branching_pair(), 2.0, 1.0, True),
        ("sqrt_explosive", sqrt_explosive_pair(), 2.0, 0.0, True),
        ("sqrt_explosive_mixed", mixed, 3.0, 1.0, True),
    ]


PAIRS = {
    "linear": linear_pair,
    "brownian_branching": brownian_branching_pair,
    "sqrt_explosive": sqrt_explosive_pair,
    "boundary": boundary_pair,
    "log_tail_migration": log_tail_migration_pair,
}
