"""Continuous-state branching processes with spectrally positive migration.

Laplace exponents and mechanisms (:mod:`cbmlab.levy_mech`), scale functions
and transforms by quadrature (:mod:`cbmlab.scale_fns`), generator checks
(:mod:`cbmlab.generator_check`), Levy path sampling (:mod:`cbmlab.levy_path`),
CBM simulation (:mod:`cbmlab.cbm_sim`) and Monte Carlo estimators
(:mod:`cbmlab.estimators`).
"""
from .cbm_sim import (
    Absorbed,
    CbmPath,
    Censored,
    ExplodedAbove,
    Passed,
    SimConfig,
    couple_monotone,
    simulate_batch,
    simulate_lamperti,
    simulate_sde,
    superpose,
)
from .errors import (
    CbmError,
    ConditionViolated,
    DegenerateMechanismError,
    NotExplosiveError,
    NotInvertibleError,
    PreconditionError,
    QuadratureError,
    UndecidedByPaper,
)
from .estimators import EstimateWithCI, dt_convergence_study, mc_explosion, mc_first_passage, mc_occupation
from .generator_check import apply_cbm_generator, apply_levy_generator, ode_residual_phi, ode_residual_psi
from .levy_mech import (
    Atoms,
    CompoundExponential,
    LevyMechanism,
    MechanismPair,
    NoJumps,
    StableTail,
    TabulatedTail,
    check_nondegenerate,
    psi,
    psi_inverse,
    psi_prime,
)
from .levy_path import LevyPathConfig, empirical_laplace_check, sample_increments
from .scale_fns import (
    HitZero,
    ScaleEvalConfig,
    explosion_lt,
    first_passage_lt,
    hit_zero_prob,
    occupation_lt,
    phi,
    psi_scale,
    z_fn,
)

__version__ = "0.1.0"
