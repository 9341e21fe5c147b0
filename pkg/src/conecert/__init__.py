"""Certificates and synthesis for linear systems that keep a polyhedral cone invariant."""

from .config import DEFAULT, Tolerances, default_tolerances
from .cones import (
    ConeTriple,
    PolyhedralCone,
    complementary_pairs,
    contains,
    dual,
    orthant,
    product_cone,
    validate,
)
from .errors import (
    ConeCertError,
    ConvergenceError,
    DomainError,
    InvalidGeneratorError,
    PreconditionError,
    ShapeError,
    SolverStalledError,
    UnsupportedDimensionError,
    VerificationError,
)
from .linalg import eigenvalues, expm, integrate_expm, spectral_abscissa
from .lp import LpProblem, StrictSystem, solve, solve_strict
from .network import (
    NetworkSpec,
    RingSpec,
    assemble_closed_loop,
    certify_network,
    ring_network,
    ring_spec,
    ring_spectrum,
)
from .positivity import (
    LinearSystem,
    SupplyRate,
    certificate_from_exponential,
    certify_dissipativity,
    certify_stability,
    check_positivity,
    find_supply_rate,
)
from .simulate import check_invariance, emit_phase_portrait, simulate
from .synthesis import synthesize_feedback, synthesize_ring_gain, verify_gain

__version__ = "0.1.0"
