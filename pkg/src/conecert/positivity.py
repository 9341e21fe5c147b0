"""Cone invariance, stability and dissipativity certificates for one system.

All certificates use a *linear* function ``v^T x`` on the state cone, so each
question becomes a finite set of (strict) linear inequalities over the cone
generators and is settled by :func:`conecert.lp.solve_strict`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import Tolerances, default_tolerances
from .cones import ConeTriple, PolyhedralCone, complementary_pairs
from .errors import DomainError, PreconditionError, ShapeError
from .linalg import as_matrix, as_vector, eigenvalues, integrate_expm
from .lp import StrictSystem, solve_strict

__all__ = [
    "LinearSystem",
    "SupplyRate",
    "PositivityReport",
    "StabilityCertificate",
    "DissipativityCertificate",
    "ExponentialCertificate",
    "is_metzler_positive",
    "check_positivity",
    "state_invariance_violations",
    "stability_constraints",
    "certify_stability",
    "stability_residuals",
    "certificate_from_exponential",
    "certify_dissipativity",
    "find_supply_rate",
    "dissipativity_residuals",
]


def _column(b):
    b = np.asarray(b, dtype=float)
    return b.reshape(-1, 1) if b.ndim == 1 else b


def _row(c):
    c = np.asarray(c, dtype=float)
    return c.reshape(1, -1) if c.ndim == 1 else c


@dataclass(frozen=True)
class LinearSystem:
    """``x' = A x + B u``, ``y = C x``.

    ``B`` and ``C`` default to a single zero input/output column so that
    autonomous systems can be written as ``LinearSystem(A)``.
    """

    A: np.ndarray
    B: Optional[np.ndarray] = None
    C: Optional[np.ndarray] = None

    def __post_init__(self):
        a = as_matrix(self.A, "A")
        n = a.shape[0]
        if a.shape != (n, n):
            raise ShapeError(f"A must be square, got {a.shape}")
        b = np.zeros((n, 1)) if self.B is None else as_matrix(_column(self.B), "B")
        c = np.zeros((1, n)) if self.C is None else as_matrix(_row(self.C), "C")
        if b.shape[0] != n:
            raise ShapeError(f"B must have {n} rows, got {b.shape}")
        if c.shape[1] != n:
            raise ShapeError(f"C must have {n} columns, got {c.shape}")
        for name, arr in (("A", a), ("B", b), ("C", c)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def p(self) -> int:
        return self.C.shape[0]

    def with_feedback(self, F) -> "LinearSystem":
        """Closed loop under ``u = F x + u_ext``."""
        F = as_matrix(F, "F")
        if F.shape != (self.m, self.n):
            raise ShapeError(f"F must be {(self.m, self.n)}, got {F.shape}")
        return LinearSystem(self.A + self.B @ F, self.B, self.C)

    def to_json(self) -> dict:
        return {"A": self.A.tolist(), "B": self.B.tolist(), "C": self.C.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "LinearSystem":
        return cls(obj["A"], obj.get("B"), obj.get("C"))


@dataclass(frozen=True)
class SupplyRate:
    """``s(u, y) = r^T u + q^T y``."""

    q: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", as_vector(self.q, "q"))
        object.__setattr__(self, "r", as_vector(self.r, "r"))

    def to_json(self) -> dict:
        return {"q": self.q.tolist(), "r": self.r.tolist()}


@dataclass
class PositivityReport:
    """Outcome of the three cone-invariance conditions.

    Each violation list holds ``(i, j, value)`` with ``value < -tol``:
    state pairs are (dual state gen, state gen), input pairs (dual state gen,
    input gen) and output pairs (dual output gen, state gen).
    """

    invariant_state: bool
    input_ok: bool
    output_ok: bool
    state_violations: list = field(default_factory=list)
    input_violations: list = field(default_factory=list)
    output_violations: list = field(default_factory=list)
    residuals: dict = field(default_factory=dict)

    @property
    def overall(self) -> bool:
        return self.invariant_state and self.input_ok and self.output_ok


def is_metzler_positive(sys: LinearSystem) -> bool:
    """Classical positivity: Metzler ``A`` and entrywise nonnegative ``B``, ``C``."""
    off = sys.A - np.diag(np.diag(sys.A))
    return bool(np.all(off >= 0) and np.all(sys.B >= 0) and np.all(sys.C >= 0))


def _state_pair_values(A, cone: PolyhedralCone, tol: Tolerances):
    pairs = complementary_pairs(cone, tol.orth_tol)
    M = cone.dual_generators @ A @ cone.generators.T
    return [(i, j, float(M[i, j])) for i, j in pairs]


def state_invariance_violations(A, cone: PolyhedralCone, tol: Optional[Tolerances] = None):
    """Complementary pairs where ``dual_i^T A gen_j < 0``."""
    tol = tol or default_tolerances()
    A = as_matrix(A, "A")
    if A.shape != (cone.dim, cone.dim):
        raise ShapeError(f"A is {A.shape} but the cone lives in R^{cone.dim}")
    return [t for t in _state_pair_values(A, cone, tol) if t[2] < -tol.feas_tol]


def _all_pairs(M):
    return [(int(i), int(j), float(M[i, j])) for i in range(M.shape[0]) for j in range(M.shape[1])]


def check_positivity(sys: LinearSystem, cones: ConeTriple,
                     tol: Optional[Tolerances] = None) -> PositivityReport:
    """Evaluate the three invariance conditions on generators.

    * state: ``X*_i^T A X_j >= 0`` over complementary pairs;
    * input: ``X*_i^T B U_j >= 0`` for all pairs;
    * output: ``Y*_i^T C X_j >= 0`` for all pairs.
    """
    tol = tol or default_tolerances()
    cones.check_dims(sys.n, sys.m, sys.p)
    X, U, Y = cones.state, cones.input, cones.output
    state = _state_pair_values(sys.A, X, tol)
    inp = _all_pairs(X.dual_generators @ sys.B @ U.generators.T)
    out = _all_pairs(Y.dual_generators @ sys.C @ X.generators.T)
    bad = lambda items: [t for t in items if t[2] < -tol.feas_tol]  # noqa: E731
    sv, iv, ov = bad(state), bad(inp), bad(out)
    return PositivityReport(
        invariant_state=not sv, input_ok=not iv, output_ok=not ov,
        state_violations=sv, input_violations=iv, output_violations=ov,
        residuals={"thm1-I": state, "thm1-II": inp, "thm1-III": out},
    )


# ---------------------------------------------------------------------------
# stability
# ---------------------------------------------------------------------------


@dataclass
class StabilityCertificate:
    """Linear Lyapunov function ``v^T x`` on the state cone.

    ``certified`` is true iff the LP margin exceeded the strict tolerance;
    otherwise ``v`` is the solver's best (non-certifying) point.
    """

    v: Optional[np.ndarray]
    margin: float
    certified: bool
    status: str = "optimal"

    def to_json(self) -> dict:
        return {"v": None if self.v is None else self.v.tolist(), "margin": self.margin}


def stability_constraints(A, cone: PolyhedralCone):
    """Strict rows ``S v > 0`` encoding ``v^T X_i > 0`` and ``-v^T A X_i > 0``."""
    A = as_matrix(A, "A")
    X = cone.generators
    return np.vstack([X, -(A @ X.T).T])


def _require_invariant(A, cone, tol):
    viol = state_invariance_violations(A, cone, tol)
    if viol:
        raise PreconditionError(
            "state cone is not invariant under A; the stability test assumes it is",
            {"thm1-I": viol},
        )


def certify_stability(sys, state_cone: PolyhedralCone,
                      tol: Optional[Tolerances] = None) -> StabilityCertificate:
    """Search for ``v`` with ``v^T X_i > 0`` and ``v^T A X_i < 0`` for all generators.

    ``sys`` may be a :class:`LinearSystem` or a bare state matrix. Raises
    :class:`PreconditionError` if the cone is not invariant under ``A``.
    """
    tol = tol or default_tolerances()
    A = sys.A if isinstance(sys, LinearSystem) else as_matrix(sys, "A")
    _require_invariant(A, state_cone, tol)
    rows = stability_constraints(A, state_cone)
    sol = solve_strict(StrictSystem(A.shape[0], rows, np.zeros(rows.shape[0])), tol)
    if not sol.optimal:
        return StabilityCertificate(None, float("-inf"), False, sol.status)
    return StabilityCertificate(sol.z, sol.margin, sol.feasible)


def stability_residuals(A, cone: PolyhedralCone, v) -> dict:
    """Re-substitute ``v``: both lists must be positive for a valid certificate."""
    A = as_matrix(A, "A")
    v = as_vector(v, "v")
    X = cone.generators
    return {"thm2-10a": (X @ v).tolist(), "thm2-10b": (-(v @ A @ X.T)).tolist()}


@dataclass
class ExponentialCertificate:
    v: np.ndarray
    delta: float
    satisfied: bool
    residuals: dict


def certificate_from_exponential(A, state_cone: PolyhedralCone, delta: float,
                                 tol: Optional[Tolerances] = None) -> ExponentialCertificate:
    """Constructive Lyapunov vector ``v = (∫_0^δ exp(A^T τ) dτ) Σ X*_i``.

    For a cone-invariant Hurwitz ``A`` this satisfies both stability
    conditions once ``δ`` is large enough; ``satisfied`` reports whether it
    does at the given ``δ``.
    """
    tol = tol or default_tolerances()
    A = as_matrix(A, "A")
    _require_invariant(A, state_cone, tol)
    spec = eigenvalues(A, tol)
    if spec.abscissa >= 0:
        raise DomainError(f"A is not Hurwitz (spectral abscissa {spec.abscissa:.6g})")
    w = state_cone.dual_generators.sum(axis=0)
    v = integrate_expm(A.T, delta) @ w
    res = stability_residuals(A, state_cone, v)
    ok = min(res["thm2-10a"]) > 0 and min(res["thm2-10b"]) > 0
    return ExponentialCertificate(v, float(delta), bool(ok), res)


# ---------------------------------------------------------------------------
# dissipativity
# ---------------------------------------------------------------------------


@dataclass
class DissipativityCertificate:
    """Linear storage ``v^T x`` with decay rate ``alpha`` for a supply rate."""

    v: Optional[np.ndarray]
    alpha: float
    supply: Optional[SupplyRate]
    margin: float
    certified: bool
    status: str = "optimal"

    def to_json(self) -> dict:
        return {
            "v": None if self.v is None else self.v.tolist(),
            "alpha": self.alpha,
            "q": None if self.supply is None else self.supply.q.tolist(),
            "r": None if self.supply is None else self.supply.r.tolist(),
            "margin": self.margin,
        }


def _require_positive(sys, cones, tol):
    rep = check_positivity(sys, cones, tol)
    if not rep.overall:
        raise PreconditionError(
            "system is not positive with respect to the cone triple",
            {"thm1-I": rep.state_violations, "thm1-II": rep.input_violations,
             "thm1-III": rep.output_violations},
        )


def recover_alpha(sys: LinearSystem, X: np.ndarray, v, q) -> float:
    """Largest ``alpha`` with ``q^T C X_i >= (v^T A + alpha v^T) X_i`` for all ``i``."""
    num = q @ sys.C @ X.T - v @ sys.A @ X.T
    den = X @ v
    return float(np.min(num / den))


def _check_supply(sys, supply):
    if supply.q.shape[0] != sys.p or supply.r.shape[0] != sys.m:
        raise ShapeError(
            f"supply rate needs q in R^{sys.p} and r in R^{sys.m}, "
            f"got {supply.q.shape[0]} and {supply.r.shape[0]}"
        )


def certify_dissipativity(sys: LinearSystem, cones: ConeTriple, supply: SupplyRate,
                          tol: Optional[Tolerances] = None) -> DissipativityCertificate:
    """Find ``v`` certifying exponential dissipativity for a fixed supply rate.

    Strict rows: ``v^T X_i > 0`` and ``q^T C X_i > v^T A X_i``; weak rows:
    ``r^T U_j >= v^T B U_j``. The rate ``alpha`` is recovered afterwards as
    the smallest per-generator slack ratio.
    """
    tol = tol or default_tolerances()
    _require_positive(sys, cones, tol)
    _check_supply(sys, supply)
    X, U = cones.state.generators, cones.input.generators
    strict_a = np.vstack([X, -(sys.A @ X.T).T])
    strict_b = np.concatenate([np.zeros(len(X)), -(supply.q @ sys.C @ X.T)])
    weak_a = -(sys.B @ U.T).T
    weak_b = -(U @ supply.r)
    sol = solve_strict(StrictSystem(sys.n, strict_a, strict_b, weak_a, weak_b), tol)
    if not sol.optimal:
        return DissipativityCertificate(None, float("nan"), supply, float("-inf"), False, sol.status)
    alpha = recover_alpha(sys, X, sol.z, supply.q)
    return DissipativityCertificate(sol.z, alpha, supply, sol.margin,
                                    bool(sol.feasible and alpha > 0))


def find_supply_rate(sys: LinearSystem, cones: ConeTriple,
                     tol: Optional[Tolerances] = None) -> DissipativityCertificate:
    """Joint LP in ``(v, q, r)`` with ``|q|_inf <= 1`` and ``|r|_inf <= box``."""
    tol = tol or default_tolerances()
    _require_positive(sys, cones, tol)
    n, m, p = sys.n, sys.m, sys.p
    X, U = cones.state.generators, cones.input.generators
    nv = n + p + m  # z = [v, q, r]
    kx, ku = len(X), len(U)
    strict_a = np.zeros((2 * kx, nv))
    strict_a[:kx, :n] = X
    strict_a[kx:, :n] = -(sys.A @ X.T).T
    strict_a[kx:, n:n + p] = (sys.C @ X.T).T
    weak_a = np.zeros((ku, nv))
    weak_a[:, :n] = -(sys.B @ U.T).T
    weak_a[:, n + p:] = U
    lower = np.concatenate([np.full(n, -tol.box), np.full(p, -1.0), np.full(m, -tol.box)])
    sol = solve_strict(
        StrictSystem(nv, strict_a, np.zeros(2 * kx), weak_a, np.zeros(ku),
                     lower=lower, upper=-lower), tol)
    if not sol.optimal:
        return DissipativityCertificate(None, float("nan"), None, float("-inf"), False, sol.status)
    v, q, r = sol.z[:n], sol.z[n:n + p], sol.z[n + p:]
    alpha = recover_alpha(sys, X, v, q)
    return DissipativityCertificate(v, alpha, SupplyRate(q, r), sol.margin,
                                    bool(sol.feasible and alpha > 0))


def dissipativity_residuals(sys: LinearSystem, cones: ConeTriple, v, alpha, supply) -> dict:
    """Re-substitution of a dissipativity certificate; every entry must be >= 0
    (``thm3-10a`` and ``thm3-17`` strictly)."""
    v = as_vector(v, "v")
    X, U = cones.state.generators, cones.input.generators
    qcx = supply.q @ sys.C @ X.T
    vax = v @ sys.A @ X.T
    return {
        "thm3-10a": (X @ v).tolist(),
        "thm3-17": (qcx - vax).tolist(),
        "thm3-14b": (qcx - vax - alpha * (X @ v)).tolist(),
        "thm3-14c": (U @ supply.r - v @ sys.B @ U.T).tolist(),
    }
