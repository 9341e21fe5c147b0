"""State-feedback synthesis for cone positivity plus stability.

The joint search over a gain ``F`` and a Lyapunov vector ``v`` is bilinear.
:func:`synthesize_feedback` splits it into two LPs: first a gain LP that
enforces invariance on complementary pairs and strictly negative cross terms
``X*_i^T (A + B F) X_j`` on all other pairs, then a storage LP in the
coefficients ``a`` of ``v = sum_i a_i X*_i`` with ``F`` frozen. The split is
sufficient only; when it fails, an optional grid of fixed ``v`` candidates is
tried, each of which makes the problem linear in ``F``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Union

import numpy as np

from .config import Tolerances, default_tolerances
from .cones import ConeTriple, PolyhedralCone, complementary_pairs
from .errors import PreconditionError, ShapeError, VerificationError
from .linalg import as_matrix, as_vector, eigenvalues
from .lp import StrictSystem, solve_strict
from .positivity import (
    LinearSystem,
    StabilityCertificate,
    certify_stability,
    check_positivity,
    stability_residuals,
    state_invariance_violations,
)

__all__ = [
    "FeedbackGain",
    "StorageCoefficients",
    "SynthesisResult",
    "pair_matrix",
    "gain_rows",
    "synthesize_feedback",
    "synthesize_ring_gain",
    "verify_gain",
    "ring_gain_residuals",
    "closed_loop_abscissa",
]


@dataclass
class FeedbackGain:
    F: np.ndarray
    margin: float

    def to_json(self) -> dict:
        return {"F": self.F.tolist(), "margin": self.margin}


@dataclass
class StorageCoefficients:
    """``v = sum_i a_i X*_i`` over the (unit-norm) dual generators."""

    a: np.ndarray
    v: np.ndarray


@dataclass
class SynthesisResult:
    feasible: bool
    stage: str  # which step settled the outcome: "stage1", "stage2", "grid", "verify"
    gain: Optional[FeedbackGain] = None
    storage: Optional[StorageCoefficients] = None
    certificate: Optional[StabilityCertificate] = None
    stage_status: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "feasible": self.feasible,
            "stage": self.stage,
            "gain": None if self.gain is None else self.gain.to_json(),
            "storage": None if self.storage is None else {
                "a": self.storage.a.tolist(), "v": self.storage.v.tolist()},
            "certificate": None if self.certificate is None else self.certificate.to_json(),
            "stage_status": self.stage_status,
        }


def pair_matrix(M, duals, gens) -> np.ndarray:
    """``[d_i^T M g_j]`` for rows ``duals`` and ``gens`` (no normalisation)."""
    return np.asarray(duals, float) @ as_matrix(M) @ np.asarray(gens, float).T


def gain_rows(B, d, x):
    """Coefficient row of ``d^T B F x`` in the row-major entries of ``F``."""
    return np.kron(np.asarray(B, float).T @ d, x)


def _check_ab(A, B, cone):
    A = as_matrix(A, "A")
    B = as_matrix(np.asarray(B, float).reshape(A.shape[0], -1), "B")
    if A.shape != (cone.dim, cone.dim):
        raise ShapeError(f"A is {A.shape} but the cone lives in R^{cone.dim}")
    return A, B


def _gain_box(m, n, tol):
    return np.full(m * n, -tol.gain_box), np.full(m * n, tol.gain_box)


def _stage1(A, B, cone, tol):
    m, n = B.shape[1], A.shape[0]
    Xd, X = cone.dual_generators, cone.generators
    comp = set(complementary_pairs(cone, tol.orth_tol))
    base = Xd @ A @ X.T
    weak_a, weak_b, strict_a, strict_b = [], [], [], []
    for i in range(len(Xd)):
        for j in range(len(X)):
            row = gain_rows(B, Xd[i], X[j])
            if (i, j) in comp:
                weak_a.append(row)  # base + row.f >= 0
                weak_b.append(-base[i, j])
            else:
                strict_a.append(-row)  # -(base + row.f) > 0
                strict_b.append(base[i, j])
    lo, hi = _gain_box(m, n, tol)
    return solve_strict(StrictSystem(m * n, strict_a, strict_b, weak_a, weak_b,
                                     lower=lo, upper=hi), tol)


def _stage2(Acl, cone, tol):
    Xd, X = cone.dual_generators, cone.generators
    k = len(Xd)
    P = Xd @ Acl @ X.T  # P[i, j] = X*_i^T Acl X_j
    strict_a = np.vstack([np.eye(k), -P.T])
    lo = np.zeros(k)
    return solve_strict(StrictSystem(k, strict_a, np.zeros(len(strict_a)),
                                     lower=lo, upper=np.full(k, tol.box)), tol)


def _gain_for_fixed_v(A, B, cone, v, tol, extra_strict=None):
    """LP in ``F``: invariance on complementary pairs and ``-v^T (A+BF) X_j > 0``."""
    m, n = B.shape[1], A.shape[0]
    Xd, X = cone.dual_generators, cone.generators
    weak_a, weak_b = [], []
    for i, j in complementary_pairs(cone, tol.orth_tol):
        weak_a.append(gain_rows(B, Xd[i], X[j]))
        weak_b.append(-(Xd[i] @ A @ X[j]))
    strict_a = [-gain_rows(B, v, x) for x in X]
    strict_b = [v @ A @ x for x in X]
    if extra_strict is not None:
        # extra constant offsets c_j: -v^T(A+BF)X_j > c_j
        strict_b = [b + c for b, c in zip(strict_b, extra_strict)]
    lo, hi = _gain_box(m, n, tol)
    return solve_strict(StrictSystem(m * n, strict_a, strict_b, weak_a, weak_b,
                                     lower=lo, upper=hi), tol)


def synthesize_feedback(A, B, state_cone: PolyhedralCone, *,
                        v_grid: Optional[Iterable] = None,
                        tol: Optional[Tolerances] = None) -> SynthesisResult:
    """Staged LP design of ``u = F x`` making ``state_cone`` invariant and the
    closed loop exponentially stable.

    Parameters
    ----------
    A, B : array_like
        Open-loop state and input matrices.
    state_cone : PolyhedralCone
        Cone to be rendered forward invariant.
    v_grid : iterable of vectors, optional
        Fallback Lyapunov candidates tried (each as an LP in ``F``) when the
        staged split fails; candidates outside the dual interior are skipped.
        Defaults to the single vector ``sum_i X*_i``; pass ``[]`` to disable.

    Returns
    -------
    SynthesisResult
        ``feasible`` is false with ``stage`` naming the LP that failed.
    """
    tol = tol or default_tolerances()
    A, B = _check_ab(A, B, state_cone)
    m, n = B.shape[1], A.shape[0]
    status = {}

    s1 = _stage1(A, B, state_cone, tol)
    status["stage1"] = {"status": s1.status, "margin": s1.margin, "feasible": s1.feasible}
    result = SynthesisResult(False, "stage1", stage_status=status)
    if s1.feasible:
        F = s1.z.reshape(m, n)
        s2 = _stage2(A + B @ F, state_cone, tol)
        status["stage2"] = {"status": s2.status, "margin": s2.margin, "feasible": s2.feasible}
        if s2.feasible:
            a = s2.z
            v = a @ state_cone.dual_generators
            result = _finish(A, B, state_cone, F, s1.margin,
                             StorageCoefficients(a, v), "stage2", status, tol)
            if result.feasible:
                return result
        else:
            result = SynthesisResult(False, "stage2", stage_status=status)

    if v_grid is None:
        v_grid = [state_cone.dual_generators.sum(axis=0)]
    for idx, v in enumerate(v_grid):
        v = as_vector(v, "v")
        if np.any(state_cone.generators @ v <= 0):
            continue
        sol = _gain_for_fixed_v(A, B, state_cone, v, tol)
        status.setdefault("grid", []).append(
            {"index": idx, "status": sol.status, "margin": sol.margin, "feasible": sol.feasible})
        if sol.feasible:
            F = sol.z.reshape(m, n)
            a, *_ = np.linalg.lstsq(state_cone.dual_generators.T, v, rcond=None)
            res = _finish(A, B, state_cone, F, sol.margin,
                          StorageCoefficients(a, v), "grid", status, tol)
            if res.feasible:
                return res
    if v_grid and result.stage != "verify":
        result.stage = "grid"
    return result


def _finish(A, B, cone, F, margin, storage, stage, status, tol):
    try:
        res = verify_gain(LinearSystem(A, B), F, cone, tol=tol)
    except VerificationError as exc:
        return SynthesisResult(False, "verify", FeedbackGain(F, margin), storage,
                               stage_status=status, residuals=exc.residuals)
    res.gain = FeedbackGain(F, margin)
    res.storage = storage
    res.stage = stage
    res.stage_status = status
    return res


def verify_gain(sys: LinearSystem, F, cones: Union[ConeTriple, PolyhedralCone],
                tol: Optional[Tolerances] = None) -> SynthesisResult:
    """Re-certify the closed loop ``A + B F`` from scratch.

    Runs the invariance check (full triple if given, state cone otherwise)
    and the stability LP. Raises :class:`VerificationError` carrying the
    per-condition residuals if anything fails.
    """
    tol = tol or default_tolerances()
    F = as_matrix(np.asarray(F, float).reshape(sys.m, sys.n), "F")
    cl = sys.with_feedback(F)
    if isinstance(cones, ConeTriple):
        rep = check_positivity(cl, cones, tol)
        state_cone = cones.state
        residuals = dict(rep.residuals)
        ok = rep.overall
    else:
        state_cone = cones
        viol = state_invariance_violations(cl.A, state_cone, tol)
        residuals = {"thm1-I": viol}
        ok = not viol
    if not ok:
        raise VerificationError("closed loop is not cone invariant", residuals)
    cert = certify_stability(cl.A, state_cone, tol)
    if cert.v is not None:
        residuals.update(stability_residuals(cl.A, state_cone, cert.v))
    if not cert.certified:
        raise VerificationError(
            f"stability LP infeasible (margin {cert.margin:.3g})", residuals)
    return SynthesisResult(True, "verify", FeedbackGain(F, cert.margin),
                           certificate=cert, residuals=residuals)


def synthesize_ring_gain(subsystem: LinearSystem, cones: ConeTriple, v, *,
                         design_cone: Optional[PolyhedralCone] = None, W=None,
                         tol: Optional[Tolerances] = None) -> FeedbackGain:
    """Uniform gain for rings ``u_j = F x_j + W y_{j+1}`` with a fixed storage ``v``.

    Taking ``r = B^T v`` and ``q = -W^T B^T v`` collapses the network
    conditions into ``-v^T B W C X_i > v^T (A + B F) X_i`` plus invariance on
    complementary pairs, an LP in ``F`` that does not depend on the ring size.
    Raises :class:`PreconditionError` naming the failed condition; returns a
    gain with ``margin <= strict_tol`` when the LP is infeasible.
    """
    tol = tol or default_tolerances()
    sys = subsystem
    cones.check_dims(sys.n, sys.m, sys.p)
    v = as_vector(v, "v")
    W = np.eye(sys.m, sys.p) if W is None else as_matrix(W, "W")
    X = cones.state if design_cone is None else design_cone
    if X.dim != sys.n:
        raise ShapeError(f"design cone lives in R^{X.dim}, state is R^{sys.n}")
    failed = {}
    if np.any(X.generators @ v <= tol.feas_tol):
        failed["thm2-10a"] = (X.generators @ v).tolist()
    bu = X.dual_generators @ sys.B @ cones.input.generators.T
    if np.any(bu < -tol.feas_tol):
        failed["thm1-II"] = bu.tolist()
    cx = cones.output.dual_generators @ sys.C @ X.generators.T
    if np.any(cx < -tol.feas_tol):
        failed["thm1-III"] = cx.tolist()
    wy = cones.input.dual_generators @ W @ cones.output.generators.T
    if np.any(wy < -tol.feas_tol):
        failed["thm4-I"] = wy.tolist()
    if failed:
        raise PreconditionError(
            f"ring design preconditions fail: {sorted(failed)}", failed)
    offsets = [v @ sys.B @ W @ sys.C @ x for x in X.generators]
    sol = _gain_for_fixed_v(sys.A, sys.B, X, v, tol, extra_strict=offsets)
    if not sol.optimal:
        return FeedbackGain(np.full((sys.m, sys.n), np.nan), float("-inf"))
    return FeedbackGain(sol.z.reshape(sys.m, sys.n), sol.margin)


def ring_gain_residuals(subsystem: LinearSystem, cones: ConeTriple, v, F, W=None) -> dict:
    """``synth-40``: ``-v^T B W C X_i - v^T (A + B F) X_i`` (must be > 0);
    ``thm1-I``: invariance values on complementary pairs (must be >= 0)."""
    sys = subsystem
    v = as_vector(v, "v")
    W = np.eye(sys.m, sys.p) if W is None else as_matrix(W, "W")
    Acl = sys.A + sys.B @ as_matrix(F)
    X = cones.state
    cond40 = [float(-v @ sys.B @ W @ sys.C @ x - v @ Acl @ x) for x in X.generators]
    inv = [float(X.dual_generators[i] @ Acl @ X.generators[j])
           for i, j in complementary_pairs(X)]
    return {"synth-40": cond40, "thm1-I": inv}


def closed_loop_abscissa(sys: LinearSystem, F) -> float:
    return eigenvalues(sys.A + sys.B @ as_matrix(F)).abscissa
