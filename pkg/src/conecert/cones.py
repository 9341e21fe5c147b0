"""Polyhedral proper cones.

A cone is stored by its generators (unit-normalised rows). The dual cone's
generators, which double as the facet normals of the primal cone, are
computed once at construction with the double description method.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .config import DEFAULT, Tolerances
from .errors import DomainError, InvalidGeneratorError, ShapeError
from .lp import LpProblem, solve

__all__ = [
    "PolyhedralCone",
    "ConeTriple",
    "ValidationReport",
    "validate",
    "dual",
    "contains",
    "complementary_pairs",
    "product_cone",
    "orthant",
    "double_description",
]

_ZERO_TOL = 1e-9


def _normalise(gens) -> np.ndarray:
    g = np.array(gens, dtype=float)
    if g.ndim == 1:
        g = g.reshape(1, -1)
    if g.ndim != 2 or g.shape[0] == 0:
        raise InvalidGeneratorError("a cone needs at least one generator")
    if not np.all(np.isfinite(g)):
        raise InvalidGeneratorError("generators must be finite")
    norms = np.linalg.norm(g, axis=1)
    if np.any(norms == 0.0):
        bad = np.flatnonzero(norms == 0.0).tolist()
        raise InvalidGeneratorError(f"zero generator(s) at index {bad}")
    # already-unit rows are kept bit-for-bit so serialised cones round-trip exactly
    norms = np.where(np.abs(norms - 1.0) <= 4 * np.finfo(float).eps, 1.0, norms)
    return g / norms[:, None]


@dataclass(frozen=True)
class ValidationReport:
    pointed: bool
    solid: bool
    rank: int
    dim: int

    @property
    def proper(self) -> bool:
        return self.pointed and self.solid


def _is_pointed(g: np.ndarray) -> bool:
    # pointed iff no convex combination of generators is zero
    p, n = g.shape
    eq_a = np.vstack([g.T, np.ones((1, p))])
    eq_b = np.append(np.zeros(n), 1.0)
    sol = solve(LpProblem(np.zeros(p), eq_a=eq_a, eq_b=eq_b, lower=np.zeros(p)))
    return not sol.optimal


def validate(cone, tol: Tolerances = DEFAULT) -> ValidationReport:
    """Check pointedness (by LP) and solidity (by rank).

    Accepts a :class:`PolyhedralCone` or a raw generator array, so that
    candidate generator sets can be screened before construction.
    """
    g = cone.generators if isinstance(cone, PolyhedralCone) else _normalise(cone)
    rank = int(np.linalg.matrix_rank(g, tol=tol.rank_tol))
    return ValidationReport(
        pointed=_is_pointed(g), solid=rank == g.shape[1], rank=rank, dim=g.shape[1]
    )


def double_description(h: np.ndarray, tol: Tolerances = DEFAULT) -> np.ndarray:
    """Extreme rays of ``{z : h z >= 0}`` for ``h`` of full column rank.

    Rows of ``h`` are inserted in order. The start is the simplicial cone of
    the first ``n`` independent rows; each later row splits the current rays
    into positive/zero/negative sets and new rays are formed from adjacent
    positive-negative pairs (adjacency by the rank of the common active set).
    Returns unit-norm rays.
    """
    h = np.asarray(h, dtype=float)
    p, n = h.shape
    basis_rows: list[int] = []
    for i in range(p):
        trial = basis_rows + [i]
        if np.linalg.matrix_rank(h[trial], tol=tol.rank_tol) == len(trial):
            basis_rows = trial
        if len(basis_rows) == n:
            break
    if len(basis_rows) < n:
        raise DomainError("constraint matrix is rank deficient; cone is not pointed")

    rays = np.linalg.inv(h[basis_rows]).T  # row r satisfies h[basis] @ r = e_r
    rays /= np.linalg.norm(rays, axis=1)[:, None]
    inserted = list(basis_rows)
    remaining = [i for i in range(p) if i not in basis_rows]

    def active(r, idx):
        vals = h[idx] @ r
        return frozenset(i for i, v in zip(idx, vals) if abs(v) <= _ZERO_TOL)

    act = [active(r, inserted) for r in rays]

    for c in remaining:
        s = rays @ h[c]
        pos = np.flatnonzero(s > _ZERO_TOL)
        neg = np.flatnonzero(s < -_ZERO_TOL)
        zero = np.flatnonzero(np.abs(s) <= _ZERO_TOL)
        new_rays = [rays[i] for i in pos] + [rays[i] for i in zero]
        new_act = [act[i] for i in pos] + [act[i] | {c} for i in zero]
        for i in pos:
            for j in neg:
                common = act[i] & act[j]
                if len(common) < n - 2:
                    continue
                if n > 2 and np.linalg.matrix_rank(h[sorted(common)], tol=tol.rank_tol) != n - 2:
                    continue
                r = s[i] * rays[j] - s[j] * rays[i]
                norm = np.linalg.norm(r)
                if norm <= _ZERO_TOL:
                    continue
                r = r / norm
                new_rays.append(r)
                new_act.append(active(r, inserted + [c]))
        inserted.append(c)
        rays = np.array(new_rays).reshape(-1, n)
        act = new_act
    return _prune(rays)


def _prune(rays: np.ndarray) -> np.ndarray:
    """Drop near-duplicates and any ray in the cone of the others (LP test)."""
    kept: list[np.ndarray] = []
    for r in rays:
        if not any(np.linalg.norm(r - k) < 1e-9 for k in kept):
            kept.append(r)
    out = list(kept)
    i = 0
    while i < len(out) and len(out) > 1:
        others = np.array([r for j, r in enumerate(out) if j != i])
        sol = solve(LpProblem(np.zeros(len(others)), eq_a=others.T, eq_b=out[i],
                              lower=np.zeros(len(others))))
        if sol.optimal and sol.max_constraint_violation < 1e-9:
            out.pop(i)
        else:
            i += 1
    return np.array(out)


def _canonical_order(duals: np.ndarray, gens: np.ndarray, tol: float) -> np.ndarray:
    """Sort dual generators by the primal generators they are orthogonal to."""
    keys = []
    for d in duals:
        touching = tuple(np.flatnonzero(np.abs(gens @ d) <= tol).tolist())
        keys.append((touching, tuple(-d)))
    order = sorted(range(len(duals)), key=lambda i: keys[i])
    return duals[order]


class PolyhedralCone:
    """Proper polyhedral cone ``{sum a_i K_i : a_i >= 0}``.

    Generators are normalised to unit length. Non-proper generator sets are
    rejected. ``dual_generators`` hold the generators of the dual cone, i.e.
    the facet normals, so that ``x in K  <=>  dual_generators @ x >= 0``.
    """

    __slots__ = ("generators", "dual_generators")

    def __init__(self, generators, *, tol: Tolerances = DEFAULT,
                 _dual: Optional[np.ndarray] = None):
        g = _normalise(generators)
        if _dual is None:
            report = validate(g, tol)
            if not report.proper:
                raise DomainError(
                    f"cone is not proper (pointed={report.pointed}, solid={report.solid})"
                )
            d = _canonical_order(double_description(g, tol), g, 1e-9)
        else:
            d = _normalise(_dual)
        g.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "generators", g)
        object.__setattr__(self, "dual_generators", d)

    def __setattr__(self, key, value):
        raise AttributeError("PolyhedralCone is immutable")

    @property
    def dim(self) -> int:
        return self.generators.shape[1]

    @property
    def n_generators(self) -> int:
        return self.generators.shape[0]

    def __repr__(self):
        return f"PolyhedralCone(dim={self.dim}, generators={self.generators.tolist()})"

    def to_json(self) -> dict:
        return {"dim": self.dim, "generators": self.generators.tolist()}

    @classmethod
    def from_json(cls, obj: dict, tol: Tolerances = DEFAULT) -> "PolyhedralCone":
        gens = np.array(obj["generators"], dtype=float)
        if gens.ndim != 2:
            raise ShapeError("generators must be a list of vectors")
        if "dim" in obj and int(obj["dim"]) != gens.shape[1]:
            raise ShapeError(f"dim {obj['dim']} does not match generator length {gens.shape[1]}")
        return cls(gens, tol=tol)


def orthant(n: int) -> PolyhedralCone:
    """The nonnegative orthant with the standard basis as generators."""
    e = np.eye(n)
    return PolyhedralCone(e, _dual=e)


def dual(cone: PolyhedralCone, tol: Tolerances = DEFAULT) -> PolyhedralCone:
    if not isinstance(cone, PolyhedralCone):
        raise DomainError("dual() needs a proper PolyhedralCone")
    d = cone.dual_generators
    dd = _canonical_order(double_description(d, tol), d, 1e-9)
    return PolyhedralCone(d, _dual=dd)


def contains(cone: PolyhedralCone, x, tol: float = 1e-9) -> bool:
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape[0] != cone.dim:
        raise ShapeError(f"vector of length {x.shape[0]} vs cone dimension {cone.dim}")
    return bool(np.all(cone.dual_generators @ x >= -tol))


def complementary_pairs(cone: PolyhedralCone, orth_tol: float = DEFAULT.orth_tol):
    """Index pairs ``(i_dual, i_gen)`` with ``dual_i . gen_j == 0``."""
    ip = cone.dual_generators @ cone.generators.T
    return [(int(i), int(j)) for i, j in zip(*np.nonzero(np.abs(ip) <= orth_tol))]


def product_cone(cones: Sequence[PolyhedralCone]) -> PolyhedralCone:
    """Cartesian product with block-embedded generators and duals."""
    if not cones:
        raise ValueError("need at least one cone")
    n = sum(c.dim for c in cones)
    gens, duals = [], []
    offset = 0
    for c in cones:
        for src, dst in ((c.generators, gens), (c.dual_generators, duals)):
            block = np.zeros((src.shape[0], n))
            block[:, offset:offset + c.dim] = src
            dst.append(block)
        offset += c.dim
    return PolyhedralCone(np.vstack(gens), _dual=np.vstack(duals))


@dataclass(frozen=True)
class ConeTriple:
    """State, input and output cones ``(X, U, Y)`` of one system."""

    state: PolyhedralCone
    input: PolyhedralCone
    output: PolyhedralCone

    def check_dims(self, n: int, m: int, p: int) -> None:
        got = (self.state.dim, self.input.dim, self.output.dim)
        if got != (n, m, p):
            raise ShapeError(f"cone dimensions {got} do not match system (n, m, p) = {(n, m, p)}")

    def to_json(self) -> dict:
        return {"state": self.state.to_json(), "input": self.input.to_json(),
                "output": self.output.to_json()}

    @classmethod
    def from_json(cls, obj: dict, tol: Tolerances = DEFAULT) -> "ConeTriple":
        return cls(*(PolyhedralCone.from_json(obj[k], tol) for k in ("state", "input", "output")))
