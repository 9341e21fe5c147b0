"""Networks of cone-positive systems coupled through their outputs.

Subsystem ``j`` receives ``u_j = sum_k W[j, k] y_k``. Stability of the closed
network is certified by one joint LP in scaled storages and supply rates
``(v_j, q_j, r_j)``; ring networks additionally get a block-circulant
eigenvalue path that scales to thousands of nodes.

Subsystem indices are 0-based throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .config import Tolerances, default_tolerances
from .cones import ConeTriple, PolyhedralCone, product_cone
from .errors import PreconditionError, ShapeError
from .linalg import Spectrum, _sorted_spectrum, as_matrix, complex_eigenvalues, eigenvalues
from .lp import StrictSystem, solve_strict
from .positivity import LinearSystem, check_positivity

__all__ = [
    "NetworkSpec",
    "NetworkCertificate",
    "RingSpec",
    "check_coupling_cones",
    "certify_network",
    "network_residuals",
    "assemble_closed_loop",
    "ring_spectrum",
    "ring_network",
    "ring_spec",
    "product_state_cone",
]


@dataclass
class NetworkSpec:
    subsystems: Sequence[LinearSystem]
    cones: Sequence[ConeTriple]
    coupling: Mapping[tuple, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not self.subsystems:
            raise ValueError("a network needs at least one subsystem")
        if len(self.cones) != len(self.subsystems):
            raise ShapeError("one cone triple per subsystem is required")
        for sys, tri in zip(self.subsystems, self.cones):
            tri.check_dims(sys.n, sys.m, sys.p)
        coupling = {}
        for (j, k), w in self.coupling.items():
            if not (0 <= j < self.N and 0 <= k < self.N):
                raise ShapeError(f"coupling index ({j}, {k}) out of range for N={self.N}")
            w = as_matrix(w, f"W[{j},{k}]")
            want = (self.subsystems[j].m, self.subsystems[k].p)
            if w.shape != want:
                raise ShapeError(f"W[{j},{k}] must be {want}, got {w.shape}")
            coupling[(int(j), int(k))] = w
        self.coupling = coupling

    @property
    def N(self) -> int:
        return len(self.subsystems)

    def W(self, j: int, k: int) -> np.ndarray:
        w = self.coupling.get((j, k))
        if w is None:
            return np.zeros((self.subsystems[j].m, self.subsystems[k].p))
        return w


@dataclass
class NetworkCertificate:
    """Scaled storages/supplies per subsystem plus the LP margin."""

    v: list
    q: list
    r: list
    margin: float
    certified: bool
    status: str = "optimal"

    def to_json(self) -> dict:
        return {
            "v": [x.tolist() for x in self.v],
            "q": [x.tolist() for x in self.q],
            "r": [x.tolist() for x in self.r],
            "margin": self.margin,
        }


@dataclass(frozen=True)
class RingSpec:
    """``N`` identical blocks; node ``j`` is driven by node ``j+1 (mod N)``."""

    N: int
    block_A: np.ndarray
    block_coupling: np.ndarray

    def __post_init__(self):
        a = as_matrix(self.block_A, "block_A")
        c = as_matrix(self.block_coupling, "block_coupling")
        if a.shape[0] != a.shape[1] or a.shape != c.shape:
            raise ShapeError("ring blocks must be square and of equal order")
        if int(self.N) < 1:
            raise ValueError("N must be positive")
        object.__setattr__(self, "block_A", a)
        object.__setattr__(self, "block_coupling", c)


def check_coupling_cones(net: NetworkSpec, tol: Optional[Tolerances] = None):
    """Verify ``W[j,k] Y_k ⊆ U_j`` on generators.

    Returns ``(ok, violations)`` where each violation is
    ``(j, k, i_dual_input, i_output_gen, value)``.
    """
    tol = tol or default_tolerances()
    bad = []
    for (j, k), w in net.coupling.items():
        M = net.cones[j].input.dual_generators @ w @ net.cones[k].output.generators.T
        for a, b in zip(*np.nonzero(M < -tol.feas_tol)):
            bad.append((j, k, int(a), int(b), float(M[a, b])))
    return not bad, bad


def assemble_closed_loop(net: NetworkSpec) -> LinearSystem:
    """Block matrix with ``A_j`` on the diagonal and ``B_j W[j,k] C_k`` off it."""
    sizes = [s.n for s in net.subsystems]
    off = np.concatenate([[0], np.cumsum(sizes)])
    n = off[-1]
    A = np.zeros((n, n))
    for j, s in enumerate(net.subsystems):
        A[off[j]:off[j + 1], off[j]:off[j + 1]] = s.A
    for (j, k), w in net.coupling.items():
        A[off[j]:off[j + 1], off[k]:off[k + 1]] += (
            net.subsystems[j].B @ w @ net.subsystems[k].C
        )
    p_sizes = [s.p for s in net.subsystems]
    poff = np.concatenate([[0], np.cumsum(p_sizes)])
    C = np.zeros((poff[-1], n))
    for j, s in enumerate(net.subsystems):
        C[poff[j]:poff[j + 1], off[j]:off[j + 1]] = s.C
    return LinearSystem(A, np.zeros((n, 1)), C)


def product_state_cone(net: NetworkSpec) -> PolyhedralCone:
    return product_cone([c.state for c in net.cones])


def _layout(net: NetworkSpec, symmetric: bool):
    """Variable offsets ``(v, q, r)`` per subsystem and the total count."""
    if symmetric:
        s = net.subsystems[0]
        blk = (0, s.n, s.n + s.p)
        return [blk] * net.N, s.n + s.p + s.m
    offs, pos = [], 0
    for s in net.subsystems:
        offs.append((pos, pos + s.n, pos + s.n + s.p))
        pos += s.n + s.p + s.m
    return offs, pos


def _require_identical(net: NetworkSpec):
    s0, c0 = net.subsystems[0], net.cones[0]
    for s, c in zip(net.subsystems, net.cones):
        same = (np.array_equal(s.A, s0.A) and np.array_equal(s.B, s0.B)
                and np.array_equal(s.C, s0.C))
        same = same and all(
            np.array_equal(getattr(c, f).generators, getattr(c0, f).generators)
            for f in ("state", "input", "output"))
        if not same:
            raise ValueError("symmetric reduction needs identical subsystems and cones")


def _network_rows(net: NetworkSpec, symmetric: bool):
    offs, nv = _layout(net, symmetric)
    strict_a, weak_a, tags_s, tags_w = [], [], [], []
    members = [0] if symmetric else range(net.N)
    for j in members:
        s, tri = net.subsystems[j], net.cones[j]
        ov, oq, orr = offs[j]
        X, U = tri.state.generators, tri.input.generators
        for i, x in enumerate(X):
            row = np.zeros(nv)
            row[ov:ov + s.n] = x
            strict_a.append(row)
            tags_s.append(("thm4-20a", j, i))
        for i, x in enumerate(X):
            row = np.zeros(nv)
            row[oq:oq + s.p] = s.C @ x
            row[ov:ov + s.n] -= s.A @ x
            strict_a.append(row)
            tags_s.append(("thm4-20b", j, i))
        for i, u in enumerate(U):
            row = np.zeros(nv)
            row[orr:orr + s.m] = u
            row[ov:ov + s.n] -= s.B @ u
            weak_a.append(row)
            tags_w.append(("thm4-20c", j, i))
    # Coupling supply: -sum_j q_j.y_j - sum_j r_j.sum_k W[j,k] y_k >= 0 for all
    # outputs y_k in Y_k. The expression is separable in k, so it must hold with
    # each y_k ranging over the generators of Y_k while the other blocks are zero.
    coupling_rows = {}
    for k in range(net.N):
        Y = net.cones[k].output.generators
        for i, y in enumerate(Y):
            row = np.zeros(nv)
            oq = offs[k][1]
            row[oq:oq + net.subsystems[k].p] -= y
            for j in range(net.N):
                w = net.coupling.get((j, k))
                if w is None:
                    continue
                orr = offs[j][2]
                row[orr:orr + net.subsystems[j].m] -= w @ y
            key = tuple(np.round(row, 15)) if symmetric else (k, i)
            if key not in coupling_rows:
                coupling_rows[key] = (row, ("thm4-21", k, i))
    for row, tag in coupling_rows.values():
        weak_a.append(row)
        tags_w.append(tag)
    return nv, np.array(strict_a), np.array(weak_a), tags_s, tags_w


def certify_network(net: NetworkSpec, symmetric: bool = False,
                    tol: Optional[Tolerances] = None) -> NetworkCertificate:
    """Joint LP certificate of positivity and exponential stability of the network.

    Per subsystem ``j`` (strict): ``v_j^T X > 0``, ``q_j^T C_j X > v_j^T A_j X``;
    (weak): ``r_j^T U >= v_j^T B_j U``; plus the coupling rows
    ``-q_k^T y - sum_j r_j^T W[j,k] y >= 0`` for every output generator ``y``
    of every subsystem ``k``.

    ``symmetric=True`` shares one ``(v, q, r)`` across identical subsystems.
    """
    tol = tol or default_tolerances()
    ok, bad = check_coupling_cones(net, tol)
    if not ok:
        raise PreconditionError("coupling does not map output cones into input cones",
                                {"thm4-I": bad})
    for j, (s, tri) in enumerate(zip(net.subsystems, net.cones)):
        rep = check_positivity(s, tri, tol)
        if not rep.overall:
            raise PreconditionError(
                f"subsystem {j} is not positive with respect to its cone triple",
                {"thm1-I": rep.state_violations, "thm1-II": rep.input_violations,
                 "thm1-III": rep.output_violations})
    if symmetric:
        _require_identical(net)
    n_rows = sum(c.output.n_generators for c in net.cones)
    if n_rows > tol.network_row_cap:
        raise ValueError(
            f"{n_rows} coupling rows exceed the cap {tol.network_row_cap:g}; "
            "use symmetric=True for uniform networks")
    nv, sa, wa, _, _ = _network_rows(net, symmetric)
    sol = solve_strict(StrictSystem(nv, sa, np.zeros(len(sa)), wa, np.zeros(len(wa))), tol)
    if not sol.optimal:
        return NetworkCertificate([], [], [], float("-inf"), False, sol.status)
    offs, _ = _layout(net, symmetric)
    z = sol.z
    v = [z[ov:oq].copy() for ov, oq, _ in offs]
    q = [z[oq:orr].copy() for (_, oq, orr) in offs]
    r = [z[orr:orr + s.m].copy() for (_, _, orr), s in zip(offs, net.subsystems)]
    return NetworkCertificate(v, q, r, sol.margin, sol.feasible)


def network_residuals(net: NetworkSpec, cert: NetworkCertificate) -> dict:
    """Re-substitute a network certificate (all entries must be >= 0,
    ``thm4-20a``/``thm4-20b`` strictly)."""
    out = {"thm4-20a": [], "thm4-20b": [], "thm4-20c": [], "thm4-21": []}
    for j, (s, tri) in enumerate(zip(net.subsystems, net.cones)):
        X, U = tri.state.generators, tri.input.generators
        v, q, r = cert.v[j], cert.q[j], cert.r[j]
        out["thm4-20a"] += (X @ v).tolist()
        out["thm4-20b"] += (q @ s.C @ X.T - v @ s.A @ X.T).tolist()
        out["thm4-20c"] += (U @ r - v @ s.B @ U.T).tolist()
    for k in range(net.N):
        for y in net.cones[k].output.generators:
            val = -cert.q[k] @ y
            for j in range(net.N):
                w = net.coupling.get((j, k))
                if w is not None:
                    val -= cert.r[j] @ (w @ y)
            out["thm4-21"].append(float(val))
    return out


def ring_spectrum(ring: RingSpec, tol: Optional[Tolerances] = None) -> Spectrum:
    """Spectrum of the block-circulant ring matrix.

    The ring matrix is ``I ⊗ A + P ⊗ C`` with ``P`` the cyclic shift, so its
    eigenvalues are those of ``A + ω^k C`` for ``ω = exp(2πi/N)``. Order-2
    blocks use the closed-form quadratic; larger blocks go through the QR
    kernel, pairing ``k`` with ``N-k`` via a real embedding (their spectra are
    complex conjugates of each other).
    """
    tol = tol or default_tolerances()
    N = int(ring.N)
    A, C = ring.block_A, ring.block_coupling
    n = A.shape[0]
    k = np.arange(N)
    omega = np.exp(2j * np.pi * k / N)
    if n == 1:
        return _sorted_spectrum(A[0, 0] + omega * C[0, 0])
    if n == 2:
        M = A[None, :, :] + omega[:, None, None] * C[None, :, :]
        tr = M[:, 0, 0] + M[:, 1, 1]
        det = M[:, 0, 0] * M[:, 1, 1] - M[:, 0, 1] * M[:, 1, 0]
        disc = np.sqrt(tr * tr / 4 - det + 0j)
        return _sorted_spectrum(np.concatenate([tr / 2 + disc, tr / 2 - disc]))
    vals = []
    for kk in range(N // 2 + 1):
        mirror = (N - kk) % N
        if kk == mirror:
            vals.append(eigenvalues((A + np.real(omega[kk]) * C), tol).eigenvalues)
        elif kk < mirror:
            vals.append(complex_eigenvalues(A + omega[kk] * C))
    return _sorted_spectrum(np.concatenate(vals))


def ring_network(N: int, subsystem: LinearSystem, cones: ConeTriple, W=None) -> NetworkSpec:
    """``u_j = W y_{j+1}`` with ``y_N := y_0``; ``W`` defaults to the identity."""
    W = np.eye(subsystem.m, subsystem.p) if W is None else as_matrix(W, "W")
    coupling = {}
    for j in range(N):
        key = (j, (j + 1) % N)
        coupling[key] = coupling.get(key, 0) + W
    return NetworkSpec([subsystem] * N, [cones] * N, coupling)


def ring_spec(N: int, subsystem: LinearSystem, W=None) -> RingSpec:
    W = np.eye(subsystem.m, subsystem.p) if W is None else as_matrix(W, "W")
    return RingSpec(N, subsystem.A, subsystem.B @ W @ subsystem.C)
