"""Dense two-phase simplex and strict-inequality feasibility.

The solver works on a full tableau. It is meant for desk-scale certificate
problems (tens of variables, a few hundred rows), not for general LP work.

Problems are stated as::

    maximize    c^T z
    subject to  G z >= h
                E z  = e
                lower <= z <= upper      (bounds may be infinite)

Strict systems ``a^T z > b`` are realised with a shared margin variable
``t``: maximize ``t`` subject to ``a^T z >= b + t`` for every (unit-normalised)
strict row, with ``t <= 1`` and ``|z_i| <= M``. The system is declared
strictly feasible iff ``t* > strict_tol``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .config import Tolerances, default_tolerances
from .errors import ShapeError, SolverStalledError

__all__ = [
    "LpProblem",
    "LpSolution",
    "StrictSystem",
    "StrictSolution",
    "solve",
    "solve_strict",
    "OPTIMAL",
    "INFEASIBLE",
    "UNBOUNDED",
]

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

_PIVOT_EPS = 1e-9
_COST_EPS = 1e-9


def _rows(a, n: int, name: str) -> np.ndarray:
    if a is None:
        return np.zeros((0, n))
    a = np.array(a, dtype=float)
    if a.size == 0:
        return np.zeros((0, n))
    a = np.atleast_2d(a)
    if a.shape[1] != n:
        raise ShapeError(f"{name} rows must have {n} entries, got {a.shape[1]}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite coefficients")
    return a


def _rhs(b, k: int, name: str) -> np.ndarray:
    if b is None:
        return np.zeros(k)
    b = np.array(b, dtype=float).reshape(-1)
    if b.shape[0] != k:
        raise ShapeError(f"{name} must have {k} entries, got {b.shape[0]}")
    if not np.all(np.isfinite(b)):
        raise ValueError(f"{name} has non-finite entries")
    return b


@dataclass
class LpProblem:
    """``maximize c^T z`` subject to ``G z >= h``, ``E z = e`` and bounds."""

    objective: np.ndarray
    ge_a: Optional[np.ndarray] = None
    ge_b: Optional[np.ndarray] = None
    eq_a: Optional[np.ndarray] = None
    eq_b: Optional[np.ndarray] = None
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None

    def __post_init__(self):
        self.objective = np.array(self.objective, dtype=float).reshape(-1)
        n = self.objective.shape[0]
        if n == 0:
            raise ShapeError("LP needs at least one variable")
        self.ge_a = _rows(self.ge_a, n, "ge_a")
        self.ge_b = _rhs(self.ge_b, self.ge_a.shape[0], "ge_b")
        self.eq_a = _rows(self.eq_a, n, "eq_a")
        self.eq_b = _rhs(self.eq_b, self.eq_a.shape[0], "eq_b")
        self.lower = (np.full(n, -np.inf) if self.lower is None
                      else np.array(self.lower, dtype=float).reshape(-1))
        self.upper = (np.full(n, np.inf) if self.upper is None
                      else np.array(self.upper, dtype=float).reshape(-1))
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise ShapeError("bounds must have one entry per variable")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

    @property
    def n(self) -> int:
        return self.objective.shape[0]

    def violation(self, z) -> float:
        """Largest constraint or bound violation at ``z`` (0 if feasible)."""
        z = np.asarray(z, dtype=float)
        worst = 0.0
        if self.ge_a.shape[0]:
            worst = max(worst, float(np.max(self.ge_b - self.ge_a @ z)))
        if self.eq_a.shape[0]:
            worst = max(worst, float(np.max(np.abs(self.eq_a @ z - self.eq_b))))
        worst = max(worst, float(np.max(self.lower - z)), float(np.max(z - self.upper)))
        return max(worst, 0.0)


@dataclass
class LpSolution:
    status: str
    z: Optional[np.ndarray] = None
    objective_value: float = float("nan")
    max_constraint_violation: float = float("nan")
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


class _Tableau:
    """Simplex tableau for ``max c^T x, A x = b, x >= 0`` with ``b >= 0``."""

    def __init__(self, a, b, basis, max_iter):
        m, n = a.shape
        self.t = np.zeros((m + 1, n + 1))
        self.t[:m, :n] = a
        self.t[:m, n] = b
        self.basis = list(basis)
        self.max_iter = max_iter
        self.iterations = 0

    @property
    def m(self):
        return self.t.shape[0] - 1

    def set_objective(self, c):
        n = self.t.shape[1] - 1
        row = np.zeros(n + 1)
        row[:n] = c
        for i, j in enumerate(self.basis):
            if row[j] != 0.0:
                row -= row[j] * self.t[i]
        self.t[-1] = row

    def pivot(self, r, c):
        t = self.t
        t[r] /= t[r, c]
        col = t[:, c].copy()
        col[r] = 0.0
        t -= np.outer(col, t[r])
        t[:, c] = 0.0
        t[r, c] = 1.0
        self.basis[r] = c

    def run(self, allowed) -> str:
        """Iterate to optimality over the columns flagged in ``allowed``."""
        t = self.t
        n_cols = t.shape[1] - 1
        degenerate_streak = 0
        bland = False
        bland_after = 5 * n_cols
        while True:
            if self.iterations >= self.max_iter:
                raise SolverStalledError(
                    f"simplex exceeded {self.max_iter} iterations "
                    f"(bland={bland}, degenerate streak={degenerate_streak})"
                )
            costs = np.where(allowed, t[-1, :-1], -np.inf)
            if bland:
                candidates = np.flatnonzero(costs > _COST_EPS)
                if candidates.size == 0:
                    return OPTIMAL
                col = int(candidates[0])
            else:
                col = int(np.argmax(costs))
                if costs[col] <= _COST_EPS:
                    return OPTIMAL
            column = t[:-1, col]
            rows = np.flatnonzero(column > _PIVOT_EPS)
            if rows.size == 0:
                return UNBOUNDED
            ratios = t[rows, -1] / column[rows]
            best = ratios.min()
            ties = rows[ratios <= best + 1e-12 * max(1.0, abs(best))]
            if bland:
                row = int(min(ties, key=lambda i: self.basis[i]))
            else:
                row = int(ties[np.argmax(column[ties])])
            if best <= 1e-12:
                degenerate_streak += 1
                if degenerate_streak >= bland_after:
                    bland = True
            else:
                degenerate_streak = 0
                bland = False
            self.pivot(row, col)
            self.iterations += 1


def _standard_form(p: LpProblem):
    """Map ``p`` onto ``max c^T y, A y (=) b, y >= 0``.

    Returns the data plus an affine map ``z = z0 + T y``.
    """
    n = p.n
    cols = []  # (original index, sign, offset)
    upper_rows = []  # (column index, bound)
    z0 = np.zeros(n)
    for i in range(n):
        lo, hi = p.lower[i], p.upper[i]
        if np.isfinite(lo):
            z0[i] = lo
            cols.append((i, 1.0))
            if np.isfinite(hi):
                upper_rows.append((len(cols) - 1, hi - lo))
        elif np.isfinite(hi):
            z0[i] = hi
            cols.append((i, -1.0))
        else:
            cols.append((i, 1.0))
            cols.append((i, -1.0))
    ny = len(cols)
    tmap = np.zeros((n, ny))
    for j, (i, sgn) in enumerate(cols):
        tmap[i, j] = sgn

    g = p.ge_a @ tmap
    h = p.ge_b - p.ge_a @ z0
    e_mat = p.eq_a @ tmap
    e_rhs = p.eq_b - p.eq_a @ z0

    n_ge, n_eq, n_up = g.shape[0], e_mat.shape[0], len(upper_rows)
    n_slack = n_ge + n_up
    m = n_ge + n_eq + n_up
    a = np.zeros((m, ny + n_slack))
    b = np.zeros(m)
    slack_of_row = {}
    a[:n_ge, :ny] = g
    a[np.arange(n_ge), ny + np.arange(n_ge)] = -1.0
    b[:n_ge] = h
    for k in range(n_ge):
        slack_of_row[k] = ny + k
    a[n_ge:n_ge + n_eq, :ny] = e_mat
    b[n_ge:n_ge + n_eq] = e_rhs
    for k, (j, bound) in enumerate(upper_rows):
        r = n_ge + n_eq + k
        a[r, j] = 1.0
        a[r, ny + n_ge + k] = 1.0
        b[r] = bound
        slack_of_row[r] = ny + n_ge + k

    # row scaling for conditioning
    scale = np.max(np.abs(a), axis=1)
    scale[scale == 0.0] = 1.0
    a /= scale[:, None]
    b /= scale
    neg = b < 0
    a[neg] *= -1.0
    b[neg] *= -1.0

    c = np.zeros(ny + n_slack)
    c[:ny] = p.objective @ tmap
    return a, b, c, slack_of_row, z0, tmap, ny


def solve(p: LpProblem, tol: Optional[Tolerances] = None) -> LpSolution:
    """Solve ``p`` with the two-phase simplex method."""
    tol = tol or default_tolerances()
    a, b, c, slack_of_row, z0, tmap, ny = _standard_form(p)
    m, n_struct = a.shape

    if m == 0:
        if np.any(c > _COST_EPS):
            return LpSolution(UNBOUNDED)
        z = z0.copy()
        return LpSolution(OPTIMAL, z, float(p.objective @ z), p.violation(z))

    # initial basis: slacks with +1 coefficient where available, else artificials
    basis = []
    art_rows = []
    for r in range(m):
        j = slack_of_row.get(r)
        if j is not None and a[r, j] > 0:
            basis.append(j)
        else:
            basis.append(None)
            art_rows.append(r)
    n_art = len(art_rows)
    full = np.zeros((m, n_struct + n_art))
    full[:, :n_struct] = a
    for k, r in enumerate(art_rows):
        full[r, n_struct + k] = 1.0
        basis[r] = n_struct + k

    tab = _Tableau(full, b, basis, tol.lp_max_iter)
    allowed = np.ones(n_struct + n_art, dtype=bool)
    if n_art:
        c1 = np.zeros(n_struct + n_art)
        c1[n_struct:] = -1.0
        tab.set_objective(c1)
        tab.run(allowed)
        # objective-row rhs holds minus the objective, i.e. the artificial sum
        if tab.t[-1, -1] > 1e-9 * max(1.0, float(np.max(np.abs(b)))):
            return LpSolution(INFEASIBLE, iterations=tab.iterations)
        # drive remaining artificials out of the basis
        keep = np.ones(m, dtype=bool)
        for r in range(m):
            if tab.basis[r] >= n_struct:
                row = tab.t[r, :n_struct]
                nz = np.flatnonzero(np.abs(row) > 1e-9)
                if nz.size:
                    tab.pivot(r, int(nz[np.argmax(np.abs(row[nz]))]))
                else:
                    keep[r] = False
        if not keep.all():
            rows = np.append(np.flatnonzero(keep), m)
            tab.t = tab.t[rows]
            tab.basis = [tab.basis[r] for r in np.flatnonzero(keep)]
            a = a[keep]
            b = b[keep]
        tab.t = np.delete(tab.t, np.s_[n_struct:n_struct + n_art], axis=1)
        allowed = np.ones(n_struct, dtype=bool)

    tab.set_objective(c)
    status = tab.run(allowed)
    if status == UNBOUNDED:
        return LpSolution(UNBOUNDED, iterations=tab.iterations)

    # recompute basic values from the unpivoted data to shed accumulated roundoff
    y = np.zeros(n_struct)
    bcols = np.array(tab.basis)
    xb, *_ = np.linalg.lstsq(a[:, bcols], b, rcond=None)
    xb = np.where((xb < 0) & (xb > -1e-9), 0.0, xb)
    y[bcols] = xb
    z = z0 + tmap @ y[:ny]
    viol = p.violation(z)
    if viol > tol.feas_tol:
        # fall back to the tableau values if the refit made things worse
        y_tab = np.zeros(n_struct)
        y_tab[bcols] = tab.t[:-1, -1]
        z_tab = z0 + tmap @ y_tab[:ny]
        if p.violation(z_tab) < viol:
            z, viol = z_tab, p.violation(z_tab)
    value = float(p.objective @ z)
    return LpSolution(OPTIMAL, z, value, viol, tab.iterations)


@dataclass
class StrictSystem:
    """Rows ``strict_a z > strict_b`` and ``weak_a z >= weak_b``.

    ``lower``/``upper`` override the default box ``|z_i| <= box`` per variable.
    """

    n: int
    strict_a: np.ndarray = None
    strict_b: np.ndarray = None
    weak_a: np.ndarray = None
    weak_b: np.ndarray = None
    box: Optional[float] = None
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    labels: dict = field(default_factory=dict)

    def __post_init__(self):
        self.strict_a = _rows(self.strict_a, self.n, "strict_a")
        self.strict_b = _rhs(self.strict_b, self.strict_a.shape[0], "strict_b")
        self.weak_a = _rows(self.weak_a, self.n, "weak_a")
        self.weak_b = _rhs(self.weak_b, self.weak_a.shape[0], "weak_b")
        if self.box is not None and not self.box > 0:
            raise ValueError("box must be positive")

    def strict_slack(self, z) -> np.ndarray:
        return self.strict_a @ z - self.strict_b

    def weak_slack(self, z) -> np.ndarray:
        return self.weak_a @ z - self.weak_b


@dataclass
class StrictSolution(LpSolution):
    margin: float = float("nan")
    feasible: bool = False


def _unit_rows(a, b):
    norms = np.linalg.norm(a, axis=1)
    scale = np.where(norms > 0, norms, 1.0)
    return a / scale[:, None], b / scale, norms > 0


def solve_strict(s: StrictSystem, tol: Optional[Tolerances] = None) -> StrictSolution:
    """Maximise the common margin of the strict rows of ``s``."""
    tol = tol or default_tolerances()
    n = s.n
    box = s.box if s.box is not None else tol.box
    sa, sb, _ = _unit_rows(s.strict_a, s.strict_b)
    wa, wb, nonzero = _unit_rows(s.weak_a, s.weak_b)
    if np.any(~nonzero & (wb > tol.feas_tol)):
        return StrictSolution(INFEASIBLE)
    wa, wb = wa[nonzero], wb[nonzero]

    lower = np.full(n, -box) if s.lower is None else np.asarray(s.lower, float)
    upper = np.full(n, box) if s.upper is None else np.asarray(s.upper, float)
    k = sa.shape[0]
    ge_a = np.zeros((k + wa.shape[0], n + 1))
    ge_a[:k, :n] = sa
    ge_a[:k, n] = -1.0
    ge_a[k:, :n] = wa
    ge_b = np.concatenate([sb, wb])
    obj = np.zeros(n + 1)
    obj[n] = 1.0
    prob = LpProblem(
        obj, ge_a, ge_b,
        lower=np.append(lower, -np.inf), upper=np.append(upper, 1.0),
    )
    sol = solve(prob, tol)
    if not sol.optimal:
        # with t free below, only the weak rows or bounds can make this infeasible
        return StrictSolution(sol.status, iterations=sol.iterations)
    z = sol.z[:n]
    if k:
        margin = float(np.min(sa @ z - sb))
        margin = min(margin, 1.0)
    else:
        margin = 1.0
    viol = 0.0
    if wa.shape[0]:
        viol = max(viol, float(np.max(wb - wa @ z)))
    viol = max(viol, float(np.max(lower - z)), float(np.max(z - upper)), 0.0)
    return StrictSolution(
        OPTIMAL, z, margin, viol, sol.iterations,
        margin=margin, feasible=bool(margin > tol.strict_tol and viol <= tol.feas_tol),
    )
