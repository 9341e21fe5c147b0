"""Exact zero-order-hold simulation and trajectory checks.

Inputs are held constant between samples, so each step is
``x+ = exp(A dt) x + (int_0^dt exp(A s) ds) B u`` with no integrator error.
"""

from __future__ import annotations

import math
import os
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .cones import PolyhedralCone
from .errors import ShapeError, UnsupportedDimensionError
from .linalg import as_vector, expm, integrate_expm
from .positivity import LinearSystem, SupplyRate

__all__ = [
    "Trajectory",
    "InvarianceCheckResult",
    "DissipationCheck",
    "simulate",
    "check_invariance",
    "check_decay",
    "check_dissipation",
    "emit_phase_portrait",
    "write_atomic",
]

InputSchedule = Union[None, Sequence[float], np.ndarray, Callable[[float], Sequence[float]]]


@dataclass
class Trajectory:
    times: np.ndarray  # (K,)
    states: np.ndarray  # (K, n)
    inputs: np.ndarray  # (K, m); inputs[k] is held on [times[k], times[k+1])
    outputs: np.ndarray  # (K, p)

    def __post_init__(self):
        k = len(self.times)
        if not (len(self.states) == len(self.inputs) == len(self.outputs) == k):
            raise ShapeError("trajectory arrays must have equal length")
        if k > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if not np.all(np.isfinite(self.states)):
            raise ValueError("non-finite state in trajectory")

    def __len__(self):
        return len(self.times)


def _sample_times(t_end: float, dt: float) -> np.ndarray:
    if not dt > 0:
        raise ValueError("dt must be positive")
    if not t_end >= 0:
        raise ValueError("t_end must be nonnegative")
    steps = int(math.ceil(t_end / dt - 1e-9))
    t = np.arange(steps + 1) * dt
    if steps:
        t[-1] = t_end
    return t


def _input_array(u: InputSchedule, times: np.ndarray, m: int) -> np.ndarray:
    k = len(times)
    if u is None:
        return np.zeros((k, m))
    if callable(u):
        arr = np.array([np.asarray(u(t), float).reshape(-1) for t in times]).reshape(k, -1)
    else:
        arr = np.asarray(u, float)
        if arr.ndim <= 1:
            arr = np.tile(arr.reshape(1, -1), (k, 1))
        elif arr.shape[0] == k - 1:
            arr = np.vstack([arr, arr[-1:]])
    if arr.shape != (k, m):
        raise ShapeError(f"input schedule has shape {arr.shape}, expected {(k, m)}")
    return arr


def simulate(sys: LinearSystem, x0, u: InputSchedule = None, t_end: float = 10.0,
             dt: float = 1e-2) -> Trajectory:
    """Simulate ``x' = A x + B u``, ``y = C x`` from ``x0`` on ``[0, t_end]``.

    ``u`` may be ``None`` (zero), a constant vector, an array with one row per
    sample (or per interval), or a callable evaluated at each interval start.
    A final interval shorter than ``dt`` is used if ``t_end`` is not a
    multiple of ``dt``.
    """
    x0 = as_vector(x0, "x0")
    if x0.shape[0] != sys.n:
        raise ShapeError(f"x0 has length {x0.shape[0]}, state dimension is {sys.n}")
    times = _sample_times(t_end, dt)
    inputs = _input_array(u, times, sys.m)
    states = np.empty((len(times), sys.n))
    states[0] = x0
    cache = {}
    for k in range(1, len(times)):
        h = float(times[k] - times[k - 1])
        key = round(h, 15)
        if key not in cache:
            cache[key] = (expm(sys.A, h), integrate_expm(sys.A, h) @ sys.B)
        phi, gam = cache[key]
        states[k] = phi @ states[k - 1] + gam @ inputs[k - 1]
    return Trajectory(times, states, inputs, states @ sys.C.T)


@dataclass
class InvarianceCheckResult:
    all_inside: bool
    worst_violation: float
    first_exit_time: Optional[float] = None


def check_invariance(traj: Trajectory, cone: PolyhedralCone, tol: float = 1e-8) -> InvarianceCheckResult:
    if traj.states.shape[1] != cone.dim:
        raise ShapeError(f"states in R^{traj.states.shape[1]}, cone in R^{cone.dim}")
    facet = (traj.states @ cone.dual_generators.T).min(axis=1)
    worst = float(min(0.0, facet.min())) if len(facet) else 0.0
    outside = np.flatnonzero(facet < -tol)
    first = float(traj.times[outside[0]]) if len(outside) else None
    return InvarianceCheckResult(first is None, worst, first)


def check_decay(traj: Trajectory, v, tol: float = 1e-12) -> bool:
    """True if ``v^T x`` never increases (beyond ``tol`` relative) along ``traj``."""
    vals = traj.states @ as_vector(v, "v")
    scale = max(1.0, float(np.max(np.abs(vals)))) if len(vals) else 1.0
    return bool(np.all(np.diff(vals) <= tol * scale))


@dataclass
class DissipationCheck:
    ok: bool
    worst_gap: float  # min over intervals of supply integral minus storage increase
    worst_cumulative_gap: float
    horizon: float


def check_dissipation(sys: LinearSystem, traj: Trajectory, v, alpha: float,
                      supply: SupplyRate, tol: float = 1e-6) -> DissipationCheck:
    """Check ``e^{a t2} v^T x(t2) - e^{a t1} v^T x(t1) <= int e^{a t} (r^T u + q^T y) dt``.

    Each hold interval is integrated exactly through the augmented system
    ``[e^{a s} x; e^{a s} u; int]``. Gaps are checked per interval and
    cumulatively from ``t = 0``, relative to the magnitude of the terms. The
    horizon is cut where ``alpha t`` reaches 10 to keep the weights finite.
    """
    v = as_vector(v, "v")
    n, m = sys.n, sys.m
    N = n + m + 1
    M = np.zeros((N, N))
    M[:n, :n] = sys.A + alpha * np.eye(n)
    M[:n, n:n + m] = sys.B
    M[n:n + m, n:n + m] = alpha * np.eye(m)
    M[-1, :n] = supply.q @ sys.C
    M[-1, n:n + m] = supply.r
    horizon = float(traj.times[-1])
    if alpha > 0:
        horizon = min(horizon, 10.0 / alpha)
    worst = worst_cum = math.inf
    cum_gap = 0.0
    cum_scale = 0.0
    cache = {}
    for k in range(len(traj.times) - 1):
        t0, t1 = float(traj.times[k]), float(traj.times[k + 1])
        if t1 > horizon + 1e-12:
            break
        h = t1 - t0
        key = round(h, 15)
        if key not in cache:
            cache[key] = expm(M, h)
        z = cache[key] @ np.concatenate([traj.states[k], traj.inputs[k], [0.0]])
        w = math.exp(alpha * t0)
        increase = w * (v @ z[:n] - v @ traj.states[k])
        integral = w * z[-1]
        gap = integral - increase
        scale = max(1.0, w * abs(v @ traj.states[k]), abs(integral))
        worst = min(worst, gap / scale)
        cum_gap += gap
        cum_scale = max(cum_scale, scale)
        worst_cum = min(worst_cum, cum_gap / cum_scale)
    if worst == math.inf:
        worst = worst_cum = 0.0
    return DissipationCheck(bool(worst >= -tol and worst_cum >= -tol), float(worst),
                            float(worst_cum), horizon)


def write_atomic(path: Union[str, Path], text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file in the same directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _g(x: float) -> str:
    return "%.17g" % x


def cone_rays_path(path: Union[str, Path]) -> Path:
    path = Path(path)
    return path.with_name(f"{path.stem}_cone{path.suffix or '.csv'}")


def emit_phase_portrait(sys: LinearSystem, cone: PolyhedralCone, grid, t_end: float = 10.0,
                        dt: float = 1e-2, path: Union[str, Path] = "phase.csv",
                        tol: float = 1e-8) -> dict:
    """Simulate unforced trajectories from each grid point and write CSVs.

    ``path`` gets ``traj_id,t,x1,x2,in_cone`` rows; ``<stem>_cone.csv`` gets
    the cone's generator rays. Returns a summary with file paths and an
    invariance verdict for the trajectories that start inside the cone.
    """
    if sys.n != 2 or cone.dim != 2:
        raise UnsupportedDimensionError(f"phase portraits need a 2-D state, got n={sys.n}")
    lines = ["traj_id,t,x1,x2,in_cone"]
    started_inside = stayed_inside = 0
    worst = 0.0
    for tid, x0 in enumerate(np.asarray(grid, float).reshape(-1, 2)):
        traj = simulate(sys, x0, None, t_end, dt)
        facet = (traj.states @ cone.dual_generators.T).min(axis=1)
        for t, x, f in zip(traj.times, traj.states, facet):
            lines.append(f"{tid},{_g(t)},{_g(x[0])},{_g(x[1])},{int(f >= -tol)}")
        if facet[0] >= -tol:
            started_inside += 1
            res = check_invariance(traj, cone, tol)
            stayed_inside += res.all_inside
            worst = min(worst, res.worst_violation)
    write_atomic(path, "\n".join(lines) + "\n")
    rays = ["ray_id,x1,x2"] + [f"{i},{_g(g[0])},{_g(g[1])}"
                               for i, g in enumerate(cone.generators)]
    rays_path = cone_rays_path(path)
    write_atomic(rays_path, "\n".join(rays) + "\n")
    return {
        "path": str(path),
        "cone_path": str(rays_path),
        "rows": len(lines) - 1,
        "started_inside": started_inside,
        "stayed_inside": stayed_inside,
        "all_inside": started_inside == stayed_inside,
        "worst_violation": worst,
    }
