"""Central tolerance record.

Every numerical threshold used by the toolkit lives here so that acceptance
runs and CLI overrides have a single tuning point.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, replace

ENV_FEAS_TOL = "CONECERT_TOL_FEAS"


@dataclass(frozen=True)
class Tolerances:
    feas_tol: float = 1e-8  # max constraint violation of an accepted LP point
    strict_tol: float = 1e-6  # margin above which a strict system is feasible
    box: float = 1e3  # |z_i| <= box for strict-feasibility LPs
    gain_box: float = 1e3  # |F_ij| <= gain_box in synthesis
    orth_tol: float = 1e-9  # complementarity of unit-norm generators
    rank_tol: float = 1e-9
    invariance_tol: float = 1e-8  # facet residual tolerance on trajectories
    eig_max_order: int = 64
    eig_max_iter: int = 60  # QR sweeps per eigenvalue
    lp_max_iter: int = 50_000
    network_row_cap: float = 1e6

    def with_overrides(self, **kwargs) -> "Tolerances":
        return replace(self, **{k: v for k, v in kwargs.items() if v is not None})


def default_tolerances() -> Tolerances:
    """Defaults, with the feasibility tolerance taken from the environment if set."""
    tol = Tolerances()
    raw = os.environ.get(ENV_FEAS_TOL)
    if raw:
        tol = replace(tol, feas_tol=float(raw))
    return tol


DEFAULT = Tolerances()
