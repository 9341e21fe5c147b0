from __future__ import annotations

import functools

import numpy as np
import pytest

import conecert
import conecert.positivity as positivity
from conecert.cones import ConeTriple, PolyhedralCone, orthant
from conecert.positivity import LinearSystem

# ---------------------------------------------------------------------------
# every dissipativity certificate produced anywhere in the run is recorded so
# that the acceptance suite can check the integral inequality on all of them
# ---------------------------------------------------------------------------

ISSUED_CERTIFICATES: list = []


def _recording(fn):
    @functools.wraps(fn)
    def wrapper(sys, cones, *args, **kwargs):
        cert = fn(sys, cones, *args, **kwargs)
        if cert.certified:
            ISSUED_CERTIFICATES.append((sys, cones, cert))
        return cert

    return wrapper


for _name in ("certify_dissipativity", "find_supply_rate"):
    _wrapped = _recording(getattr(positivity, _name))
    setattr(positivity, _name, _wrapped)
    setattr(conecert, _name, _wrapped)


ACCEPTANCE_LINES: dict = {}


def pytest_collection_modifyitems(session, config, items):
    # the certificate sweep must see everything the rest of the run issued
    last = [it for it in items if "certificates_satisfy_dissipation" in it.name]
    rest = [it for it in items if it not in last]
    items[:] = rest + last


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])


# ---------------------------------------------------------------------------
# unit mass-spring with a two-ray state cone
# ---------------------------------------------------------------------------

MS_A = np.array([[0.0, 1.0], [-1.0, 0.0]])
MS_B = np.array([[0.0], [1.0]])
MS_C = np.array([[1.0, 0.0]])
MS_F = np.array([[-21.0, -13.0]])
MS_V = np.array([5.09, 0.836])
MS_GENERATORS = [[0.0, 1.0], [1.0, -2.0]]


@pytest.fixture
def mass_spring():
    return LinearSystem(MS_A, MS_B, MS_C)


@pytest.fixture
def ms_cone():
    return PolyhedralCone(MS_GENERATORS)


@pytest.fixture
def ms_cones(ms_cone):
    return ConeTriple(ms_cone, orthant(1), orthant(1))


@pytest.fixture
def ms_closed_loop(mass_spring):
    return mass_spring.with_feedback(MS_F)


# ---------------------------------------------------------------------------
# random generators
# ---------------------------------------------------------------------------


def random_cone(rng, n: int, k: int | None = None) -> PolyhedralCone:
    """Proper cone with ``k`` generators scattered around a random axis."""
    k = k or int(rng.integers(n, n + 4))
    axis = rng.normal(size=n)
    axis /= np.linalg.norm(axis)
    while True:
        spread = rng.normal(size=(k, n))
        spread -= np.outer(spread @ axis, axis)
        gens = axis + rng.uniform(0.3, 1.5) * spread / np.linalg.norm(spread, axis=1)[:, None]
        if np.linalg.svd(gens, compute_uv=False)[-1] > 0.05:
            return PolyhedralCone(gens)


def cone_preserving_matrix(rng, cone: PolyhedralCone, abscissa: float) -> np.ndarray:
    """``-c I + sum c_ij X_i X*_j^T`` with ``c_ij >= 0``; ``c`` sets the abscissa.

    The sum maps the cone into itself, so its spectral radius is its leading
    eigenvalue and the abscissa of the result is that radius minus ``c``.
    """
    X, Xd = cone.generators, cone.dual_generators
    coef = rng.uniform(0.0, 1.0, size=(len(X), len(Xd)))
    coef *= rng.uniform(size=coef.shape) < 0.7
    M = X.T @ coef @ Xd
    rho = max(abs(np.linalg.eigvals(M)))
    return M - (rho - abscissa) * np.eye(cone.dim)


def random_metzler(rng, n: int, abscissa: float) -> np.ndarray:
    off = rng.uniform(0.0, 2.0, size=(n, n)) * (rng.uniform(size=(n, n)) < 0.6)
    np.fill_diagonal(off, 0.0)
    off += np.diag(rng.uniform(-1.0, 1.0, size=n))
    shift = max(np.linalg.eigvals(off).real) - abscissa
    return off - shift * np.eye(n)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
