import numpy as np
import pytest

from conecert.config import Tolerances
from conecert.cones import ConeTriple, PolyhedralCone, orthant
from conecert.errors import PreconditionError, VerificationError
from conecert.network import ring_spec, ring_spectrum
from conecert.positivity import LinearSystem, certify_stability, check_positivity, stability_residuals
from conecert.synthesis import (
    gain_rows,
    pair_matrix,
    ring_gain_residuals,
    synthesize_feedback,
    synthesize_ring_gain,
    verify_gain,
)
from tests.conftest import MS_A, MS_B, MS_C, MS_F, MS_GENERATORS, MS_V, random_cone

RAW_DUALS = np.array([[1.0, 0.0], [2.0, 1.0]])
RAW_GENS = np.array(MS_GENERATORS)


def test_reference_gain_satisfies_gain_lp_rows():
    P = pair_matrix(MS_A + MS_B @ MS_F, RAW_DUALS, RAW_GENS)
    # complementary pairs on the diagonal, cross terms off it
    assert P[0, 0] == pytest.approx(1.0) and P[1, 1] == pytest.approx(0.0)
    assert -P[0, 1] == pytest.approx(2.0) and -P[1, 0] == pytest.approx(11.0)


def test_reference_storage_decomposes_positively():
    a = np.linalg.solve(RAW_DUALS.T, MS_V)
    np.testing.assert_allclose(a, [3.418, 0.836], atol=1e-12)
    assert np.all(a > 0)
    Acl = MS_A + MS_B @ MS_F
    assert np.all(-(MS_V @ Acl @ RAW_GENS.T) > 0)


def test_synthesis_on_mass_spring(ms_cone, ms_cones):
    res = synthesize_feedback(MS_A, MS_B, ms_cone)
    assert res.feasible and res.stage == "stage2"
    F = res.gain.F
    cl = LinearSystem(MS_A, MS_B, MS_C).with_feedback(F)
    assert check_positivity(cl, ms_cones).overall
    assert certify_stability(cl, ms_cone).certified
    assert np.linalg.eigvals(cl.A).real.max() < 0
    assert np.all(np.abs(F) <= 1e3 + 1e-9)
    assert np.all(res.storage.a > 0)
    np.testing.assert_allclose(res.storage.v, res.storage.a @ ms_cone.dual_generators)
    assert set(res.stage_status) == {"stage1", "stage2"}


def test_stage_two_vector_certifies_stage_one_gain(ms_cone):
    res = synthesize_feedback(MS_A, MS_B, ms_cone)
    r = stability_residuals(MS_A + MS_B @ res.gain.F, ms_cone, res.storage.v)
    assert min(r["thm2-10a"]) > 0 and min(r["thm2-10b"]) > 0


def test_orthant_fails_in_gain_stage():
    res = synthesize_feedback(MS_A, MS_B, orthant(2), v_grid=[])
    assert not res.feasible
    assert res.stage == "stage1"
    assert not res.stage_status["stage1"]["feasible"]


def test_orthant_grid_fallback_still_infeasible():
    grid = [[1.0, 1.0], [2.0, 1.0], [1.0, 3.0]]
    assert not synthesize_feedback(MS_A, MS_B, orthant(2), v_grid=grid).feasible
    res = synthesize_feedback(MS_A, MS_B, orthant(2))
    assert not res.feasible and res.stage == "grid"
    assert res.stage_status["stage1"]["feasible"] is False


def test_fully_actuated_always_feasible():
    rng = np.random.default_rng(21)
    for _ in range(15):
        n = int(rng.integers(2, 5))
        cone = random_cone(rng, n)
        A = rng.normal(size=(n, n))
        assert verify_gain(LinearSystem(A, np.eye(n)), -A - np.eye(n), cone).feasible
        res = synthesize_feedback(A, np.eye(n), cone)
        assert res.feasible
        assert np.linalg.eigvals(A + res.gain.F).real.max() < 0


def test_grid_fallback_rescues_staged_failure():
    A = np.array([[0.1, 2.25], [0.08, -0.26]])
    B = np.array([[-1.09], [-1.24]])
    cone = PolyhedralCone([[0.59, 0.81], [0.93, -0.37]])
    staged = synthesize_feedback(A, B, cone, v_grid=[])
    assert not staged.feasible and staged.stage == "stage2"
    d = cone.dual_generators
    grid = [a * d[0] + b * d[1] for a in (0.25, 1, 4) for b in (0.25, 1, 4)]
    res = synthesize_feedback(A, B, cone, v_grid=grid)
    assert res.feasible and res.stage == "grid"
    assert np.linalg.eigvals(A + B @ res.gain.F).real.max() < 0
    np.testing.assert_allclose(res.storage.a @ d, res.storage.v, atol=1e-12)


def test_every_returned_gain_is_sound():
    rng = np.random.default_rng(22)
    returned = 0
    for _ in range(80):
        n = int(rng.integers(2, 4))
        cone = random_cone(rng, n)
        A, B = rng.normal(size=(n, n)), rng.normal(size=(n, int(rng.integers(1, 3))))
        res = synthesize_feedback(A, B, cone)
        if not res.feasible:
            continue
        returned += 1
        assert verify_gain(LinearSystem(A, B), res.gain.F, cone).feasible
        assert np.linalg.eigvals(A + B @ res.gain.F).real.max() < 0
    assert returned > 10


def test_gain_rows_are_affine_in_the_gain():
    rng = np.random.default_rng(23)
    n, m = 3, 2
    A, B = rng.normal(size=(n, n)), rng.normal(size=(n, m))
    v, x = rng.normal(size=n), rng.normal(size=n)
    row = gain_rows(B, v, x)
    for _ in range(10):
        F = rng.normal(size=(m, n))
        assert v @ (A + B @ F) @ x == pytest.approx(v @ A @ x + row @ F.reshape(-1), abs=1e-12)
    F1, F2, lam = rng.normal(size=(m, n)), rng.normal(size=(m, n)), 0.3
    f = lambda F: v @ (A + B @ F) @ x  # noqa: E731
    assert f(lam * F1 + (1 - lam) * F2) == pytest.approx(lam * f(F1) + (1 - lam) * f(F2))


def test_verify_rejects_zero_gain(ms_cone):
    with pytest.raises(VerificationError) as info:
        verify_gain(LinearSystem(MS_A, MS_B), np.zeros((1, 2)), ms_cone)
    assert info.value.residuals["thm1-I"]


def test_verify_rejects_marginal_gain(ms_cone):
    # closed loop [[0, 1], [0, -2]] keeps the cone invariant but has an eigenvalue at 0
    with pytest.raises(VerificationError) as info:
        verify_gain(LinearSystem(MS_A, MS_B), [[1.0, -2.0]], ms_cone)
    assert "stability" in str(info.value)


def test_verify_with_full_triple(ms_cones):
    res = verify_gain(LinearSystem(MS_A, MS_B, MS_C), MS_F, ms_cones)
    assert res.feasible
    assert set(res.residuals) >= {"thm1-I", "thm1-II", "thm1-III", "thm2-10a", "thm2-10b"}


def test_reference_ring_gain_satisfies_design_rows(mass_spring, ms_cones):
    res = ring_gain_residuals(mass_spring, ms_cones, MS_V, MS_F)
    assert min(res["synth-40"]) > 0
    assert min(res["thm1-I"]) >= -1e-12


def test_ring_gain_synthesis(mass_spring, ms_cones):
    g = synthesize_ring_gain(mass_spring, ms_cones, MS_V)
    assert g.margin > 1e-6
    res = ring_gain_residuals(mass_spring, ms_cones, MS_V, g.F)
    assert min(res["synth-40"]) > 0 and min(res["thm1-I"]) >= -1e-8
    cl = mass_spring.with_feedback(g.F)
    for N in (2, 10, 1000):
        assert ring_spectrum(ring_spec(N, cl)).abscissa < 0


def test_ring_gain_without_coupling_matches_single_design(ms_cone):
    sys0 = LinearSystem(MS_A, MS_B, np.zeros((1, 2)))
    cones = ConeTriple(ms_cone, orthant(1), orthant(1))
    g = synthesize_ring_gain(sys0, cones, MS_V)
    assert g.margin > 1e-6
    assert verify_gain(LinearSystem(MS_A, MS_B), g.F, ms_cone).feasible


def test_ring_gain_preconditions(mass_spring, ms_cones):
    with pytest.raises(PreconditionError) as info:
        synthesize_ring_gain(mass_spring, ms_cones, [-1.0, 0.5])
    assert "thm2-10a" in info.value.violations
    bad = LinearSystem(MS_A, -MS_B, MS_C)
    with pytest.raises(PreconditionError) as info:
        synthesize_ring_gain(bad, ms_cones, MS_V)
    assert "thm1-II" in info.value.violations


def test_ring_gain_infeasible_returns_nonpositive_margin(mass_spring, ms_cones):
    # the coupling term dominates any admissible gain when W is huge and the box small
    g = synthesize_ring_gain(mass_spring, ms_cones, MS_V, W=[[1e6]],
                             tol=Tolerances(gain_box=1.0))
    assert not g.margin > 1e-6
