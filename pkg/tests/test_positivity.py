import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conecert.cones import ConeTriple, orthant
from conecert.errors import DomainError, PreconditionError, ShapeError
from conecert.linalg import spectral_abscissa
from conecert.positivity import (
    LinearSystem,
    SupplyRate,
    certificate_from_exponential,
    certify_dissipativity,
    certify_stability,
    check_positivity,
    dissipativity_residuals,
    find_supply_rate,
    is_metzler_positive,
    recover_alpha,
    stability_constraints,
    stability_residuals,
)
from tests.conftest import MS_A, MS_B, MS_C, MS_F, cone_preserving_matrix, random_cone, random_metzler


def test_linear_system_shapes():
    s = LinearSystem(np.eye(3))
    assert (s.n, s.m, s.p) == (3, 1, 1)
    s = LinearSystem(MS_A, [0, 1], [1, 0])
    assert s.B.shape == (2, 1) and s.C.shape == (1, 2)
    with pytest.raises(ShapeError):
        LinearSystem(np.ones((2, 3)))
    with pytest.raises(ShapeError):
        LinearSystem(MS_A, np.ones((3, 1)))
    with pytest.raises(ShapeError):
        LinearSystem(MS_A, MS_B, MS_C).with_feedback(np.ones((2, 2)))


def test_json_round_trip(mass_spring):
    back = LinearSystem.from_json(mass_spring.to_json())
    np.testing.assert_array_equal(back.A, mass_spring.A)
    np.testing.assert_array_equal(back.C, mass_spring.C)


def test_closed_loop_with_reference_gain_is_positive(ms_closed_loop, ms_cones):
    rep = check_positivity(ms_closed_loop, ms_cones)
    assert rep.overall
    vals = {(i, j): v for i, j, v in rep.residuals["thm1-I"]}
    assert vals[(0, 0)] == pytest.approx(1.0, abs=1e-12)
    assert vals[(1, 1)] == pytest.approx(0.0, abs=1e-12)


def test_open_loop_violates_state_invariance(mass_spring, ms_cones):
    rep = check_positivity(mass_spring, ms_cones)
    assert not rep.invariant_state and rep.input_ok and rep.output_ok
    assert rep.state_violations


def test_bad_output_map_detected(ms_cones):
    s = LinearSystem(MS_A, MS_B, [[-1.0, 0.0]]).with_feedback(MS_F)
    rep = check_positivity(s, ms_cones)
    assert rep.invariant_state and not rep.output_ok


def test_metzler_check():
    assert is_metzler_positive(LinearSystem([[-1, 2], [0, -3]], [[1], [0]], [[1, 1]]))
    assert not is_metzler_positive(LinearSystem([[-1, -2], [0, -3]]))


def test_certify_stability_mass_spring(ms_closed_loop, ms_cone):
    cert = certify_stability(ms_closed_loop, ms_cone)
    assert cert.certified
    res = stability_residuals(ms_closed_loop.A, ms_cone, cert.v)
    assert min(res["thm2-10a"]) > 0 and min(res["thm2-10b"]) > 0


def test_reference_storage_vector_certifies(ms_closed_loop, ms_cone):
    res = stability_residuals(ms_closed_loop.A, ms_cone, [5.09, 0.836])
    assert min(res["thm2-10a"]) > 0 and min(res["thm2-10b"]) > 0


def test_stability_requires_invariance(mass_spring, ms_cone):
    with pytest.raises(PreconditionError) as info:
        certify_stability(mass_spring, ms_cone)
    assert "thm1-I" in info.value.violations


def test_marginal_system_not_certified():
    # eigenvalues 0 and -2
    A = np.array([[-1.0, 1.0], [1.0, -1.0]])
    assert spectral_abscissa(A) == pytest.approx(0.0, abs=1e-12)
    assert not certify_stability(A, orthant(2)).certified


def test_orthant_constraints_are_linear_lyapunov_rows(rng):
    A = random_metzler(rng, 4, -0.5)
    rows = stability_constraints(A, orthant(4))
    # {v > 0, -A^T v > 0}
    expected = np.vstack([np.eye(4), -A.T])
    assert {tuple(np.round(r, 12)) for r in rows} == {tuple(np.round(r, 12)) for r in expected}


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000), st.integers(2, 4), st.sampled_from([-1.0, 1.0]))
def test_certificate_iff_hurwitz(seed, n, sign):
    rng = np.random.default_rng(seed)
    cone = random_cone(rng, n)
    A = cone_preserving_matrix(rng, cone, sign * rng.uniform(0.05, 1.0))
    assert check_positivity(LinearSystem(A), ConeTriple(cone, orthant(1), orthant(1))).invariant_state
    assert certify_stability(A, cone).certified == (np.linalg.eigvals(A).real.max() < 0)


def test_certificate_from_exponential(ms_closed_loop, ms_cone):
    cert = certificate_from_exponential(ms_closed_loop.A, ms_cone, 10.0)
    assert cert.satisfied
    assert min(cert.residuals["thm2-10a"]) > 0 and min(cert.residuals["thm2-10b"]) > 0


def test_certificate_from_exponential_needs_hurwitz(ms_closed_loop, ms_cone):
    A = ms_closed_loop.A + 3.0 * np.eye(2)  # still invariant, eigenvalues 1 and -8
    with pytest.raises(DomainError):
        certificate_from_exponential(A, ms_cone, 1.0)


def test_certificate_from_exponential_random(rng):
    for _ in range(20):
        n = int(rng.integers(2, 5))
        cone = random_cone(rng, n)
        A = cone_preserving_matrix(rng, cone, -rng.uniform(0.1, 1.0))
        assert certificate_from_exponential(A, cone, 5.0).satisfied


def test_find_supply_rate_mass_spring(ms_closed_loop, ms_cones):
    cert = find_supply_rate(ms_closed_loop, ms_cones)
    assert cert.certified and cert.alpha > 0
    res = dissipativity_residuals(ms_closed_loop, ms_cones, cert.v, cert.alpha, cert.supply)
    assert min(res["thm3-10a"]) > 0 and min(res["thm3-17"]) > 0
    assert min(res["thm3-14b"]) >= -1e-8 and min(res["thm3-14c"]) >= -1e-8


def test_certify_with_reference_supply(ms_closed_loop, ms_cones):
    v = np.array([5.09, 0.836])
    r = v @ MS_B
    cert = certify_dissipativity(ms_closed_loop, ms_cones, SupplyRate(-r, r))
    assert cert.certified
    assert cert.alpha == pytest.approx(
        recover_alpha(ms_closed_loop, ms_cones.state.generators, cert.v, cert.supply.q))


def test_overly_demanding_supply_rejected(ms_closed_loop, ms_cones):
    # r = 0 forces v^T B <= 0 on the input cone, incompatible with v > 0 here
    cert = certify_dissipativity(ms_closed_loop, ms_cones, SupplyRate([-1.0], [0.0]))
    assert not cert.certified


def test_supply_shape_checked(ms_closed_loop, ms_cones):
    with pytest.raises(ShapeError):
        certify_dissipativity(ms_closed_loop, ms_cones, SupplyRate([1.0, 2.0], [1.0]))


def test_dissipativity_requires_positivity(mass_spring, ms_cones):
    with pytest.raises(PreconditionError):
        find_supply_rate(mass_spring, ms_cones)


def test_random_dissipativity_certificates(rng):
    issued = 0
    for _ in range(15):
        n = int(rng.integers(2, 4))
        X = random_cone(rng, n)
        A = cone_preserving_matrix(rng, X, -rng.uniform(0.1, 1.0))
        B = X.generators.T @ rng.uniform(size=(len(X.generators), 1))  # maps R+ into X
        C = rng.uniform(size=(1, len(X.dual_generators))) @ X.dual_generators  # X into R+
        sys = LinearSystem(A, B, C)
        cones = ConeTriple(X, orthant(1), orthant(1))
        cert = find_supply_rate(sys, cones)
        assert cert.certified
        res = dissipativity_residuals(sys, cones, cert.v, cert.alpha, cert.supply)
        assert min(res["thm3-14b"]) >= -1e-7 * max(1, np.abs(cert.v).max())
        issued += 1
    assert issued == 15


def test_unstable_positive_system_certifies_with_nonnegative_supply(rng):
    # instability shows up as a supply with q having to pay for growth
    X = orthant(2)
    sys = LinearSystem([[0.5, 1.0], [0.0, -1.0]], [[1.0], [0.0]], [[1.0, 1.0]])
    cert = find_supply_rate(sys, ConeTriple(X, orthant(1), orthant(1)))
    assert cert.certified
    assert cert.supply.q[0] > 0
