import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import _moments, fock_operators, gaussian_fock_state, sme_covariance_drift
from sngrav.model import Configuration, Theory, internal_params, table_one
from sngrav.riccati import (ConvergenceError, CovarianceSingle, CovarianceTwo, care_steady,
                            closed_form_steady, covariance_dynamics_two, ground_state,
                            integrate_single, integrate_to_steady, integrate_two,
                            riccati_rhs_single, steady_covariance_single, steady_covariance_two)
from sngrav.systems import build_system, riccati_rhs

N_FOCK = 80


@pytest.mark.parametrize("theta", [math.pi / 2, 0.0, 0.3, 1.1, 2.5])
@pytest.mark.parametrize("temperature", [0.0, 0.7])
def test_rhs_matches_fock_sme(theta, temperature):
    p = internal_params(Lambda=1.3, q_m=1e15, omega_sn=0.5, temperature=temperature)
    rho = gaussian_fock_state(N_FOCK, p.omega_q, 0.4, 0.7, 0.5 + 0.3j)
    _, x, pm = fock_operators(N_FOCK, p.omega_q)
    V, _ = _moments(rho, x, pm)
    expect = sme_covariance_drift(rho, p.omega_q, p.alpha, theta, p.thermal_diffusion)
    got = np.array(riccati_rhs_single(CovarianceSingle(*V), p, theta).as_tuple())
    assert np.allclose(got, expect, rtol=1e-9, atol=1e-10)


def test_matrix_rhs_equals_scalar_rhs(desk):
    V = CovarianceSingle(0.7, 0.1, 0.9)
    for theta in (0.2, math.pi / 2):
        sys = build_system(desk, theta=theta)
        a = riccati_rhs(sys, V.as_matrix())
        b = riccati_rhs_single(V, desk, theta).as_matrix()
        assert np.allclose(a, b, rtol=1e-13, atol=1e-14)


@pytest.mark.parametrize("Lam", [0.3, 1.0, 3.0])
def test_closed_form_is_high_q_fixed_point(Lam):
    p = internal_params(Lambda=Lam, q_m=1e12, omega_sn=0.5)
    V = integrate_to_steady(p, math.pi / 2)
    c = closed_form_steady(p, p.omega_q)
    for a, b in zip(V.as_tuple(), c.as_tuple()):
        assert a == pytest.approx(b, rel=1e-8)


@given(st.floats(1e-2, 1e2))
def test_closed_form_purity(Lam):
    p = internal_params(Lambda=Lam, omega_sn=0.5)
    V = closed_form_steady(p, p.omega_q)
    assert V.determinant == pytest.approx(p.hbar**2 / 4, rel=1e-10)


def test_closed_form_si_units():
    p = table_one()
    V = steady_covariance_single(p, method="closed")
    assert V.determinant == pytest.approx(p.hbar**2 / 4, rel=1e-10)
    assert V.xx > 0 and V.pp > 0


def test_measurement_off_gives_ground_state(desk):
    p = desk.with_meas(alpha=0.0)
    V = steady_covariance_single(p)
    g = ground_state(p, p.omega_q)
    assert np.allclose(V.as_tuple(), g.as_tuple(), rtol=1e-14)


@pytest.mark.parametrize("theta", [0.4, math.pi / 2, 2.0])
@pytest.mark.parametrize("temperature, q_m", [(0.0, 1e3), (3.0, 1e3), (0.0, 1e12)])
def test_care_is_fixed_point_and_psd(desk, theta, temperature, q_m):
    p = desk.with_mech(temperature=temperature, q_m=q_m)
    V = steady_covariance_single(p, theta, method="care")
    res = np.abs(riccati_rhs_single(V, p, theta).as_tuple())
    assert res.max() < 1e-10
    assert V.xx > 0 and V.determinant > 0


@pytest.mark.parametrize("theta", [0.4, math.pi / 2, 2.0])
@pytest.mark.parametrize("temperature, q_m", [(3.0, 1e3), (0.0, 1e12)])
def test_uncertainty_bound_where_the_bath_model_holds(desk, theta, temperature, q_m):
    # the viscous dissipator carries no zero-point noise, so the bound is only
    # guaranteed for k_B T >~ hbar omega or negligible damping
    p = desk.with_mech(temperature=temperature, q_m=q_m)
    V = steady_covariance_single(p, theta, method="care")
    assert V.determinant >= p.hbar**2 / 4 * (1 - 1e-9)


def test_integration_matches_care(desk):
    V = integrate_to_steady(desk, 0.8)
    C = steady_covariance_single(desk, 0.8, method="care")
    assert np.allclose(V.as_tuple(), C.as_tuple(), rtol=1e-8)


def test_integrate_single_records_history(desk):
    V, trace = integrate_single(ground_state(desk, 1.0), desk, math.pi / 2, t_end=2.0,
                                record_every=10)
    assert len(trace) > 0 and isinstance(V, CovarianceSingle)


def test_closed_form_rejects_wrong_conditions(desk):
    with pytest.raises(ValueError):
        steady_covariance_single(desk, 0.3, method="closed")
    with pytest.raises(ValueError):
        steady_covariance_single(desk, method="nope")


def test_divergent_integration_raises(desk):
    with pytest.raises(ConvergenceError):
        integrate_to_steady(desk, math.pi / 2, dt=10.0, max_periods=50)


def test_quantum_gravity_uses_bare_frequency():
    p = internal_params(Lambda=1.0, omega_sn=0.5, theory=Theory.QG)
    V = steady_covariance_single(p.with_mech(q_m=1e12), method="care")
    c = closed_form_steady(p, p.omega_m)
    assert np.allclose(V.as_tuple(), c.as_tuple(), rtol=1e-9)


def test_two_mirror_cross_block_vanishes_without_gravity():
    p = internal_params(Lambda=1.0, omega_g=0.0, configuration=Configuration.LINEAR)
    V = steady_covariance_two(p)
    assert np.all(V.cross == 0.0)
    single = internal_params(Lambda=1.0)
    s = steady_covariance_single(single, method="care")
    assert np.allclose(V.block_a.as_tuple(), s.as_tuple(), rtol=1e-10)


def test_two_mirror_fixed_point_and_symmetry(desk_linear):
    V = steady_covariance_two(desk_linear)
    d = covariance_dynamics_two(V, desk_linear).matrix
    assert np.abs(d).max() < 1e-9
    assert np.allclose(V.block_a.as_tuple(), V.block_b.as_tuple(), rtol=1e-10)
    assert np.linalg.eigvalsh(V.matrix).min() > 0


def test_two_mirror_integration_stays_psd(desk_linear):
    V0 = CovarianceTwo.from_blocks(ground_state(desk_linear, 1.0), ground_state(desk_linear, 1.0))
    V = integrate_two(V0, desk_linear, t_end=30.0, dt=0.01)
    assert np.linalg.eigvalsh(V.matrix).min() > 0


def test_block_solver_matches_joint_solver(desk_linear):
    sys = build_system(desk_linear.with_gravity(omega_g=0.0))
    V = care_steady(sys)
    from scipy import linalg
    W = linalg.solve_continuous_are(sys.A_cov.T, sys.C.T, sys.D, 0.5 * np.eye(2), s=sys.Gamma)
    assert np.allclose(V, W, rtol=1e-8, atol=1e-12)
