import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beltrami_lab.anomaly import bump
from beltrami_lab.beltrami import BeltramiField
from beltrami_lab.determinants import (
    HeatConfig,
    Method,
    SpectrumData,
    epstein_log_det,
    flat_torus_spectrum,
    log_abs_eta,
    log_l2_norm,
    operator_spectrum,
    quillen_gamma,
    torus_exact_log_det,
    zeta_log_det,
)
from beltrami_lab.errors import ConfigError
from beltrami_lab.geometry import MetricDensity
from beltrami_lab.torus_grid import make_grid

# ln det' at tau = i, area 1: ln|eta(i)|^4 with eta(i) = Gamma(1/4) / (2 pi^(3/4))
LOG_DET_I = -1.0546882809956724

upper = st.builds(complex, st.floats(-0.5, 0.5), st.floats(0.5, 3.0))


def test_eta_at_i_closed_form():
    from scipy.special import gamma

    assert log_abs_eta(1j) == pytest.approx(np.log(gamma(0.25) / (2 * np.pi**0.75)), abs=1e-14)
    assert torus_exact_log_det(1j, 1.0) == pytest.approx(LOG_DET_I, abs=1e-14)


def test_frozen_oracle_values():
    assert torus_exact_log_det(2j / 3, 0.96) == pytest.approx(-1.2064760503545446, abs=1e-13)
    assert torus_exact_log_det(0.3 + 1.1j, 2.0) == pytest.approx(-0.36222368919690684, abs=1e-13)


@given(upper, st.floats(0.1, 10.0))
def test_eta_and_epstein_agree(tau, area):
    assert torus_exact_log_det(tau, area) == pytest.approx(epstein_log_det(tau, area), abs=1e-8)


@given(upper)
def test_modular_invariance(tau):
    v = torus_exact_log_det(tau, 1.0)
    assert torus_exact_log_det(tau + 1, 1.0) == pytest.approx(v, abs=1e-10)
    assert torus_exact_log_det(-1 / tau, 1.0) == pytest.approx(v, abs=1e-9)


def test_large_imaginary_part_asymptotics():
    # ln det' ~ ln A + ln t - pi t / 3 for t = Im(tau) large
    for t in (6.0, 9.0):
        assert torus_exact_log_det(t * 1j, 1.0) == pytest.approx(np.log(t) - np.pi * t / 3, abs=1e-10)
    slope = torus_exact_log_det(10j, 1.0) - torus_exact_log_det(9j, 1.0)
    assert slope == pytest.approx(-np.pi / 3 + np.log(10 / 9), abs=1e-12)


def test_oracle_rejects_bad_area():
    with pytest.raises(ConfigError):
        torus_exact_log_det(1j, 0.0)


def test_regularization_on_analytic_spectrum():
    spec = flat_torus_spectrum(1j, 1.0, 20)
    zd = zeta_log_det(spec)
    assert zd.log_det == pytest.approx(LOG_DET_I, abs=1e-4)
    assert zd.zeta0 == pytest.approx(-1.0, abs=1e-6)
    assert not zd.unstable


@settings(max_examples=10)
@given(upper, st.floats(0.3, 3.0))
def test_regularization_on_analytic_spectrum_random_tori(tau, area):
    spec = flat_torus_spectrum(tau, area, 24)
    assert zeta_log_det(spec).log_det == pytest.approx(torus_exact_log_det(tau, area), abs=1e-4)


@given(st.floats(0.2, 20.0))
def test_scaling_shift_is_zeta0_log_k(k):
    spec = flat_torus_spectrum(0.2 + 1.1j, 1.0, 16)
    a = zeta_log_det(spec)
    b = zeta_log_det(spec.scaled(k))
    assert b.log_det - a.log_det == pytest.approx(a.zeta0 * np.log(k), abs=1e-8)


def test_empty_spectrum_rejected():
    with pytest.raises(ConfigError):
        zeta_log_det(SpectrumData(np.array([0.0]), 1, None, 1.0, 10.0))
    with pytest.raises(ConfigError):
        SpectrumData(np.array([-5.0, 1.0]), 0, None, 1.0, 10.0)


def test_grid_backend_constant_mu():
    g = make_grid(1j, 24)
    spec, kb = operator_spectrum(0, BeltramiField.constant(g, 0.2), MetricDensity.flat(g))
    assert kb.dimension == 1
    assert spec.constant_coefficients
    ref = torus_exact_log_det(2j / 3, 0.96)
    assert zeta_log_det(spec).log_det == pytest.approx(ref, rel=1e-4)


def test_bump_metric_heat_coefficients():
    # Euler characteristic 0: the constant term is -1 (zero mode removed)
    g = make_grid(1j, 24)
    rho = MetricDensity.flat(g).weyl(bump(g, 0.1, 1.0))
    spec, _ = operator_spectrum(0, BeltramiField.zero(g), rho)
    zd = zeta_log_det(spec)
    assert zd.zeta0 == pytest.approx(-1.0, abs=1e-5)
    assert abs(zd.c1) < 0.01
    assert not zd.unstable


def test_unstable_fit_is_flagged():
    spec = flat_torus_spectrum(1j, 1.0, 3)
    zd = zeta_log_det(spec, HeatConfig(fit_tol=1e-12))
    assert zd.unstable


def test_l2_norm_examples():
    g = make_grid(1j, 8)
    rho = MetricDensity.flat(g)
    assert log_l2_norm(0, BeltramiField.zero(g), rho) == pytest.approx(0.0, abs=1e-14)
    g2 = make_grid(2j, 8)
    assert log_l2_norm(0, BeltramiField.zero(g2), MetricDensity.flat(g2)) == pytest.approx(-2 * np.log(2))
    # one Gram factor 0.96 from each of gamma and beta
    mu = BeltramiField.constant(g, 0.2)
    assert log_l2_norm(1, mu, rho) == pytest.approx(-2 * np.log(0.96))


@pytest.mark.parametrize("j", [0, 1, 2])
def test_quillen_gamma_stored_consistently(j):
    g = make_grid(1j, 8)
    q = quillen_gamma(j, BeltramiField.constant(g, 0.1 + 0.05j), MetricDensity.flat(g), "oracle")
    assert q.method is Method.torus_exact_oracle
    assert q.gamma == 0.5 * (q.log_det_zeta + q.log_l2_norm)


def test_oracle_gamma_closed_form():
    # Gamma = -ln|1 + mu| + 2 ln|eta(tau')| for constant mu and flat rho
    g = make_grid(1j, 8)
    mu = 0.15 - 0.1j
    q = quillen_gamma(0, BeltramiField.constant(g, mu), MetricDensity.flat(g), "oracle")
    tp = (1j + mu * -1j) / (1 + mu)
    assert q.gamma == pytest.approx(-np.log(abs(1 + mu)) + 2 * log_abs_eta(tp), abs=1e-13)


def test_oracle_needs_constant_data():
    g = make_grid(1j, 8)
    with pytest.raises(ConfigError):
        quillen_gamma(0, BeltramiField(g.mode(1, 0, 0.1)), MetricDensity.flat(g), "oracle")


def test_reference_subtraction_vanishes():
    g = make_grid(1j, 16)
    rho = MetricDensity.flat(g).weyl(bump(g, 0.1, 1.0))
    a = quillen_gamma(0, BeltramiField.zero(g), rho)
    b = quillen_gamma(0, BeltramiField.zero(g), rho)
    assert a.gamma - b.gamma == 0.0
