import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from beltrami_lab.beltrami import BeltramiField, solve_beltrami
from beltrami_lab.errors import ConfigError, GridMismatch
from beltrami_lab.geometry import (
    DifferentialWeight,
    MetricDensity,
    action_Z,
    action_z,
    connection,
    norm_jj,
    rho_ZZ,
    stress_tensor,
    volume_density,
)
from beltrami_lab.torus_grid import integrate, make_grid, random_trig_polynomial

seeds = st.integers(0, 2**31 - 1)


def test_metric_density_validation():
    g = make_grid(1j, 8)
    with pytest.raises(ConfigError):
        MetricDensity(g.constant(-1.0))
    with pytest.raises(ConfigError):
        MetricDensity(g.constant(1.0 + 1.0j))
    assert MetricDensity.flat(g, 2.0).is_constant


def test_weight_validation():
    DifferentialWeight(0.5, 0)
    with pytest.raises(ConfigError):
        DifferentialWeight(0.3)


@given(seeds)
def test_weyl_composition(seed):
    g = make_grid(1j, 8)
    rng = np.random.default_rng(seed)
    a = random_trig_polynomial(g, 2, rng) * 0.1
    b = random_trig_polynomial(g, 2, rng) * 0.1
    rho = MetricDensity.flat(g)
    np.testing.assert_allclose(rho.weyl(a).weyl(b).rho.values, rho.weyl(a + b).rho.values, rtol=1e-13)


def test_connection_of_flat_metric_vanishes():
    g = make_grid(0.2 + 1.3j, 8)
    conn = connection(MetricDensity.flat(g, 3.0))
    for f in (conn.Gamma, conn.Gamma_bar, conn.R_scalar, conn.R_hol):
        assert f.sup() < 1e-13


def test_volume_density_integrates_to_area():
    g = make_grid(1j, 16)
    mu = BeltramiField.constant(g, 0.2)
    assert integrate(volume_density(MetricDensity.flat(g), mu)).real == pytest.approx(0.96)


def test_rho_ZZ_of_constant_mu_is_rho():
    g = make_grid(1j, 8)
    mu = BeltramiField.constant(g, 0.3j)
    rho = MetricDensity.flat(g, 2.0)
    np.testing.assert_allclose(rho_ZZ(rho, solve_beltrami(mu)).values, 2.0)


@given(seeds, st.integers(0, 2))
def test_norm_positive(seed, j):
    g = make_grid(1j, 8)
    rng = np.random.default_rng(seed)
    alpha = random_trig_polynomial(g, 2, rng, real=False)
    rho = MetricDensity.flat(g).weyl(random_trig_polynomial(g, 1, rng) * 0.1)
    mu = BeltramiField(g.mode(1, 0, 0.3))
    assert norm_jj(alpha, DifferentialWeight(j), rho, mu) > 0


def test_norm_of_constant_section():
    g = make_grid(1j, 8)
    one = g.constant(1.0)
    rho = MetricDensity.flat(g)
    assert norm_jj(one, DifferentialWeight(0), rho, BeltramiField.constant(g, 0.2)) == pytest.approx(0.96)
    with pytest.raises(GridMismatch):
        norm_jj(make_grid(1j, 10).constant(1.0), DifferentialWeight(0), rho, BeltramiField.zero(g))


def test_action_at_zero_mu_is_dirichlet_energy():
    # S = 1/2 integral |d X|^2 = 1/8 integral |grad X|^2 on tau = i
    g = make_grid(1j, 16)
    X = g.from_function(lambda x, y: np.cos(2 * np.pi * x))
    assert action_z(X, BeltramiField.zero(g)) == pytest.approx(np.pi**2 / 4)


@given(seeds)
def test_action_nonnegative_and_even(seed):
    g = make_grid(1j, 16)
    rng = np.random.default_rng(seed)
    X = random_trig_polynomial(g, 3, rng)
    mu = BeltramiField(g.mode(1, 1, 0.4))
    s = action_z(X, mu)
    assert s >= 0
    assert action_z(-1.0 * X, mu) == pytest.approx(s)


def test_action_invariance_single_case():
    g = make_grid(1j, 32)
    mu = BeltramiField(g.mode(0, 1, 0.2))
    sol = solve_beltrami(mu, oversample=2)
    X = random_trig_polynomial(g, 4, np.random.default_rng(3))
    assert action_Z(X, sol, mu) == pytest.approx(action_z(X, mu), rel=1e-8)


def test_action_rejects_complex_X():
    g = make_grid(1j, 8)
    with pytest.raises(ConfigError):
        action_z(g.mode(1, 0), BeltramiField.zero(g))


def test_stress_tensor_of_mode():
    g = make_grid(1j, 8)
    X = g.from_function(lambda x, y: np.sin(2 * np.pi * y))
    # d_z = (d_x - i d_y) / 2 at tau = i, so d_z sin(2 pi y) = -i pi cos(2 pi y)
    expected = 0.5 * (np.pi * np.cos(2 * np.pi * g.xy[1])) ** 2
    np.testing.assert_allclose(stress_tensor(X).values, expected, atol=1e-12)
