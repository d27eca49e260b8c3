import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import eval_genlaguerre, factorial

from gpslab.errors import GridWarning
from gpslab.fock import DensityOperator, FockState, rotate_phase, squeezed_vacuum
from gpslab.gps import analytic_target
from gpslab.phase_space import (
    GridAxis,
    central_extremum_contrast,
    count_dips,
    fringe_contrast,
    fringe_phase,
    marginal,
    negativity_metrics,
    phase_averaged_marginal,
    wigner,
    wigner_values,
)

from oracles import fock_wavefunction_scipy


def laguerre_kernel(m, n, x, p):
    """Closed-form Wigner function of |m><n| (m >= n)."""
    alpha = (x + 1j * p) / math.sqrt(2)
    r2 = 4 * np.abs(alpha) ** 2
    pref = (-1) ** n / math.pi * math.sqrt(factorial(n) / factorial(m))
    return pref * (2 * np.conj(alpha)) ** (m - n) * np.exp(-r2 / 2) * eval_genlaguerre(n, m - n, r2)


def wigner_oracle(mat, x, p):
    dim = mat.shape[0]
    w = np.zeros(np.broadcast(x, p).shape)
    for m in range(dim):
        for n in range(m + 1):
            term = mat[m, n] * laguerre_kernel(m, n, x, p)
            w += np.real(term) if m == n else 2 * np.real(term)
    return w


def random_density(dim, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    mat = a @ a.conj().T
    return DensityOperator(mat / np.trace(mat))


# -- Wigner ------------------------------------------------------------------


@pytest.mark.parametrize("n", range(5))
def test_wigner_origin_of_fock_states(n):
    assert wigner_values(FockState.basis(n, 8), 0.0, 0.0) == pytest.approx((-1) ** n / math.pi, abs=1e-14)


def test_wigner_vacuum_profile():
    x = np.linspace(-3, 3, 13)
    np.testing.assert_allclose(wigner_values(FockState.basis(0, 4), x, 0.0), np.exp(-(x**2)) / math.pi, atol=1e-15)


def test_wigner_matches_laguerre_closed_form():
    rho = random_density(10, 3)
    rng = np.random.default_rng(0)
    x, p = rng.uniform(-4, 4, size=(2, 200))
    np.testing.assert_allclose(wigner_values(rho, x, p), wigner_oracle(rho.mat, x, p), atol=1e-12)


def test_wigner_high_dimension_stays_bounded():
    rho = FockState.basis(60, 70)
    x = np.linspace(-12, 12, 241)
    w = wigner_values(rho, x, 0.3)
    assert np.all(np.abs(w) <= 1 / math.pi + 1e-9)


def test_wigner_normalization_on_default_grid():
    assert wigner(analytic_target(3, 0.5)).total() == pytest.approx(1.0, abs=1e-6)


def test_wigner_of_squeezed_state_is_gaussian():
    r = 0.3
    x = np.linspace(-2, 2, 9)
    p = np.linspace(-2, 2, 9)[:, None]
    expected = np.exp(-(x**2) * math.exp(2 * r) - p**2 * math.exp(-2 * r)) / math.pi
    np.testing.assert_allclose(wigner_values(squeezed_vacuum(r, 40), x, p), expected, atol=1e-9)


@given(st.floats(-180, 180), st.integers(0, 2**31))
@settings(max_examples=20, deadline=None)
def test_wigner_rotation_covariance(theta, seed):
    """W of e^{-i theta n} rho e^{i theta n} is W rotated by -theta."""
    rng = np.random.default_rng(seed)
    psi = rng.normal(size=6) + 1j * rng.normal(size=6)
    state = FockState(psi / np.linalg.norm(psi))
    x, p = rng.uniform(-3, 3, size=(2, 20))
    th = math.radians(theta)
    xr, pr = x * math.cos(th) + p * math.sin(th), -x * math.sin(th) + p * math.cos(th)
    np.testing.assert_allclose(
        wigner_values(rotate_phase(state, theta), xr, pr), wigner_values(state, x, p), atol=1e-12
    )


def test_wigner_small_grid_warns():
    with pytest.warns(GridWarning):
        wigner(FockState.basis(0, 3), GridAxis(-1, 1, 11))


def test_wigner_json_and_csv():
    grid = wigner(FockState.basis(1, 3), GridAxis(-3, 3, 5))
    doc = json.loads(grid.to_json())
    assert np.array(doc["values"]).shape == (5, 5)
    lines = grid.to_csv().splitlines()
    assert lines[0] == "x,p,w" and len(lines) == 26


# -- marginals ---------------------------------------------------------------


def test_marginal_of_fock_state():
    x = np.linspace(-8, 8, 4001)
    for theta in (0, 45, 120):
        dist = marginal(FockState.basis(2, 6), theta, x)
        np.testing.assert_allclose(dist.pdf, fock_wavefunction_scipy(2, x) ** 2, atol=1e-9)


def test_marginal_squeezed_variances():
    r = 0.25
    state = squeezed_vacuum(r, 40)
    assert marginal(state, 0).variance() == pytest.approx(math.exp(-2 * r) / 2, abs=1e-6)
    assert marginal(state, 90).variance() == pytest.approx(math.exp(2 * r) / 2, abs=1e-6)


def test_marginal_phase_convention():
    """x_theta = x cos + p sin: a p-displaced-like superposition shifts the
    mean of the 90 degree marginal."""
    state = FockState(np.array([1, 1j]) / math.sqrt(2))
    # <x_theta> = sqrt(2) Re(rho_10 e^{-i theta}) with rho_10 = i/2
    assert marginal(state, 0).mean() == pytest.approx(0.0, abs=1e-9)
    assert marginal(state, 90).mean() == pytest.approx(1 / math.sqrt(2), abs=1e-9)


@given(st.floats(-180, 180), st.integers(0, 2**31))
@settings(max_examples=20, deadline=None)
def test_marginal_rotation(theta, seed):
    rho = random_density(6, seed)
    ph = np.exp(-1j * math.radians(theta) * np.arange(6))
    rot = DensityOperator(ph[:, None] * rho.mat * ph.conj()[None, :])
    x = np.linspace(-6, 6, 301)
    np.testing.assert_allclose(marginal(rho, theta, x).pdf, marginal(rot, 0, x).pdf, atol=1e-10)


def test_phase_averaged_marginal_is_mean_over_phases():
    rho = random_density(5, 7)
    x = np.linspace(-6, 6, 301)
    mean = np.mean([marginal(rho, th, x).pdf for th in np.arange(0, 360, 30)], axis=0)
    np.testing.assert_allclose(phase_averaged_marginal(rho, x).pdf, mean, atol=1e-9)


def test_fringe_contrast_zero_for_fock_and_grows_with_s0():
    assert fringe_contrast(FockState.basis(3, 10), 0.0) < 1e-12
    c = [fringe_contrast(analytic_target(3, s0), 90.0) for s0 in (0.11, 0.5, 1.2)]
    assert c[0] < c[1] < c[2]


def test_fringe_phase_for_x_oriented_family():
    assert fringe_phase(analytic_target(3, 1.2)) in (0.0, 90.0)


def test_central_extremum_contrast_literal_definition():
    x = np.linspace(-8, 8, 4001)
    # single-peaked: fewer than 3 extrema
    assert central_extremum_contrast(marginal(FockState.basis(0, 2), 0, x)) == 0.0
    # odd Fock state has a node at 0, so the literal ratio saturates at 1
    assert central_extremum_contrast(marginal(FockState.basis(3, 6), 0, x)) == pytest.approx(1.0, abs=1e-6)


# -- negativity --------------------------------------------------------------


def test_count_dips():
    assert count_dips([0, -0.1, 0, -0.2, 0]) == 2
    assert count_dips([0, -1e-4, 0]) == 0
    assert count_dips([-0.5, -0.2, 0]) == 0


@pytest.mark.parametrize("n, dips", [(1, 1), (2, 2), (3, 3)])
def test_negativity_of_fock_states(n, dips):
    grid = wigner(FockState.basis(n, n + 1), GridAxis(-5, 5, 201))
    metrics = negativity_metrics(grid)
    assert metrics.dip_count == dips
    assert metrics.min_value < -0.01
    assert metrics.negative_volume > 0


def test_negativity_of_gaussian_state_is_zero():
    # any residual negativity is truncation ringing, far below the dip threshold
    metrics = negativity_metrics(wigner(squeezed_vacuum(0.4, 30), GridAxis(-5, 5, 201)))
    assert metrics.dip_count == 0
    assert metrics.min_value > -1e-6


def test_negativity_coarse_grid_warns():
    with pytest.warns(GridWarning):
        negativity_metrics(wigner(FockState.basis(1, 2), GridAxis(-5, 5, 51)))


def test_vacuum_negativity_metrics():
    m = negativity_metrics(wigner(FockState.basis(0, 5)))
    assert abs(m.min_value) < 1e-10 and m.negative_volume == 0.0 and m.dip_count == 0


@pytest.mark.parametrize("theta", [0.0, 37.0, 90.0])
def test_fock_three_dips_any_cut(theta):
    assert negativity_metrics(wigner(FockState.basis(3, 4)), theta).dip_count == 3


@pytest.mark.parametrize("s0", [0.11, 0.5, 1.2])
def test_family_three_dips_along_squeezed_axis(s0):
    # the fringes of Psi_{3,s0} oscillate along x, the squeezed quadrature
    assert negativity_metrics(wigner(analytic_target(3, s0)), 0.0).dip_count == 3


def test_fock_marginal_phase_independent():
    x = np.linspace(-8, 8, 801)
    ref = marginal(FockState.basis(3, 4), 0.0, x).pdf
    for theta in (30, 60, 90, 150):
        np.testing.assert_allclose(marginal(FockState.basis(3, 4), theta, x).pdf, ref, atol=1e-12)


def test_marginal_is_wigner_projection():
    rho = analytic_target(3, 0.5)
    axis = GridAxis(-7, 7, 281)
    grid = wigner(rho, axis)
    projected = np.trapezoid(grid.values, axis.points, axis=1)
    np.testing.assert_allclose(marginal(rho, 0.0, axis.points).pdf, projected, atol=1e-4)


def test_fock_diagonal_wigner_rotation_invariant():
    rho = DensityOperator(np.diag([0.5, 0.2, 0.2, 0.1]))
    rng = np.random.default_rng(1)
    x, p = rng.uniform(-4, 4, size=(2, 100))
    th = 0.7
    rx, rp = x * math.cos(th) - p * math.sin(th), x * math.sin(th) + p * math.cos(th)
    np.testing.assert_allclose(wigner_values(rho, rx, rp), wigner_values(rho, x, p), atol=1e-12)


def test_central_extremum_contrast_saturates_for_odd_family():
    """The (max-min)/(max+min) ratio over the three central extrema hits 1
    for every odd-parity state because p(0) = 0; it cannot rank s0."""
    for s0 in (0.11, 0.5, 1.2):
        assert central_extremum_contrast(marginal(analytic_target(3, s0), 90.0)) == pytest.approx(1.0, abs=1e-9)
