import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpslab.errors import DimensionMismatchError, DomainError
from gpslab.fock import (
    DensityOperator,
    FockState,
    TwoModeState,
    beam_splitter,
    fidelity,
    fock_wavefunction,
    fock_wavefunctions,
    from_json,
    hermite,
    loss_channel,
    quadrature_moments,
    squeezed_vacuum,
    to_json,
    uhlmann_fidelity,
)

from oracles import fock_wavefunction_scipy


def random_density(dim, seed, rank=None):
    rng = np.random.default_rng(seed)
    rank = rank or dim
    a = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    mat = a @ a.conj().T
    return DensityOperator(mat / np.trace(mat))


def two_mode_basis(j, k, dim=6):
    amps = np.zeros((dim, dim))
    amps[j, k] = 1.0
    return TwoModeState(amps)


# -- hermite / wavefunctions -------------------------------------------------


@pytest.mark.parametrize("n, x, expected", [(0, 1.7, 1.0), (1, 2.0, 4.0), (3, 1.0, -4.0)])
def test_hermite_examples(n, x, expected):
    assert hermite(n, x) == pytest.approx(expected, abs=1e-14)


def test_hermite_order_guard():
    with pytest.raises(DomainError):
        hermite(201, 0.3)
    with pytest.raises(DomainError):
        fock_wavefunction(201, 0.3)


def test_wavefunction_values():
    assert fock_wavefunction(0, 0.0) == pytest.approx(math.pi**-0.25, abs=1e-15)
    assert fock_wavefunction(1, 0.0) == 0.0


def test_wavefunction_matches_scipy_hermite():
    x = np.linspace(-6, 6, 101)
    for n in (0, 1, 5, 17, 30):
        np.testing.assert_allclose(fock_wavefunction(n, x), fock_wavefunction_scipy(n, x), atol=1e-12)


def test_wavefunction_normalized():
    x = np.linspace(-12, 12, 24001)
    assert np.trapezoid(fock_wavefunction(3, x) ** 2, x) == pytest.approx(1.0, abs=1e-8)


def test_wavefunctions_orthonormal_high_order():
    x, w = np.polynomial.hermite.hermgauss(150)
    phi = fock_wavefunctions(120, x) * np.exp(x**2 / 2)
    gram = (phi * w) @ phi.T
    np.testing.assert_allclose(gram, np.eye(120), atol=1e-9)


# -- squeezed vacuum ---------------------------------------------------------


def test_squeezed_vacuum_trivial():
    np.testing.assert_array_equal(squeezed_vacuum(0.0, 10).amps, FockState.basis(0, 10).amps)


@given(st.floats(min_value=-1.2, max_value=1.2).filter(lambda r: abs(r) > 1e-3))
@settings(max_examples=30, deadline=None)
def test_squeezed_vacuum_coefficient_ratio_and_parity(r):
    state = squeezed_vacuum(r, 40)
    c = state.amps
    assert np.all(c[1::2] == 0)
    assert c[2] / c[0] == pytest.approx(-math.tanh(r) / math.sqrt(2), rel=1e-12)
    assert state.norm() == pytest.approx(1.0, abs=1e-12)


def test_squeezed_vacuum_variance():
    r = 0.4
    _, var_x = quadrature_moments(squeezed_vacuum(r, 40), 0.0)
    _, var_p = quadrature_moments(squeezed_vacuum(r, 40), 90.0)
    assert var_x == pytest.approx(math.exp(-2 * r) / 2, abs=1e-4)
    assert var_p == pytest.approx(math.exp(2 * r) / 2, abs=1e-4)


def test_squeezed_vacuum_leak_flag():
    with pytest.warns(UserWarning):
        state = squeezed_vacuum(1.5, 10)
    assert state.truncation_leak > 1e-3
    assert squeezed_vacuum(0.37, 40).truncation_leak < 1e-9
    with pytest.raises(DomainError):
        squeezed_vacuum(3.5, 10)


# -- beam splitter -----------------------------------------------------------


@pytest.mark.parametrize("t", [0.0, 0.3, 0.5, 1.0])
def test_bs_vacuum_invariant(t):
    out = beam_splitter(two_mode_basis(0, 0), t)
    np.testing.assert_allclose(out.amps, two_mode_basis(0, 0).amps, atol=1e-15)


def test_bs_single_photon_split():
    out = beam_splitter(two_mode_basis(1, 0), 0.5).amps
    expected = np.zeros((6, 6))
    expected[1, 0] = 1 / math.sqrt(2)
    expected[0, 1] = -1 / math.sqrt(2)
    np.testing.assert_allclose(out, expected, atol=1e-15)


def test_bs_hong_ou_mandel():
    out = beam_splitter(two_mode_basis(1, 1), 0.5).amps
    expected = np.zeros((6, 6))
    expected[2, 0] = 1 / math.sqrt(2)
    expected[0, 2] = -1 / math.sqrt(2)
    np.testing.assert_allclose(out, expected, atol=1e-15)


@given(
    st.floats(min_value=0.0, max_value=1.0),
    st.integers(min_value=0, max_value=2**31),
)
@settings(max_examples=25, deadline=None)
def test_bs_unitary_round_trip(t, seed):
    # support on j + k < dim keeps every output inside the truncation
    dim = 8
    rng = np.random.default_rng(seed)
    amps = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    j, k = np.indices((dim, dim))
    amps[j + k >= dim] = 0
    state = TwoModeState(amps / np.linalg.norm(amps))
    fwd = beam_splitter(state, t)
    assert fwd.norm() == pytest.approx(1.0, abs=1e-12)
    back = beam_splitter(fwd, t, inverse=True)
    np.testing.assert_allclose(back.amps, state.amps, atol=1e-10)


def test_bs_matches_matrix_exponential():
    from scipy.linalg import expm

    dim, t = 7, 0.3
    a = np.diag(np.sqrt(np.arange(1, dim)), 1)
    big_a = np.kron(a, np.eye(dim))
    big_b = np.kron(np.eye(dim), a)
    theta = math.acos(math.sqrt(t))
    # Schroedinger-picture U with a^dag -> sqrt(T) a^dag - sqrt(R) b^dag
    u = expm(theta * (big_a.conj().T @ big_b - big_b.conj().T @ big_a))
    psi = np.zeros((dim, dim))
    psi[1, 2] = 0.6
    psi[0, 1] = 0.8
    expected = (u @ psi.reshape(-1)).reshape(dim, dim)
    got = beam_splitter(TwoModeState(psi), t).amps
    np.testing.assert_allclose(got, expected, atol=1e-12)


def test_bs_domain():
    with pytest.raises(DomainError):
        beam_splitter(two_mode_basis(0, 0), 1.2)


# -- loss --------------------------------------------------------------------


def test_loss_identity_and_full():
    rho = random_density(8, 1)
    np.testing.assert_array_equal(loss_channel(rho, 1.0).mat, rho.mat)
    out = loss_channel(rho, 0.0).mat
    expected = np.zeros((8, 8))
    expected[0, 0] = 1
    np.testing.assert_allclose(out, expected, atol=1e-15)


def test_loss_single_photon():
    eta = 0.37
    out = loss_channel(FockState.basis(1, 5).density(), eta).mat
    np.testing.assert_allclose(np.diag(out)[:2].real, [1 - eta, eta], atol=1e-15)
    assert np.abs(out).sum() == pytest.approx(1.0, abs=1e-15)


@given(
    st.floats(min_value=0.0, max_value=1.0),
    st.floats(min_value=0.0, max_value=1.0),
    st.integers(min_value=0, max_value=2**31),
)
@settings(max_examples=25, deadline=None)
def test_loss_composes_and_stays_physical(e1, e2, seed):
    rho = random_density(10, seed)
    out = loss_channel(loss_channel(rho, e1), e2)
    np.testing.assert_allclose(out.mat, loss_channel(rho, e1 * e2).mat, atol=1e-8)
    out.check()


def test_loss_domain():
    with pytest.raises(DomainError):
        loss_channel(random_density(3, 0), 1.1)


def test_loss_unit_efficiency_keeps_photon_statistics():
    rho = random_density(12, 5)
    np.testing.assert_array_equal(loss_channel(rho, 1.0).photon_distribution(), rho.photon_distribution())


# -- fidelity ----------------------------------------------------------------


def test_fidelity_examples():
    psi = squeezed_vacuum(0.3, 10)
    assert fidelity(psi, psi.density()) == pytest.approx(1.0, abs=1e-12)
    assert fidelity(FockState.basis(0, 2), FockState.basis(1, 2).density()) == 0.0
    assert fidelity(FockState.basis(1, 2), DensityOperator(np.diag([0.3, 0.7]))) == pytest.approx(0.7)
    with pytest.raises(DimensionMismatchError):
        fidelity(FockState.basis(0, 3), DensityOperator(np.eye(2) / 2))


def test_uhlmann_reduces_to_pure_fidelity():
    psi = squeezed_vacuum(0.2, 8)
    rho = random_density(8, 3)
    assert uhlmann_fidelity(psi.density(), rho) == pytest.approx(fidelity(psi, rho), abs=1e-9)
    assert uhlmann_fidelity(rho, rho) == pytest.approx(1.0, abs=1e-9)


# -- invariants and serialization -------------------------------------------


def test_density_check_rejects_bad_matrices():
    with pytest.raises(DomainError):
        DensityOperator(np.array([[0.5, 0.1], [0.0, 0.5]])).check()
    with pytest.raises(DomainError):
        DensityOperator(np.diag([0.6, 0.6])).check()
    with pytest.raises(DomainError):
        DensityOperator(np.diag([1.2, -0.2])).check()


def test_states_are_immutable():
    psi = FockState.basis(0, 3)
    with pytest.raises(ValueError):
        psi.amps[0] = 2


def test_schmidt_rank_product():
    prod = TwoModeState.product(squeezed_vacuum(0.3, 10), squeezed_vacuum(-0.2, 10))
    assert prod.schmidt_rank() == 1


@pytest.mark.parametrize("obj", [squeezed_vacuum(0.31, 12), random_density(7, 11)])
def test_json_round_trip_is_exact(obj):
    text = to_json(obj)
    back = from_json(text)
    arr = obj.amps if isinstance(obj, FockState) else obj.mat
    got = back.amps if isinstance(back, FockState) else back.mat
    assert np.array_equal(arr, got)
    doc = json.loads(text)
    assert set(doc) == {"dim", "re", "im"}
