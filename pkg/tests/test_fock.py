import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from cvamp.errors import ConfigError, InvalidDimensionError, NonHermitianError, TruncationError
from cvamp.fock import (
    DensityMatrix,
    HilbertSpec,
    Ket,
    LinearOperator,
    coherent_ket,
    displacement_operator,
    fock_projector,
    hermitian_eigenvalues,
    ladder_operator,
    partial_trace,
    quadrature_ket,
    tensor,
    thermal_state,
)
from cvamp.states import TmsvParams, tmsv_fock


def basis(dim, n):
    v = np.zeros(dim, dtype=complex)
    v[n] = 1
    return v


def test_hilbert_spec_indexing():
    sp = HilbertSpec((3, 4))
    assert sp.total_dim == 12 and sp.n_modes == 2
    assert sp.flat_index((1, 2)) == 6
    assert sp.occupation(6) == (1, 2)
    with pytest.raises(InvalidDimensionError):
        HilbertSpec((1, 4))


def test_ladder_operators():
    a = ladder_operator("annihilate", 3).matrix
    np.testing.assert_array_equal(a @ basis(3, 1), basis(3, 0))
    n = ladder_operator("number", 4).matrix
    np.testing.assert_array_equal(n @ basis(4, 3), 3 * basis(4, 3))
    ad = ladder_operator("create", 6).matrix
    a6 = ladder_operator("annihilate", 6).matrix
    for k in range(5):
        np.testing.assert_allclose(a6 @ ad @ basis(6, k), (k + 1) * basis(6, k))
    with pytest.raises(InvalidDimensionError):
        ladder_operator("create", 1)


def test_displacement_matches_matrix_exponential():
    d, big = 12, 60
    alpha = 0.4 - 0.3j
    a = ladder_operator("annihilate", big).matrix
    ref = expm(alpha * a.conj().T - np.conj(alpha) * a)[:d, :d]
    np.testing.assert_allclose(displacement_operator(d, alpha).matrix, ref, atol=1e-12)
    np.testing.assert_allclose(displacement_operator(5, 0).matrix, np.eye(5), atol=1e-15)


def test_coherent_ket():
    np.testing.assert_allclose(coherent_ket(5, 0).amplitudes, basis(5, 0))
    k = coherent_ket(20, 1.0)
    n = np.arange(20)
    assert abs(np.sum(n * np.abs(k.amplitudes) ** 2) - 1.0) < 1e-8
    with pytest.raises(TruncationError):
        coherent_ket(5, 2.0)


def test_tensor_and_partial_trace():
    i2 = LinearOperator(HilbertSpec((2,)), np.eye(2))
    np.testing.assert_array_equal(tensor(i2, i2).matrix, np.eye(4))
    prod = tensor(fock_projector(3, 0), fock_projector(3, 1))
    idx = prod.space.flat_index((0, 1))
    expected = np.zeros((9, 9))
    expected[idx, idx] = 1
    np.testing.assert_array_equal(prod.matrix, expected)
    vac = tensor(fock_projector(4, 0), fock_projector(4, 0))
    np.testing.assert_allclose(partial_trace(vac, [0]).matrix, fock_projector(4, 0).matrix)
    with pytest.raises(ConfigError):
        partial_trace(vac, [])


def test_tmsv_marginal_is_thermal():
    rho = tmsv_fock(TmsvParams(0.3), 20)
    nbar = np.sinh(0.3) ** 2
    assert abs(nbar - 0.09273) < 1e-5
    for mode in (0, 1):
        red = partial_trace(rho, [mode])
        np.testing.assert_allclose(red.matrix, thermal_state(20, nbar).matrix, atol=1e-12)


def test_eigenvalues():
    np.testing.assert_allclose(hermitian_eigenvalues(np.eye(4) / 4), 0.25)
    k = coherent_ket(10, 0.5)
    w = hermitian_eigenvalues(k.projector())
    np.testing.assert_allclose(w, basis(10, 9).real, atol=1e-10)
    with pytest.raises(NonHermitianError):
        hermitian_eigenvalues(np.array([[0, 1], [0, 0]]))


def test_density_matrix_is_immutable_and_validates():
    rho = fock_projector(3, 1)
    with pytest.raises(ValueError):
        rho.matrix[0, 0] = 1
    rho.validate()
    bad = DensityMatrix(HilbertSpec((2,)), np.diag([1.5, -0.5]))
    with pytest.raises(NonHermitianError):
        bad.validate()


def test_quadrature_ket_vacuum_density():
    v = quadrature_ket(10, 0.0).amplitudes
    assert abs(abs(v[0]) ** 2 - 1 / np.sqrt(np.pi)) < 1e-12


@settings(max_examples=25, deadline=None)
@given(st.floats(0, 0.8), st.floats(0, 2 * np.pi))
def test_coherent_norm_and_mean(r, phi):
    alpha = r * np.exp(1j * phi)
    k = coherent_ket(25, alpha)
    assert abs(k.norm - 1) < 1e-12
    a = ladder_operator("annihilate", 25).matrix
    assert abs(np.vdot(k.amplitudes, a @ k.amplitudes) - alpha) < 1e-8


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 5), st.integers(2, 5), st.integers(0, 2**31 - 1))
def test_partial_trace_preserves_trace(da, db, seed):
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(da * db, da * db)) + 1j * rng.normal(size=(da * db, da * db))
    rho = DensityMatrix(HilbertSpec((da, db)), g @ g.conj().T).normalized()
    for keep in ([0], [1]):
        red = partial_trace(rho, keep)
        assert abs(red.trace - 1) < 1e-12
        red.validate()


def test_ket_projector_normalizes():
    k = Ket(HilbertSpec((3,)), [1, 1j, 0])
    assert abs(k.projector().trace - 1) < 1e-15
    assert abs(k.projector().purity - 1) < 1e-12
