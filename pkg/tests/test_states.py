import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cvamp.channels import apply_channel, ChannelConfig
from cvamp.errors import ConfigError, TruncationError
from cvamp.fock import partial_trace
from cvamp.states import (
    CovarianceMatrix,
    TmsvParams,
    channel_covariance,
    channel_noise_variance,
    gaussian_homhom_mi,
    gaussian_mutual_information,
    quadrature_moments,
    tmsv_covariance,
    tmsv_fock,
)


def test_tmsv_params_range():
    with pytest.raises(ConfigError):
        TmsvParams(-0.1)
    with pytest.raises(ConfigError):
        TmsvParams(1.5)


def test_tmsv_covariance_values():
    np.testing.assert_allclose(tmsv_covariance(TmsvParams(0)).matrix, 0.5 * np.eye(4))
    v = tmsv_covariance(TmsvParams(0.3)).matrix
    assert v[0, 0] == pytest.approx(np.cosh(0.6) / 2, abs=1e-15)
    assert v[0, 2] == pytest.approx(np.sinh(0.6) / 2, abs=1e-15)
    # the quoted five-digit values carry a rounding slip of ~3e-5
    assert abs(v[0, 0] - 0.59276) < 1e-4
    assert abs(v[0, 2] - 0.31834) < 1e-4


def test_covariance_rejects_unphysical():
    with pytest.raises(ConfigError):
        CovarianceMatrix(0.1 * np.eye(4))


def test_tmsv_fock():
    rho = tmsv_fock(TmsvParams(0), 5)
    assert rho.matrix[0, 0] == 1
    assert abs(tmsv_fock(TmsvParams(0.5), 20).purity - 1) < 1e-12
    with pytest.raises(TruncationError):
        tmsv_fock(TmsvParams(1.0), 5)


def test_fock_moments_match_covariance():
    rho = tmsv_fock(TmsvParams(0.3), 25)
    _, cov = quadrature_moments(rho)
    np.testing.assert_allclose(cov, tmsv_covariance(TmsvParams(0.3)).matrix, atol=1e-10)


def test_channel_covariance_examples():
    v = tmsv_covariance(TmsvParams(0.3))
    # under the thermal reading N_T is suppressed at full transmission
    np.testing.assert_allclose(channel_covariance(v, 1.0, 0.1, "thermal").matrix, v.matrix)
    vac = tmsv_covariance(TmsvParams(0))
    np.testing.assert_allclose(channel_covariance(vac, 0.9, 0.0).matrix[2:, 2:], 0.5 * np.eye(2))
    out = channel_covariance(v, 0.9, 0.1, "thermal").matrix
    assert out[2, 2] == pytest.approx(0.9 * np.cosh(0.6) / 2 + 0.1 * 0.6, abs=1e-14)
    assert abs(out[2, 2] - 0.59348) < 1e-4
    # the excess reading adds N_T outright
    out = channel_covariance(v, 1.0, 0.1, "excess").matrix
    assert abs(out[2, 2] - (v.matrix[2, 2] + 0.1)) < 1e-14
    with pytest.raises(ConfigError):
        channel_noise_variance(0.9, 0.1, "other")


@pytest.mark.parametrize("convention", ["thermal", "excess"])
def test_fock_channel_matches_covariance_channel(convention):
    ch = ChannelConfig(0.9, 0.1, convention)
    rho = apply_channel(tmsv_fock(TmsvParams(0.3), 20), ch)
    _, cov = quadrature_moments(rho)
    ref = channel_covariance(tmsv_covariance(TmsvParams(0.3)), 0.9, 0.1, convention).matrix
    np.testing.assert_allclose(cov, ref, atol=1e-8)


def test_gaussian_mi_examples():
    assert gaussian_homhom_mi(tmsv_covariance(TmsvParams(0))) == 0
    v = tmsv_covariance(TmsvParams(0.3))
    ref = -0.5 * np.log2(1 - np.tanh(0.6) ** 2)
    assert abs(gaussian_homhom_mi(v) - ref) < 1e-12
    assert abs(ref - 0.2455) < 1e-4
    assert abs(gaussian_mutual_information(v, "hom", "hom") - ref) < 1e-12
    assert gaussian_mutual_information(v, "het", "het") < ref


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 1.0), st.floats(0.0, 1.0), st.floats(0.01, 1.0))
def test_channel_output_is_physical(R, n_t, eta):
    for conv in ("thermal", "excess"):
        out = channel_covariance(tmsv_covariance(TmsvParams(R)), eta, n_t, conv)
        assert out.matrix[2, 2] >= 0.5 - 1e-12


def test_marginal_moment_loss_example():
    rho = tmsv_fock(TmsvParams(0.3), 20)
    red = partial_trace(rho, [1])
    _, cov = quadrature_moments(red)
    assert abs(cov[0, 0] - np.cosh(0.6) / 2) < 1e-10
