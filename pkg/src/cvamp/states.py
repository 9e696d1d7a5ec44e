"""Two-mode squeezed vacuum in covariance and Fock form, plus Gaussian oracles.

Quadrature ordering for covariance matrices is ``(x_A, p_A, x_B, p_B)`` and
the vacuum has variance 1/2 per quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from cvamp.errors import ConfigError, TruncationError
from cvamp.fock import DensityMatrix, HilbertSpec, partial_trace

VACUUM_VARIANCE = 0.5
NT_CONVENTIONS = ("thermal", "excess")

_OMEGA1 = np.array([[0.0, 1.0], [-1.0, 0.0]])


@dataclass(frozen=True)
class TmsvParams:
    R: float

    def __post_init__(self):
        if not 0.0 <= self.R <= 1.0:
            raise ConfigError(f"squeezing R must lie in [0, 1], got {self.R}")

    @property
    def lam(self) -> float:
        return float(np.tanh(self.R))


@dataclass(frozen=True)
class CovarianceMatrix:
    matrix: np.ndarray

    def __post_init__(self):
        v = np.array(self.matrix, dtype=float)
        if v.shape != (4, 4):
            raise ConfigError("two-mode covariance matrix must be 4x4")
        if np.max(np.abs(v - v.T)) > 1e-12:
            raise ConfigError("covariance matrix is not symmetric")
        v = 0.5 * (v + v.T)
        lo = np.linalg.eigvalsh(v + 0.5j * symplectic_form(2)).min()
        if lo < -1e-10:
            raise ConfigError(f"covariance violates the uncertainty principle (min eig {lo:.3g})")
        v.setflags(write=False)
        object.__setattr__(self, "matrix", v)

    def block(self, i: int, j: int) -> np.ndarray:
        return self.matrix[2 * i:2 * i + 2, 2 * j:2 * j + 2]


def symplectic_form(n_modes: int) -> np.ndarray:
    return np.kron(np.eye(n_modes), _OMEGA1)


def tmsv_covariance(params: TmsvParams) -> CovarianceMatrix:
    c = np.cosh(2 * params.R) / 2
    s = np.sinh(2 * params.R) / 2
    return CovarianceMatrix(np.array([
        [c, 0, s, 0],
        [0, c, 0, -s],
        [s, 0, c, 0],
        [0, -s, 0, c],
    ]))


def tmsv_fock(params: TmsvParams, dim: int) -> DensityMatrix:
    """Two-mode squeezed vacuum ``sum lam^(n+m) |n,n><m,m|`` with ``lam = tanh R``.

    Normalized numerically over the retained Schmidt terms. Raises
    ``TruncationError`` when the discarded Schmidt weight exceeds 1e-4.
    """
    lam = params.lam
    tail = lam ** (2 * dim)
    if tail > 1e-4:
        raise TruncationError(f"TMSV R={params.R} loses {tail:.3g} beyond cutoff {dim}")
    space = HilbertSpec((dim, dim))
    psi = np.zeros(dim * dim)
    n = np.arange(dim)
    psi[n * dim + n] = lam**n
    psi /= np.linalg.norm(psi)
    return DensityMatrix(space, np.outer(psi, psi))


def channel_noise_variance(eta: float, n_t: float, convention: str = "thermal") -> float:
    """Quadrature variance added on top of pure loss by the channel noise ``N_T``.

    This is the single definition shared by the covariance and Fock channels.

    ``thermal``: ``N_T`` is the mean photon number of the environment that the
    beamsplitter of transmittance ``eta`` couples in, so the added variance is
    ``(1 - eta) * N_T`` and vanishes at ``eta = 1``.
    ``excess``: ``N_T`` is an excess variance added per quadrature regardless
    of loss.
    """
    if not 0.0 < eta <= 1.0:
        raise ConfigError(f"transmittance must lie in (0, 1], got {eta}")
    if n_t < 0:
        raise ConfigError(f"channel noise must be >= 0, got {n_t}")
    if convention == "thermal":
        return (1.0 - eta) * n_t
    if convention == "excess":
        return float(n_t)
    raise ConfigError(f"unknown N_T convention {convention!r}; expected one of {NT_CONVENTIONS}")


def channel_covariance(V: CovarianceMatrix, eta: float, n_t: float,
                       convention: str = "thermal") -> CovarianceMatrix:
    """Loss ``eta`` and noise ``n_t`` on mode B of a two-mode covariance matrix."""
    extra = channel_noise_variance(eta, n_t, convention)
    xi = np.diag([1.0, 1.0, np.sqrt(eta), np.sqrt(eta)])
    out = xi @ V.matrix @ xi
    out[2:, 2:] += ((1 - eta) * VACUUM_VARIANCE + extra) * np.eye(2)
    return CovarianceMatrix(out)


def gaussian_homhom_mi(V: CovarianceMatrix) -> float:
    """Mutual information (bits) when both parties measure x on a Gaussian state."""
    m = V.matrix
    c = m[0, 2] / np.sqrt(m[0, 0] * m[2, 2])
    return float(-0.5 * np.log2(1 - c * c))


def gaussian_mutual_information(V: CovarianceMatrix, kind_a: str, kind_b: str) -> float:
    """Closed-form mutual information for homodyne/heterodyne on a Gaussian state.

    Heterodyne adds one vacuum unit (1/2) to both quadratures of the measured
    mode and reads out x and p; homodyne reads out x only.
    """
    m = np.array(V.matrix)
    idx = []
    for mode, kind in enumerate((kind_a, kind_b)):
        kind = normalize_kind(kind)
        if kind == "heterodyne":
            m[2 * mode:2 * mode + 2, 2 * mode:2 * mode + 2] += VACUUM_VARIANCE * np.eye(2)
            idx.append([2 * mode, 2 * mode + 1])
        else:
            idx.append([2 * mode])
    ia, ib = idx
    sub = m[np.ix_(ia + ib, ia + ib)]
    det_a = np.linalg.det(m[np.ix_(ia, ia)])
    det_b = np.linalg.det(m[np.ix_(ib, ib)])
    return float(0.5 * np.log2(det_a * det_b / np.linalg.det(sub)))


def normalize_kind(kind: str) -> str:
    k = kind.lower()
    if k in ("hom", "homodyne"):
        return "homodyne"
    if k in ("het", "heterodyne"):
        return "heterodyne"
    raise ConfigError(f"unknown measurement kind {kind!r}")


def quadrature_moments(rho: DensityMatrix) -> tuple[np.ndarray, np.ndarray]:
    """First moments and symmetrized covariance matrix of all quadratures.

    Single-mode second moments use ``a a^dag = a^dag a + 1`` so the truncated
    creation operator does not bias them.
    """
    n = rho.space.n_modes
    dims = rho.space.mode_dims
    means = np.zeros(2 * n)
    cov = np.zeros((2 * n, 2 * n))
    red1 = [partial_trace(rho, [i]).matrix / rho.trace for i in range(n)]
    quads = []
    for i, d in enumerate(dims):
        a = np.diag(np.sqrt(np.arange(1, d)), 1)
        x = (a + a.T) / np.sqrt(2)
        p = (a - a.T) / (1j * np.sqrt(2))
        quads.append((x, p))
        r = red1[i]
        ea = np.trace(r @ a)
        ea2 = np.trace(r @ a @ a)
        nb = np.trace(r @ a.T @ a).real
        means[2 * i] = np.sqrt(2) * ea.real
        means[2 * i + 1] = np.sqrt(2) * ea.imag
        cov[2 * i, 2 * i] = nb + 0.5 + ea2.real
        cov[2 * i + 1, 2 * i + 1] = nb + 0.5 - ea2.real
        cov[2 * i, 2 * i + 1] = cov[2 * i + 1, 2 * i] = ea2.imag
    for i in range(n):
        for j in range(i + 1, n):
            r = partial_trace(rho, [i, j]).matrix / rho.trace
            for u in range(2):
                for v in range(2):
                    val = np.trace(r @ np.kron(quads[i][u], quads[j][v])).real
                    cov[2 * i + u, 2 * j + v] = cov[2 * j + v, 2 * i + u] = val
    cov -= np.outer(means, means)
    return means, cov
