"""State transformations: channel loss and noise, photon addition and
subtraction, the combined noise/add/subtract amplifier, and the ancilla model
of noise addition.

All operations act on a single mode of a multimode ``DensityMatrix`` and return
a new, unit-trace ``DensityMatrix``. Heralded operations store their success
weight in ``pre_norm_trace``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import comb, gammaln, roots_laguerre

from cvamp.errors import ConfigError, PostSelectionError, QuadratureError, TruncationError
from cvamp.fock import (
    DensityMatrix,
    HilbertSpec,
    LinearOperator,
    apply_on_mode,
    displacement_matrices,
)
from cvamp.states import channel_noise_variance

LEAK_TOL = 1e-8
NOISE_TRACE_TOL = 1e-6
ANCILLA_TRACE_TOL = 1e-10
ANCILLA_DIM = 9


@dataclass(frozen=True)
class AmplifierConfig:
    """Noise ``delta`` followed by ``m_add`` additions and ``n_sub`` subtractions."""

    delta: float = 0.0
    m_add: int = 0
    n_sub: int = 0
    radial_nodes: int = 12
    angular_nodes: int = 16

    def __post_init__(self):
        if self.delta < 0:
            raise ConfigError(f"noise delta must be >= 0, got {self.delta}")
        if self.m_add < 0 or self.n_sub < 0:
            raise ConfigError("photon counts must be >= 0")
        if self.radial_nodes < 1 or self.angular_nodes < 1:
            raise ConfigError("quadrature node counts must be positive")

    @classmethod
    def hfa(cls, delta: float = 0.0, **kw) -> AmplifierConfig:
        return cls(delta=delta, m_add=1, n_sub=1, **kw)

    @classmethod
    def npa(cls, delta: float, n_sub: int = 1, **kw) -> AmplifierConfig:
        return cls(delta=delta, m_add=0, n_sub=n_sub, **kw)

    @property
    def is_identity(self) -> bool:
        return self.delta == 0 and self.m_add == 0 and self.n_sub == 0

    @property
    def label(self) -> str:
        ops = []
        if self.m_add:
            ops.append(f"add{self.m_add}")
        if self.n_sub:
            ops.append(f"sub{self.n_sub}")
        return "+".join(ops) or "none"


@dataclass(frozen=True)
class ChannelConfig:
    eta: float = 1.0
    n_t: float = 0.0
    convention: str = "excess"

    def __post_init__(self):
        # validates ranges and the convention name
        channel_noise_variance(self.eta, self.n_t, self.convention)

    @property
    def noise_variance(self) -> float:
        return channel_noise_variance(self.eta, self.n_t, self.convention)

    @property
    def is_ideal(self) -> bool:
        return self.eta == 1.0 and self.noise_variance == 0.0


CHANNEL_PRESETS = {
    "ideal": (1.0, 0.0),
    "noisy": (1.0, 0.1),
    "lossy": (0.9, 0.0),
    "realistic": (0.9, 0.1),
}


def channel_preset(name: str, convention: str = "excess") -> ChannelConfig:
    try:
        eta, n_t = CHANNEL_PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown channel preset {name!r}; expected one of {list(CHANNEL_PRESETS)}") from None
    return ChannelConfig(eta, n_t, convention)


@dataclass(frozen=True)
class AncillaNoiseModel:
    """Nine-component ancilla ``|nu> = sum_k c_k |k>`` steering displacements ``beta_k``.

    ``beta_0 = 0`` and ``beta_k = sqrt(delta') exp(2 i k pi / 8)`` for k = 1..8;
    ``c_0 = 1`` and ``c_k = exp(-delta'/2)`` before normalization.
    """

    delta_prime: float

    def __post_init__(self):
        if self.delta_prime < 0:
            raise ConfigError(f"delta' must be >= 0, got {self.delta_prime}")

    @property
    def amplitudes(self) -> np.ndarray:
        k = np.arange(ANCILLA_DIM)
        beta = np.sqrt(self.delta_prime) * np.exp(2j * k * np.pi / 8)
        beta[0] = 0.0
        return beta

    @property
    def coefficients(self) -> np.ndarray:
        c = np.full(ANCILLA_DIM, np.exp(-self.delta_prime / 2))
        c[0] = 1.0
        return c / np.linalg.norm(c)

    @property
    def probabilities(self) -> np.ndarray:
        return self.coefficients**2

    def moments(self) -> tuple[float, float]:
        """Mean of ``|beta|^2`` and ``|beta|^4`` over the ancilla weights."""
        p = self.probabilities
        b2 = np.abs(self.amplitudes) ** 2
        return float(p @ b2), float(p @ b2**2)


def _mode_dim(rho: DensityMatrix, mode: int) -> int:
    if not 0 <= mode < rho.space.n_modes:
        raise ConfigError(f"mode {mode} out of range for {rho.space.n_modes}-mode state")
    return rho.space.mode_dims[mode]


def loss_kraus(dim: int, eta: float, tol: float = 1e-12) -> np.ndarray:
    """Pure-loss Kraus operators, added until the completeness defect is below ``tol``.

    ``A_k = sum_n sqrt(C(n, k)) eta^((n-k)/2) (1-eta)^(k/2) |n-k><n|``.
    """
    if not 0.0 < eta <= 1.0:
        raise ConfigError(f"transmittance must lie in (0, 1], got {eta}")
    ops = []
    completeness = np.zeros((dim, dim))
    for k in range(dim):
        n = np.arange(k, dim)
        amp = np.zeros((dim, dim))
        amp[n - k, n] = np.sqrt(comb(n, k)) * eta ** ((n - k) / 2) * (1 - eta) ** (k / 2)
        ops.append(amp)
        completeness += amp.T @ amp
        if np.max(np.abs(completeness - np.eye(dim))) < tol:
            break
    return np.array(ops)


def loss_channel(rho: DensityMatrix, mode: int, eta: float) -> DensityMatrix:
    """Pure-loss channel of transmittance ``eta`` on one mode."""
    dim = _mode_dim(rho, mode)
    if eta == 1.0:
        return rho
    dims = rho.space.mode_dims
    out = sum(apply_on_mode(rho.matrix, k, mode, dims) for k in loss_kraus(dim, eta))
    return DensityMatrix(rho.space, out, rho.pre_norm_trace)


def noise_quadrature(delta: float, radial_nodes: int = 12, angular_nodes: int = 16):
    """Nodes and weights for the Gaussian average over displacements.

    Approximates ``int exp(-|alpha|^2/delta)/(pi delta) f(alpha) d^2 alpha``.
    Displaced Fock matrix elements carry a factor ``exp(-|alpha|^2)``, so the
    Laguerre weight is matched to ``exp(-|alpha|^2 (1 + 1/delta))``; the
    remaining integrand is polynomial in ``|alpha|^2`` and in ``exp(i theta)``.
    """
    t, w = roots_laguerre(radial_nodes)
    s = t * delta / (1 + delta)
    radial_w = w * np.exp(s) / (1 + delta)
    theta = 2 * np.pi * np.arange(angular_nodes) / angular_nodes
    alphas = (np.sqrt(s)[:, None] * np.exp(1j * theta)[None, :]).ravel()
    weights = np.repeat(radial_w / angular_nodes, angular_nodes)
    return alphas, weights


def add_gaussian_noise(rho: DensityMatrix, mode: int, variance_delta: float,
                       radial_nodes: int = 12, angular_nodes: int = 16) -> DensityMatrix:
    """Average ``D(alpha) rho D(alpha)^dag`` over a Gaussian of mean ``|alpha|^2 = delta``.

    Adds ``delta`` to the variance of each quadrature of ``mode``.

    Raises
    ------
    QuadratureError
        If the trace drifts by more than 1e-6 (quadrature or truncation failure).
    """
    dim = _mode_dim(rho, mode)
    if variance_delta < 0:
        raise ConfigError(f"noise variance must be >= 0, got {variance_delta}")
    if variance_delta == 0:
        return rho
    alphas, weights = noise_quadrature(variance_delta, radial_nodes, angular_nodes)
    ds = displacement_matrices(dim, alphas)
    dims = rho.space.mode_dims
    n = len(dims)
    # row index of `mode` first, its column index last, everything else in between
    t = np.moveaxis(rho.tensor_view(), (mode, n + mode), (0, 2 * n - 1))
    inner = t.shape[1:-1]
    t = t.reshape(dim, -1)
    acc = np.zeros((dim * t.shape[1] // dim, dim), dtype=complex)
    for w, d in zip(weights, ds):
        y = (d @ t).reshape(-1, dim)
        acc += w * (y @ d.conj().T)
    acc = acc.reshape((dim,) + inner + (dim,))
    out = np.moveaxis(acc, (0, 2 * n - 1), (mode, n + mode)).reshape(rho.matrix.shape)
    tr_in = rho.trace
    drift = abs(np.trace(out).real - tr_in) / tr_in
    if drift > NOISE_TRACE_TOL:
        raise QuadratureError(
            f"noise delta={variance_delta} drifts trace by {drift:.3g} at cutoff {dim}; "
            "raise the cutoff or the quadrature order")
    return DensityMatrix(rho.space, out * (tr_in / np.trace(out).real), rho.pre_norm_trace)


def _power_matrix(dim: int, count: int, create: bool, extra: int = 0) -> np.ndarray:
    """``a^count`` (dim x dim) or ``a^dag^count`` mapping dim levels into dim+extra levels."""
    n = np.arange(dim)
    if create:
        out = np.zeros((dim + extra, dim))
        keep = n + count < dim + extra
        out[n[keep] + count, n[keep]] = np.exp(0.5 * (gammaln(n[keep] + count + 1) - gammaln(n[keep] + 1)))
        return out
    out = np.zeros((dim, dim))
    keep = n >= count
    out[n[keep] - count, n[keep]] = np.exp(0.5 * (gammaln(n[keep] + 1) - gammaln(n[keep] - count + 1)))
    return out


def annihilation_power(dim: int, count: int) -> np.ndarray:
    return _power_matrix(dim, count, create=False)


def creation_power(dim: int, count: int) -> np.ndarray:
    """Truncated ``(a^dag)^count``; components pushed past the cutoff are dropped."""
    return _power_matrix(dim, count, create=True)


def creation_leak(matrix: np.ndarray, dims, mode: int, count: int) -> float:
    """Fraction of the weight of ``a^dag^M rho a^M`` that lands above the cutoff."""
    dim = dims[mode]
    ext = _power_matrix(dim, count, create=True, extra=count)
    full = apply_on_mode(matrix, ext, mode, dims)
    new_dims = dims[:mode] + (dim + count,) + dims[mode + 1:]
    diag = np.diag(full).real.reshape(new_dims)
    total = diag.sum()
    if total <= 0:
        return 0.0
    above = np.take(diag, np.arange(dim, dim + count), axis=mode).sum()
    return float(above / total)


def photon_subtract(rho: DensityMatrix, mode: int, count: int) -> DensityMatrix:
    """Heralded ``a^N rho a^dag^N``, normalized; the weight goes to ``pre_norm_trace``."""
    dim = _mode_dim(rho, mode)
    if count < 0:
        raise ConfigError("subtraction count must be >= 0")
    if count == 0:
        return DensityMatrix(rho.space, rho.matrix, 1.0)
    out = apply_on_mode(rho.matrix, annihilation_power(dim, count), mode, rho.space.mode_dims)
    w = np.trace(out).real / rho.trace
    if w < 1e-14:
        raise PostSelectionError(f"subtracting {count} photon(s) from this state has zero probability")
    return DensityMatrix(rho.space, out / (w * rho.trace), w)


def photon_add(rho: DensityMatrix, mode: int, count: int, leak_tol: float = LEAK_TOL) -> DensityMatrix:
    """Heralded ``a^dag^M rho a^M``, normalized.

    Raises ``TruncationError`` if more than ``leak_tol`` of the output weight
    would sit above the cutoff.
    """
    dim = _mode_dim(rho, mode)
    if count < 0:
        raise ConfigError("addition count must be >= 0")
    if count == 0:
        return DensityMatrix(rho.space, rho.matrix, 1.0)
    dims = rho.space.mode_dims
    leak = creation_leak(rho.matrix, dims, mode, count)
    if leak > leak_tol:
        raise TruncationError(f"adding {count} photon(s) leaks {leak:.3g} past cutoff {dim}")
    out = apply_on_mode(rho.matrix, creation_power(dim, count), mode, dims)
    w = np.trace(out).real / rho.trace
    return DensityMatrix(rho.space, out / (w * rho.trace), w)


def amplifier(rho: DensityMatrix, mode: int, cfg: AmplifierConfig,
              leak_tol: float = LEAK_TOL) -> DensityMatrix:
    """Noise addition, then ``m_add`` additions, then ``n_sub`` subtractions.

    The returned state is normalized and ``pre_norm_trace`` is the trace of the
    unnormalized output for a unit-trace input.
    """
    if cfg.is_identity:
        return DensityMatrix(rho.space, rho.matrix / rho.trace, 1.0)
    out = add_gaussian_noise(rho, mode, cfg.delta, cfg.radial_nodes, cfg.angular_nodes)
    out = photon_add(out, mode, cfg.m_add, leak_tol)
    weight = out.pre_norm_trace
    out = photon_subtract(out, mode, cfg.n_sub)
    weight *= out.pre_norm_trace
    return DensityMatrix(out.space, out.matrix, weight)


def ideal_gain_operator(dim: int, g: float) -> LinearOperator:
    """Diagonal ``g^n`` (unphysical for g > 1; comparison reference only)."""
    if g <= 0:
        raise ConfigError("gain must be positive")
    top = (dim - 1) * math.log(g)
    if top > 690:
        raise OverflowError(f"g^{dim - 1} overflows")
    return LinearOperator(HilbertSpec((dim,)), np.diag(g ** np.arange(dim, dtype=float)))


def apply_channel(rho: DensityMatrix, channel: ChannelConfig, mode: int = 1,
                  radial_nodes: int = 12, angular_nodes: int = 16) -> DensityMatrix:
    """Pure loss followed by the Gaussian noise that ``channel`` prescribes."""
    out = loss_channel(rho, mode, channel.eta)
    return add_gaussian_noise(out, mode, channel.noise_variance, radial_nodes, angular_nodes)


def attach_ancilla_noise(rho: DensityMatrix, model: AncillaNoiseModel, mode: int = 1) -> DensityMatrix:
    """Entangle a new last mode ``nu`` with ``mode`` through controlled displacements.

    Returns ``sum_kl c_k c_l D(beta_k) rho D(beta_l)^dag (x) |k><l|``.
    """
    ds = displacement_matrices(_mode_dim(rho, mode), model.amplitudes)
    c = model.coefficients
    dims = rho.space.mode_dims
    eye = [np.eye(d) for d in dims]
    n = rho.space.total_dim
    full_ops = []
    for d in ds:
        ops = list(eye)
        ops[mode] = d
        m = ops[0]
        for o in ops[1:]:
            m = np.kron(m, o)
        full_ops.append(c[len(full_ops)] * m)
    left = np.array([op @ rho.matrix for op in full_ops])  # (k, n, n)
    out = np.einsum("kij,lmj->ikml", left, np.conj(np.array(full_ops)))
    out = out.reshape(n * ANCILLA_DIM, n * ANCILLA_DIM)
    tr = np.trace(out).real
    if abs(tr - rho.trace) / rho.trace > ANCILLA_TRACE_TOL:
        raise TruncationError(f"ancilla displacements lose {1 - tr / rho.trace:.3g} of the trace")
    return DensityMatrix(rho.space + HilbertSpec((ANCILLA_DIM,)), out * (rho.trace / tr), rho.pre_norm_trace)


@dataclass(frozen=True)
class BranchedState:
    """Amplified state whose noise came from the ancilla, kept in factored form.

    The full state on (A, B, nu) is
    ``sum_kl sqrt(p_k p_l) K_k rho K_l^dag (x) |k><l| / weight`` with
    ``K_k = a^N a^dag^M D(beta_k)`` acting on ``mode``. Everything downstream
    only needs ``rho``, the branch probabilities and the ``K_k``.
    """

    base: DensityMatrix
    probs: np.ndarray
    kraus: np.ndarray = field(repr=False)
    mode: int = 1

    @cached_property
    def branch_matrices(self) -> np.ndarray:
        """Unnormalized ``p_k K_k rho K_k^dag`` for each branch, shape (K, n, n)."""
        dims = self.base.space.mode_dims
        return np.array([p * apply_on_mode(self.base.matrix, k, self.mode, dims)
                         for p, k in zip(self.probs, self.kraus)])

    @cached_property
    def weight(self) -> float:
        return float(np.einsum("kii->", self.branch_matrices).real / self.base.trace)

    def reduced(self) -> DensityMatrix:
        """State on (A, B) with the ancilla traced out."""
        m = self.branch_matrices.sum(axis=0)
        return DensityMatrix(self.base.space, m / np.trace(m).real, self.weight)

    def kraus_gram(self) -> np.ndarray:
        """``sum_k p_k K_k^dag K_k`` on the amplified mode."""
        return np.einsum("k,kji,kjl->il", self.probs, self.kraus.conj(), self.kraus)

    def to_density_matrix(self) -> DensityMatrix:
        """Explicit three-mode density matrix (memory grows as 81 n^2)."""
        dims = self.base.space.mode_dims
        n = self.base.space.total_dim
        eye = [np.eye(d) for d in dims]
        full = []
        for p, k in zip(self.probs, self.kraus):
            ops = list(eye)
            ops[self.mode] = k
            m = ops[0]
            for o in ops[1:]:
                m = np.kron(m, o)
            full.append(np.sqrt(p) * m)
        full = np.array(full)
        left = full @ self.base.matrix
        out = np.einsum("kij,lmj->ikml", left, full.conj()).reshape(n * ANCILLA_DIM, n * ANCILLA_DIM)
        out /= np.trace(out).real
        return DensityMatrix(self.base.space + HilbertSpec((ANCILLA_DIM,)), out, self.weight)


def amplify_with_ancilla(rho: DensityMatrix, cfg: AmplifierConfig, model: AncillaNoiseModel,
                         mode: int = 1, leak_tol: float = LEAK_TOL) -> BranchedState:
    """Amplifier whose noise step is the ancilla model instead of the Gaussian average.

    ``cfg.delta`` is ignored; the noise strength is ``model.delta_prime``.
    """
    dim = _mode_dim(rho, mode)
    dims = rho.space.mode_dims
    ds = displacement_matrices(dim, model.amplitudes)
    create = creation_power(dim, cfg.m_add) if cfg.m_add else np.eye(dim)
    sub = annihilation_power(dim, cfg.n_sub) if cfg.n_sub else np.eye(dim)
    tr_in = rho.trace
    for d in ds:
        shifted = apply_on_mode(rho.matrix, d, mode, dims)
        drift = abs(np.trace(shifted).real - tr_in) / tr_in
        if drift > NOISE_TRACE_TOL:
            raise TruncationError(f"ancilla displacement loses {drift:.3g} of the trace at cutoff {dim}")
        if cfg.m_add:
            leak = creation_leak(shifted, dims, mode, cfg.m_add)
            if leak > leak_tol:
                raise TruncationError(f"adding {cfg.m_add} photon(s) leaks {leak:.3g} past cutoff {dim}")
    kraus = np.einsum("ij,jk,qkl->qil", sub, create, ds)
    state = BranchedState(DensityMatrix(rho.space, rho.matrix / tr_in, 1.0), model.probabilities, kraus, mode)
    if state.weight < 1e-14:
        raise PostSelectionError("amplifier has zero success probability on this state")
    return state
