"""Truncated Fock-space linear algebra.

Every mode is truncated to a finite number of levels ``|0>, ..., |dim-1>``.
Quadratures follow the vacuum-variance-1/2 convention, ``x = (a + a^dag)/sqrt(2)``.
Multimode objects are ordered row-major over modes (mode 0 slowest), which is
exactly the ``np.kron`` ordering.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import reduce

import numpy as np
from scipy.special import eval_genlaguerre, gammaln
from scipy.stats import poisson

from cvamp.errors import (
    ConfigError,
    InvalidDimensionError,
    NonHermitianError,
    TruncationError,
)

HERMITIAN_TOL = 1e-12
PSD_TOL = 1e-10
TRACE_TOL = 1e-10


def _frozen(arr):
    arr = np.array(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class HilbertSpec:
    """Per-mode truncation dimensions of a multimode Fock space."""

    mode_dims: tuple[int, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.mode_dims)
        if not dims:
            raise InvalidDimensionError("at least one mode is required")
        for d in dims:
            if d < 2:
                raise InvalidDimensionError(f"mode dimension must be >= 2, got {d}")
        object.__setattr__(self, "mode_dims", dims)

    @property
    def total_dim(self) -> int:
        return math.prod(self.mode_dims)

    @property
    def n_modes(self) -> int:
        return len(self.mode_dims)

    def flat_index(self, occupation) -> int:
        occupation = tuple(occupation)
        if len(occupation) != self.n_modes:
            raise ValueError("occupation tuple has wrong length")
        return int(np.ravel_multi_index(occupation, self.mode_dims))

    def occupation(self, index: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(index, self.mode_dims))

    def __add__(self, other: HilbertSpec) -> HilbertSpec:
        return HilbertSpec(self.mode_dims + other.mode_dims)


@dataclass(frozen=True)
class Ket:
    space: HilbertSpec
    amplitudes: np.ndarray
    normalized: bool = False
    tail_mass: float = 0.0

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        if amps.shape != (self.space.total_dim,):
            raise ValueError("amplitude vector does not match the space")
        object.__setattr__(self, "amplitudes", _frozen(amps))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def projector(self) -> DensityMatrix:
        """Return ``|psi><psi|`` normalized to unit trace."""
        v = self.amplitudes / self.norm
        return DensityMatrix(self.space, np.outer(v, v.conj()))


@dataclass(frozen=True)
class DensityMatrix:
    """Density matrix on a truncated multimode Fock space.

    ``pre_norm_trace`` keeps the trace the matrix had before the most recent
    normalization, i.e. the success weight of a heralded operation.
    The stored matrix is symmetrized on construction.
    """

    space: HilbertSpec
    matrix: np.ndarray
    pre_norm_trace: float = 1.0

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        n = self.space.total_dim
        if m.shape != (n, n):
            raise ValueError(f"matrix shape {m.shape} does not match space dimension {n}")
        m = 0.5 * (m + m.conj().T)
        object.__setattr__(self, "matrix", _frozen(m))
        object.__setattr__(self, "pre_norm_trace", float(self.pre_norm_trace))

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    @property
    def purity(self) -> float:
        # tr(rho^2) for Hermitian rho is the squared Frobenius norm
        return float(np.vdot(self.matrix, self.matrix).real) / self.trace**2

    def normalized(self, pre_norm_trace: float | None = None) -> DensityMatrix:
        tr = self.trace
        if pre_norm_trace is None:
            pre_norm_trace = tr
        return DensityMatrix(self.space, self.matrix / tr, pre_norm_trace)

    def tensor_view(self) -> np.ndarray:
        """Matrix reshaped to ``(d0, d1, ..., d0, d1, ...)``."""
        return self.matrix.reshape(self.space.mode_dims * 2)

    def validate(self, normalized: bool = True) -> None:
        """Raise if any density-matrix invariant is violated."""
        herm = np.max(np.abs(self.matrix - self.matrix.conj().T))
        if herm > HERMITIAN_TOL:
            raise NonHermitianError(f"Hermiticity defect {herm:.3g}")
        lo = np.linalg.eigvalsh(self.matrix)[0]
        if lo < -PSD_TOL:
            raise NonHermitianError(f"negative eigenvalue {lo:.3g}")
        if normalized and abs(self.trace - 1.0) > TRACE_TOL:
            raise NonHermitianError(f"trace {self.trace!r} is not 1")


@dataclass(frozen=True)
class LinearOperator:
    space: HilbertSpec
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        n = self.space.total_dim
        if m.shape != (n, n):
            raise ValueError("operator dimensions do not match space")
        object.__setattr__(self, "matrix", _frozen(m))

    @property
    def dagger(self) -> LinearOperator:
        return LinearOperator(self.space, self.matrix.conj().T)

    def __matmul__(self, other):
        if isinstance(other, LinearOperator):
            return LinearOperator(self.space, self.matrix @ other.matrix)
        if isinstance(other, Ket):
            return Ket(self.space, self.matrix @ other.amplitudes)
        return NotImplemented


def _check_dim(dim):
    if int(dim) != dim or dim < 2:
        raise InvalidDimensionError(f"dimension must be an integer >= 2, got {dim!r}")
    return int(dim)


def ladder_operator(kind: str, dim: int) -> LinearOperator:
    """Annihilation, creation or number operator truncated to ``dim`` levels.

    The truncated creation operator has its top row zero, so ``a^dag |dim-1>`` is
    dropped rather than wrapped.
    """
    dim = _check_dim(dim)
    sq = np.sqrt(np.arange(1, dim))
    if kind == "annihilate":
        m = np.diag(sq, 1)
    elif kind == "create":
        m = np.diag(sq, -1)
    elif kind == "number":
        m = np.diag(np.arange(dim, dtype=float))
    else:
        raise ValueError(f"unknown ladder operator kind {kind!r}")
    return LinearOperator(HilbertSpec((dim,)), m)


def displacement_matrices(dim: int, alphas) -> np.ndarray:
    """Truncated displacement matrices ``<m|D(alpha)|n>`` for a batch of amplitudes.

    Uses the associated-Laguerre closed form, evaluated in log space for the
    factorial prefactors. Returns an array of shape ``alphas.shape + (dim, dim)``.
    """
    dim = _check_dim(dim)
    alphas = np.asarray(alphas, dtype=complex)
    a = alphas[..., None, None]
    m = np.arange(dim)[:, None]
    n = np.arange(dim)[None, :]
    lo = np.minimum(m, n)
    k = np.abs(m - n)
    x = np.abs(a) ** 2
    # below the diagonal the power is alpha^(m-n); above it (-alpha*)^(n-m)
    base = np.where(m >= n, a, -np.conj(a))
    log_pref = 0.5 * (gammaln(lo + 1) - gammaln(lo + k + 1))
    with np.errstate(divide="ignore", invalid="ignore"):
        power = np.where(k == 0, 1.0 + 0j, base ** k)
    return np.exp(log_pref - x / 2) * power * eval_genlaguerre(lo, k, x)


def displacement_operator(dim: int, alpha: complex) -> LinearOperator:
    """Truncated displacement operator ``D(alpha) = exp(alpha a^dag - alpha^* a)``.

    Matrix elements are the exact infinite-space elements restricted to the
    retained levels, so the result is only approximately unitary near the cutoff.
    """
    return LinearOperator(HilbertSpec((_check_dim(dim),)), displacement_matrices(dim, alpha))


def coherent_ket(dim: int, alpha: complex) -> Ket:
    """Coherent state ``|alpha>`` renormalized over the truncated space.

    Raises ``TruncationError`` if the Poisson tail beyond the cutoff exceeds
    1e-4 and warns above 1e-8.
    """
    dim = _check_dim(dim)
    nbar = abs(alpha) ** 2
    tail = float(poisson.sf(dim - 1, nbar)) if nbar > 0 else 0.0
    if tail > 1e-4:
        raise TruncationError(f"coherent state |alpha|={abs(alpha):.3g} leaks {tail:.3g} beyond dim {dim}")
    if tail > 1e-8:
        warnings.warn(f"coherent state tail mass {tail:.3g} beyond cutoff", stacklevel=2)
    amps = coherent_amplitudes(dim, alpha)
    amps /= np.linalg.norm(amps)
    return Ket(HilbertSpec((dim,)), amps, normalized=True, tail_mass=tail)


def hermite_functions(dim: int, x) -> np.ndarray:
    """Harmonic-oscillator eigenfunctions ``<n|x>`` for ``n < dim``.

    Stable three-term recurrence; returns shape ``x.shape + (dim,)``.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape + (dim,))
    out[..., 0] = np.pi ** -0.25 * np.exp(-x**2 / 2)
    if dim > 1:
        out[..., 1] = np.sqrt(2.0) * x * out[..., 0]
    for n in range(1, dim - 1):
        out[..., n + 1] = np.sqrt(2.0 / (n + 1)) * x * out[..., n] - np.sqrt(n / (n + 1)) * out[..., n - 1]
    return out


def coherent_amplitudes(dim: int, alphas) -> np.ndarray:
    """Untruncated-normalization coherent amplitudes ``<n|alpha>``, batched."""
    alphas = np.asarray(alphas, dtype=complex)[..., None]
    n = np.arange(dim)
    return np.exp(-np.abs(alphas) ** 2 / 2 - 0.5 * gammaln(n + 1)) * alphas**n


def quadrature_ket(dim: int, x: float) -> Ket:
    """Improper x-quadrature eigenket ``|x>`` projected onto the truncated space.

    Not normalized: ``|<n|x>|^2`` is a probability density in ``x``.
    """
    dim = _check_dim(dim)
    return Ket(HilbertSpec((dim,)), hermite_functions(dim, x).astype(complex))


def tensor(a, b):
    """Kronecker product with the modes of ``a`` first."""
    if isinstance(a, DensityMatrix) and isinstance(b, DensityMatrix):
        return DensityMatrix(a.space + b.space, np.kron(a.matrix, b.matrix),
                             a.pre_norm_trace * b.pre_norm_trace)
    if isinstance(a, LinearOperator) and isinstance(b, LinearOperator):
        return LinearOperator(a.space + b.space, np.kron(a.matrix, b.matrix))
    if isinstance(a, Ket) and isinstance(b, Ket):
        return Ket(a.space + b.space, np.kron(a.amplitudes, b.amplitudes))
    raise TypeError(f"cannot tensor {type(a).__name__} with {type(b).__name__}")


def tensor_all(*items):
    return reduce(tensor, items)


def partial_trace(rho: DensityMatrix, keep) -> DensityMatrix:
    """Reduced state on the modes in ``keep`` (returned in ascending mode order)."""
    keep = sorted(set(int(k) for k in keep))
    n = rho.space.n_modes
    if not keep:
        raise ConfigError("partial_trace needs at least one mode to keep")
    if keep[0] < 0 or keep[-1] >= n:
        raise ConfigError(f"modes {keep} out of range for {n}-mode state")
    dims = rho.space.mode_dims
    traced = [i for i in range(n) if i not in keep]
    letters = "abcdefghijklmnop"
    row = [letters[i] for i in range(n)]
    col = [letters[i] if i in traced else letters[i].upper() for i in range(n)]
    out = [letters[i] for i in keep] + [letters[i].upper() for i in keep]
    red = np.einsum("".join(row) + "".join(col) + "->" + "".join(out), rho.tensor_view())
    kd = tuple(dims[i] for i in keep)
    return DensityMatrix(HilbertSpec(kd), red.reshape(math.prod(kd), -1), rho.pre_norm_trace)


def apply_on_mode(matrix: np.ndarray, op: np.ndarray, mode: int, dims) -> np.ndarray:
    """Return ``O rho O^dag`` with ``O`` acting on one mode of a multimode matrix.

    ``op`` may be rectangular (``d_out x d_in``), which changes that mode's
    dimension in the result.
    """
    dims = tuple(dims)
    n = len(dims)
    d_out = op.shape[0]
    t = matrix.reshape(dims * 2)
    t = np.moveaxis(np.tensordot(op, t, axes=([1], [mode])), 0, mode)
    t = np.moveaxis(np.tensordot(op.conj(), t, axes=([1], [n + mode])), 0, n + mode)
    new = dims[:mode] + (d_out,) + dims[mode + 1:]
    size = math.prod(new)
    return t.reshape(size, size)


def mode_expectation(rho: DensityMatrix, op: np.ndarray, mode: int) -> complex:
    """``tr(rho O)`` for an operator acting on a single mode."""
    red = partial_trace(rho, [mode]).matrix
    return complex(np.trace(red @ op)) / rho.trace


def hermitian_eigenvalues(rho, tol: float = 1e-8) -> np.ndarray:
    """Ascending real spectrum of a Hermitian matrix (or DensityMatrix).

    The input is symmetrized first; a Hermiticity defect above ``tol`` raises.
    Eigenvalues below ``-1e-8`` trigger a warning.
    """
    m = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho)
    defect = np.max(np.abs(m - np.conj(np.swapaxes(m, -1, -2)))) if m.size else 0.0
    if defect > tol:
        raise NonHermitianError(f"matrix is not Hermitian (defect {defect:.3g})")
    m = 0.5 * (m + np.conj(np.swapaxes(m, -1, -2)))
    w = np.linalg.eigvalsh(m)
    if w.size and w.min() < -1e-8:
        warnings.warn(f"eigenvalue {w.min():.3g} below -1e-8", stacklevel=2)
    return w


def fock_projector(dim: int, n: int) -> DensityMatrix:
    v = np.zeros(dim)
    v[n] = 1.0
    return DensityMatrix(HilbertSpec((dim,)), np.outer(v, v))


def thermal_state(dim: int, nbar: float) -> DensityMatrix:
    """Geometric photon distribution with mean ``nbar``, renormalized after truncation."""
    n = np.arange(dim)
    p = nbar**n / (1 + nbar) ** (n + 1) if nbar > 0 else (n == 0).astype(float)
    return DensityMatrix(HilbertSpec((dim,)), np.diag(p / p.sum()))
