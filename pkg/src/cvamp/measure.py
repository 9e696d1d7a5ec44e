"""Homodyne/heterodyne outcome grids, mutual information and Holevo bounds.

Information quantities are in bits. Outcome integrals use fixed trapezoid
grids spanning +-6 standard deviations of the measured mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from cvamp.channels import BranchedState
from cvamp.errors import ConfigError, MassDeficitError
from cvamp.fock import (
    DensityMatrix,
    HilbertSpec,
    LinearOperator,
    coherent_amplitudes,
    hermite_functions,
    hermitian_eigenvalues,
)
from cvamp.states import normalize_kind, quadrature_moments

DEFAULT_POINTS = {"homodyne": 96, "heterodyne": 32}
MASS_TOL = 1e-3
EIG_CLIP = 1e-14
_CHUNK = 1024


@dataclass(frozen=True)
class MeasurementGrid:
    """Outcome abscissas and trapezoid weights for one party's measurement.

    Homodyne outcomes are real ``x``; heterodyne outcomes are ``(x, p)`` pairs
    with ``alpha = (x + i p)/sqrt(2)``, flattened row-major over (x, p).
    """

    kind: str
    axis: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "kind", normalize_kind(self.kind))
        ax = np.asarray(self.axis, dtype=float)
        if ax.ndim != 1 or ax.size < 2:
            raise ConfigError("grid axis needs at least two points")
        if np.max(np.abs(ax + ax[::-1])) > 1e-12:
            raise ConfigError("grid axis must be symmetric about zero")
        ax.setflags(write=False)
        object.__setattr__(self, "axis", ax)

    @property
    def axis_weights(self) -> np.ndarray:
        h = self.axis[1] - self.axis[0]
        w = np.full(self.axis.size, h)
        w[[0, -1]] = h / 2
        return w

    @property
    def abscissas(self) -> np.ndarray:
        if self.kind == "homodyne":
            return self.axis
        x, p = np.meshgrid(self.axis, self.axis, indexing="ij")
        return np.stack([x.ravel(), p.ravel()], axis=1)

    @property
    def weights(self) -> np.ndarray:
        w = self.axis_weights
        return w if self.kind == "homodyne" else np.outer(w, w).ravel()

    @property
    def size(self) -> int:
        return self.weights.size

    def vectors(self, dim: int) -> np.ndarray:
        """POVM vectors ``phi`` with ``Pi = |phi><phi|`` per outcome, shape (N, dim)."""
        if self.kind == "homodyne":
            return hermite_functions(dim, self.axis).astype(complex)
        pts = self.abscissas
        alpha = (pts[:, 0] + 1j * pts[:, 1]) / np.sqrt(2)
        return coherent_amplitudes(dim, alpha) / np.sqrt(2 * np.pi)

    def refined(self, factor: int = 2) -> MeasurementGrid:
        """Same span with ``factor`` times as many points per axis."""
        half = self.axis[-1]
        return MeasurementGrid(self.kind, np.linspace(-half, half, factor * self.axis.size))


def make_grid(kind: str, half_width: float, points: int | None = None) -> MeasurementGrid:
    kind = normalize_kind(kind)
    points = points or DEFAULT_POINTS[kind]
    return MeasurementGrid(kind, np.linspace(-half_width, half_width, points))


def grid_for_mode(rho: DensityMatrix, mode: int, kind: str, points: int | None = None,
                  n_sigma: float = 6.0) -> MeasurementGrid:
    """Grid over ``+-n_sigma`` standard deviations of the outcome on ``mode``.

    The spread is the larger raw second moment of x and p; heterodyne adds the
    vacuum unit of the coherent-state POVM.
    """
    kind = normalize_kind(kind)
    means, cov = quadrature_moments(rho)
    sec = cov.diagonal() + means**2
    var = max(sec[2 * mode], sec[2 * mode + 1])
    if kind == "heterodyne":
        var += 0.5
    return make_grid(kind, n_sigma * math.sqrt(var), points)


def povm_density(kind: str, outcome, dim: int) -> LinearOperator:
    """POVM element density: ``|x><x|`` (per dx) or ``|alpha><alpha|/(2 pi)`` (per dx dp)."""
    kind = normalize_kind(kind)
    if kind == "homodyne":
        v = hermite_functions(dim, float(outcome)).astype(complex)
    else:
        x, p = outcome
        v = coherent_amplitudes(dim, (x + 1j * p) / np.sqrt(2)) / np.sqrt(2 * np.pi)
    return LinearOperator(HilbertSpec((dim,)), np.outer(v, v.conj()))


def measure_mode(matrix: np.ndarray, dims, mode: int, vecs: np.ndarray) -> np.ndarray:
    """``<phi_b| rho |phi_b>`` on one mode for every grid vector.

    Returns the unnormalized operators on the remaining modes, shape
    ``(N, D_rest, D_rest)``.
    """
    dims = tuple(dims)
    n = len(dims)
    d = dims[mode]
    rest = math.prod(dims) // d
    # rows indexed by the measured mode's (ket, bra) pair, one GEMM per chunk
    t = np.moveaxis(matrix.reshape(dims * 2), (mode, n + mode), (0, 1)).reshape(d * d, rest * rest)
    out = np.empty((vecs.shape[0], rest * rest), dtype=complex)
    for s in range(0, vecs.shape[0], _CHUNK):
        v = vecs[s:s + _CHUNK]
        w = (v.conj()[:, :, None] * v[:, None, :]).reshape(v.shape[0], d * d)
        np.matmul(w, t, out=out[s:s + _CHUNK])
    return out.reshape(-1, rest, rest)


@dataclass(frozen=True)
class JointDistribution:
    grid_a: MeasurementGrid
    grid_b: MeasurementGrid
    density: np.ndarray = field(repr=False)
    captured_mass: float = 1.0

    @property
    def masses(self) -> np.ndarray:
        return self.density * np.outer(self.grid_a.weights, self.grid_b.weights)


def joint_distribution(rho: DensityMatrix, grid_a: MeasurementGrid,
                       grid_b: MeasurementGrid) -> JointDistribution:
    """Outcome density ``Tr[rho Pi_a (x) Pi_b]`` over the product grid, renormalized.

    Raises ``MassDeficitError`` if the grid captures a total probability
    outside ``1 +- 1e-3``.
    """
    if rho.space.n_modes != 2:
        raise ConfigError("joint_distribution expects a two-mode state")
    da, db = rho.space.mode_dims
    va, vb = grid_a.vectors(da), grid_b.vectors(db)
    sig = measure_mode(rho.matrix / rho.trace, rho.space.mode_dims, 0, va)  # (Na, db, db)
    m = np.einsum("bj,bl->bjl", vb.conj(), vb).reshape(vb.shape[0], -1)
    dens = (sig.reshape(sig.shape[0], -1) @ m.T).real
    dens = np.clip(dens, 0.0, None)
    total = float(grid_a.weights @ dens @ grid_b.weights)
    if abs(total - 1.0) > MASS_TOL:
        raise MassDeficitError(f"measurement grid captures mass {total:.6f}")
    return JointDistribution(grid_a, grid_b, dens / total, total)


def mutual_information(jd: JointDistribution) -> float:
    """Mutual information in bits of a discretized joint outcome density."""
    wa, wb = jd.grid_a.weights, jd.grid_b.weights
    p = jd.density
    pa = p @ wb
    pb = wa @ p
    floor = 1e-300
    ratio = np.maximum(p, floor) / np.maximum(np.outer(pa, pb), floor)
    terms = np.where(p > 0, p * np.log2(ratio), 0.0)
    return float(wa @ terms @ wb)


def entropy_from_eigenvalues(w: np.ndarray) -> np.ndarray:
    w = np.where(w < EIG_CLIP, 0.0, w)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(w > 0, -w * np.log2(w), 0.0)
    return terms.sum(axis=-1)


def von_neumann_entropy(rho) -> float:
    """Von Neumann entropy in bits of a DensityMatrix (normalized by its trace)."""
    w = hermitian_eigenvalues(rho)
    return float(entropy_from_eigenvalues(w / w.sum()))


def _batch_entropies(mats: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Traces and entropies of a stack of unnormalized positive matrices."""
    mats = 0.5 * (mats + np.conj(np.swapaxes(mats, -1, -2)))
    tr = np.einsum("bii->b", mats).real
    safe = np.where(tr > 0, tr, 1.0)
    w = np.linalg.eigvalsh(mats) / safe[:, None]
    return tr, entropy_from_eigenvalues(w)


@dataclass(frozen=True)
class ConditionalEnsemble:
    """Outcome probabilities ``P`` (grid-weighted masses) and conditional states."""

    probabilities: np.ndarray = field(repr=False)
    states: np.ndarray = field(repr=False)
    dropped: int = 0
    captured_mass: float = 1.0

    def average_entropy(self) -> float:
        _, s = _batch_entropies(self.states)
        return float(self.probabilities @ s)


def conditional_ensemble(rho: DensityMatrix, measured_mode: int, grid: MeasurementGrid,
                         projective_modes=()) -> ConditionalEnsemble:
    """States left on the unmeasured modes after measuring ``measured_mode``.

    Modes in ``projective_modes`` are additionally measured in the number basis
    and the outcome becomes the pair (grid point, level).
    """
    dims = rho.space.mode_dims
    vecs = grid.vectors(dims[measured_mode])
    mats = measure_mode(rho.matrix / rho.trace, dims, measured_mode, vecs)
    w = grid.weights
    rest = [d for i, d in enumerate(dims) if i != measured_mode]
    rest_modes = [i for i in range(len(dims)) if i != measured_mode]
    for pm in sorted(projective_modes, reverse=True):
        j = rest_modes.index(pm)
        n_rest = len(rest)
        t = mats.reshape((mats.shape[0],) + tuple(rest) * 2)
        # diagonal blocks of the projective mode become extra outcomes
        t = np.diagonal(t, axis1=1 + j, axis2=1 + n_rest + j)  # (..., level)
        t = np.moveaxis(t, -1, 1)
        rest = rest[:j] + rest[j + 1:]
        rest_modes.remove(pm)
        size = math.prod(rest)
        mats = t.reshape(-1, size, size)
        w = np.repeat(w, dims[pm])
    tr = np.einsum("bii->b", mats).real
    masses = np.clip(tr, 0.0, None) * w
    total = float(masses.sum())
    if abs(total - 1.0) > MASS_TOL:
        raise MassDeficitError(f"conditional ensemble captures mass {total:.6f}")
    keep = tr > 1e-300
    mats = mats[keep] / tr[keep][:, None, None]
    return ConditionalEnsemble(masses[keep] / total, mats, int((~keep).sum()), total)


def _sqrtm_psd(mats: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (mats + np.conj(np.swapaxes(mats, -1, -2))))
    w = np.sqrt(np.clip(w, 0.0, None))
    return (v * w[..., None, :]) @ np.conj(np.swapaxes(v, -1, -2))


def branched_entropy(state: BranchedState) -> float:
    """Entropy of the full (A, B, nu) state from an (A, B)-sized Gram matrix.

    The nonzero spectrum of ``X X^dag`` with ``X = sum_k |k> sqrt(p_k) K_k sqrt(rho)``
    equals that of ``sqrt(rho) (sum_k p_k K_k^dag K_k) sqrt(rho)``.
    """
    base = state.base
    root = _sqrtm_psd(base.matrix / base.trace)
    dims = base.space.mode_dims
    ops = [np.eye(d) for d in dims]
    ops[state.mode] = state.kraus_gram()
    g = ops[0]
    for o in ops[1:]:
        g = np.kron(g, o)
    m = root @ g @ root
    return von_neumann_entropy(m / np.trace(m).real)


def _holevo_branched_direct(state: BranchedState, grid_b: MeasurementGrid) -> float:
    dims = state.base.space.mode_dims
    vecs = grid_b.vectors(dims[state.mode])
    traces, ents = [], []
    for sig in state.branch_matrices / state.weight:
        tr, s = _batch_entropies(measure_mode(sig, dims, state.mode, vecs))
        traces.append(tr)
        ents.append(s)
    masses = np.clip(np.array(traces), 0.0, None) * grid_b.weights
    total = float(masses.sum())
    if abs(total - 1.0) > MASS_TOL:
        raise MassDeficitError(f"conditional ensemble captures mass {total:.6f}")
    return branched_entropy(state) - float((masses * np.array(ents)).sum() / total)


def _holevo_branched_reverse(state: BranchedState, grid_a: MeasurementGrid) -> float:
    base = state.base
    dims = base.space.mode_dims
    measured = 1 - state.mode
    sig = measure_mode(base.matrix / base.trace, dims, measured, grid_a.vectors(dims[measured]))
    root = _sqrtm_psd(sig)
    m = root @ state.kraus_gram() @ root
    tr, ents = _batch_entropies(m)
    masses = np.clip(tr, 0.0, None) * grid_a.weights
    total = float(masses.sum())
    # the branch weight rescales every outcome alike
    if abs(total / state.weight - 1.0) > MASS_TOL:
        raise MassDeficitError(f"conditional ensemble captures mass {total / state.weight:.6f}")
    return branched_entropy(state) - float(masses @ ents / total)


def _ancilla_modes(rho, ancilla_mode):
    if isinstance(rho, BranchedState):
        return ()
    if ancilla_mode is None:
        if rho.space.n_modes != 2:
            raise ConfigError("states with more than two modes need ancilla_mode")
        return ()
    return (ancilla_mode,)


def holevo_direct(rho, grid_b: MeasurementGrid, ancilla_mode: int | None = None) -> float:
    """``S(rho_AB) - int P(b) S[rho_A(b)] db`` with Bob's outcomes ``b``.

    ``rho`` may be a two-mode DensityMatrix, a three-mode one with the ancilla
    at ``ancilla_mode`` (then Bob's outcome is the pair (b, k)), or a
    ``BranchedState``.
    """
    if isinstance(rho, BranchedState):
        return _holevo_branched_direct(rho, grid_b)
    proj = _ancilla_modes(rho, ancilla_mode)
    ens = conditional_ensemble(rho, 1, grid_b, proj)
    return von_neumann_entropy(rho) - ens.average_entropy()


def holevo_reverse(rho, grid_a: MeasurementGrid, ancilla_mode: int | None = None) -> float:
    """``S(rho_AB) - int P(a) S[rho_B(a)] da``; with an ancilla, ``rho_B(a)`` is on (B, nu)."""
    if isinstance(rho, BranchedState):
        return _holevo_branched_reverse(rho, grid_a)
    _ancilla_modes(rho, ancilla_mode)
    ens = conditional_ensemble(rho, 0, grid_a)
    return von_neumann_entropy(rho) - ens.average_entropy()
