"""Closed-form Gaussian references, independent of the Fock-space pipeline."""

import numpy as np


def g_entropy(nbar):
    """Entropy in bits of a thermal state with mean photon number ``nbar``."""
    nbar = np.asarray(nbar, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = (nbar + 1) * np.log2(nbar + 1) - np.where(nbar > 0, nbar * np.log2(nbar), 0.0)
    return np.where(nbar > 1e-15, out, 0.0)


def symplectic_eigenvalues(V):
    n = V.shape[0] // 2
    omega = np.kron(np.eye(n), [[0, 1], [-1, 0]])
    ev = np.sort(np.abs(np.linalg.eigvals(1j * omega @ V)))
    return ev[::2]


def gaussian_entropy(V):
    return float(np.sum(g_entropy(np.maximum(symplectic_eigenvalues(V) - 0.5, 0.0))))


def conditional_cov(V_keep, V_meas, C, kind):
    """Covariance of the kept mode after measuring the other (vacuum variance 1/2)."""
    if kind == "homodyne":
        pi = np.diag([1.0, 0.0])
        inv = np.linalg.pinv(pi @ V_meas @ pi)
    else:
        inv = np.linalg.inv(V_meas + 0.5 * np.eye(2))
    return V_keep - C @ inv @ C.T


def gaussian_holevo(V, kind, conditioned_on):
    """S(V) minus the entropy of the mode left after measuring ``conditioned_on`` (0=A, 1=B)."""
    A, B, C = V[:2, :2], V[2:, 2:], V[:2, 2:]
    if conditioned_on == 1:
        cond = conditional_cov(A, B, C, kind)
    else:
        cond = conditional_cov(B, A, C.T, kind)
    return gaussian_entropy(V) - gaussian_entropy(cond)
