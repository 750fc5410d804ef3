"""Graph supports for the two model families.

The recurrent model diffuses features along forward/backward random-walk
transition matrices; the convolutional model filters with Chebyshev
polynomials of the scaled normalized Laplacian. Both constructions follow
the methods the model family names come from; the source paper describes
them only qualitatively.
"""

from __future__ import annotations

import numpy as np

from ..errors import DegenerateInputError, ValidationError


def random_walk_matrices(W: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Row-stochastic forward (out-degree) and backward (in-degree) walks.

    Forward is ``D_out^-1 W``; backward is ``D_in^-1 W^T``. A node with no
    outgoing or incoming weight (and no self-loop) has no transition
    distribution and is rejected.
    """
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValidationError(f"adjacency must be square, got {W.shape}")
    if np.any(W < 0):
        raise ValidationError("adjacency must be non-negative")
    d_out = W.sum(axis=1)
    d_in = W.sum(axis=0)
    isolated = np.flatnonzero((d_out == 0) | (d_in == 0))
    if isolated.size:
        raise DegenerateInputError(
            f"nodes {isolated.tolist()} have zero degree and no self-loop"
        )
    forward = W / d_out[:, None]
    backward = W.T / d_in[:, None]
    return forward, backward


def scaled_laplacian(W: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Normalized Laplacian rescaled so its spectrum fits in [-1, 1].

    ``L = I - D^{-1/2} W D^{-1/2}`` on the symmetrized ``max(W, W^T)``;
    the leading eigenvalue comes from power iteration and falls back to the
    theoretical bound 2 when the Laplacian is (numerically) zero.
    """
    W = np.asarray(W, dtype=np.float64)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValidationError(f"adjacency must be square, got {W.shape}")
    if np.any(W < 0):
        raise ValidationError("adjacency must be non-negative")
    sym = np.maximum(W, W.T)
    degrees = sym.sum(axis=1)
    zero = np.flatnonzero(degrees == 0)
    if zero.size:
        raise DegenerateInputError(f"nodes {zero.tolist()} have zero degree and no self-loop")
    inv_sqrt = 1.0 / np.sqrt(degrees)
    laplacian = np.eye(W.shape[0]) - (inv_sqrt[:, None] * sym) * inv_sqrt[None, :]
    lam_max = power_iteration_lambda_max(laplacian, tol=tol)
    if lam_max < tol:
        lam_max = 2.0  # identity-like graph: L == 0, use the spectral bound
    return 2.0 * laplacian / lam_max - np.eye(W.shape[0])


def power_iteration_lambda_max(
    matrix: np.ndarray, tol: float = 1e-11, max_iterations: int = 20_000
) -> float:
    """Largest eigenvalue of a symmetric PSD matrix by deterministic power iteration.

    Stops on the residual ``|| M v - lambda v ||``, which bounds the distance
    to the nearest true eigenvalue for symmetric matrices.
    """
    n = matrix.shape[0]
    # fixed, slightly uneven start so no eigenvector is exactly orthogonal by accident
    v = np.ones(n) + np.linspace(0.0, 0.5, n)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iterations):
        w = matrix @ v
        norm = np.linalg.norm(w)
        if norm == 0.0:
            return 0.0
        v = w / norm
        w = matrix @ v
        lam = float(v @ w)
        if np.linalg.norm(w - lam * v) <= tol * max(1.0, abs(lam)):
            return lam
    return lam
