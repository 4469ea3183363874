"""Small dense linear-algebra kernels.

Everything in the package funnels matrix exponentials through :func:`expm`,
a scaling-and-squaring Pade approximation that accepts stacked input, so a
batch of propagators over many time points costs a handful of vectorized
matrix products instead of one Python call per time point.
"""

import numpy as np

from .errors import StructuralError

# degree-13 Pade numerator coefficients and the Higham switching threshold
_PADE13 = np.array([
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0,
    1187353796428800.0, 129060195264000.0, 10559470521600.0, 670442572800.0,
    33522128640.0, 1323241920.0, 40840800.0, 960960.0, 16380.0, 182.0, 1.0,
])
_THETA13 = 5.371920351148152


def expm(matrices: np.ndarray) -> np.ndarray:
    """Matrix exponential of one matrix or a stack of matrices.

    Parameters
    ----------
    matrices : ndarray, shape (..., n, n)
        Square matrices; leading axes are broadcast as a batch.

    Returns
    -------
    ndarray of the same shape, ``exp(M)`` for each matrix in the stack.

    Notes
    -----
    Degree-13 diagonal Pade with scaling and squaring.  The squaring count
    is shared across the batch (taken from the largest 1-norm), which only
    ever over-scales individual members and does not hurt accuracy for the
    well-conditioned small matrices used here.
    """
    M = np.asarray(matrices, dtype=float)
    if M.ndim < 2 or M.shape[-1] != M.shape[-2]:
        raise StructuralError(f"expm expects square matrices, got shape {M.shape}")
    single = M.ndim == 2
    if single:
        M = M[None]
    n = M.shape[-1]

    norm1 = np.abs(M).sum(axis=-2).max(axis=-1)
    max_norm = float(norm1.max()) if norm1.size else 0.0
    squarings = 0
    if max_norm > _THETA13:
        squarings = int(np.ceil(np.log2(max_norm / _THETA13)))
    A = M / (2.0 ** squarings)

    ident = np.broadcast_to(np.eye(n), A.shape)
    A2 = A @ A
    A4 = A2 @ A2
    A6 = A2 @ A4
    b = _PADE13
    U = A @ (A6 @ (b[13] * A6 + b[11] * A4 + b[9] * A2)
             + b[7] * A6 + b[5] * A4 + b[3] * A2 + b[1] * ident)
    V = (A6 @ (b[12] * A6 + b[10] * A4 + b[8] * A2)
         + b[6] * A6 + b[4] * A4 + b[2] * A2 + b[0] * ident)
    F = np.linalg.solve(V - U, V + U)
    for _ in range(squarings):
        F = F @ F
    return F[0] if single else F


def spectral_norm(matrix: np.ndarray) -> float:
    """Largest singular value, via a symmetric eigensolve of ``M^T M``."""
    M = np.asarray(matrix, dtype=float)
    if M.ndim == 1:
        return float(np.linalg.norm(M))
    w = np.linalg.eigvalsh(M.T @ M)
    return float(np.sqrt(max(w[-1], 0.0)))


def spectral_norms(matrices: np.ndarray) -> np.ndarray:
    """Vectorized :func:`spectral_norm` over a stack ``(..., m, n)``."""
    M = np.asarray(matrices, dtype=float)
    w = np.linalg.eigvalsh(np.swapaxes(M, -1, -2) @ M)
    return np.sqrt(np.maximum(w[..., -1], 0.0))


def propagators(A: np.ndarray, drive: np.ndarray, times: np.ndarray):
    """State propagators for ``x' = A x + drive`` at several times.

    Returns ``(E, f)`` with ``E[i] = exp(A t_i)`` and
    ``f[i] = int_0^{t_i} exp(A s) ds @ drive``, computed jointly from the
    exponential of the augmented matrix ``[[A, drive], [0, 0]]``.
    """
    A = np.asarray(A, dtype=float)
    drive = np.asarray(drive, dtype=float).ravel()
    t = np.atleast_1d(np.asarray(times, dtype=float))
    n = A.shape[0]
    aug = np.zeros((t.size, n + 1, n + 1))
    aug[:, :n, :n] = A[None] * t[:, None, None]
    aug[:, :n, n] = drive[None] * t[:, None]
    E = expm(aug)
    return E[:, :n, :n], E[:, :n, n]
