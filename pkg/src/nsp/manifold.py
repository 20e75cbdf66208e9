"""Product of two unitary (or real orthogonal) groups.

Points, tangent vectors, and ambient perturbations all live in stacked
arrays of shape ``(2, n, n)``: index 0 is the left factor Q, index 1 the
right factor Z.  A float64 stack encodes the orthogonal-group (real)
case; complex128 the unitary case.  The metric is the real inner product
Re(trace(U1* V1) + trace(U2* V2)), under which the tangent space at a
point x is x times the skew-Hermitian matrices, componentwise.
"""

from __future__ import annotations

import numpy as np

from .pencil import COMPLEX, REAL

__all__ = [
    "RetractionError",
    "adjoint",
    "skew",
    "inner",
    "norm",
    "project_tangent",
    "qf",
    "retract",
    "random_point",
    "identity_point",
    "unitarity_defect",
    "tangency_defect",
]


class RetractionError(RuntimeError):
    """The QR retraction hit a rank-deficient step."""


def adjoint(m: np.ndarray) -> np.ndarray:
    """Conjugate transpose of the last two axes."""
    return m.conj().swapaxes(-1, -2)


def skew(m: np.ndarray) -> np.ndarray:
    """Skew-Hermitian part (m - m*)/2 of the last two axes."""
    return 0.5 * (m - adjoint(m))


def inner(u: np.ndarray, v: np.ndarray) -> float:
    """Real inner product Re(trace(u0* v0) + trace(u1* v1))."""
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    return float(np.vdot(u, v).real)


def norm(u: np.ndarray) -> float:
    return float(np.linalg.norm(u))


def project_tangent(x: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Orthogonal projection of an ambient pair onto the tangent space at x.

    Componentwise x * skew(x^* a); idempotent and self-adjoint for the
    real trace inner product.
    """
    return x @ skew(adjoint(x) @ a)


def qf(m: np.ndarray) -> np.ndarray:
    """Q factor of the QR decomposition with positive real R diagonal.

    Applied to the last two axes of a stack.  Raises
    :class:`RetractionError` when a diagonal entry of R vanishes (rank
    deficient input).
    """
    q, r = np.linalg.qr(m)
    d = np.diagonal(r, axis1=-2, axis2=-1)
    mag = np.abs(d)
    if np.any(mag == 0.0):
        raise RetractionError("rank-deficient QR factorization")
    return q * (d / mag)[..., None, :]


def retract(x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """QR retraction: the positive-diagonal Q factor of x + v.

    First-order retraction that maps back onto the manifold exactly (up
    to roundoff) and preserves realness of real iterates.
    """
    return qf(x + v)


def random_point(n: int, field: str = COMPLEX, seed=None) -> np.ndarray:
    """Haar-distributed point: Gaussian matrices through :func:`qf`.

    The positive-diagonal convention absorbs the R phases, which makes
    the distribution of the Q factor exactly Haar.
    """
    rng = np.random.default_rng(seed)
    if field == REAL:
        g = rng.standard_normal((2, n, n))
    elif field == COMPLEX:
        g = (rng.standard_normal((2, n, n)) + 1j * rng.standard_normal((2, n, n))) / np.sqrt(2.0)
    else:
        raise ValueError(f"unknown field {field!r}")
    return qf(g)


def identity_point(n: int, field: str = COMPLEX) -> np.ndarray:
    dtype = np.float64 if field == REAL else np.complex128
    return np.stack([np.eye(n, dtype=dtype), np.eye(n, dtype=dtype)])


def unitarity_defect(x: np.ndarray) -> float:
    """Largest Frobenius deviation of x_c^* x_c from the identity."""
    n = x.shape[-1]
    eye = np.eye(n)
    return float(max(np.linalg.norm(adjoint(c) @ c - eye) for c in x))


def tangency_defect(x: np.ndarray, v: np.ndarray) -> float:
    """Frobenius norm of the Hermitian part of x^* v, componentwise max."""
    s = adjoint(x) @ v
    h = 0.5 * (s + adjoint(s))
    return float(max(np.linalg.norm(c) for c in h))
