"""Objective families measured on the rotated pencil (Q A Z, Q B Z).

Three variants quantify how far the rotated pencil is from the upper
triangular singular set:

* ``direct``   strict lower triangular mass plus the smallest diagonal
               weight; continuous and smooth away from weight ties,
* ``branch``   strict lower mass plus a fixed k-th diagonal weight;
               smooth everywhere,
* ``smoothed`` strict lower mass plus the Boltzmann softmin of the
               diagonal weights; smooth everywhere for any alpha < 0.

Every variant exposes the value, the Euclidean gradient, a Euclidean
Hessian operator (directional derivative of the gradient) in the ambient
pair space, and their Riemannian counterparts on the unitary product
manifold.  The Riemannian Hessian applies the correction

    Proj_x(Hess_E f(x)[u] - u (x^* grad + grad^* x) / 2)

with all products taken componentwise on the stacked pairs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .manifold import adjoint, project_tangent
from .pencil import Pencil

__all__ = [
    "DIRECT",
    "BRANCH",
    "SMOOTHED",
    "NonFiniteError",
    "Objective",
    "ObjectiveEvaluation",
    "ObjectiveAt",
    "softmin_boltzmann",
    "value",
    "euclidean_gradient",
    "euclidean_hessian_vec",
    "riemannian_gradient",
    "riemannian_hessian_vec",
]

DIRECT = "direct"
BRANCH = "branch"
SMOOTHED = "smoothed"


class NonFiniteError(FloatingPointError):
    """A non-finite value appeared while evaluating an objective."""


@dataclass(frozen=True)
class Objective:
    """One objective variant bound to a fixed input pencil.

    ``k`` is the 1-based diagonal index of the branch variant; ``alpha``
    the (negative) softmin parameter of the smoothed variant.
    """

    pencil: Pencil
    variant: str = DIRECT
    k: int | None = None
    alpha: float | None = None

    def __post_init__(self) -> None:
        if self.variant == DIRECT:
            pass
        elif self.variant == BRANCH:
            if self.k is None or not 1 <= int(self.k) <= self.pencil.n:
                raise ValueError(f"branch index must lie in 1..{self.pencil.n}, got {self.k}")
        elif self.variant == SMOOTHED:
            a = self.alpha
            if a is None or not np.isfinite(a) or not a < 0:
                raise ValueError(f"smoothing parameter must be a finite negative real, got {a}")
        else:
            raise ValueError(f"unknown variant {self.variant!r}")

    @classmethod
    def direct(cls, pencil: Pencil) -> "Objective":
        return cls(pencil, DIRECT)

    @classmethod
    def branch(cls, pencil: Pencil, k: int) -> "Objective":
        return cls(pencil, BRANCH, k=int(k))

    @classmethod
    def smoothed(cls, pencil: Pencil, alpha: float = -1e20) -> "Objective":
        return cls(pencil, SMOOTHED, alpha=float(alpha))

    def at(self, x: np.ndarray) -> "ObjectiveAt":
        return ObjectiveAt(self, x)


@dataclass(frozen=True)
class ObjectiveEvaluation:
    """Value plus the diagonal index that realizes it (1-based).

    ``tie`` flags an exact tie among minimal diagonal weights in the
    direct variant, i.e. a potentially non-differentiable point.
    """

    value: float
    min_diag_index: int
    tie: bool = False


def softmin_boltzmann(values, alpha: float) -> float:
    """Boltzmann softmin: sum(x_i e^(a x_i)) / sum(e^(a x_i)) for a < 0.

    Computed with exponents shifted by min(x), so every weight lies in
    (0, 1] and the expression cannot overflow even for huge |alpha|.
    The result is between min(x) and max(x) and shift-equivariant.
    """
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise ValueError("softmin of an empty vector")
    if not alpha < 0:
        raise ValueError(f"alpha must be negative, got {alpha}")
    m = float(x.min())
    t = x - m
    w = np.exp(alpha * t)
    return m + float(np.dot(t, w) / np.sum(w))


def _softmin_pieces(x: np.ndarray, alpha: float):
    """Softmin value, probability weights, and gradient of the softmin.

    The gradient entries are p_i (1 + alpha (x_i - S)) with
    p_i = e^(a x_i) / sum_j e^(a x_j), evaluated in shifted form.
    """
    m = float(x.min())
    t = x - m
    e = np.exp(alpha * t)
    p = e / np.sum(e)
    s = m + float(np.dot(t, p))
    b = 1.0 + alpha * (x - s)
    return s, p, b, p * b


def _softmin_jacobian(p: np.ndarray, b: np.ndarray, g: np.ndarray, alpha: float) -> np.ndarray:
    # Symmetric Jacobian of the softmin gradient; all terms are products
    # of the shift-invariant probabilities, so the huge-|alpha| regime
    # underflows gracefully instead of overflowing.
    return alpha * (np.diag(p * (1.0 + b)) - np.outer(p, g) - np.outer(p * b, p))


class ObjectiveAt:
    """Objective and its derivatives bound to one manifold point.

    Caches the rotated products Q A Z, A Z, Q A (and the B analogues), so
    that the many Hessian applications of a trust-region inner loop reuse
    them.  For the direct variant the achieving diagonal index is frozen
    here, which makes gradient and Hessian consistent with one linear
    piece of the objective.
    """

    __slots__ = (
        "spec",
        "x",
        "PZ",
        "QP",
        "R",
        "rdiag",
        "weights",
        "lower_sq",
        "row",
        "value",
        "tie",
        "_xH",
        "_PZH",
        "_QPH",
        "_softgrad",
        "_jac",
        "_lr",
        "_lrH",
        "_egrad",
        "_rgrad",
        "_gram",
    )

    def __init__(self, spec: Objective, x: np.ndarray) -> None:
        P = spec.pencil.coeffs
        if x.ndim != 3 or x.shape[0] != 2 or x.shape[1:] != P.shape[1:]:
            raise ValueError(f"point shape {x.shape} does not match pencil size {P.shape}")
        self.spec = spec
        self.x = x
        self.PZ = P @ x[1]
        self.QP = x[0] @ P
        self.R = x[0] @ self.PZ
        self.rdiag = np.diagonal(self.R, axis1=-2, axis2=-1)
        self.weights = np.sum(np.abs(self.rdiag) ** 2, axis=0)
        self.lower_sq = float(np.sum(np.abs(np.tril(self.R, -1)) ** 2))
        self.tie = False
        self._xH = None
        self._PZH = None
        self._QPH = None
        self._softgrad = None
        self._jac = None
        self._lr = None
        self._lrH = None
        self._egrad = None
        self._rgrad = None
        self._gram = None

        if spec.variant == BRANCH:
            self.row = spec.k - 1
            self.value = self.lower_sq + float(self.weights[self.row])
        elif spec.variant == DIRECT:
            self.row = int(np.argmin(self.weights))
            wmin = float(self.weights[self.row])
            self.tie = int(np.count_nonzero(self.weights == wmin)) > 1
            self.value = self.lower_sq + wmin
        else:
            s, p, b, g = _softmin_pieces(self.weights, spec.alpha)
            self.row = int(np.argmin(self.weights))
            self._softgrad = g
            self._jac = (p, b, g)
            self.value = self.lower_sq + s
        if not np.isfinite(self.value):
            raise NonFiniteError(f"non-finite objective value {self.value}")

    # -- variant-specific residual ------------------------------------

    def _eff_residual(self, m: np.ndarray) -> np.ndarray:
        """Apply the variant's residual operator to a stacked pair.

        Strict lower triangle plus either the frozen diagonal entry
        (direct/branch) or the softmin-weighted diagonal (smoothed).
        """
        out = np.tril(m, -1)
        if self._softgrad is None:
            out[:, self.row, self.row] = m[:, self.row, self.row]
        else:
            idx = np.arange(m.shape[-1])
            out[:, idx, idx] = self._softgrad * np.diagonal(m, axis1=-2, axis2=-1)
        return out

    def _residual(self) -> np.ndarray:
        if self._lr is None:
            self._lr = self._eff_residual(self.R)
            self._lrH = adjoint(self._lr)
        return self._lr

    def _adjoints(self):
        if self._PZH is None:
            self._PZH = adjoint(self.PZ)
            self._QPH = adjoint(self.QP)
            self._xH = adjoint(self.x)
        return self._PZH, self._QPH, self._xH

    def _project(self, a: np.ndarray) -> np.ndarray:
        _, _, xH = self._adjoints()
        s = xH @ a
        return self.x @ (0.5 * (s - adjoint(s)))

    # -- Euclidean derivatives ----------------------------------------

    def euclidean_gradient(self) -> np.ndarray:
        if self._egrad is None:
            lr = self._residual()
            pzH, qpH, _ = self._adjoints()
            gq = 2.0 * np.sum(lr @ pzH, axis=0)
            gz = 2.0 * np.sum(qpH @ lr, axis=0)
            g = np.stack([gq, gz])
            if not np.all(np.isfinite(g)):
                raise NonFiniteError("non-finite Euclidean gradient")
            self._egrad = g
        return self._egrad

    def euclidean_hessian_vec(self, d: np.ndarray) -> np.ndarray:
        P = self.spec.pencil.coeffs
        lr = self._residual()
        pzH, qpH, _ = self._adjoints()
        lrH = self._lrH
        t12 = d[0] @ self.PZ + self.QP @ d[1]
        pdz = P @ d[1]
        t3 = d[0] @ P
        et = self._eff_residual(t12)
        # lr @ pdz^H and t3^H @ lr are formed through the cached lr^H to
        # avoid conjugating a fresh (2, n, n) stack on every application.
        hq = 2.0 * (np.sum(et @ pzH, axis=0) + adjoint(np.sum(pdz @ lrH, axis=0)))
        hz = 2.0 * (np.sum(qpH @ et, axis=0) + adjoint(np.sum(lrH @ t3, axis=0)))
        if self._softgrad is not None:
            p, b, g = self._jac
            jac = _softmin_jacobian(p, b, g, self.spec.alpha)
            tdiag = np.diagonal(t12, axis1=-2, axis2=-1)
            dx = 2.0 * np.sum((np.conj(self.rdiag) * tdiag).real, axis=0)
            dg = jac @ dx
            v = dg * self.rdiag  # (2, n): Diag(dg) applied to the diagonal of R
            hq += 2.0 * np.sum(v[:, :, None] * pzH, axis=0)
            hz += 2.0 * np.sum(qpH * v[:, None, :], axis=0)
        return np.stack([hq, hz])

    # -- Riemannian derivatives ---------------------------------------

    def riemannian_gradient(self) -> np.ndarray:
        if self._rgrad is None:
            self._rgrad = self._project(self.euclidean_gradient())
        return self._rgrad

    def riemannian_hessian_vec(self, u: np.ndarray) -> np.ndarray:
        if self._gram is None:
            g = self.euclidean_gradient()
            _, _, xH = self._adjoints()
            self._gram = xH @ g + adjoint(g) @ self.x
        he = self.euclidean_hessian_vec(u)
        return self._project(he - 0.5 * (u @ self._gram))


# -- module-level operation forms -------------------------------------


def value(spec: Objective, x: np.ndarray) -> ObjectiveEvaluation:
    pe = spec.at(x)
    return ObjectiveEvaluation(pe.value, pe.row + 1, pe.tie)


def euclidean_gradient(spec: Objective, x: np.ndarray) -> np.ndarray:
    return spec.at(x).euclidean_gradient()


def euclidean_hessian_vec(spec: Objective, x: np.ndarray, d: np.ndarray) -> np.ndarray:
    return spec.at(x).euclidean_hessian_vec(d)


def riemannian_gradient(spec: Objective, x: np.ndarray) -> np.ndarray:
    return spec.at(x).riemannian_gradient()


def riemannian_hessian_vec(spec: Objective, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    return spec.at(x).riemannian_hessian_vec(u)
