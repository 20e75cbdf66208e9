"""Square matrix pencils A + lambda*B with the Frobenius metric.

A pencil is stored as a stacked array ``coeffs`` of shape ``(2, n, n)``
with ``coeffs[0] = A`` and ``coeffs[1] = B``.  Real pencils use float64
storage and complex ones complex128, so realness is structural: a real
pencil cannot carry hidden imaginary parts.

Besides the data type this module provides the metric, the projections
onto upper triangular singular pencils (all entries below the diagonal
zeroed plus one annihilated diagonal pair), the matching residual
operators, Gaussian sampling, a numerical singularity certificate, and
the JSON (de)serialization used by the command line tools.
"""

from __future__ import annotations

import json
import numbers
from dataclasses import dataclass

import numpy as np

__all__ = [
    "REAL",
    "COMPLEX",
    "PencilError",
    "Pencil",
    "TriangularProjectionResult",
    "frobenius_norm",
    "distance",
    "diagonal_weights",
    "nearest_triangular_singular",
    "project_triangular_k",
    "residual",
    "random_pencil",
    "numerical_singularity_defect",
    "pencil_to_json_dict",
    "pencil_from_json_dict",
    "save_pencil",
    "load_pencil",
]

REAL = "real"
COMPLEX = "complex"


class PencilError(ValueError):
    """Invalid pencil data or incompatible operands."""


@dataclass(frozen=True, eq=False)
class Pencil:
    """Immutable square pencil A + lambda*B.

    ``coeffs`` has shape ``(2, n, n)``; the backing array is copied on
    construction and marked read-only, so instances are safe to share
    across threads and processes.
    """

    coeffs: np.ndarray

    def __post_init__(self) -> None:
        c = np.asarray(self.coeffs)
        if c.ndim != 3 or c.shape[0] != 2 or c.shape[1] != c.shape[2] or c.shape[1] < 1:
            raise PencilError(f"expected coefficients of shape (2, n, n), got {c.shape}")
        if np.iscomplexobj(c):
            c = c.astype(np.complex128, copy=True)
        elif np.issubdtype(c.dtype, np.number) or c.dtype == np.bool_:
            c = c.astype(np.float64, copy=True)
        else:
            raise PencilError(f"unsupported coefficient dtype {c.dtype}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def from_matrices(cls, A, B, field: str | None = None) -> "Pencil":
        """Build a pencil from two square matrices of identical shape."""
        A = np.asarray(A)
        B = np.asarray(B)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape != B.shape:
            raise PencilError(
                f"A and B must be square matrices of identical shape, got {A.shape} and {B.shape}"
            )
        if field is None:
            field = COMPLEX if (np.iscomplexobj(A) or np.iscomplexobj(B)) else REAL
        if field == REAL:
            stack = np.stack([A, B])
            if np.iscomplexobj(stack):
                if np.max(np.abs(stack.imag)) != 0.0:
                    raise PencilError("real pencil constructed with nonzero imaginary parts")
                stack = stack.real
            return cls(stack.astype(np.float64))
        if field == COMPLEX:
            return cls(np.stack([A, B]).astype(np.complex128))
        raise PencilError(f"unknown field {field!r}")

    @property
    def A(self) -> np.ndarray:
        return self.coeffs[0]

    @property
    def B(self) -> np.ndarray:
        return self.coeffs[1]

    @property
    def n(self) -> int:
        return self.coeffs.shape[1]

    @property
    def field(self) -> str:
        return COMPLEX if np.iscomplexobj(self.coeffs) else REAL

    def astype(self, field: str) -> "Pencil":
        """Return this pencil over the requested field.

        Demoting a complex pencil requires (numerically) vanishing
        imaginary parts.
        """
        if field == self.field:
            return self
        if field == COMPLEX:
            return Pencil(self.coeffs.astype(np.complex128))
        if field == REAL:
            tol = 1e-12 * max(1.0, float(np.linalg.norm(self.coeffs)))
            if np.max(np.abs(self.coeffs.imag)) > tol:
                raise PencilError("cannot demote: imaginary parts are not negligible")
            return Pencil(self.coeffs.real.copy())
        raise PencilError(f"unknown field {field!r}")

    def __add__(self, other: "Pencil") -> "Pencil":
        self._check_compatible(other)
        return Pencil(self.coeffs + other.coeffs)

    def __sub__(self, other: "Pencil") -> "Pencil":
        self._check_compatible(other)
        return Pencil(self.coeffs - other.coeffs)

    def __mul__(self, scalar) -> "Pencil":
        return Pencil(self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "Pencil":
        return Pencil(-self.coeffs)

    def _check_compatible(self, other: "Pencil") -> None:
        if not isinstance(other, Pencil):
            raise PencilError(f"expected a Pencil, got {type(other).__name__}")
        if self.n != other.n:
            raise PencilError(f"dimension mismatch: {self.n} vs {other.n}")

    def __repr__(self) -> str:
        return f"Pencil(n={self.n}, field={self.field!r})"


@dataclass(frozen=True)
class TriangularProjectionResult:
    """Nearest upper triangular singular pencil and its squared distance.

    ``zero_index`` is the 1-based diagonal position whose (A, B) pair was
    annihilated.
    """

    projected: Pencil
    zero_index: int
    squared_distance: float


def frobenius_norm(p: Pencil) -> float:
    """sqrt of the summed squared moduli of all entries of A and B."""
    return float(np.linalg.norm(p.coeffs))


def distance(p: Pencil, q: Pencil) -> float:
    """Frobenius distance between two pencils of equal size."""
    p._check_compatible(q)
    return float(np.linalg.norm(p.coeffs - q.coeffs))


def diagonal_weights(p: Pencil) -> np.ndarray:
    """Vector of diagonal weights |A_ii|^2 + |B_ii|^2."""
    d = np.diagonal(p.coeffs, axis1=1, axis2=2)
    return np.sum(np.abs(d) ** 2, axis=0)


def _strict_lower_sq(coeffs: np.ndarray) -> float:
    return float(np.sum(np.abs(np.tril(coeffs, -1)) ** 2))


def _project_at(p: Pencil, row: int) -> TriangularProjectionResult:
    out = np.triu(p.coeffs)
    out[:, row, row] = 0.0
    sq = _strict_lower_sq(p.coeffs) + float(diagonal_weights(p)[row])
    return TriangularProjectionResult(Pencil(out), row + 1, sq)


def nearest_triangular_singular(p: Pencil) -> TriangularProjectionResult:
    """Project onto the upper triangular singular pencils.

    Keeps the upper triangle, zeroes everything below the diagonal, and
    annihilates the diagonal pair of smallest weight (smallest index on
    ties).  The squared distance is the strict lower triangular mass plus
    that smallest weight.
    """
    row = int(np.argmin(diagonal_weights(p)))
    return _project_at(p, row)


def project_triangular_k(p: Pencil, k: int) -> TriangularProjectionResult:
    """Same as :func:`nearest_triangular_singular` with the zeroed
    diagonal position forced to ``k`` (1-based)."""
    if not 1 <= k <= p.n:
        raise PencilError(f"diagonal index {k} out of range 1..{p.n}")
    return _project_at(p, k - 1)


def residual(p: Pencil, variant: str, k: int | None = None) -> Pencil:
    """Residual of the triangular projections.

    variant:
        ``min``          p minus its nearest triangular singular projection,
        ``fixed``        p minus the projection with forced index ``k``,
        ``strict_lower`` the strictly lower triangular part only,
        ``diagonal``     the diagonal part only.
    """
    c = p.coeffs
    if variant == "min":
        row = int(np.argmin(diagonal_weights(p)))
    elif variant == "fixed":
        if k is None or not 1 <= k <= p.n:
            raise PencilError(f"fixed variant needs an index in 1..{p.n}, got {k}")
        row = k - 1
    elif variant == "strict_lower":
        return Pencil(np.tril(c, -1))
    elif variant == "diagonal":
        out = np.zeros_like(c)
        idx = np.arange(p.n)
        out[:, idx, idx] = c[:, idx, idx]
        return Pencil(out)
    else:
        raise PencilError(f"unknown residual variant {variant!r}")
    out = np.tril(c, -1)
    out[:, row, row] = c[:, row, row]
    return Pencil(out)


def random_pencil(n: int, field: str = COMPLEX, seed=None) -> Pencil:
    """Pencil with i.i.d. standard normal real and imaginary parts."""
    if n < 1:
        raise PencilError("n must be at least 1")
    rng = np.random.default_rng(seed)
    if field == REAL:
        return Pencil(rng.standard_normal((2, n, n)))
    if field == COMPLEX:
        re = rng.standard_normal((2, n, n))
        im = rng.standard_normal((2, n, n))
        return Pencil(re + 1j * im)
    raise PencilError(f"unknown field {field!r}")


def numerical_singularity_defect(p: Pencil, samples: int | None = None) -> float:
    """Certificate that det(A + lambda*B) vanishes identically.

    Evaluates the pencil at ``samples`` points (default n + 2): all but
    one spread over the unit circle, plus the leading coefficient B as
    the point at infinity.  Returns the largest ratio of smallest to
    largest singular value over those points.  Since the determinant is a
    polynomial of degree at most n in lambda, a near-zero return at n + 1
    distinct points certifies numerical singularity; a regular pencil
    yields a value bounded away from zero.
    """
    n = p.n
    m = n + 2 if samples is None else int(samples)
    if m < n + 1:
        raise PencilError(f"need at least n + 1 = {n + 1} sample points, got {m}")
    # Angle offset keeps common structured pencils (eigenvalues at +-1)
    # away from the sample points.
    angles = 2.0 * np.pi * np.arange(m - 1) / (m - 1) + 0.5
    worst = 0.0
    for z in np.exp(1j * angles):
        s = np.linalg.svd(p.A + z * p.B, compute_uv=False)
        if s[0] > 0.0:
            worst = max(worst, float(s[-1] / s[0]))
    s = np.linalg.svd(p.B, compute_uv=False)
    if s[0] > 0.0:
        worst = max(worst, float(s[-1] / s[0]))
    return worst


# ---------------------------------------------------------------------------
# JSON schema
#
# {"n": int, "field": "real"|"complex", "A": rows, "B": rows}
# with plain numbers in real mode and [re, im] pairs in complex mode.
# ---------------------------------------------------------------------------


def _is_number(x) -> bool:
    return isinstance(x, numbers.Real) and not isinstance(x, bool)


def matrix_to_jsonable(M: np.ndarray) -> list:
    """Rows of a matrix in the pencil entry convention."""
    if np.iscomplexobj(M):
        return [[[float(v.real), float(v.imag)] for v in row] for row in M]
    return [[float(v) for v in row] for row in M]


def matrix_from_jsonable(rows, n: int, field: str, name: str) -> np.ndarray:
    if not isinstance(rows, list) or len(rows) != n:
        raise PencilError(f"{name}: expected {n} rows")
    dtype = np.float64 if field == REAL else np.complex128
    out = np.empty((n, n), dtype=dtype)
    for i, row in enumerate(rows):
        if not isinstance(row, list) or len(row) != n:
            raise PencilError(f"{name}: row {i} is ragged (expected {n} entries)")
        for j, entry in enumerate(row):
            if field == REAL:
                if not _is_number(entry):
                    raise PencilError(f"{name}[{i}][{j}]: expected a number")
                out[i, j] = float(entry)
            else:
                if (
                    not isinstance(entry, list)
                    or len(entry) != 2
                    or not all(_is_number(v) for v in entry)
                ):
                    raise PencilError(f"{name}[{i}][{j}]: expected a [re, im] pair")
                out[i, j] = complex(entry[0], entry[1])
    return out


def pencil_to_json_dict(p: Pencil) -> dict:
    return {
        "n": p.n,
        "field": p.field,
        "A": matrix_to_jsonable(p.A),
        "B": matrix_to_jsonable(p.B),
    }


def pencil_from_json_dict(d: dict) -> Pencil:
    if not isinstance(d, dict):
        raise PencilError("pencil JSON must be an object")
    try:
        n = d["n"]
        field = d["field"]
        A = d["A"]
        B = d["B"]
    except KeyError as exc:
        raise PencilError(f"pencil JSON is missing key {exc.args[0]!r}") from None
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        raise PencilError(f"invalid size n = {n!r}")
    if field not in (REAL, COMPLEX):
        raise PencilError(f"invalid field {field!r}")
    return Pencil.from_matrices(
        matrix_from_jsonable(A, n, field, "A"),
        matrix_from_jsonable(B, n, field, "B"),
        field=field,
    )


def save_pencil(p: Pencil, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(pencil_to_json_dict(p), fh)
        fh.write("\n")


def load_pencil(path) -> Pencil:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise PencilError(f"invalid JSON in {path}: {exc}") from None
    return pencil_from_json_dict(d)
