"""Linear pencils, their evaluation, and the named pencil constructors.

A linear pencil is the affine matrix expression ``L(x) = A0 + sum_j A_j x_j``
with symmetric ``d x d`` coefficients.  Evaluated at a tuple of symmetric
``n x n`` matrices it becomes ``A0 (x) I_n + sum_j A_j (x) X_j`` (Kronecker
products), and the positivity domain is the union over all ``n`` of the
tuples where this evaluation is positive semidefinite.  At ``n = 1`` the
domain is the ordinary spectrahedron of the LMI.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import block_diag

from . import linalg

MONIC_TOL = 1e-12


class ZeroNotInteriorError(ValueError):
    """Monicization requires 0 in the interior of the positivity domain."""


class PencilFormatError(ValueError):
    """A pencil (or certificate) file failed to parse or validate."""

    def __init__(self, message: str, *, path: str | None = None, field_name: str | None = None,
                 line: int | None = None):
        self.path = path
        self.field_name = field_name
        self.line = line
        where = []
        if path is not None:
            where.append(f"file {path!r}")
        if line is not None:
            where.append(f"line {line}")
        if field_name is not None:
            where.append(f"field {field_name!r}")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


@dataclass(frozen=True)
class LinearPencil:
    """Coefficients ``(A0, A_1, ..., A_g)`` of ``L(x) = A0 + sum A_j x_j``."""

    A0: np.ndarray
    A: tuple[np.ndarray, ...] = field(default_factory=tuple)

    def __post_init__(self):
        a0 = linalg.require_symmetric(self.A0, tol=1e-9, what="A0")
        coeffs = []
        for j, a in enumerate(self.A):
            a = linalg.require_symmetric(a, tol=1e-9, what=f"A[{j}]")
            if a.shape != a0.shape:
                raise ValueError(
                    f"coefficient A[{j}] has shape {a.shape}, expected {a0.shape}")
            a.setflags(write=False)
            coeffs.append(a)
        a0.setflags(write=False)
        object.__setattr__(self, "A0", a0)
        object.__setattr__(self, "A", tuple(coeffs))

    @property
    def d(self) -> int:
        return self.A0.shape[0]

    @property
    def g(self) -> int:
        return len(self.A)

    @property
    def is_monic(self) -> bool:
        return bool(np.linalg.norm(self.A0 - np.eye(self.d)) <= MONIC_TOL)

    @classmethod
    def monic(cls, coefficients: Sequence[np.ndarray]) -> "LinearPencil":
        """Monic pencil ``I + sum A_j x_j`` from the truly linear coefficients."""
        coefficients = [np.asarray(a, dtype=float) for a in coefficients]
        if not coefficients:
            raise ValueError("need at least one coefficient")
        d = coefficients[0].shape[0]
        return cls(np.eye(d), tuple(coefficients))

    def truly_linear(self) -> "LinearPencil":
        """The pencil with ``A0`` replaced by zero."""
        return LinearPencil(np.zeros((self.d, self.d)), self.A)

    def scaled(self, factor: float) -> "LinearPencil":
        """Pencil with every ``A_j`` multiplied by ``factor`` (``A0`` kept)."""
        return LinearPencil(self.A0, tuple(factor * a for a in self.A))

    def to_dict(self) -> dict:
        return {
            "g": self.g,
            "d": self.d,
            "A0": self.A0.tolist(),
            "A": [a.tolist() for a in self.A],
        }


def require_monic(pencil: LinearPencil, what: str = "pencil") -> None:
    if not pencil.is_monic:
        raise ValueError(f"{what} must be monic (A0 = I); call monicize first")


def matrix_tuple(xs: Iterable, g: int | None = None) -> list[np.ndarray]:
    """Normalize a point to a list of symmetric matrices of equal size.

    Scalars are accepted and become ``1 x 1`` blocks.  Raises on arity
    mismatch, non-finite entries, asymmetric blocks, or mixed sizes.
    """
    blocks = []
    for k, x in enumerate(xs):
        x = np.asarray(x, dtype=float)
        if x.ndim == 0:
            x = x.reshape(1, 1)
        x = linalg.require_symmetric(x, tol=1e-9, what=f"X[{k}]")
        if not np.all(np.isfinite(x)):
            raise ValueError(f"X[{k}] has non-finite entries")
        blocks.append(x)
    if g is not None and len(blocks) != g:
        raise ValueError(f"expected {g} matrices, got {len(blocks)}")
    if blocks and any(b.shape != blocks[0].shape for b in blocks):
        raise ValueError("all matrices in a tuple must have the same size")
    return blocks


def evaluate(pencil: LinearPencil, xs: Iterable) -> np.ndarray:
    """Evaluate ``L(X) = A0 (x) I_n + sum_j A_j (x) X_j``."""
    blocks = matrix_tuple(xs, g=pencil.g)
    n = blocks[0].shape[0] if blocks else 1
    out = linalg.kron(pencil.A0, np.eye(n))
    for a, x in zip(pencil.A, blocks):
        out += linalg.kron(a, x)
    return out


def is_nondegenerate(pencil: LinearPencil, tol: float = 1e-9) -> bool:
    """True iff the coefficients ``A_1, ..., A_g`` are linearly independent."""
    if pencil.g == 0:
        return True
    stack = np.stack([linalg.svec(a) for a in pencil.A])
    s = np.linalg.svd(stack, compute_uv=False)
    return bool(s[-1] > tol * (1.0 + s[0]))


def monicize(pencil: LinearPencil, tol: float = 1e-9) -> LinearPencil:
    """Equivalent monic pencil when 0 is interior to the positivity domain.

    Requires ``A0 >= 0`` and ``Range(A_j) <= Range(A0)`` for every j; the
    coefficients are restricted to the range of ``A0`` and congruence-scaled
    by ``A0^{-1/2}`` there.  The positivity domain is unchanged.
    """
    if pencil.is_monic:
        return pencil
    w, q = linalg.sym_eig(pencil.A0)
    scale = max(abs(w[0]), abs(w[-1]), 1e-300)
    if w[0] < -tol * (1.0 + scale):
        raise linalg.NotPsdError(w[0])
    cutoff = 1e-9 * scale
    keep = w > cutoff
    qr = q[:, keep]
    proj_out = np.eye(pencil.d) - qr @ qr.T
    for j, a in enumerate(pencil.A):
        if np.linalg.norm(proj_out @ a) > tol * (1.0 + np.linalg.norm(a)):
            raise ZeroNotInteriorError(
                f"Range(A[{j}]) is not contained in Range(A0); 0 is not interior")
    inv_sqrt = 1.0 / np.sqrt(w[keep])
    coeffs = tuple((inv_sqrt[:, None] * (qr.T @ a @ qr)) * inv_sqrt[None, :]
                   for a in pencil.A)
    return LinearPencil.monic(coeffs)


def direct_sum(pencils: Sequence[LinearPencil]) -> LinearPencil:
    """Block-diagonal direct sum of pencils in the same variables."""
    pencils = list(pencils)
    if not pencils:
        raise ValueError("need at least one pencil")
    g = pencils[0].g
    if any(p.g != g for p in pencils):
        raise ValueError("all pencils must have the same number of variables")
    a0 = block_diag(*[p.A0 for p in pencils])
    coeffs = tuple(block_diag(*[p.A[j] for p in pencils]) for j in range(g))
    return LinearPencil(a0, coeffs)


def cube_pencil(g: int, rho: float) -> LinearPencil:
    """Size-2g pencil whose domain is ``{X : ||X_i|| <= rho for all i}``."""
    if rho <= 0:
        raise ValueError("rho must be positive")
    coeffs = []
    for j in range(g):
        a = np.zeros((2 * g, 2 * g))
        a[j, j] = 1.0 / rho
        a[g + j, g + j] = -1.0 / rho
        coeffs.append(a)
    return LinearPencil.monic(coeffs)


def ball_pencil(g: int, radius: float) -> LinearPencil:
    """Size-(g+1) pencil PSD exactly when ``sum_j X_j^2 <= radius^2 I``."""
    if radius <= 0:
        raise ValueError("radius must be positive")
    coeffs = []
    for j in range(g):
        a = np.zeros((g + 1, g + 1))
        a[0, j + 1] = a[j + 1, 0] = 1.0 / radius
        coeffs.append(a)
    return LinearPencil.monic(coeffs)


def norm_pencil(pencil: LinearPencil) -> LinearPencil:
    """Size-2d pencil whose domain is ``{X : ||L(X)|| <= 1}``."""
    d = pencil.d
    zero = np.zeros((d, d))
    a0 = np.block([[np.eye(d), pencil.A0], [pencil.A0, np.eye(d)]])
    coeffs = tuple(np.block([[zero, a], [a, zero]]) for a in pencil.A)
    return LinearPencil(a0, coeffs)


def eta_pencil(s: float, t: float, tol: float = 1e-9) -> LinearPencil:
    """Two-variable 2x2 tightening pencil with coefficients diag(s,-s), antidiag(t,t).

    Requires ``s^2 + t^2 = 1``; the scalar domain then contains the unit
    square, with all four corners on its boundary.
    """
    if abs(s * s + t * t - 1.0) > tol:
        raise ValueError(f"(s, t) must satisfy s^2 + t^2 = 1, got {s * s + t * t}")
    return LinearPencil.monic([
        np.array([[s, 0.0], [0.0, -s]]),
        np.array([[0.0, t], [t, 0.0]]),
    ])


# ---------------------------------------------------------------------------
# File format: UTF-8 JSON {"g": int, "d": int, "A0": [[...]], "A": [[[...]]]},
# coefficients row-major, symmetry validated on load with tolerance 1e-9.
# ---------------------------------------------------------------------------


def pencil_from_dict(data: dict, *, path: str | None = None) -> LinearPencil:
    if not isinstance(data, dict):
        raise PencilFormatError("expected a JSON object", path=path)
    for key in ("g", "d", "A0", "A"):
        if key not in data:
            raise PencilFormatError("missing required field", path=path, field_name=key)
    g, d = data["g"], data["d"]
    if not isinstance(g, int) or g < 0:
        raise PencilFormatError("must be a nonnegative integer", path=path, field_name="g")
    if not isinstance(d, int) or d <= 0:
        raise PencilFormatError("must be a positive integer", path=path, field_name="d")

    def as_matrix(entry, name):
        try:
            m = np.array(entry, dtype=float)
        except (TypeError, ValueError) as exc:
            raise PencilFormatError(f"not a numeric matrix: {exc}", path=path,
                                    field_name=name) from exc
        if m.shape != (d, d):
            raise PencilFormatError(f"expected shape ({d}, {d}), got {m.shape}",
                                    path=path, field_name=name)
        if linalg.symmetry_defect(m) > 1e-9:
            raise PencilFormatError("matrix is not symmetric within 1e-9",
                                    path=path, field_name=name)
        return m

    a0 = as_matrix(data["A0"], "A0")
    if not isinstance(data["A"], list) or len(data["A"]) != g:
        raise PencilFormatError(f"expected a list of {g} matrices", path=path, field_name="A")
    coeffs = tuple(as_matrix(entry, f"A[{j}]") for j, entry in enumerate(data["A"]))
    return LinearPencil(a0, coeffs)


def load_pencil(path: str) -> LinearPencil:
    """Load a pencil from a JSON file, naming file/line/field on errors."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PencilFormatError(exc.msg, path=path, line=exc.lineno) from exc
    return pencil_from_dict(data, path=path)


def save_pencil(pencil: LinearPencil, path: str) -> None:
    """Write a pencil as JSON (floats use shortest round-trip formatting)."""
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(pencil.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
