"""Minimal defining pencils, unitary equivalence, and redundant-block reports.

Two monic pencils with bounded, equal positivity sets become unitarily
equivalent once each is cut down to a minimal defining pencil; this
module makes that operational.  Step 1 simultaneously block-diagonalizes
the coefficients by splitting along eigenspaces of random elements of
their symmetric commutant (a probabilistic but post-verified step).
Step 2 removes one redundant block per pass, a block being redundant
when the direct sum of the others already forces it positive (an
inclusion SDP).  The removed coordinates span the range of the reported
projection; in algebra terms they carry the kernel of the map onto the
minimal pencil's generated algebra.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from . import linalg, radius
from .inclusion import check_inclusion
from .linalg import NearSingularError, nullspace, polar_orthogonal
from .pencil import LinearPencil, direct_sum, require_monic


class DegenerateSampleError(RuntimeError):
    """Commutant sampling repeatedly failed to separate eigenvalues."""


@dataclass
class BlockDecomposition:
    """Orthogonal change of basis splitting the coefficients into blocks.

    ``blocks[ell][j]`` is coefficient ``ell`` restricted to the j-th block;
    each block family acts irreducibly (its commutant is a division
    algebra of dimension 1, 2 or 4).
    """

    U: np.ndarray
    block_sizes: list[int]
    blocks: list[list[np.ndarray]]
    seed: int

    @property
    def n_blocks(self) -> int:
        return len(self.block_sizes)

    def subpencil(self, j: int) -> LinearPencil:
        return LinearPencil.monic([self.blocks[ell][j] for ell in range(len(self.blocks))])

    def subpencils(self) -> list[LinearPencil]:
        return [self.subpencil(j) for j in range(self.n_blocks)]


@dataclass
class MinimalPencilReport:
    minimal: LinearPencil
    U: np.ndarray
    kept: list[int]
    removed: list[int]
    silov_projection: np.ndarray
    decomposition: BlockDecomposition | None = None


@dataclass
class EquivalenceResult:
    """Optional unitary plus a diagnostic separating the two failure modes."""

    U: np.ndarray | None
    conclusive: bool
    reason: str = ""

    def __bool__(self) -> bool:
        return self.U is not None


@dataclass
class EqualityResult:
    equal: bool | None
    U: np.ndarray | None = None
    failed_direction: str | None = None


def commutant_basis(mats, d: int | None = None, tol: float = 1e-9) -> list[np.ndarray]:
    """Frobenius-orthonormal basis of the symmetric commutant of a family.

    Solves ``A_l X = X A_l`` for symmetric ``X`` via the nullspace of the
    stacked commutator maps in svec coordinates.  An empty family yields
    the full symmetric space.
    """
    mats = [np.asarray(a, dtype=float) for a in mats]
    if d is None:
        if not mats:
            raise ValueError("need the dimension when the family is empty")
        d = mats[0].shape[0]
    k = linalg.svec_dim(d)
    if not mats:
        return [linalg.smat(e) for e in np.eye(k)]
    basis = linalg.smat_basis(d)
    rows = []
    for a in mats:
        comm = np.einsum("ij,kjl->kil", a, basis) - np.einsum("kij,jl->kil", basis, a)
        rows.append(comm.reshape(k, d * d).T)
    stacked = np.vstack(rows)
    null = nullspace(stacked, tol=tol)
    return [linalg.smat(null[:, i]) for i in range(null.shape[1])]


def full_commutant_dim(mats, d: int | None = None, tol: float = 1e-9) -> int:
    """Dimension of the full (not necessarily symmetric) commutant."""
    mats = [np.asarray(a, dtype=float) for a in mats]
    if d is None:
        d = mats[0].shape[0]
    if not mats:
        return d * d
    eye = np.eye(d)
    stacked = np.vstack([linalg.kron(a, eye) - linalg.kron(eye, a) for a in mats])
    return nullspace(stacked, tol=tol).shape[1]


def _split_once(mats: list[np.ndarray], rng: np.random.Generator,
                gap_factor: float = 1e-6):
    """One generic-splitting step: eigenspaces of a random commutant element.

    Returns None when the family is already irreducible, otherwise a list
    of orthonormal column groups.  Raises DegenerateSampleError after three
    samples whose eigenvalues fail to separate.
    """
    basis = commutant_basis(mats, d=mats[0].shape[0])
    if len(basis) <= 1:
        return None
    for _ in range(3):
        coeffs = rng.standard_normal(len(basis))
        s = sum(c * b for c, b in zip(coeffs, basis))
        w, q = linalg.sym_eig(s)
        spread = float(w[-1] - w[0])
        if spread <= 0:
            continue
        gaps = np.diff(w)
        cut = np.nonzero(gaps > gap_factor * spread)[0]
        if cut.size == 0:
            continue
        bounds = [0, *(cut + 1), len(w)]
        return [q[:, bounds[i]:bounds[i + 1]] for i in range(len(bounds) - 1)]
    raise DegenerateSampleError(
        "eigenvalue clustering stayed ambiguous over three commutant samples")


def block_diagonalize(pencil: LinearPencil, seed: int = 0, *,
                      max_depth: int = 5) -> BlockDecomposition:
    """Simultaneous orthogonal block diagonalization of the coefficients.

    Recursively splits along eigenspaces of random symmetric commutant
    elements until every block is irreducible; the probabilistic step is
    backed by a post-verification of the reconstruction residual and of
    the leaf commutant dimensions (1, 2 or 4).
    """
    require_monic(pencil)
    rng = np.random.default_rng(seed)
    d = pencil.d

    def recurse(mats: list[np.ndarray], depth: int) -> list[np.ndarray]:
        groups = _split_once(mats, rng)
        if groups is None:
            return [np.eye(mats[0].shape[0])]
        if depth >= max_depth:
            raise DegenerateSampleError("recursion depth cap reached while splitting")
        out = []
        for v in groups:
            sub = [v.T @ a @ v for a in mats]
            for basis in recurse(sub, depth + 1):
                out.append(v @ basis)
        return out

    columns = recurse([np.asarray(a) for a in pencil.A], 0)
    u = np.hstack(columns)
    sizes = [c.shape[1] for c in columns]
    blocks: list[list[np.ndarray]] = []
    for a in pencil.A:
        conj = u.T @ a @ u
        row = []
        pos = 0
        for size in sizes:
            row.append(0.5 * (conj[pos:pos + size, pos:pos + size]
                              + conj[pos:pos + size, pos:pos + size].T))
            pos += size
        blocks.append(row)

    # post-verification: the invariants are what make the random step safe
    from scipy.linalg import block_diag
    for ell, a in enumerate(pencil.A):
        rebuilt = block_diag(*blocks[ell])
        if np.linalg.norm(u.T @ a @ u - rebuilt) > 1e-7 * (1.0 + np.linalg.norm(a)):
            raise DegenerateSampleError(
                f"block reconstruction failed for coefficient {ell}")
    for j in range(len(sizes)):
        dim = full_commutant_dim([blocks[ell][j] for ell in range(pencil.g)],
                                 d=sizes[j])
        if dim not in (1, 2, 4):
            raise DegenerateSampleError(
                f"leaf block {j} has commutant dimension {dim}, not a division algebra")
    return BlockDecomposition(U=u, block_sizes=sizes, blocks=blocks, seed=seed)


def minimal_pencil(pencil: LinearPencil, seed: int = 0, *, tol: float = 1e-7,
                   feastol: float = 1e-8, max_iter: int = 200) -> MinimalPencilReport:
    """Smallest defining pencil with the same (bounded) positivity set.

    Block-diagonalizes, then repeatedly drops the lowest-index block that
    the direct sum of the remaining ones forces positive; a block whose
    complement has an unbounded set can never be redundant and is kept
    without solving.  The result is certified by a final two-sided
    inclusion check against the conjugated original.
    """
    require_monic(pencil)
    if not radius.is_bounded(pencil, feastol=feastol, max_iter=max_iter):
        raise ValueError("minimal pencil computation requires a bounded positivity set")
    dec = block_diagonalize(pencil, seed=seed)
    pencils = dec.subpencils()
    kept = list(range(dec.n_blocks))

    changed = True
    while changed and len(kept) > 1:
        changed = False
        for ell in list(kept):
            others = [pencils[j] for j in kept if j != ell]
            dom = others[0] if len(others) == 1 else direct_sum(others)
            if not radius.is_bounded(dom, feastol=feastol, max_iter=max_iter):
                continue
            report = check_inclusion(others, pencils[ell], check_bounded=False,
                                     tol=tol, feastol=feastol, max_iter=max_iter)
            if report.included is None:
                raise linalg.EigenConvergenceError(
                    f"redundancy test for block {ell} was indeterminate; aborting "
                    "rather than guessing")
            if report.included:
                kept.remove(ell)
                changed = True
                break

    removed = [j for j in range(dec.n_blocks) if j not in kept]
    minimal = (pencils[kept[0]] if len(kept) == 1
               else direct_sum([pencils[j] for j in kept]))

    # certification: the surviving sum still defines the original set
    all_blocks = dec.subpencils()
    fwd = check_inclusion([pencils[j] for j in kept], direct_sum(all_blocks)
                          if len(all_blocks) > 1 else all_blocks[0],
                          check_bounded=False, tol=tol, feastol=feastol,
                          max_iter=max_iter)
    bwd = check_inclusion(all_blocks, minimal, check_bounded=False, tol=tol,
                          feastol=feastol, max_iter=max_iter)
    if fwd.included is not True or bwd.included is not True:
        raise linalg.EigenConvergenceError(
            "two-sided certification of the minimal pencil failed")

    col_idx = []
    pos = 0
    boundaries = []
    for size in dec.block_sizes:
        boundaries.append((pos, pos + size))
        pos += size
    for j in removed:
        col_idx.extend(range(*boundaries[j]))
    ur = dec.U[:, col_idx]
    projection = ur @ ur.T if col_idx else np.zeros((pencil.d, pencil.d))
    return MinimalPencilReport(minimal=minimal, U=dec.U, kept=kept, removed=removed,
                               silov_projection=projection, decomposition=dec)


# ---------------------------------------------------------------------------
# Unitary equivalence
# ---------------------------------------------------------------------------


def _trace_words_differ(a1, a2, max_len: int = 6, budget: int = 4096,
                        tol: float = 1e-7) -> bool:
    """Fast negative filter: compare traces of words in the two families."""
    g = len(a1)
    if g == 0:
        return False
    length = max_len
    while length > 1 and sum(g ** k for k in range(1, length + 1)) > budget:
        length -= 1
    prev = [(a, b) for a, b in zip(a1, a2)]
    for _ in range(length):
        for m1, m2 in prev:
            t1, t2 = float(np.trace(m1)), float(np.trace(m2))
            if abs(t1 - t2) > tol * (1.0 + abs(t1)):
                return True
        prev = [(m1 @ a, m2 @ b) for (m1, m2) in prev for a, b in zip(a1, a2)]
    return False


def intertwiner_basis(a1, a2, tol: float = 1e-9) -> list[np.ndarray]:
    """Basis of ``{T : A_{1,l} T = T A_{2,l} for all l}``."""
    a1 = [np.asarray(a, dtype=float) for a in a1]
    a2 = [np.asarray(a, dtype=float) for a in a2]
    d = a1[0].shape[0]
    eye = np.eye(d)
    rows = [linalg.kron(m1, eye) - linalg.kron(eye, m2) for m1, m2 in zip(a1, a2)]
    null = nullspace(np.vstack(rows), tol=tol)
    return [null[:, i].reshape(d, d) for i in range(null.shape[1])]


def unitary_equivalent(l1: LinearPencil, l2: LinearPencil, tol: float = 1e-6,
                       seed: int = 0) -> EquivalenceResult:
    """Search for an orthogonal ``U`` with ``U^T A_{1,l} U = A_{2,l}``.

    Random elements of the intertwiner space are taken to their orthogonal
    polar factors; a returned ``U`` always passes the residual check.  An
    empty intertwiner space (or a trace-word mismatch) is a conclusive
    negative; three singular samples in a row are reported as inconclusive.
    """
    require_monic(l1, "first pencil")
    require_monic(l2, "second pencil")
    if l1.d != l2.d or l1.g != l2.g:
        return EquivalenceResult(None, conclusive=True, reason="sizes differ")
    if l1.g == 0:
        return EquivalenceResult(np.eye(l1.d), conclusive=True, reason="")
    if _trace_words_differ(l1.A, l2.A):
        return EquivalenceResult(None, conclusive=True, reason="trace words differ")
    basis = intertwiner_basis(l1.A, l2.A)
    if not basis:
        return EquivalenceResult(None, conclusive=True, reason="no intertwiner")
    rng = np.random.default_rng(seed)
    for _ in range(3):
        t = sum(c * b for c, b in zip(rng.standard_normal(len(basis)), basis))
        try:
            u = polar_orthogonal(t, tol=1e-8)
        except NearSingularError:
            continue
        residual = max(np.linalg.norm(u.T @ p @ u - q) for p, q in zip(l1.A, l2.A))
        if residual <= tol:
            return EquivalenceResult(u, conclusive=True, reason="")
    return EquivalenceResult(None, conclusive=False,
                             reason="no invertible sample found")


def gleichstellensatz_check(l1: LinearPencil, l2: LinearPencil, *, seed: int = 0,
                            tol: float = 1e-6, feastol: float = 1e-8,
                            max_iter: int = 200) -> EqualityResult:
    """Decide set equality via minimal pencils and unitary equivalence.

    Both pencils are minimized; equal sets are witnessed by an orthogonal
    conjugation between the minimal pencils.  When the sets differ, the
    failing inclusion direction is identified by the two-sided check.
    """
    r1 = minimal_pencil(l1, seed=seed, feastol=feastol, max_iter=max_iter)
    r2 = minimal_pencil(l2, seed=seed + 1, feastol=feastol, max_iter=max_iter)
    if r1.minimal.d == r2.minimal.d:
        eq = unitary_equivalent(r1.minimal, r2.minimal, tol=tol, seed=seed)
        if eq.U is not None:
            return EqualityResult(equal=True, U=eq.U)
    fwd = check_inclusion(l1, l2, check_bounded=False, feastol=feastol,
                          max_iter=max_iter)
    bwd = check_inclusion(l2, l1, check_bounded=False, feastol=feastol,
                          max_iter=max_iter)
    if fwd.included is None or bwd.included is None:
        return EqualityResult(equal=None)
    if fwd.included and bwd.included:
        # sets agree numerically; the unitary search was inconclusive
        return EqualityResult(equal=None)
    direction = ("first not inside second" if not fwd.included
                 else "second not inside first")
    return EqualityResult(equal=False, failed_direction=direction)


def silov_ideal(coefficients, *, seed: int = 0, feastol: float = 1e-8,
                max_iter: int = 200) -> MinimalPencilReport:
    """Redundant-block report for the algebra generated by the coefficients.

    Forms the monic pencil on the given symmetric matrices and minimizes
    it; in the returned basis, the ideal consists of all matrices
    supported on the removed blocks, whose coordinate span is the range of
    ``silov_projection``.
    """
    pencil = LinearPencil.monic([np.asarray(a, dtype=float) for a in coefficients])
    return minimal_pencil(pencil, seed=seed, feastol=feastol, max_iter=max_iter)
