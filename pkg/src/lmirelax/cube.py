"""The matricial matrix-cube problem and its tightenings.

The question: the largest ``rho`` such that every tuple of symmetric
contractions scaled by ``rho`` stays inside a given pencil's positivity
set.  Specializing the inclusion SDP to the cube pencil (a direct sum of
scalar pencils) and eliminating the equality constraints leaves the
reduced program solved here; it is equivalent, by an explicit affine
change of variables, to the classical verifiable sufficient condition of
robust optimization, and both are implemented with conversions between
their feasible points.

Tightening: direct-summing auxiliary two-variable pencils whose scalar
set contains the unit square onto the cube pencil shrinks the matricial
relaxation gap without changing the scalar question.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import sdp
from .inclusion import max_scale_inclusion
from .pencil import LinearPencil, cube_pencil, eta_pencil, require_monic


@dataclass
class CubeReport:
    """Cube size ``rho`` and the reduced-form witness blocks."""

    rho: float
    C_blocks: list[np.ndarray] = field(default_factory=list)
    method: str = "mc"
    etas: list[tuple[float, float]] = field(default_factory=list)
    seed: int | None = None


def _cube_blocks(g: int) -> list[LinearPencil]:
    """The cube pencil at size one, as its 2g scalar direct summands."""
    blocks = []
    for j in range(g):
        blocks.append(LinearPencil.monic(
            [np.array([[1.0 if ell == j else 0.0]]) for ell in range(g)]))
    for j in range(g):
        blocks.append(LinearPencil.monic(
            [np.array([[-1.0 if ell == j else 0.0]]) for ell in range(g)]))
    return blocks


def matrix_cube_rho(pencil: LinearPencil, *, feastol: float = 1e-8,
                    gaptol: float = 1e-8, max_iter: int = 200) -> CubeReport:
    """Largest matricial cube inside the pencil's positivity set (reduced form).

    Maximizes ``rho`` subject to ``C_j >= 0``, ``C_j >= rho A_j`` for
    ``j < g`` and the two eliminated-block inequalities
    ``I - 2 sum C_j + rho sum_{j<g} A_j +- rho A_g >= 0``.  For one
    variable the ``C``-block set is empty.  The value is guaranteed: the
    cube of the returned size is contained in the set, and the bound is
    sharp for the matricial question.
    """
    require_monic(pencil)
    d, g = pencil.d, pencil.g
    if g < 1:
        raise ValueError("need at least one variable")
    # blocks: C_1..C_{g-1}, D_j = C_j - rho A_j (j < g), E+ and E-
    n_c = g - 1
    dims = [d] * (2 * n_c + 2)
    builder = sdp.SdpBuilder(dims, n_free=1)
    eplus, eminus = 2 * n_c, 2 * n_c + 1
    asum = sum(pencil.A[:n_c]) if n_c else np.zeros((d, d))
    eye = np.eye(d)
    for a in range(d):
        for b in range(a, d):
            e_ab = np.zeros((d, d))
            e_ab[a, b] = 1.0
            for j in range(n_c):
                # D_j - C_j + rho A_j = 0
                builder.add_equality(blocks={n_c + j: e_ab, j: -e_ab},
                                     free={0: pencil.A[j][a, b]}, rhs=0.0)
            common = {j: 2.0 * e_ab for j in range(n_c)}
            # E+ + 2 sum C_j - rho (sum_{j<g} A_j + A_g) = I
            builder.add_equality(blocks={eplus: e_ab, **common},
                                 free={0: -(asum[a, b] + pencil.A[g - 1][a, b])},
                                 rhs=eye[a, b])
            builder.add_equality(blocks={eminus: e_ab, **common},
                                 free={0: -(asum[a, b] - pencil.A[g - 1][a, b])},
                                 rhs=eye[a, b])
    builder.set_objective(free={0: 1.0})
    sol = sdp.solve(builder.build(), feastol=feastol, gaptol=gaptol, max_iter=max_iter)
    if sol.status is sdp.SdpStatus.DUAL_UNBOUNDED:
        return CubeReport(rho=np.inf, method="mc")
    if sol.status is not sdp.SdpStatus.OPTIMAL:
        raise sdp.SolverIndeterminateError(
            f"matrix cube SDP did not converge (status {sol.status.value})")
    return CubeReport(rho=float(sol.free[0]), C_blocks=sol.blocks[:n_c], method="mc")


def bental_nemirovski_rho(pencil: LinearPencil, *, feastol: float = 1e-8,
                          gaptol: float = 1e-8,
                          max_iter: int = 200) -> tuple[float, list[np.ndarray]]:
    """The classical verifiable sufficient condition, maximized over its system.

    Finds the largest ``rho`` admitting symmetric ``B_j`` with
    ``B_j >= +-A_j`` and ``I - rho sum B_j >= 0``; the products
    ``rho B_j`` are the SDP variables, keeping everything affine.
    Returns ``(rho, [B_1..B_g])``.
    """
    require_monic(pencil)
    d, g = pencil.d, pencil.g
    if g < 1:
        raise ValueError("need at least one variable")
    # blocks: Q_j+ = rho B_j - rho A_j, Q_j- = rho B_j + rho A_j, R = I - rho sum B_j
    dims = [d] * (2 * g + 1)
    builder = sdp.SdpBuilder(dims, n_free=1)
    rblock = 2 * g
    eye = np.eye(d)
    for a in range(d):
        for b in range(a, d):
            e_ab = np.zeros((d, d))
            e_ab[a, b] = 1.0
            for j in range(g):
                # Q_j+ - Q_j- + 2 rho A_j = 0
                builder.add_equality(blocks={2 * j: e_ab, 2 * j + 1: -e_ab},
                                     free={0: 2.0 * pencil.A[j][a, b]}, rhs=0.0)
            # R + sum_j (Q_j+ + Q_j-)/2 + rho * 0 = I  (since sum rho B_j = sum (Q+ + Q-)/2)
            blocks = {rblock: e_ab}
            for j in range(g):
                blocks[2 * j] = blocks.get(2 * j, 0) + 0.5 * e_ab
                blocks[2 * j + 1] = 0.5 * e_ab
            builder.add_equality(blocks=blocks, rhs=eye[a, b])
    builder.set_objective(free={0: 1.0})
    sol = sdp.solve(builder.build(), feastol=feastol, gaptol=gaptol, max_iter=max_iter)
    if sol.status is sdp.SdpStatus.DUAL_UNBOUNDED:
        return float("inf"), []
    if sol.status is not sdp.SdpStatus.OPTIMAL:
        raise sdp.SolverIndeterminateError(
            f"cube condition SDP did not converge (status {sol.status.value})")
    rho = float(sol.free[0])
    bs = []
    if rho > 1e-12:
        for j in range(g):
            bs.append(0.5 * (sol.blocks[2 * j] + sol.blocks[2 * j + 1]) / rho)
    return rho, bs


def reconstruct_last_blocks(pencil: LinearPencil, report: CubeReport) -> list[np.ndarray]:
    """All ``2g`` pre-elimination blocks from the reduced-form witness."""
    g = pencil.g
    rho = report.rho
    cs = list(report.C_blocks)
    c_last = 0.5 * (np.eye(pencil.d) - 2.0 * sum(cs, np.zeros((pencil.d, pencil.d)))
                    + rho * sum(pencil.A))
    cs = cs + [c_last]
    return cs + [cs[j] - rho * pencil.A[j] for j in range(g)]


def mc_to_s(pencil: LinearPencil, report: CubeReport) -> list[np.ndarray]:
    """Convert a reduced-form witness into the classical condition's ``B_j``.

    The affine identity: ``rho B_j = C_j + C_{g+j} = 2 C_j - rho A_j``.
    """
    if report.rho <= 0:
        raise ValueError("conversion requires rho > 0")
    blocks = reconstruct_last_blocks(pencil, report)
    rho = report.rho
    return [(blocks[j] + blocks[pencil.g + j]) / rho for j in range(pencil.g)]


def s_to_mc(pencil: LinearPencil, bs: list[np.ndarray], rho: float) -> list[np.ndarray]:
    """Convert classical-condition ``B_j`` into reduced-form ``C`` blocks.

    The affine identity ``C_j = rho (B_j + A_j) / 2`` satisfies every
    reduced-form inequality whenever the input satisfies the classical
    system; the round trip through :func:`mc_to_s` is exact.
    """
    if len(bs) != pencil.g:
        raise ValueError("need one B block per variable")
    return [0.5 * rho * (bs[j] + pencil.A[j]) for j in range(pencil.g - 1)]


def sample_etas(count: int, seed: int) -> list[tuple[float, float]]:
    """Uniform-angle tightening directions, reproducible from the seed."""
    rng = np.random.default_rng(seed)
    thetas = rng.uniform(0.0, 2.0 * np.pi, size=count)
    return [(float(np.cos(t)), float(np.sin(t))) for t in thetas]


def tightened_cube_rho(pencil: LinearPencil, etas, *, seed: int | None = None,
                       feastol: float = 1e-8, gaptol: float = 1e-8,
                       max_iter: int = 200) -> CubeReport:
    """Matrix cube with the relaxation tightened by two-variable summands.

    The domain becomes the cube pencil direct-summed with one auxiliary
    pencil per direction ``(s, t)``; each auxiliary scalar set contains
    the unit square, so the scalar question is unchanged while the
    matricial relaxation can only improve.  Requires two variables when
    directions are supplied.  With no directions this reduces to the
    plain reduced cube program.
    """
    require_monic(pencil)
    etas = [(float(s), float(t)) for s, t in etas]
    if not etas:
        base = matrix_cube_rho(pencil, feastol=feastol, gaptol=gaptol,
                               max_iter=max_iter)
        return CubeReport(rho=base.rho, C_blocks=base.C_blocks, method="mc",
                          etas=[], seed=seed)
    if pencil.g != 2:
        raise ValueError("tightening directions are supported only for two variables")
    blocks = _cube_blocks(pencil.g) + [eta_pencil(s, t) for s, t in etas]
    report = max_scale_inclusion(blocks, pencil, check_bounded=False,
                                 feastol=feastol, gaptol=gaptol, max_iter=max_iter)
    if report.status is sdp.SdpStatus.DUAL_UNBOUNDED:
        return CubeReport(rho=np.inf, method="tightened", etas=etas, seed=seed)
    return CubeReport(rho=report.rho, method="tightened", etas=etas, seed=seed)
