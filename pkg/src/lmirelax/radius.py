"""Boundedness tests and the matricial radius SDP.

Boundedness of the whole matricial LMI set reduces to boundedness of its
scalar spectrahedron, which is decided by the classical recession-cone
SDP: a nonzero recession direction exists iff the truly linear part has a
PSD value of trace one.  The radius itself comes from the smallest
operator ball whose pencil dominates the given one; with the ball's
coefficient pattern substituted, the Choi feasibility system acquires a
single designated entry ``b`` whose largest feasible value is the
reciprocal of the radius.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import linalg, sdp
from .pencil import LinearPencil, is_nondegenerate, require_monic

BOUNDED_TOL = 1e-7


@dataclass
class RadiusReport:
    """Optimal designated entry ``b_star`` and the radius bound ``1 / b_star``."""

    b_star: float
    radius_bound: float
    bounded: bool


def is_bounded(pencil: LinearPencil, *, feastol: float = 1e-8,
               max_iter: int = 200) -> bool:
    """True iff the pencil's positivity set is bounded (at every level).

    Solves the recession SDP: the truly linear part evaluated on a scalar
    direction must be PSD with trace one.  Infeasibility of that system is
    exactly boundedness of the scalar spectrahedron, which is equivalent
    to boundedness of the full matricial set.
    """
    require_monic(pencil)
    if not is_nondegenerate(pencil):
        raise ValueError("boundedness test requires a nondegenerate pencil")
    d, g = pencil.d, pencil.g
    builder = sdp.SdpBuilder([d], n_free=g)
    for a in range(d):
        for b in range(a, d):
            e_ab = np.zeros((d, d))
            e_ab[a, b] = 1.0
            builder.add_equality(blocks={0: e_ab},
                                 free={j: -pencil.A[j][a, b] for j in range(g)},
                                 rhs=0.0)
    builder.add_equality(blocks={0: np.eye(d)}, rhs=1.0)
    res = sdp.feasibility(builder.build(), feastol=feastol, max_iter=max_iter)
    if res.status is sdp.FeasStatus.INDETERMINATE:
        raise sdp.SolverIndeterminateError("boundedness test did not converge")
    return res.status is sdp.FeasStatus.INFEASIBLE


def matricial_radius(pencil: LinearPencil, *, feastol: float = 1e-8,
                     gaptol: float = 1e-8, max_iter: int = 200) -> RadiusReport:
    """Sharp upper bound on the norm of points in the matricial LMI set.

    Builds the Choi system mapping the pencil's coefficients onto the ball
    pencil's arrow pattern: the image of coefficient ``l`` must vanish
    outside entries ``(0, l+1)`` and ``(l+1, 0)``, and all designated
    entries share one free variable ``b`` (removing the chain of equal-entry
    rows).  The objective maximizes ``b``; the radius bound is ``1/b``, and
    ``b`` at numerical zero means the set is unbounded.
    """
    require_monic(pencil)
    if not is_nondegenerate(pencil):
        raise ValueError("radius computation requires a nondegenerate pencil")
    d, g = pencil.d, pencil.g
    k = g + 1
    builder = sdp.SdpBuilder([d * k], n_free=1)

    def coefficient_row(mat: np.ndarray, a: int, b: int) -> np.ndarray:
        e_ab = np.zeros((k, k))
        e_ab[a, b] = 1.0
        return linalg.kron(mat, e_ab)

    eye_k = np.eye(k)
    for a in range(k):
        for b in range(a, k):
            builder.add_equality(blocks={0: coefficient_row(np.eye(d), a, b)},
                                 rhs=eye_k[a, b])
    for ell in range(g):
        for a in range(k):
            for b in range(a, k):
                if (a, b) == (0, ell + 1):
                    builder.add_equality(blocks={0: coefficient_row(pencil.A[ell], a, b)},
                                         free={0: -1.0}, rhs=0.0)
                else:
                    builder.add_equality(blocks={0: coefficient_row(pencil.A[ell], a, b)},
                                         rhs=0.0)
    builder.set_objective(free={0: 1.0})
    sol = sdp.solve(builder.build(), feastol=feastol, gaptol=gaptol, max_iter=max_iter)
    if sol.status is not sdp.SdpStatus.OPTIMAL:
        raise sdp.SolverIndeterminateError(
            f"radius SDP did not converge (status {sol.status.value})")
    b_star = float(sol.free[0])
    bounded = b_star > BOUNDED_TOL
    radius_bound = 1.0 / b_star if bounded else float("inf")
    return RadiusReport(b_star=b_star, radius_bound=radius_bound, bounded=bounded)
