"""Deciding domination of matricial LMI sets and extracting certificates.

The central reduction: the domain pencil's positivity set is contained in
the range pencil's exactly when the unital linear map sending domain
coefficients to range coefficients is completely positive, which in turn
is a feasibility SDP on the map's Choi matrix.  A feasible Choi matrix
factors into an isometry whose columns give the algebraic certificate
``L2(x) = sum_j V_j^T L1(x) V_j`` with ``sum_j V_j^T V_j = I``.

Direct-sum structure on either side shrinks the Choi matrix into
independent diagonal blocks; the scale-maximization variant makes the
range coefficients proportional to a free scalar and maximizes it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import linalg, radius, sdp
from .linalg import NotPsdError, psd_factor
from .pencil import (LinearPencil, PencilFormatError, direct_sum, is_nondegenerate,
                     require_monic)

PencilOrBlocks = LinearPencil | Sequence[LinearPencil]


class UnboundedDomainError(ValueError):
    """The domain pencil's positivity set is unbounded, so the test is invalid."""


def _as_blocks(arg: PencilOrBlocks) -> list[LinearPencil]:
    if isinstance(arg, LinearPencil):
        return [arg]
    blocks = list(arg)
    if not blocks:
        raise ValueError("need at least one pencil block")
    return blocks


@dataclass
class ChoiSolution:
    """PSD block matrix witnessing complete positivity of the coefficient map.

    ``C`` has size ``d1*d2`` and is viewed as a ``d1 x d1`` grid of
    ``d2 x d2`` blocks ``c_pq``; the diagonal blocks sum to the identity
    and the coefficient combinations reproduce the range coefficients.
    """

    C: np.ndarray
    d1: int
    d2: int
    margin: float = float("nan")

    def block(self, p: int, q: int) -> np.ndarray:
        d2 = self.d2
        return self.C[p * d2:(p + 1) * d2, q * d2:(q + 1) * d2]

    def trace_block_sum(self) -> np.ndarray:
        return sum(self.block(p, p) for p in range(self.d1))

    def coefficient_image(self, a: np.ndarray) -> np.ndarray:
        """The image ``sum_pq a[p,q] c_pq`` of a domain coefficient."""
        out = np.zeros((self.d2, self.d2))
        for p in range(self.d1):
            for q in range(self.d1):
                if a[p, q] != 0.0:
                    out += a[p, q] * self.block(p, q)
        return out


@dataclass
class Certificate:
    """Matrices ``V_1..V_mu`` with ``sum V_j^T L1 V_j = L2`` and ``sum V_j^T V_j = I``."""

    Vs: list[np.ndarray]

    @property
    def mu(self) -> int:
        return len(self.Vs)

    def to_dict(self) -> dict:
        return {"mu": self.mu, "V": [v.tolist() for v in self.Vs]}


@dataclass
class CertificateCheck:
    ok: bool
    max_residual: float
    residuals: list[float]


@dataclass
class InclusionReport:
    """Outcome of a domination test.

    ``included`` is None exactly when the solver was indeterminate; margins
    inside the ``(-tol, tol)`` band are flagged ``marginal`` (the underlying
    dichotomy is exact, floating point needs a declared band).
    """

    included: bool | None
    margin: float
    marginal: bool = False
    status: str = "included"
    choi: ChoiSolution | None = None


@dataclass
class ScaleReport:
    """Largest ``rho`` with ``rho * D_domain`` contained in the range set."""

    rho: float
    status: sdp.SdpStatus
    choi: ChoiSolution | None = None


# ---------------------------------------------------------------------------
# SDP builders
# ---------------------------------------------------------------------------


def _coefficient_rows(builder: sdp.SdpBuilder, blocks: list[LinearPencil], d2: int,
                      targets: list[np.ndarray] | None, rho_index: int | None,
                      trace_slack_block: int | None) -> None:
    """Rows shared by all domain-sum Choi builders.

    For every upper-triangle entry (a, b) of the range space: the combination
    of Choi blocks prescribed by the domain coefficients equals the target
    entry (or ``rho`` times it); the diagonal Choi blocks sum to the identity
    (optionally with a PSD slack block making it an inequality).
    """
    g = blocks[0].g
    eye2 = np.eye(d2)
    for a in range(d2):
        for bcol in range(a, d2):
            e_ab = np.zeros((d2, d2))
            e_ab[a, bcol] = 1.0
            # trace row: sum_mu sum_p c_pp = I
            mats = {mu: linalg.kron(np.eye(p.d), e_ab) for mu, p in enumerate(blocks)}
            if trace_slack_block is not None:
                mats[trace_slack_block] = e_ab
            builder.add_equality(blocks=mats, rhs=eye2[a, bcol])
    for ell in range(g):
        for a in range(d2):
            for bcol in range(a, d2):
                e_ab = np.zeros((d2, d2))
                e_ab[a, bcol] = 1.0
                mats = {mu: linalg.kron(p.A[ell], e_ab) for mu, p in enumerate(blocks)
                        if np.any(p.A[ell])}
                free = {}
                rhs = 0.0
                if rho_index is not None:
                    free[rho_index] = -targets[ell][a, bcol]
                else:
                    rhs = targets[ell][a, bcol]
                builder.add_equality(blocks=mats, free=free, rhs=rhs)


def build_choi_sdp(l1: LinearPencil, l2: LinearPencil, *,
                   trace_relax: bool = False) -> sdp.SdpProblem:
    """Feasibility SDP for the Choi matrix of the coefficient map L1 -> L2.

    One PSD block of size ``d1*d2`` constrained by ``(1+g) d2(d2+1)/2``
    equality rows.  Preconditions (monic domain and range, nondegenerate
    and bounded domain) are the caller's obligation; monicity and
    degeneracy are checked here because the map is otherwise ill-defined.
    """
    return build_choi_sdp_domain_sum([l1], l2, trace_relax=trace_relax)


def build_choi_sdp_domain_sum(blocks: Sequence[LinearPencil], l2: LinearPencil, *,
                              trace_relax: bool = False) -> sdp.SdpProblem:
    """Reduced Choi SDP when the domain pencil is a direct sum of blocks.

    One PSD block of size ``delta_mu * d2`` per summand; the equality rows
    sum across summands.  With ``trace_relax`` (valid when every domain
    coefficient is traceless) the identity row becomes an inequality via an
    extra PSD slack block.
    """
    blocks = _as_blocks(blocks)
    require_monic(l2, "range pencil")
    g = blocks[0].g
    for p in blocks:
        require_monic(p, "domain pencil block")
        if p.g != g:
            raise ValueError("all domain blocks must share the variable count")
    if l2.g != g:
        raise ValueError("domain and range pencils must share the variable count")
    if not is_nondegenerate(direct_sum(blocks) if len(blocks) > 1 else blocks[0]):
        raise ValueError("domain pencil is degenerate; the coefficient map is ill-defined")
    d2 = l2.d
    dims = [p.d * d2 for p in blocks]
    slack = None
    if trace_relax:
        slack = len(dims)
        dims.append(d2)
    builder = sdp.SdpBuilder(dims)
    _coefficient_rows(builder, blocks, d2, list(l2.A), rho_index=None,
                      trace_slack_block=slack)
    return builder.build()


def build_choi_sdp_range_sum(l1: LinearPencil,
                             blocks: Sequence[LinearPencil]) -> sdp.SdpProblem:
    """Reduced Choi SDP when the range pencil is a direct sum of blocks.

    Each summand gets an independent PSD block of size ``d1 * delta_mu``
    with its own coefficient and identity rows.
    """
    blocks = _as_blocks(blocks)
    require_monic(l1, "domain pencil")
    for p in blocks:
        require_monic(p, "range pencil block")
        if p.g != l1.g:
            raise ValueError("domain and range pencils must share the variable count")
    if not is_nondegenerate(l1):
        raise ValueError("domain pencil is degenerate; the coefficient map is ill-defined")
    d1 = l1.d
    builder = sdp.SdpBuilder([d1 * p.d for p in blocks])
    for mu, p in enumerate(blocks):
        dm = p.d
        for a in range(dm):
            for bcol in range(a, dm):
                e_ab = np.zeros((dm, dm))
                e_ab[a, bcol] = 1.0
                builder.add_equality(blocks={mu: linalg.kron(np.eye(d1), e_ab)},
                                     rhs=float(a == bcol))
        for ell in range(l1.g):
            for a in range(dm):
                for bcol in range(a, dm):
                    e_ab = np.zeros((dm, dm))
                    e_ab[a, bcol] = 1.0
                    builder.add_equality(blocks={mu: linalg.kron(l1.A[ell], e_ab)},
                                         rhs=p.A[ell][a, bcol])
    return builder.build()


# ---------------------------------------------------------------------------
# Inclusion checking
# ---------------------------------------------------------------------------


def _assemble_choi(blocks: Sequence[LinearPencil], d2: int,
                   psd_blocks: list[np.ndarray], slack: bool) -> np.ndarray:
    """Embed per-summand Choi blocks into the full block-diagonal Choi matrix."""
    d1 = sum(p.d for p in blocks)
    c = np.zeros((d1 * d2, d1 * d2))
    offset = 0
    for p, cb in zip(blocks, psd_blocks):
        size = p.d * d2
        lo = offset * d2
        c[lo:lo + size, lo:lo + size] = cb
        offset += p.d
    if slack:
        # restore the exact identity normalization dropped by the trace
        # relaxation: shift every diagonal block by slack/d1
        delta = psd_blocks[len(blocks)]
        shift = linalg.kron(np.eye(d1), delta) / d1
        c = c + shift
    return 0.5 * (c + c.T)


def check_inclusion(l1: PencilOrBlocks, l2: PencilOrBlocks, *, tol: float = 1e-7,
                    check_bounded: bool = True, trace_relax: bool = False,
                    feastol: float = 1e-8, max_iter: int = 200) -> InclusionReport:
    """Decide whether the domain pencil's LMI set lies inside the range's.

    Either argument may be a sequence of pencils, understood as a direct
    sum; the reduced Choi builders are dispatched accordingly.  The domain
    set must be bounded for the verdict to be exact (checked via the
    recession SDP unless ``check_bounded`` is False).  ``trace_relax`` is
    honored only when every domain coefficient is traceless.
    """
    dom_blocks = _as_blocks(l1)
    l1_full = dom_blocks[0] if len(dom_blocks) == 1 else direct_sum(dom_blocks)
    if check_bounded and not radius.is_bounded(l1_full, feastol=feastol,
                                               max_iter=max_iter):
        raise UnboundedDomainError(
            "domain set is unbounded; the inclusion SDP is not a valid test")

    relax = trace_relax and all(abs(np.trace(a)) <= 1e-12 for a in l1_full.A)
    if not isinstance(l2, LinearPencil) and len(_as_blocks(l2)) > 1:
        problem = build_choi_sdp_range_sum(l1_full, _as_blocks(l2))
        d2 = sum(p.d for p in _as_blocks(l2))
        dom_for_choi = None  # per-range-block Choi matrices do not tile one matrix
    else:
        l2_full = l2 if isinstance(l2, LinearPencil) else _as_blocks(l2)[0]
        problem = build_choi_sdp_domain_sum(dom_blocks, l2_full, trace_relax=relax)
        d2 = l2_full.d
        dom_for_choi = dom_blocks

    res = sdp.feasibility(problem, feastol=feastol, max_iter=max_iter)
    if res.status is sdp.FeasStatus.INDETERMINATE:
        return InclusionReport(included=None, margin=float("nan"),
                               status="indeterminate")
    margin = res.slack if np.isfinite(res.slack) else (np.inf if res.feasible else -np.inf)
    included = bool(res.feasible) if res.status is not sdp.FeasStatus.INFEASIBLE else False
    marginal = bool(np.isfinite(margin) and abs(margin) < tol)
    choi = None
    if included and dom_for_choi is not None and res.blocks:
        c = _assemble_choi(dom_for_choi, d2, res.blocks, slack=relax)
        choi = ChoiSolution(C=c, d1=sum(p.d for p in dom_for_choi), d2=d2, margin=margin)
    return InclusionReport(included=included, margin=float(margin), marginal=marginal,
                           status="included" if included else "not-included", choi=choi)


# ---------------------------------------------------------------------------
# Certificates
# ---------------------------------------------------------------------------


def extract_certificate(choi: ChoiSolution, d1: int | None = None,
                        d2: int | None = None, *, rank_tol: float = 1e-8) -> Certificate:
    """Factor the Choi matrix into the certificate isometry.

    Eigenvalues below ``rank_tol * trace(C)`` are dropped before factoring,
    so the number of certificate matrices is the numerical rank (at most
    ``d1 * d2``).  Each row of the factor, reshaped to ``d1 x d2``, is one
    certificate matrix.
    """
    d1 = choi.d1 if d1 is None else d1
    d2 = choi.d2 if d2 is None else d2
    c = 0.5 * (choi.C + choi.C.T)
    tol = rank_tol * max(float(np.trace(c)), 1e-300)
    w = psd_factor(c, tol=tol)
    vs = [row.reshape(d1, d2).copy() for row in w]
    return Certificate(Vs=vs)


def verify_certificate(l1: LinearPencil, l2: LinearPencil, cert: Certificate,
                       tol: float = 1e-6) -> CertificateCheck:
    """Check ``sum V_j^T V_j = I`` and ``sum V_j^T A_{1,l} V_j = A_{2,l}`` for all l."""
    if l1.g != l2.g:
        raise ValueError("pencils must share the variable count")
    for j, v in enumerate(cert.Vs):
        if v.shape != (l1.d, l2.d):
            raise ValueError(f"certificate matrix {j} has shape {v.shape}, "
                             f"expected ({l1.d}, {l2.d})")
    residuals = [float(np.linalg.norm(
        sum(v.T @ v for v in cert.Vs) - np.eye(l2.d)))]
    for a1, a2 in zip(l1.A, l2.A):
        residuals.append(float(np.linalg.norm(
            sum(v.T @ a1 @ v for v in cert.Vs) - a2)))
    max_res = max(residuals)
    return CertificateCheck(ok=max_res <= tol, max_residual=max_res,
                            residuals=residuals)


def certificate_to_json(cert: Certificate) -> str:
    return json.dumps(cert.to_dict(), indent=2, sort_keys=True) + "\n"


def save_certificate(cert: Certificate, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(certificate_to_json(cert))


def load_certificate(path: str) -> Certificate:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise PencilFormatError(exc.msg, path=path, line=exc.lineno) from exc
    if not isinstance(data, dict) or "V" not in data:
        raise PencilFormatError("missing required field", path=path, field_name="V")
    vs = [np.array(v, dtype=float) for v in data["V"]]
    if "mu" in data and data["mu"] != len(vs):
        raise PencilFormatError("mu does not match the number of matrices",
                                path=path, field_name="mu")
    return Certificate(Vs=vs)


# ---------------------------------------------------------------------------
# Scale maximization: largest rho with rho * D_domain inside the range set
# ---------------------------------------------------------------------------


def max_scale_inclusion(m: PencilOrBlocks, l: LinearPencil, *, check_bounded: bool = True,
                        feastol: float = 1e-8, gaptol: float = 1e-8,
                        max_iter: int = 200) -> ScaleReport:
    """Maximize ``rho >= 0`` subject to ``rho * D_domain`` inside ``D_range``.

    The Choi blocks and ``rho`` are joint SDP variables (the coefficient
    rows are affine in both); the problem is always feasible at
    ``rho = 0``.  An unbounded objective (possible only for unbounded
    domain sets) is reported as DUAL_UNBOUNDED with ``rho = inf``.
    """
    blocks = _as_blocks(m)
    require_monic(l, "range pencil")
    m_full = blocks[0] if len(blocks) == 1 else direct_sum(blocks)
    if check_bounded and not radius.is_bounded(m_full, feastol=feastol,
                                               max_iter=max_iter):
        raise UnboundedDomainError("domain set must be bounded for scale maximization")
    d2 = l.d
    builder = sdp.SdpBuilder([p.d * d2 for p in blocks], n_free=1)
    _coefficient_rows(builder, blocks, d2, list(l.A), rho_index=0,
                      trace_slack_block=None)
    builder.set_objective(free={0: 1.0})
    sol = sdp.solve(builder.build(), feastol=feastol, gaptol=gaptol, max_iter=max_iter)
    if sol.status is sdp.SdpStatus.DUAL_UNBOUNDED:
        return ScaleReport(rho=np.inf, status=sol.status)
    if sol.status is not sdp.SdpStatus.OPTIMAL:
        raise sdp.SolverIndeterminateError(
            f"scale maximization did not converge (status {sol.status.value})")
    rho = float(sol.free[0])
    c = _assemble_choi(blocks, d2, sol.blocks, slack=False)
    choi = ChoiSolution(C=c, d1=sum(p.d for p in blocks), d2=d2, margin=sol.margin)
    return ScaleReport(rho=rho, status=sol.status, choi=choi)
