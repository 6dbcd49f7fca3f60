"""Self-contained dense semidefinite programming.

Standard form handled here: variables are a tuple of PSD matrix blocks
plus free scalars; constraints are linear equalities over the isometric
``svec`` coordinates of the blocks and the free scalars; the (linear)
objective is maximized.  The solver is an infeasible-start primal-dual
path-following method with Nesterov-Todd scaling; the Schur-complement
normal equations are formed densely and solved by LU factorization,
which is appropriate for the block sizes (a few dozen) these problems
produce.

Feasibility questions are answered by a phase-I reformulation: shift
every PSD block by ``-t I`` for a new free scalar ``t`` and maximize
``t``; the sign of the optimum decides feasibility and its magnitude is
the reported margin.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.linalg

from . import linalg
from .linalg import smat, smat_basis, svec, svec_batch, svec_dim


class SdpStatus(str, Enum):
    OPTIMAL = "optimal"
    PRIMAL_INFEASIBLE = "primal_infeasible"
    DUAL_UNBOUNDED = "dual_unbounded"
    ITERATION_LIMIT = "iteration_limit"


class FeasStatus(str, Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    INDETERMINATE = "indeterminate"


class SolverIndeterminateError(RuntimeError):
    """An algorithm needed a definitive verdict but the solver hit its limits."""


@dataclass(frozen=True)
class SdpProblem:
    """Equality-constrained SDP over PSD blocks and free scalars (maximize)."""

    block_dims: tuple[int, ...]
    n_free: int
    objective: np.ndarray
    constraints: np.ndarray
    rhs: np.ndarray

    def __post_init__(self):
        obj = np.asarray(self.objective, dtype=float)
        con = np.atleast_2d(np.asarray(self.constraints, dtype=float))
        rhs = np.atleast_1d(np.asarray(self.rhs, dtype=float))
        n = self.n_coords
        if obj.shape != (n,):
            raise ValueError(f"objective has length {obj.shape}, expected ({n},)")
        if con.shape[1] != n:
            raise ValueError(f"constraint rows have length {con.shape[1]}, expected {n}")
        if rhs.shape != (con.shape[0],):
            raise ValueError("rhs length does not match the number of constraint rows")
        object.__setattr__(self, "objective", obj)
        object.__setattr__(self, "constraints", con)
        object.__setattr__(self, "rhs", rhs)

    @property
    def n_psd_coords(self) -> int:
        return sum(svec_dim(n) for n in self.block_dims)

    @property
    def n_coords(self) -> int:
        return self.n_psd_coords + self.n_free

    @property
    def n_rows(self) -> int:
        return self.constraints.shape[0]

    def block_slices(self) -> list[slice]:
        out, pos = [], 0
        for n in self.block_dims:
            out.append(slice(pos, pos + svec_dim(n)))
            pos += svec_dim(n)
        return out


class SdpBuilder:
    """Accumulates equality rows and an objective in svec coordinates."""

    def __init__(self, block_dims: Sequence[int], n_free: int = 0):
        self.block_dims = tuple(int(n) for n in block_dims)
        self.n_free = int(n_free)
        self._rows: list[np.ndarray] = []
        self._rhs: list[float] = []
        self._objective = np.zeros(self._n_coords)

    @property
    def _n_coords(self) -> int:
        return sum(svec_dim(n) for n in self.block_dims) + self.n_free

    def _vector(self, blocks: Mapping[int, np.ndarray] | None,
                free: Mapping[int, float] | None) -> np.ndarray:
        row = np.zeros(self._n_coords)
        pos = 0
        offsets = []
        for n in self.block_dims:
            offsets.append(pos)
            pos += svec_dim(n)
        for k, mat in (blocks or {}).items():
            mat = np.asarray(mat, dtype=float)
            n = self.block_dims[k]
            if mat.shape != (n, n):
                raise ValueError(f"block {k} coefficient has shape {mat.shape}, expected ({n}, {n})")
            row[offsets[k]:offsets[k] + svec_dim(n)] = svec(0.5 * (mat + mat.T))
        for i, c in (free or {}).items():
            row[pos + i] = c
        return row

    def add_equality(self, blocks: Mapping[int, np.ndarray] | None = None,
                     free: Mapping[int, float] | None = None, rhs: float = 0.0) -> None:
        """Add the row ``sum_k <M_k, X_k> + sum_i c_i f_i = rhs``."""
        self._rows.append(self._vector(blocks, free))
        self._rhs.append(float(rhs))

    def set_objective(self, blocks: Mapping[int, np.ndarray] | None = None,
                      free: Mapping[int, float] | None = None) -> None:
        """Objective ``sum_k <M_k, X_k> + sum_i c_i f_i``, to be maximized."""
        self._objective = self._vector(blocks, free)

    def build(self) -> SdpProblem:
        m = len(self._rows)
        cons = np.vstack(self._rows) if m else np.zeros((0, self._n_coords))
        return SdpProblem(self.block_dims, self.n_free, self._objective,
                          cons, np.array(self._rhs, dtype=float))


@dataclass
class SdpSolution:
    status: SdpStatus
    blocks: list[np.ndarray] = field(default_factory=list)
    free: np.ndarray = field(default_factory=lambda: np.zeros(0))
    y: np.ndarray = field(default_factory=lambda: np.zeros(0))
    objective_value: float = float("nan")
    margin: float = float("nan")
    primal_residual: float = float("nan")
    dual_residual: float = float("nan")
    gap: float = float("nan")
    iterations: int = 0
    certificate_gap: float | None = None
    history: list[tuple] = field(default_factory=list)
    message: str = ""


@dataclass
class FeasibilityResult:
    status: FeasStatus
    slack: float
    blocks: list[np.ndarray] = field(default_factory=list)
    free: np.ndarray = field(default_factory=lambda: np.zeros(0))
    certificate_gap: float | None = None
    solution: SdpSolution | None = None

    @property
    def feasible(self) -> bool:
        return self.status is FeasStatus.FEASIBLE


# ---------------------------------------------------------------------------
# Preprocessing
# ---------------------------------------------------------------------------


def _preprocess_rows(a: np.ndarray, b: np.ndarray, tol: float = 1e-10):
    """Select independent rows; detect inconsistent equalities.

    Returns (keep_indices, inconsistency_residual).  A nonzero residual
    means no point satisfies the equalities at all.
    """
    m = a.shape[0]
    if m == 0:
        return np.arange(0), 0.0
    sol, *_ = np.linalg.lstsq(a, b, rcond=None)
    residual = float(np.max(np.abs(a @ sol - b))) if m else 0.0
    # pivoted QR of A^T picks a maximal independent row set
    _, r, piv = scipy.linalg.qr(a.T, pivoting=True, mode="economic")
    diag = np.abs(np.diag(r))
    scale = diag[0] if diag.size and diag[0] > 0 else 1.0
    rank = int(np.sum(diag > tol * max(scale, 1.0)))
    keep = np.sort(piv[:rank])
    return keep, residual


# ---------------------------------------------------------------------------
# Nesterov-Todd machinery
# ---------------------------------------------------------------------------


def _sqrt_and_inv_sqrt(a: np.ndarray, rel_floor: float = 1e-14):
    w, q = np.linalg.eigh(0.5 * (a + a.T))
    w = np.maximum(w, rel_floor * max(float(w[-1]), 1e-128))
    rw = np.sqrt(w)
    return (q * rw) @ q.T, (q / rw) @ q.T


def _nt_scaling(x: np.ndarray, s: np.ndarray) -> np.ndarray:
    """The PSD matrix W with W S W = X."""
    xh, _ = _sqrt_and_inv_sqrt(x)
    mid = xh @ s @ xh
    _, mih = _sqrt_and_inv_sqrt(mid)
    w = xh @ mih @ xh
    return 0.5 * (w + w.T)


def _sym_kron(w: np.ndarray) -> np.ndarray:
    """Matrix of U -> W U W acting on svec coordinates."""
    basis = smat_basis(w.shape[0])
    imgs = np.einsum("ab,kbc,cd->kad", w, basis, w, optimize=True)
    return svec_batch(imgs).T


def _max_step(x: np.ndarray, dx: np.ndarray) -> float:
    """Largest a with x + a dx still PSD (x assumed PD)."""
    w, q = np.linalg.eigh(0.5 * (x + x.T))
    w = np.maximum(w, 1e-300)
    inv_half = q / np.sqrt(w)
    lam = np.linalg.eigvalsh(inv_half.T @ (0.5 * (dx + dx.T)) @ inv_half)[0]
    if lam >= -1e-300:
        return np.inf
    return -1.0 / lam


# ---------------------------------------------------------------------------
# Main solver
# ---------------------------------------------------------------------------


def solve(problem: SdpProblem, *, feastol: float = 1e-8, gaptol: float = 1e-8,
          max_iter: int = 200) -> SdpSolution:
    """Solve the (maximization) SDP by NT-scaled primal-dual path following.

    Status semantics: ``OPTIMAL`` guarantees the primal residual is below
    ``feastol`` and the relative duality gap below ``gaptol``;
    ``PRIMAL_INFEASIBLE`` carries a Farkas-type certificate gap;
    ``DUAL_UNBOUNDED`` signals a diverging objective; ``ITERATION_LIMIT``
    returns the best iterate found.  Deterministic: fixed identity start,
    no randomness.
    """
    dims = problem.block_dims
    n_psd = problem.n_psd_coords
    slices = problem.block_slices()

    keep, inconsistency = _preprocess_rows(problem.constraints, problem.rhs)
    if inconsistency > feastol * (1.0 + float(np.max(np.abs(problem.rhs), initial=0.0))):
        return SdpSolution(
            status=SdpStatus.PRIMAL_INFEASIBLE,
            certificate_gap=inconsistency,
            message="equality constraints are inconsistent as a linear system",
        )
    a = problem.constraints[keep]
    b = problem.rhs[keep]
    m = a.shape[0]
    ap = a[:, :n_psd]
    af = a[:, n_psd:]

    cbar = -problem.objective  # internal minimization form
    cp = cbar[:n_psd]
    cf = cbar[n_psd:]

    # free variables never touched by constraints are fixed at zero (or
    # witness unboundedness when they carry objective weight)
    live_free = np.ones(problem.n_free, dtype=bool)
    if problem.n_free:
        dead = ~np.any(np.abs(af) > 0, axis=0)
        if np.any(dead & (np.abs(cf) > 0)):
            return SdpSolution(status=SdpStatus.DUAL_UNBOUNDED,
                               message="free variable with objective weight appears in no constraint")
        live_free = ~dead
    afl = af[:, live_free]
    cfl = cf[live_free]
    nfl = int(np.sum(live_free))

    xs = [np.eye(n) for n in dims]
    ss = [np.eye(n) for n in dims]
    f = np.zeros(nfl)
    y = np.zeros(m)
    ntot = max(sum(dims), 1)

    def pack_x():
        vec = np.concatenate([svec(xk) for xk in xs]) if dims else np.zeros(0)
        return vec

    def assemble(status, message=""):
        full_free = np.zeros(problem.n_free)
        full_free[live_free] = f
        y_full = np.zeros(problem.n_rows)
        y_full[keep] = y
        x = np.concatenate([pack_x(), full_free])
        margin = min((float(np.linalg.eigvalsh(xk)[0]) for xk in xs), default=np.inf)
        return SdpSolution(
            status=status,
            blocks=[xk.copy() for xk in xs],
            free=full_free,
            y=y_full,
            objective_value=float(problem.objective @ x),
            margin=margin,
            primal_residual=pinfeas,
            dual_residual=dinfeas,
            gap=relgap,
            iterations=it,
            history=history,
            message=message,
        )

    history: list[tuple] = []
    pinfeas = dinfeas = relgap = np.inf
    it = 0
    stall = 0
    recenter = False
    cscale = 1.0 + float(np.max(np.abs(cbar), initial=0.0))

    for it in range(max_iter + 1):
        x_psd = pack_x()
        s_psd = np.concatenate([svec(sk) for sk in ss]) if dims else np.zeros(0)
        rp = b - ap @ x_psd - afl @ f
        rd_psd = cp - ap.T @ y - s_psd
        rd_f = cfl - afl.T @ y
        mu = sum(float(np.vdot(xk, sk)) for xk, sk in zip(xs, ss)) / ntot

        pobj = -float(cp @ x_psd + cfl @ f)
        dobj = -float(b @ y)
        pinfeas = float(np.max(np.abs(rp), initial=0.0))
        dinfeas = float(max(np.max(np.abs(rd_psd), initial=0.0),
                            np.max(np.abs(rd_f), initial=0.0)))
        relgap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
        history.append((pobj, dobj, pinfeas, dinfeas, mu))

        if pinfeas <= feastol and dinfeas <= feastol * cscale and relgap <= gaptol:
            return assemble(SdpStatus.OPTIMAL)

        # Farkas-type certificate of primal infeasibility carried by y
        ynorm = float(np.linalg.norm(y))
        if ynorm > 1.0:
            u = y / ynorm
            z = a.T @ u
            zmax = max((float(np.linalg.eigvalsh(smat(z[sl]))[-1]) for sl in slices),
                       default=0.0)
            zfree = float(np.max(np.abs(z[n_psd:]), initial=0.0))
            bu = float(b @ u)
            if zmax <= 1e-9 and zfree <= 1e-9 and bu > 1e-7:
                sol = assemble(SdpStatus.PRIMAL_INFEASIBLE,
                               "dual ray certifies primal infeasibility")
                sol.certificate_gap = bu
                return sol

        if pobj > 1e10 and pinfeas <= max(np.sqrt(feastol), 1e-6):
            return assemble(SdpStatus.DUAL_UNBOUNDED)

        if it == max_iter or mu < 1e-16 or stall >= 3:
            return assemble(SdpStatus.ITERATION_LIMIT,
                            "no further progress" if stall >= 3 else "")

        ws = [_nt_scaling(xk, sk) for xk, sk in zip(xs, ss)]
        ginvs = []
        for w in ws:
            lam, q = np.linalg.eigh(w)
            winv = (q / np.maximum(lam, 1e-300)) @ q.T
            ginvs.append(_sym_kron(0.5 * (winv + winv.T)))
        sinvs = []
        for sk in ss:
            _, sih = _sqrt_and_inv_sqrt(sk)
            sinvs.append(sih @ sih)

        # augmented KKT system in (dx_psd, df, dy); better conditioned than
        # the Schur-complement normal equations in the degenerate endgame
        kdim = n_psd + nfl + m
        kmat = np.zeros((kdim, kdim))
        for sl, ginv in zip(slices, ginvs):
            kmat[sl, sl] = ginv
        kmat[:n_psd, n_psd + nfl:] = -ap.T
        kmat[n_psd:n_psd + nfl, n_psd + nfl:] = -afl.T
        kmat[n_psd + nfl:, :n_psd] = ap
        kmat[n_psd + nfl:, n_psd:n_psd + nfl] = afl
        try:
            lu = scipy.linalg.lu_factor(kmat)
        except (scipy.linalg.LinAlgError, ValueError):
            return assemble(SdpStatus.ITERATION_LIMIT, "KKT factorization failed")

        def newton(vs):
            top = -rd_psd.copy()
            for sl, ginv, v in zip(slices, ginvs, vs):
                top[sl] += ginv @ v
            rhs = np.concatenate([top, -rd_f, rp])
            try:
                sol = scipy.linalg.lu_solve(lu, rhs)
            except (scipy.linalg.LinAlgError, ValueError):
                sol, *_ = np.linalg.lstsq(kmat, rhs, rcond=None)
            # iterative refinement recovers the last digits of the direction
            best_res = np.inf
            for _ in range(3):
                corr = rhs - kmat @ sol
                res = float(np.max(np.abs(corr), initial=0.0))
                if res <= 1e-14 or res >= 0.5 * best_res:
                    break
                best_res = res
                try:
                    sol = sol + scipy.linalg.lu_solve(lu, corr)
                except (scipy.linalg.LinAlgError, ValueError):
                    break
            dx_psd = sol[:n_psd]
            df = sol[n_psd:n_psd + nfl]
            dy = sol[n_psd + nfl:]
            ds_psd = rd_psd - ap.T @ dy
            dxs = [smat(dx_psd[sl]) for sl in slices]
            dss = [smat(ds_psd[sl]) for sl in slices]
            return dy, df, dxs, dss

        eta = 0.98 if mu > 1e-6 else 0.99
        if recenter:
            sigma = 1.0
        else:
            # predictor (affine scaling)
            vs_aff = [-svec(xk) for xk in xs]
            dy_a, df_a, dxs_a, dss_a = newton(vs_aff)
            if any(not np.all(np.isfinite(d)) for d in dxs_a + dss_a):
                return assemble(SdpStatus.ITERATION_LIMIT,
                                "numerical breakdown in predictor")
            ap_aff = min(1.0, eta * min((_max_step(xk, dxk)
                                         for xk, dxk in zip(xs, dxs_a)), default=np.inf))
            ad_aff = min(1.0, eta * min((_max_step(sk, dsk)
                                         for sk, dsk in zip(ss, dss_a)), default=np.inf))
            mu_aff = sum(float(np.vdot(xk + ap_aff * dxk, sk + ad_aff * dsk))
                         for xk, dxk, sk, dsk in zip(xs, dxs_a, ss, dss_a)) / ntot
            sigma = float(np.clip((max(mu_aff, 0.0) / mu) ** 3, 1e-6, 0.9)) if mu > 0 else 0.1

        # corrector with centering
        vs = [svec(sigma * mu * sinv - xk) for sinv, xk in zip(sinvs, xs)]
        dy, df, dxs, dss = newton(vs)
        if any(not np.all(np.isfinite(d)) for d in dxs + dss):
            return assemble(SdpStatus.ITERATION_LIMIT, "numerical breakdown in corrector")

        alpha_p = min(1.0, eta * min((_max_step(xk, dxk) for xk, dxk in zip(xs, dxs)),
                                     default=np.inf))
        alpha_d = min(1.0, eta * min((_max_step(sk, dsk) for sk, dsk in zip(ss, dss)),
                                     default=np.inf))
        if min(alpha_p, alpha_d) < 1e-3:
            # a pure centering pass often re-opens the corridor before giving up
            stall += 1
            recenter = stall < 3 and not recenter
        else:
            stall = 0
            recenter = False
        for k in range(len(xs)):
            xs[k] = 0.5 * ((xs[k] + alpha_p * dxs[k]) + (xs[k] + alpha_p * dxs[k]).T)
            ss[k] = 0.5 * ((ss[k] + alpha_d * dss[k]) + (ss[k] + alpha_d * dss[k]).T)
        f = f + alpha_p * df
        y = y + alpha_d * dy

    return assemble(SdpStatus.ITERATION_LIMIT)  # pragma: no cover


# ---------------------------------------------------------------------------
# Phase-I feasibility
# ---------------------------------------------------------------------------


def _trace_column(problem: SdpProblem) -> np.ndarray:
    """Per-row inner product of the block coefficients with the identity."""
    col = np.zeros(problem.n_rows)
    for sl, n in zip(problem.block_slices(), problem.block_dims):
        idx = []
        pos = 0
        for i in range(n):
            idx.append(pos)
            pos += n - i
        coords = problem.constraints[:, sl]
        col += coords[:, idx].sum(axis=1)
    return col


def phase_one(problem: SdpProblem) -> SdpProblem:
    """The shifted problem: maximize t with every block shifted by ``-t I``."""
    tcol = _trace_column(problem)
    constraints = np.hstack([problem.constraints, tcol[:, None]])
    objective = np.zeros(problem.n_coords + 1)
    objective[-1] = 1.0
    return SdpProblem(problem.block_dims, problem.n_free + 1, objective,
                      constraints, problem.rhs)


def feasibility(problem: SdpProblem, *, feastol: float = 1e-8, gaptol: float = 1e-8,
                max_iter: int = 200) -> FeasibilityResult:
    """Decide feasibility of the constraints by the phase-I margin sign.

    Feasible iff the optimal shift ``t*`` satisfies ``t* >= -feastol``; the
    returned slack is ``t*`` itself.  An infeasible verdict reports
    ``certificate_gap = |t*|`` (the strictly separating margin).  Solver
    iteration limits surface as INDETERMINATE, never as a verdict.
    """
    shifted = phase_one(problem)
    sol = solve(shifted, feastol=feastol, gaptol=gaptol, max_iter=max_iter)
    if sol.status is SdpStatus.PRIMAL_INFEASIBLE:
        return FeasibilityResult(FeasStatus.INFEASIBLE, slack=-np.inf,
                                 certificate_gap=sol.certificate_gap, solution=sol)
    if sol.status is SdpStatus.DUAL_UNBOUNDED:
        blocks = [b.copy() for b in sol.blocks]
        return FeasibilityResult(FeasStatus.FEASIBLE, slack=np.inf, blocks=blocks,
                                 free=sol.free[:-1].copy(), solution=sol)
    if sol.status is not SdpStatus.OPTIMAL:
        return FeasibilityResult(FeasStatus.INDETERMINATE, slack=np.nan, solution=sol)
    t = float(sol.free[-1])
    blocks = [b + t * np.eye(b.shape[0]) for b in sol.blocks]
    free = sol.free[:-1].copy()
    if t >= -feastol:
        return FeasibilityResult(FeasStatus.FEASIBLE, slack=t, blocks=blocks,
                                 free=free, solution=sol)
    return FeasibilityResult(FeasStatus.INFEASIBLE, slack=t, blocks=blocks, free=free,
                             certificate_gap=abs(t), solution=sol)


# ---------------------------------------------------------------------------
# SDPA sparse export (debug surface for cross-checking against other solvers)
# ---------------------------------------------------------------------------


def to_sdpa(problem: SdpProblem) -> str:
    """Render the problem in SDPA sparse text (one line per nonzero).

    The maximization over blocks maps onto the SDPA dual; free scalars are
    split into a difference of two nonnegatives placed in a trailing
    diagonal block (declared with a negative dimension, as is customary).
    """
    lines = []
    nblocks = len(problem.block_dims) + (1 if problem.n_free else 0)
    lines.append(str(problem.n_rows))
    lines.append(str(nblocks))
    dims = [str(n) for n in problem.block_dims]
    if problem.n_free:
        dims.append(str(-2 * problem.n_free))
    lines.append(" ".join(dims))
    lines.append(" ".join(repr(float(v)) for v in problem.rhs))

    slices = problem.block_slices()

    def emit(matno: int, vec: np.ndarray):
        for bno, sl in enumerate(slices, start=1):
            matrix = smat(vec[sl])
            n = matrix.shape[0]
            for i in range(n):
                for j in range(i, n):
                    if matrix[i, j] != 0.0:
                        lines.append(f"{matno} {bno} {i + 1} {j + 1} {matrix[i, j]!r}")
        if problem.n_free:
            fblock = len(problem.block_dims) + 1
            coeffs = vec[problem.n_psd_coords:]
            for k, c in enumerate(coeffs):
                if c != 0.0:
                    lines.append(f"{matno} {fblock} {k + 1} {k + 1} {c!r}")
                    lines.append(f"{matno} {fblock} {problem.n_free + k + 1} "
                                 f"{problem.n_free + k + 1} {-c!r}")

    emit(0, problem.objective)
    for i in range(problem.n_rows):
        emit(i + 1, problem.constraints[i])
    return "\n".join(lines) + "\n"
