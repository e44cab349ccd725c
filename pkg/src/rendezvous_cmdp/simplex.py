"""Sparse revised simplex for ``min c x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  x >= 0``.

The basis is kept as a sparse LU factorisation plus a product-form eta file
that is refactorised periodically.  Pricing is Dantzig (most negative reduced
cost, lowest index on ties); after a run of degenerate pivots the solver
switches to Bland's rule until progress resumes, which rules out cycling.
A caller that already knows a feasible basis (for MDPs, any deterministic
policy that meets the risk bound) can pass it and skip phase one.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

log = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
ITERATION_LIMIT = "iteration_limit"


class LpError(Exception):
    def __init__(self, status, message=""):
        super().__init__(message or status)
        self.status = status


@dataclass
class SparseLp:
    """Sparse LP in inequality/equality form with implicit ``x >= 0``."""

    c: np.ndarray
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    A_ub: sp.csr_matrix
    b_ub: np.ndarray
    var_names: list | None = None
    row_names: list | None = None
    ub_names: list | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = self.c.size
        self.A_eq = sp.csr_matrix(self.A_eq, shape=(len(self.b_eq), n)) if self.A_eq is not None \
            else sp.csr_matrix((0, n))
        self.A_ub = sp.csr_matrix(self.A_ub, shape=(len(self.b_ub), n)) if self.A_ub is not None \
            else sp.csr_matrix((0, n))
        self.b_eq = np.asarray(self.b_eq, dtype=float).reshape(-1)
        self.b_ub = np.asarray(self.b_ub, dtype=float).reshape(-1)
        for M in (self.A_eq, self.A_ub):
            M.sum_duplicates()
            M.eliminate_zeros()

    @property
    def n_vars(self) -> int:
        return self.c.size


@dataclass
class LpResult:
    status: str
    x: np.ndarray | None = None
    objective: float = float("nan")
    basis: np.ndarray | None = None    # column indices in the slack-augmented system
    iterations: int = 0
    duals: np.ndarray | None = None
    info: dict = field(default_factory=dict)


class _Basis:
    """LU of the basis matrix plus product-form updates."""

    def __init__(self, A_csc, cols, refactor_every):
        self.A = A_csc
        self.refactor_every = refactor_every
        self.factor(cols)

    def factor(self, cols):
        self.cols = np.asarray(cols)
        B = self.A[:, self.cols].tocsc()
        self.lu = splu(B, permc_spec="COLAMD", options={"SymmetricMode": False})
        self.etas = []   # (row, eta column)

    def ftran(self, a):
        x = self.lu.solve(a)
        for r, eta in self.etas:
            xr = x[r]
            if xr != 0.0:
                x += eta * xr
                x[r] = eta[r] * xr
        return x

    def btran(self, c):
        y = np.array(c, dtype=float)
        for r, eta in reversed(self.etas):
            y[r] = eta @ y
        return self.lu.solve(y, trans="T")

    def replace(self, r, d, q):
        eta = -d / d[r]
        eta[r] = 1.0 / d[r]
        self.etas.append((r, eta))
        self.cols = self.cols.copy()
        self.cols[r] = q
        if len(self.etas) >= self.refactor_every:
            self.factor(self.cols)


def _standard_form(lp: SparseLp):
    """Stack rows as ``[A_eq 0; A_ub I] z = b`` and return (A, b, c, n_slack)."""
    m_eq, m_ub = lp.A_eq.shape[0], lp.A_ub.shape[0]
    top = sp.hstack([lp.A_eq, sp.csr_matrix((m_eq, m_ub))])
    bot = sp.hstack([lp.A_ub, sp.identity(m_ub, format="csr")])
    A = sp.vstack([top, bot]).tocsc()
    b = np.concatenate([lp.b_eq, lp.b_ub])
    c = np.concatenate([lp.c, np.zeros(m_ub)])
    return A, b, c, m_ub


def solve_lp(lp: SparseLp, basis=None, max_iter: int = 200_000, tol: float = 1e-9,
             refactor_every: int = 64, stall_limit: int = 30) -> LpResult:
    """Solve ``lp`` to an optimal basic feasible solution.

    Parameters
    ----------
    basis : optional array of column indices (original variables ``0..n-1``,
        slack of inequality row ``i`` is ``n + i``) forming a feasible basis.
        If it is singular or infeasible the solver falls back to phase one.

    Statuses: ``optimal``, ``infeasible``, ``unbounded``, ``iteration_limit``.
    """
    A, b, c, m_ub = _standard_form(lp)
    m, n_std = A.shape
    n = lp.n_vars
    if m == 0:
        if (c < -tol).any():
            return LpResult(UNBOUNDED)
        return LpResult(OPTIMAL, np.zeros(n), 0.0, np.array([], dtype=int))

    core = _Simplex(A, b, tol, refactor_every, stall_limit, max_iter)
    start = None
    if basis is not None:
        start = core.try_basis(np.asarray(basis, dtype=np.int64))
        if start is None:
            log.info("supplied basis rejected, running phase one")
    if start is None:
        status, start = core.phase_one(c.size)
        if status != OPTIMAL:
            return LpResult(status, iterations=core.iterations)
    status = core.run(c, start)
    res = core.result(c, status, n)
    return res


class _Simplex:
    def __init__(self, A, b, tol, refactor_every, stall_limit, max_iter):
        self.A = A
        self.b = b
        self.m = A.shape[0]
        self.tol = tol
        self.refactor_every = refactor_every
        self.stall_limit = stall_limit
        self.max_iter = max_iter
        self.iterations = 0
        self.AT = A.T.tocsr()

    def try_basis(self, cols):
        if cols.size != self.m or np.unique(cols).size != self.m or cols.min() < 0 \
                or cols.max() >= self.A.shape[1]:
            return None
        try:
            fac = _Basis(self.A, cols, self.refactor_every)
        except RuntimeError:
            return None
        xb = fac.lu.solve(self.b)
        if not np.all(np.isfinite(xb)) or xb.min() < -1e-9:
            return None
        resid = self.A[:, cols] @ xb - self.b
        if np.abs(resid).max(initial=0.0) > 1e-8:
            return None
        return fac, np.maximum(xb, 0.0)

    def phase_one(self, n_cols):
        """Add one artificial per row; minimise their sum."""
        m = self.m
        sign = np.where(self.b < 0, -1.0, 1.0)
        A = self.A
        art = sp.diags(sign, format="csc")
        A1 = sp.hstack([A, art]).tocsc()
        self.A, self.AT = A1, A1.T.tocsr()
        n_orig = A.shape[1]
        cols = np.arange(n_orig, n_orig + m)
        c1 = np.concatenate([np.zeros(n_orig), np.ones(m)])
        fac = _Basis(A1, cols, self.refactor_every)
        xb = fac.lu.solve(self.b)
        status = self.run(c1, (fac, xb))
        fac, xb = self.state
        if status != OPTIMAL:
            self.A, self.AT = A, A.T.tocsr()
            return status, None
        infeas = float(c1[fac.cols] @ xb)
        if infeas > 1e-8 * max(1.0, np.abs(self.b).max()):
            self.A, self.AT = A, A.T.tocsr()
            return INFEASIBLE, None
        # pivot zero-level artificials out where possible
        for r in range(m):
            if fac.cols[r] < n_orig:
                continue
            e = np.zeros(m)
            e[r] = 1.0
            row = fac.btran(e) @ A   # row r of B^-1 A over original columns
            row = np.asarray(row).ravel()
            row[fac.cols[fac.cols < n_orig]] = 0.0
            cand = np.flatnonzero(np.abs(row) > 1e-7)
            if cand.size:
                q = int(cand[np.argmax(np.abs(row[cand]))])
                d = fac.ftran(A1[:, q].toarray().ravel())
                fac.replace(r, d, q)
                xb = xb - d * (xb[r] / d[r])
                xb[r] = 0.0
        # redundant rows keep a zero artificial; block it from moving by keeping it basic
        self.A, self.AT = A1, A1.T.tocsr()
        self.blocked = np.arange(n_orig, n_orig + m)
        self.n_real = n_orig
        fac.factor(fac.cols)
        return OPTIMAL, (fac, np.maximum(fac.lu.solve(self.b), 0.0))

    def run(self, c, start):
        fac, xb = start
        A, AT, tol = self.A, self.AT, self.tol
        n_all = A.shape[1]
        n_real = getattr(self, "n_real", n_all)
        c_full = np.zeros(n_all)
        c_full[:c.size] = c
        scale = max(1.0, float(np.abs(c).max(initial=0.0)))
        dtol = tol * scale
        in_basis = np.zeros(n_all, dtype=bool)
        in_basis[fac.cols] = True
        blocked = np.zeros(n_all, dtype=bool)
        if n_real < n_all and c.size <= n_real:
            blocked[n_real:] = True   # artificials never re-enter in phase two
        degenerate = 0
        bland = False
        while True:
            if self.iterations >= self.max_iter:
                self.state = (fac, xb)
                return ITERATION_LIMIT
            y = fac.btran(c_full[fac.cols])
            d = c_full - AT @ y
            d[in_basis] = 0.0
            d[blocked] = 0.0
            neg = np.flatnonzero(d < -dtol)
            if neg.size == 0:
                # confirm with a fresh factorisation before declaring optimality
                if fac.etas:
                    fac.factor(fac.cols)
                    xb = np.maximum(fac.lu.solve(self.b), 0.0)
                    y = fac.btran(c_full[fac.cols])
                    d = c_full - AT @ y
                    d[in_basis] = 0.0
                    d[blocked] = 0.0
                    if (d < -dtol).any():
                        continue
                self.state = (fac, xb)
                self.duals = y
                return OPTIMAL
            if bland:
                q = int(neg[0])
            else:
                q = int(neg[np.argmin(d[neg])])   # argmin returns the first, i.e. lowest index
            col = A[:, q].toarray().ravel()
            dcol = fac.ftran(col)
            pos = np.flatnonzero(dcol > tol)
            if pos.size == 0:
                self.state = (fac, xb)
                return UNBOUNDED
            ratios = xb[pos] / dcol[pos]
            theta = ratios.min()
            ties = pos[ratios <= theta + 1e-12 * max(1.0, theta)]
            if bland or ties.size == 1:
                r = int(ties[np.argmin(fac.cols[ties])])
            else:
                r = int(ties[np.argmax(dcol[ties])])
            theta = max(xb[r] / dcol[r], 0.0)
            xb = xb - theta * dcol
            xb[r] = theta
            np.maximum(xb, 0.0, out=xb)
            in_basis[fac.cols[r]] = False
            in_basis[q] = True
            fac.replace(r, dcol, q)
            if len(fac.etas) == 0:
                xb = np.maximum(fac.lu.solve(self.b), 0.0)
            self.iterations += 1
            if theta <= 1e-12:
                degenerate += 1
                if degenerate >= self.stall_limit:
                    bland = True
            else:
                degenerate = 0
                bland = False

    def result(self, c, status, n):
        fac, xb = self.state
        z = np.zeros(self.A.shape[1])
        z[fac.cols] = xb
        x = z[:n]
        res = LpResult(status, x, float(c[:n] @ x) if status == OPTIMAL else float("nan"),
                       fac.cols.copy(), self.iterations, getattr(self, "duals", None))
        res.info["slack"] = z[n:c.size]
        return res
