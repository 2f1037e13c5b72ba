"""Dense bounded-variable simplex (two-phase primal, plus dual re-optimization).

The model is brought to ``A x = b, l <= x <= u`` with every ``l`` finite:
variables bounded only above are negated, free variables are split, and
inequalities get slack columns.  Nonbasic variables sit at one of their
bounds.  After a first two-phase solve the final basis can be re-used as
a warm start for the same problem with tightened bounds, which the dual
simplex restores to optimality (this is what branch and bound relies on).
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

PIVOT_TOL = 1e-9
FEAS_TOL = 1e-9
COST_TOL = 1e-9
REFACTOR_EVERY = 100
DEGENERATE_SWITCH = 30


class SolverTimeout(Exception):
    pass


@dataclass
class BasisState:
    basis: np.ndarray
    at_upper: np.ndarray


@dataclass
class LPOutcome:
    status: str  # optimal | infeasible | unbounded | cutoff
    x: np.ndarray | None
    objective: float
    iterations: int
    state: BasisState | None = None


class BoundedSimplex:
    """Simplex solver bound to one :class:`~dctsign.lpmodel.LinearModel`."""

    def __init__(self, model):
        n = model.num_vars
        A = model.A.toarray()
        lb, ub, c = model.lb, model.ub, model.c
        cols, cost, lo, hi = [], [], [], []
        # (internal column, sign, offset) per original variable
        self._map = []
        for j in range(n):
            a = A[:, j]
            if np.isfinite(lb[j]):
                self._map.append([(len(cols), 1.0)])
                cols.append(a)
                cost.append(c[j])
                lo.append(lb[j])
                hi.append(ub[j])
            elif np.isfinite(ub[j]):
                self._map.append([(len(cols), -1.0)])
                cols.append(-a)
                cost.append(-c[j])
                lo.append(-ub[j])
                hi.append(np.inf)
            else:
                self._map.append([(len(cols), 1.0), (len(cols) + 1, -1.0)])
                cols.extend([a, -a])
                cost.extend([c[j], -c[j]])
                lo.extend([0.0, 0.0])
                hi.extend([np.inf, np.inf])
        m = A.shape[0]
        self.num_struct = len(cols)
        slack_of_row = np.full(m, -1)
        for i in range(m):
            if model.sense[i] != "=":
                e = np.zeros(m)
                e[i] = 1.0 if model.sense[i] == "<" else -1.0
                slack_of_row[i] = len(cols)
                cols.append(e)
                cost.append(0.0)
                lo.append(0.0)
                hi.append(np.inf)
        self.A = np.column_stack(cols) if cols else np.zeros((m, 0))
        self.b = np.asarray(model.rhs, dtype=float).copy()
        self.cost = np.array(cost, dtype=float)
        self.lo = np.array(lo, dtype=float)
        self.hi = np.array(hi, dtype=float)
        self.m = m
        self._slack_of_row = slack_of_row
        self._prepared = False
        self.iterations = 0

    # ------------------------------------------------------------------
    def internal_column(self, j):
        """Internal column of original variable ``j`` (must have finite lb)."""
        (col, sign), = self._map[j]
        if sign != 1.0:
            raise ValueError("variable has no finite lower bound")
        return col

    def original_values(self, x):
        out = np.empty(len(self._map))
        for j, parts in enumerate(self._map):
            out[j] = sum(sign * x[col] for col, sign in parts)
        return out

    # ------------------------------------------------------------------
    def solve(self, lo=None, hi=None, state=None, cutoff=np.inf, deadline=None):
        """Solve with optional bound arrays (internal columns) and warm start."""
        if not self._prepared:
            return self._two_phase(deadline)
        lo = self.lo if lo is None else lo
        hi = self.hi if hi is None else hi
        if np.any(lo > hi + FEAS_TOL):
            return LPOutcome("infeasible", None, np.inf, 0)
        run = _Run(self.A, self.b, self.cost, lo, hi, deadline)
        run.load(state.basis, state.at_upper)
        status = run.dual(cutoff)
        if status == "optimal":
            status = run.primal()
        self.iterations += run.iterations
        return self._outcome(run, status)

    def _outcome(self, run, status):
        if status != "optimal":
            return LPOutcome(status, None, np.inf, run.iterations)
        x = run.values()
        xo = self.original_values(x)
        return LPOutcome("optimal", xo, float(self.cost @ x), run.iterations,
                         BasisState(run.basis.copy(), run.at_upper.copy()))

    def _two_phase(self, deadline):
        m = self.m
        A, lo, hi = self.A, self.lo, self.hi
        if np.any(lo > hi + FEAS_TOL):
            self._prepared = True
            return LPOutcome("infeasible", None, np.inf, 0)
        ncol = A.shape[1]
        x0 = lo.copy()
        resid = self.b - A @ x0
        basis = np.empty(m, dtype=np.int64)
        art_cols = []
        for i in range(m):
            s = self._slack_of_row[i]
            if s >= 0 and resid[i] * A[i, s] >= 0:
                basis[i] = s
            else:
                e = np.zeros(m)
                e[i] = 1.0 if resid[i] >= 0 else -1.0
                basis[i] = ncol + len(art_cols)
                art_cols.append(e)
        n_art = len(art_cols)
        if n_art:
            A1 = np.hstack([A, np.column_stack(art_cols)])
        else:
            A1 = A
        lo1 = np.concatenate([lo, np.zeros(n_art)])
        hi1 = np.concatenate([hi, np.full(n_art, np.inf)])
        cost1 = np.concatenate([np.zeros(ncol), np.ones(n_art)])
        run = _Run(A1, self.b, cost1, lo1, hi1, deadline)
        run.load(basis, np.zeros(A1.shape[1], dtype=bool))
        iters = 0
        if n_art:
            status = run.primal()
            iters += run.iterations
            if status != "optimal":
                raise RuntimeError("phase 1 cannot be unbounded")
            x = run.values()
            if x[ncol:].sum() > 1e-7 * max(1.0, np.abs(self.b).max(initial=0.0)):
                self._prepared = True
                self.iterations += iters
                return LPOutcome("infeasible", None, np.inf, iters)
            # artificials leave for good: fix them at zero, drop nonbasic ones
            basic_art = sorted(set(int(v) for v in run.basis if v >= ncol))
            keep = list(range(ncol)) + basic_art
            remap = {old: new for new, old in enumerate(keep)}
            self.A = A1[:, keep]
            self.lo = np.concatenate([lo, np.zeros(len(basic_art))])
            self.hi = np.concatenate([hi, np.zeros(len(basic_art))])
            self.cost = np.concatenate([self.cost, np.zeros(len(basic_art))])
            basis = np.array([remap[int(v)] for v in run.basis])
            at_upper = run.at_upper[keep]
        else:
            at_upper = np.zeros(ncol, dtype=bool)
        self._prepared = True
        run = _Run(self.A, self.b, self.cost, self.lo, self.hi, deadline)
        run.load(basis, at_upper)
        status = run.primal()
        iters += run.iterations
        self.iterations += iters
        out = self._outcome(run, status)
        out.iterations = iters
        return out


class _Run:
    """One simplex run over a dense tableau ``T = B^-1 A``."""

    def __init__(self, A, b, cost, lo, hi, deadline):
        self.A, self.b, self.cost = A, b, cost
        self.lo, self.hi = lo, hi
        self.deadline = deadline
        self.iterations = 0
        self.m, self.n = A.shape
        self.fixed = (hi - lo) <= FEAS_TOL

    def load(self, basis, at_upper):
        self.basis = np.array(basis, dtype=np.int64)
        self.at_upper = np.array(at_upper, dtype=bool)
        # nonbasic at an infinite upper bound cannot happen; fall back to lower
        self.at_upper &= np.isfinite(self.hi)
        self.refactor()

    def refactor(self):
        if self.m:
            B = sp.csc_matrix(self.A[:, self.basis])
            self.is_basic = np.zeros(self.n, dtype=bool)
            self.is_basic[self.basis] = True
            nonbasic = np.flatnonzero(~self.is_basic)
            try:
                lu = splu(B)
                # basic columns of B^-1 A are unit vectors; solve only the rest
                self.T = np.zeros((self.m, self.n))
                self.T[:, nonbasic] = lu.solve(self.A[:, nonbasic])
                self.T[np.arange(self.m), self.basis] = 1.0
                self.beta = lu.solve(self.b)
            except RuntimeError:
                raise np.linalg.LinAlgError("singular basis") from None
        else:
            self.T = np.zeros((0, self.n))
            self.beta = np.zeros(0)
            self.is_basic = np.zeros(self.n, dtype=bool)
        self.d = self.cost - self.cost[self.basis] @ self.T
        self.d[self.basis] = 0.0
        self._since_refactor = 0
        self._update_x()

    def _update_x(self):
        xn = np.where(self.at_upper, self.hi, self.lo)
        xn[self.is_basic] = 0.0
        self.xn = xn
        self.xB = self.beta - self.T @ xn

    def values(self):
        x = np.where(self.at_upper, self.hi, self.lo).astype(float)
        x[self.basis] = self.xB
        return x

    def objective(self):
        return float(self.cost @ self.values())

    def _tick(self):
        self.iterations += 1
        if self.deadline is not None and self.iterations % 20 == 0:
            if time.perf_counter() > self.deadline:
                raise SolverTimeout

    def _pivot(self, r, q, leave_upper, step):
        """Basis change: ``q`` enters at row ``r`` after moving by ``step``."""
        T = self.T
        leaving = self.basis[r]
        col = T[:, q].copy()
        entering_value = (self.hi[q] if self.at_upper[q] else self.lo[q]) + step
        self.xB -= step * col
        piv = col[r]
        T[r] /= piv
        self.beta[r] /= piv
        col[r] = 0.0
        rows = np.nonzero(col)[0]
        if rows.size:
            # the pivot row is very sparse on these models; touch only its support
            cols = np.nonzero(T[r])[0]
            T[np.ix_(rows, cols)] -= np.outer(col[rows], T[r, cols])
            self.beta[rows] -= col[rows] * self.beta[r]
        self.d -= self.d[q] * T[r]
        self.basis[r] = q
        self.is_basic[q] = True
        self.is_basic[leaving] = False
        self.at_upper[q] = False
        self.at_upper[leaving] = leave_upper
        self.d[self.basis] = 0.0
        self.xB[r] = entering_value
        self._since_refactor += 1
        if self._since_refactor >= REFACTOR_EVERY:
            self.refactor()
        else:
            xn_q = 0.0
            self.xn[q] = xn_q
            self.xn[leaving] = self.hi[leaving] if leave_upper else self.lo[leaving]

    def primal(self):
        """Primal simplex from a primal feasible basis."""
        bland = False
        degenerate = 0
        lo_b, hi_b = None, None
        while True:
            self._tick()
            d = self.d
            movable = ~self.is_basic & ~self.fixed
            elig = movable & ((~self.at_upper & (d < -COST_TOL)) | (self.at_upper & (d > COST_TOL)))
            cand = np.nonzero(elig)[0]
            if cand.size == 0:
                return "optimal"
            q = cand[0] if bland else cand[np.argmax(np.abs(d[cand]))]
            sigma = -1.0 if self.at_upper[q] else 1.0
            alpha = sigma * self.T[:, q]
            lo_b = self.lo[self.basis]
            hi_b = self.hi[self.basis]
            t_rows = np.full(self.m, np.inf)
            dec = alpha > PIVOT_TOL
            inc = alpha < -PIVOT_TOL
            t_rows[dec] = (self.xB[dec] - lo_b[dec]) / alpha[dec]
            fin = inc & np.isfinite(hi_b)
            t_rows[fin] = (hi_b[fin] - self.xB[fin]) / -alpha[fin]
            t_rows = np.maximum(t_rows, 0.0)
            t_flip = self.hi[q] - self.lo[q]
            t_min = t_rows.min(initial=np.inf)
            if not np.isfinite(t_min) and not np.isfinite(t_flip):
                return "unbounded"
            if t_flip <= t_min:
                self.xB -= sigma * t_flip * self.T[:, q]
                self.at_upper[q] = not self.at_upper[q]
                self.xn[q] = self.hi[q] if self.at_upper[q] else self.lo[q]
                degenerate = 0
                bland = False
                continue
            ties = np.nonzero(t_rows <= t_min + 1e-12)[0]
            if bland:
                r = ties[np.argmin(self.basis[ties])]
            else:
                r = ties[np.argmax(np.abs(alpha[ties]))]
            leave_upper = bool(alpha[r] < 0)
            if t_min <= 1e-12:
                degenerate += 1
                if degenerate >= DEGENERATE_SWITCH:
                    bland = True
            else:
                degenerate = 0
                bland = False
            self._pivot(r, q, leave_upper, sigma * t_min)

    def dual(self, cutoff=np.inf):
        """Dual simplex from a dual feasible basis (e.g. after bound changes)."""
        while True:
            self._tick()
            lo_b = self.lo[self.basis]
            hi_b = self.hi[self.basis]
            below = lo_b - self.xB
            above = self.xB - hi_b
            infeas = np.maximum(below, above)
            r = int(np.argmax(infeas)) if self.m else 0
            if not self.m or infeas[r] <= FEAS_TOL:
                return "optimal"
            if self.objective() >= cutoff:
                return "cutoff"
            row = self.T[r]
            movable = ~self.is_basic & ~self.fixed
            # sign of the change of x_j (at lower: +, at upper: -)
            sigma = np.where(self.at_upper, -1.0, 1.0)
            eff = sigma * row
            if below[r] > above[r]:
                # basic must increase: need sigma * alpha < 0
                cand = movable & (eff < -PIVOT_TOL)
                leave_upper = False
            else:
                cand = movable & (eff > PIVOT_TOL)
                leave_upper = True
            idx = np.nonzero(cand)[0]
            if idx.size == 0:
                return "infeasible"
            ratios = np.abs(self.d[idx]) / np.abs(row[idx])
            best = ratios.min()
            ties = idx[ratios <= best + 1e-12]
            q = ties[np.argmax(np.abs(row[ties]))]
            target = hi_b[r] if leave_upper else lo_b[r]
            self._pivot(r, q, leave_upper, (self.xB[r] - target) / row[q])
