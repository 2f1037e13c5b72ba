"""LP/MILP solving behind one interface.

``builtin`` is the self-contained dense simplex + branch and bound and is
the reference implementation.  ``highs`` delegates to SciPy's HiGHS
bindings and is meant for image-scale models that a dense tableau cannot
hold.  ``auto`` picks ``builtin`` while the dense tableau stays small.
"""

from __future__ import annotations

import os
import time

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .bnb import solve_lp_builtin, solve_milp_builtin
from .result import SolveResult

__all__ = ["SolveResult", "solve_lp", "solve_milp", "choose_backend", "BACKENDS",
           "DEFAULT_TIME_LIMIT"]

BACKENDS = ("auto", "builtin", "highs")
DEFAULT_TIME_LIMIT = 600.0
# rows * columns of the dense tableau above which "auto" switches to HiGHS
AUTO_DENSE_LIMIT = 1_500_000


def choose_backend(model, backend="auto"):
    if backend not in BACKENDS:
        raise ValueError(f"unknown solver backend {backend!r}; choose from {BACKENDS}")
    if backend != "auto":
        return backend
    ncols = model.num_vars + int((model.sense != "=").sum())
    return "builtin" if model.num_constraints * ncols <= AUTO_DENSE_LIMIT else "highs"


def _log_enabled(log):
    return os.environ.get("SBR_SOLVER_LOG") == "1" if log is None else log


def solve_lp(model, backend="auto", time_limit=None):
    """Solve ``model`` with any binaries relaxed to ``[0, 1]``."""
    if choose_backend(model, backend) == "builtin":
        return solve_lp_builtin(model, time_limit)
    relaxed = model.with_relaxation()
    if choose_backend(model, backend) == "highs" and relaxed.num_constraints:
        return _solve_highs_lp(relaxed, time_limit)
    return _solve_highs(relaxed, time_limit)


def solve_milp(model, time_limit=DEFAULT_TIME_LIMIT, seed=0, backend="auto", log=None):
    if time_limit is None or time_limit <= 0:
        raise ValueError("time_limit must be positive")
    if choose_backend(model, backend) == "builtin":
        return solve_milp_builtin(model, time_limit, seed, log_nodes=_log_enabled(log))
    return _solve_highs(model, time_limit, seed, _log_enabled(log))


def _solve_highs_lp(model, time_limit=None):
    # HiGHS' interior point code (with crossover) is several times faster than
    # its simplex on the large, highly degenerate total-variation LPs
    start = time.perf_counter()
    eq, ge, le = model.sense == "=", model.sense == ">", model.sense == "<"
    a_ub = sp.vstack([model.A[le], -model.A[ge]]).tocsr()
    b_ub = np.concatenate([model.rhs[le], -model.rhs[ge]])
    options = {} if time_limit is None else {"time_limit": float(time_limit)}
    res = linprog(model.c, A_ub=a_ub if a_ub.shape[0] else None, b_ub=b_ub if a_ub.shape[0] else None,
                  A_eq=model.A[eq] if eq.any() else None, b_eq=model.rhs[eq] if eq.any() else None,
                  bounds=np.column_stack([model.lb, model.ub]), method="highs-ipm", options=options)
    stats = {"nodes": 0, "iterations": int(getattr(res, "nit", 0) or 0),
             "seconds": time.perf_counter() - start, "backend": "highs"}
    if res.status == 0:
        x = np.asarray(res.x, dtype=float)
        return SolveResult("optimal", float(model.c @ x), x, stats)
    if res.status == 1:
        return SolveResult("timeout-no-incumbent", np.inf, None, stats)
    if res.status == 2:
        return SolveResult("infeasible", np.inf, None, stats)
    if res.status == 3:
        return SolveResult("unbounded", -np.inf, None, stats)
    # status 4: numerical trouble; the simplex path is slower but sturdier
    return _solve_highs(model, time_limit)


def _solve_highs(model, time_limit=None, seed=0, log=False):
    start = time.perf_counter()
    lo, hi = model.row_bounds()
    constraints = [LinearConstraint(model.A, lo, hi)] if model.num_constraints else []
    options = {"disp": bool(log), "presolve": True}
    if time_limit is not None:
        options["time_limit"] = float(time_limit)
    if model.num_binary:
        options["mip_rel_gap"] = 1e-9
    res = milp(model.c, integrality=model.binary.astype(int), bounds=Bounds(model.lb, model.ub),
               constraints=constraints, options=options)
    if res.status == 4 and "infeasible or unbounded" in res.message.lower():
        # presolve cannot tell the two apart; the plain solver can
        options["presolve"] = False
        res = milp(model.c, integrality=model.binary.astype(int),
                   bounds=Bounds(model.lb, model.ub), constraints=constraints, options=options)
    stats = {"nodes": int(getattr(res, "mip_node_count", 0) or 0), "iterations": 0,
             "seconds": time.perf_counter() - start, "backend": "highs"}
    x = None if res.x is None else np.asarray(res.x, dtype=float)
    if x is not None and model.num_binary:
        x = x.copy()
        x[model.binary] = np.round(x[model.binary])
    if res.status == 0:
        return SolveResult("optimal", float(model.c @ x), x, stats)
    if res.status == 1:
        if x is None:
            return SolveResult("timeout-no-incumbent", np.inf, None, stats)
        return SolveResult("timeout-incumbent", float(model.c @ x), x, stats)
    if res.status == 2:
        return SolveResult("infeasible", np.inf, None, stats)
    if res.status == 3:
        return SolveResult("unbounded", -np.inf, None, stats)
    raise RuntimeError(f"HiGHS failed: {res.message}")
