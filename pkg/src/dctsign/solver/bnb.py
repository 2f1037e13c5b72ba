"""Best-bound branch and bound over binary variables."""

from __future__ import annotations

import heapq
import logging
import time

import numpy as np

from .result import SolveResult
from .simplex import BoundedSimplex, SolverTimeout

log = logging.getLogger("dctsign.solver")

INT_TOL = 1e-6
GAP_TOL = 1e-9


def solve_lp_builtin(model, time_limit=None):
    start = time.perf_counter()
    deadline = None if time_limit is None else start + time_limit
    simplex = BoundedSimplex(model.with_relaxation() if model.num_binary else model)
    try:
        out = simplex.solve(deadline=deadline)
    except SolverTimeout:
        return SolveResult("timeout-no-incumbent", np.inf, None,
                           _stats(0, simplex.iterations, start, "builtin"))
    return SolveResult(out.status, out.objective, out.x,
                       _stats(0, out.iterations, start, "builtin"))


def _stats(nodes, iterations, start, backend):
    return {"nodes": nodes, "iterations": iterations,
            "seconds": time.perf_counter() - start, "backend": backend}


def _snap(x, bins):
    x = x.copy()
    x[bins] = np.round(x[bins])
    return x


def solve_milp_builtin(model, time_limit=600.0, seed=0, log_nodes=False):
    """Exact MILP solve (within tolerances) unless ``time_limit`` expires.

    Nodes are explored best-bound first, ties broken by creation order;
    the branching variable is the most fractional binary, ties by lowest
    id.  ``seed`` is accepted for interface compatibility: the search
    consumes no randomness.
    """
    start = time.perf_counter()
    deadline = start + time_limit
    bins = np.nonzero(model.binary)[0]
    simplex = BoundedSimplex(model.with_relaxation())
    nodes = 0
    try:
        root = simplex.solve(deadline=deadline)
    except SolverTimeout:
        return SolveResult("timeout-no-incumbent", np.inf, None,
                           _stats(0, simplex.iterations, start, "builtin"))
    if root.status != "optimal":
        return SolveResult(root.status, np.inf, None, _stats(1, simplex.iterations, start, "builtin"))
    cols = np.array([simplex.internal_column(j) for j in bins], dtype=np.int64)
    base_lo, base_hi = simplex.lo.copy(), simplex.hi.copy()

    best_x, best_obj = None, np.inf

    def node_bounds(fix):
        lo, hi = base_lo.copy(), base_hi.copy()
        for c, v in fix.items():
            lo[c] = hi[c] = v
        return lo, hi

    def fractional(x):
        return np.abs(x[bins] - np.round(x[bins])) > INT_TOL

    def consider(out):
        nonlocal best_x, best_obj
        if out.status == "optimal" and not fractional(out.x).any() and out.objective < best_obj - GAP_TOL:
            best_x, best_obj = _snap(out.x, bins), out.objective
            return True
        return False

    timed_out = False
    try:
        if not consider(root) and len(bins):
            _round_and_repair(simplex, root, bins, cols, node_bounds, consider)
        heap = [(root.objective, 0, {}, root)]
        seq = 1
        while heap:
            if time.perf_counter() > deadline:
                timed_out = True
                break
            bound, _, fix, parent = heapq.heappop(heap)
            if bound >= best_obj - GAP_TOL:
                break
            if fix:
                lo, hi = node_bounds(fix)
                out = simplex.solve(lo, hi, parent.state, cutoff=best_obj, deadline=deadline)
            else:
                out = parent
            nodes += 1
            if log_nodes:
                log.info("node=%d bound=%.9g incumbent=%.9g t=%.3f", nodes, bound, best_obj,
                         time.perf_counter() - start)
            if out.status != "optimal" or out.objective >= best_obj - GAP_TOL:
                continue
            frac = fractional(out.x)
            if not frac.any():
                consider(out)
                continue
            vals = out.x[bins]
            dist = np.minimum(vals - np.floor(vals), np.ceil(vals) - vals)
            dist[~frac] = -1.0
            pick = int(np.argmax(dist))
            for value in (0.0, 1.0):
                child = dict(fix)
                child[int(cols[pick])] = value
                heapq.heappush(heap, (out.objective, seq, child, out))
                seq += 1
    except SolverTimeout:
        timed_out = True
    stats = _stats(nodes, simplex.iterations, start, "builtin")
    if timed_out:
        if best_x is None:
            return SolveResult("timeout-no-incumbent", np.inf, None, stats)
        return SolveResult("timeout-incumbent", best_obj, best_x, stats)
    if best_x is None:
        return SolveResult("infeasible", np.inf, None, stats)
    return SolveResult("optimal", best_obj, best_x, stats)


def _round_and_repair(simplex, root, bins, cols, node_bounds, consider):
    """Root heuristic: round the relaxed binaries, dive if that is infeasible."""
    x = root.x[bins]
    fix = {int(c): float(round(v)) for c, v in zip(cols, x)}
    lo, hi = node_bounds(fix)
    out = simplex.solve(lo, hi, root.state)
    if consider(out):
        return
    # dive: fix the most decided binary first, flipping when a side fails
    fix, cur = {}, root
    order = np.argsort(np.abs(x - 0.5))[::-1]
    for idx in order:
        c = int(cols[idx])
        v = float(cur.x[bins[idx]])
        for value in (float(round(v)), 1.0 - float(round(v))):
            trial = dict(fix)
            trial[c] = value
            lo, hi = node_bounds(trial)
            out = simplex.solve(lo, hi, cur.state)
            if out.status == "optimal":
                fix, cur = trial, out
                break
        else:
            return
    consider(cur)
