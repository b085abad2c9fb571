"""Branch-and-bound over the binary selection variables.

The integer variables are the d selectors z, so the tree has at most 2^d
leaves; each node solves an LP or diagonal-QP relaxation with tightened
z bounds.  Relaxation machinery (constraint matrices, QP scaling and KKT
factors) is built once and re-solved per node with different bounds.
After the root solve a round-up probe fixes every positive selector to 1;
when the cardinality row allows it this proves optimality in two solves,
otherwise it seeds the incumbent.  Children with z fixed to 1 are explored
first, so a greedy dive reaches an integral incumbent within d solves.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from ..model import OptProblem
from .base import BnBConfig, Solution, Status, node_limit
from .lp import solve_arrays, split_rows
from .qp import QpContext

_INT_TOL = 1e-6


@dataclass
class _Node:
    lower: np.ndarray
    upper: np.ndarray
    bound: float


class _Relaxation:
    """Solves the continuous relaxation under per-node bounds."""

    def __init__(self, problem: OptProblem):
        relaxed = OptProblem(
            problem.obj_linear,
            problem.obj_quad,
            problem.a,
            problem.sense,
            problem.rhs,
            problem.lower,
            problem.upper,
            np.zeros(problem.n_vars, dtype=bool),
            problem.var_names,
            problem.row_names,
            problem.layout,
        )
        self.quad = problem.has_quad
        if self.quad:
            self.ctx = QpContext(relaxed)
        else:
            self.parts = split_rows(relaxed)
            self.c = relaxed.obj_linear

    def solve(self, lower: np.ndarray, upper: np.ndarray) -> Solution:
        if self.quad:
            return self.ctx.solve(lower=lower, upper=upper)
        a_ub, b_ub, a_eq, b_eq = self.parts
        return solve_arrays(self.c, a_ub, b_ub, a_eq, b_eq, lower, upper)


def _pick_branch(zvals: np.ndarray, int_idx: np.ndarray, rule: str) -> int | None:
    frac = np.minimum(zvals - np.floor(zvals), np.ceil(zvals) - zvals)
    fractional = frac > _INT_TOL
    if not fractional.any():
        return None
    if rule == "lowest_index":
        return int(int_idx[np.flatnonzero(fractional)[0]])
    # Most fractional: closest to one half, ties by lowest index.
    cand = np.flatnonzero(fractional)
    return int(int_idx[cand[np.argmax(frac[cand])]])


def solve_mip(
    problem: OptProblem,
    cfg: BnBConfig = BnBConfig(),
    incumbent_hint: np.ndarray | None = None,
) -> Solution:
    """Prove optimality of a small-binary MIP within cfg.gap (deterministic)."""
    start = time.perf_counter()
    int_idx = np.flatnonzero(problem.integer)
    relax = _Relaxation(problem)
    lower, upper = problem.lower.astype(float).copy(), problem.upper.astype(float).copy()

    max_nodes = min(cfg.node_limit, node_limit())
    nodes = 0
    iters = 0
    best_x: np.ndarray | None = None
    best_obj = np.inf

    def node_solve(lo, up) -> Solution:
        nonlocal nodes, iters
        nodes += 1
        sol = relax.solve(lo, up)
        iters += sol.iterations
        return sol

    def try_fixed(zfix: np.ndarray) -> None:
        """Solve with z pinned to an integral point; update the incumbent."""
        nonlocal best_x, best_obj
        lo, up = lower.copy(), upper.copy()
        lo[int_idx] = zfix
        up[int_idx] = zfix
        sol = node_solve(lo, up)
        if sol.optimal and sol.objective < best_obj - 1e-12:
            x = sol.x.copy()
            x[int_idx] = zfix
            best_x, best_obj = x, sol.objective

    root = node_solve(lower, upper)
    if root.status is Status.INFEASIBLE:
        return Solution(Status.INFEASIBLE, None, np.nan, iters, nodes, time.perf_counter() - start)
    if root.status is Status.UNBOUNDED:
        return Solution(Status.UNBOUNDED, None, -np.inf, iters, nodes, time.perf_counter() - start)
    if int_idx.size == 0:
        return Solution(root.status, root.x, root.objective, iters, nodes, time.perf_counter() - start)

    if incumbent_hint is not None:
        try_fixed(np.rint(incumbent_hint).astype(float))

    zroot = root.x[int_idx]
    branch_j = _pick_branch(zroot, int_idx, cfg.branching)
    if branch_j is None:
        # Already integral: pin and certify.
        try_fixed(np.rint(zroot).astype(float))
        if best_obj <= root.objective + cfg.gap:
            return Solution(
                Status.OPTIMAL, best_x, best_obj, iters, nodes, time.perf_counter() - start
            )
    else:
        # Round-up probe: selecting every positive z is feasible whenever the
        # cardinality row allows it and proves optimality when the big-M rows
        # were already slack at the root.
        try_fixed((zroot > _INT_TOL).astype(float))
        if best_x is not None and best_obj <= root.objective + cfg.gap:
            return Solution(
                Status.OPTIMAL, best_x, best_obj, iters, nodes, time.perf_counter() - start
            )

    stack = [_Node(lower, upper, root.objective)]
    limited = False
    while stack:
        if nodes >= max_nodes:
            limited = True
            break
        node = stack.pop()
        if node.bound >= best_obj - cfg.gap:
            continue
        sol = node_solve(node.lower, node.upper)
        if not sol.optimal or sol.objective >= best_obj - cfg.gap:
            continue
        zvals = sol.x[int_idx]
        j = _pick_branch(zvals, int_idx, cfg.branching)
        if j is None:
            zfix = np.rint(zvals).astype(float)
            if np.array_equal(node.lower[int_idx], node.upper[int_idx]):
                if sol.objective < best_obj - 1e-12:
                    x = sol.x.copy()
                    x[int_idx] = zfix
                    best_x, best_obj = x, sol.objective
                continue
            try_fixed(zfix)
            if best_obj <= sol.objective + cfg.gap:
                continue
            # Pinning the near-integral selectors moved the optimum; split on
            # the first unfixed one so leaves carry exact bounds.
            unfixed = int_idx[node.lower[int_idx] < node.upper[int_idx]]
            j = int(unfixed[0])
        lo0, up0 = node.lower.copy(), node.upper.copy()
        up0[j] = 0.0
        lo1, up1 = node.lower.copy(), node.upper.copy()
        lo1[j] = 1.0
        # LIFO: push the exclude-child first so the include-child dives first.
        stack.append(_Node(lo0, up0, sol.objective))
        stack.append(_Node(lo1, up1, sol.objective))

    elapsed = time.perf_counter() - start
    if best_x is None:
        status = Status.ITERATION_LIMIT if limited else Status.INFEASIBLE
        return Solution(status, None, np.nan, iters, nodes, elapsed)
    status = Status.ITERATION_LIMIT if limited else Status.OPTIMAL
    return Solution(status, best_x, best_obj, iters, nodes, elapsed)
