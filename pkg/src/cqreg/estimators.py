"""User-facing fit API for the six estimators and their support extraction.

Families: quantile (linear check loss) and expectile (asymmetric squared
loss); penalties: none, shrinkage (L1) or cardinality (L0); solve modes:
full constraint system or constraint generation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from itertools import combinations
from typing import Callable

import numpy as np

from .cuts import MST, SPANNING_PATH, ConstraintSet, solve_with_cuts
from .data import Dataset
from .model import (
    ALL_PAIRS,
    FitResult,
    L0Penalty,
    L1Penalty,
    OptProblem,
    add_l0,
    add_l1,
    build_cer,
    build_cqr,
    extract_fit,
)
from .solver import BnBConfig, Status, solve_lp, solve_mip, solve_qp

QUANTILE = "quantile"
EXPECTILE = "expectile"

SupportSet = frozenset


@dataclass(frozen=True)
class EstimatorSpec:
    """What to fit: family, level, penalty and how to solve it."""

    family: str
    level: float
    penalty: L1Penalty | L0Penalty | None = None
    solve: str = "full"  # "full" or "cuts"
    strategy: str = MST  # seed pairs for the cut loop
    tol: float = 0.01  # cut-loop separation tolerance

    def __post_init__(self) -> None:
        if self.family not in (QUANTILE, EXPECTILE):
            raise ValueError(f"family must be 'quantile' or 'expectile', got {self.family!r}")
        if not (np.isfinite(self.level) and 0.0 < self.level < 1.0):
            raise ValueError(f"level must lie in (0, 1), got {self.level}")
        if self.solve not in ("full", "cuts"):
            raise ValueError(f"solve must be 'full' or 'cuts', got {self.solve!r}")
        if self.strategy not in (MST, SPANNING_PATH):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.tol <= 0:
            raise ValueError("tol must be positive")


def make_builder(dataset: Dataset, spec: EstimatorSpec) -> Callable[[object], OptProblem]:
    """Closure mapping a constraint set to the spec's master problem."""
    if isinstance(spec.penalty, L0Penalty) and spec.penalty.k > dataset.d:
        raise ValueError(f"k={spec.penalty.k} exceeds d={dataset.d}")

    def builder(constraints) -> OptProblem:
        if spec.family == QUANTILE:
            problem = build_cqr(dataset, spec.level, constraints)
        else:
            problem = build_cer(dataset, spec.level, constraints)
        if isinstance(spec.penalty, L1Penalty):
            problem = add_l1(problem, spec.penalty)
        elif isinstance(spec.penalty, L0Penalty):
            problem = add_l0(problem, spec.penalty)
        return problem

    return builder


def fit(dataset: Dataset, spec: EstimatorSpec, bnb: BnBConfig | None = None) -> FitResult:
    """Fit the estimator; these problems are always feasible, so any
    infeasible status is an internal error and raises."""
    builder = make_builder(dataset, spec)
    if spec.solve == "cuts":
        result, _ = solve_with_cuts(
            builder, dataset, strategy=spec.strategy, tol=spec.tol, bnb=bnb
        )
        return result
    problem = builder(ALL_PAIRS)
    if problem.is_mip:
        sol = solve_mip(problem, bnb or BnBConfig())
    elif problem.has_quad:
        sol = solve_qp(problem)
    else:
        sol = solve_lp(problem)
    if sol.status is not Status.OPTIMAL:
        raise RuntimeError(f"solve ended with status {sol.status}")
    return extract_fit(problem, dataset, sol)


def support(fit_result: FitResult, threshold: float = 1e-6) -> frozenset:
    """Variables with some coefficient above the threshold; a cardinality fit
    additionally requires the selector to be on."""
    peak = fit_result.beta.max(axis=0)
    selected = peak > threshold
    if fit_result.z is not None:
        selected &= fit_result.z.astype(bool)
    return frozenset(int(j) for j in np.flatnonzero(selected))


def l0_oracle(dataset: Dataset, spec: EstimatorSpec, k: int) -> tuple[float, frozenset]:
    """Exhaustive-subset optimum of the cardinality-constrained problem.

    Solves the unpenalized problem restricted to every input subset of size
    <= k (columns removed, so the path is independent of the binary
    reformulation) and returns the best objective with its subset; ties go
    to the lexicographically smallest subset.
    """
    if spec.penalty is not None:
        raise ValueError("oracle spec must be penalty-free")
    d = dataset.d
    k = int(k)
    if k < 1:
        raise ValueError("k must be at least 1")
    k = min(k, d)
    if math.comb(d, k) > 10_000:
        raise ValueError(f"C({d}, {k}) exceeds the enumeration guard")
    subsets = sorted(
        subset for size in range(1, k + 1) for subset in combinations(range(d), size)
    )
    best_obj = np.inf
    best_subset: tuple[int, ...] = ()
    for subset in subsets:
        restricted = dataset.restrict(subset)
        result = fit(restricted, spec)
        if result.objective < best_obj - 1e-9:
            best_obj = result.objective
            best_subset = subset
    return float(best_obj), frozenset(best_subset)


def expectile_to_quantile(fit_result: FitResult, threshold: float = 1e-6) -> float:
    """Empirical quantile level of a fit: share of strictly negative residuals."""
    return float(np.count_nonzero(fit_result.eps_minus > threshold) / fit_result.n)


def returns_to_scale(fit_result: FitResult, threshold: float = 1e-6) -> list[str]:
    """Per-observation label from the intercept sign: negative intercepts mean
    increasing returns to scale, positive decreasing, near-zero constant."""
    labels = []
    for a in fit_result.alpha:
        if a < -threshold:
            labels.append("increasing")
        elif a > threshold:
            labels.append("decreasing")
        else:
            labels.append("constant")
    return labels


def anchor_big_m(dataset: Dataset, spec: EstimatorSpec, multiplier: float) -> float:
    """Coefficient cap from an unpenalized anchor fit at the same family and
    level: multiplier times the largest fitted coefficient (floored away from
    zero so the cap stays strictly positive on degenerate data)."""
    if multiplier <= 0:
        raise ValueError("multiplier must be positive")
    anchor = fit(dataset, replace(spec, penalty=None))
    return float(multiplier * max(anchor.beta.max(), 1e-6))
