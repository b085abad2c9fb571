"""Fixed-format MPS export so external solvers can cross-check any model."""

from __future__ import annotations

import numpy as np

from ..model import OptProblem


def _num(value: float) -> str:
    return f"{value:.12g}"


def _entry(col: str, row: str, value: float) -> str:
    return f"    {col:<10}{row:<10}{_num(value)}"


def export_mps(problem: OptProblem, name: str = "CQREG") -> str:
    """Serialize a problem as fixed-format MPS text.

    Columns appear in variable order (round-trips the model layout), binary
    columns are bracketed by INTORG/INTEND markers, and a diagonal QMATRIX
    section carries the quadratic objective (MPS convention 0.5 x'Qx, so the
    diagonal entries are twice the squared-term coefficients).
    """
    lines = [f"NAME          {name}", "ROWS", " N  OBJ"]
    for sense, row in zip(problem.sense, problem.row_names):
        lines.append(f" {sense}  {row}")

    lines.append("COLUMNS")
    a_csc = problem.a.tocsc()
    in_int = False
    marker = 0
    for j, col in enumerate(problem.var_names):
        if problem.integer[j] and not in_int:
            marker += 1
            lines.append(f"    MARKER{marker:<4}              'MARKER'                 'INTORG'")
            in_int = True
        elif not problem.integer[j] and in_int:
            marker += 1
            lines.append(f"    MARKER{marker:<4}              'MARKER'                 'INTEND'")
            in_int = False
        if problem.obj_linear[j] != 0.0:
            lines.append(_entry(col, "OBJ", problem.obj_linear[j]))
        start, stop = a_csc.indptr[j], a_csc.indptr[j + 1]
        order = np.argsort(a_csc.indices[start:stop])
        for k in order:
            r = a_csc.indices[start + k]
            lines.append(_entry(col, problem.row_names[r], a_csc.data[start + k]))
    if in_int:
        marker += 1
        lines.append(f"    MARKER{marker:<4}              'MARKER'                 'INTEND'")

    lines.append("RHS")
    for row, value in zip(problem.row_names, problem.rhs):
        if value != 0.0:
            lines.append(_entry("RHS1", row, value))

    lines.append("BOUNDS")
    for j, col in enumerate(problem.var_names):
        lo, up = problem.lower[j], problem.upper[j]
        if lo == -np.inf and up == np.inf:
            lines.append(f" FR BND1      {col}")
            continue
        if lo == -np.inf:
            lines.append(f" MI BND1      {col}")
        elif lo != 0.0:
            lines.append(f" LO BND1      {col:<10}{_num(lo)}")
        if up != np.inf:
            lines.append(f" UP BND1      {col:<10}{_num(up)}")

    if problem.obj_quad is not None and np.any(problem.obj_quad != 0.0):
        lines.append("QMATRIX")
        for j, col in enumerate(problem.var_names):
            if problem.obj_quad[j] != 0.0:
                lines.append(_entry(col, col, 2.0 * problem.obj_quad[j]))

    lines.append("ENDATA")
    return "\n".join(lines) + "\n"
