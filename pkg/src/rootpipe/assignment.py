"""Minimum-cost bipartite assignment (Hungarian method, shortest augmenting paths)."""

from __future__ import annotations

import numpy as np


def linear_sum_assignment(cost) -> tuple[np.ndarray, np.ndarray]:
    """Rows and columns of a minimum-cost assignment.

    Rectangular matrices are padded to square with a constant larger than
    every entry; padded pairs are dropped from the result, so exactly
    ``min(n_rows, n_cols)`` pairs are returned, sorted by row.
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise ValueError("cost matrix must be 2-D")
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost matrix must be finite")
    n_rows, n_cols = cost.shape
    if n_rows == 0 or n_cols == 0:
        return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
    n = max(n_rows, n_cols)
    pad = float(np.abs(cost).max()) + 1.0
    c = np.full((n, n), pad)
    c[:n_rows, :n_cols] = cost

    # 1-based potentials; column 0 is the virtual start of each augmenting path
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    owner = np.zeros(n + 1, dtype=int)  # owner[j]: row (1-based) assigned to column j, 0 if none
    way = np.zeros(n + 1, dtype=int)
    for i in range(1, n + 1):
        owner[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = owner[j0]
            free = ~used[1:]
            reduced = c[i0 - 1] - u[i0] - v[1:]
            better = free & (reduced < minv[1:])
            minv[1:][better] = reduced[better]
            way[1:][better] = j0
            masked = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(masked)) + 1
            delta = masked[j1 - 1]
            cols = np.flatnonzero(used)
            u[owner[cols]] += delta
            v[cols] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if owner[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            owner[j0] = owner[j1]
            j0 = j1

    rows, cols = owner[1:] - 1, np.arange(n)
    keep = (rows < n_rows) & (cols < n_cols)
    rows, cols = rows[keep], cols[keep]
    order = np.argsort(rows)
    return rows[order], cols[order]
