"""Exact 1-Wasserstein distances between finite distributions.

Two independent routes are kept deliberately separate so they can check each
other: the dual transportation problem is solved by a hand-written dense
simplex (exact at the tiny supports used here), and the primal potential LP
goes through scipy's HiGHS solver. For deterministic transition rows the
distance collapses to a ground-metric lookup, which callers should prefer.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy.optimize import linprog

_ENTER_EPS = 1e-12


@dataclasses.dataclass
class TransportPlan:
    """Optimal coupling over the full (undropped) support grid."""

    lam: np.ndarray
    objective: float


def _check_distribution(p, name: str) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1:
        raise ValueError(f"{name} must be a vector, got shape {p.shape}")
    if np.any(p < 0):
        raise ValueError(f"{name} has a negative entry")
    if abs(p.sum() - 1.0) > 1e-12:
        raise ValueError(f"{name} sums to {p.sum()!r}, expected 1")
    return p


def _northwest_corner(supply, demand):
    """Initial basic feasible solution with exactly m+n-1 basis cells."""
    m, n = len(supply), len(demand)
    alloc = np.zeros((m, n))
    basis = []
    s = supply.copy()
    d = demand.copy()
    i = j = 0
    for _ in range(m + n - 1):
        q = min(s[i], d[j])
        alloc[i, j] = q
        basis.append((i, j))
        s[i] -= q
        d[j] -= q
        if i == m - 1 and j == n - 1:
            break
        if (s[i] <= d[j] and i < m - 1) or j == n - 1:
            i += 1
        else:
            j += 1
    return alloc, basis


def _duals_from_basis(cost, basis, m, n):
    # The basis is a spanning tree of the bipartite row/col graph, so fixing
    # u[0] = 0 determines every potential by propagation.
    u = np.full(m, np.nan)
    v = np.full(n, np.nan)
    row_adj = [[] for _ in range(m)]
    col_adj = [[] for _ in range(n)]
    for (i, j) in basis:
        row_adj[i].append(j)
        col_adj[j].append(i)
    u[0] = 0.0
    stack = [(True, 0)]
    while stack:
        is_row, k = stack.pop()
        if is_row:
            for j in row_adj[k]:
                if np.isnan(v[j]):
                    v[j] = cost[k, j] - u[k]
                    stack.append((False, j))
        else:
            for i in col_adj[k]:
                if np.isnan(u[i]):
                    u[i] = cost[i, k] - v[k]
                    stack.append((True, i))
    return u, v


def _tree_path(basis, start_row, end_col):
    """Vertex path from row node start_row to col node end_col in the basis
    tree; returned as the list of cells along the path."""
    adj = {}
    for (i, j) in basis:
        adj.setdefault(("r", i), []).append(("c", j))
        adj.setdefault(("c", j), []).append(("r", i))
    target = ("c", end_col)
    parent = {("r", start_row): None}
    stack = [("r", start_row)]
    while stack:
        node = stack.pop()
        if node == target:
            break
        for nxt in adj.get(node, []):
            if nxt not in parent:
                parent[nxt] = node
                stack.append(nxt)
    path_nodes = [target]
    while parent[path_nodes[-1]] is not None:
        path_nodes.append(parent[path_nodes[-1]])
    cells = []
    for a, b in zip(path_nodes, path_nodes[1:]):
        if a[0] == "r":
            cells.append((a[1], b[1]))
        else:
            cells.append((b[1], a[1]))
    return cells


def _transportation_simplex(supply, demand, cost):
    m, n = len(supply), len(demand)
    alloc, basis = _northwest_corner(supply, demand)
    while True:
        u, v = _duals_from_basis(cost, basis, m, n)
        reduced = cost - u[:, None] - v[None, :]
        basis_set = set(basis)
        entering = None
        # Bland-style fixed scan order prevents cycling under degeneracy.
        for i in range(m):
            for j in range(n):
                if (i, j) not in basis_set and reduced[i, j] < -_ENTER_EPS:
                    entering = (i, j)
                    break
            if entering:
                break
        if entering is None:
            return alloc, basis
        cycle = [entering] + _tree_path(basis, entering[0], entering[1])
        minus_cells = cycle[1::2]
        theta = min(alloc[c] for c in minus_cells)
        leaving = next(c for c in minus_cells if alloc[c] == theta)
        for k, cell in enumerate(cycle):
            alloc[cell] += theta if k % 2 == 0 else -theta
        alloc[leaving] = 0.0
        basis[basis.index(leaving)] = entering


def wasserstein_dual(x, y, cost) -> TransportPlan:
    """Optimal transport plan between x and y under the given cost matrix.

    Zero-probability entries are dropped before solving (they would make the
    simplex basis degenerate from the start); the returned plan is re-indexed
    to the full support, so its row sums equal x and column sums equal y.
    """
    x = _check_distribution(x, "x")
    y = _check_distribution(y, "y")
    cost = np.asarray(cost, dtype=np.float64)
    if x.shape[0] != y.shape[0]:
        raise ValueError(
            f"support sizes differ: x has {x.shape[0]}, y has {y.shape[0]}")
    if cost.shape != (x.shape[0], x.shape[0]):
        raise ValueError(
            f"cost shape {cost.shape} does not match support size {x.shape[0]}")
    rows = np.flatnonzero(x > 0)
    cols = np.flatnonzero(y > 0)
    sub = cost[np.ix_(rows, cols)]
    alloc, _ = _transportation_simplex(x[rows], y[cols], sub)
    lam = np.zeros_like(cost)
    lam[np.ix_(rows, cols)] = alloc
    return TransportPlan(lam=lam, objective=float((alloc * sub).sum()))


def wasserstein_primal(x, y, cost) -> float:
    """Potential-form LP: maximize sum (x-y) u subject to
    u_s - u_t <= cost[s, t] for every ordered pair, u inside a box.

    The unit box is valid for 1-bounded costs; for larger costs the box is
    widened to [0, max_cost * n], which cannot cut off an optimum because the
    pair constraints already bound the spread of u by max_cost.
    """
    x = _check_distribution(x, "x")
    y = _check_distribution(y, "y")
    cost = np.asarray(cost, dtype=np.float64)
    n = x.shape[0]
    if y.shape[0] != n:
        raise ValueError(
            f"support sizes differ: x has {n}, y has {y.shape[0]}")
    if cost.shape != (n, n):
        raise ValueError(
            f"cost shape {cost.shape} does not match support size {n}")
    max_cost = float(cost.max()) if cost.size else 0.0
    upper = 1.0 if max_cost <= 1.0 else max_cost * n
    rows = []
    b_ub = []
    for s in range(n):
        for t in range(n):
            if s == t:
                continue
            row = np.zeros(n)
            row[s] = 1.0
            row[t] = -1.0
            rows.append(row)
            b_ub.append(cost[s, t])
    res = linprog(-(x - y), A_ub=np.array(rows), b_ub=np.array(b_ub),
                  bounds=[(0.0, upper)] * n, method="highs")
    if not res.success:
        raise RuntimeError(f"primal LP failed: {res.message}")
    return float(-res.fun)


def wasserstein_deterministic(d: np.ndarray, s_next: int, t_next: int) -> float:
    """Distance between two Dirac rows is a ground-metric lookup, no LP."""
    return float(d[s_next, t_next])
