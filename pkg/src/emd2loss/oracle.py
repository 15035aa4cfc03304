"""Exact discrete optimal transport by the transportation simplex.

Used as the reference against which every closed-form EMD shortcut in this
package is checked, so the code favours plain bookkeeping over speed: the basis
is an explicit spanning tree of ``m + n - 1`` cells, potentials come from a
tree walk, and both entering and leaving cells are picked by Bland's rule.
"""

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError, NumericalError

MAX_SIZE = 64


@dataclass
class TransportProblem:
    supply: np.ndarray
    demand: np.ndarray
    cost: np.ndarray

    def __post_init__(self):
        self.supply = np.asarray(self.supply, dtype=np.float64)
        self.demand = np.asarray(self.demand, dtype=np.float64)
        self.cost = np.asarray(self.cost, dtype=np.float64)
        m, n = self.supply.size, self.demand.size
        if self.supply.ndim != 1 or self.demand.ndim != 1 or m == 0 or n == 0:
            raise InvalidInputError("supply and demand must be non-empty vectors")
        if self.cost.shape != (m, n):
            raise InvalidInputError(f"cost has shape {self.cost.shape}, expected ({m}, {n})")
        if max(m, n) > MAX_SIZE:
            raise InvalidInputError(f"oracle handles at most {MAX_SIZE} bins per side")
        for name, arr in (("supply", self.supply), ("demand", self.demand), ("cost", self.cost)):
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise InvalidInputError(f"{name} must be finite and non-negative")
        if self.supply.sum() <= 0 and self.demand.sum() <= 0:
            raise InvalidInputError("supply and demand are both empty")


@dataclass
class TransportPlan:
    flow: np.ndarray
    total_cost: float
    u: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    basis: list = field(repr=False)
    iterations: int = 0


def _northwest_corner(a, b):
    m, n = a.size, b.size
    ra, rb = a.copy(), b.copy()
    X = np.zeros((m, n))
    basis = []
    i = j = 0
    while True:
        x = min(ra[i], rb[j])
        X[i, j] = x
        basis.append((i, j))
        ra[i] -= x
        rb[j] -= x
        if i == m - 1 and j == n - 1:
            break
        if i == m - 1:
            j += 1
        elif j == n - 1 or ra[i] <= rb[j]:
            i += 1
        else:
            j += 1
    return X, basis


def _adjacency(basis, m, n):
    # nodes 0..m-1 are rows, m..m+n-1 are columns
    adj = [[] for _ in range(m + n)]
    for i, j in basis:
        adj[i].append(m + j)
        adj[m + j].append(i)
    return adj


def _potentials(cost, basis, m, n):
    adj = _adjacency(basis, m, n)
    pot = np.full(m + n, np.nan)
    pot[0] = 0.0
    queue = deque([0])
    while queue:
        node = queue.popleft()
        for nb in adj[node]:
            if np.isnan(pot[nb]):
                if node < m:
                    pot[nb] = cost[node, nb - m] - pot[node]
                else:
                    pot[nb] = cost[nb, node - m] - pot[node]
                queue.append(nb)
    if np.any(np.isnan(pot)):
        raise NumericalError("basis is not a spanning tree")
    return pot[:m], pot[m:]


def _tree_path(basis, m, n, start, goal):
    """Cells on the unique tree path between two nodes, ordered from ``start``."""
    adj = _adjacency(basis, m, n)
    parent = {start: None}
    queue = deque([start])
    while queue:
        node = queue.popleft()
        if node == goal:
            break
        for nb in adj[node]:
            if nb not in parent:
                parent[nb] = node
                queue.append(nb)
    cells = []
    node = goal
    while parent[node] is not None:
        prev = parent[node]
        r, c = (prev, node - m) if prev < m else (node, prev - m)
        cells.append((r, c))
        node = prev
    cells.reverse()
    return cells


def _balance(supply, demand, cost):
    excess = supply.sum() - demand.sum()
    if excess > 0:
        return supply, np.append(demand, excess), np.hstack([cost, np.zeros((supply.size, 1))])
    if excess < 0:
        return np.append(supply, -excess), demand, np.vstack([cost, np.zeros((1, demand.size))])
    return supply, demand, cost


def solve_transport(problem, tol=1e-12, max_iter=None):
    """Minimum-cost plan for ``problem``.

    Unequal totals are handled with one zero-cost slack row or column, so the
    returned flow moves exactly min(total supply, total demand).
    """
    if not isinstance(problem, TransportProblem):
        problem = TransportProblem(*problem)
    m0, n0 = problem.supply.size, problem.demand.size
    a, b, cost = _balance(problem.supply, problem.demand, problem.cost)
    m, n = a.size, b.size
    X, basis = _northwest_corner(a, b)
    thresh = tol * max(1.0, float(np.max(cost)))
    if max_iter is None:
        max_iter = 50 * m * n + 1000

    for it in range(max_iter + 1):
        u, v = _potentials(cost, basis, m, n)
        reduced = cost - u[:, None] - v[None, :]
        neg = np.flatnonzero(reduced.ravel() < -thresh)
        if neg.size == 0:
            break
        if it == max_iter:
            raise NumericalError(f"transportation simplex did not terminate in {max_iter} pivots")
        ie, je = divmod(int(neg[0]), n)

        # path from column je back to row ie; signs alternate -, +, -, ... starting at je
        path = _tree_path(basis, m, n, m + je, ie)
        minus = path[0::2]
        plus = path[1::2]
        theta = min(X[c] for c in minus)
        leaving = min(c for c in minus if X[c] == theta)

        X[ie, je] += theta
        for c in plus:
            X[c] += theta
        for c in minus:
            X[c] -= theta
        X[leaving] = 0.0
        basis.remove(leaving)
        basis.append((ie, je))

    flow = X[:m0, :n0].copy()
    total = float(np.sum(problem.cost * flow))
    return TransportPlan(flow, total, u[:m0].copy(), v[:n0].copy(),
                         [c for c in basis if c[0] < m0 and c[1] < n0], it)


def emd_exact(p, t, D):
    """Minimum transport cost divided by the total flow."""
    problem = TransportProblem(p, t, np.asarray(getattr(D, "entries", D)))
    moved = min(problem.supply.sum(), problem.demand.sum())
    if moved <= 0:
        raise InvalidInputError("EMD is undefined when one side carries no mass")
    return solve_transport(problem).total_cost / moved


def check_plan(problem, plan, atol=1e-9):
    """Return a list of violated transport constraints (empty if the plan is valid)."""
    F = plan.flow
    problems = []
    if np.any(F < -atol):
        problems.append("negative flow")
    if np.any(F.sum(axis=1) > problem.supply + atol):
        problems.append("row sum exceeds supply")
    if np.any(F.sum(axis=0) > problem.demand + atol):
        problems.append("column sum exceeds demand")
    if abs(F.sum() - min(problem.supply.sum(), problem.demand.sum())) > atol:
        problems.append("total flow differs from min(total supply, total demand)")
    if abs(plan.total_cost - float(np.sum(problem.cost * F))) > atol:
        problems.append("total_cost inconsistent with flow")
    return problems
