"""Sequential transportation-problem solvers used as oracles.

Provides the two classical starting heuristics (northwest corner, minimum
cost), spanning-tree basis bookkeeping, dual computation by propagation over
the tree, pivoting, the full transportation simplex, and an exhaustive
optimum enumerator for small instances.  Everything is exact integer
arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .tp import FlowSolution, TpInstance, check_feasible, objective


@dataclass
class BasisState:
    """A spanning-tree basis: n+m-1 basic cells, flows, and dual values.

    Nodes of the tree are sources 0..n-1 and destinations n..n+m-1; each
    basic cell (i, j) is the edge between node i and node n+j.  Duals satisfy
    u[i] + v[j] == c[i][j] on basic cells with u[0] fixed to zero.
    """

    basic: set[tuple[int, int]]
    x: list[list[int]]
    u: list[int] = field(default_factory=list)
    v: list[int] = field(default_factory=list)

    def copy(self) -> "BasisState":
        return BasisState(
            basic=set(self.basic),
            x=[row[:] for row in self.x],
            u=self.u[:],
            v=self.v[:],
        )


@dataclass
class PivotCycle:
    """The alternating cycle of one pivot step.

    ``cells`` starts at the entering cell and alternates +/- signs; ``theta``
    is the flow pushed around the cycle and ``leaving`` the basic cell driven
    to zero that exits the basis.
    """

    entering: tuple[int, int]
    cells: list[tuple[int, int]]
    theta: int
    leaving: tuple[int, int]


@dataclass
class SeqResult:
    """Outcome of a sequential simplex run."""

    solution: FlowSolution
    pivots: int
    feasible_pivots: int | None  # pivot count when penalty arcs first emptied
    feasible_value: int | None


def tree_adjacency(basic, n):
    """Node -> list of (neighbor node, cell) for the basic cell set."""
    adj = {}
    for (i, j) in basic:
        adj.setdefault(i, []).append((n + j, (i, j)))
        adj.setdefault(n + j, []).append((i, (i, j)))
    return adj


def is_spanning_tree(basic, n, m) -> bool:
    if len(basic) != n + m - 1:
        return False
    adj = tree_adjacency(basic, n)
    seen = {0}
    stack = [0]
    while stack:
        x = stack.pop()
        for y, _ in adj.get(x, ()):
            if y not in seen:
                seen.add(y)
                stack.append(y)
    return len(seen) == n + m


def validate_basis(inst: TpInstance, basis: BasisState, check_duals=True):
    """Raise ValueError unless the basis satisfies every structural invariant:
    tree shape, zero flow off the basis, exact conservation, and (optionally)
    dual consistency on basic cells."""
    n, m = inst.n, inst.m
    if not is_spanning_tree(basis.basic, n, m):
        raise ValueError("basic cells do not form a spanning tree")
    for i in range(n):
        for j in range(m):
            if basis.x[i][j] < 0:
                raise ValueError(f"negative flow at {(i, j)}")
            if basis.x[i][j] > 0 and (i, j) not in basis.basic:
                raise ValueError(f"positive flow on non-basic cell {(i, j)}")
    for i in range(n):
        if sum(basis.x[i]) != inst.b[i]:
            raise ValueError(f"row {i} conservation violated")
    for j in range(m):
        if sum(basis.x[i][j] for i in range(n)) != inst.d[j]:
            raise ValueError(f"column {j} conservation violated")
    if check_duals:
        for (i, j) in basis.basic:
            if basis.u[i] + basis.v[j] != inst.c[i][j]:
                raise ValueError(f"duals inconsistent on basic cell {(i, j)}")


def northwest_corner(inst: TpInstance) -> BasisState:
    """Initial basis by the northwest-corner sweep.

    Allocates min(remaining supply, remaining demand) walking from the top
    left corner; when a cell exhausts its row and column simultaneously
    before the end, the next cell in the row is added as a zero-flow basic
    cell to keep the basis at n+m-1 cells.
    """
    if not inst.is_balanced():
        raise ValueError("instance not balanced")
    n, m = inst.n, inst.m
    bp = inst.b[:]
    dp = inst.d[:]
    x = [[0] * m for _ in range(n)]
    basic = set()
    i = j = 0
    while True:
        delta = min(bp[i], dp[j])
        x[i][j] = delta
        basic.add((i, j))
        bp[i] -= delta
        dp[j] -= delta
        if i == n - 1 and j == m - 1:
            break
        if bp[i] == 0 and dp[j] == 0:
            # row and column exhausted together: add a zero-flow basic cell
            # (next in the row; below when already at the last column)
            if j + 1 < m:
                basic.add((i, j + 1))
            else:
                basic.add((i + 1, j))
        if bp[i] == 0 and i + 1 < n:
            i += 1
        if dp[j] == 0 and j + 1 < m:
            j += 1
    state = BasisState(basic=basic, x=x)
    compute_duals(inst, state)
    return state


def complete_to_tree(inst: TpInstance, x, basic) -> set[tuple[int, int]]:
    """Grow a (partial, acyclic) basic cell set to a spanning tree.

    Zero-flow cells are added cheapest first, lexicographic ties, skipping
    any cell that would close a cycle.
    """
    n, m = inst.n, inst.m
    parent = list(range(n + m))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    count = 0
    for (i, j) in basic:
        ra, rb = find(i), find(n + j)
        if ra == rb:
            raise ValueError("initial basic cells contain a cycle")
        parent[ra] = rb
        count += 1
    if count > n + m - 1:
        raise ValueError("too many basic cells")
    if count < n + m - 1:
        order = sorted(
            ((inst.c[i][j], i, j) for i in range(n) for j in range(m)
             if (i, j) not in basic),
        )
        basic = set(basic)
        for _, i, j in order:
            ra, rb = find(i), find(n + j)
            if ra != rb:
                parent[ra] = rb
                basic.add((i, j))
                count += 1
                if count == n + m - 1:
                    break
    return set(basic)


def minimum_cost_method(inst: TpInstance) -> BasisState:
    """Initial basis by repeatedly saturating the cheapest open cell.

    Ties break lexicographically on (i, j); degenerate runs are topped up
    with zero-flow cells to reach a spanning tree of n+m-1 cells.
    """
    if not inst.is_balanced():
        raise ValueError("instance not balanced")
    n, m = inst.n, inst.m
    bp = inst.b[:]
    dp = inst.d[:]
    x = [[0] * m for _ in range(n)]
    basic = set()
    for _, i, j in sorted((inst.c[i][j], i, j) for i in range(n) for j in range(m)):
        if bp[i] > 0 and dp[j] > 0:
            delta = min(bp[i], dp[j])
            x[i][j] = delta
            basic.add((i, j))
            bp[i] -= delta
            dp[j] -= delta
    basic = complete_to_tree(inst, x, basic)
    state = BasisState(basic=basic, x=x)
    compute_duals(inst, state)
    return state


def compute_duals(inst: TpInstance, basis: BasisState) -> tuple[list[int], list[int]]:
    """Assign duals by propagating u[0] = 0 over the basis tree.

    Every other value is forced by u[i] + v[j] == c[i][j] along tree edges.
    Raises ValueError when the basic set is not a spanning tree.
    """
    n, m = inst.n, inst.m
    if not is_spanning_tree(basis.basic, n, m):
        raise ValueError("basic set is disconnected or cyclic")
    adj = tree_adjacency(basis.basic, n)
    u = [None] * n
    v = [None] * m
    u[0] = 0
    stack = [0]
    while stack:
        node = stack.pop()
        for other, (i, j) in adj.get(node, ()):
            if other >= n:
                if v[other - n] is None:
                    v[other - n] = inst.c[i][j] - u[i]
                    stack.append(other)
            else:
                if u[other] is None:
                    u[other] = inst.c[i][j] - v[j]
                    stack.append(other)
    basis.u = u
    basis.v = v
    return u, v


def reduced_costs(inst: TpInstance, basis: BasisState) -> list[list[int]]:
    """Matrix of c[i][j] - u[i] - v[j]; exactly zero on basic cells.

    Raises ValueError when the stored duals are stale for the basic set.
    """
    u, v = basis.u, basis.v
    for (i, j) in basis.basic:
        if u[i] + v[j] != inst.c[i][j]:
            raise ValueError("stale duals for basic set")
    return [
        [inst.c[i][j] - u[i] - v[j] for j in range(inst.m)] for i in range(inst.n)
    ]


def find_cycle(basis: BasisState, entering: tuple[int, int], n: int):
    """Ordered cycle cells for an entering cell: the entering cell followed
    by the unique tree path from its destination back to its source."""
    i0, j0 = entering
    adj = tree_adjacency(basis.basic, n)
    start, goal = n + j0, i0
    prev = {start: None}
    stack = [start]
    while stack:
        node = stack.pop()
        if node == goal:
            break
        for other, cell in adj.get(node, ()):
            if other not in prev:
                prev[other] = (node, cell)
                stack.append(other)
    if goal not in prev:
        raise ValueError("entering cell endpoints not connected by basis")
    path = []
    node = goal
    while prev[node] is not None:
        node, cell = prev[node]
        path.append(cell)
    path.reverse()  # now runs from the destination side toward the source
    return [entering] + path


def pivot(inst: TpInstance, basis: BasisState, entering: tuple[int, int]):
    """Push flow around the cycle created by the entering cell.

    Returns the PivotCycle and the updated BasisState (duals recomputed).
    theta is the minimum flow over the minus-labelled cells; the leaving cell
    is the lexicographically smallest minus cell achieving it.
    """
    if entering in basis.basic:
        raise ValueError(f"entering cell {entering} already basic")
    i0, j0 = entering
    rc = inst.c[i0][j0] - basis.u[i0] - basis.v[j0]
    if rc >= 0:
        raise ValueError(f"entering cell {entering} has non-negative reduced cost")
    cells = find_cycle(basis, entering, inst.n)
    minus = cells[1::2]
    theta = min(basis.x[i][j] for (i, j) in minus)
    leaving = min((i, j) for (i, j) in minus if basis.x[i][j] == theta)
    for idx, (i, j) in enumerate(cells):
        if idx % 2 == 0:
            basis.x[i][j] += theta
        else:
            basis.x[i][j] -= theta
    basis.basic.remove(leaving)
    basis.basic.add(entering)
    compute_duals(inst, basis)
    return PivotCycle(entering=entering, cells=cells, theta=theta, leaving=leaving), basis


def _select_entering(rc, n, m, basic, bland=False):
    best = None
    best_val = 0
    for i in range(n):
        row = rc[i]
        for j in range(m):
            if row[j] < 0 and (i, j) not in basic:
                if bland:
                    return (i, j)
                if row[j] < best_val:
                    best_val = row[j]
                    best = (i, j)
    return best


def transportation_simplex(inst: TpInstance, init: BasisState, validate=True) -> SeqResult:
    """Run the primal simplex to optimality from an initial basis.

    Entering rule: most negative reduced cost, lexicographic tie-break; a
    watchdog switches to Bland's smallest-index rule if the pivot count
    exceeds 10*(n+m)*max(n,m) and aborts at three times that bound.  Tracks
    the first pivot at which the solution stops using penalty arcs.
    """
    basis = init.copy()
    if not basis.u or not basis.v:
        compute_duals(inst, basis)
    if validate:
        validate_basis(inst, basis)

    pivots = 0
    feasible_pivots = None
    feasible_value = None

    def note_feasible():
        nonlocal feasible_pivots, feasible_value
        if feasible_pivots is None and not any(
            basis.x[i][j] > 0 for (i, j) in inst.artificial_arcs
        ):
            feasible_pivots = pivots
            feasible_value = objective(inst, basis.x)

    note_feasible()
    limit = 10 * (inst.n + inst.m) * max(inst.n, inst.m)
    bland = False
    while True:
        rc = reduced_costs(inst, basis)
        entering = _select_entering(rc, inst.n, inst.m, basis.basic, bland)
        if entering is None:
            break
        pivot(inst, basis, entering)
        pivots += 1
        if validate:
            validate_basis(inst, basis)
        note_feasible()
        if pivots > limit:
            bland = True
        if pivots > 3 * limit:
            raise RuntimeError("simplex watchdog exceeded; instance may cycle")
    sol = check_feasible(inst, basis.x)
    return SeqResult(
        solution=sol,
        pivots=pivots,
        feasible_pivots=feasible_pivots,
        feasible_value=feasible_value,
    )


def _enumerate_optimum(inst: TpInstance):
    """Enumerate every spanning tree of the complete bipartite graph, solve
    each triangular flow system, and return the minimum objective over the
    feasible (non-negative) ones."""
    n, m = inst.n, inst.m
    c, b, d = inst.c, inst.b, inst.d
    N = n + m
    edges = [(i, j) for i in range(n) for j in range(m)]
    need = N - 1
    best = None

    def solve_tree(tree_edges):
        nonlocal best
        adj = [[] for _ in range(N)]
        deg = [0] * N
        for (i, j) in tree_edges:
            adj[i].append((n + j, i, j))
            adj[n + j].append((i, i, j))
            deg[i] += 1
            deg[n + j] += 1
        resid = b + d
        removed = [False] * N
        used = [False] * need
        cost = 0
        stack = [x for x in range(N) if deg[x] == 1]
        while stack:
            x = stack.pop()
            if removed[x]:
                continue
            removed[x] = True
            for idx, (y, i, j) in enumerate(adj[x]):
                if removed[y]:
                    continue
                f = resid[x]
                if f < 0:
                    return
                resid[y] -= f
                cost += c[i][j] * f
                deg[y] -= 1
                if deg[y] == 1:
                    stack.append(y)
                break
        if any(r < 0 for r in resid):
            return
        if best is None or cost < best:
            best = cost

    def find(a, par):
        while par[a] != a:
            par[a] = par[par[a]]
            a = par[a]
        return a

    chosen = []

    def rec(idx, count, par):
        if count == need:
            solve_tree(chosen)
            return
        if len(edges) - idx < need - count:
            return
        i, j = edges[idx]
        ra, rb = find(i, par), find(n + j, par)
        if ra != rb:
            par2 = par[:]
            par2[ra] = rb
            chosen.append((i, j))
            rec(idx + 1, count + 1, par2)
            chosen.pop()
        rec(idx + 1, count, par)

    rec(0, 0, list(range(N)))
    return best

    # resid solve note: the flow on a leaf's unique edge equals its residual;
    # negative residual means the tree's unique flow solution is infeasible


def _schedule_optimum(inst: TpInstance):
    """Minimum objective over all sequential saturation schedules.

    Every basic feasible solution arises from stripping tree leaves in some
    order, and every saturation schedule yields a basic feasible solution, so
    the minimum over schedules equals the enumerated-trees optimum; the
    recursion memoizes on the residual state.  Cross-validated against
    _enumerate_optimum in the test suite.
    """
    c = inst.c
    memo = {}

    def f(rows, cols):
        if len(rows) + len(cols) == 1:
            return 0
        key = (rows, cols)
        val = memo.get(key)
        if val is not None:
            return val
        best = None
        last_row = len(rows) == 1
        last_col = len(cols) == 1
        for ri, (i, bi) in enumerate(rows):
            ci = c[i]
            for cj, (j, dj) in enumerate(cols):
                if bi <= dj and (not last_row or last_col):
                    v = ci[j] * bi + f(rows[:ri] + rows[ri + 1:],
                                       cols[:cj] + ((j, dj - bi),) + cols[cj + 1:])
                    if best is None or v < best:
                        best = v
                if dj <= bi and (not last_col or last_row):
                    v = ci[j] * dj + f(rows[:ri] + ((i, bi - dj),) + rows[ri + 1:],
                                       cols[:cj] + cols[cj + 1:])
                    if best is None or v < best:
                        best = v
        memo[key] = best
        return best

    return f(
        tuple((i, inst.b[i]) for i in range(inst.n)),
        tuple((j, inst.d[j]) for j in range(inst.m)),
    )


def brute_force_optimum(inst: TpInstance) -> int:
    """Exact optimum of a small balanced instance by exhaustive search.

    Uses direct spanning-tree enumeration up to n+m == 8 and the equivalent
    memoized schedule search up to n+m == 10; larger instances are refused.
    """
    if inst.n + inst.m > 10:
        raise ValueError("instance too large for brute force (n+m must be <= 10)")
    if not inst.is_balanced():
        raise ValueError("instance not balanced")
    if inst.n + inst.m <= 8:
        return _enumerate_optimum(inst)
    return _schedule_optimum(inst)
