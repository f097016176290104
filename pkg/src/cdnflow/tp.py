"""Domain model for the balanced transportation problem and its CDN request
routing origin.

A routing instance (servers, contents, requests) reduces to a balanced
transportation problem: every server becomes a source, every request a
destination, missing server/content arcs get a prohibitive penalty cost, and
surplus outgoing bandwidth is absorbed by a zero-cost artificial destination.
All data is integer so that solver comparisons can assert exact equality.
"""

from __future__ import annotations

from dataclasses import dataclass, field


class Infeasible(Exception):
    """The instance admits no feasible routing (total demand exceeds capacity)."""


class FlowViolation(Exception):
    """A flow matrix breaks a conservation or sign constraint.

    Attributes carry the first violated constraint: ``kind`` is one of
    ``"row"``, ``"col"``, ``"neg"``, ``index`` the offending row/column (or
    cell for ``"neg"``), and ``residual`` the constraint residual.
    """

    def __init__(self, kind, index, residual):
        self.kind = kind
        self.index = index
        self.residual = residual
        super().__init__(f"{kind} constraint violated at {index}: residual {residual}")


@dataclass(frozen=True)
class RrspInstance:
    """A request-routing instance over a CDN.

    Servers and contents are identified by 0-based indices.  ``holdings[i]``
    is the set of contents available on server ``i``; ``requests`` are
    ``(home_server, content, demand)`` triples with at most one request per
    (server, content) pair; ``server_cost`` is the per-unit communication
    cost between servers, zero on the diagonal.
    """

    n_servers: int
    n_contents: int
    holdings: tuple[frozenset[int], ...]
    bandwidth: tuple[int, ...]
    requests: tuple[tuple[int, int, int], ...]
    server_cost: tuple[tuple[int, ...], ...]

    def validate(self):
        holders = holders_by_content(self)
        seen = set()
        for k, c, d in self.requests:
            if not 0 <= k < self.n_servers:
                raise ValueError(f"request home {k} out of range")
            if not 0 <= c < self.n_contents:
                raise ValueError(f"request content {c} out of range")
            if d < 0:
                raise ValueError(f"negative demand {d} for request ({k}, {c})")
            if not holders[c]:
                raise ValueError(f"content {c} has no holder")
            if (k, c) in seen:
                raise ValueError(f"duplicate request for ({k}, {c})")
            seen.add((k, c))
        for i in range(self.n_servers):
            if self.server_cost[i][i] != 0:
                raise ValueError(f"server_cost[{i}][{i}] must be 0")
            if self.bandwidth[i] < 0:
                raise ValueError(f"negative bandwidth on server {i}")
            for v in self.server_cost[i]:
                if v < 0:
                    raise ValueError("negative server cost")


def holders_by_content(rrsp: RrspInstance) -> list[set[int]]:
    out = [set() for _ in range(rrsp.n_contents)]
    for i in range(rrsp.n_servers):
        for c in rrsp.holdings[i]:
            out[c].add(i)
    return out


@dataclass
class TpInstance:
    """A balanced transportation problem with artificial-entity bookkeeping.

    ``c`` is the n x m integer cost matrix, ``b`` per-source capacities and
    ``d`` per-destination demands with sum(b) == sum(d).  ``artificial_arcs``
    are the penalty-cost cells added to complete the bipartite graph;
    ``artificial_dest`` is the index of the zero-cost balancing column when
    one was appended.  ``home`` optionally records, per destination, the
    server that owns the request (used by the distributed algorithms).
    """

    n: int
    m: int
    b: list[int]
    d: list[int]
    c: list[list[int]]
    artificial_dest: int | None = None
    artificial_arcs: set[tuple[int, int]] = field(default_factory=set)
    home: list[int] | None = None

    def is_balanced(self) -> bool:
        return sum(self.b) == sum(self.d)

    def column_homes(self) -> list[int]:
        """Owning server per destination; round-robin when not routing-derived."""
        if self.home is not None:
            return list(self.home)
        return [j % self.n for j in range(self.m)]

    def validate(self):
        if len(self.b) != self.n or len(self.d) != self.m:
            raise ValueError("b/d lengths do not match n/m")
        if len(self.c) != self.n or any(len(row) != self.m for row in self.c):
            raise ValueError("cost matrix shape mismatch")
        if any(v < 0 for v in self.b) or any(v < 0 for v in self.d):
            raise ValueError("negative capacity or demand")
        if any(v < 0 for row in self.c for v in row):
            raise ValueError("negative cost")
        if not self.is_balanced():
            raise ValueError("instance not balanced")


@dataclass
class FlowSolution:
    """A feasible flow with its cost and a penalty-arc usage flag."""

    x: list[list[int]]
    objective: int
    uses_artificial: bool


def big_cost(max_real_cost: int, total_demand: int) -> int:
    """Penalty cost strictly dominating any real-arc objective."""
    return (1 + max_real_cost) * max(1, total_demand)


def reduce_rrsp_to_tp(rrsp: RrspInstance) -> TpInstance:
    """Reduce a routing instance to a balanced transportation problem.

    Sources are the servers in id order; destinations are the requests in
    (home server, content) lexicographic order.  Arcs from servers lacking
    the requested content carry a prohibitive cost; excess capacity is
    absorbed by a zero-cost artificial destination.

    Raises Infeasible when total demand exceeds total bandwidth.
    """
    rrsp.validate()
    n = rrsp.n_servers
    reqs = sorted(rrsp.requests, key=lambda r: (r[0], r[1]))
    total_b = sum(rrsp.bandwidth)
    total_d = sum(d for _, _, d in reqs)
    if total_b < total_d:
        raise Infeasible(f"total demand {total_d} exceeds total bandwidth {total_b}")

    real_costs = [
        rrsp.server_cost[i][k]
        for i in range(n)
        for k, c, _ in reqs
        if c in rrsp.holdings[i]
    ]
    big = big_cost(max(real_costs, default=0), total_d)

    m = len(reqs)
    d = [dem for _, _, dem in reqs]
    home = [k for k, _, _ in reqs]
    c_mat = [[0] * m for _ in range(n)]
    artificial_arcs = set()
    for i in range(n):
        for j, (k, cont, _) in enumerate(reqs):
            if cont in rrsp.holdings[i]:
                c_mat[i][j] = rrsp.server_cost[i][k]
            else:
                c_mat[i][j] = big
                artificial_arcs.add((i, j))

    artificial_dest = None
    if total_b > total_d:
        artificial_dest = m
        for row in c_mat:
            row.append(0)
        d.append(total_b - total_d)
        home.append(0)  # smallest-id server owns the balancing column
        m += 1

    return TpInstance(
        n=n,
        m=m,
        b=list(rrsp.bandwidth),
        d=d,
        c=c_mat,
        artificial_dest=artificial_dest,
        artificial_arcs=artificial_arcs,
        home=home,
    )


def objective(inst: TpInstance, x: list[list[int]]) -> int:
    """Total cost of a flow matrix."""
    if len(x) != inst.n or any(len(row) != inst.m for row in x):
        raise ValueError("flow matrix shape mismatch")
    return sum(
        inst.c[i][j] * x[i][j] for i in range(inst.n) for j in range(inst.m) if x[i][j]
    )


def find_violation(inst: TpInstance, x: list[list[int]]):
    """First violated constraint of a flow matrix, or None if feasible.

    Checks non-negativity, then row sums against capacities, then column
    sums against demands; equality is exact integer equality.
    """
    if len(x) != inst.n or any(len(row) != inst.m for row in x):
        raise ValueError("flow matrix shape mismatch")
    for i in range(inst.n):
        for j in range(inst.m):
            if x[i][j] < 0:
                return ("neg", (i, j), x[i][j])
    for j in range(inst.m):
        r = sum(x[i][j] for i in range(inst.n)) - inst.d[j]
        if r != 0:
            return ("col", j, r)
    for i in range(inst.n):
        r = sum(x[i]) - inst.b[i]
        if r != 0:
            return ("row", i, r)
    return None


def uses_artificial_arcs(inst: TpInstance, x: list[list[int]]) -> bool:
    """True when any penalty arc carries positive flow.

    Flow into the artificial balancing destination is expected slack and does
    not count: only the prohibitive-cost arcs mark a not-truly-feasible
    routing.
    """
    return any(x[i][j] > 0 for (i, j) in inst.artificial_arcs)


def check_feasible(inst: TpInstance, x: list[list[int]]) -> FlowSolution:
    """Validate a flow matrix and package it as a FlowSolution.

    Raises FlowViolation carrying the first violated constraint index and its
    residual.
    """
    violation = find_violation(inst, x)
    if violation is not None:
        raise FlowViolation(*violation)
    return FlowSolution(
        x=[row[:] for row in x],
        objective=objective(inst, x),
        uses_artificial=uses_artificial_arcs(inst, x),
    )
