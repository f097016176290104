"""Distributed constructive heuristic for an initial routing.

Each server first serves its local requests from its own bandwidth, then
asks the closest holder of each remaining content with a Serve message;
holders grant what they can (Ack, possibly partial) or refuse (Nack), and
the requester walks down its cost-sorted candidate list until the demand is
placed.  When every real holder is exhausted the remainder lands on
penalty arcs, never lost.  A small capacity report to the lowest-id server
establishes the balancing-column demand when one exists, since that total
is not local knowledge.
"""

from __future__ import annotations

from .netsim import ACK, CONTROL, Kernel, NACK, Process, SERVE, Transcript
from .seq import BasisState, complete_to_tree, compute_duals
from .tp import FlowSolution, TpInstance, check_feasible


class InitServer(Process):
    """One server process of the constructive heuristic."""

    def __init__(self, inst: TpInstance, homes):
        self.inst = inst
        self.homes = homes
        self.residual = 0
        self.grants = {}  # column -> flow granted by this server
        self.pending = {}  # local column -> remaining demand
        self.cursor = {}  # local column -> index into its candidate list
        self.candidates = {}  # local column -> servers by (cost, id)
        self.col_serving = {}  # local column -> list of (server, flow)
        self.cap_reports = 0
        self.art_demand = None  # lowest-id server only

    def on_start(self):
        inst = self.inst
        me = self.pid
        self.residual = inst.b[me]
        if inst.artificial_dest is not None:
            # balancing demand needs global totals: report capacity and local
            # demand to the lowest-id server, which owns that column
            if me == 0:
                self.cap_reports = 1
                self._cap_acc = [inst.b[0], self._local_demand()]
                self._maybe_finish_caps()
            else:
                self.send(0, CONTROL, ("caps", inst.b[me], self._local_demand()))
        local = sorted(
            j for j in range(inst.m)
            if self.homes[j] == me and j != inst.artificial_dest
        )
        for j in local:
            self.pending[j] = inst.d[j]
            self.candidates[j] = sorted(range(inst.n), key=lambda s: (inst.c[s][j], s))
            self.cursor[j] = 0
            self.col_serving[j] = []
        for j in local:
            self._advance(j)

    def _local_demand(self):
        return sum(
            self.inst.d[j] for j in range(self.inst.m)
            if self.homes[j] == self.pid and j != self.inst.artificial_dest
        )

    def _maybe_finish_caps(self):
        if self.cap_reports == self.inst.n:
            total_b, total_d = self._cap_acc
            self.art_demand = total_b - total_d

    def _advance(self, j):
        """Work on local request j from its cursor position."""
        while self.pending[j] > 0:
            order = self.candidates[j]
            if self.cursor[j] >= len(order):
                raise AssertionError("candidate list exhausted with demand left")
            target = order[self.cursor[j]]
            if target == self.pid:
                granted = min(self.pending[j], self.residual)
                if granted > 0:
                    self.residual -= granted
                    self.grants[j] = self.grants.get(j, 0) + granted
                    self.pending[j] -= granted
                    self.col_serving[j].append((self.pid, granted))
                if self.pending[j] > 0:
                    self.cursor[j] += 1
                continue
            self.send(target, SERVE, (j, self.pending[j]))
            return  # wait for the Ack/Nack before trying anyone else

    def on_message(self, src, tag, payload):
        if tag == SERVE:
            j, amount = payload
            granted = min(amount, self.residual)
            if granted > 0:
                self.residual -= granted
                self.grants[j] = self.grants.get(j, 0) + granted
                self.send(src, ACK, (j, granted))
            else:
                self.send(src, NACK, (j,))
        elif tag == ACK:
            j, granted = payload
            self.pending[j] -= granted
            self.col_serving[j].append((src, granted))
            if self.pending[j] > 0:
                self.cursor[j] += 1
                self._advance(j)
        elif tag == NACK:
            (j,) = payload
            self.cursor[j] += 1
            self._advance(j)
        elif tag == CONTROL and payload[0] == "caps":
            _, b_val, d_val = payload
            self.cap_reports += 1
            self._cap_acc[0] += b_val
            self._cap_acc[1] += d_val
            self._maybe_finish_caps()
        else:
            raise AssertionError(f"unexpected message {tag}")


def dist_init_protocol(inst: TpInstance, delay="unit", seed=0,
                       kernel_kwargs=None) -> tuple[FlowSolution, Transcript]:
    """Run the heuristic on the simulation kernel and assemble its solution.

    The flow matrix is collected from the granting side of every server;
    leftover bandwidth lands in the balancing column when the instance has
    one.
    """
    if not inst.is_balanced():
        raise ValueError("instance not balanced")
    homes = inst.column_homes()
    kernel = Kernel(delay=delay, seed=seed, **(kernel_kwargs or {}))
    servers = [InitServer(inst, homes) for _ in range(inst.n)]
    for pid, proc in enumerate(servers):
        kernel.spawn(pid, proc)
    transcript = kernel.run_until_quiescent()

    x = [[0] * inst.m for _ in range(inst.n)]
    for i, proc in enumerate(servers):
        for j, flow in proc.grants.items():
            x[i][j] = flow
        if inst.artificial_dest is not None:
            x[i][inst.artificial_dest] = proc.residual
    return check_feasible(inst, x), transcript


def _find_positive_cycle(cells, n):
    """A cycle among positive-flow cells, as a cyclically ordered cell list,
    or None.  Deterministic: nodes and neighbors scan in ascending order."""
    adj = {}
    for (i, j) in cells:
        adj.setdefault(i, []).append((n + j, (i, j)))
        adj.setdefault(n + j, []).append((i, (i, j)))
    for node_list in adj.values():
        node_list.sort()

    parents = {}  # node -> (parent node, arrival cell)

    def ancestors(node):
        chain = {node}
        cur = node
        while parents[cur][0] is not None:
            cur = parents[cur][0]
            chain.add(cur)
        return chain

    for root in sorted(adj):
        if root in parents:
            continue
        parents[root] = (None, None)
        stack = [root]
        while stack:
            node = stack.pop()
            for other, cell in adj[node]:
                if cell == parents[node][1]:
                    continue  # arrival edge, not a cycle
                if other in parents:
                    # back edge: assemble meet -> node -> other -> meet
                    anc = ancestors(node)
                    up_other = []
                    cur = other
                    while cur not in anc:
                        p, via = parents[cur]
                        up_other.append(via)
                        cur = p
                    meet = cur
                    down_node = []
                    cur = node
                    while cur != meet:
                        p, via = parents[cur]
                        down_node.append(via)
                        cur = p
                    return list(reversed(down_node)) + [cell] + up_other
                parents[other] = (node, cell)
                stack.append(other)
    return None


def cancel_flow_cycles(inst: TpInstance, x):
    """Cancel cycles among positive cells, pushing along the cheaper
    direction, until the support is acyclic.  Mutates x in place."""
    n = inst.n
    while True:
        cells = [(i, j) for i in range(n) for j in range(inst.m) if x[i][j] > 0]
        cycle = _find_positive_cycle(cells, n)
        if cycle is None:
            return
        plus = cycle[0::2]
        minus = cycle[1::2]
        delta = sum(inst.c[i][j] for (i, j) in plus) - sum(
            inst.c[i][j] for (i, j) in minus
        )
        if delta > 0:
            plus, minus = minus, plus
        theta = min(x[i][j] for (i, j) in minus)
        for (i, j) in plus:
            x[i][j] += theta
        for (i, j) in minus:
            x[i][j] -= theta


def basis_completion(inst: TpInstance, x) -> BasisState:
    """Turn a feasible flow matrix into a spanning-tree basis.

    Positive cells are kept (after cancelling any flow cycles), then
    zero-flow cells are added cheapest-first without ever closing a cycle.
    """
    check_feasible(inst, x)
    x = [row[:] for row in x]
    cancel_flow_cycles(inst, x)
    positive = {(i, j) for i in range(inst.n) for j in range(inst.m) if x[i][j] > 0}
    basic = complete_to_tree(inst, x, positive)
    state = BasisState(basic=basic, x=x)
    compute_duals(inst, state)
    return state
