"""Distributed transportation simplex over the simulation kernel.

Servers hold the basis as mirrored tree links: each server knows its own row
cells and, for the requests it is home to, the full column.  The lowest-id
server coordinates epochs:

  1. duals flow over the basis tree (Varv toward a request's home, Varu
     toward a co-serving server), and every computed request dual is synced
     to all servers, with acknowledgements, so each can price its own row;
  2. every server proposes its most negative reduced-cost edge; cycle walks
     claim the tree cells they traverse, and when two walks touch a common
     cell the better (more negative reduced cost, then lower initiator id)
     one evicts the other, which is cancelled back to its initiator and
     retries in a later epoch;
  3. surviving walks re-validate their claims, then push theta around their
     cycle; claims persist to the end of the epoch, so any cycle whose
     reduced cost a concurrent pivot staled necessarily crosses a claimed
     cell and dies rather than apply;
  4. each applied pivot re-derives only the duals in the subtree cut off by
     its leaving edge, as a commuting delta flood seeded through the
     entering cell.

The epoch ends with a minimum-reduced-cost convergecast to the coordinator;
a non-negative global minimum stops the run.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .netsim import (
    CANCEL,
    CONTROL,
    CYCLE,
    Kernel,
    Process,
    REDUCED_COST,
    RunStats,
    Transcript,
    UPDATE,
    VARU,
    VARV,
)
from .seq import BasisState
from .tp import FlowSolution, TpInstance, check_feasible


@dataclass
class AppliedPivot:
    epoch: int
    initiator: int
    entering: tuple[int, int]
    leaving: tuple[int, int]
    cells: list[tuple[int, int]]
    rc: int
    theta: int


@dataclass
class DistTsResult:
    solution: FlowSolution
    stats: RunStats
    transcript: Transcript
    u: list[int]
    v: list[int]
    basis: set[tuple[int, int]]
    applied: list[AppliedPivot] = field(default_factory=list)
    cancelled: int = 0


def _sign(idx):
    # cycle cells alternate starting + at the entering cell
    if idx == 0:
        return 1
    return -1 if (idx - 1) % 2 == 0 else 1


class TsServer(Process):
    """One server process of the distributed simplex."""

    def __init__(self, inst: TpInstance, homes, row_flows, col_flows, max_rounds):
        self.inst = inst
        self.homes = homes
        self.n = inst.n
        self.max_rounds = max_rounds
        # mirrored basis links
        self.row_links = dict(row_flows)  # j -> flow on basic cell (me, j)
        self.col_links = {j: dict(cols) for j, cols in col_flows.items()}
        # duals and tree orientation (parent = the cell that priced the value)
        self.u = None
        self.u_parent = None
        self.v = {j: None for j in self.col_links}
        self.v_parent = {j: None for j in self.col_links}
        self.all_v = {}
        # epoch-local state
        self.epoch = 0
        self.claims = {}  # cell -> (epoch, rc, initiator, role, path prefix)
        self.parked = {}  # climbing tokens waiting at the dual root
        self.pending_trims = {}
        self.status = "idle"
        self.resolution_status = None
        self.commit_received = False
        self.reported_pivot = False
        self.pending_pivot = None
        # flood bookkeeping: (flood key, token) -> context
        self.flood_wait = {}
        # coordinator state (used by the lowest id only)
        self.minrc_reports = {}
        self.resolutions = {}
        self.pivot_reports = {}
        self.rebuild_done = 0
        self.stats_total_pivots = 0
        self.stats_rounds = 0
        self.stats_cancelled = 0
        self.applied_pivots = []
        self.feasible = None

    # ---- identity and plumbing ---------------------------------------------

    def host_of(self, node):
        return node if node < self.n else self.homes[node - self.n]

    def _dispatch(self, dst, tag, payload):
        """Deliver locally without an envelope when dst is this server."""
        if dst == self.pid:
            self.on_message(self.pid, tag, payload)
        else:
            self.send(dst, tag, payload)

    def _broadcast(self, payload):
        for dst in range(self.n):
            self._dispatch(dst, CONTROL, payload)

    def _report_to_root(self, payload):
        self._dispatch(0, CONTROL, payload)

    # ---- startup -------------------------------------------------------------

    def on_start(self):
        if self.pid == 0:
            # initial dual solution tree: u[0] := 0, flood the whole basis
            self._flood_start(
                key=("init",), mode="abs", dv=0, du=0, node=0,
                arrival_cell=None, sender_val=None, forbidden=None, echo_to=None,
            )

    # ---- message dispatch ------------------------------------------------------

    def on_message(self, src, tag, payload):
        kind = payload[0]
        if tag in (VARV, VARU) and kind == "flood":
            self._flood_visit(payload[1])
        elif tag == CONTROL and kind == "vsync":
            _, key, j, value = payload
            self.all_v[j] = value
            self._dispatch(src, CONTROL, ("vack", key, ("v", j, self.pid)))
        elif tag == CONTROL and kind in ("vack", "fecho"):
            self._flood_child_done(payload[1], payload[2])
        elif tag == REDUCED_COST and kind == "rc_kick":
            self._start_walk(payload[1], payload[2], payload[3])
        elif tag == CYCLE and kind == "walk":
            self._ascend_arrive(payload[1])
        elif tag == CYCLE and kind == "ready":
            self._cycle_ready(payload[1], payload[2], payload[3], payload[4])
        elif tag == CANCEL and kind == "trim":
            self._trim_parked(payload[1], payload[2], payload[3])
        elif tag == CYCLE and kind == "validate":
            self._validate_step(payload[1])
        elif tag == UPDATE and kind == "update":
            self._update_step(payload[1])
        elif tag == CANCEL and kind == "chase":
            self._chase_step(payload[1])
        elif tag == CANCEL and kind == "cancelled_notify":
            self._walk_cancelled(payload[1])
        elif tag == CONTROL:
            self._control(src, payload)
        else:
            raise AssertionError(f"unexpected message {tag} {payload}")

    # ---- dual floods: initial build and post-pivot rebuilds ---------------------

    def _flood_start(self, key, mode, dv, du, node, arrival_cell, sender_val,
                     forbidden, echo_to):
        state = {
            "key": key, "mode": mode, "dv": dv, "du": du, "node": node,
            "arrival_cell": arrival_cell, "sender_val": sender_val,
            "forbidden": forbidden, "echo_to": echo_to,
        }
        if self.host_of(node) == self.pid:
            self._flood_visit(state)
        else:
            tag = VARV if node >= self.n else VARU
            self.send(self.host_of(node), tag, ("flood", state))

    def _flood_visit(self, state):
        """Apply the flood at its entry node and every locally hosted
        descendant; one Varv/Varu per boundary-crossing tree edge, one synced
        value per visited request."""
        key = state["key"]
        ctx = {
            "pending": 0,
            "echo_to": state["echo_to"],
            "entry": state["node"],
            "done": False,
        }
        stack = [(state["node"], state["arrival_cell"], state["sender_val"])]
        while stack:
            node, acell, sender_val = stack.pop()
            links = self._apply_flood_value(node, acell, sender_val, state, key, ctx)
            children = sorted(
                (other, cell) for cell, other in links
                if cell != acell and cell != state["forbidden"]
            )
            for other, cell in children:
                if self.host_of(other) == self.pid:
                    stack.append((other, cell, None))
                else:
                    val = self.u if node < self.n else self.v[node - self.n]
                    child = dict(
                        state, node=other, arrival_cell=cell, sender_val=val,
                        echo_to=self.pid,
                    )
                    tag = VARV if other >= self.n else VARU
                    self.flood_wait[(key, ("n", other))] = ctx
                    ctx["pending"] += 1
                    self.send(self.host_of(other), tag, ("flood", child))
        if ctx["pending"] == 0:
            self._flood_context_done(key, ctx)

    def _apply_flood_value(self, node, acell, sender_val, state, key, ctx):
        """Set (abs) or shift (delta) the dual at one node, reorient its
        parent pointer, and return its tree links as (cell, other) pairs."""
        if node < self.n:
            assert node == self.pid
            if state["mode"] == "abs":
                if acell is None:
                    self.u = 0
                else:
                    i, j = acell
                    v_j = sender_val if sender_val is not None else self.v[j]
                    self.u = self.inst.c[i][j] - v_j
            else:
                self.u += state["du"]
            self.u_parent = acell
            return [((node, j), self.n + j) for j in self.row_links]
        j = node - self.n
        if state["mode"] == "abs":
            i, _ = acell
            u_i = sender_val if sender_val is not None else self.u
            self.v[j] = self.inst.c[i][j] - u_i
        else:
            self.v[j] += state["dv"]
        self.v_parent[j] = acell
        self.all_v[j] = self.v[j]
        # row pricing needs every request dual everywhere; sync with acks so
        # the flood's completion implies fresh duals at all servers
        for other in range(self.n):
            if other != self.pid:
                self.flood_wait[(key, ("v", j, other))] = ctx
                ctx["pending"] += 1
                self.send(other, CONTROL, ("vsync", key, j, self.v[j]))
        return [((i, j), i) for i in self.col_links[j]]

    def _flood_child_done(self, key, token):
        ctx = self.flood_wait.pop((key, token))
        ctx["pending"] -= 1
        if ctx["pending"] == 0:
            self._flood_context_done(key, ctx)

    def _flood_context_done(self, key, ctx):
        assert not ctx["done"]
        ctx["done"] = True
        if ctx["echo_to"] is None:
            self._flood_complete(key)
        else:
            self._dispatch(ctx["echo_to"], CONTROL, ("fecho", key, ("n", ctx["entry"])))

    def _flood_complete(self, key):
        if key == ("init",):
            assert self.pid == 0
            self._start_pricing()
        else:
            # completes wherever the flood was seeded; the coordinator only
            # counts one completion per applied pivot
            _, epoch, _initiator = key
            self._report_to_root(("rebuild_done", epoch))

    # ---- pricing and epoch control ------------------------------------------

    def _start_pricing(self):
        assert self.pid == 0
        self.epoch += 1
        self.minrc_reports = {}
        self._broadcast(("price", self.epoch))

    def _my_min_rc(self):
        best = None
        best_j = None
        for j in range(self.inst.m):
            if j in self.row_links:
                continue
            rc = self.inst.c[self.pid][j] - self.u - self.all_v[j]
            if rc < 0 and (best is None or rc < best):
                best = rc
                best_j = j
        return best, best_j

    def _local_objective(self):
        return sum(self.inst.c[self.pid][j] * f for j, f in self.row_links.items())

    def _local_big_flow(self):
        return any(
            self.row_links.get(j, 0) > 0
            for (i, j) in self.inst.artificial_arcs
            if i == self.pid
        )

    def _control(self, src, payload):
        kind = payload[0]
        if kind == "price":
            self.epoch = payload[1]
            self.claims = {}
            self.parked = {}
            self.pending_trims = {}
            self.status = "idle"
            self.resolution_status = None
            self.commit_received = False
            self.reported_pivot = False
            self.pending_pivot = None
            assert len(self.all_v) == self.inst.m, "pricing with missing duals"
            rc, _ = self._my_min_rc()
            self._report_to_root(
                ("minrc", self.epoch, rc, self._local_big_flow(),
                 self._local_objective())
            )
        elif kind == "minrc":
            self._root_minrc(src, payload)
        elif kind == "select":
            self._select_candidate()
        elif kind == "resolution":
            self._root_resolution(src, payload)
        elif kind == "commit":
            self._commit()
        elif kind == "pivot":
            self._root_pivot_report(src, payload)
        elif kind == "start_rebuild":
            self._start_rebuild()
        elif kind == "rebuild_done":
            self._root_rebuild_done(payload[1])
        elif kind == "validate_failed":
            self._pivot_aborted()
        elif kind == "validate_ok":
            self._start_update()
        elif kind == "stop":
            self.status = "stopped"
        else:
            raise AssertionError(f"unexpected control {payload}")

    # coordinator side of the waves

    def _root_minrc(self, src, payload):
        _, epoch, rc, big, local_obj = payload
        assert epoch == self.epoch and src not in self.minrc_reports
        self.minrc_reports[src] = (rc, big, local_obj)
        if len(self.minrc_reports) < self.n:
            return
        reports = self.minrc_reports
        if self.feasible is None and not any(r[1] for r in reports.values()):
            self.feasible = (
                self.stats_rounds,
                self.stats_total_pivots,
                sum(r[2] for r in reports.values()),
            )
        global_min = min(
            (r[0] for r in reports.values() if r[0] is not None), default=None
        )
        if global_min is None or self.stats_rounds >= self.max_rounds:
            self._broadcast(("stop",))
        else:
            self.stats_rounds += 1
            self.resolutions = {}
            self.pivot_reports = {}
            self.rebuild_done = 0
            self._broadcast(("select", self.epoch))

    def _root_resolution(self, src, payload):
        _, epoch, status = payload
        assert epoch == self.epoch and src not in self.resolutions
        self.resolutions[src] = status
        if status == "cancelled":
            self.stats_cancelled += 1
        if len(self.resolutions) < self.n:
            return
        if not any(st == "pending" for st in self.resolutions.values()):
            raise AssertionError("an epoch with candidates must complete a walk")
        self._broadcast(("commit", self.epoch))

    def _root_pivot_report(self, src, payload):
        _, epoch, status, detail = payload
        assert epoch == self.epoch and src not in self.pivot_reports
        self.pivot_reports[src] = (status, detail)
        if status == "aborted":
            self.stats_cancelled += 1
        expected = sum(1 for st in self.resolutions.values() if st == "pending")
        if len(self.pivot_reports) < expected:
            return
        applied = sorted(
            (s, d) for s, (st, d) in self.pivot_reports.items() if st == "applied"
        )
        assert applied, "the best-priority cycle always survives to apply"
        for s, d in applied:
            self.stats_total_pivots += 1
            self.applied_pivots.append(
                AppliedPivot(
                    epoch=self.epoch, initiator=s, entering=d["entering"],
                    leaving=d["leaving"], cells=d["cells"], rc=d["rc"],
                    theta=d["theta"],
                )
            )
        self._broadcast(("start_rebuild", self.epoch))

    def _root_rebuild_done(self, epoch):
        assert epoch == self.epoch, "rebuild crossed an epoch boundary"
        self.rebuild_done += 1
        expected = sum(1 for st, _ in self.pivot_reports.values() if st == "applied")
        if self.rebuild_done == expected:
            self._start_pricing()

    # ---- candidate selection and cycle walks ------------------------------------

    def _select_candidate(self):
        rc, j = self._my_min_rc()
        if rc is None:
            self._resolve("none")
            return
        self.status = "walking"
        entering = (self.pid, j)
        # two tokens climb parent pointers toward the dual root, one from
        # each endpoint of the entering edge; their paths join at the lowest
        # common ancestor, which keeps every cycle within O(tree height)
        # messages and causal depth
        self._dispatch(self.homes[j], REDUCED_COST, ("rc_kick", entering, rc, self.pid))
        token = {
            "entering": entering,
            "rc": rc,
            "initiator": self.pid,
            "epoch": self.epoch,
            "role": "src",
            "path": [],
            "node": self.pid,
        }
        self._ascend_continue(token)

    def _resolve(self, status):
        if self.resolution_status is None:
            self.resolution_status = status
            self._report_to_root(("resolution", self.epoch, status))

    def _start_walk(self, entering, rc, initiator):
        token = {
            "entering": entering,
            "rc": rc,
            "initiator": initiator,
            "epoch": self.epoch,
            "role": "req",
            "path": [],
            "node": self.n + entering[1],
        }
        self._ascend_continue(token)

    def _token_key(self, token):
        return (token["epoch"], token["rc"], token["initiator"])

    def _ascend_arrive(self, token):
        if token["epoch"] != self.epoch or self.commit_received:
            # the token outlived its epoch or its commit wave: scrub and drop
            cells = [c for c, _ in token["path"]]
            extra = token.pop("pending_claim_cell", None)
            if cells:
                self._start_chase(self._token_key(token), cells)
            return
        cell = token.pop("pending_claim_cell", None)
        if cell is not None:
            outcome = self._claim_ascend(cell, token)
            if outcome == "blocked":
                self._ascend_dead(token)
                return
            if outcome == "meet":
                return
            token["path"].append((cell, self.col_links[cell[1]][cell[0]]))
        self._ascend_continue(token)

    def _ascend_continue(self, token):
        n = self.n
        while True:
            node = token["node"]
            assert self.host_of(node) == self.pid
            if node < n:
                parent = self.u_parent if node == self.pid else None
                assert node == self.pid
            else:
                parent = self.v_parent[node - n]
            if parent is None:
                self._rendezvous(token)
                return
            if node >= n:
                # leaving a request: this host owns the claim
                outcome = self._claim_ascend(parent, token)
                if outcome == "blocked":
                    self._ascend_dead(token)
                    return
                if outcome == "meet":
                    return
                token["path"].append((parent, self.col_links[node - n][parent[0]]))
                token["node"] = parent[0]
                if self.host_of(parent[0]) == self.pid:
                    continue
                self.send(parent[0], CYCLE, ("walk", token))
                return
            # climbing from a server toward its pricing request: the claim
            # belongs to that request's home
            token["node"] = n + parent[1]
            if self.host_of(token["node"]) == self.pid:
                outcome = self._claim_ascend(parent, token)
                if outcome == "blocked":
                    self._ascend_dead(token)
                    return
                if outcome == "meet":
                    return
                token["path"].append((parent, self.col_links[parent[1]][parent[0]]))
                continue
            token["pending_claim_cell"] = parent
            self.send(self.host_of(token["node"]), CYCLE, ("walk", token))
            return

    def _claim_ascend(self, cell, token):
        """Claim a cell for a climbing token.

        Returns "mine" (claimed, continue), "meet" (the sibling token already
        holds it: the cycle is complete here), or "blocked" (a stronger walk
        owns it; this pivot dies).  A weaker holder is evicted and cancelled.
        """
        key = self._token_key(token)
        held = self.claims.get(cell)
        if held is None:
            prefix = tuple(token["path"]) + ((cell, self.col_links[cell[1]][cell[0]]),)
            self.claims[cell] = key + (token["role"], prefix)
            return "mine"
        if held[:3] == key:
            self._assemble_cycle(cell, held, token)
            return "meet"
        if (key[1], key[2]) < (held[1], held[2]):
            self._start_chase(held[:3], [c for c, _ in held[4]])
            prefix = tuple(token["path"]) + ((cell, self.col_links[cell[1]][cell[0]]),)
            self.claims[cell] = key + (token["role"], prefix)
            return "mine"
        return "blocked"

    def _ascend_dead(self, token):
        """A stronger walk blocks the unique path: cancel this pivot."""
        cells = [c for c, _ in token["path"]]
        if cells:
            self._start_chase(self._token_key(token), cells)
        else:
            self._dispatch(token["initiator"], CANCEL,
                           ("cancelled_notify", token["epoch"]))

    def _rendezvous(self, token):
        """Token reached the dual root: wait for, or join, its sibling."""
        key = self._token_key(token)
        pending = self.pending_trims.pop(key + (token["role"],), None)
        if pending is not None:
            leftover = [c for c, _ in token["path"][pending:]]
            if leftover:
                self._start_chase(key, leftover)
            return
        other = self.parked.pop(key, None)
        if other is None:
            self.parked[key] = token
            return
        req = other if other["role"] == "req" else token
        srcn = token if other["role"] == "req" else other
        path = list(req["path"]) + [cf for cf in reversed(srcn["path"])]
        self._dispatch(token["initiator"], CYCLE,
                       ("ready", token["epoch"], token["entering"], token["rc"],
                        tuple(path)))

    def _assemble_cycle(self, cell, held, token):
        """The sibling climbed through this cell: its prefix up to here plus
        this token's path forms the tree path between the entering edge's
        endpoints."""
        held_part = [cf for cf in held[4][:-1]]
        mine = list(token["path"])
        if held[3] == "req":
            path = held_part + list(reversed(mine))
        else:
            path = mine + list(reversed(held_part))
        # the sibling may have climbed past the junction; trim it at the root
        keep = len(held[4]) - 1
        self._dispatch(0, CANCEL,
                       ("trim", self._token_key(token), held[3], keep))
        self._dispatch(token["initiator"], CYCLE,
                       ("ready", token["epoch"], token["entering"], token["rc"],
                        tuple(path)))

    def _trim_parked(self, key, role, keep):
        token = self.parked.get(tuple(key))
        if token is not None and token["role"] == role:
            del self.parked[tuple(key)]
            leftover = [c for c, _ in token["path"][keep:]]
            if leftover:
                self._start_chase(tuple(key), leftover)
        else:
            self.pending_trims[tuple(key) + (role,)] = keep

    def _cycle_ready(self, epoch, entering, rc, path):
        if epoch != self.epoch or self.status != "walking":
            return
        minus = path[0::2]
        theta = min(flow for _, flow in minus)
        leaving = min(cell for cell, flow in minus if flow == theta)
        self.status = "pending"
        self.pending_pivot = {
            "entering": entering,
            "rc": rc,
            "path": [cell for cell, _ in path],
            "theta": theta,
            "leaving": leaving,
        }
        self._resolve("pending")

    def _unclaim(self, cell, victim):
        held = self.claims.get(cell)
        if held is not None and held[:3] == victim:
            del self.claims[cell]

    def _start_chase(self, victim, cells):
        """Unclaim a dead walk's cells back along its path, then tell its
        initiator it was cancelled.  ``victim`` is (epoch, rc, initiator)."""
        state = {
            "victim": tuple(victim),
            "cells": tuple(cells),
            "idx": len(cells) - 1,
        }
        self._chase_step(state)

    def _chase_step(self, state):
        victim = tuple(state["victim"])
        while state["idx"] >= 0:
            cell = state["cells"][state["idx"]]
            authority = self.homes[cell[1]]
            if authority != self.pid:
                self.send(authority, CANCEL, ("chase", state))
                return
            self._unclaim(cell, victim)
            state["idx"] -= 1
        self._dispatch(victim[2], CANCEL, ("cancelled_notify", victim[0]))

    def _walk_cancelled(self, epoch):
        if epoch != self.epoch or self.status != "walking":
            return
        self.status = "cancelled"
        self._resolve("cancelled")

    # ---- commit: validate claims, then push theta around the cycle -------------

    def _commit(self):
        self.commit_received = True
        if self.resolution_status != "pending":
            return
        piv = self.pending_pivot
        self._validate_step({
            "initiator": self.pid,
            "key": (self.epoch, piv["rc"], self.pid),
            "cells": tuple(piv["path"]),
            "idx": 0,
        })

    def _validate_step(self, state):
        key = tuple(state["key"])
        cells = state["cells"]
        while state["idx"] < len(cells):
            cell = cells[state["idx"]]
            authority = self.homes[cell[1]]
            if authority != self.pid:
                self.send(authority, CYCLE, ("validate", state))
                return
            held = self.claims.get(cell)
            if held is None or held[:3] != key:
                self._dispatch(state["initiator"], CONTROL, ("validate_failed",))
                return
            state["idx"] += 1
        self._dispatch(state["initiator"], CONTROL, ("validate_ok",))

    def _pivot_aborted(self):
        if self.status in ("pending", "cancelled"):
            self.status = "aborted"
            self._report_pivot("aborted", None)

    def _report_pivot(self, status, detail):
        if not self.reported_pivot:
            self.reported_pivot = True
            self._report_to_root(("pivot", self.epoch, status, detail))

    def _start_update(self):
        if self.status != "pending":
            return
        piv = self.pending_pivot
        cells = tuple([piv["entering"]] + list(piv["path"]))
        nodes = [piv["entering"][0], self.n + piv["entering"][1]]
        for cell in cells[1:]:
            nodes.append(cell[0] if nodes[-1] >= self.n else self.n + cell[1])
        assert nodes[-1] == self.pid
        self._update_step({
            "initiator": self.pid,
            "epoch": self.epoch,
            "cells": cells,
            "nodes": tuple(nodes),
            "theta": piv["theta"],
            "leaving": piv["leaving"],
            "entering": piv["entering"],
            "rc": piv["rc"],
            "pos": 0,
            "child_flags": [],
        })

    def _apply_update_view(self, cell, node, state):
        i, j = cell
        theta = _sign(list(state["cells"]).index(cell)) * state["theta"]
        if node < self.n:
            assert node == i == self.pid
            flow = self.row_links.get(j, 0) + theta
            if cell == state["leaving"]:
                assert flow == 0
                if self.u_parent == cell:
                    state["child_flags"].append(i)
                del self.row_links[j]
            else:
                self.row_links[j] = flow
        else:
            assert node == self.n + j and self.homes[j] == self.pid
            flow = self.col_links[j].get(i, 0) + theta
            if cell == state["leaving"]:
                assert flow == 0
                if self.v_parent[j] == cell:
                    state["child_flags"].append(self.n + j)
                del self.col_links[j][i]
            else:
                self.col_links[j][i] = flow

    def _update_step(self, state):
        """Retrace the cycle once, applying +/-theta to each cell at both of
        its mirror views and swapping the leaving cell out of the basis."""
        cells = state["cells"]
        nodes = state["nodes"]
        count = len(cells)
        while state["pos"] <= count:
            pos = state["pos"]
            node = nodes[pos] if pos < len(nodes) else nodes[-1]
            if self.host_of(node) != self.pid:
                self.send(self.host_of(node), UPDATE, ("update", state))
                return
            if pos >= 1:
                self._apply_update_view(cells[pos - 1], node, state)
            if pos < count:
                self._apply_update_view(cells[pos], node, state)
            state["pos"] += 1
        if self.pid != state["initiator"]:
            self.send(state["initiator"], UPDATE, ("update", state))
            return
        self._update_finished(state)

    def _update_finished(self, state):
        assert self.status == "pending", "update finished on a dead pivot"
        assert len(state["child_flags"]) == 1
        x_c = state["child_flags"][0]
        cells = list(state["cells"])
        nodes = state["nodes"]
        leav_pos = cells.index(state["leaving"])
        assert x_c in (nodes[leav_pos], nodes[leav_pos + 1])
        # the rebuild seeds from the entering endpoint on the child side of
        # the cut: positions 1..leav_pos sit on the request side
        if x_c == nodes[leav_pos]:
            x_b = self.n + state["entering"][1]
        else:
            x_b = state["entering"][0]
        self.status = "applied"
        self.pending_pivot = dict(self.pending_pivot, x_b=x_b)
        self._report_pivot("applied", {
            "entering": state["entering"],
            "leaving": state["leaving"],
            "cells": cells,
            "rc": state["rc"],
            "theta": state["theta"],
        })

    def _start_rebuild(self):
        if self.status != "applied":
            return
        piv = self.pending_pivot
        rc = piv["rc"]
        x_b = piv["x_b"]
        dv, du = (rc, -rc) if x_b >= self.n else (-rc, rc)
        self._flood_start(
            key=("rb", self.epoch, self.pid),
            mode="delta", dv=dv, du=du,
            node=x_b, arrival_cell=piv["entering"], sender_val=None,
            forbidden=piv["entering"], echo_to=None,
        )


def _split_links(inst, homes, basis: BasisState):
    rows = {i: {} for i in range(inst.n)}
    cols = {i: {} for i in range(inst.n)}
    for (i, j) in basis.basic:
        rows[i][j] = basis.x[i][j]
        cols[homes[j]].setdefault(j, {})[i] = basis.x[i][j]
    for j in range(inst.m):
        cols[homes[j]].setdefault(j, {})
    return rows, cols


def dist_ts(inst: TpInstance, basis: BasisState, delay="unit", seed=0,
            max_rounds=None, record_events=True,
            max_events=5_000_000) -> DistTsResult:
    """Run the distributed simplex from a distributed copy of ``basis``.

    ``max_rounds`` caps the number of pivot epochs (0 runs only the initial
    dual construction); the default is the same anti-cycling bound as the
    sequential solver.
    """
    if max_rounds is None:
        max_rounds = 10 * (inst.n + inst.m) * max(inst.n, inst.m)
    homes = inst.column_homes()
    rows, cols = _split_links(inst, homes, basis)
    kernel = Kernel(delay=delay, seed=seed, record_events=record_events,
                    max_events=max_events)
    servers = [
        TsServer(inst, homes, rows[i], cols[i], max_rounds) for i in range(inst.n)
    ]
    for i, server in enumerate(servers):
        kernel.spawn(i, server)
    transcript = kernel.run_until_quiescent()

    x = [[0] * inst.m for _ in range(inst.n)]
    for i, server in enumerate(servers):
        for j, flow in server.row_links.items():
            x[i][j] = flow
    for srv in servers:
        for j, colmap in srv.col_links.items():
            for i, flow in colmap.items():
                assert x[i][j] == flow, "row/column link mirrors diverged"
    basic = {(i, j) for i, srv in enumerate(servers) for j in srv.row_links}
    u = [servers[i].u for i in range(inst.n)]
    v = [None] * inst.m
    for srv in servers:
        for j, val in srv.v.items():
            v[j] = val
    root = servers[0]
    solution = check_feasible(inst, x)
    feasible = root.feasible or (None, None, None)
    stats = RunStats(
        objective=solution.objective,
        msg_count=transcript.msg_count,
        chain_len=transcript.chain_len,
        total_pivots=root.stats_total_pivots,
        parallel_rounds=root.stats_rounds,
        cancellations=root.stats_cancelled,
        feasible_round=feasible[0],
        feasible_pivots=feasible[1],
        feasible_value=feasible[2],
    )
    return DistTsResult(
        solution=solution,
        stats=stats,
        transcript=transcript,
        u=u,
        v=v,
        basis=basic,
        applied=root.applied_pivots,
        cancelled=root.stats_cancelled,
    )


def dual_propagation(inst: TpInstance, basis: BasisState, delay="unit", seed=0):
    """Run only the initial dual construction; returns (u, v, transcript)."""
    res = dist_ts(inst, basis, delay=delay, seed=seed, max_rounds=0)
    return res.u, res.v, res.transcript
