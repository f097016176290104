"""Distributed auction solver for the balanced transportation problem.

Sources bid for request flow; each request's home server runs the award
step.  Costs are flipped to benefits (highest cost minus cost) so bidding
maximizes.  Every demand unit starts on an artificial source; a source with
spare capacity bids, in lockstep rounds, for the demand units currently
worth most to it, always strictly raising the price of whatever it
displaces, with the price of the best unit it leaves behind setting the bid
level.  When no artificial flow is left the phase ends: epsilon halves and
every assignment is handed back to the artificial source with its price
kept as a floor, so later phases re-run the market around the reached price
level.  With integer costs, stopping once epsilon drops below 1/min(n, m)
makes the final assignment exactly optimal.

Rounds are versioned: awards travel in acknowledgements tagged with their
(phase, round) and every server folds them into its replicated view only
when its own round completes, so all servers evaluate phase transitions,
termination, and stalls on identical snapshots.  Prices are exact
fractions, so the slackness invariant can be asserted without tolerances.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .netsim import AUCTION_ACK, BID, Kernel, Process, RunStats, Transcript
from .tp import FlowSolution, Infeasible, TpInstance, check_feasible


def benefit_matrix(inst: TpInstance):
    """Benefits a[i][j] = max eligible cost - c[i][j]; penalty arcs are None."""
    eligible = [
        (i, j)
        for i in range(inst.n)
        for j in range(inst.m)
        if (i, j) not in inst.artificial_arcs
    ]
    cmax = max((inst.c[i][j] for i, j in eligible), default=0)
    a = [
        [
            None if (i, j) in inst.artificial_arcs else cmax - inst.c[i][j]
            for j in range(inst.m)
        ]
        for i in range(inst.n)
    ]
    return a, cmax


def init_epsilon(inst: TpInstance) -> Fraction:
    """Starting scale (max eligible cost x min(n, m)) / 2, floored at 1/2
    when every cost is zero so displacement bids still move prices."""
    if inst.n == 0 or inst.m == 0:
        raise ValueError("empty instance")
    _, cmax = benefit_matrix(inst)
    eps = Fraction(cmax * min(inst.n, inst.m), 2)
    return eps if eps > 0 else Fraction(1, 2)


def epsilon_done(eps: Fraction, n: int, m: int) -> bool:
    return eps < Fraction(1, min(n, m))


# award lists hold units as (is_real, price, flow, source); artificial units
# are (False, price, flow, -1), where the price is a floor left behind by a
# previous holder, and sort first among displaceables


def _initial_award(d_j):
    return ((False, Fraction(0), d_j, -1),)


def _consolidate(units):
    merged = {}
    for real, price, flow, src in units:
        key = (real, price, src)
        merged[key] = merged.get(key, 0) + flow
    return tuple(
        (real, price, flow, src)
        for (real, price, src), flow in sorted(merged.items())
        if flow > 0
    )


class AuctionServer(Process):
    """One server: bids with its own capacity, awards its local requests."""

    def __init__(self, inst: TpInstance, homes):
        self.inst = inst
        self.homes = homes
        self.n = inst.n
        self.a, self.cmax = benefit_matrix(inst)
        self.phase = 1
        self.round = 0
        self.total_rounds = 0
        self.eps = init_epsilon(inst)
        self.done = False
        self.stalled = False
        self.feasible_round = None
        self.phases_run = 1
        self.price_bound = None
        self.view = {}  # j -> award tuple, identical across servers per round
        self.prev_snapshot = None
        self.bid_buffer = {}  # (phase, round, j) -> {src: (bid, offer)}
        self.round_awards = {}  # (phase, round) -> {j: award}
        self.acks_expected = set()
        self._acks_missing = 0
        self._held_cache = None
        self._expected_cache = {}

    def on_start(self):
        self.eligible_js = [
            j for j in range(self.inst.m) if self.a[self.pid][j] is not None
        ]
        self.eligible_of = [
            frozenset(
                i for i in range(self.n) if self.a[i][j] is not None
            )
            for j in range(self.inst.m)
        ]
        for j in range(self.inst.m):
            self.view[j] = _initial_award(self.inst.d[j])
        self._start_round()

    # ---- shared-view helpers (identical results on every server) ------------

    def _held_by_source(self):
        """source -> {j: flow} for the current view, cached per round."""
        if self._held_cache is None:
            held = {i: {} for i in range(self.n)}
            for j in range(self.inst.m):
                for real, _, flow, src in self.view[j]:
                    if real:
                        held[src][j] = held[src].get(j, 0) + flow
            self._held_cache = held
        return self._held_cache

    def _expected_bidders(self, j):
        got = self._expected_cache.get(j)
        if got is None:
            held = self._held_by_source()
            d_j = self.inst.d[j]
            got = {
                i for i in self.eligible_of[j] if held[i].get(j, 0) < d_j
            }
            self._expected_cache[j] = got
        return got

    # ---- source side ---------------------------------------------------------

    def _compute_bids(self):
        """Block bids for the most valuable displaceable units.

        Collects every unit at an eligible target not already mine, valued
        at benefit minus price, keeps the best residual-capacity many, and
        prices every bid so the margin kept after an award equals the value
        of the best unit left behind, minus half an epsilon step (blocks can
        be partially won, which leaves a source one tier behind the market;
        half steps keep that staleness inside the scheduled epsilon).
        """
        me = self.pid
        mine = self._held_by_source()[me]
        residual = self.inst.b[me] - sum(mine.values())
        if residual <= 0:
            return {}
        units = []
        for j in self.eligible_js:
            aij = self.a[me][j]
            for real, price, flow, src in self.view[j]:
                if real and src == me:
                    continue
                units.append((aij - price, j, flow))
        units.sort(key=lambda t: (-t[0], t[1]))
        take = {}
        left = residual
        lam = None
        for value, j, flow in units:
            if left == 0:
                lam = value  # best unit left entirely behind
                break
            grab = min(left, flow)
            take[j] = take.get(j, 0) + grab
            left -= grab
            if grab < flow:
                lam = value  # the rest of this block stays behind
                break
        if not take:
            return {}
        if lam is None:
            lam = units[-1][0]  # took everything: price off the worst taken
        # the phase that can terminate runs with a finer step: a partially
        # won block leaves a source a few tiers behind the market, and the
        # final answer must sit strictly within the scheduled epsilon
        if epsilon_done(self.eps, self.inst.n, self.inst.m):
            step = self.eps / 8
        else:
            step = self.eps / 2
        return {
            j: (self.a[me][j] - lam + step, flow) for j, flow in take.items()
        }

    def _start_round(self):
        if self.done or self.stalled:
            return
        self.total_rounds += 1
        mine = self._held_by_source()[self.pid]
        bids = self._compute_bids()
        self.acks_expected = {
            j for j in range(self.inst.m) if self._expected_bidders(j)
        }
        got = self.round_awards.get((self.phase, self.round), {})
        self._acks_missing = len(self.acks_expected - set(got))
        for j in self.eligible_js:
            if mine.get(j, 0) >= self.inst.d[j]:
                continue
            bid, offer = bids.get(j, (None, 0))
            payload = (self.phase, self.round, j, bid, offer, self.pid)
            if self.homes[j] == self.pid:
                self._accept_bid(payload)
            else:
                self.send(self.homes[j], BID, payload)
        self._drain_buffer()
        self._maybe_finish_round()

    # ---- destination side ------------------------------------------------------

    def on_message(self, src, tag, payload):
        if tag == BID:
            self._accept_bid(payload)
        elif tag == AUCTION_ACK:
            phase, rnd, j, award = payload
            got = self.round_awards.setdefault((phase, rnd), {})
            if j not in got:
                got[j] = award
                if (phase, rnd) == (self.phase, self.round) and j in self.acks_expected:
                    self._acks_missing -= 1
            self._maybe_finish_round()
        else:
            raise AssertionError(f"unexpected message {tag}")

    def _accept_bid(self, payload):
        phase, rnd, j, bid, offer, src = payload
        key = (phase, rnd, j)
        self.bid_buffer.setdefault(key, {})[src] = (bid, offer)
        self._try_assign(key)

    def _drain_buffer(self):
        for key in sorted(k for k in self.bid_buffer
                          if k[:2] == (self.phase, self.round)):
            self._try_assign(key)

    def _try_assign(self, key):
        phase, rnd, j = key
        if (phase, rnd) != (self.phase, self.round):
            return  # a faster server's wave; assign once this round is reached
        bucket = self.bid_buffer.get(key)
        if bucket is None or not set(bucket) >= self._expected_bidders(j):
            return
        del self.bid_buffer[key]
        self._assign(j, bucket)

    def _assign(self, j, bucket):
        """Award step: grant flow down the sorted bids, displacing the
        artificial source first, then cheaper foreign holders, each only for
        a strictly higher price."""
        units = list(self.view[j])
        order = sorted(
            ((bid, offer, src) for src, (bid, offer) in bucket.items()
             if bid is not None and offer > 0),
            key=lambda t: (-t[0], t[2]),
        )
        for bid, offer, src in order:
            grabbed = 0
            keep = []
            for real, price, flow, holder in sorted(units):
                if grabbed >= offer or holder == src or price >= bid:
                    keep.append((real, price, flow, holder))
                    continue
                take = min(offer - grabbed, flow)
                grabbed += take
                if flow - take > 0:
                    keep.append((real, price, flow - take, holder))
            if grabbed > 0:
                keep.append((True, bid, grabbed, src))
            units = keep
        award = _consolidate(units)
        ack = (self.phase, self.round, j, award)
        got = self.round_awards.setdefault((self.phase, self.round), {})
        if j not in got:
            got[j] = award
            if j in self.acks_expected:
                self._acks_missing -= 1
        for k in range(self.n):
            if k != self.pid:
                self.send(k, AUCTION_ACK, ack)
        self._maybe_finish_round()

    # ---- round completion ---------------------------------------------------------

    def _maybe_finish_round(self):
        if self.done or self.stalled:
            return
        if self._acks_missing > 0:
            return
        got = self.round_awards.get((self.phase, self.round), {})
        for j in sorted(got):
            self.view[j] = got[j]
        del self.round_awards[(self.phase, self.round)]
        self._held_cache = None
        self._expected_cache = {}
        clean = not any(
            not real
            for j in range(self.inst.m)
            for real, _, _, _ in self.view[j]
        )
        if clean and self.feasible_round is None:
            self.feasible_round = self.total_rounds
        if clean:
            if epsilon_done(self.eps, self.inst.n, self.inst.m):
                self.done = True
                return
            self._enter_phase()
            self._start_round()
            return
        snapshot = tuple(sorted(self.view.items()))
        if snapshot == self.prev_snapshot:
            # no bid can displace the remaining artificial flow
            self.stalled = True
            return
        if self.price_bound is None:
            total_units = sum(self.inst.d)
            self.price_bound = (
                (self.cmax + 1) * (total_units + 1)
                + init_epsilon(self.inst) * (total_units + 1)
            )
        if any(
            price > self.price_bound
            for j in range(self.inst.m)
            for _, price, _, _ in self.view[j]
        ):
            # prices past any feasible level: demand is trapped behind
            # sources that cannot reach it
            self.stalled = True
            return
        self.prev_snapshot = snapshot
        self.round += 1
        self._start_round()

    def _enter_phase(self):
        """Halve epsilon and hand every assignment back to the artificial
        source; unit prices persist as floors so the next phase re-awards
        around the reached price level instead of re-climbing from zero."""
        self.phase += 1
        self.round = 0
        self.phases_run += 1
        self.eps = self.eps / 2
        self.prev_snapshot = None
        self._held_cache = None
        self._expected_cache = {}
        for j in range(self.inst.m):
            self.view[j] = _consolidate(
                (False, price, flow, -1) for _, price, flow, _ in self.view[j]
            )


@dataclass
class AuctionResult:
    solution: FlowSolution
    stats: RunStats
    transcript: Transcript
    epsilon: Fraction
    phases: int
    awards: dict


def auction_tp(inst: TpInstance, delay="unit", seed=0, record_events=True,
               max_events=20_000_000) -> AuctionResult:
    """Solve a balanced instance by the distributed auction."""
    if not inst.is_balanced():
        raise Infeasible("unbalanced instance")
    homes = inst.column_homes()
    kernel = Kernel(delay=delay, seed=seed, record_events=record_events,
                    max_events=max_events)
    servers = [AuctionServer(inst, homes) for _ in range(inst.n)]
    for i, server in enumerate(servers):
        kernel.spawn(i, server)
    transcript = kernel.run_until_quiescent()

    if any(server.stalled for server in servers):
        raise Infeasible("artificial flow could not be displaced")
    x = [[0] * inst.m for _ in range(inst.n)]
    reference = servers[0]
    for j in range(inst.m):
        for real, _, flow, src in reference.view[j]:
            assert real, "terminated with artificial flow"
            x[src][j] += flow
    solution = check_feasible(inst, x)
    stats = RunStats(
        objective=solution.objective,
        msg_count=transcript.msg_count,
        chain_len=transcript.chain_len,
        feasible_round=reference.feasible_round,
        phases=reference.phases_run,
        parallel_rounds=reference.total_rounds,
    )
    return AuctionResult(
        solution=solution,
        stats=stats,
        transcript=transcript,
        epsilon=reference.eps,
        phases=reference.phases_run,
        awards={j: reference.view[j] for j in range(inst.m)},
    )


def check_epsilon_cs(inst: TpInstance, result: AuctionResult) -> bool:
    """Every awarded (i, j) satisfies a[i][j] - price_ij >= max over eligible
    k of (a[i][k] - price_ik) - epsilon.

    price_ij is what source i pays or would pay at destination j: the price
    of its own awarded units on the left, and of the cheapest unit held by
    anyone else (the one a new bid would displace) on the right.
    """
    a, _ = benefit_matrix(inst)
    eps = result.epsilon
    for i in range(inst.n):
        best = None
        for k in range(inst.m):
            if a[i][k] is None:
                continue
            foreign = [
                price for real, price, _, src in result.awards[k]
                if not (real and src == i)
            ]
            if not foreign:
                continue
            margin = a[i][k] - min(foreign)
            if best is None or margin > best:
                best = margin
        if best is None:
            continue
        for j in range(inst.m):
            if a[i][j] is None:
                continue
            for real, price, _, src in result.awards[j]:
                if real and src == i and a[i][j] - price < best - eps:
                    return False
    return True
