"""Deterministic discrete-event kernel for message-passing server processes.

Processes exchange typed envelopes over reliable channels that deliver every
message exactly once, in per-(src, dst) FIFO order, after a finite delay
drawn from a seeded model.  The kernel is single threaded: given the same
processes, instance, and seed it replays the identical event sequence.  No
process ever touches another process's state; all coordination is envelopes.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field

# message tags
SERVE = "serve"
ACK = "ack"
NACK = "nack"
VARV = "varv"
VARU = "varu"
REDUCED_COST = "reduced_cost"
CYCLE = "cycle"
UPDATE = "update"
CANCEL = "cancel"
BID = "bid"
AUCTION_ACK = "auction_ack"
CONTROL = "control"


class KernelWatchdog(RuntimeError):
    """Delivered-event budget exhausted; the protocol is not terminating."""


@dataclass
class Envelope:
    """One in-flight message.

    ``seq`` is the per-(src, dst) FIFO sequence number; ``deliver_at`` the
    simulated delivery time.  ``sent_depth`` carries the sender's causal
    depth for the longest-chain metric.
    """

    src: int
    dst: int
    tag: str
    payload: object
    seq: int
    deliver_at: int
    sent_depth: int


@dataclass
class Transcript:
    """Causally ordered delivery log of one simulation run.

    ``events`` holds (time, src, dst, tag, seq) tuples in delivery order
    (empty when recording is off); ``msg_count`` counts every delivered
    envelope and ``chain_len`` is the length of the longest chain in the
    happens-before order of deliveries.
    """

    events: list[tuple[int, int, int, str, int]] = field(default_factory=list)
    msg_count: int = 0
    chain_len: int = 0
    tag_counts: dict[str, int] = field(default_factory=dict)

    def export_lines(self) -> str:
        return "".join(
            f"{t},{src},{dst},{tag},{seq}\n" for (t, src, dst, tag, seq) in self.events
        )


@dataclass
class RunStats:
    """Per-run metrics in the shape of the benchmark tables."""

    objective: int | None = None
    msg_count: int = 0
    chain_len: int = 0
    total_pivots: int | None = None
    parallel_rounds: int | None = None
    cancellations: int | None = None
    feasible_value: int | None = None
    feasible_pivots: int | None = None
    feasible_round: int | None = None
    phases: int | None = None


class Process:
    """Base class for simulated server processes.

    Subclasses implement ``on_start`` and ``on_message`` and communicate only
    through ``self.send``; local state must stay owner-private.
    """

    pid: int = -1
    _kernel: "Kernel | None" = None

    def on_start(self):
        pass

    def on_message(self, src: int, tag: str, payload):
        raise NotImplementedError

    def send(self, dst: int, tag: str, payload=None):
        self._kernel._send(self.pid, dst, tag, payload)


def make_delay_model(spec: str, seed: int):
    """Per-(src, dst) delay function from a spec string.

    ``"unit"`` gives constant delay 1; ``"uniform:LO:HI"`` draws integer
    delays from [LO, HI] with an independent stream per ordered pair, seeded
    so replays are identical.
    """
    if spec == "unit":
        return lambda src, dst: 1
    if spec.startswith("uniform:"):
        parts = spec.split(":")
        if len(parts) != 3:
            raise ValueError(f"bad delay spec {spec!r}, expected uniform:LO:HI")
        lo, hi = int(parts[1]), int(parts[2])
        if not 1 <= lo <= hi:
            raise ValueError("uniform delay bounds must satisfy 1 <= lo <= hi")
        streams = {}

        def delay(src, dst):
            rng = streams.get((src, dst))
            if rng is None:
                rng = random.Random(f"{seed}/{src}->{dst}")
                streams[(src, dst)] = rng
            return rng.randint(lo, hi)

        return delay
    raise ValueError(f"unknown delay model {spec!r}")


class Kernel:
    """Event loop delivering envelopes in (deliver_at, src, send id) order.

    The third key component is a kernel-wide monotone send counter, so the
    order is total and, within one (src, dst) pair and time, follows send
    order; per-pair delivery times are additionally clamped to be
    non-decreasing, which keeps channels FIFO under any delay model.
    """

    def __init__(self, delay="unit", seed=0, record_events=True, max_events=5_000_000):
        self.delay_fn = make_delay_model(delay, seed)
        self.seed = seed
        self.record_events = record_events
        self.max_events = max_events
        self.procs: dict[int, Process] = {}
        self.now = 0
        self._heap = []
        self._send_counter = 0
        self._pair_seq: dict[tuple[int, int], int] = {}
        self._pair_last: dict[tuple[int, int], int] = {}
        self._proc_depth: dict[int, int] = {}
        self._current_depth = 0
        self.transcript = Transcript()

    def spawn(self, pid: int, proc: Process):
        if pid in self.procs:
            raise ValueError(f"duplicate process id {pid}")
        proc.pid = pid
        proc._kernel = self
        self.procs[pid] = proc
        self._proc_depth[pid] = 0

    def _send(self, src: int, dst: int, tag: str, payload):
        if dst not in self.procs:
            raise ValueError(f"send to unknown process {dst}")
        if src == dst:
            raise ValueError("processes must handle local work without envelopes")
        pair = (src, dst)
        seq = self._pair_seq.get(pair, 0)
        self._pair_seq[pair] = seq + 1
        deliver_at = self.now + self.delay_fn(src, dst)
        last = self._pair_last.get(pair, 0)
        if deliver_at < last:
            deliver_at = last  # preserve FIFO under jittery delays
        self._pair_last[pair] = deliver_at
        heapq.heappush(
            self._heap,
            (deliver_at, src, self._send_counter, dst, tag, payload, seq,
             self._current_depth),
        )
        self._send_counter += 1

    def run_until_quiescent(self) -> Transcript:
        """Start every process (ascending id), then deliver envelopes until
        none are in flight.  Raises KernelWatchdog past the event budget."""
        for pid in sorted(self.procs):
            self._current_depth = 0
            self.procs[pid].on_start()
        t = self.transcript
        tag_counts = t.tag_counts
        depths = self._proc_depth
        while self._heap:
            deliver_at, src, _, dst, tag, payload, seq, sent_depth = heapq.heappop(
                self._heap
            )
            self.now = deliver_at
            t.msg_count += 1
            if t.msg_count > self.max_events:
                raise KernelWatchdog(
                    f"more than {self.max_events} deliveries; protocol not terminating"
                )
            depth = sent_depth + 1
            if depths[dst] >= depth:
                depth = depths[dst] + 1
            depths[dst] = depth
            if depth > t.chain_len:
                t.chain_len = depth
            if self.record_events:
                t.events.append((deliver_at, src, dst, tag, seq))
                if isinstance(payload, tuple) and payload and isinstance(payload[0], str):
                    kind = f"{tag}:{payload[0]}"
                    tag_counts[kind] = tag_counts.get(kind, 0) + 1
            tag_counts[tag] = tag_counts.get(tag, 0) + 1
            self._current_depth = depth
            self.procs[dst].on_message(src, tag, payload)
        return t
