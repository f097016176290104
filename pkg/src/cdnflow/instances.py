"""Instance text format, seeded benchmark-style generator, and stats CSV.

The file format is line oriented with ``#`` comments and six fixed-order
sections (SERVERS, CONTENTS, HOLDINGS, BANDWIDTH, COSTS, REQUESTS); all ids
are 1-based on disk and 0-based in memory.  The generator produces routing
instances in the style of the evaluation benchmarks: contents replicated on
a few random holders, requests spread evenly over servers, and total
bandwidth set to a tightness ratio of total demand (tight instances force
greedy heuristics onto penalty arcs).
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .tp import RrspInstance


class ParseError(ValueError):
    """Syntax error with its 1-based line number."""

    def __init__(self, line_no, message):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


SECTIONS = ["SERVERS", "CONTENTS", "HOLDINGS", "BANDWIDTH", "COSTS", "REQUESTS"]


def parse_rrsp(text: str) -> RrspInstance:
    """Parse the instance grammar; raises ParseError on syntax problems and
    ValueError on semantic ones (unknown ids, duplicates, missing holders)."""
    lines = []
    for no, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0].strip()
        if stripped:
            lines.append((no, stripped))
    pos = 0

    def expect_header(name):
        nonlocal pos
        if pos >= len(lines):
            raise ParseError(len(lines) and lines[-1][0] or 1, f"missing section {name}")
        no, content = lines[pos]
        if content != name:
            raise ParseError(no, f"expected section {name}, found {content!r}")
        pos += 1

    def take_ints(expected=None, what="integers"):
        nonlocal pos
        if pos >= len(lines):
            raise ParseError(lines[-1][0], f"unexpected end of file, wanted {what}")
        no, content = lines[pos]
        if content in SECTIONS:
            raise ParseError(no, f"wanted {what} before section {content}")
        parts = content.split()
        try:
            values = [int(p) for p in parts]
        except ValueError:
            raise ParseError(no, f"non-integer token in {parts!r}") from None
        if expected is not None and len(values) != expected:
            raise ParseError(no, f"expected {expected} {what}, got {len(values)}")
        pos += 1
        return no, values

    def peek_section():
        return pos < len(lines) and lines[pos][1] in SECTIONS

    expect_header("SERVERS")
    no, values = take_ints(1, "server count")
    n = values[0]
    if n < 1:
        raise ParseError(no, "server count must be positive")

    expect_header("CONTENTS")
    no, values = take_ints(1, "content count")
    n_contents = values[0]
    if n_contents < 0:
        raise ParseError(no, "content count must be non-negative")

    expect_header("HOLDINGS")
    holdings = [set() for _ in range(n)]
    while not peek_section():
        no, values = take_ints(None, "holding entries")
        if len(values) < 2:
            raise ParseError(no, "holding line needs a server and contents")
        server = values[0] - 1
        if not 0 <= server < n:
            raise ParseError(no, f"server id {values[0]} out of range")
        for c in values[1:]:
            if not 1 <= c <= n_contents:
                raise ParseError(no, f"content id {c} out of range")
            holdings[server].add(c - 1)

    expect_header("BANDWIDTH")
    bandwidth = [None] * n
    while not peek_section():
        no, values = take_ints(2, "bandwidth entries")
        server = values[0] - 1
        if not 0 <= server < n:
            raise ParseError(no, f"server id {values[0]} out of range")
        bandwidth[server] = values[1]
    missing = [i + 1 for i in range(n) if bandwidth[i] is None]
    if missing:
        raise ParseError(lines[pos - 1][0], f"bandwidth missing for servers {missing}")

    expect_header("COSTS")
    cost = []
    for _ in range(n):
        no, values = take_ints(n, "cost entries")
        cost.append(values)

    expect_header("REQUESTS")
    requests = []
    while pos < len(lines):
        no, values = take_ints(3, "request fields")
        k, c, d = values
        if not 1 <= k <= n:
            raise ParseError(no, f"server id {k} out of range")
        if not 1 <= c <= n_contents:
            raise ParseError(no, f"content id {c} out of range")
        requests.append((k - 1, c - 1, d))

    rrsp = RrspInstance(
        n_servers=n,
        n_contents=n_contents,
        holdings=tuple(frozenset(h) for h in holdings),
        bandwidth=tuple(bandwidth),
        requests=tuple(requests),
        server_cost=tuple(tuple(row) for row in cost),
    )
    rrsp.validate()
    return rrsp


def emit_rrsp(rrsp: RrspInstance) -> str:
    """Canonical text form; parse(emit(x)) == x."""
    out = ["SERVERS", str(rrsp.n_servers), "CONTENTS", str(rrsp.n_contents)]
    out.append("HOLDINGS")
    for i in range(rrsp.n_servers):
        if rrsp.holdings[i]:
            held = " ".join(str(c + 1) for c in sorted(rrsp.holdings[i]))
            out.append(f"{i + 1} {held}")
    out.append("BANDWIDTH")
    for i in range(rrsp.n_servers):
        out.append(f"{i + 1} {rrsp.bandwidth[i]}")
    out.append("COSTS")
    for row in rrsp.server_cost:
        out.append(" ".join(str(v) for v in row))
    out.append("REQUESTS")
    for k, c, d in sorted(rrsp.requests):
        out.append(f"{k + 1} {c + 1} {d}")
    return "\n".join(out) + "\n"


@dataclass
class GeneratorParams:
    """Knobs for the seeded routing-instance generator."""

    n_servers: int
    avg_requests_per_server: int = 70
    content_count: int | None = None  # default: twice the per-server average
    replication_degree: int = 3
    bandwidth_tightness: float | None = None  # default set by the class tag
    klass: str = "medium"
    seed: int = 0
    central_server: bool = False
    demand_range: tuple[int, int] = (1, 10)
    cost_range: tuple[int, int] = (1, 100)

    def resolved_tightness(self) -> float:
        if self.bandwidth_tightness is not None:
            return self.bandwidth_tightness
        if self.klass == "hard":
            return 1.0
        if self.klass == "medium":
            return 1.3
        raise ValueError(f"unknown class {self.klass!r}")


def generate(params: GeneratorParams) -> RrspInstance:
    """Deterministic per (params, seed); requests for each content are
    spread uniformly over the servers, holders are random, and bandwidth is
    scaled to the class tightness.  Rejects parameter sets whose total
    bandwidth could not cover total demand."""
    tightness = params.resolved_tightness()
    if tightness < 1.0:
        raise ValueError("bandwidth_tightness below 1 cannot cover demand")
    n = params.n_servers
    if n < 1:
        raise ValueError("need at least one server")
    avg = params.avg_requests_per_server
    n_contents = params.content_count or max(2 * avg, 4)
    if params.replication_degree < 1:
        raise ValueError("replication_degree must be at least 1")
    rep = min(params.replication_degree, n)
    rng = random.Random(params.seed)

    holdings = [set() for _ in range(n)]
    for c in range(n_contents):
        for i in rng.sample(range(n), rep):
            holdings[i].add(c)
    if params.central_server:
        holdings[0] = set(range(n_contents))

    jitter = max(1, avg // 10)
    lo_d, hi_d = params.demand_range
    requests = []
    for i in range(n):
        count = avg + rng.randint(-jitter, jitter)
        count = max(1, min(count, n_contents))
        for c in sorted(rng.sample(range(n_contents), count)):
            requests.append((i, c, rng.randint(lo_d, hi_d)))

    lo_c, hi_c = params.cost_range
    cost = [[0] * n for _ in range(n)]
    for u in range(n):
        for v in range(u + 1, n):
            w = rng.randint(lo_c, hi_c)
            cost[u][v] = w
            cost[v][u] = w

    total_demand = sum(d for _, _, d in requests)
    total_bw = -(-int(total_demand * tightness))  # ceil for ints
    weights = [rng.uniform(0.5, 1.5) for _ in range(n)]
    weight_sum = sum(weights)
    bandwidth = [int(total_bw * w / weight_sum) for w in weights]
    shortfall = total_bw - sum(bandwidth)
    for i in range(shortfall):
        bandwidth[i % n] += 1

    rrsp = RrspInstance(
        n_servers=n,
        n_contents=n_contents,
        holdings=tuple(frozenset(h) for h in holdings),
        bandwidth=tuple(bandwidth),
        requests=tuple(requests),
        server_cost=tuple(tuple(row) for row in cost),
    )
    rrsp.validate()
    return rrsp


def emit_stats(rows, columns=None) -> str:
    """Rows of dicts to CSV text with a stable column order.

    Columns default to the first row's key order; missing values print
    empty, floats with one decimal, everything else bare.
    """
    if columns is None:
        if not rows:
            raise ValueError("need explicit columns for an empty row set")
        columns = list(rows[0].keys())

    def fmt(value):
        if value is None:
            return ""
        if isinstance(value, float):
            return f"{value:.1f}"
        return str(value)

    out = [",".join(columns)]
    for row in rows:
        out.append(",".join(fmt(row.get(col)) for col in columns))
    return "\n".join(out) + "\n"
