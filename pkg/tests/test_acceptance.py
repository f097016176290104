"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s``.  The random-instance
criteria share one seeded universe of runs (the ``universe`` fixture) so
message bounds, slackness, and conflict exclusion are checked on the same
transcripts that establish oracle equality.
"""

import random
import statistics
from fractions import Fraction

import pytest

from cdnflow.auction import auction_tp, check_epsilon_cs
from cdnflow.cli import main as cli_main
from cdnflow.distinit import basis_completion, dist_init_protocol
from cdnflow.distts import TsServer, dist_ts
from cdnflow.instances import GeneratorParams, emit_rrsp, generate
from cdnflow.seq import (
    BasisState,
    brute_force_optimum,
    compute_duals,
    minimum_cost_method,
    northwest_corner,
    reduced_costs,
    transportation_simplex,
    validate_basis,
)
from cdnflow.tp import reduce_rrsp_to_tp

from conftest import random_balanced_tp

N_SMALL = 200
SMALL_SEED = 20260808


@pytest.fixture(scope="module")
def universe():
    """Criterion 1's corpus: every solver on 200 small random instances."""
    rng = random.Random(SMALL_SEED)
    runs = []
    for trial in range(N_SMALL):
        inst = random_balanced_tp(rng, n=rng.randint(2, 5), m=rng.randint(2, 5))
        opt = brute_force_optimum(inst)
        seq_nwc = transportation_simplex(inst, northwest_corner(inst))
        seq_mcm = transportation_simplex(inst, minimum_cost_method(inst))
        init_sol, init_tr = dist_init_protocol(inst)
        basis = basis_completion(inst, init_sol.x)
        delay = "unit" if trial % 2 == 0 else "uniform:1:5"
        dist = dist_ts(inst, basis, delay=delay, seed=trial % 7,
                       record_events=False)
        auct = auction_tp(inst, record_events=False)
        runs.append({
            "inst": inst,
            "opt": opt,
            "seq_nwc": seq_nwc,
            "seq_mcm": seq_mcm,
            "init_tr": init_tr,
            "dist": dist,
            "auct": auct,
        })
    return runs


@pytest.fixture(scope="module")
def parity_runs():
    """Criterion 3's corpus: 20 generated instances, both simplex variants
    started from the same heuristic basis."""
    out = []
    for k in range(20):
        n = 10 if k < 10 else 20
        rrsp = generate(GeneratorParams(
            n_servers=n, avg_requests_per_server=10, klass="medium",
            seed=300 + k,
        ))
        inst = reduce_rrsp_to_tp(rrsp)
        sol, init_tr = dist_init_protocol(inst)
        basis = basis_completion(inst, sol.x)
        dist = dist_ts(inst, basis, record_events=False)
        seq = transportation_simplex(inst, basis, validate=False)
        assert dist.stats.objective == seq.solution.objective
        out.append({"inst": inst, "dist": dist, "seq": seq, "init_tr": init_tr})
    return out


def test_criterion_1_oracle_equality(universe):
    for run in universe:
        opt = run["opt"]
        assert run["seq_nwc"].solution.objective == opt
        assert run["seq_mcm"].solution.objective == opt
        assert run["dist"].stats.objective == opt
        assert run["auct"].stats.objective == opt
    print(f"\ncriterion 1: PASS (oracle equality on {len(universe)} instances, "
          f"four solver routes, tolerance 0)")


def test_criterion_2_basis_invariants(universe):
    # sequential runs in the universe already validated every pivot
    # (transportation_simplex(validate=True) checks tree size, acyclicity,
    # exact conservation, and dual consistency after each step); here the
    # distributed runs get the same treatment: the final basis plus an
    # epoch-by-epoch omniscient audit on a fresh sample.
    for run in universe:
        inst = run["inst"]
        dist = run["dist"]
        final = BasisState(basic=set(dist.basis),
                           x=[row[:] for row in dist.solution.x])
        compute_duals(inst, final)
        validate_basis(inst, final)
        assert dist.u == final.u and dist.v == final.v

    audited = {"epochs": 0}
    orig = TsServer._start_pricing

    def audited_pricing(self):
        servers = audited["servers"]
        inst = audited["inst"]
        x = [[0] * inst.m for _ in range(inst.n)]
        basic = set()
        for i, srv in enumerate(servers):
            for j, f in srv.row_links.items():
                x[i][j] = f
                basic.add((i, j))
        state = BasisState(basic=basic, x=x)
        compute_duals(inst, state)
        validate_basis(inst, state)
        audited["epochs"] += 1
        orig(self)

    rng = random.Random(77)
    TsServer._start_pricing = audited_pricing
    try:
        from cdnflow.distts import _split_links
        from cdnflow.netsim import Kernel
        for _ in range(25):
            inst = random_balanced_tp(rng)
            basis = basis_completion(inst, dist_init_protocol(inst)[0].x)
            homes = inst.column_homes()
            rows, cols = _split_links(inst, homes, basis)
            kernel = Kernel(record_events=False)
            servers = [TsServer(inst, homes, rows[i], cols[i], 10_000)
                       for i in range(inst.n)]
            audited["servers"] = servers
            audited["inst"] = inst
            for i, s in enumerate(servers):
                kernel.spawn(i, s)
            kernel.run_until_quiescent()
    finally:
        TsServer._start_pricing = orig
    print(f"criterion 2: PASS (per-pivot sequential checks plus "
          f"{audited['epochs']} audited distributed epoch boundaries)")


def test_criterion_3_pivot_count_parity(parity_runs):
    ratios = [
        abs(r["dist"].stats.total_pivots - r["seq"].pivots)
        / max(1, r["seq"].pivots)
        for r in parity_runs
    ]
    med = statistics.median(ratios)
    assert med <= 0.5
    print(f"criterion 3: PASS (median relative pivot gap {med:.3f} <= 0.5 "
          f"over {len(parity_runs)} generated instances)")


def test_criterion_4_zero_pivot_reproduction():
    rng = random.Random(404)
    checked = 0
    tried = 0
    while checked < 5 and tried < 400:
        tried += 1
        inst = random_balanced_tp(rng, n=rng.randint(2, 4), m=rng.randint(2, 4))
        sol, _ = dist_init_protocol(inst)
        basis = basis_completion(inst, sol.x)
        rc = reduced_costs(inst, basis)
        if any(rc[i][j] < 0 for i in range(inst.n) for j in range(inst.m)):
            continue
        seq = transportation_simplex(inst, basis)
        dist = dist_ts(inst, basis, record_events=False)
        assert seq.pivots == 0
        assert dist.stats.total_pivots == 0
        checked += 1
    assert checked == 5, "could not find enough already-optimal heuristic starts"
    print(f"criterion 4: PASS ({checked} instances with an optimal initial "
          f"heuristic; both solvers report exactly 0 pivots)")


def test_criterion_5_message_bounds(universe, parity_runs):
    def check_dist(inst, stats):
        p = max(1, stats.parallel_rounds)
        assert stats.msg_count <= 20 * p * inst.n * inst.m
        assert stats.chain_len <= 20 * p * inst.n

    count = 0
    for run in universe:
        check_dist(run["inst"], run["dist"].stats)
        assert run["init_tr"].msg_count <= 5 * run["inst"].n * run["inst"].m
        count += 1
    for run in parity_runs:
        check_dist(run["inst"], run["dist"].stats)
        assert run["init_tr"].msg_count <= 5 * run["inst"].n * run["inst"].m
        count += 1
    print(f"criterion 5: PASS (msg_count <= 20*p*n*m, chain_len <= 20*p*n, "
          f"heuristic <= 5*n*m on {count} runs)")


def test_criterion_6_auction_message_trend():
    ratios = []
    for seed in range(10):
        rrsp = generate(GeneratorParams(
            n_servers=20, avg_requests_per_server=4, replication_degree=5,
            cost_range=(1, 20), bandwidth_tightness=1.5, seed=seed,
        ))
        inst = reduce_rrsp_to_tp(rrsp)
        auct = auction_tp(inst, record_events=False, max_events=40_000_000)
        sol, _ = dist_init_protocol(inst)
        dist = dist_ts(inst, basis_completion(inst, sol.x), record_events=False)
        assert auct.stats.objective == dist.stats.objective
        ratio = auct.stats.msg_count / max(1, dist.stats.msg_count)
        assert auct.stats.msg_count > 5 * dist.stats.msg_count
        ratios.append(ratio)
    print(f"criterion 6: PASS (auction/dist-ts message ratio "
          f"{min(ratios):.0f}x..{max(ratios):.0f}x > 5x on 10 instances, n=20)")


def test_criterion_7_heuristic_quality():
    gaps_mcm = []
    gaps_init = []
    sds = []
    kept = 0
    seed = 700
    while kept < 20:
        seed += 1
        rrsp = generate(GeneratorParams(
            n_servers=10, avg_requests_per_server=6, klass="medium", seed=seed,
        ))
        inst = reduce_rrsp_to_tp(rrsp)
        opt = transportation_simplex(
            inst, minimum_cost_method(inst), validate=False
        ).solution.objective
        mcm = minimum_cost_method(inst)
        from cdnflow.tp import check_feasible
        mcm_sol = check_feasible(inst, mcm.x)
        values = []
        feasible = not mcm_sol.uses_artificial
        for s in range(10):
            sol, _ = dist_init_protocol(inst, delay="uniform:1:5", seed=s)
            feasible = feasible and not sol.uses_artificial
            values.append(sol.objective)
        if not feasible:
            continue
        kept += 1
        gaps_mcm.append(100.0 * (mcm_sol.objective - opt) / opt)
        mean = statistics.fmean(values)
        gaps_init.append(100.0 * (mean - opt) / opt)
        sds.append(statistics.pstdev(values))
    mean_mcm = max(statistics.fmean(gaps_mcm), 0.5)
    mean_init = max(statistics.fmean(gaps_init), 0.5)
    assert mean_init <= 3 * mean_mcm
    assert mean_mcm <= 3 * mean_init
    print(f"criterion 7: PASS (mean %gap heuristic {statistics.fmean(gaps_init):.2f} "
          f"vs cheapest-cell {statistics.fmean(gaps_mcm):.2f} within factor 3; "
          f"per-instance seed SD mean {statistics.fmean(sds):.2f})")


def test_criterion_8_determinism(tmp_path):
    rrsp = generate(GeneratorParams(n_servers=5, avg_requests_per_server=5,
                                    klass="medium", seed=88))
    inst = reduce_rrsp_to_tp(rrsp)
    basis = basis_completion(inst, dist_init_protocol(inst)[0].x)

    pairs = []
    for _ in range(2):
        init_sol, init_tr = dist_init_protocol(inst, delay="uniform:1:5", seed=3)
        dist = dist_ts(inst, basis, delay="uniform:1:5", seed=3)
        auct = auction_tp(inst, delay="uniform:1:5", seed=3)
        pairs.append((
            init_tr.export_lines(), init_sol.x,
            dist.transcript.export_lines(), dist.solution.x,
            auct.transcript.export_lines(), auct.solution.x,
        ))
    assert pairs[0] == pairs[1]

    path = tmp_path / "det.rrsp"
    path.write_text(emit_rrsp(rrsp))
    outs = []
    for k in range(2):
        out = tmp_path / f"row{k}.csv"
        code = cli_main(["compare", str(path), "--algs", "seq-ts,dist-ts",
                         "--seed", "5", "--out", str(out)])
        assert code == 0
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
    print("criterion 8: PASS (replayed transcripts and CSV rows are "
          "byte-identical)")


def test_criterion_9_epsilon_optimality(universe):
    for run in universe:
        inst = run["inst"]
        auct = run["auct"]
        assert auct.epsilon < Fraction(1, min(inst.n, inst.m))
        assert check_epsilon_cs(inst, auct)
    print(f"criterion 9: PASS (epsilon below 1/min(n,m) and exact "
          f"complementary slackness on {len(universe)} auction runs)")


def test_criterion_10_conflict_cancellation(universe):
    # constructed two-cycle conflict: reduced costs -4 and -2 sharing (0, 0)
    from cdnflow.tp import TpInstance
    inst = TpInstance(
        n=3, m=3, b=[6, 2, 2], d=[4, 3, 3],
        c=[[5, 2, 2], [1, 2, 9], [3, 9, 2]],
        home=[0, 0, 0],
    )
    basis = BasisState(
        basic={(0, 0), (0, 1), (0, 2), (1, 1), (2, 2)},
        x=[[4, 1, 1], [0, 2, 0], [0, 0, 2]],
    )
    compute_duals(inst, basis)
    rc = reduced_costs(inst, basis)
    assert rc[1][0] == -4 and rc[2][0] == -2
    res = dist_ts(inst, basis)
    first = [p for p in res.applied if p.epoch == 1]
    assert len(first) == 1 and first[0].entering == (1, 0)
    assert res.transcript.tag_counts.get("cancel", 0) >= 1
    assert res.cancelled >= 1

    # no epoch anywhere in the random universe applies overlapping pivots
    overlap_checked = 0
    for run in universe:
        by_epoch = {}
        for piv in run["dist"].applied:
            by_epoch.setdefault(piv.epoch, []).append(set(piv.cells))
        for groups in by_epoch.values():
            for a in range(len(groups)):
                for b in range(a + 1, len(groups)):
                    assert not (groups[a] & groups[b])
                    overlap_checked += 1
    print(f"criterion 10: PASS (-4 cycle survives, -2 cancelled with a Cancel "
          f"message; {overlap_checked} same-epoch pivot pairs all disjoint)")
