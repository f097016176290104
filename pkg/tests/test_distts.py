import random

import pytest

from cdnflow.distinit import basis_completion, dist_init_protocol
from cdnflow.distts import dist_ts, dual_propagation
from cdnflow.seq import (
    BasisState,
    brute_force_optimum,
    compute_duals,
    minimum_cost_method,
    northwest_corner,
    transportation_simplex,
    validate_basis,
)
from cdnflow.tp import TpInstance

from conftest import random_balanced_tp, t4_instance


def nwc_basis(inst):
    return northwest_corner(inst)


class TestDualPropagation:
    def test_matches_sequential_on_t1(self, t1):
        basis = BasisState(basic={(0, 0), (1, 0), (1, 1)}, x=[[3, 0], [2, 2]])
        compute_duals(t1, basis)
        u, v, _ = dual_propagation(t1, basis)
        assert u == [0, 2]
        assert v == [1, -1]

    def test_single_server_is_silent(self):
        inst = TpInstance(n=1, m=3, b=[6], d=[1, 2, 3], c=[[4, 5, 6]])
        basis = nwc_basis(inst)
        u, v, transcript = dual_propagation(inst, basis)
        assert transcript.msg_count == 0
        assert u == [0]
        assert v == [4, 5, 6]

    def test_varv_varu_count_equals_crossing_edges(self):
        # chain basis across 3 servers; requests homed round-robin
        inst = TpInstance(
            n=3, m=3, b=[2, 2, 2], d=[2, 2, 2],
            c=[[1, 2, 9], [9, 3, 4], [9, 9, 5]],
            home=[0, 1, 2],
        )
        basis = nwc_basis(inst)
        homes = inst.column_homes()
        crossing = sum(1 for (i, j) in basis.basic if homes[j] != i)
        u, v, transcript = dual_propagation(inst, basis)
        varvu = transcript.tag_counts.get("varv", 0) + transcript.tag_counts.get("varu", 0)
        assert varvu == crossing
        assert crossing <= inst.n + inst.m - 1
        seq = basis.copy()
        compute_duals(inst, seq)
        assert u == seq.u and v == seq.v

    def test_matches_sequential_on_random_instances(self):
        rng = random.Random(31)
        for _ in range(30):
            inst = random_balanced_tp(rng)
            basis = nwc_basis(inst)
            u, v, _ = dual_propagation(inst, basis)
            assert u == basis.u
            assert v == basis.v


class TestSinglePivot:
    def test_t4_pivot_applies(self, t4):
        init = BasisState(basic={(0, 0), (0, 1), (1, 1)}, x=[[2, 1], [0, 4]])
        compute_duals(t4, init)
        res = dist_ts(t4, init)
        assert res.solution.objective == 13
        assert res.stats.total_pivots == 1
        assert len(res.applied) == 1
        piv = res.applied[0]
        assert piv.entering == (1, 0)
        assert piv.leaving == (0, 0)
        assert piv.theta == 2
        assert res.solution.x == [[0, 3], [2, 2]]

    def test_t4_rebuilt_duals(self, t4):
        init = BasisState(basic={(0, 0), (0, 1), (1, 1)}, x=[[2, 1], [0, 4]])
        compute_duals(t4, init)
        res = dist_ts(t4, init)
        assert res.u == [0, 2]
        assert res.v == [0, 1]

    def test_t1_zero_pivots(self, t1):
        res = dist_ts(t1, nwc_basis(t1))
        assert res.solution.objective == 11
        assert res.stats.total_pivots == 0
        assert res.stats.parallel_rounds == 0

    def test_rebuild_matches_fresh_propagation(self):
        rng = random.Random(32)
        for _ in range(25):
            inst = random_balanced_tp(rng)
            res = dist_ts(inst, nwc_basis(inst))
            # rebuilt duals must equal a fresh propagation over the final basis
            final = BasisState(
                basic=set(res.basis), x=[row[:] for row in res.solution.x]
            )
            compute_duals(inst, final)
            assert res.u == final.u
            assert res.v == final.v


class TestParallelPivots:
    def test_disjoint_cycles_pivot_in_one_round(self):
        # two independent copies of the one-pivot instance, block diagonal
        # with prohibitive cross costs; requests homed on their own block
        t4 = t4_instance()
        big = 999
        inst = TpInstance(
            n=4, m=4,
            b=[3, 4, 3, 4],
            d=[2, 5, 2, 5],
            c=[
                [4, 1, big, big],
                [2, 3, big, big],
                [big, big, 4, 1],
                [big, big, 2, 3],
            ],
            home=[0, 1, 2, 3],
        )
        x = [
            [2, 1, 0, 0],
            [0, 4, 0, 0],
            [0, 0, 2, 1],
            [0, 0, 0, 4],
        ]
        basic = {(0, 0), (0, 1), (1, 1), (2, 2), (2, 3), (3, 3), (1, 2)}
        init = BasisState(basic=basic, x=x)
        compute_duals(inst, init)
        validate_basis(inst, init)
        res = dist_ts(inst, init)
        seq = transportation_simplex(inst, init)
        assert res.solution.objective == seq.solution.objective
        rounds_with_pivots = {p.epoch for p in res.applied}
        by_round = {}
        for p in res.applied:
            by_round.setdefault(p.epoch, []).append(p)
        # at least one round must have applied two block pivots together
        assert any(len(v) == 2 for v in by_round.values())

    def test_no_round_applies_overlapping_pivots(self):
        rng = random.Random(33)
        for _ in range(40):
            inst = random_balanced_tp(rng)
            res = dist_ts(inst, nwc_basis(inst))
            by_round = {}
            for p in res.applied:
                by_round.setdefault(p.epoch, []).append(set(p.cells))
            for groups in by_round.values():
                for a in range(len(groups)):
                    for b in range(a + 1, len(groups)):
                        assert not (groups[a] & groups[b])


class TestConflictCancellation:
    def conflict_instance(self):
        """Two candidate cycles sharing the basic cell (0, 0), with reduced
        costs -4 and -2.

        Servers 1 and 2 each propose an entering edge into column 0; both
        tree cycles run through the chain owned by server 0.
        """
        inst = TpInstance(
            n=3, m=3,
            b=[6, 2, 2],
            d=[4, 3, 3],
            c=[
                [5, 2, 2],
                [1, 2, 9],
                [3, 9, 2],
            ],
            home=[0, 0, 0],
        )
        x = [[4, 1, 1], [0, 2, 0], [0, 0, 2]]
        basic = {(0, 0), (0, 1), (0, 2), (1, 1), (2, 2)}
        basis = BasisState(basic=basic, x=x)
        compute_duals(inst, basis)
        return inst, basis

    def test_reduced_costs_as_designed(self):
        from cdnflow.seq import reduced_costs
        inst, basis = self.conflict_instance()
        rc = reduced_costs(inst, basis)
        assert rc[1][0] == -4  # server 1 candidate
        assert rc[2][0] == -2  # server 2 candidate

    def test_better_cycle_survives_worse_is_cancelled(self):
        inst, basis = self.conflict_instance()
        res = dist_ts(inst, basis)
        # exactly one pivot applied in round 1, from the better initiator
        first = [p for p in res.applied if p.epoch == 1]
        assert len(first) == 1
        assert first[0].initiator == 1
        assert res.cancelled >= 1
        assert res.transcript.tag_counts.get("cancel", 0) >= 1
        # and the run still ends optimal
        assert res.solution.objective == brute_force_optimum(inst)


class TestOracleEquality:
    def test_matches_brute_force_small(self):
        rng = random.Random(34)
        for _ in range(60):
            inst = random_balanced_tp(rng, n=rng.randint(2, 4), m=rng.randint(2, 4))
            res = dist_ts(inst, nwc_basis(inst))
            assert res.solution.objective == brute_force_optimum(inst)

    def test_matches_sequential_with_jitter(self):
        rng = random.Random(35)
        for trial in range(12):
            inst = random_balanced_tp(rng)
            seq = transportation_simplex(inst, minimum_cost_method(inst))
            res = dist_ts(inst, nwc_basis(inst), delay="uniform:1:5", seed=trial)
            assert res.solution.objective == seq.solution.objective

    def test_full_pipeline_from_heuristic(self):
        rng = random.Random(36)
        for _ in range(20):
            inst = random_balanced_tp(rng)
            sol, _ = dist_init_protocol(inst)
            basis = basis_completion(inst, sol.x)
            res = dist_ts(inst, basis)
            assert res.solution.objective == brute_force_optimum(inst)


class TestStats:
    def test_zero_pivot_run_reports_feasible_at_start(self, t1):
        res = dist_ts(t1, nwc_basis(t1))
        assert res.stats.feasible_pivots == 0
        assert res.stats.feasible_value == 11
        assert res.stats.feasible_round == 0

    def test_determinism(self):
        inst = random_balanced_tp(random.Random(37), n=4, m=5)
        a = dist_ts(inst, nwc_basis(inst), delay="uniform:1:5", seed=3)
        b = dist_ts(inst, nwc_basis(inst), delay="uniform:1:5", seed=3)
        assert a.transcript.export_lines() == b.transcript.export_lines()
        assert a.solution.x == b.solution.x

    def test_final_basis_is_spanning_tree(self):
        rng = random.Random(38)
        for _ in range(20):
            inst = random_balanced_tp(rng)
            res = dist_ts(inst, nwc_basis(inst))
            final = BasisState(
                basic=set(res.basis), x=[row[:] for row in res.solution.x]
            )
            compute_duals(inst, final)
            validate_basis(inst, final)
