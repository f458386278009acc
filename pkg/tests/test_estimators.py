"""Sample ledgers and the MSR / simple-MC / permutation estimators."""

import math

import numpy as np
import pytest

import robustval as rv
from robustval.estimators import _uniform_membership


def table_game(n, seed=0):
    rng = np.random.default_rng(seed)
    return rv.TableOracle(rng.uniform(size=1 << n), n)


CONSTANT_07 = rv.TableOracle(np.full(16, 0.7), 4)
ADDITIVE = rv.AdditiveOracle(np.array([0.1, 0.2, 0.3]))


class TestDrawLedger:
    def test_m_zero_rejected(self):
        with pytest.raises(rv.InvalidParam):
            rv.draw_ledger(CONSTANT_07, 4, 0, 1)

    def test_same_seed_is_bit_identical(self):
        a = rv.draw_ledger(CONSTANT_07, 4, 50, 123)
        b = rv.draw_ledger(CONSTANT_07, 4, 50, 123)
        assert [d.subset for d in a.draws] == [d.subset for d in b.draws]
        assert [d.eval_seed for d in a.draws] == [d.eval_seed for d in b.draws]
        np.testing.assert_array_equal(a.scores(), b.scores())

    def test_longer_run_extends_shorter_one(self):
        """The subset stream is a prefix-stable function of the seed."""
        short = rv.draw_ledger(CONSTANT_07, 4, 64, 9)
        long = rv.draw_ledger(CONSTANT_07, 4, 128, 9)
        assert [d.subset for d in long.draws[:64]] == [d.subset for d in short.draws]

    def test_binomial_concentration_of_partitions(self):
        """|S containing i| stays within m/2 +- 4*sqrt(m)/2 for nearly all seeds."""
        n, m = 10, 4096
        oracle = table_game(n, seed=2)
        half, band = m / 2, 4 * math.sqrt(m) / 2
        bad_seeds = 0
        for seed in range(100):
            counts = rv.draw_ledger(oracle, n, m, seed).membership_matrix().sum(axis=0)
            if np.any(np.abs(counts - half) > band):
                bad_seeds += 1
        assert bad_seeds <= 1

    def test_deterministic_oracle_not_reevaluated_for_duplicates(self):
        counter = rv.CountingOracle(table_game(3, seed=4))
        ledger = rv.draw_ledger(counter, 3, 200, 7)
        distinct = len({d.subset.mask for d in ledger.draws})
        assert counter.calls == distinct
        assert distinct < 200  # only 8 possible subsets

    def test_stochastic_oracle_reevaluated_every_draw(self):
        class Stochastic(rv.UtilityOracle):
            deterministic = False

            def __init__(self, n):
                self.n = n

            def evaluate(self, subset, eval_seed=None):
                return float(np.random.default_rng(eval_seed).uniform())

        counter = rv.CountingOracle(Stochastic(3))
        rv.draw_ledger(counter, 3, 200, 7)
        assert counter.calls == 200

    def test_duplicate_draws_share_score_only_when_deterministic(self):
        ledger = rv.draw_ledger(table_game(2, seed=1), 2, 64, 5)
        by_subset = {}
        for d in ledger.draws:
            by_subset.setdefault(d.subset.mask, set()).add(d.score)
        assert all(len(scores) == 1 for scores in by_subset.values())

    def test_oracle_failure_names_subset(self):
        def explode(subset):
            if subset.size == 2:
                raise RuntimeError("boom")
            return 0.5

        oracle = rv.FunctionOracle(explode, 3)
        with pytest.raises(rv.OracleFailure, match="subset"):
            rv.draw_ledger(oracle, 3, 40, 11)

    def test_out_of_range_score_rejected(self):
        oracle = rv.FunctionOracle(lambda s: 1.5, 3)
        with pytest.raises(rv.OracleFailure, match="outside"):
            rv.draw_ledger(oracle, 3, 5, 0)

    def test_parallel_evaluation_is_deterministic(self):
        oracle = table_game(6, seed=8)
        serial = rv.draw_ledger(oracle, 6, 300, 21, workers=1)
        parallel = rv.draw_ledger(oracle, 6, 300, 21, workers=4)
        np.testing.assert_array_equal(serial.scores(), parallel.scores())
        assert [d.subset for d in serial.draws] == [d.subset for d in parallel.draws]


class TestLedgerPersistence:
    def test_jsonl_round_trip(self, tmp_path):
        ledger = rv.draw_ledger(table_game(4, seed=3), 4, 25, 77)
        path = tmp_path / "run.ledger.jsonl"
        ledger.save(path)
        loaded = rv.SampleLedger.load(path)
        assert loaded.n == 4
        assert loaded.scheme == "uniform_powerset"
        assert loaded.sampler_seed == 77
        assert loaded.draws == ledger.draws

    def test_header_line_schema(self, tmp_path):
        import json

        ledger = rv.draw_ledger(CONSTANT_07, 4, 3, 1)
        path = tmp_path / "x.jsonl"
        ledger.save(path)
        lines = path.read_text().splitlines()
        assert json.loads(lines[0]) == {"n": 4, "sampler_seed": 1, "scheme": "uniform_powerset"}
        record = json.loads(lines[1])
        assert set(record) == {"idx", "subset", "score", "eval_seed"}

    def test_malformed_file_raises_storage_failure(self, tmp_path):
        path = tmp_path / "bad.jsonl"
        path.write_text('{"n": 4, "sampler_seed": 1, "scheme": "uniform_powerset"}\nnot json\n')
        with pytest.raises(rv.StorageFailure):
            rv.SampleLedger.load(path)

    def test_prefix_shares_records(self):
        ledger = rv.draw_ledger(CONSTANT_07, 4, 30, 2)
        pre = ledger.prefix(10)
        assert pre.draws == ledger.draws[:10]
        with pytest.raises(rv.InvalidParam):
            ledger.prefix(31)


class TestMsrEstimate:
    def test_constant_game_all_zero(self):
        ledger = rv.draw_ledger(CONSTANT_07, 4, 100, 5)
        est = rv.msr_estimate(ledger)
        np.testing.assert_allclose(est.values, 0.0, atol=1e-12)
        assert est.estimator == "msr"
        assert est.m == 100

    def test_single_draw_degenerates_every_point(self):
        ledger = rv.draw_ledger(table_game(5), 5, 1, 3)
        est = rv.msr_estimate(ledger)
        np.testing.assert_array_equal(est.values, 0.0)
        assert est.degenerate_points == tuple(range(5))

    def test_scheme_mismatch(self):
        _, ledger = rv.simple_mc_estimate(ADDITIVE, 3, 4, 0, return_ledger=True)
        with pytest.raises(rv.SchemeMismatch):
            rv.msr_estimate(ledger)

    def test_unbiased_for_banzhaf(self):
        """Mean over 1000 independent m=64 ledgers within 3 SE per point."""
        n, m, runs = 6, 64, 1000
        oracle = table_game(n, seed=12)
        exact = rv.exact_semivalue(oracle, rv.make_weights("banzhaf", n)).values
        samples = np.empty((runs, n))
        for r in range(runs):
            samples[r] = rv.msr_estimate(rv.draw_ledger(oracle, n, m, 5000 + r)).values
        mean = samples.mean(axis=0)
        se = samples.std(axis=0, ddof=1) / math.sqrt(runs)
        np.testing.assert_array_less(np.abs(mean - exact), 3 * se + 1e-12)

    def test_error_shrinks_with_budget(self):
        oracle = table_game(8, seed=13)
        exact = rv.exact_semivalue(oracle, rv.make_weights("banzhaf", 8)).values
        ledger = rv.draw_ledger(oracle, 8, 8192, 1)
        small = np.abs(rv.msr_estimate(ledger.prefix(128)).values - exact).max()
        large = np.abs(rv.msr_estimate(ledger).values - exact).max()
        assert large < small


class TestSimpleMc:
    def test_constant_game_all_zero(self):
        est = rv.simple_mc_estimate(CONSTANT_07, 4, 20, 9)
        np.testing.assert_array_equal(est.values, 0.0)

    def test_additive_game_exact_at_any_budget(self):
        for m in (1, 7):
            est = rv.simple_mc_estimate(ADDITIVE, 3, m, 31)
            np.testing.assert_allclose(est.values, [0.1, 0.2, 0.3], atol=1e-12)

    def test_importance_weighted_route_unbiased_for_shapley(self):
        n, m, runs = 4, 32, 400
        oracle = table_game(n, seed=14)
        spec = rv.make_weights("shapley", n)
        exact = rv.exact_semivalue(oracle, spec).values
        samples = np.empty((runs, n))
        for r in range(runs):
            samples[r] = rv.simple_mc_estimate(oracle, n, m, 9000 + r, spec=spec).values
        mean = samples.mean(axis=0)
        se = samples.std(axis=0, ddof=1) / math.sqrt(runs)
        np.testing.assert_array_less(np.abs(mean - exact), 3.5 * se + 1e-12)

    def test_m_zero_rejected(self):
        with pytest.raises(rv.InvalidParam):
            rv.simple_mc_estimate(ADDITIVE, 3, 0, 1)


class TestPermutationShapley:
    def test_constant_game_all_zero(self):
        est = rv.permutation_shapley_estimate(CONSTANT_07, 4, 10, 2)
        np.testing.assert_array_equal(est.values, 0.0)
        assert est.spec_label == "shapley"

    def test_additive_game_exact(self):
        est = rv.permutation_shapley_estimate(ADDITIVE, 3, 5, 6)
        np.testing.assert_allclose(est.values, [0.1, 0.2, 0.3], atol=1e-12)

    def test_converges_to_exact_shapley(self):
        oracle = table_game(8, seed=15)
        exact = rv.exact_semivalue(oracle, rv.make_weights("shapley", 8)).values
        est = rv.permutation_shapley_estimate(oracle, 8, 20_000, 3)
        assert np.abs(est.values - exact).max() <= 0.05

    def test_ledger_counts_n_plus_1_evals_per_permutation(self):
        _, ledger = rv.permutation_shapley_estimate(
            ADDITIVE, 3, 12, 4, return_ledger=True
        )
        assert len(ledger) == 12 * 4
        assert ledger.scheme == "permutation"


class TestBudgetAccounting:
    def test_msr_spends_exactly_m_evaluations(self):
        """At n=30 random subsets never collide, so dedup cannot hide calls."""
        weights = np.linspace(0.0, 1.0 / 30, 30)
        counter = rv.CountingOracle(rv.AdditiveOracle(weights))
        rv.msr_estimate(rv.draw_ledger(counter, 30, 500, 19))
        assert counter.calls == 500

    def test_simple_mc_spends_2nm_evaluations(self):
        counter = rv.CountingOracle(table_game(6, seed=16))
        rv.simple_mc_estimate(counter, 6, 40, 8)
        assert counter.calls == 2 * 6 * 40


class TestSamplePlanner:
    def test_msr_linf_formula(self):
        target = rv.ApproximationTarget(epsilon=0.1, delta=0.05)
        want = math.ceil(32 / 0.01 * math.log(5 * 10 / 0.05))
        assert rv.plan_sample_size(target, 10, "msr") == want

    def test_l2_scales_by_n(self):
        t_inf = rv.ApproximationTarget(epsilon=0.2, delta=0.1, norm="linf")
        t_l2 = rv.ApproximationTarget(epsilon=0.2, delta=0.1, norm="l2")
        m_inf = rv.plan_sample_size(t_inf, 8, "msr")
        m_l2 = rv.plan_sample_size(t_l2, 8, "msr")
        assert m_l2 == math.ceil(8 * (32 / 0.04) * math.log(5 * 8 / 0.1))
        assert m_l2 > m_inf

    def test_simple_mc_formula(self):
        target = rv.ApproximationTarget(epsilon=0.1, delta=0.05)
        want = math.ceil(math.log(2 * 10 / 0.05) / (2 * 0.01))
        assert rv.plan_sample_size(target, 10, "simple_mc") == want

    def test_target_validation(self):
        with pytest.raises(rv.InvalidParam):
            rv.ApproximationTarget(epsilon=0.0, delta=0.5)
        with pytest.raises(rv.InvalidParam):
            rv.ApproximationTarget(epsilon=0.1, delta=1.0)
        with pytest.raises(rv.InvalidParam):
            rv.ApproximationTarget(epsilon=0.1, delta=0.5, norm="l1")


class TestConvergenceTrace:
    def test_additive_game_perfect_rank_agreement(self):
        for estimator in ("msr", "simple_mc", "permutation"):
            trace = rv.convergence_trace(estimator, ADDITIVE, [16, 32, 64], 5)
            assert trace[-1].relative_spearman is None
            for point in trace[:-1]:
                assert point.relative_spearman == 1.0, estimator

    def test_budgets_count_oracle_evaluations(self):
        n = 5
        oracle = table_game(n, seed=17)
        budgets = [100, 200]
        msr = rv.convergence_trace("msr", oracle, budgets, 1)
        assert [p.estimate.m for p in msr] == budgets
        mc = rv.convergence_trace("simple_mc", oracle, budgets, 1)
        assert [p.estimate.m for p in mc] == [b // (2 * n) for b in budgets]
        perm = rv.convergence_trace("permutation", oracle, budgets, 1)
        assert [p.estimate.m for p in perm] == [b // (n + 1) for b in budgets]

    def test_nested_budgets_reuse_draws(self):
        """The m=256 estimate inside a trace equals MSR on the m=256 prefix."""
        oracle = table_game(6, seed=18)
        trace = rv.convergence_trace("msr", oracle, [256, 512], 33)
        direct = rv.msr_estimate(rv.draw_ledger(oracle, 6, 256, 33))
        np.testing.assert_array_equal(trace[0].estimate.values, direct.values)

    def test_empty_budget_list(self):
        assert rv.convergence_trace("msr", ADDITIVE, [], 0) == []

    def test_non_increasing_budgets_rejected(self):
        with pytest.raises(rv.InvalidParam):
            rv.convergence_trace("msr", ADDITIVE, [64, 64], 0)

    def test_unknown_estimator_rejected(self):
        with pytest.raises(rv.InvalidParam):
            rv.convergence_trace("antithetic", ADDITIVE, [16], 0)


def test_value_estimate_serialization():
    est = rv.msr_estimate(rv.draw_ledger(CONSTANT_07, 4, 10, 1))
    payload = est.to_dict()
    assert payload["estimator"] == "msr"
    assert payload["m"] == 10
    assert payload["exact"] is False
    assert payload["degenerate_points"] == []


def test_membership_stream_is_fair_coin_per_cell():
    rows = _uniform_membership(4, 20000, 42)
    freq = rows.mean(axis=0)
    np.testing.assert_allclose(freq, 0.5, atol=0.02)
