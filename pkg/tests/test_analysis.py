import json

import numpy as np
import pytest
from scipy import stats

from interlab.analysis import (
    attack_all,
    bootstrap_ci,
    correlation_sweep,
    grid_interaction,
    heatmap_rows,
    interaction_heatmap,
    interaction_only_curve,
    lambda_sweep,
    loo_select,
    loo_transferability,
    match_magnitude,
    paired_trend,
    pearson,
    pmap,
    multi_step_leading_term,
    proposition_suite,
    read_csv,
    read_json,
    report_json,
    success_flags,
    success_matrix,
    transfer_report,
    transfer_utilities,
    transfer_utility,
    write_csv,
    write_json,
)
from interlab.attacks import AttackConfig, attack_pgd
from interlab.errors import ConfigError, ConsistencyError, LabelError, UnsupportedActivationError
from interlab.game import GridPartition
from interlab.nnengine import forward_batch, linear, mlp, residual_mlp

from oracles import pearson_two_pass

GRID = GridPartition(4, 4, 2)


def inputs(seed, count, n=16, C=4):
    rng = np.random.default_rng(seed)
    return rng.uniform(0.2, 0.8, (count, n)), rng.integers(0, C, count)


@pytest.fixture(scope="module")
def zoo():
    return (mlp([16, 12, 12, 4], seed=0, name="src"),
            [mlp([16, 10, 4], seed=1, name="t1"), residual_mlp(16, 10, 4, seed=2, name="t2")])


class TestTransferUtility:
    def test_zero_delta(self, zoo):
        src, targets = zoo
        X, y = inputs(0, 5)
        for t in [src, *targets]:
            assert np.all(transfer_utilities(t, X, y, np.zeros_like(X)) == 0.0)

    def test_white_box_positive(self, zoo):
        src, _ = zoo
        X, y = inputs(1, 10)
        for x, t in zip(X, y):
            tr = attack_pgd(src, x, int(t), AttackConfig(epsilon=0.3, step_size=0.05, steps=20))
            if tr.success:
                assert transfer_utility(src, x, int(t), tr.final_delta) > 0

    def test_two_class_linear_closed_form(self):
        rng = np.random.default_rng(3)
        W = rng.standard_normal((2, 5))
        model = linear(W, rng.standard_normal(2))
        x, d = rng.uniform(0.3, 0.7, 5), 0.1 * rng.standard_normal(5)
        for y in (0, 1):
            expected = (W[1 - y] - W[y]) @ d
            assert transfer_utility(model, x, y, d) == pytest.approx(expected, abs=1e-13)

    def test_label_out_of_range(self, zoo):
        src, _ = zoo
        with pytest.raises(LabelError):
            transfer_utility(src, np.full(16, 0.5), 9, np.zeros(16))

    def test_report_invariants(self, zoo):
        src, targets = zoo
        X, y = inputs(4, 8)
        D = 0.2 * np.random.default_rng(4).standard_normal(X.shape)
        rep = transfer_report("src", targets[0], X, y, D, tags={"method": "pgd"})
        for r in rep.records:
            assert r.transfer_utility == r.perturbed_margin - r.clean_margin
        np.testing.assert_array_equal([r.success for r in rep.records], success_flags(targets[0], X, y, D))
        json.dumps(rep.to_dict())


class TestLOO:
    def test_constant_matrix_picks_zero(self):
        np.testing.assert_array_equal(loo_select(np.ones((6, 5), bool)), 0)
        np.testing.assert_array_equal(loo_select(np.zeros((6, 5), bool)), 0)

    def test_dominant_step(self):
        S = np.zeros((5, 10), bool)
        S[:, 7] = True
        S[0, 2] = True
        np.testing.assert_array_equal(loo_select(S), 7)

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_double_loop(self, seed):
        S = np.random.default_rng(seed).random((5, 4)) < 0.5
        expected = []
        for i in range(5):
            best, best_t = -1.0, None
            for t in range(4):
                rate = sum(S[k, t] for k in range(5) if k != i) / 4
                if rate > best:
                    best, best_t = rate, t
            expected.append(best_t)
        np.testing.assert_array_equal(loo_select(S), expected)

    def test_order_invariant(self):
        rng = np.random.default_rng(0)
        S = rng.random((9, 6)) < 0.4
        perm = rng.permutation(9)
        np.testing.assert_array_equal(loo_select(S)[perm], loo_select(S[perm]))
        assert loo_transferability(S)[0] == loo_transferability(S[perm])[0]

    def test_needs_two_examples(self):
        with pytest.raises(ValueError):
            loo_select(np.ones((1, 3), bool))

    def test_success_matrix_from_traces(self, zoo):
        src, targets = zoo
        X, y = inputs(5, 4)
        traces = attack_all(src, X, y, AttackConfig(steps=5, epsilon=0.2))
        S = success_matrix(targets[0], X, y, traces)
        assert S.shape == (4, 6)
        clean_wrong = np.argmax(forward_batch(targets[0], X), axis=1) != y
        np.testing.assert_array_equal(S[:, 0], clean_wrong)
        with pytest.raises(ConsistencyError):
            success_matrix(targets[0], X[:3], y[:3], traces)


class TestStats:
    def test_undefined_on_zero_variance(self):
        c = pearson([1.0, 1.0, 1.0], [0.2, 0.5, 0.9])
        assert not c.defined and c.r is None
        assert not pearson([0.3, 0.3], [0.3, 0.3]).defined

    def test_anti_diagonal(self):
        assert pearson([1, 2, 3, 4], [-1, -2, -3, -4]).r == pytest.approx(-1.0, abs=1e-15)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_two_pass_oracle(self, seed):
        rng = np.random.default_rng(seed)
        a, b = rng.standard_normal(30), rng.standard_normal(30)
        assert abs(pearson(a, b).r - pearson_two_pass(list(a), list(b))) < 1e-12
        assert abs(pearson(a, b).r - stats.pearsonr(a, b)[0]) < 1e-12

    def test_bootstrap_ci(self):
        v = np.random.default_rng(0).normal(1.0, 0.5, 400)
        lo, hi = bootstrap_ci(v, seed=1)
        assert lo < v.mean() < hi
        assert (lo, hi) == bootstrap_ci(v, seed=1)
        se = v.std(ddof=1) / 20
        assert hi - lo == pytest.approx(2 * 1.96 * se, rel=0.15)

    @pytest.mark.parametrize("shift,sign,verdict", [(1.0, 1, "pass"), (-1.0, 1, "fail"), (0.0, 1, "warn"),
                                                    (-1.0, -1, "pass"), (1.0, -1, "fail")])
    def test_trend_verdicts(self, shift, sign, verdict):
        diffs = shift + np.random.default_rng(2).normal(0, 0.1, 200) - (0 if shift else np.mean(
            np.random.default_rng(2).normal(0, 0.1, 200)))
        assert paired_trend("x", diffs, sign).verdict == verdict


class TestMagnitude:
    def test_match(self):
        d = match_magnitude([3.0, 4.0], [0.0, 1.0])
        np.testing.assert_allclose(d, [0.6, 0.8])
        np.testing.assert_array_equal(match_magnitude(np.zeros(3), [1, 1, 1]), 0.0)


class TestCorrelationSweep:
    def test_too_few_points(self, zoo):
        src, targets = zoo
        X, y = inputs(0, 3)
        with pytest.raises(ConfigError):
            correlation_sweep(src, targets, X, y, [0.0, 1.0], [2.0], 0.3, GRID)

    def test_points_share_example_set(self, zoo):
        src, targets = zoo
        X, y = inputs(6, 6)
        base = AttackConfig(method="opt", loss="margin", step_size=0.01, opt_steps=300)
        sweep = correlation_sweep(src, targets, X, y, [0.0, 0.5, 1.0], [2.0], 0.3, GRID, base)
        assert len(sweep.points) == 3
        for pt in sweep.points:
            kept = sweep.kept_examples
            D = []
            for i in kept:
                tr = attack_all(src, X[i:i + 1], y[i:i + 1],
                                base.replace(c=pt.c, p_relax=pt.p_relax, tau=0.3, seed=base.seed + i))[0]
                D.append(tr.final_delta)
            D = np.array(D)
            assert pt.mean_interaction == pytest.approx(
                np.mean([grid_interaction(src, X[i], int(y[i]), d, GRID) for i, d in zip(kept, D)]), abs=1e-15)
            assert pt.mean_transfer_utility["t1"] == pytest.approx(
                transfer_utilities(targets[0], X[kept], y[kept], D).mean(), abs=1e-15)
        assert set(sweep.correlations) == {"t1", "t2"}
        assert len(sweep.csv_rows()) == 6


class TestLambdaSweep:
    def test_needs_zero(self, zoo):
        src, targets = zoo
        X, y = inputs(0, 3)
        with pytest.raises(ConfigError):
            lambda_sweep(src, targets, X, y, [1.0, 2.0], GRID)

    def test_zero_row_is_pgd_baseline(self, zoo):
        src, targets = zoo
        X, y = inputs(7, 6)
        base = AttackConfig(method="ir", steps=6, epsilon=0.2, step_size=0.05, grid_L=2, K=4, batchsize=2,
                            height=4, width=4)
        sweep = lambda_sweep(src, targets, X, y, [0.0, 1.0], GRID, base)
        pgd = attack_all(src, X, y, base.replace(method="pgd"))
        for t in targets:
            rate, _ = loo_transferability(success_matrix(t, X, y, pgd))
            assert sweep.rate(0.0, t.name) == rate
        assert set(sweep.mean_interaction) == {0.0, 1.0}


class TestInteractionOnlyCurve:
    def test_epoch_zero_is_clean_error_and_noise_seeded(self, zoo):
        src, targets = zoo
        X, y = inputs(8, 6)
        cfg = AttackConfig(lam=1.0, steps=5, epsilon=0.2, grid_L=2, K=4, batchsize=2, height=4, width=4)
        a = interaction_only_curve(src, targets, X, y, cfg)
        b = interaction_only_curve(src, targets, X, y, cfg)
        for t in targets:
            assert a.curves[t.name][0] == a.clean_error[t.name]
        assert a.noise_rate == b.noise_rate
        assert a.steps[0] == 0 and len(a.csv_rows()) == 2 * (len(a.steps) + 1)


class TestPropositions:
    def test_linear_model_differences_vanish(self):
        rng = np.random.default_rng(0)
        model = linear(rng.standard_normal((4, 16)), name="lin")
        X, y = inputs(9, 5)
        cfg = AttackConfig(steps=5, epsilon=0.1, vr_samples=4)
        rep = proposition_suite([model], X, y, cfg, GRID, hessian_examples=0)
        for values in rep.interactions.values():
            np.testing.assert_allclose(values, 0.0, atol=1e-12)
        for tr in rep.trends:
            assert abs(tr.mean) < 1e-12

    @pytest.mark.parametrize("seed", range(5))
    def test_quadratic_leading_term(self, seed):
        rng = np.random.default_rng(seed)
        n, m, alpha = 6, 5, 1e-3
        A = 0.3 * rng.standard_normal((n, n))
        H = A + A.T
        g = rng.standard_normal(n)
        d = np.zeros(n)
        for _ in range(m):
            d = d + alpha * (g + H @ d)
        single = alpha * m * g
        off = ~np.eye(n, dtype=bool)
        # on a quadratic loss I_ab = delta_a H_ab delta_b
        diff = (np.outer(d, d) * H - np.outer(single, single) * H)[off].mean()
        lead = multi_step_leading_term(g, H, alpha, m)
        assert np.sign(diff) == np.sign(lead)
        assert diff == pytest.approx(lead, rel=0.05)

    def test_hessian_histograms_on_softplus(self):
        models = [mlp([16, 12, 4], seed=s, name=f"m{s}") for s in range(2)]
        X, y = inputs(10, 3)
        rep = proposition_suite(models, X, y, AttackConfig(steps=3, vr_samples=2), GRID, hessian_examples=2)
        assert rep.hessian_abs["max"] < 1.0
        assert rep.hessian_abs["median"] < 0.05
        assert sum(rep.hessian_abs["counts"]) == 2 * 2 * 16 * 15
        assert {t.name for t in rep.trends} == {"multi-vs-single", "multi-vs-gaussian", "vr-vs-pgd", "mi-vs-pgd"}
        assert all(len(v) == 6 for v in rep.interactions.values())

    def test_relu_hessian_rejected(self):
        model = mlp([16, 8, 4], activation="relu", seed=0)
        X, y = inputs(0, 2)
        with pytest.raises(UnsupportedActivationError):
            proposition_suite([model], X, y, AttackConfig(steps=2, vr_samples=2), GRID, hessian_examples=1)


class TestParallel:
    def test_jobs_do_not_change_results(self, zoo):
        src, _ = zoo
        X, y = inputs(11, 5)
        cfg = AttackConfig(method="ir", lam=1.0, steps=4, grid_L=2, K=3, batchsize=2, height=4, width=4)
        one = attack_all(src, X, y, cfg, jobs=1)
        two = attack_all(src, X, y, cfg, jobs=2)
        for a, b in zip(one, two):
            assert a.deltas.tobytes() == b.deltas.tobytes()

    def test_pmap_order(self):
        assert pmap(abs, [-3, 1, -2], jobs=2) == [3, 1, 2]


class TestHeatmapAndReports:
    def test_heatmap_rows(self, zoo):
        src, _ = zoo
        x = np.full(16, 0.5)
        H = interaction_heatmap(src, x, 0, 0.1 * np.ones(16), GRID)
        rows = heatmap_rows(H)
        assert H.shape == (2, 2) and len(rows) == 4
        assert rows[3][:2] == (1, 1)

    def test_json_stamp_and_metadata_isolated(self, tmp_path):
        write_json(tmp_path / "a.json", {"x": np.float64(1.5), "v": np.arange(2)}, "abc")
        doc = read_json(tmp_path / "a.json")
        assert doc["manifest_hash"] == "abc" and doc["report"] == {"x": 1.5, "v": [0, 1]}
        assert "written_at" in doc["metadata"]
        assert json.loads(report_json({"x": 1.5, "v": [0, 1]}, "abc")) == {k: doc[k] for k in ("manifest_hash", "report")}

    def test_csv_stamp(self, tmp_path):
        write_csv(tmp_path / "a.csv", ["row", "col", "value"], [(0, 1, 0.25)], "abc")
        digest, header, rows = read_csv(tmp_path / "a.csv")
        assert digest == "abc" and header == ["row", "col", "value"] and rows == [["0", "1", "0.25"]]
