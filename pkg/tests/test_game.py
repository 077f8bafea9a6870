
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from interlab.errors import CapacityError, ConfigError, InvalidPairError, ShapeError
from interlab.game import (
    CoalitionGame,
    FunctionGame,
    GridPartition,
    QuadraticGame,
    SamplingPlan,
    TableGame,
    coalition_value,
    interaction_alt_exact,
    interaction_exact,
    interaction_matrix,
    load_game_table,
    mean_interaction_eq4,
    mean_interaction_sampled,
    neighbor_interactions,
    pairwise_mean_bruteforce,
    shapley_all,
    shapley_exact,
)
from interlab.nnengine import loss, mlp, residual_mlp

from oracles import interaction_by_orderings, shapley_by_orderings, table_to_setfn


def random_game(P, seed):
    return TableGame(np.random.default_rng(seed).standard_normal(2 ** P))


def quadratic_game(n, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((n, n))
    return QuadraticGame(rng.standard_normal(n), B + B.T, scale * rng.standard_normal(n), const=0.3)


class TestCoalitionValue:
    def setup_method(self):
        self.model = mlp([6, 8, 3], seed=1)
        rng = np.random.default_rng(0)
        self.x = rng.random(6)
        self.delta = 0.1 * rng.standard_normal(6)

    def test_empty_is_clean_margin(self):
        game = CoalitionGame(self.model, self.x, self.delta, 2)
        assert coalition_value(game, []) == loss(self.model, self.x, 2, "margin")

    def test_zero_delta_constant(self):
        game = CoalitionGame(self.model, self.x, np.zeros(6), 0)
        v0 = coalition_value(game, [])
        for S in ([1], [0, 3], range(6)):
            assert coalition_value(game, S) == v0

    def test_full_set_equals_margin_loss(self):
        game = CoalitionGame(self.model, self.x, self.delta, 1)
        assert coalition_value(game, range(6)) == loss(self.model, self.x + self.delta, 1, "margin")

    def test_empty_independent_of_delta(self):
        a = CoalitionGame(self.model, self.x, self.delta, 1)
        b = CoalitionGame(self.model, self.x, -3 * self.delta, 1)
        assert coalition_value(a, []) == coalition_value(b, [])

    def test_grid_cells(self):
        grid = GridPartition(2, 3, 2)
        game = CoalitionGame(self.model, self.x, self.delta, 0, grid.cells())
        assert game.n_players == 4
        d = np.zeros(6)
        d[grid.cells()[1]] = self.delta[grid.cells()[1]]
        assert coalition_value(game, [1]) == loss(self.model, self.x + d, 0, "margin")

    def test_out_of_range_cell(self):
        game = CoalitionGame(self.model, self.x, self.delta, 0)
        with pytest.raises(InvalidPairError):
            coalition_value(game, [6])

    def test_bad_partition(self):
        with pytest.raises(ShapeError):
            CoalitionGame(self.model, self.x, self.delta, 0, [[0, 1], [1, 2, 3, 4, 5]])


class TestGrid:
    def test_uneven_division_front_loaded(self):
        grid = GridPartition(5, 7, 2)
        cells = grid.cells()
        assert [c.size for c in cells] == [3 * 4, 3 * 3, 2 * 4, 2 * 3]
        assert sorted(np.concatenate(cells).tolist()) == list(range(35))

    def test_cell_sizes_differ_by_at_most_one_row_or_col(self):
        grid = GridPartition(10, 10, 3)
        sizes = {c.size for c in grid.cells()}
        assert sizes <= {16, 12, 9}

    def test_neighbors(self):
        grid = GridPartition(3, 3, 3)
        assert sorted(grid.neighbors(4)) == [1, 3, 5, 7]
        assert sorted(grid.neighbors(0)) == [1, 3]

    def test_too_fine(self):
        with pytest.raises(ConfigError):
            GridPartition(4, 4, 5)


class TestShapley:
    def test_additive_game_dummy(self):
        c = np.array([0.5, -1.0, 2.0, 0.25])
        game = FunctionGame(lambda m: float(c[m].sum()), 4)
        np.testing.assert_allclose(shapley_all(game), c, atol=1e-12)

    def test_symmetric_players(self):
        game = FunctionGame(lambda m: float(m.sum() ** 2), 5)
        phi = shapley_all(game)
        np.testing.assert_allclose(phi, phi[0], atol=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_efficiency_random_six_players(self, seed):
        game = random_game(6, seed)
        assert shapley_all(game).sum() == pytest.approx(game.table[-1] - game.table[0], abs=1e-10)

    @pytest.mark.parametrize("seed", range(3))
    def test_matches_ordering_oracle(self, seed):
        game = random_game(5, seed)
        oracle = shapley_by_orderings(table_to_setfn(game.table), range(5))
        for i in range(5):
            assert shapley_exact(game, i) == pytest.approx(oracle[i], abs=1e-12)

    def test_capacity(self):
        game = FunctionGame(lambda m: 0.0, 21)
        with pytest.raises(CapacityError):
            shapley_exact(game, 0)


class TestInteraction:
    def test_additive_zero(self):
        c = np.arange(5.0)
        game = FunctionGame(lambda m: float(c[m].sum()), 5)
        np.testing.assert_allclose(interaction_matrix(game), 0.0, atol=1e-12)

    def test_pure_and(self):
        game = FunctionGame(lambda m: float(m[1] and m[3]), 5)
        oracle = interaction_by_orderings(lambda S: float(1 in S and 3 in S), 5, 1, 3)
        assert oracle == pytest.approx(1.0)
        assert interaction_exact(game, 1, 3) == pytest.approx(oracle, abs=1e-12)

    @pytest.mark.parametrize("seed", range(3))
    def test_random_matches_ordering_oracle(self, seed):
        game = random_game(5, seed)
        v = table_to_setfn(game.table)
        for i, j in [(0, 1), (2, 4), (3, 1)]:
            assert interaction_exact(game, i, j) == pytest.approx(interaction_by_orderings(v, 5, i, j), abs=1e-10)

    @pytest.mark.parametrize("seed", range(5))
    def test_quadratic_lemma_exact(self, seed):
        game = quadratic_game(7, seed)
        for i, j in [(0, 1), (2, 6), (5, 3)]:
            expected = game.delta[i] * game.hessian[i, j] * game.delta[j]
            assert interaction_exact(game, i, j) == pytest.approx(expected, abs=1e-10)

    def test_symmetric_bitwise(self):
        game = random_game(7, 3)
        for i in range(7):
            for j in range(i + 1, 7):
                assert interaction_exact(game, i, j) == interaction_exact(game, j, i)

    def test_same_player_rejected(self):
        with pytest.raises(InvalidPairError):
            interaction_exact(random_game(3, 0), 1, 1)
        with pytest.raises(InvalidPairError):
            interaction_alt_exact(random_game(3, 0), 2, 2)


class TestAltInteraction:
    @pytest.mark.parametrize("P", range(2, 9))
    def test_equals_closed_form(self, P):
        game = random_game(P, P)
        for i in range(P):
            for j in range(P):
                if i != j:
                    assert abs(interaction_alt_exact(game, i, j) - interaction_exact(game, i, j)) < 1e-10

    def test_additive_zero(self):
        c = np.arange(4.0)
        game = FunctionGame(lambda m: float(c[m].sum()), 4)
        assert interaction_alt_exact(game, 0, 3) == pytest.approx(0.0, abs=1e-12)


class TestEq4:
    def test_two_players(self):
        game = random_game(2, 0)
        report = mean_interaction_eq4(game)
        assert report.mean_interaction == pytest.approx(interaction_exact(game, 0, 1), abs=1e-14)
        assert pairwise_mean_bruteforce(game).mean_interaction == pytest.approx(report.mean_interaction)

    def test_zero_delta(self):
        model = mlp([5, 6, 3], seed=0)
        game = CoalitionGame(model, np.full(5, 0.5), np.zeros(5), 0)
        assert mean_interaction_eq4(game).mean_interaction == 0.0

    @pytest.mark.parametrize("seed", range(4))
    def test_random_game_eight_players(self, seed):
        game = random_game(8, seed)
        assert abs(mean_interaction_eq4(game).mean_interaction
                   - pairwise_mean_bruteforce(game).mean_interaction) < 1e-10

    def test_model_game(self):
        model = residual_mlp(9, 12, 4, seed=2)
        rng = np.random.default_rng(1)
        game = CoalitionGame(model, rng.random(9), 0.2 * rng.standard_normal(9), 3)
        assert abs(mean_interaction_eq4(game).mean_interaction
                   - pairwise_mean_bruteforce(game).mean_interaction) < 1e-9

    def test_report_bookkeeping(self):
        game = random_game(6, 1)
        r = mean_interaction_eq4(game)
        assert r.normalized and r.estimator == "exact-eq4"
        assert r.mean_interaction == np.mean(r.per_player_terms) / 5

    def test_needs_two_players(self):
        with pytest.raises(InvalidPairError):
            mean_interaction_eq4(random_game(1, 0))


class TestSampled:
    def test_disjoint_singletons_recover_eq4(self):
        game = random_game(9, 2)
        r = mean_interaction_sampled(game, SamplingPlan(K=9, batchsize=1, seed=5, disjoint=True))
        assert not r.normalized
        assert r.mean_interaction == pytest.approx(8 * mean_interaction_eq4(game).mean_interaction,
                                                   rel=1e-12, abs=1e-14)

    def test_zero_delta(self):
        model = mlp([8, 6, 3], seed=0)
        game = CoalitionGame(model, np.full(8, 0.5), np.zeros(8), 1)
        assert mean_interaction_sampled(game, SamplingPlan(K=4, batchsize=3)).mean_interaction == 0.0

    def test_quadratic_within_three_se(self):
        n, k = 40, 8
        game = quadratic_game(n, 11, scale=0.3)
        D = np.outer(game.delta, game.delta) * game.hessian
        cross = D.sum() - np.trace(D)
        expected = k * (n - k) / (n * (n - 1)) * cross
        r = mean_interaction_sampled(game, SamplingPlan(K=2048, batchsize=k, seed=3))
        assert abs(r.mean_interaction - expected) < 3 * r.std_error

    def test_seed_stable(self):
        game = random_game(10, 0)
        plan = SamplingPlan(K=16, batchsize=4, seed=9)
        assert mean_interaction_sampled(game, plan) == mean_interaction_sampled(game, plan)

    def test_batchsize_too_large(self):
        with pytest.raises(ConfigError):
            mean_interaction_sampled(random_game(4, 0), SamplingPlan(K=2, batchsize=5))

    def test_se_shrinks_like_inverse_sqrt_k(self):
        game = quadratic_game(48, 5, scale=0.5)
        Ks = [8, 32, 128, 512]
        ses = []
        for K in Ks:
            est = [mean_interaction_sampled(game, SamplingPlan(K=K, batchsize=6, seed=s)).mean_interaction
                   for s in range(200)]
            ses.append(np.std(est, ddof=1))
        slope = np.polyfit(np.log(Ks), np.log(ses), 1)[0]
        assert -0.6 <= slope <= -0.4


class TestNeighbor:
    def test_additive_zero(self):
        grid = GridPartition(3, 3, 3)
        c = np.arange(9.0)
        game = FunctionGame(lambda m: float(c[m].sum()), 9)
        np.testing.assert_allclose(neighbor_interactions(game, grid), 0.0, atol=1e-12)

    def test_zero_delta(self):
        grid = GridPartition(4, 4, 4)
        game = CoalitionGame(mlp([16, 8, 3], seed=0), np.full(16, 0.5), np.zeros(16), 0, grid.cells())
        np.testing.assert_array_equal(neighbor_interactions(game, grid, samples=10), 0.0)

    @pytest.mark.parametrize("exact", [True, False])
    def test_single_adjacent_hessian_pair(self, exact):
        grid = GridPartition(4, 4, 4)
        n = 16
        a, b = grid.cell_index(1, 1), grid.cell_index(1, 2)
        H = np.zeros((n, n))
        H[a, b] = H[b, a] = 0.7
        delta = np.linspace(0.5, 1.5, n)
        game = QuadraticGame(np.ones(n), H, delta, grid.cells())
        out = neighbor_interactions(game, grid, samples=20, exact=exact).ravel()
        value = delta[a] * 0.7 * delta[b]
        expect = np.zeros(n)
        expect[a] = value / len(grid.neighbors(a))
        expect[b] = value / len(grid.neighbors(b))
        np.testing.assert_allclose(out, expect, atol=1e-12)


class TestTableJson:
    def test_round_trip(self, tmp_path):
        game = random_game(4, 0)
        (tmp_path / "g.json").write_text(game.to_json())
        again = load_game_table(tmp_path / "g.json")
        np.testing.assert_array_equal(again.table, game.table)

    def test_inconsistent_P(self):
        with pytest.raises(ShapeError):
            TableGame.from_json('{"P": 3, "values": [0, 1, 2, 3]}')


# --- Shapley axioms as properties -----------------------------------------

tables = st.integers(min_value=2, max_value=8).flatmap(
    lambda P: st.tuples(st.just(P), st.integers(0, 2 ** 31 - 1)))


@settings(max_examples=100, deadline=None)
@given(tables)
def test_axiom_linearity(arg):
    P, seed = arg
    rng = np.random.default_rng(seed)
    v, w = rng.standard_normal(2 ** P), rng.standard_normal(2 ** P)
    np.testing.assert_allclose(shapley_all(TableGame(v + w)),
                               shapley_all(TableGame(v)) + shapley_all(TableGame(w)), atol=1e-10)


@settings(max_examples=100, deadline=None)
@given(tables)
def test_axiom_efficiency(arg):
    P, seed = arg
    game = random_game(P, seed)
    assert abs(shapley_all(game).sum() - (game.table[-1] - game.table[0])) < 1e-10


@settings(max_examples=100, deadline=None)
@given(tables, st.data())
def test_axiom_dummy(arg, data):
    P, seed = arg
    rng = np.random.default_rng(seed)
    i = data.draw(st.integers(0, P - 1))
    base = rng.standard_normal(2 ** P)
    codes = np.arange(2 ** P)
    # make player i a dummy: v(S + i) = v(S) + c for all S without i
    c = rng.standard_normal()
    without = codes[(codes >> i) & 1 == 0]
    base[without | (1 << i)] = base[without] + c
    game = TableGame(base)
    assert abs(shapley_exact(game, i) - (game.table[1 << i] - game.table[0])) < 1e-10


@settings(max_examples=100, deadline=None)
@given(tables, st.data())
def test_axiom_symmetry(arg, data):
    P, seed = arg
    i, j = data.draw(st.lists(st.integers(0, P - 1), min_size=2, max_size=2, unique=True))
    rng = np.random.default_rng(seed)
    table = rng.standard_normal(2 ** P)
    codes = np.arange(2 ** P)
    # v(S + i) = v(S + j) for every S avoiding both
    rest = codes[((codes >> i) & 1 == 0) & ((codes >> j) & 1 == 0)]
    table[rest | (1 << j)] = table[rest | (1 << i)]
    game = TableGame(table)
    assert abs(shapley_exact(game, i) - shapley_exact(game, j)) < 1e-10
