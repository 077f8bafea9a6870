"""Exact Shapley values and pairwise interactions by subset enumeration,
the closed-form average interaction, and the sampled estimators used when
enumeration is out of reach."""
from __future__ import annotations

from math import factorial
from typing import Optional

import numpy as np

from interlab.errors import CapacityError, InvalidPairError
from interlab.game.core import Game, GridPartition, InteractionReport, SamplingPlan, TableGame

MAX_EXACT_PLAYERS = 20


def _popcount(a: np.ndarray) -> np.ndarray:
    if hasattr(np, "bitwise_count"):
        return np.bitwise_count(a).astype(np.int64)
    out = np.zeros_like(a)
    b = a.copy()
    while np.any(b):
        out += b & 1
        b >>= 1
    return out


def _all_masks(P: int) -> np.ndarray:
    codes = np.arange(2 ** P, dtype=np.int64)
    return ((codes[:, None] >> np.arange(P)) & 1).astype(bool)


def all_values(game: Game) -> np.ndarray:
    """v(S) for every S, indexed by bitmask (bit k <=> player k in S)."""
    P = game.n_players
    if P > MAX_EXACT_PLAYERS:
        raise CapacityError(
            f"{P} players is too many to enumerate (limit {MAX_EXACT_PLAYERS}); "
            "use mean_interaction_eq4 or mean_interaction_sampled instead")
    if isinstance(game, TableGame):
        return game.table
    return game.values(_all_masks(P))


def _check_player(P: int, *players: int):
    for p in players:
        if not 0 <= p < P:
            raise InvalidPairError(f"player {p} out of range [0, {P})")


def _shapley_weights(P: int) -> np.ndarray:
    """Weight of a coalition of size k (k = 0..P-1) not containing the player."""
    return np.array([factorial(k) * factorial(P - k - 1) / factorial(P) for k in range(P)])


def _shapley_from_table(table: np.ndarray, P: int, i: int) -> float:
    codes = np.arange(2 ** P, dtype=np.int64)
    without = codes[(codes >> i) & 1 == 0]
    s = _popcount(without)
    return float(np.sum(_shapley_weights(P)[s] * (table[without | (1 << i)] - table[without])))


def shapley_exact(game: Game, i: int, table: Optional[np.ndarray] = None) -> float:
    """phi(i) = sum_{S not containing i} |S|!(P-|S|-1)!/P! [v(S+i) - v(S)]."""
    P = game.n_players
    _check_player(P, i)
    table = all_values(game) if table is None else table
    return _shapley_from_table(table, P, i)


def shapley_all(game: Game) -> np.ndarray:
    table = all_values(game)
    return np.array([_shapley_from_table(table, game.n_players, i) for i in range(game.n_players)])


def _pair_weights(P: int) -> np.ndarray:
    return np.array([factorial(k) * factorial(P - k - 2) / factorial(P - 1) for k in range(P - 1)])


def _interaction_from_table(table: np.ndarray, P: int, i: int, j: int) -> float:
    a, b = min(i, j), max(i, j)
    codes = np.arange(2 ** P, dtype=np.int64)
    rest = codes[((codes >> a) & 1 == 0) & ((codes >> b) & 1 == 0)]
    w = _pair_weights(P)[_popcount(rest)]
    ia, ib = 1 << a, 1 << b
    delta = table[rest | ia | ib] - table[rest | ib] - table[rest | ia] + table[rest]
    return float(np.sum(w * delta))


def interaction_exact(game: Game, i: int, j: int, table: Optional[np.ndarray] = None) -> float:
    """Shapley interaction I_ij in closed form:
    sum_{S in Omega minus {i,j}} |S|!(P-|S|-2)!/(P-1)! [v(S+i+j) - v(S+j) - v(S+i) + v(S)].
    """
    P = game.n_players
    _check_player(P, i, j)
    if i == j:
        raise InvalidPairError("interaction needs two distinct players")
    table = all_values(game) if table is None else table
    return _interaction_from_table(table, P, i, j)


def interaction_matrix(game: Game) -> np.ndarray:
    """Symmetric P x P matrix of exact interactions (zero diagonal)."""
    P = game.n_players
    table = all_values(game)
    out = np.zeros((P, P))
    for i in range(P):
        for j in range(i + 1, P):
            out[i, j] = out[j, i] = _interaction_from_table(table, P, i, j)
    return out


def _drop_player_table(table: np.ndarray, P: int, j: int, present: bool) -> np.ndarray:
    """Table of the (P-1)-player game where player j is pinned present/absent."""
    codes = np.arange(2 ** (P - 1), dtype=np.int64)
    low = codes & ((1 << j) - 1)
    high = (codes >> j) << (j + 1)
    full = low | high
    if present:
        full = full | (1 << j)
    return table[full]


def interaction_alt_exact(game: Game, i: int, j: int) -> float:
    """Importance of i with j always present minus with j always absent,
    each computed as a plain Shapley value in the reduced (P-1)-player game."""
    P = game.n_players
    _check_player(P, i, j)
    if i == j:
        raise InvalidPairError("interaction needs two distinct players")
    table = all_values(game)
    i_reduced = i if i < j else i - 1
    with_j = _shapley_from_table(_drop_player_table(table, P, j, True), P - 1, i_reduced)
    without_j = _shapley_from_table(_drop_player_table(table, P, j, False), P - 1, i_reduced)
    return with_j - without_j


def pairwise_mean_bruteforce(game: Game) -> InteractionReport:
    """Average of I_ij over ordered pairs i != j, every term enumerated."""
    P = game.n_players
    if P < 2:
        raise InvalidPairError("average interaction needs at least two players")
    M = interaction_matrix(game)
    return InteractionReport(float(M.sum() / (P * (P - 1))), "brute-force", True, P)


def eq4_masks(P: int) -> np.ndarray:
    """Rows: full set, empty set, then (full minus i, {i}) for each i."""
    masks = np.zeros((2 + 2 * P, P), dtype=bool)
    masks[0] = True
    eye = np.eye(P, dtype=bool)
    masks[2::2] = ~eye
    masks[3::2] = eye
    return masks


def mean_interaction_eq4(game: Game) -> InteractionReport:
    """Average pairwise interaction from 2P + 2 utilities:
    1/(P-1) * mean_i [v(all) - v(all minus i) - v({i}) + v(empty)].
    """
    P = game.n_players
    if P < 2:
        raise InvalidPairError("average interaction needs at least two players")
    v = game.values(eq4_masks(P))
    terms = v[0] - v[2::2] - v[3::2] + v[1]
    return InteractionReport(float(terms.mean() / (P - 1)), "exact-eq4", True, P,
                             per_player_terms=terms.tolist())


def batch_terms(game: Game, batch_masks: np.ndarray) -> np.ndarray:
    """v(all) - v(all minus B) - v(B) + v(empty) for each batch mask B."""
    K, P = batch_masks.shape
    masks = np.concatenate([np.ones((1, P), bool), np.zeros((1, P), bool), ~batch_masks, batch_masks])
    v = game.values(masks)
    return v[0] - v[2:2 + K] - v[2 + K:] + v[1]


def mean_interaction_sampled(game: Game, plan: SamplingPlan = SamplingPlan()) -> InteractionReport:
    """Mean of K sampled batch terms, without the 1/(P-1) factor."""
    P = game.n_players
    batches = plan.draw(P)
    terms = batch_terms(game, batches)
    se = float(terms.std(ddof=1) / np.sqrt(plan.K)) if plan.K > 1 else None
    return InteractionReport(float(terms.mean()), "sampled", False, P, std_error=se,
                             plan={"K": plan.K, "batchsize": plan.batchsize, "seed": plan.seed,
                                   "disjoint": plan.disjoint})


def interaction_sampled(game: Game, i: int, j: int, samples: int = 100,
                        rng: Optional[np.random.Generator] = None) -> float:
    """Unbiased Monte-Carlo estimate of I_ij.

    In the closed-form sum the total weight of each coalition size is
    1/(P-1), so: draw a size uniformly from 0..P-2, then a uniform subset of
    the other players of that size.
    """
    P = game.n_players
    _check_player(P, i, j)
    if i == j:
        raise InvalidPairError("interaction needs two distinct players")
    rng = np.random.default_rng(0) if rng is None else rng
    others = np.array([k for k in range(P) if k not in (i, j)], dtype=np.int64)
    base = np.zeros((samples, P), dtype=bool)
    for m in range(samples):
        size = rng.integers(0, P - 1)
        base[m, rng.choice(others, size=size, replace=False)] = True
    with_i, with_j = base.copy(), base.copy()
    with_i[:, i] = True
    with_j[:, j] = True
    both = with_i.copy()
    both[:, j] = True
    v = game.values(np.concatenate([both, with_j, with_i, base]))
    s = samples
    return float(np.mean(v[:s] - v[s:2 * s] - v[2 * s:3 * s] + v[3 * s:]))


def neighbor_interactions(game: Game, grid: GridPartition, samples: int = 100, seed: int = 0,
                          exact: Optional[bool] = None) -> np.ndarray:
    """(L, L) map whose entry for a cell is its mean interaction with its 4-adjacent cells."""
    P = game.n_players
    if P != grid.n_cells:
        raise InvalidPairError(f"game has {P} players but the grid has {grid.n_cells} cells")
    if exact is None:
        exact = P <= 12
    table = all_values(game) if exact else None
    rng = np.random.default_rng(seed)
    pair_value: dict[tuple[int, int], float] = {}
    out = np.zeros(P)
    for a in range(P):
        vals = []
        for b in grid.neighbors(a):
            key = (min(a, b), max(a, b))
            if key not in pair_value:
                if exact:
                    pair_value[key] = _interaction_from_table(table, P, *key)
                else:
                    pair_value[key] = interaction_sampled(game, *key, samples=samples, rng=rng)
            vals.append(pair_value[key])
        out[a] = np.mean(vals) if vals else 0.0
    return out.reshape(grid.L, grid.L)
