from interlab.game.core import (
    CoalitionGame,
    FunctionGame,
    Game,
    GridPartition,
    InteractionReport,
    QuadraticGame,
    SamplingPlan,
    TableGame,
    load_game_table,
)
from interlab.game.exact import (
    MAX_EXACT_PLAYERS,
    all_values,
    batch_terms,
    interaction_alt_exact,
    interaction_exact,
    interaction_matrix,
    interaction_sampled,
    mean_interaction_eq4,
    mean_interaction_sampled,
    neighbor_interactions,
    pairwise_mean_bruteforce,
    shapley_all,
    shapley_exact,
)


def coalition_value(game: Game, cells) -> float:
    """v(S) for a coalition given as player indices or a boolean mask."""
    return game.value(cells)


__all__ = [
    "CoalitionGame", "FunctionGame", "Game", "GridPartition", "InteractionReport", "MAX_EXACT_PLAYERS",
    "QuadraticGame", "SamplingPlan", "TableGame", "all_values", "batch_terms", "coalition_value",
    "interaction_alt_exact", "interaction_exact", "interaction_matrix", "interaction_sampled",
    "load_game_table", "mean_interaction_eq4", "mean_interaction_sampled", "neighbor_interactions",
    "pairwise_mean_bruteforce", "shapley_all", "shapley_exact",
]
