"""KL-regularized search in games: anchored regret minimization on matrix games
and prior-regularized PUCT search on tree games, with a reproducible
experiment harness."""

from .anchored import anchored_qre, reverse_kl_opt, softmax_anchored
from .games import (
    Exploitability,
    GameSizeError,
    NormalFormGame,
    SupportError,
    best_response,
    check_policy,
    expected_utility,
    exploitability,
    kl_divergence,
    uniform_policy,
)
from .mcts import (
    MctsAgent,
    MctsNode,
    MinimaxAgent,
    PriorAgent,
    RandomAgent,
    SearchConfig,
    play_match,
    run_search,
    select_action,
    smoothed_root_policy,
    visits_to_policy,
)
from .solvers import (
    EtaSchedule,
    HedgeState,
    PiklState,
    RmState,
    SolverSpec,
    hedge_step,
    new_hedge_state,
    new_pikl_state,
    new_rm_state,
    pikl_play_exact,
    pikl_play_sampled,
    pikl_policy,
    rm_step,
    run_selfplay,
)
from .toy_games import (
    SyntheticAnchor,
    TreeGame,
    TreeModel,
    game_to_json,
    make_blotto,
    make_matching_pennies,
    make_random_zero_sum,
    make_rps,
    make_tree_game,
    minimax_values,
)

__version__ = "0.1.0"
