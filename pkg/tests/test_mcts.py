import numpy as np
import pytest

from klsearch.games import kl_divergence
from klsearch.mcts import (
    MctsAgent,
    MctsNode,
    MinimaxAgent,
    PriorAgent,
    RandomAgent,
    SearchConfig,
    play_match,
    root_stats_csv,
    run_search,
    select_action,
    smoothed_root_policy,
    visits_to_policy,
)
from klsearch.anchored import reverse_kl_opt
from klsearch.toy_games import TreeGame, TreeModel, make_tree_game, minimax_values
from oracle_helpers import grid_argmax, reverse_kl_objective, simplex_grid


def make_node(prior, visits=None, value_sums=None, value=0.0, player=0):
    node = MctsNode(state=0, player=player, prior=np.asarray(prior, dtype=float), value=value)
    if visits is not None:
        node.visits = np.asarray(visits, dtype=float)
        node.value_sums = np.asarray(value_sums, dtype=float)
    return node


def bandit_game(rewards):
    rewards = np.asarray(rewards, dtype=float)
    game = TreeGame(branching=rewards.size, depth=1, terminal_rewards=rewards, seed=0)
    priors = np.full((1, rewards.size), 1.0 / rewards.size)
    model = TreeModel(priors=priors, values=np.zeros(game.num_nodes))
    return game, model


def collect_nodes(root):
    out = [root]
    for child in root.children.values():
        out.extend(collect_nodes(child))
    return out


# ---------------------------------------------------------------------------
# selection rule
# ---------------------------------------------------------------------------

def test_select_action_hand_arithmetic():
    # scores: 0.1 + 0.5*2/4 = 0.35 vs 0.1 + 0.5*2/2 = 0.6
    node = make_node([0.5, 0.5], visits=[3, 1], value_sums=[0.3, 0.1])
    assert select_action(node, c_puct=1.0) == 1


def test_select_action_fresh_node_takes_highest_prior():
    node = make_node([0.2, 0.5, 0.3], value=0.4)
    assert select_action(node, c_puct=1.0) == 1
    assert select_action(node, c_puct=0.0) == 1  # still the prior tie-break


def test_select_action_pure_greedy_when_c_puct_zero():
    node = make_node([0.7, 0.3], visits=[5, 5], value_sums=[1.0, 2.0])
    assert select_action(node, c_puct=0.0) == 1


def test_select_action_tie_breaks_prior_then_index():
    node = make_node([0.25, 0.25, 0.3, 0.2])
    assert select_action(node, c_puct=2.0) == 2
    node = make_node([0.25, 0.25, 0.25, 0.25])
    assert select_action(node, c_puct=2.0) == 0


def test_unvisited_actions_use_sibling_mean_value():
    node = make_node([0.5, 0.5], visits=[4, 0], value_sums=[2.0, 0.0])
    q = node.q_values()
    assert q[1] == pytest.approx(0.5)  # mean of visited siblings
    fresh = make_node([0.5, 0.5], value=-0.3)
    np.testing.assert_allclose(fresh.q_values(), [-0.3, -0.3])


# ---------------------------------------------------------------------------
# search
# ---------------------------------------------------------------------------

def test_single_iteration_expands_root_only_and_falls_back_to_prior():
    game, _, model = make_tree_game(3, 3, seed=1)
    root = run_search(game, model, SearchConfig(iterations=1, c_puct=1.0))
    assert root.visits.sum() == 0
    assert root.children == {}
    np.testing.assert_allclose(visits_to_policy(root, 1.0), model.prior(0))


def test_bandit_concentrates_on_best_arm():
    game, model = bandit_game([1.0, -1.0, 0.0])
    root = run_search(game, model, SearchConfig(iterations=1000, c_puct=0.1))
    assert int(np.argmax(root.visits)) == 0
    assert root.visits.sum() == 999
    # terminal returns back up exactly: Q(best arm) equals its reward
    assert root.value_sums[0] / root.visits[0] == pytest.approx(1.0)


def test_root_visit_invariant():
    game, _, model = make_tree_game(3, 4, seed=4)
    for n in (1, 2, 17, 300):
        root = run_search(game, model, SearchConfig(iterations=n, c_puct=1.5))
        assert root.visits.sum() == n - 1


def test_visit_conservation_every_node():
    game, _, model = make_tree_game(3, 4, seed=5)
    root = run_search(game, model, SearchConfig(iterations=400, c_puct=1.0))
    for node in collect_nodes(root):
        for action, child in node.children.items():
            assert child.visits.sum() == node.visits[action] - 1


def test_backed_up_values_within_subtree_hull():
    game, _, model = make_tree_game(3, 4, seed=6)
    root = run_search(game, model, SearchConfig(iterations=500, c_puct=1.0))

    def subtree_abs_max(state):
        if game.is_terminal(state):
            return abs(game.terminal_reward(state))
        m = abs(model.value(state))
        for a in range(game.branching):
            m = max(m, subtree_abs_max(game.child(state, a)))
        return m

    for node in collect_nodes(root):
        visited = node.visits > 0
        q = node.value_sums[visited] / node.visits[visited]
        for action in np.nonzero(visited)[0]:
            bound = subtree_abs_max(game.child(node.state, int(action)))
            assert abs(node.value_sums[action] / node.visits[action]) <= bound + 1e-9


def test_prior_recovery_at_large_c_puct():
    game, anchor, model = make_tree_game(3, 4, seed=7)
    root = run_search(game, model, SearchConfig(iterations=1000, c_puct=1e4))
    visits_dist = root.visits / root.visits.sum()
    tv = 0.5 * np.abs(visits_dist - anchor.policy(0)).sum()
    assert tv <= 0.05


def test_prior_recovery_monotone_in_c_puct():
    game, anchor, model = make_tree_game(3, 4, seed=8)
    kls = []
    for c in (1e-2, 1.0, 1e4):
        root = run_search(game, model, SearchConfig(iterations=600, c_puct=c))
        visits_dist = root.visits / root.visits.sum()
        kls.append(kl_divergence(visits_dist, anchor.policy(0)))
    assert kls[2] <= kls[1] <= kls[0]


def test_greedy_limit_agrees_with_q_argmax():
    for seed in range(10):
        game, _, model = make_tree_game(3, 4, seed=100 + seed)
        root = run_search(game, model, SearchConfig(iterations=1000, c_puct=1e-6))
        assert int(np.argmax(root.visits)) == int(np.argmax(root.q_values()))


def test_search_rejects_terminal_root():
    game, _, model = make_tree_game(2, 2, seed=0)
    with pytest.raises(ValueError):
        run_search(game, model, SearchConfig(iterations=5, c_puct=1.0), root=game.first_leaf)


def test_search_config_validation():
    with pytest.raises(ValueError):
        SearchConfig(iterations=0, c_puct=1.0)
    with pytest.raises(ValueError):
        SearchConfig(iterations=5, c_puct=-1.0)
    with pytest.raises(ValueError):
        SearchConfig(iterations=5, c_puct=1.0, temperature=-0.1)
    with pytest.raises(ValueError):
        SearchConfig(iterations=5, c_puct=1.0, fpu_mode="loss")


# ---------------------------------------------------------------------------
# policies from statistics
# ---------------------------------------------------------------------------

def test_visits_to_policy_proportional():
    node = make_node([0.5, 0.5], visits=[3, 1], value_sums=[0.0, 0.0])
    np.testing.assert_allclose(visits_to_policy(node, 1.0), [0.75, 0.25], atol=1e-12)


def test_visits_to_policy_argmax_at_zero_temperature():
    node = make_node([0.5, 0.5], visits=[3, 1], value_sums=[0.0, 0.0])
    np.testing.assert_allclose(visits_to_policy(node, 0.0), [1.0, 0.0])
    tied = make_node([0.3, 0.7], visits=[2, 2], value_sums=[0.0, 0.0])
    np.testing.assert_allclose(visits_to_policy(tied, 0.0), [0.0, 1.0])


def test_visits_to_policy_low_temperature_sharpens():
    node = make_node([0.5, 0.5], visits=[8, 1], value_sums=[0.0, 0.0])
    np.testing.assert_allclose(
        visits_to_policy(node, 0.5), [64.0 / 65.0, 1.0 / 65.0], atol=1e-12
    )


def test_smoothed_root_policy_constant_q_returns_prior():
    node = make_node([0.6, 0.3, 0.1], visits=[5, 3, 1], value_sums=[1.0, 0.6, 0.2])
    np.testing.assert_allclose(smoothed_root_policy(node, c_puct=2.0), node.prior, atol=1e-9)


def test_smoothed_root_policy_regularizer_scale():
    # sum(n) = 49, c_puct = 2, k = 0 -> lam = 2 * 7 / 49
    node = make_node([0.5, 0.3, 0.2], visits=[30, 10, 9], value_sums=[15.0, 2.0, 1.0])
    expected = reverse_kl_opt(node.q_values(), node.prior, 2.0 * 7.0 / 49.0)
    np.testing.assert_allclose(smoothed_root_policy(node, c_puct=2.0), expected, atol=1e-12)


def test_smoothed_root_policy_matches_grid_oracle():
    grid = simplex_grid()
    node = make_node([0.5, 0.3, 0.2], visits=[20, 4, 1], value_sums=[8.0, 0.4, -0.6])
    ours = smoothed_root_policy(node, c_puct=2.0)
    lam = 2.0 * np.sqrt(25.0) / 25.0
    best = grid_argmax(reverse_kl_objective(grid, node.q_values(), node.prior, lam), grid)
    assert np.abs(ours - best).max() <= 2e-3


def test_smoothed_root_policy_needs_a_visit():
    node = make_node([0.5, 0.5])
    with pytest.raises(ValueError, match="prior"):
        smoothed_root_policy(node, c_puct=1.0)


def test_root_stats_csv():
    node = make_node([0.75, 0.25], visits=[2, 1], value_sums=[0.5, -0.25])
    lines = root_stats_csv(node).strip().split("\n")
    assert lines[0] == "action,n,q,prior"
    assert lines[1].startswith("0,2,0.25,")
    assert len(lines) == 3


# ---------------------------------------------------------------------------
# matches
# ---------------------------------------------------------------------------

def test_play_match_symmetric_agent_near_half():
    game, _, model = make_tree_game(3, 4, seed=9)
    agent = PriorAgent(model)
    result = play_match(game, agent, agent, num_games=1000, seed=0)
    assert abs(result.winrate - 0.5) <= 3 * result.stderr


def test_play_match_minimax_beats_random():
    # balanced root value (+0.10), so optimal play wins from either seat
    game, _, model = make_tree_game(3, 4, seed=60)
    result = play_match(game, MinimaxAgent(game), RandomAgent(), num_games=400, seed=1)
    assert result.winrate > 0.9


def test_play_match_reproducible():
    game, _, model = make_tree_game(3, 3, seed=12)
    a = MctsAgent(model, SearchConfig(iterations=30, c_puct=1.0))
    b = PriorAgent(model)
    r1 = play_match(game, a, b, num_games=40, seed=3)
    r2 = play_match(game, a, b, num_games=40, seed=3)
    assert np.array_equal(r1.scores, r2.scores)


def test_mcts_beats_prior_on_noisy_anchor_tree():
    game, _, model = make_tree_game(3, 4, seed=13)
    mcts = MctsAgent(model, SearchConfig(iterations=50, c_puct=1.0))
    result = play_match(game, mcts, PriorAgent(model), num_games=300, seed=2)
    assert result.winrate > 0.5


def test_mcts_agent_policy_deterministic():
    game, _, model = make_tree_game(3, 4, seed=14)
    agent = MctsAgent(model, SearchConfig(iterations=80, c_puct=1.0))
    np.testing.assert_array_equal(agent.policy(game, 0), agent.policy(game, 0))
