"""PUCT tree search with a policy prior over two-player zero-sum tree games.

Values are stored from the perspective of the player to move at each node and
negated once per ply on the way up. Terminal states always back up their exact
reward. Unvisited actions score with the equal-weighted mean value of their
visited siblings (the node's own model value when nothing is visited yet).
No root noise and no tree reuse between moves.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .anchored import reverse_kl_opt
from .games import check_policy
from .toy_games import TreeGame, TreeModel, minimax_action, minimax_values


@dataclass(frozen=True)
class SearchConfig:
    iterations: int
    c_puct: float
    temperature: float = 1.0
    seed: int = 0
    fpu_mode: str = "sibling-mean"

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.c_puct < 0:
            raise ValueError("c_puct must be nonnegative")
        if self.temperature < 0:
            raise ValueError("temperature must be nonnegative")
        if self.fpu_mode != "sibling-mean":
            raise ValueError(f"unsupported fpu_mode {self.fpu_mode!r}")


@dataclass
class MctsNode:
    state: int
    player: int
    prior: np.ndarray
    value: float  # model value estimate, mover's perspective
    visits: np.ndarray = field(init=False)  # N(s, a)
    value_sums: np.ndarray = field(init=False)  # W(s, a), mover's perspective
    children: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.prior.size
        self.visits = np.zeros(n)
        self.value_sums = np.zeros(n)

    def q_values(self) -> np.ndarray:
        """Mean action values; unvisited actions get the visited siblings' mean
        value, or the node's own model value when nothing is visited."""
        visited = self.visits > 0
        if visited.any():
            fpu = float((self.value_sums[visited] / self.visits[visited]).mean())
        else:
            fpu = self.value
        q = np.full(self.prior.size, fpu)
        q[visited] = self.value_sums[visited] / self.visits[visited]
        return q


def _argmax_tiebreak(scores: np.ndarray, prior: np.ndarray) -> int:
    """Largest score; ties go to the highest prior, then the lowest index."""
    order = np.lexsort((np.arange(scores.size), -prior, -scores))
    return int(order[0])


def select_action(node: MctsNode, c_puct: float) -> int:
    """argmax_a Q(s,a) + c_puct * prior(s,a) * sqrt(sum_b N(s,b)) / (N(s,a) + 1)."""
    q = node.q_values()
    explore = np.sqrt(node.visits.sum()) / (node.visits + 1.0)
    return _argmax_tiebreak(q + c_puct * node.prior * explore, node.prior)


def run_search(
    game: TreeGame, model: TreeModel, config: SearchConfig, root: int = 0
) -> MctsNode:
    """Build a search tree of config.iterations iterations rooted at `root`.

    Each iteration descends by select_action, expands one previously unseen
    node (querying the model for its prior and value), and backs the leaf value
    up the path, flipping sign at each ply. After N iterations the root's edge
    visits sum to N - 1 (the first iteration only expands the root).
    """
    if game.is_terminal(root):
        raise ValueError("cannot search from a terminal state")
    nodes: dict[int, MctsNode] = {}

    def make_node(state):
        node = MctsNode(
            state=state,
            player=game.player_to_move(state),
            prior=model.prior(state).copy(),
            value=model.value(state),
        )
        nodes[state] = node
        return node

    for _ in range(config.iterations):
        path = []
        state = root
        while state in nodes and not game.is_terminal(state):
            node = nodes[state]
            action = select_action(node, config.c_puct)
            path.append((node, action))
            state = game.child(state, action)
        if game.is_terminal(state):
            sign = 1.0 if game.player_to_move(state) == 0 else -1.0
            value = sign * game.terminal_reward(state)
        else:
            leaf = make_node(state)
            value = leaf.value
            if path:
                path[-1][0].children[path[-1][1]] = leaf
        for node, action in reversed(path):
            value = -value
            node.visits[action] += 1
            node.value_sums[action] += value
    return nodes[root]


def visits_to_policy(node: MctsNode, temperature: float) -> np.ndarray:
    """Policy proportional to N(s,a)^(1/temperature).

    temperature 0 selects the most-visited action (ties to the highest prior,
    then the lowest index); with no visits at all the prior is returned.
    """
    n = node.visits
    total = n.sum()
    if total == 0:
        return node.prior.copy()
    if temperature == 0:
        p = np.zeros(n.size)
        p[_argmax_tiebreak(n, node.prior)] = 1.0
        return p
    with np.errstate(divide="ignore"):
        w = np.where(n > 0, np.log(np.maximum(n, 1e-300)) / temperature, -np.inf)
    w -= w.max()
    p = np.exp(w)
    return p / p.sum()


def smoothed_root_policy(node: MctsNode, c_puct: float, k: float = 0.0) -> np.ndarray:
    """Full-support root policy from search statistics.

    Solves the smooth objective the visit distribution discretizes: maximize
    sum(pi * Q) - lam * KL(prior || pi) with lam = c_puct * sqrt(sum n) / (k + sum n),
    using the sibling-mean value for unvisited actions. Suitable for computing
    cross-entropies, where raw visit counts can assign zero probability.
    """
    total = node.visits.sum()
    if total == 0:
        raise ValueError("no visited action at the root; fall back to the prior")
    lam = c_puct * np.sqrt(total) / (k + total)
    return reverse_kl_opt(node.q_values(), node.prior, lam)


def root_stats_csv(node: MctsNode) -> str:
    """Per-action root statistics (action, n, q, prior) for debugging."""
    q = node.q_values()
    lines = ["action,n,q,prior"]
    for a in range(node.prior.size):
        lines.append(f"{a},{int(node.visits[a])},{float(q[a])!r},{float(node.prior[a])!r}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Agents and matches
# ---------------------------------------------------------------------------

class MctsAgent:
    """Plays the visit-count policy of a fresh search at every state."""

    def __init__(self, model: TreeModel, config: SearchConfig):
        self.model = model
        self.config = config

    def policy(self, game: TreeGame, state: int) -> np.ndarray:
        root = run_search(game, self.model, self.config, root=state)
        return visits_to_policy(root, self.config.temperature)


class PriorAgent:
    """Samples directly from the model's prior."""

    def __init__(self, model: TreeModel):
        self.model = model

    def policy(self, game: TreeGame, state: int) -> np.ndarray:
        return self.model.prior(state)


class MinimaxAgent:
    """Plays the exact optimal move (ties to the lowest index)."""

    def __init__(self, game: TreeGame):
        self.values = minimax_values(game)

    def policy(self, game: TreeGame, state: int) -> np.ndarray:
        p = np.zeros(game.branching)
        p[minimax_action(game, self.values, state)] = 1.0
        return p


class RandomAgent:
    def policy(self, game: TreeGame, state: int) -> np.ndarray:
        return np.full(game.branching, 1.0 / game.branching)


def _apply_temperature(p: np.ndarray, temperature: float) -> np.ndarray:
    if temperature == 1.0:
        return p
    if temperature == 0.0:
        out = np.zeros(p.size)
        out[int(np.argmax(p))] = 1.0
        return out
    with np.errstate(divide="ignore"):
        w = np.where(p > 0, np.log(np.maximum(p, 1e-300)) / temperature, -np.inf)
    w -= w.max()
    out = np.exp(w)
    return out / out.sum()


def play_one(game, agent_by_player, temperature, rng) -> float:
    """One game from the root; returns player 0's terminal reward."""
    state = 0
    while not game.is_terminal(state):
        agent = agent_by_player[game.player_to_move(state)]
        p = _apply_temperature(check_policy(agent.policy(game, state)), temperature)
        acc = 0.0
        u = rng.random()
        action = p.size - 1
        for a in range(p.size):
            acc += p[a]
            if u < acc:
                action = a
                break
        state = game.child(state, action)
    return game.terminal_reward(state)


@dataclass(frozen=True)
class MatchResult:
    winrate: float  # draws count half
    stderr: float
    scores: np.ndarray


def summarize_scores(scores) -> MatchResult:
    s = np.asarray(scores, dtype=float)
    se = float(s.std(ddof=1) / np.sqrt(s.size)) if s.size > 1 else float("nan")
    return MatchResult(winrate=float(s.mean()), stderr=se, scores=s)


def play_match(
    game: TreeGame,
    agent_a,
    agent_b,
    num_games: int,
    temperature: float = 1.0,
    seed: int = 0,
    first_parity: int = 0,
) -> MatchResult:
    """Head-to-head match; agent_a moves first in games of even index + parity.

    Scores are from agent_a's side: 1 for a positive reward, 0.5 for zero, 0
    otherwise. Reproducible for a fixed seed.
    """
    rng = np.random.default_rng(seed)
    scores = np.empty(num_games)
    for g in range(num_games):
        a_is_p0 = (g + first_parity) % 2 == 0
        agents = (agent_a, agent_b) if a_is_p0 else (agent_b, agent_a)
        r0 = play_one(game, agents, temperature, rng)
        ra = r0 if a_is_p0 else -r0
        scores[g] = 1.0 if ra > 0 else (0.5 if ra == 0 else 0.0)
    return summarize_scores(scores)
