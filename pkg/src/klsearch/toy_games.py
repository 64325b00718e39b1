"""Benchmark game generators: Blotto, small matrix games, random zero-sum games,
and synthetic two-player tree games with imperfect anchor policies."""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from .games import NormalFormGame

BLOTTO_ACTION_LIMIT = 10**4
TREE_LEAF_LIMIT = 10**5


def two_player_zero_sum(u0: np.ndarray, lo: float = -1.0, hi: float = 1.0) -> NormalFormGame:
    """Wrap a row-player payoff matrix as a zero-sum NormalFormGame."""
    u0 = np.asarray(u0, dtype=float)

    def utility(player, joint):
        v = u0[joint[0], joint[1]]
        return float(v) if player == 0 else float(-v)

    game = NormalFormGame(
        num_players=2,
        action_counts=(u0.shape[0], u0.shape[1]),
        utility=utility,
        reward_bounds=((lo, hi), (lo, hi)),
        zero_sum=True,
    )
    game.validate()
    return game


def compositions(total: int, parts: int) -> list[tuple[int, ...]]:
    """All ways to split `total` into `parts` nonnegative integers, lexicographic."""
    out = []
    for dividers in itertools.combinations(range(total + parts - 1), parts - 1):
        prev = -1
        comp = []
        for d in dividers:
            comp.append(d - prev - 1)
            prev = d
        comp.append(total + parts - 2 - prev)
        out.append(tuple(comp))
    return out


def blotto_actions(coins: int, fields: int) -> list[tuple[int, ...]]:
    return compositions(coins, fields)


def make_blotto(coins: int, fields: int) -> NormalFormGame:
    """Colonel Blotto: allocate `coins` over `fields`; a field is won by strictly
    more coins; payoff +1/-1/0 by whether more fields are won than lost."""
    if coins < 1 or fields < 1:
        raise ValueError("need coins >= 1 and fields >= 1")
    n = math.comb(coins + fields - 1, fields - 1)
    if n > BLOTTO_ACTION_LIMIT:
        raise ValueError(f"{n} allocations exceeds the limit {BLOTTO_ACTION_LIMIT}")
    acts = np.array(blotto_actions(coins, fields))
    won = (acts[:, None, :] > acts[None, :, :]).sum(axis=2)
    lost = (acts[:, None, :] < acts[None, :, :]).sum(axis=2)
    u0 = np.sign(won - lost).astype(float)
    game = two_player_zero_sum(u0)
    game.action_labels = [list(a) for a in blotto_actions(coins, fields)]
    return game


def make_rps() -> NormalFormGame:
    """Rock-paper-scissors with win=+1, loss=-1, tie=0; actions (R, P, S)."""
    u0 = np.array([[0.0, -1.0, 1.0], [1.0, 0.0, -1.0], [-1.0, 1.0, 0.0]])
    return two_player_zero_sum(u0)


def make_matching_pennies() -> NormalFormGame:
    """Matching pennies; player 0 wins on a match; actions (H, T)."""
    u0 = np.array([[1.0, -1.0], [-1.0, 1.0]])
    return two_player_zero_sum(u0)


def make_random_zero_sum(n: int, seed: int) -> NormalFormGame:
    """Random n x n zero-sum game, payoffs i.i.d. uniform in [-1, 1]."""
    if not 2 <= n <= 100:
        raise ValueError("need 2 <= n <= 100")
    u0 = np.random.default_rng(seed).uniform(-1.0, 1.0, (n, n))
    return two_player_zero_sum(u0)


def game_to_json(game: NormalFormGame) -> str:
    """Deterministic JSON dump (actions + payoff tensors) for cross-checking."""
    doc = {
        "num_players": game.num_players,
        "action_counts": list(game.action_counts),
        "reward_bounds": [list(b) for b in game.reward_bounds],
        "zero_sum": game.zero_sum,
        "payoffs": [game.payoffs(i).tolist() for i in range(game.num_players)],
    }
    labels = getattr(game, "action_labels", None)
    if labels is not None:
        doc["action_labels"] = labels
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


# ---------------------------------------------------------------------------
# Synthetic perfect-information tree games
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TreeGame:
    """Complete `branching`-ary tree of the given depth; players alternate moves
    (player 0 at even depth); leaves carry player-0 rewards in [-1, 1].

    Nodes are integers: root 0, children of i are i*branching + 1 + a.
    """

    branching: int
    depth: int
    terminal_rewards: np.ndarray
    seed: int

    @property
    def num_nodes(self) -> int:
        b = self.branching
        return (b ** (self.depth + 1) - 1) // (b - 1)

    @property
    def first_leaf(self) -> int:
        b = self.branching
        return (b**self.depth - 1) // (b - 1)

    def child(self, state: int, action: int) -> int:
        return state * self.branching + 1 + action

    def parent(self, state: int) -> int:
        return (state - 1) // self.branching

    def depth_of(self, state: int) -> int:
        d = 0
        while state != 0:
            state = (state - 1) // self.branching
            d += 1
        return d

    def player_to_move(self, state: int) -> int:
        return self.depth_of(state) % 2

    def is_terminal(self, state: int) -> bool:
        return state >= self.first_leaf

    def terminal_reward(self, state: int) -> float:
        """Terminal reward from player 0's perspective."""
        return float(self.terminal_rewards[state - self.first_leaf])


@dataclass(frozen=True)
class SyntheticAnchor:
    """Full-support policy per interior node: softmax of scaled child values
    perturbed by seeded log-space Gaussian noise."""

    concentration: float
    noise_seed: int
    policies: np.ndarray  # (num_interior, branching)

    def policy(self, state: int) -> np.ndarray:
        return self.policies[state]


@dataclass(frozen=True)
class TreeModel:
    """Search model: prior over actions and a scalar value estimate per node,
    both from the perspective of the player to move."""

    priors: np.ndarray  # (num_interior, branching)
    values: np.ndarray  # (num_nodes,)

    def prior(self, state: int) -> np.ndarray:
        return self.priors[state]

    def value(self, state: int) -> float:
        return float(self.values[state])


def minimax_values(game: TreeGame) -> np.ndarray:
    """Exact game value of every node from player 0's perspective, by backward
    induction (player 0 maximizes at even depth, player 1 minimizes at odd)."""
    b = game.branching
    v = np.zeros(game.num_nodes)
    v[game.first_leaf :] = game.terminal_rewards
    # depth boundaries: level d spans [(b^d - 1)/(b-1), (b^(d+1) - 1)/(b-1))
    for d in range(game.depth - 1, -1, -1):
        lo = (b**d - 1) // (b - 1)
        hi = (b ** (d + 1) - 1) // (b - 1)
        for s in range(lo, hi):
            kids = v[s * b + 1 : s * b + 1 + b]
            v[s] = kids.max() if d % 2 == 0 else kids.min()
    return v


def minimax_action(game: TreeGame, values: np.ndarray, state: int) -> int:
    """Optimal move for the player to move at `state`; ties -> lowest index."""
    b = game.branching
    kids = values[state * b + 1 : state * b + 1 + b]
    signed = kids if game.player_to_move(state) == 0 else -kids
    return int(np.argmax(signed))


def make_tree_game(
    branching: int,
    depth: int,
    seed: int,
    concentration: float = 2.0,
    anchor_noise: float = 0.5,
    value_noise: float = 0.2,
) -> tuple[TreeGame, SyntheticAnchor, TreeModel]:
    """Generate a tree game plus an imperfect anchor policy and value model.

    Leaf rewards are i.i.d. uniform in [-1, 1]. The anchor at each interior node
    is softmax(concentration * mover-perspective child values + noise); the model
    value at each node is the exact mover-perspective value plus Gaussian noise of
    scale `value_noise`, clamped to [-1, 1]. Exact minimax values stay available
    via minimax_values() as ground truth.
    """
    if branching < 2 or depth < 1:
        raise ValueError("need branching >= 2 and depth >= 1")
    if branching**depth > TREE_LEAF_LIMIT:
        raise ValueError(f"{branching ** depth} leaves exceeds the limit {TREE_LEAF_LIMIT}")
    if concentration <= 0:
        raise ValueError("concentration must be positive")
    leaves = np.random.default_rng([seed, 0]).uniform(-1.0, 1.0, branching**depth)
    game = TreeGame(branching=branching, depth=depth, terminal_rewards=leaves, seed=seed)
    v0 = minimax_values(game)

    b = branching
    n_interior = game.first_leaf
    anchor_rng = np.random.default_rng([seed, 1])
    value_rng = np.random.default_rng([seed, 2])
    priors = np.empty((n_interior, b))
    for d in range(depth):
        lo = (b**d - 1) // (b - 1)
        hi = (b ** (d + 1) - 1) // (b - 1)
        sign = 1.0 if d % 2 == 0 else -1.0
        for s in range(lo, hi):
            kids = sign * v0[s * b + 1 : s * b + 1 + b]
            z = concentration * kids + anchor_noise * anchor_rng.standard_normal(b)
            z -= z.max()
            p = np.exp(z)
            priors[s] = p / p.sum()
    anchor = SyntheticAnchor(concentration=concentration, noise_seed=seed, policies=priors)

    values = np.empty(game.num_nodes)
    for s in range(game.num_nodes):
        sign = 1.0 if game.depth_of(s) % 2 == 0 else -1.0
        values[s] = sign * v0[s] + value_noise * value_rng.standard_normal()
    np.clip(values, -1.0, 1.0, out=values)
    model = TreeModel(priors=priors, values=values)
    return game, anchor, model
