"""Normal-form games: exact utilities, best responses, exploitability, KL divergence.

Games are stored behind a per-player utility oracle so that payoff-matrix games
and generated games share one interface; a dense payoff tensor is cached for
games small enough to enumerate (below ``DENSE_CACHE_LIMIT`` joint actions).
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

# Joint-action budget for building a dense payoff tensor.
DENSE_CACHE_LIMIT = 10**6
# Joint-action budget for any exact expectation (streamed above the cache limit).
EXACT_EVAL_LIMIT = 10**7

POLICY_ATOL = 1e-9
ZERO_SUM_ATOL = 1e-9


class GameSizeError(ValueError):
    """Joint-action space too large for the requested exact operation."""


class SupportError(ValueError):
    """A distribution puts mass on an action outside the reference support."""


def uniform_policy(n: int) -> np.ndarray:
    return np.full(n, 1.0 / n)


def one_hot(n: int, action: int) -> np.ndarray:
    p = np.zeros(n)
    p[action] = 1.0
    return p


def check_policy(probs: np.ndarray, atol: float = POLICY_ATOL) -> np.ndarray:
    """Validate a distribution over actions; returns it as a float64 array."""
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise ValueError(f"policy must be a nonempty vector, got shape {p.shape}")
    if (p < -atol).any():
        raise ValueError(f"policy has negative entries: {p}")
    total = p.sum()
    if abs(total - 1.0) > atol:
        raise ValueError(f"policy sums to {total!r}, not 1")
    return p


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """KL(p || q) in nats, with 0*log(0) = 0.

    Raises SupportError naming the offending action if p(a) > 0 while q(a) = 0.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {q.shape}")
    bad = (p > 0) & (q <= 0)
    if bad.any():
        a = int(np.argmax(bad))
        raise SupportError(f"q(a)=0 with p(a)>0 at action {a}")
    mask = p > 0
    return float(np.sum(p[mask] * (np.log(p[mask]) - np.log(q[mask]))))


@dataclass(eq=False)
class NormalFormGame:
    """Simultaneous-move game with a per-player utility oracle.

    utility(player, joint_action) returns that player's reward for the pure
    joint action; reward_bounds gives a declared [lo, hi] interval per player.
    Instances are read-only after construction and safe to share.
    """

    num_players: int
    action_counts: tuple[int, ...]
    utility: Callable[[int, tuple[int, ...]], float]
    reward_bounds: tuple[tuple[float, float], ...]
    zero_sum: bool = False
    _dense: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.action_counts = tuple(int(n) for n in self.action_counts)
        if self.num_players < 1 or len(self.action_counts) != self.num_players:
            raise ValueError("action_counts must have one entry per player")
        if any(n < 1 for n in self.action_counts):
            raise ValueError("every player needs at least one action")
        if len(self.reward_bounds) != self.num_players:
            raise ValueError("reward_bounds must have one interval per player")

    @property
    def num_joint_actions(self) -> int:
        return math.prod(self.action_counts)

    def reward_range(self, player: int) -> float:
        lo, hi = self.reward_bounds[player]
        return float(hi - lo)

    def joint_actions(self):
        return itertools.product(*(range(n) for n in self.action_counts))

    def payoffs(self, player: int) -> np.ndarray:
        """Dense payoff tensor for one player, cached; shape = action_counts."""
        if self.num_joint_actions > DENSE_CACHE_LIMIT:
            raise GameSizeError(
                f"{self.num_joint_actions} joint actions exceeds the dense cache "
                f"limit {DENSE_CACHE_LIMIT}"
            )
        if player not in self._dense:
            u = np.empty(self.action_counts)
            for joint in self.joint_actions():
                u[joint] = self.utility(player, joint)
            self._dense[player] = u
        return self._dense[player]

    def validate(self, samples: int = 1000, seed: int = 0) -> None:
        """Check reward bounds (and the zero-sum flag) on all or sampled joints."""
        if self.num_joint_actions <= DENSE_CACHE_LIMIT:
            tensors = [self.payoffs(i) for i in range(self.num_players)]
            for i, u in enumerate(tensors):
                lo, hi = self.reward_bounds[i]
                if u.min() < lo - POLICY_ATOL or u.max() > hi + POLICY_ATOL:
                    raise ValueError(
                        f"player {i} utilities leave declared bounds [{lo}, {hi}]"
                    )
            if self.zero_sum:
                total = sum(tensors)
                if np.abs(total).max() > ZERO_SUM_ATOL:
                    raise ValueError("zero-sum flag violated")
            return
        rng = np.random.default_rng(seed)
        for _ in range(samples):
            joint = tuple(int(rng.integers(n)) for n in self.action_counts)
            total = 0.0
            for i in range(self.num_players):
                u = self.utility(i, joint)
                lo, hi = self.reward_bounds[i]
                if not (lo - POLICY_ATOL <= u <= hi + POLICY_ATOL):
                    raise ValueError(
                        f"player {i} utility {u} at {joint} leaves [{lo}, {hi}]"
                    )
                total += u
            if self.zero_sum and abs(total) > ZERO_SUM_ATOL:
                raise ValueError(f"zero-sum flag violated at {joint}")


def check_profile(game: NormalFormGame, profile: Sequence[np.ndarray]) -> list[np.ndarray]:
    if len(profile) != game.num_players:
        raise ValueError("profile must have one policy per player")
    out = []
    for i, p in enumerate(profile):
        p = check_policy(p)
        if p.size != game.action_counts[i]:
            raise ValueError(f"player {i} policy has wrong length {p.size}")
        out.append(p)
    return out


def _require_exact(game: NormalFormGame) -> None:
    if game.num_joint_actions > EXACT_EVAL_LIMIT:
        raise GameSizeError(
            f"{game.num_joint_actions} joint actions exceeds the exact-evaluation "
            f"limit {EXACT_EVAL_LIMIT}; use sampled mode"
        )


def action_values(game: NormalFormGame, profile: Sequence[np.ndarray], player: int) -> np.ndarray:
    """Expected utility of each of `player`'s pure actions against profile[-player].

    The player's own entry in the profile is ignored. Exact (no sampling).
    """
    _require_exact(game)
    profile = check_profile(game, profile)
    if game.num_joint_actions <= DENSE_CACHE_LIMIT:
        u = game.payoffs(player)
        for j in reversed(range(game.num_players)):
            if j == player:
                continue
            u = np.tensordot(u, profile[j], axes=([j], [0]))
        return np.asarray(u, dtype=float)
    # streamed evaluation for games too large to cache densely
    values = np.zeros(game.action_counts[player])
    others = [j for j in range(game.num_players) if j != player]
    for partial in itertools.product(*(range(game.action_counts[j]) for j in others)):
        weight = math.prod(profile[j][a] for j, a in zip(others, partial))
        if weight == 0.0:
            continue
        joint = [0] * game.num_players
        for j, a in zip(others, partial):
            joint[j] = a
        for a in range(game.action_counts[player]):
            joint[player] = a
            values[a] += weight * game.utility(player, tuple(joint))
    return values


def expected_utility(game: NormalFormGame, profile: Sequence[np.ndarray], player: int) -> float:
    """Exact multilinear expected utility of `player` under a mixed profile."""
    values = action_values(game, profile, player)
    return float(np.asarray(profile[player], dtype=float) @ values)


def best_response(game: NormalFormGame, profile: Sequence[np.ndarray], player: int) -> tuple[int, float]:
    """Best pure response for `player` to the others' policies.

    Ties break toward the lowest action index. Returns (action, value).
    """
    values = action_values(game, profile, player)
    a = int(np.argmax(values))
    return a, float(values[a])


@dataclass(frozen=True)
class Exploitability:
    gaps: np.ndarray  # per-player best-response improvement, >= 0
    total: float

    @property
    def max_gap(self) -> float:
        return float(self.gaps.max())


def exploitability(game: NormalFormGame, profile: Sequence[np.ndarray]) -> Exploitability:
    """Per-player Nash gaps of a profile; all zero iff the profile is a Nash eq."""
    gaps = np.empty(game.num_players)
    for i in range(game.num_players):
        values = action_values(game, profile, i)
        gaps[i] = values.max() - float(np.asarray(profile[i], dtype=float) @ values)
    return Exploitability(gaps=gaps, total=float(gaps.sum()))
