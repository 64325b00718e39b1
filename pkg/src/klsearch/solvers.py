"""Iterative regret-minimization solvers: Hedge, Regret Matching, and piKL
(anchor-regularized Hedge), with sampled and exact-expectation update modes,
average-policy tracking, and learning-rate schedules.

The piKL iterate at round t is

    pi_t(a)  prop.  exp{ (eta * CV_{t-1}(a) + t*lam*eta * log tau(a)) / (1 + t*lam*eta) }

where CV accumulates per-action utilities against the opponents' play, tau is
the full-support anchor policy and lam >= 0 scales the KL pull toward it.
lam = 0 reduces to Hedge on cumulative values: Hedge's regrets differ from CV
by an action-independent baseline, so its softmax is the identical policy, and
Hedge is implemented through the same expression.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .anchored import anchored_softmax_value
from .games import (
    DENSE_CACHE_LIMIT,
    NormalFormGame,
    check_policy,
    exploitability,
    kl_divergence,
    uniform_policy,
)

ADAPTIVE_ETA_SCALE = 10.0 / 3.0

_KIND_CODES = {"pikl": _kernels.KIND_PIKL, "hedge": _kernels.KIND_HEDGE, "rm": _kernels.KIND_RM}


def anchor_log_range(anchor: np.ndarray) -> float:
    """beta = max_a log(1/tau(a)), the anchor's worst-case log-inverse probability."""
    return float(np.max(-np.log(anchor)))


@dataclass
class EtaSchedule:
    """Learning-rate schedule.

    Constant mode returns a fixed rate (by default 1/(lam*beta + 2*D), the
    largest rate with a sublinear-regret guarantee). Adaptive mode returns
    c / (sigma * sqrt(t)) where sigma is the running standard deviation of the
    per-round average utility observed so far, falling back to c while fewer
    than two rounds have been seen or when the utility stream is constant.
    """

    mode: str
    value: float = 0.0
    c: float = ADAPTIVE_ETA_SCALE
    _count: int = field(default=0, repr=False)
    _mean: float = field(default=0.0, repr=False)
    _m2: float = field(default=0.0, repr=False)

    @classmethod
    def constant(cls, value: float) -> "EtaSchedule":
        if value <= 0:
            raise ValueError("eta must be positive")
        return cls(mode="constant", value=float(value))

    @classmethod
    def constant_default(cls, lam: float, beta: float, reward_range: float) -> "EtaSchedule":
        return cls.constant(1.0 / (lam * beta + 2.0 * reward_range))

    @classmethod
    def adaptive(cls, c: float = ADAPTIVE_ETA_SCALE) -> "EtaSchedule":
        if c <= 0:
            raise ValueError("c must be positive")
        return cls(mode="adaptive", c=float(c))

    def rate(self, t: int) -> float:
        if self.mode == "constant":
            return self.value
        if self._count < 1 or self._m2 <= 0.0:
            return self.c
        sigma = math.sqrt(self._m2 / self._count)
        return self.c / (sigma * math.sqrt(t))

    def observe(self, avg_utility: float) -> None:
        self._count += 1
        d = avg_utility - self._mean
        self._mean += d / self._count
        self._m2 += d * (avg_utility - self._mean)


def _resolve_anchor(game: NormalFormGame, player: int, anchor) -> np.ndarray:
    if anchor is None:
        return uniform_policy(game.action_counts[player])
    anchor = check_policy(anchor)
    if anchor.size != game.action_counts[player]:
        raise ValueError(f"anchor length {anchor.size} does not match player {player}")
    if (anchor <= 0).any():
        raise ValueError(f"anchor must have full support, got a zero entry for player {player}")
    return anchor


@dataclass
class _SolverState:
    game: NormalFormGame
    player: int
    kind: str
    anchor: np.ndarray
    log_anchor: np.ndarray
    lam: float
    eta: EtaSchedule
    cv: np.ndarray
    regrets: np.ndarray
    t: int
    avg_sum: np.ndarray
    rng: np.random.Generator
    realized_raw: float = 0.0
    realized_reg: float = 0.0

    @property
    def num_actions(self) -> int:
        return self.game.action_counts[self.player]

    def average_policy(self) -> np.ndarray:
        if self.t == 0:
            raise ValueError("no iterations played yet")
        return self.avg_sum / self.t


class PiklState(_SolverState):
    pass


class HedgeState(_SolverState):
    pass


class RmState(_SolverState):
    pass


def _new_state(cls, kind, game, player, anchor, lam, eta, seed):
    anchor = _resolve_anchor(game, player, anchor)
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    if eta is None:
        beta = anchor_log_range(anchor)
        eta = EtaSchedule.constant_default(lam, beta, game.reward_range(player))
    elif isinstance(eta, (int, float)):
        eta = EtaSchedule.constant(float(eta))
    n = game.action_counts[player]
    return cls(
        game=game,
        player=player,
        kind=kind,
        anchor=anchor,
        log_anchor=np.log(anchor),
        lam=float(lam),
        eta=eta,
        cv=np.zeros(n),
        regrets=np.zeros(n),
        t=0,
        avg_sum=np.zeros(n),
        rng=np.random.default_rng(seed),
    )


def new_pikl_state(game, player, lam, anchor=None, eta=None, seed=0) -> PiklState:
    return _new_state(PiklState, "pikl", game, player, anchor, lam, eta, seed)


def new_hedge_state(game, player, anchor=None, eta=None, seed=0) -> HedgeState:
    return _new_state(HedgeState, "hedge", game, player, anchor, 0.0, eta, seed)


def new_rm_state(game, player, anchor=None, seed=0) -> RmState:
    return _new_state(RmState, "rm", game, player, anchor, 0.0, 1.0, seed)


def _iterate_policy(state: _SolverState) -> np.ndarray:
    """Policy the upcoming iteration (state.t + 1) will play."""
    t = state.t + 1
    if state.kind == "rm":
        pos = np.maximum(state.regrets, 0.0)
        total = pos.sum()
        if total > 0.0:
            return pos / total
        return uniform_policy(state.num_actions)
    eta = state.eta.rate(t)
    lam = state.lam if state.kind == "pikl" else 0.0
    den = 1.0 + t * lam * eta
    w = (eta * state.cv + t * lam * eta * state.log_anchor) / den
    w -= w.max()
    p = np.exp(w)
    return p / p.sum()


def _begin(state: _SolverState) -> np.ndarray:
    p = _iterate_policy(state)
    state.t += 1
    state.avg_sum += p
    return p


def _settle(state: _SolverState, p: np.ndarray, q: np.ndarray) -> None:
    pq = float(p @ q)
    state.eta.observe(pq)
    klv = 0.0
    if state.lam > 0.0:
        klv = kl_divergence(p, state.anchor)
    state.realized_raw += pq
    state.realized_reg += pq - state.lam * klv
    state.cv += q
    state.regrets += q - pq


def _sample(p: np.ndarray, rng: np.random.Generator) -> int:
    u = rng.random()
    acc = 0.0
    for a in range(p.size - 1):
        acc += p[a]
        if u < acc:
            return a
    return p.size - 1


def _q_sampled(state: _SolverState, opponent_actions: Sequence[int]) -> np.ndarray:
    game, i = state.game, state.player
    opp = [int(a) for a in opponent_actions]
    if len(opp) != game.num_players - 1:
        raise ValueError("opponent_actions must list every other player's action")
    n = state.num_actions
    if game.num_joint_actions <= DENSE_CACHE_LIMIT:
        idx = opp.copy()
        idx.insert(i, slice(None))
        return np.array(game.payoffs(i)[tuple(idx)], dtype=float)
    q = np.empty(n)
    joint = opp.copy()
    joint.insert(i, 0)
    for a in range(n):
        joint[i] = a
        q[a] = game.utility(i, tuple(joint))
    return q


def _q_exact(state: _SolverState, profile: Sequence[np.ndarray]) -> np.ndarray:
    from .games import action_values

    return action_values(state.game, profile, state.player)


def pikl_policy(state: PiklState) -> np.ndarray:
    """Iterate policy for the upcoming round, from current cumulative values."""
    return _iterate_policy(state)


def pikl_play_sampled(state: PiklState, opponent_actions: Sequence[int]) -> int:
    """One sampled round vs. the given opponent actions: sample the iterate's
    action, then credit every own action's utility to CV (full information)."""
    p = _begin(state)
    a = _sample(p, state.rng)
    _settle(state, p, _q_sampled(state, opponent_actions))
    return a


def pikl_play_exact(state: PiklState, opponent_profile: Sequence[np.ndarray]) -> np.ndarray:
    """One exact round: CV is credited with expected utilities against the
    opponents' mixed policies (own entry of the profile is ignored). Returns
    the iterate policy played."""
    p = _begin(state)
    _settle(state, p, _q_exact(state, opponent_profile))
    return p


def _step(state, opponent):
    p = _begin(state)
    first = opponent[0] if len(opponent) > 0 else None
    if isinstance(first, (int, np.integer)):
        q = _q_sampled(state, opponent)
    else:
        q = _q_exact(state, opponent)
    _settle(state, p, q)
    return p


def hedge_step(state: HedgeState, opponent) -> np.ndarray:
    """One Hedge round vs. a joint opponent action (sampled) or profile (exact);
    regrets are updated with the action's utility minus the iterate's value."""
    return _step(state, opponent)


def rm_step(state: RmState, opponent) -> np.ndarray:
    """One Regret Matching round; the iterate is the normalized positive part
    of the regrets, uniform when none are positive."""
    return _step(state, opponent)


# ---------------------------------------------------------------------------
# Self-play driver
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SolverSpec:
    """Per-player solver choice for run_selfplay."""

    kind: str  # "pikl" | "hedge" | "rm"
    lam: float = 0.0
    anchor: np.ndarray | None = None
    eta: float | None = None  # None -> 1/(lam*beta + 2D); ignored by "rm"
    eta_mode: str = "constant"  # or "adaptive"
    eta_c: float = ADAPTIVE_ETA_SCALE

    def build(self, game: NormalFormGame, player: int, seed) -> _SolverState:
        if self.kind not in _KIND_CODES:
            raise ValueError(f"unknown solver kind {self.kind!r}")
        if self.eta_mode == "adaptive":
            eta = EtaSchedule.adaptive(self.eta_c)
        elif self.eta_mode == "constant":
            eta = None if self.eta is None else EtaSchedule.constant(self.eta)
        else:
            raise ValueError(f"unknown eta mode {self.eta_mode!r}")
        if self.kind == "pikl":
            return _new_state(PiklState, "pikl", game, player, self.anchor, self.lam, eta, seed)
        if self.lam != 0.0:
            raise ValueError(f"{self.kind} does not take a lam")
        if self.kind == "hedge":
            return _new_state(HedgeState, "hedge", game, player, self.anchor, 0.0, eta, seed)
        return _new_state(RmState, "rm", game, player, self.anchor, 0.0, 1.0, seed)


@dataclass(frozen=True)
class CheckpointDiag:
    t: int
    player: int
    kl_iterate: float
    kl_avg: float
    regret: float  # vs. the best fixed policy under the anchored utilities
    regret_raw: float  # vs. the best fixed action under raw utilities
    exploitability: float | None  # this player's Nash gap of the average profile
    eta: float


@dataclass
class SelfplayResult:
    avg_profile: list
    diagnostics: list
    iterate_profile: list
    cv: list
    realized_raw: np.ndarray
    realized_reg: np.ndarray
    etas: np.ndarray  # learning rate in force at the final iteration
    actions: np.ndarray | None  # (T, num_players) in sampled mode
    checkpoints: np.ndarray = None
    checkpoint_iterates: np.ndarray = None  # (num_checkpoints, num_players, max actions)


def geometric_checkpoints(num_iters: int) -> np.ndarray:
    """1, 2, 4, ... capped and terminated at num_iters."""
    ck = []
    t = 1
    while t < num_iters:
        ck.append(t)
        t *= 2
    ck.append(num_iters)
    return np.array(ck, dtype=np.int64)


def _measure_regrets(cv, realized_raw, realized_reg, anchor, lam, t):
    raw = float(cv.max() - realized_raw)
    if lam > 0.0:
        best_reg = t * anchored_softmax_value(cv / t, anchor, lam)
        reg = float(best_reg - realized_reg)
    else:
        reg = raw
    return reg, raw


def run_selfplay(
    game: NormalFormGame,
    specs: Sequence[SolverSpec],
    num_iters: int,
    mode: str = "exact",
    seed: int = 0,
    checkpoints: np.ndarray | None = None,
) -> SelfplayResult:
    """Simultaneous self-play of the given solvers for num_iters rounds.

    mode "exact" updates with expected utilities against the opponents' mixed
    iterates; mode "sampled" draws one action per player per round and credits
    utilities against the realized joint action. Diagnostics are recorded at
    geometric checkpoints {1, 2, 4, ...} and at num_iters: per player, the KL
    of the iterate and of the running average to that player's anchor, the
    measured regrets (anchored and raw), the player's Nash gap of the average
    profile (when the game is exactly evaluable, two-player and zero-sum), and
    the learning rate in force.
    """
    if num_iters < 1:
        raise ValueError("num_iters must be >= 1")
    if mode not in ("exact", "sampled"):
        raise ValueError(f"unknown mode {mode!r}")
    if len(specs) != game.num_players:
        raise ValueError("one SolverSpec per player required")
    if checkpoints is None:
        checkpoints = geometric_checkpoints(num_iters)
    else:
        checkpoints = np.asarray(checkpoints, dtype=np.int64)
        if checkpoints[-1] != num_iters:
            raise ValueError("last checkpoint must equal num_iters")
    states = [spec.build(game, i, [seed, i]) for i, spec in enumerate(specs)]

    dense_2p = game.num_players == 2 and game.num_joint_actions <= DENSE_CACHE_LIMIT
    if dense_2p:
        out = _run_kernel(game, states, num_iters, mode, seed, checkpoints)
    else:
        if mode == "exact":
            from .games import GameSizeError

            if game.num_joint_actions > DENSE_CACHE_LIMIT:
                raise GameSizeError("exact self-play needs a dense payoff cache")
        out = _run_python(game, states, num_iters, mode, checkpoints)
    ck_iterate, ck_avg, ck_cv, ck_raw, ck_reg, ck_eta, actions = out

    diag_expl = dense_2p and game.zero_sum
    diagnostics = []
    for k, t in enumerate(checkpoints):
        t = int(t)
        gaps = None
        if diag_expl:
            prof = [ck_avg[k, i, : game.action_counts[i]] / t for i in range(2)]
            gaps = exploitability(game, prof).gaps
        for i, st in enumerate(states):
            n = game.action_counts[i]
            it_p = ck_iterate[k, i, :n]
            avg_p = ck_avg[k, i, :n] / t
            reg, raw = _measure_regrets(
                ck_cv[k, i, :n], ck_raw[k, i], ck_reg[k, i], st.anchor, st.lam, t
            )
            diagnostics.append(
                CheckpointDiag(
                    t=t,
                    player=i,
                    kl_iterate=kl_divergence(it_p, st.anchor),
                    kl_avg=kl_divergence(avg_p, st.anchor),
                    regret=reg,
                    regret_raw=raw,
                    exploitability=float(gaps[i]) if gaps is not None else None,
                    eta=float(ck_eta[k, i]),
                )
            )
    last = len(checkpoints) - 1
    np_ = game.num_players
    return SelfplayResult(
        avg_profile=[ck_avg[last, i, : game.action_counts[i]] / num_iters for i in range(np_)],
        diagnostics=diagnostics,
        iterate_profile=[ck_iterate[last, i, : game.action_counts[i]] for i in range(np_)],
        cv=[ck_cv[last, i, : game.action_counts[i]] for i in range(np_)],
        realized_raw=ck_raw[last].copy(),
        realized_reg=ck_reg[last].copy(),
        etas=ck_eta[last].copy(),
        actions=actions if mode == "sampled" else None,
        checkpoints=checkpoints,
        checkpoint_iterates=ck_iterate,
    )


def _run_kernel(game, states, num_iters, mode, seed, checkpoints):
    nmax = max(game.action_counts)
    log_tau = np.zeros((2, nmax))
    kinds = np.empty(2, dtype=np.int64)
    lams = np.zeros(2)
    eta_modes = np.empty(2, dtype=np.int64)
    eta_params = np.zeros(2)
    for i, st in enumerate(states):
        log_tau[i, : st.num_actions] = st.log_anchor
        kinds[i] = _KIND_CODES[st.kind]
        lams[i] = st.lam if st.kind == "pikl" else 0.0
        if st.eta.mode == "adaptive":
            eta_modes[i] = _kernels.ETA_ADAPTIVE
            eta_params[i] = st.eta.c
        else:
            eta_modes[i] = _kernels.ETA_CONSTANT
            eta_params[i] = st.eta.value
    sampled = mode == "sampled"
    if sampled:
        uniforms = np.empty((num_iters, 2))
        for i, st in enumerate(states):
            uniforms[:, i] = st.rng.random(num_iters)
    else:
        uniforms = np.zeros((0, 2))
    lengths = np.array(game.action_counts, dtype=np.int64)
    return _kernels.selfplay_two_player(
        game.payoffs(0),
        game.payoffs(1),
        log_tau,
        lengths,
        kinds,
        lams,
        eta_modes,
        eta_params,
        num_iters,
        checkpoints,
        sampled,
        uniforms,
    )


def _run_python(game, states, num_iters, mode, checkpoints):
    np_players = game.num_players
    nmax = max(game.action_counts)
    num_ck = len(checkpoints)
    ck_iterate = np.zeros((num_ck, np_players, nmax))
    ck_avg = np.zeros((num_ck, np_players, nmax))
    ck_cv = np.zeros((num_ck, np_players, nmax))
    ck_raw = np.zeros((num_ck, np_players))
    ck_reg = np.zeros((num_ck, np_players))
    ck_eta = np.zeros((num_ck, np_players))
    actions = np.zeros((num_iters, np_players), dtype=np.int64) if mode == "sampled" else None
    ck = 0
    for t in range(1, num_iters + 1):
        etas = [st.eta.rate(t) for st in states]
        policies = [_begin(st) for st in states]
        if mode == "sampled":
            acts = [_sample(p, st.rng) for p, st in zip(policies, states)]
            actions[t - 1] = acts
            for i, st in enumerate(states):
                opp = [a for j, a in enumerate(acts) if j != i]
                _settle(st, policies[i], _q_sampled(st, opp))
        else:
            for i, st in enumerate(states):
                _settle(st, policies[i], _q_exact(st, policies))
        if ck < num_ck and t == checkpoints[ck]:
            for i, st in enumerate(states):
                n = st.num_actions
                ck_iterate[ck, i, :n] = policies[i]
                ck_avg[ck, i, :n] = st.avg_sum
                ck_cv[ck, i, :n] = st.cv
                ck_raw[ck, i] = st.realized_raw
                ck_reg[ck, i] = st.realized_reg
                ck_eta[ck, i] = etas[i]
            ck += 1
    return ck_iterate, ck_avg, ck_cv, ck_raw, ck_reg, ck_eta, actions


def fmt9(x) -> str:
    """Canonical 9-significant-digit float rendering for CSV output."""
    return format(float(x), ".9g")


DIAG_COLUMNS = ("t", "player", "kl_iterate", "kl_avg", "regret", "exploitability", "eta")


def diagnostics_to_csv(diagnostics: Sequence[CheckpointDiag]) -> str:
    """Render checkpoint diagnostics with the fixed column set."""
    lines = [",".join(DIAG_COLUMNS)]
    for d in diagnostics:
        expl = "" if d.exploitability is None else fmt9(d.exploitability)
        lines.append(
            ",".join(
                [
                    str(d.t),
                    str(d.player),
                    fmt9(d.kl_iterate),
                    fmt9(d.kl_avg),
                    fmt9(d.regret),
                    expl,
                    fmt9(d.eta),
                ]
            )
        )
    return "\n".join(lines) + "\n"
