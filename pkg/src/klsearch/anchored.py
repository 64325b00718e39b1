"""Closed-form and fixed-point solvers for anchored objectives.

softmax_anchored maximizes sum(pi * q) - lam * KL(pi || tau) in closed form;
reverse_kl_opt maximizes sum(pi * q) - lam * KL(tau || pi) by bisection on the
normalizing constant; anchored_qre finds the profile where every player's
policy is the anchored softmax of its expected utilities.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .games import NormalFormGame, action_values, check_policy


def softmax_anchored(q: np.ndarray, tau: np.ndarray, lam: float) -> np.ndarray:
    """Policy proportional to tau(a) * exp(q(a) / lam).

    This is the exact maximizer of sum(pi * q) - lam * KL(pi || tau) over the
    simplex. Requires lam > 0 and a full-support tau.
    """
    if lam <= 0:
        raise ValueError("lam must be positive; use a plain argmax for lam=0")
    tau = check_policy(tau)
    if (tau <= 0).any():
        raise ValueError("tau must have full support")
    q = np.asarray(q, dtype=float)
    w = np.log(tau) + q / lam
    w -= w.max()
    p = np.exp(w)
    return p / p.sum()


def anchored_softmax_value(q: np.ndarray, tau: np.ndarray, lam: float) -> float:
    """max_pi sum(pi * q) - lam * KL(pi || tau) = lam * logsumexp(log tau + q/lam)."""
    if lam <= 0:
        return float(np.asarray(q, dtype=float).max())
    tau = np.asarray(tau, dtype=float)
    q = np.asarray(q, dtype=float)
    w = np.log(tau) + q / lam
    m = w.max()
    return float(lam * (m + np.log(np.exp(w - m).sum())))


def reverse_kl_opt(
    q: np.ndarray,
    tau: np.ndarray,
    lam: float,
    tol: float = 1e-12,
    max_iters: int = 200,
) -> np.ndarray:
    """Maximize sum(pi * q) - lam * KL(tau || pi) over the simplex.

    The maximizer has the form pi(a) = lam * tau(a) / (alpha - q(a)) with
    alpha > max(q) chosen so the entries sum to one; sum(pi) is strictly
    decreasing in alpha, so alpha is found by bisection after growing the
    upper bracket geometrically until sum(pi) < 1.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    tau = check_policy(tau)
    if (tau <= 0).any():
        raise ValueError("tau must have full support")
    q = np.asarray(q, dtype=float)
    if q.size == 1:
        return np.array([1.0])
    q_max = q.max()

    def mass(alpha):
        return float(np.sum(lam * tau / (alpha - q)))

    eps = 1e-13 * (1.0 + abs(q_max))
    lo = q_max + eps
    step = max(lam, eps)
    hi = q_max + step
    while mass(hi) >= 1.0:
        step *= 2.0
        hi = q_max + step
    for _ in range(max_iters):
        mid = 0.5 * (lo + hi)
        m = mass(mid)
        if abs(m - 1.0) <= tol:
            lo = hi = mid
            break
        if m > 1.0:
            lo = mid
        else:
            hi = mid
    alpha = 0.5 * (lo + hi)
    return lam * tau / (alpha - q)


@dataclass(frozen=True)
class QreResult:
    profile: list
    converged: bool
    residual: float
    iterations: int


def anchored_qre(
    game: NormalFormGame,
    anchors: Sequence[np.ndarray],
    lam: float,
    max_iters: int = 100_000,
    damping: float = 0.5,
    tol: float = 1e-10,
) -> QreResult:
    """Fixed point where each player plays softmax_anchored of its expected
    utilities against the others: pi_i(a) prop. to tau_i(a) * exp(u_i(a, pi_-i)/lam).

    Damped simultaneous iteration from the anchors, stopping once the
    fixed-point residual max_i ||pi_i - F_i(pi)||_inf falls to `tol`. The
    damping factor starts at `damping` and is halved whenever the residual has
    not improved for 50 consecutive iterations (a fixed factor can spiral
    outward when 1/lam is large relative to the payoff scale).
    Non-convergence is reported in the result, not raised.
    """
    if lam <= 0:
        raise ValueError("lam must be positive")
    anchors = [check_policy(a) for a in anchors]
    profile = [a.copy() for a in anchors]
    gamma = damping
    best_residual = np.inf
    stalled = 0
    residual = np.inf
    iterations = 0
    for iterations in range(1, max_iters + 1):
        targets = [
            softmax_anchored(action_values(game, profile, i), anchors[i], lam)
            for i in range(game.num_players)
        ]
        residual = max(
            float(np.abs(t - p).max()) for t, p in zip(targets, profile)
        )
        if residual <= tol:
            return QreResult(profile=profile, converged=True, residual=residual, iterations=iterations)
        if residual < best_residual:
            best_residual = residual
            stalled = 0
        else:
            stalled += 1
            if stalled >= 50 and gamma > 1e-4:
                gamma *= 0.5
                stalled = 0
        profile = [(1.0 - gamma) * p + gamma * t for p, t in zip(profile, targets)]
    return QreResult(profile=profile, converged=False, residual=residual, iterations=iterations)
