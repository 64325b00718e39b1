"""Compiled inner loops for two-player self-play.

These kernels are a performance path only: the update rules are the same ones
implemented in plain Python in solvers.py, and the test suite checks the two
paths agree. Player arrays are padded to the larger action count; `lengths`
carries the true sizes.
"""

import numpy as np
from numba import njit

KIND_PIKL = 0
KIND_HEDGE = 1
KIND_RM = 2

ETA_CONSTANT = 0
ETA_ADAPTIVE = 1


@njit(cache=True)
def selfplay_two_player(
    u0,            # (n0, n1) payoffs of player 0, indexed [a0, a1]
    u1,            # (n0, n1) payoffs of player 1, indexed [a0, a1]
    log_tau,       # (2, nmax) log anchors, padded with 0
    lengths,       # (2,) int64 action counts
    kinds,         # (2,) int64 KIND_*
    lams,          # (2,) float64, 0 for hedge/rm
    eta_modes,     # (2,) int64 ETA_*
    eta_params,    # (2,) float64: constant rate, or adaptive scale c
    num_iters,     # int64
    checkpoints,   # (C,) int64 ascending, last entry == num_iters
    sampled,       # bool: full-information sampled updates vs exact expectations
    uniforms,      # (num_iters, 2) uniforms for action sampling (unused if exact)
):
    n0 = lengths[0]
    n1 = lengths[1]
    nmax = max(n0, n1)
    cv = np.zeros((2, nmax))
    avg = np.zeros((2, nmax))
    pol = np.zeros((2, nmax))
    regrets = np.zeros((2, nmax))
    realized_raw = np.zeros(2)
    realized_reg = np.zeros(2)
    w_count = np.zeros(2)
    w_mean = np.zeros(2)
    w_m2 = np.zeros(2)
    etas = np.zeros(2)
    num_ck = checkpoints.shape[0]
    ck_iterate = np.zeros((num_ck, 2, nmax))
    ck_avg = np.zeros((num_ck, 2, nmax))
    ck_cv = np.zeros((num_ck, 2, nmax))
    ck_raw = np.zeros((num_ck, 2))
    ck_reg = np.zeros((num_ck, 2))
    ck_eta = np.zeros((num_ck, 2))
    actions = np.zeros((num_iters if sampled else 0, 2), dtype=np.int64)
    ck = 0
    for t in range(1, num_iters + 1):
        for i in range(2):
            n = lengths[i]
            if eta_modes[i] == ETA_ADAPTIVE:
                c = eta_params[i]
                if w_count[i] < 1.0 or w_m2[i] <= 0.0:
                    eta = c
                else:
                    sigma = np.sqrt(w_m2[i] / w_count[i])
                    eta = c / (sigma * np.sqrt(t))
            else:
                eta = eta_params[i]
            etas[i] = eta
            if kinds[i] == KIND_RM:
                ssum = 0.0
                for a in range(n):
                    v = regrets[i, a] if regrets[i, a] > 0.0 else 0.0
                    pol[i, a] = v
                    ssum += v
                if ssum > 0.0:
                    for a in range(n):
                        pol[i, a] /= ssum
                else:
                    for a in range(n):
                        pol[i, a] = 1.0 / n
            else:
                lam = lams[i]
                den = 1.0 + t * lam * eta
                m = -np.inf
                for a in range(n):
                    w = (eta * cv[i, a] + t * lam * eta * log_tau[i, a]) / den
                    pol[i, a] = w
                    if w > m:
                        m = w
                ssum = 0.0
                for a in range(n):
                    v = np.exp(pol[i, a] - m)
                    pol[i, a] = v
                    ssum += v
                for a in range(n):
                    pol[i, a] /= ssum
            for a in range(n):
                avg[i, a] += pol[i, a]
        if sampled:
            for i in range(2):
                n = lengths[i]
                u = uniforms[t - 1, i]
                chosen = n - 1
                acc = 0.0
                for a in range(n):
                    acc += pol[i, a]
                    if u < acc:
                        chosen = a
                        break
                actions[t - 1, i] = chosen
        for i in range(2):
            n = lengths[i]
            q = np.empty(n)
            if i == 0:
                if sampled:
                    b = actions[t - 1, 1]
                    for a in range(n):
                        q[a] = u0[a, b]
                else:
                    for a in range(n):
                        s = 0.0
                        for b in range(n1):
                            s += u0[a, b] * pol[1, b]
                        q[a] = s
            else:
                if sampled:
                    b = actions[t - 1, 0]
                    for a in range(n):
                        q[a] = u1[b, a]
                else:
                    for a in range(n):
                        s = 0.0
                        for b in range(n0):
                            s += u1[b, a] * pol[0, b]
                        q[a] = s
            pq = 0.0
            for a in range(n):
                pq += pol[i, a] * q[a]
            w_count[i] += 1.0
            d = pq - w_mean[i]
            w_mean[i] += d / w_count[i]
            w_m2[i] += d * (pq - w_mean[i])
            klv = 0.0
            if lams[i] > 0.0:
                for a in range(n):
                    if pol[i, a] > 0.0:
                        klv += pol[i, a] * (np.log(pol[i, a]) - log_tau[i, a])
            realized_raw[i] += pq
            realized_reg[i] += pq - lams[i] * klv
            for a in range(n):
                cv[i, a] += q[a]
                regrets[i, a] += q[a] - pq
        if ck < num_ck and t == checkpoints[ck]:
            for i in range(2):
                n = lengths[i]
                for a in range(n):
                    ck_iterate[ck, i, a] = pol[i, a]
                    ck_avg[ck, i, a] = avg[i, a]
                    ck_cv[ck, i, a] = cv[i, a]
                ck_raw[ck, i] = realized_raw[i]
                ck_reg[ck, i] = realized_reg[i]
                ck_eta[ck, i] = etas[i]
            ck += 1
    return ck_iterate, ck_avg, ck_cv, ck_raw, ck_reg, ck_eta, actions
