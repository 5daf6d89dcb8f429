"""Compiled replay loops behind ``AckedHistory``.

Arrays are indexed by step: ``samples[t]`` the sensed state, ``xt``/``ut`` the
replayed estimate and input, ``nu`` the freshest generation in use and
``by_recv[t]`` the freshest generation received at ``t`` (-1 for none).
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _matvec(M, v):
    out = np.zeros(M.shape[0])
    for i in range(M.shape[0]):
        acc = 0.0
        for j in range(M.shape[1]):
            acc += M[i, j] * v[j]
        out[i] = acc
    return out


@njit(cache=True)
def _step(A, B, x, u):
    return _matvec(A, x) + _matvec(B, u)


@njit(cache=True)
def replay(A, B, K, samples, xt, ut, nu, by_recv, start, stop):
    n = A.shape[0]
    for t in range(start, stop + 1):
        prev = nu[t - 1] if t > 0 else -1
        gen = by_recv[t]
        if gen > prev:
            x = samples[gen].copy()
            for s in range(gen, t):
                x = _step(A, B, x, ut[s])
            prev = gen
        elif t > 0:
            x = _step(A, B, xt[t - 1], ut[t - 1])
        else:
            x = np.zeros(n)
        xt[t] = x
        ut[t] = -_matvec(K, x)
        nu[t] = prev


@njit(cache=True)
def hypothetical(A, B, K, samples, xt, ut, nu, by_recv, gen, recv, k):
    n, m = A.shape[0], B.shape[1]
    local_u = np.zeros((k - recv + 1, m))
    cur = nu[recv - 1] if recv > 0 else -1
    x = xt[recv - 1].copy() if recv > 0 else np.zeros(n)
    for t in range(recv, k + 1):
        cand = by_recv[t]
        if t == recv and gen > cand:
            cand = gen
        if cand > cur:
            x = samples[cand].copy()
            for s in range(cand, t):
                u = local_u[s - recv] if s >= recv else ut[s]
                x = _step(A, B, x, u)
            cur = cand
        elif t > 0:
            u = local_u[t - 1 - recv] if t - 1 >= recv else ut[t - 1]
            x = _step(A, B, x, u)
        local_u[t - recv] = -_matvec(K, x)
    return x


@njit(cache=True)
def accumulate_noise(A, noise, t_pr):
    acc = np.zeros((t_pr + 1, A.shape[0]))
    if noise.shape[0] > 0:
        for t in range(t_pr):
            acc[t + 1] = _matvec(A, acc[t]) + noise[t]
    return acc


@njit(cache=True)
def dyn_gain(A, powers, noise, consts, probs, wr_at, d, t_pr):
    """Probability-weighted sum over ``t = d..t_pr`` of the gap reduction.

    Row 0 of ``consts`` is the ACK-only gap; row ``g`` switches from it to
    its own gap at step ``wr_at[g]``.
    """
    acc = accumulate_noise(A, noise, t_pr)
    total = 0.0
    for t in range(d, t_pr + 1):
        own = np.abs(acc[t]).sum()
        base = np.abs(_matvec(powers[t], consts[0]) + acc[t]).sum()
        for g in range(1, consts.shape[0]):
            if t < wr_at[g]:
                err = base
            else:
                err = np.abs(_matvec(powers[t], consts[g]) + acc[t]).sum()
            total += probs[g] * (err - own)
    return total
