"""Compiled inner loops. Edge draws always come from numpy Generators upstream,
so these kernels are deterministic functions of their inputs."""
from __future__ import annotations

import math

import numpy as np
from numba import njit

RESCALE_BELOW = 2.0 ** -300


@njit(cache=True, nogil=True)
def apply_edges(x, aux, eu, ev, idx, delta, counts, cross):
    """Apply the edges ``idx`` in order. ``aux`` rows are co-evolved with x.

    Returns the number of cross edges among the applied ones.
    """
    keep = 1.0 - delta
    ncross = 0
    track = counts.shape[0] > 0
    naux = aux.shape[0]
    for s in range(idx.shape[0]):
        e = idx[s]
        u = eu[e]
        v = ev[e]
        xu = x[u]
        xv = x[v]
        x[u] = keep * xu + delta * xv
        x[v] = keep * xv + delta * xu
        for k in range(naux):
            au = aux[k, u]
            av = aux[k, v]
            aux[k, u] = keep * au + delta * av
            aux[k, v] = keep * av + delta * au
        if track:
            counts[u] += 1
            counts[v] += 1
        if cross[e]:
            ncross += 1
    return ncross


@njit(cache=True, nogil=True)
def batch_checkpoints(x0, eu, ev, idx2d, delta, checkpoints, out):
    """out[c, r, :] = state of trial r after checkpoints[c] rounds (checkpoints ascending)."""
    keep = 1.0 - delta
    n = x0.shape[0]
    x = np.empty(n)
    for r in range(idx2d.shape[0]):
        for i in range(n):
            x[i] = x0[i]
        c = 0
        while c < checkpoints.shape[0] and checkpoints[c] == 0:
            out[c, r, :] = x
            c += 1
        for t in range(idx2d.shape[1]):
            e = idx2d[r, t]
            u = eu[e]
            v = ev[e]
            xu = x[u]
            xv = x[v]
            x[u] = keep * xu + delta * xv
            x[v] = keep * xv + delta * xu
            while c < checkpoints.shape[0] and checkpoints[c] == t + 1:
                out[c, r, :] = x
                c += 1


@njit(cache=True, nogil=True)
def _recenter_rescale(row):
    """Remove round-off drift of the (exactly conserved, zero) mean, then
    rescale by a power of two if the row has become tiny. Returns the shift."""
    n = row.shape[0]
    mean = 0.0
    for i in range(n):
        mean += row[i]
    mean /= n
    mx = 0.0
    for i in range(n):
        row[i] -= mean
        a = abs(row[i])
        if a > mx:
            mx = a
    if mx == 0.0 or mx >= RESCALE_BELOW:
        return 0
    k = -math.frexp(mx)[1]
    for i in range(n):
        row[i] = math.ldexp(row[i], k)
    return k


@njit(cache=True, nogil=True)
def jump_chunk(draws, m, eu, ev, delta, X, exps, since, counts, ts, te, xs, xs_exp,
               labels, label_time, t0, remaining, rescale_every):
    """Advance interleaved Jump-Labeling copies over a block of draws.

    X holds residual values (state minus its conserved mean) scaled by
    2**exps[j] per copy, so tiny late-time signals stay representable.
    Returns (rounds consumed, labels still missing).
    """
    keep = 1.0 - delta
    for s in range(draws.shape[0]):
        k = draws[s]
        e = k % m
        j = k // m
        u = eu[e]
        v = ev[e]
        xu = X[j, u]
        xv = X[j, v]
        X[j, u] = keep * xu + delta * xv
        X[j, v] = keep * xv + delta * xu
        for w in (u, v):
            counts[j, w] += 1
            c = counts[j, w]
            if c == ts[j, w]:
                xs[j, w] = X[j, w]
                xs_exp[j, w] = exps[j]
            if c == te[j, w]:
                shift = exps[j] - xs_exp[j, w]
                if shift > 2000:
                    shift = 2000
                stored = math.ldexp(xs[j, w], shift)
                labels[j, w] = 1 if stored - X[j, w] >= 0.0 else -1
                label_time[j, w] = t0 + s + 1
                remaining -= 1
        since[j] += 1
        if since[j] >= rescale_every:
            since[j] = 0
            exps[j] += _recenter_rescale(X[j])
        if remaining == 0:
            return s + 1, remaining
    return draws.shape[0], remaining


@njit(cache=True, nogil=True)
def sign_chunk(draws, m, eu, ev, X, counts, T, labels, freeze_global, freeze_local,
               comp_rounds, t0, remaining):
    """Advance Sign-Labeling components (Averaging(1/2) each) over a block of draws."""
    for s in range(draws.shape[0]):
        k = draws[s]
        e = k % m
        j = k // m
        u = eu[e]
        v = ev[e]
        avg = 0.5 * (X[j, u] + X[j, v])
        X[j, u] = avg
        X[j, v] = avg
        comp_rounds[j] += 1
        for w in (u, v):
            counts[j, w] += 1
            if counts[j, w] == T:
                labels[j, w] = 1 if X[j, w] >= 0.0 else -1
                freeze_global[j, w] = t0 + s + 1
                freeze_local[j, w] = comp_rounds[j]
                remaining -= 1
        if remaining == 0:
            return s + 1, remaining
    return draws.shape[0], remaining


@njit(cache=True, nogil=True)
def activation_times(eu, ev, idx, n, max_tau):
    """times[u, k] = round (1-based) of u's (k+1)-th activation, or -1 if it never happened."""
    times = np.full((n, max_tau), -1, dtype=np.int64)
    cnt = np.zeros(n, dtype=np.int64)
    for s in range(idx.shape[0]):
        e = idx[s]
        for w in (eu[e], ev[e]):
            c = cnt[w]
            if c < max_tau:
                times[w, c] = s + 1
            cnt[w] = c + 1
    return times
