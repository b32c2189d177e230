"""Compiled split-search kernels.

Every kernel takes one candidate variable of one node, already sorted by
the variable's value, and sweeps the cut from left to right. Rows are
described by ``k_at`` (number of node event times <= own time, i.e. the
row is at risk at event-time indices ``0 .. k_at-1``), ``k_before``
(event-time indices strictly before the row's time) and ``status``.
Candidate cuts are positions ``p``: rows ``0..p-1`` go left.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

NEG_INF = -np.inf


@njit(cache=True)
def node_risk_table(k_at, status, m):
    Y = np.zeros(m)
    d = np.zeros(m)
    for i in range(k_at.shape[0]):
        for k in range(k_at[i]):
            Y[k] += 1.0
        if status[i]:
            d[k_at[i] - 1] += 1.0
    return Y, d


@njit(cache=True)
def logrank_scan(k_at, status, m, positions):
    """|O - E| / sqrt(V) of the left child at each candidate position."""
    Y, d = node_risk_table(k_at, status, m)
    hz = np.zeros(m)
    a = np.zeros(m)
    for k in range(m):
        if Y[k] > 0:
            hz[k] = d[k] / Y[k]
        if Y[k] > 1:
            a[k] = d[k] * (Y[k] - d[k]) / (Y[k] * (Y[k] - 1.0))
    YL = np.zeros(m)
    out = np.full(positions.shape[0], NEG_INF)
    oe = 0.0
    v = 0.0
    row = 0
    for c in range(positions.shape[0]):
        p = positions[c]
        while row < p:
            K = k_at[row]
            s = 0.0
            for k in range(K):
                if Y[k] > 0:
                    v += a[k] * (1.0 - (2.0 * YL[k] + 1.0) / Y[k])
                YL[k] += 1.0
                s += hz[k]
            oe += status[row] - s
            row += 1
        if v > 1e-12:
            out[c] = abs(oe) / math.sqrt(v)
        else:
            out[c] = 0.0
    return out


@njit(cache=True)
def logrank_score_scan(k_at, status, m, positions):
    """Standardized sum of log-rank scores ``delta - H_NA(t)`` in the left child."""
    n = k_at.shape[0]
    Y, d = node_risk_table(k_at, status, m)
    H = np.zeros(m)
    acc = 0.0
    for k in range(m):
        if Y[k] > 0:
            acc += d[k] / Y[k]
        H[k] = acc
    a = np.empty(n)
    for i in range(n):
        a[i] = status[i] - (H[k_at[i] - 1] if k_at[i] > 0 else 0.0)
    abar = a.mean()
    ss = 0.0
    for i in range(n):
        ss += (a[i] - abar) ** 2
    out = np.full(positions.shape[0], NEG_INF)
    if ss <= 0 or n < 2:
        for c in range(positions.shape[0]):
            out[c] = 0.0
        return out
    s = 0.0
    row = 0
    for c in range(positions.shape[0]):
        p = positions[c]
        while row < p:
            s += a[row]
            row += 1
        nl = p
        nr = n - p
        var = nl * nr / (n * (n - 1.0)) * ss
        out[c] = abs(s - nl * abar) / math.sqrt(var) if var > 0 else 0.0
    return out


@njit(cache=True)
def _child_brier(Y, d, A, B, G_t, n_child):
    """Mean over event times of the IPCW Brier score of the child's own KM."""
    m = Y.shape[0]
    if n_child <= 0 or m == 0:
        return 0.0
    S = 1.0
    tot = 0.0
    for k in range(m):
        if Y[k] > 0:
            S *= 1.0 - d[k] / Y[k]
        tot += (S * S * A[k] + (1.0 - S) * (1.0 - S) * B[k] / G_t[k]) / n_child
    return tot / m


@njit(cache=True)
def brier_scan(k_at, k_before, status, m, positions, w_event, G_t):
    """Parent minus size-weighted children integrated Brier score.

    ``w_event[i]`` is ``1/G(T_i-)`` for event rows and ``G_t[k]`` the
    censoring survival at node event time ``k``.
    """
    n = k_at.shape[0]
    Y, d = node_risk_table(k_at, status, m)
    A = np.zeros(m)
    B = np.zeros(m)
    for i in range(n):
        if status[i]:
            for k in range(k_at[i] - 1, m):
                A[k] += w_event[i]
        for k in range(k_before[i]):
            B[k] += 1.0
    parent = _child_brier(Y, d, A, B, G_t, n)
    YL = np.zeros(m)
    dL = np.zeros(m)
    AL = np.zeros(m)
    BL = np.zeros(m)
    out = np.full(positions.shape[0], NEG_INF)
    row = 0
    for c in range(positions.shape[0]):
        p = positions[c]
        while row < p:
            for k in range(k_at[row]):
                YL[k] += 1.0
            if status[row]:
                dL[k_at[row] - 1] += 1.0
                for k in range(k_at[row] - 1, m):
                    AL[k] += w_event[row]
            for k in range(k_before[row]):
                BL[k] += 1.0
            row += 1
        left = _child_brier(YL, dL, AL, BL, G_t, p)
        right = _child_brier(Y - YL, d - dL, A - AL, B - BL, G_t, n - p)
        out[c] = parent - (p * left + (n - p) * right) / n
    return out


@njit(cache=True)
def harrell_scan(times, status, positions):
    """|C - 0.5| with left-child membership as the risk score."""
    n = times.shape[0]
    total = 0.0
    for i in range(n):
        if status[i]:
            for j in range(n):
                if times[j] > times[i]:
                    total += 1.0
    out = np.full(positions.shape[0], NEG_INF)
    if total == 0:
        for c in range(positions.shape[0]):
            out[c] = 0.0
        return out
    in_left = np.zeros(n, dtype=np.bool_)
    n_lr = 0.0  # earlier event on the left, later subject on the right
    n_rl = 0.0
    row = 0
    for c in range(positions.shape[0]):
        p = positions[c]
        while row < p:
            r = row
            tr = times[r]
            for j in range(n):
                if j == r:
                    continue
                if status[r] and times[j] > tr:
                    if in_left[j]:
                        n_rl -= 1.0
                    else:
                        n_lr += 1.0
                if status[j] and times[j] < tr:
                    if in_left[j]:
                        n_lr -= 1.0
                    else:
                        n_rl += 1.0
            in_left[r] = True
            row += 1
        conc = n_lr + 0.5 * (total - n_lr - n_rl)
        out[c] = abs(conc / total - 0.5)
    return out


@njit(cache=True)
def route(X, feature, threshold, left, right):
    """Node index of the leaf reached by every row."""
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out
