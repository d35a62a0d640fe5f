"""Independent reference implementations used for self-verification.

Everything here is deliberately written the slow, obvious way with plain
Python scalars and no shared helpers from the rest of the package, so a bug
in an optimized code path cannot hide in its own oracle.  Used by the test
suite and by the `check` CLI subcommand.
"""

from __future__ import annotations

import math
from collections import deque


def bfs_hops(adjacency, start, goal):
    """Hop count of a shortest path, or None when unreachable."""
    if start == goal:
        return 0
    seen = {start: 0}
    q = deque([start])
    while q:
        v = q.popleft()
        for u in adjacency[v]:
            if u not in seen:
                seen[u] = seen[v] + 1
                if u == goal:
                    return seen[u]
                q.append(u)
    return None


def all_simple_paths(adjacency, start, goal, hop_cap):
    """Every simple path from start to goal with at most hop_cap edges."""
    found = []
    path = [start]

    def walk(v):
        if v == goal:
            found.append(tuple(path))
            return
        if len(path) - 1 == hop_cap:
            return
        for u in adjacency[v]:
            if u not in path:
                path.append(u)
                walk(u)
                path.pop()

    walk(start)
    return found


def partition_by_hops(hops, h_gt, alpha_p, alpha_n):
    """Index partition of candidate hop counts by the two alpha thresholds."""
    pos, neg, mid = [], [], []
    for i, h in enumerate(hops):
        if h <= alpha_p * h_gt + 1e-9:
            pos.append(i)
        elif h >= alpha_n * h_gt - 1e-9:
            neg.append(i)
        else:
            mid.append(i)
    return pos, neg, mid


def circle_loss_scalar(sp, sn, m, gamma):
    """Circle loss written as one literal expression over Python floats."""
    o_p, o_n = 1.0 + m, -m
    d_p, d_n = 1.0 - m, m
    pos_sum = sum(
        math.exp(-gamma * max(o_p - s, 0.0) * (s - d_p)) for s in sp)
    neg_sum = sum(
        math.exp(gamma * max(s - o_n, 0.0) * (s - d_n)) for s in sn)
    if not sp or not sn:
        return 0.0
    return math.log(1.0 + neg_sum * pos_sum)


def info_nce_scalar(sp, sn, tau):
    """Multi-positive InfoNCE, averaged over positives."""
    neg = sum(math.exp(s / tau) for s in sn)
    terms = [
        -math.log(math.exp(s / tau) / (math.exp(s / tau) + neg)) for s in sp]
    return sum(terms) / len(terms)


def mine_sets(sp, sn, m):
    """Pair filter over raw similarity lists.

    Returns (kept_p_idx, kept_n_idx, false_neg_idx) index lists mirroring
    the informative / false-negative split of the fast kernel.
    """
    false_neg = [j for j, s in enumerate(sn) if s >= 1.0 - m]
    floor = min(sp) - m
    kept_n = [j for j, s in enumerate(sn)
              if j not in false_neg and s > floor]
    if kept_n:
        ceil = max(sn[j] for j in kept_n) + m
        kept_p = [i for i, s in enumerate(sp) if s < ceil]
    else:
        kept_p = []
    return kept_p, kept_n, false_neg


def fifo_contents(capacity, pushes):
    """What a bounded FIFO holds after pushing `pushes` in order."""
    held = []
    for item in pushes:
        held.append(item)
        if len(held) > capacity:
            held.pop(0)
    return held


def dtw_table(cost):
    """Quadratic DTW accumulation with explicit loops over a cost matrix
    given as a list of lists."""
    n, m = len(cost), len(cost[0])
    acc = [[math.inf] * m for _ in range(n)]
    acc[0][0] = cost[0][0]
    for i in range(1, n):
        acc[i][0] = acc[i - 1][0] + cost[i][0]
    for j in range(1, m):
        acc[0][j] = acc[0][j - 1] + cost[0][j]
    for i in range(1, n):
        for j in range(1, m):
            acc[i][j] = cost[i][j] + min(
                acc[i - 1][j], acc[i][j - 1], acc[i - 1][j - 1])
    return acc[n - 1][m - 1]


def discounted_returns(rewards, discount):
    """Return-to-go for each step, computed right to left."""
    out = [0.0] * len(rewards)
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + discount * acc
        out[t] = acc
    return out
