"""Pure numpy kernels: reference implementation of the hot numeric loops.

The compiled extension (`navcontrast.kernels._core`) mirrors these functions
exactly; tests assert both backends agree to float64 precision.  All inputs
are 1-D float64 arrays unless stated otherwise.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"


def _softplus(z: float) -> float:
    # log(1 + e^z) without overflow for large z
    if z > 30.0:
        return z + np.log1p(np.exp(-z))
    return float(np.log1p(np.exp(z)))


def circle_terms(sp, sn, m, gamma):
    """Pair-similarity loss with self-paced weighting, plus its gradients.

    loss = log(1 + sum_j exp(l_n_j) * sum_i exp(l_p_i)) with
      l_n_j = gamma * [sn_j - O_n]_+ * (sn_j - D_n)
      l_p_i = -gamma * [O_p - sp_i]_+ * (sp_i - D_p)
    and (O_n, D_n, O_p, D_p) = (-m, m, 1+m, 1-m).

    Returns (loss, dloss_dsp, dloss_dsn).  Either side empty -> loss 0 and
    zero gradients (the product term vanishes).
    """
    sp = np.asarray(sp, dtype=np.float64)
    sn = np.asarray(sn, dtype=np.float64)
    if sp.size == 0 or sn.size == 0:
        return 0.0, np.zeros_like(sp), np.zeros_like(sn)

    o_n, d_n = -m, m
    o_p, d_p = 1.0 + m, 1.0 - m

    a_n = np.maximum(sn - o_n, 0.0)
    a_p = np.maximum(o_p - sp, 0.0)
    l_n = gamma * a_n * (sn - d_n)
    l_p = -gamma * a_p * (sp - d_p)

    mx_n = float(np.max(l_n))
    mx_p = float(np.max(l_p))
    e_n = np.exp(l_n - mx_n)
    e_p = np.exp(l_p - mx_p)
    lse_n = mx_n + np.log(np.sum(e_n))
    lse_p = mx_p + np.log(np.sum(e_p))
    z = lse_n + lse_p
    loss = _softplus(z)

    # dloss/dl = softmax within its own set, scaled by sigmoid(z)
    sig = 1.0 / (1.0 + np.exp(-z)) if z > -30.0 else np.exp(z)
    g_ln = sig * e_n / np.sum(e_n)
    g_lp = sig * e_p / np.sum(e_p)

    dln_dsn = gamma * (a_n + (sn > o_n) * (sn - d_n))
    dlp_dsp = gamma * ((sp < o_p) * (sp - d_p) - a_p)
    return float(loss), g_lp * dlp_dsp, g_ln * dln_dsn


def infonce_terms(sp, sn, tau):
    """Multi-positive InfoNCE loss and gradients.

    loss = mean_i -log( e^{sp_i/tau} / (e^{sp_i/tau} + sum_j e^{sn_j/tau}) )

    Returns (loss, dloss_dsp, dloss_dsn); requires non-empty sp and sn.
    """
    sp = np.asarray(sp, dtype=np.float64)
    sn = np.asarray(sn, dtype=np.float64)
    if sp.size == 0 or sn.size == 0:
        raise ValueError("infonce_terms requires at least one positive and one negative")
    zp = sp / tau
    zn = sn / tau
    mx = float(max(np.max(zp), np.max(zn)))
    ep = np.exp(zp - mx)
    en = np.exp(zn - mx)
    s = float(np.sum(en))
    h = sp.size

    denom = ep + s                      # per positive: e^{zp_i} + sum e^{zn}
    loss = float(np.mean(np.log(denom) + mx - zp))
    dsp = (-s / denom) / (h * tau)
    dsn = en * np.sum(1.0 / denom) / (h * tau)
    return loss, dsp, dsn


def mine_pair_masks(sp, sn, m):
    """Hard-pair selection masks.

    keep_n: 1-m > sn > min(sp) - m (strict); false_neg: sn >= 1-m;
    keep_p: sp < max(kept sn) + m (strict), empty when no negative survives.

    Returns (keep_p, keep_n, false_neg) boolean arrays.
    """
    sp = np.asarray(sp, dtype=np.float64)
    sn = np.asarray(sn, dtype=np.float64)
    if sp.size == 0:
        raise ValueError("mine_pair_masks requires at least one positive")
    false_neg = sn >= 1.0 - m
    lower = float(np.min(sp)) - m
    keep_n = (~false_neg) & (sn > lower)
    if np.any(keep_n):
        thr = float(np.max(sn[keep_n])) + m
        keep_p = sp < thr
    else:
        keep_p = np.zeros(sp.shape, dtype=bool)
    return keep_p, keep_n, false_neg


def dtw_cost(cost):
    """Accumulated dynamic-time-warping cost of a pairwise cost matrix."""
    cost = np.asarray(cost, dtype=np.float64)
    n, m = cost.shape
    if n == 0 or m == 0:
        raise ValueError("dtw_cost requires non-empty sequences")
    acc = np.empty((n, m), dtype=np.float64)
    acc[0, 0] = cost[0, 0]
    for j in range(1, m):
        acc[0, j] = acc[0, j - 1] + cost[0, j]
    for i in range(1, n):
        acc[i, 0] = acc[i - 1, 0] + cost[i, 0]
        row = acc[i]
        prev = acc[i - 1]
        for j in range(1, m):
            row[j] = cost[i, j] + min(prev[j], row[j - 1], prev[j - 1])
    return float(acc[n - 1, m - 1])
