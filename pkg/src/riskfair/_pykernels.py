"""Numpy implementations of the numerical kernels.

Used when the compiled ``_ckernels`` extension is unavailable, or when
``RISKFAIR_PURE_PYTHON=1`` is set. Every function here has an identically
named, identically behaving counterpart in ``_ckernels.pyx``.
"""

import numpy as np

NAME = "python"


def pava(y, w):
    """Weighted pool-adjacent-violators on an already ordered sequence.

    Returns the non-decreasing sequence minimizing ``sum(w * (v - y)**2)``.
    """
    y = np.asarray(y, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    n = y.shape[0]
    vals = []
    wts = []
    sizes = []
    for i in range(n):
        v, wt, sz = y[i], w[i], 1
        while vals and vals[-1] > v:
            pv, pw, ps = vals.pop(), wts.pop(), sizes.pop()
            v = (pv * pw + v * wt) / (pw + wt)
            wt = pw + wt
            sz = ps + sz
        vals.append(v)
        wts.append(wt)
        sizes.append(sz)
    return np.repeat(np.asarray(vals, dtype=np.float64), sizes)


def weighted_auc(scores, pos_w, neg_w):
    """Mann-Whitney AUC with per-item positive and negative weights.

    An item with score ``s`` contributes ``pos_w`` to the positive mass and
    ``neg_w`` to the negative mass at ``s``. Ties count one half. Returns
    NaN when either total mass is zero.
    """
    scores = np.asarray(scores, dtype=np.float64)
    order = np.argsort(scores, kind="stable")
    s = scores[order]
    pw = np.asarray(pos_w, dtype=np.float64)[order]
    nw = np.asarray(neg_w, dtype=np.float64)[order]
    uniq_start = np.flatnonzero(np.r_[True, s[1:] != s[:-1]])
    p_tie = np.add.reduceat(pw, uniq_start) if s.size else np.zeros(0)
    n_tie = np.add.reduceat(nw, uniq_start) if s.size else np.zeros(0)
    neg_below = np.cumsum(n_tie) - n_tie
    total_p = p_tie.sum()
    total_n = n_tie.sum()
    if total_p <= 0.0 or total_n <= 0.0:
        return float("nan")
    num = np.sum(p_tie * (neg_below + 0.5 * n_tie))
    return float(num / (total_p * total_n))


def knn_indices(X, k):
    """Indices of the ``k`` nearest other rows of ``X`` (Euclidean).

    Ties in distance resolve to the lower row index.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    n = X.shape[0]
    out = np.empty((n, k), dtype=np.int64)
    chunk = 512
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        block = X[lo:hi]
        # exact differences rather than the |a|^2 - 2ab + |b|^2 expansion
        # so that distance ties are detected consistently with the C kernel
        d = ((block[:, None, :] - X[None, :, :]) ** 2).sum(axis=2)
        d[np.arange(hi - lo), np.arange(lo, hi)] = np.inf
        out[lo:hi] = np.argsort(d, axis=1, kind="stable")[:, :k]
    return out


def mlp_loss_grad(W1, b1, w2, b2, X, y, l2):
    """Mean cross-entropy of a ReLU/sigmoid network plus ``0.5*l2*|W|^2``.

    Returns ``(loss, gW1, gb1, gw2, gb2)``; biases are not penalized.
    """
    m = X.shape[0]
    z = X @ W1 + b1
    a = np.maximum(z, 0.0)
    o = a @ w2 + b2
    p = 1.0 / (1.0 + np.exp(-o))
    loss = np.sum(np.maximum(o, 0.0) + np.log1p(np.exp(-np.abs(o))) - y * o) / m
    loss += 0.5 * l2 * (np.sum(W1 * W1) + np.sum(w2 * w2))
    d_o = (p - y) / m
    gw2 = a.T @ d_o + l2 * w2
    gb2 = float(np.sum(d_o))
    dz = np.outer(d_o, w2) * (z > 0.0)
    gW1 = X.T @ dz + l2 * W1
    gb1 = dz.sum(axis=0)
    return float(loss), gW1, gb1, gw2, gb2


def mlp_sgd_epoch(W1, b1, w2, b2, vW1, vb1, vw2, vb2, X, y, order, batch_size, lr, momentum, l2):
    """One pass of momentum minibatch descent, updating parameters in place.

    ``b2`` and ``vb2`` are length-1 arrays so they can be mutated. Returns the
    mean of the per-batch losses.
    """
    n = len(order)
    total = 0.0
    nb = 0
    for r0 in range(0, n, batch_size):
        rows = order[r0:r0 + batch_size]
        loss, gW1, gb1, gw2, gb2 = mlp_loss_grad(W1, b1, w2, b2[0], X[rows], y[rows], l2)
        vW1 *= momentum
        vW1 -= lr * gW1
        W1 += vW1
        vb1 *= momentum
        vb1 -= lr * gb1
        b1 += vb1
        vw2 *= momentum
        vw2 -= lr * gw2
        w2 += vw2
        vb2[0] = momentum * vb2[0] - lr * gb2
        b2[0] += vb2[0]
        total += loss
        nb += 1
    return total / nb if nb else float("nan")
