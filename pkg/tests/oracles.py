"""Slow reference implementations used as test oracles."""

import numpy as np


def pairwise_auc(scores, labels):
    """O(n^2) Mann-Whitney: all (positive, negative) pairs, ties count 1/2."""
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels)
    pos, neg = s[y == 1], s[y == 0]
    total = 0.0
    for p in pos:
        for q in neg:
            total += 1.0 if p > q else 0.5 if p == q else 0.0
    return total / (pos.size * neg.size)


def brute_isotonic(scores, labels, step=1e-3):
    """Exact least squares over a value grid, non-decreasing in score, ties forced equal.

    Dynamic program over blocks of tied scores: cost[g] is the best total
    squared error with the current block at grid value g.
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=float)
    grid = np.arange(0.0, 1.0 + step / 2, step)
    order = np.argsort(s, kind="stable")
    blocks = []
    for i in order:
        if blocks and s[blocks[-1][0]] == s[i]:
            blocks[-1].append(i)
        else:
            blocks.append([i])
    best = np.zeros(grid.size)
    choice = []
    for b in blocks:
        cost = ((grid[:, None] - y[b][None, :]) ** 2).sum(axis=1)
        prefix = np.minimum.accumulate(best)
        arg = np.zeros(grid.size, dtype=int)
        m = 0
        for g in range(grid.size):
            if best[g] < best[m]:
                m = g
            arg[g] = m
        choice.append(arg)
        best = cost + prefix
    fitted = np.empty(s.size)
    g = int(np.argmin(best))
    for b, arg in zip(reversed(blocks), reversed(choice)):
        fitted[b] = grid[g]
        g = arg[g]
    return fitted


def central_differences(f, params, h=1e-6):
    """Gradient of scalar ``f()`` w.r.t. each array in ``params`` (perturbed in place)."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            up = f()
            flat[i] = old - h
            down = f()
            flat[i] = old
            gflat[i] = (up - down) / (2 * h)
        grads.append(g)
    return grads


def rel_error(a, b):
    a = np.concatenate([np.ravel(x) for x in a])
    b = np.concatenate([np.ravel(x) for x in b])
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a) + np.linalg.norm(b), 1e-30))
