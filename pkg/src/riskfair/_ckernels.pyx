# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled numerical kernels; see ``_pykernels`` for the reference twin."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log1p, fabs, INFINITY

cnp.import_array()

NAME = "cython"


def pava(y, w):
    cdef const double[:] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const double[:] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t n = yv.shape[0]
    cdef double[:] vals = np.empty(n, dtype=np.float64)
    cdef double[:] wts = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t[:] sizes = np.empty(n, dtype=np.intp)
    cdef Py_ssize_t top = 0, i, j, pos
    cdef double v, wt
    cdef Py_ssize_t sz
    for i in range(n):
        v = yv[i]
        wt = wv[i]
        sz = 1
        while top > 0 and vals[top - 1] > v:
            top -= 1
            v = (vals[top] * wts[top] + v * wt) / (wts[top] + wt)
            wt = wts[top] + wt
            sz = sizes[top] + sz
        vals[top] = v
        wts[top] = wt
        sizes[top] = sz
        top += 1
    out = np.empty(n, dtype=np.float64)
    cdef double[:] ov = out
    pos = 0
    for i in range(top):
        for j in range(sizes[i]):
            ov[pos] = vals[i]
            pos += 1
    return out


def weighted_auc(scores, pos_w, neg_w):
    s_arr = np.asarray(scores, dtype=np.float64)
    order = np.argsort(s_arr, kind="stable")
    cdef const double[:] s = np.ascontiguousarray(s_arr[order])
    cdef const double[:] pw = np.ascontiguousarray(np.asarray(pos_w, dtype=np.float64)[order])
    cdef const double[:] nw = np.ascontiguousarray(np.asarray(neg_w, dtype=np.float64)[order])
    cdef Py_ssize_t n = s.shape[0], i = 0, j
    cdef double neg_below = 0.0, num = 0.0, tp = 0.0, tn = 0.0
    cdef double p_tie, n_tie
    while i < n:
        j = i
        p_tie = 0.0
        n_tie = 0.0
        while j < n and s[j] == s[i]:
            p_tie += pw[j]
            n_tie += nw[j]
            j += 1
        num += p_tie * (neg_below + 0.5 * n_tie)
        neg_below += n_tie
        tp += p_tie
        tn += n_tie
        i = j
    if tp <= 0.0 or tn <= 0.0:
        return float("nan")
    return num / (tp * tn)


def knn_indices(X, Py_ssize_t k):
    cdef const double[:, :] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t n = x.shape[0], d = x.shape[1]
    out = np.empty((n, k), dtype=np.int64)
    cdef cnp.int64_t[:, :] ov = out
    cdef double[:] bd = np.empty(k, dtype=np.float64)
    cdef cnp.int64_t[:] bi = np.empty(k, dtype=np.int64)
    cdef Py_ssize_t i, j, c, pos, cnt
    cdef double dist, diff
    for i in range(n):
        cnt = 0
        for j in range(n):
            if j == i:
                continue
            dist = 0.0
            for c in range(d):
                diff = x[i, c] - x[j, c]
                dist += diff * diff
            # j ascends, so strict comparison keeps the lower index on ties
            if cnt < k:
                pos = cnt
                cnt += 1
            elif dist < bd[k - 1]:
                pos = k - 1
            else:
                continue
            while pos > 0 and bd[pos - 1] > dist:
                bd[pos] = bd[pos - 1]
                bi[pos] = bi[pos - 1]
                pos -= 1
            bd[pos] = dist
            bi[pos] = j
        for c in range(k):
            ov[i, c] = bi[c]
    return out


cdef double _batch_grad(const double[:, ::1] W, const double[::1] bh, const double[::1] wo,
                        double b2, const double[:, ::1] x, const double[::1] yv,
                        const cnp.int64_t[::1] rows, Py_ssize_t r0, Py_ssize_t r1, double l2,
                        double[:, ::1] gW, double[::1] gbh, double[::1] gwo, double* gb2,
                        double[::1] z, double[::1] dz) noexcept nogil:
    cdef Py_ssize_t d = W.shape[0], H = W.shape[1]
    cdef Py_ssize_t r, i, j, h
    cdef double o, p, d_o, xij, loss = 0.0, pen = 0.0
    cdef double inv_m = 1.0 / (r1 - r0)
    for j in range(d):
        for h in range(H):
            gW[j, h] = 0.0
    for h in range(H):
        gbh[h] = 0.0
        gwo[h] = 0.0
    gb2[0] = 0.0
    for r in range(r0, r1):
        i = rows[r]
        for h in range(H):
            z[h] = bh[h]
        for j in range(d):
            xij = x[i, j]
            for h in range(H):
                z[h] += xij * W[j, h]
        o = b2
        for h in range(H):
            if z[h] > 0.0:
                o += z[h] * wo[h]
        p = 1.0 / (1.0 + exp(-o))
        loss += (o if o > 0.0 else 0.0) + log1p(exp(-fabs(o))) - yv[i] * o
        d_o = (p - yv[i]) * inv_m
        gb2[0] += d_o
        for h in range(H):
            if z[h] > 0.0:
                gwo[h] += z[h] * d_o
                dz[h] = d_o * wo[h]
            else:
                dz[h] = 0.0
            gbh[h] += dz[h]
        for j in range(d):
            xij = x[i, j]
            for h in range(H):
                gW[j, h] += xij * dz[h]
    loss *= inv_m
    for j in range(d):
        for h in range(H):
            pen += W[j, h] * W[j, h]
            gW[j, h] += l2 * W[j, h]
    for h in range(H):
        pen += wo[h] * wo[h]
        gwo[h] += l2 * wo[h]
    return loss + 0.5 * l2 * pen


def mlp_loss_grad(W1, b1, w2, double b2, X, y, double l2):
    cdef const double[:, ::1] W = np.ascontiguousarray(W1, dtype=np.float64)
    cdef const double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef Py_ssize_t m = x.shape[0], d = W.shape[0], H = W.shape[1]
    gW1 = np.empty((d, H), dtype=np.float64)
    gb1 = np.empty(H, dtype=np.float64)
    gw2 = np.empty(H, dtype=np.float64)
    cdef double gb2 = 0.0
    cdef double loss = _batch_grad(
        W, np.ascontiguousarray(b1, dtype=np.float64), np.ascontiguousarray(w2, dtype=np.float64),
        b2, x, np.ascontiguousarray(y, dtype=np.float64), np.arange(m, dtype=np.int64), 0, m, l2,
        gW1, gb1, gw2, &gb2, np.empty(H, dtype=np.float64), np.empty(H, dtype=np.float64))
    return loss, gW1, gb1, gw2, gb2


def mlp_sgd_epoch(double[:, ::1] W1, double[::1] b1, double[::1] w2, double[::1] b2,
                  double[:, ::1] vW1, double[::1] vb1, double[::1] vw2, double[::1] vb2,
                  X, y, order, Py_ssize_t batch_size, double lr, double momentum,
                  double l2):
    """One pass of momentum minibatch descent, updating parameters in place.

    Returns the mean of the per-batch losses.
    """
    cdef const double[:, ::1] x = np.ascontiguousarray(X, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const cnp.int64_t[::1] rows = np.ascontiguousarray(order, dtype=np.int64)
    cdef Py_ssize_t d = W1.shape[0], H = W1.shape[1], n = rows.shape[0]
    cdef double[:, ::1] gW = np.empty((d, H), dtype=np.float64)
    cdef double[::1] gbh = np.empty(H, dtype=np.float64)
    cdef double[::1] gwo = np.empty(H, dtype=np.float64)
    cdef double[::1] z = np.empty(H, dtype=np.float64)
    cdef double[::1] dz = np.empty(H, dtype=np.float64)
    cdef double gb2 = 0.0, total = 0.0
    cdef Py_ssize_t r0, r1, j, h, nb = 0
    with nogil:
        r0 = 0
        while r0 < n:
            r1 = r0 + batch_size
            if r1 > n:
                r1 = n
            total += _batch_grad(W1, b1, w2, b2[0], x, yv, rows, r0, r1, l2,
                                 gW, gbh, gwo, &gb2, z, dz)
            for j in range(d):
                for h in range(H):
                    vW1[j, h] = momentum * vW1[j, h] - lr * gW[j, h]
                    W1[j, h] += vW1[j, h]
            for h in range(H):
                vb1[h] = momentum * vb1[h] - lr * gbh[h]
                b1[h] += vb1[h]
                vw2[h] = momentum * vw2[h] - lr * gwo[h]
                w2[h] += vw2[h]
            vb2[0] = momentum * vb2[0] - lr * gb2
            b2[0] += vb2[0]
            nb += 1
            r0 = r1
    return total / nb if nb else float("nan")
