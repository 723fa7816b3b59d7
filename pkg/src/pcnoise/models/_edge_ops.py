"""Fused inner loops of the edge-convolution layer.

Three operations dominate DGCNN training cost, all streaming over the
(F, N, K) edge tensor: building edge pre-activations plus their per-channel
statistics, selecting each point's best edge under the normalized+relu map,
and reducing the backward gradient to per-point and per-neighbor sums
(the dense gradient tensor itself is never needed downstream).

Each operation has a vectorized numpy reference used as a fallback and in
tests; when numba is importable the jitted version is used.  Both compute
identical values (same expression order per element).
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False


def dist_finish_np(g, sq):
    """In place on the gram matrix g: d_ij = max(sq_i + sq_j - 2 g_ij, 0), diag=inf."""
    g *= -2.0
    g += sq[:, None]
    g += sq[None, :]
    np.maximum(g, 0.0, out=g)
    np.fill_diagonal(g, np.inf)
    return g


def edge_pre_stats_np(qt, ptb, graph, buf):
    """buf[f,n,k] = qt[f, graph[n,k]] + ptb[f,n]; returns per-channel (sum, sumsq)."""
    f_dim = qt.shape[0]
    n, k = graph.shape
    flat = buf.reshape(f_dim, n * k)
    np.take(qt, graph.ravel(), axis=1, out=flat)
    buf += ptb[:, :, None]
    s = buf.sum(axis=(1, 2))
    ss = np.einsum("fnk,fnk->f", buf, buf)
    return s, ss


def edge_select_np(buf, mean, inv_std, gamma, beta):
    """Per (channel, point): pick the first edge slot maximizing
    z = gamma * (pre - mean) * inv_std + beta; return (slot, xhat_at_slot, relu(z))."""
    a = gamma * inv_std
    am = buf.argmax(axis=2)
    if (a < 0.0).any():
        amn = buf.argmin(axis=2)
        am = np.where((a < 0.0)[:, None], amn, am)
    zero = a == 0.0
    if zero.any():
        # z is constant across slots; numpy argmax convention picks slot 0
        am[zero] = 0
    psel = np.take_along_axis(buf, am[:, :, None], axis=2)[:, :, 0]
    xsel = (psel - mean[:, None]) * inv_std[:, None]
    y = np.maximum(gamma[:, None] * xsel + beta[:, None], 0.0)
    return am, xsel, y


def edge_backward_reduce_np(buf, graph, am, dz, mean, inv_std, c0, c1, c2):
    """Fold the batch-norm backward over edges into its two reductions.

    The per-edge gradient is c1[f] + c2[f]*xhat[f,n,k], plus c0[f]*dz[f,n]
    at the max-selected slot.  Returns (dsum, t): dsum[f,n] sums a point's
    slots, t[f,j] sums every edge that used j as the neighbor.
    """
    f_dim, n, k = buf.shape
    xhat = (buf - mean[:, None, None]) * inv_std[:, None, None]
    dpre = c1[:, None, None] + c2[:, None, None] * xhat
    flat = dpre.reshape(f_dim, n * k)
    cols = np.arange(n)[None, :] * k + am
    flat[np.arange(f_dim)[:, None], cols] += c0[:, None] * dz
    dsum = dpre.sum(axis=2)
    order = np.argsort(graph.ravel(), kind="stable")
    sorted_idx = graph.ravel()[order]
    starts = np.flatnonzero(np.r_[True, sorted_idx[1:] != sorted_idx[:-1]])
    seg = np.add.reduceat(np.take(flat, order, axis=1), starts, axis=1)
    t = np.zeros((f_dim, n))
    t[:, sorted_idx[starts]] = seg
    return dsum, t


if HAVE_NUMBA:

    @njit(cache=True)
    def _dist_finish_jit(g, sq):  # pragma: no cover - measured via tests
        n = g.shape[0]
        for i in range(n):
            si = sq[i]
            for j in range(n):
                v = si + sq[j] - 2.0 * g[i, j]
                g[i, j] = v if v > 0.0 else 0.0
            g[i, i] = np.inf
        return g

    @njit(cache=True)
    def _pre_stats_jit(qt, ptb, graph, buf):  # pragma: no cover - measured via tests
        f_dim, n = qt.shape
        k = graph.shape[1]
        s = np.zeros(f_dim)
        ss = np.zeros(f_dim)
        for f in range(f_dim):
            acc = 0.0
            acc2 = 0.0
            for i in range(n):
                p = ptb[f, i]
                for j in range(k):
                    v = qt[f, graph[i, j]] + p
                    buf[f, i, j] = v
                    acc += v
                    acc2 += v * v
            s[f] = acc
            ss[f] = acc2
        return s, ss

    @njit(cache=True)
    def _select_jit(buf, mean, inv_std, gamma, beta):  # pragma: no cover
        f_dim, n, k = buf.shape
        am = np.zeros((f_dim, n), dtype=np.int64)
        xsel = np.empty((f_dim, n))
        y = np.empty((f_dim, n))
        for f in range(f_dim):
            mu = mean[f]
            inv = inv_std[f]
            g = gamma[f]
            b = beta[f]
            for i in range(n):
                best = -np.inf
                best_j = 0
                for j in range(k):
                    z = g * ((buf[f, i, j] - mu) * inv) + b
                    if z > best:
                        best = z
                        best_j = j
                am[f, i] = best_j
                xsel[f, i] = (buf[f, i, best_j] - mu) * inv
                y[f, i] = best if best > 0.0 else 0.0
        return am, xsel, y

    @njit(cache=True)
    def _backward_reduce_jit(buf, graph, am, dz, mean, inv_std, c0, c1, c2):  # pragma: no cover
        f_dim, n, k = buf.shape
        dsum = np.empty((f_dim, n))
        t = np.zeros((f_dim, n))
        for f in range(f_dim):
            mu = mean[f]
            inv = inv_std[f]
            a0 = c0[f]
            a1 = c1[f]
            a2 = c2[f]
            for i in range(n):
                sel = am[f, i]
                extra = a0 * dz[f, i]
                acc = 0.0
                for j in range(k):
                    xh = (buf[f, i, j] - mu) * inv
                    v = a1 + a2 * xh
                    if j == sel:
                        v += extra
                    acc += v
                    t[f, graph[i, j]] += v
                dsum[f, i] = acc
        return dsum, t

    def dist_finish(g, sq):
        return _dist_finish_jit(g, sq)

    def edge_pre_stats(qt, ptb, graph, buf):
        return _pre_stats_jit(qt, ptb, graph, buf)

    def edge_select(buf, mean, inv_std, gamma, beta):
        return _select_jit(buf, mean, inv_std, gamma, beta)

    def edge_backward_reduce(buf, graph, am, dz, mean, inv_std, c0, c1, c2):
        return _backward_reduce_jit(buf, graph, am, dz, mean, inv_std, c0, c1, c2)

else:  # pragma: no cover
    dist_finish = dist_finish_np
    edge_pre_stats = edge_pre_stats_np
    edge_select = edge_select_np
    edge_backward_reduce = edge_backward_reduce_np
