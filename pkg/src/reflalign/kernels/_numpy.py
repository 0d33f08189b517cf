"""Vectorised numpy versions of the loop kernels (no numba required)."""

import numpy as np
from scipy.spatial.distance import cdist

from ..diffmath import group_softmax_csr

_CHUNK_ELEMS = 1 << 22


def _messages(h, unit, nbr, rel, use_reflection):
    hj = h[nbr]
    u = unit[rel]
    if use_reflection:
        proj = np.einsum("ec,ec->e", u, hj)
        return hj - 2.0 * proj[:, None] * u, hj, u, proj
    return hj, hj, u, np.zeros(len(nbr))


def edge_forward(h, unit, v, offsets, src, nbr, rel, use_reflection):
    d = h.shape[1]
    m, _, u, _ = _messages(h, unit, nbr, rel, use_reflection)
    beta = (h @ v[:d])[src] + m @ v[d : 2 * d] + u @ v[2 * d :]
    alpha = group_softmax_csr(beta, offsets)
    s = np.add.reduceat(alpha[:, None] * m, offsets[:-1], axis=0)
    return beta, alpha, s


def edge_backward(g_s, h, unit, v, alpha, offsets, src, nbr, rel, use_reflection):
    d = h.shape[1]
    m, hj, u, proj = _messages(h, unit, nbr, rel, use_reflection)
    g_alpha = np.einsum("ec,ec->e", g_s[src], m)
    weighted = np.add.reduceat(alpha * g_alpha, offsets[:-1])
    g_beta = alpha * (g_alpha - weighted[src])
    g_v = np.concatenate([g_beta @ h[src], g_beta @ m, g_beta @ u])

    g_h = np.zeros_like(h)
    g_h += np.add.reduceat(g_beta, offsets[:-1])[:, None] * v[:d]
    g_m = alpha[:, None] * g_s[src] + g_beta[:, None] * v[d : 2 * d]
    g_u = g_beta[:, None] * v[2 * d :]
    if use_reflection:
        proj_g = np.einsum("ec,ec->e", u, g_m)
        g_hj = g_m - 2.0 * proj_g[:, None] * u
        g_u = g_u - 2.0 * (proj[:, None] * g_m + proj_g[:, None] * hj)
    else:
        g_hj = g_m
    np.add.at(g_h, nbr, g_hj)
    g_unit = np.zeros_like(unit)
    np.add.at(g_unit, rel, g_u)
    return g_h, g_unit, g_v


def l1_topk(query, cand, k, exclude):
    out = np.empty((len(query), k), dtype=np.int64)
    step = max(1, _CHUNK_ELEMS // max(1, len(cand)))
    for lo in range(0, len(query), step):
        dist = cdist(query[lo : lo + step], cand, metric="cityblock")
        ex = exclude[lo : lo + step]
        rows = np.nonzero(ex >= 0)[0]
        dist[rows, ex[rows]] = np.inf
        out[lo : lo + step] = np.argsort(dist, axis=1, kind="stable")[:, :k]
    return out


def triplet_hinge(h, pos_a, pos_b, term_pos, neg_a, neg_b, margin):
    pos_diff = h[pos_a] - h[pos_b]
    pos_dist = np.abs(pos_diff).sum(axis=1)
    grad = np.zeros_like(h)
    loss = 0.0
    step = max(1, _CHUNK_ELEMS // max(1, h.shape[1]))
    for lo in range(0, len(term_pos), step):
        p = term_pos[lo : lo + step]
        x, y = neg_a[lo : lo + step], neg_b[lo : lo + step]
        neg_diff = h[x] - h[y]
        val = pos_dist[p] - np.abs(neg_diff).sum(axis=1) + margin
        act = val > 0.0
        loss += float(val[act].sum())
        p, x, y = p[act], x[act], y[act]
        sp = np.sign(pos_diff[p])
        sn = np.sign(neg_diff[act])
        np.add.at(grad, pos_a[p], sp)
        np.add.at(grad, pos_b[p], -sp)
        np.add.at(grad, x, -sn)
        np.add.at(grad, y, sn)
    return loss, grad
