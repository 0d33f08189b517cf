"""Loop kernels compiled with numba.

Each entity's edge group is processed in a fixed order, so results do not
depend on the thread count. Scatter-heavy passes (backward, hinge gradient)
run serially.
"""

import numpy as np
from numba import njit, prange


@njit(cache=True, parallel=True)
def edge_forward(h, unit, v, offsets, src, nbr, rel, use_reflection):
    n, d = h.shape
    n_edges = nbr.shape[0]
    beta = np.empty(n_edges)
    alpha = np.empty(n_edges)
    s = np.zeros((n, d))
    for i in prange(n):
        lo = offsets[i]
        hi = offsets[i + 1]
        hv = 0.0
        for c in range(d):
            hv += v[c] * h[i, c]
        m = np.empty(d)
        best = -np.inf
        for e in range(lo, hi):
            j = nbr[e]
            k = rel[e]
            proj = 0.0
            if use_reflection:
                for c in range(d):
                    proj += unit[k, c] * h[j, c]
            b = hv
            for c in range(d):
                b += v[d + c] * (h[j, c] - 2.0 * proj * unit[k, c]) + v[2 * d + c] * unit[k, c]
            beta[e] = b
            if b > best:
                best = b
        total = 0.0
        for e in range(lo, hi):
            w = np.exp(beta[e] - best)
            alpha[e] = w
            total += w
        for e in range(lo, hi):
            a = alpha[e] / total
            alpha[e] = a
            j = nbr[e]
            k = rel[e]
            proj = 0.0
            if use_reflection:
                for c in range(d):
                    proj += unit[k, c] * h[j, c]
            for c in range(d):
                m[c] = h[j, c] - 2.0 * proj * unit[k, c]
                s[i, c] += a * m[c]
    return beta, alpha, s


@njit(cache=True)
def edge_backward(g_s, h, unit, v, alpha, offsets, src, nbr, rel, use_reflection):
    n, d = h.shape
    g_h = np.zeros((n, d))
    g_unit = np.zeros(unit.shape)
    g_v = np.zeros(3 * d)
    m = np.empty(d)
    g_m = np.empty(d)
    max_deg = 0
    for i in range(n):
        if offsets[i + 1] - offsets[i] > max_deg:
            max_deg = offsets[i + 1] - offsets[i]
    g_alpha = np.empty(max_deg)
    for i in range(n):
        lo = offsets[i]
        hi = offsets[i + 1]
        weighted = 0.0
        for e in range(lo, hi):
            j = nbr[e]
            k = rel[e]
            proj = 0.0
            if use_reflection:
                for c in range(d):
                    proj += unit[k, c] * h[j, c]
            ga = 0.0
            for c in range(d):
                ga += g_s[i, c] * (h[j, c] - 2.0 * proj * unit[k, c])
            g_alpha[e - lo] = ga
            weighted += alpha[e] * ga
        for e in range(lo, hi):
            j = nbr[e]
            k = rel[e]
            a = alpha[e]
            g_beta = a * (g_alpha[e - lo] - weighted)
            proj = 0.0
            if use_reflection:
                for c in range(d):
                    proj += unit[k, c] * h[j, c]
            for c in range(d):
                m[c] = h[j, c] - 2.0 * proj * unit[k, c]
                g_v[c] += g_beta * h[i, c]
                g_v[d + c] += g_beta * m[c]
                g_v[2 * d + c] += g_beta * unit[k, c]
                g_h[i, c] += g_beta * v[c]
                g_m[c] = a * g_s[i, c] + g_beta * v[d + c]
                g_unit[k, c] += g_beta * v[2 * d + c]
            if use_reflection:
                proj_g = 0.0
                for c in range(d):
                    proj_g += unit[k, c] * g_m[c]
                for c in range(d):
                    g_h[j, c] += g_m[c] - 2.0 * proj_g * unit[k, c]
                    g_unit[k, c] -= 2.0 * (proj * g_m[c] + proj_g * h[j, c])
            else:
                for c in range(d):
                    g_h[j, c] += g_m[c]
    return g_h, g_unit, g_v


@njit(cache=True, parallel=True)
def l1_topk(query, cand, k, exclude):
    q = query.shape[0]
    n_cand, d = cand.shape
    out = np.empty((q, k), dtype=np.int64)
    for i in prange(q):
        # sorted buffer of the k best (distance, index); strict < keeps the lower index on ties
        best_d = np.empty(k)
        best_j = np.empty(k, dtype=np.int64)
        filled = 0
        for j in range(n_cand):
            bound = best_d[k - 1] if filled == k else np.inf
            if j == exclude[i]:
                acc = np.inf
            else:
                acc = 0.0
                for c in range(d):
                    acc += abs(query[i, c] - cand[j, c])
                    if acc >= bound:
                        break
            if filled == k and not acc < bound:
                continue
            pos = filled if filled < k else k - 1
            while pos > 0 and acc < best_d[pos - 1]:
                best_d[pos] = best_d[pos - 1]
                best_j[pos] = best_j[pos - 1]
                pos -= 1
            best_d[pos] = acc
            best_j[pos] = j
            if filled < k:
                filled += 1
        for t in range(k):
            out[i, t] = best_j[t]
    return out


@njit(cache=True)
def triplet_hinge(h, pos_a, pos_b, term_pos, neg_a, neg_b, margin):
    n, d = h.shape
    n_pos = pos_a.shape[0]
    pos_dist = np.empty(n_pos)
    for p in range(n_pos):
        acc = 0.0
        for c in range(d):
            acc += abs(h[pos_a[p], c] - h[pos_b[p], c])
        pos_dist[p] = acc
    grad = np.zeros((n, d))
    loss = 0.0
    for t in range(term_pos.shape[0]):
        p = term_pos[t]
        x = neg_a[t]
        y = neg_b[t]
        acc = 0.0
        for c in range(d):
            acc += abs(h[x, c] - h[y, c])
        val = pos_dist[p] - acc + margin
        if val > 0.0:
            loss += val
            a = pos_a[p]
            b = pos_b[p]
            for c in range(d):
                diff = h[a, c] - h[b, c]
                sg = (diff > 0.0) - (diff < 0.0)
                grad[a, c] += sg
                grad[b, c] -= sg
                diff = h[x, c] - h[y, c]
                sg = (diff > 0.0) - (diff < 0.0)
                grad[x, c] -= sg
                grad[y, c] += sg
    return loss, grad
