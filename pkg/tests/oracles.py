"""Independent reference implementations used as test oracles.

Everything here is deliberately written against the plain algorithm
statements, without reusing the library's own code paths.
"""

import numpy as np


def reference_select(d, features, m, k, gamma, diversity):
    """Step-by-step simulation of the greedy penalized selection loop."""
    n = len(d)
    d = [float(v) for v in d]
    neigh = {}
    for i in range(n):
        sims = []
        for j in range(n):
            if j == i:
                continue
            a, b = features[i], features[j]
            sim = float(np.dot(a, b) / (np.linalg.norm(a) * np.linalg.norm(b)))
            sim = max(-1.0, min(1.0, sim))
            sims.append((-sim, j))
        sims.sort()
        neigh[i] = [(j, -negsim) for negsim, j in sims[: min(k, n - 1)]]
    alive = set(range(n))
    picked = []
    for _ in range(m):
        best = max(sorted(alive), key=lambda i: (d[i], -i))
        picked.append(best)
        alive.remove(best)
        if diversity:
            for j, sim in neigh[best]:
                if j in alive:
                    d[j] = d[j] - gamma * sim * sim * d[best]
    return picked


def fd_logit_grad(loss_fn, logits, h=1e-5):
    """Central finite differences of a scalar loss over a logit table."""
    v = logits.shape[0]
    grad = np.zeros_like(logits)
    for u in range(v):
        for t in range(v):
            plus, minus = logits.copy(), logits.copy()
            plus[u, t] += h
            minus[u, t] -= h
            grad[u, t] = (loss_fn(plus) - loss_fn(minus)) / (2 * h)
    return grad


def fd_scorenet_grad(w_vec, bias, feats, losses, h=1e-6):
    """Central finite differences of the softmax-weighted loss over (w, b)."""

    def value(w, b):
        raw = feats @ w + b
        p = np.exp(raw - raw.max())
        p /= p.sum()
        return float(p @ losses)

    gw = np.zeros_like(w_vec)
    for i in range(len(w_vec)):
        wp, wm = w_vec.copy(), w_vec.copy()
        wp[i] += h
        wm[i] -= h
        gw[i] = (value(wp, bias) - value(wm, bias)) / (2 * h)
    gb = (value(w_vec, bias + h) - value(w_vec, bias - h)) / (2 * h)
    return gw, gb
