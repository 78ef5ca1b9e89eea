"""Numpy implementations of the inner loops (fallback when no compiled build)."""
import numpy as np


def maxplus_step(V, G, shape):
    shape = tuple(int(x) for x in shape)
    Vs = np.asarray(V, dtype=float).reshape(shape)
    Gf = np.asarray(G, dtype=float)
    out = np.full(shape, -np.inf)
    arg = np.full(shape, -1, dtype=np.int64)
    for q, idx in enumerate(np.ndindex(*shape)):
        g = Gf[q]
        if g == -np.inf:
            continue
        dst = tuple(slice(i, None) for i in idx)
        src = tuple(slice(0, n - i) for i, n in zip(idx, shape))
        cand = Vs[src] + g
        view = out[dst]
        better = cand > view
        view[better] = cand[better]
        arg[dst][better] = q
    return out.ravel(), arg.ravel()


def weighted_rates(P, alpha, noise, w):
    P = np.asarray(P, dtype=float)
    a = np.array(alpha, dtype=float)
    np.fill_diagonal(a, 0.0)
    r = np.log1p(P / (noise + P @ a))
    w = np.asarray(w, dtype=float)
    # zero-weight users contribute nothing even if their term is non-finite
    return r[:, w != 0] @ w[w != 0]
