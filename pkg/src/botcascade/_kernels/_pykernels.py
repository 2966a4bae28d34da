"""Pure Python / numpy implementations of the hot graph kernels.

These are the reference versions used when the compiled extension is not
available.  Signatures match ``_ckernels`` exactly.
"""
from collections import deque

import numpy as np


def betweenness(indptr, indices, n):
    """Unnormalized directed betweenness (Brandes) on a CSR adjacency.

    Self-loops in the adjacency are ignored.  Edges are unit length.
    """
    indptr = np.asarray(indptr, dtype=np.int64)
    indices = np.asarray(indices, dtype=np.int64)
    cb = [0.0] * n
    adj = [
        [int(w) for w in indices[indptr[v]:indptr[v + 1]] if w != v]
        for v in range(n)
    ]
    for s in range(n):
        stack = []
        preds = [[] for _ in range(n)]
        sigma = [0] * n
        dist = [-1] * n
        sigma[s] = 1
        dist[s] = 0
        queue = deque([s])
        while queue:
            v = queue.popleft()
            stack.append(v)
            for w in adj[v]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    queue.append(w)
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = [0.0] * n
        while stack:
            w = stack.pop()
            for v in preds[w]:
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            if w != s:
                cb[w] += delta[w]
    return np.asarray(cb, dtype=np.float64)


def spmm(indptr, indices, data, x):
    """Return ``A @ x`` for a CSR matrix ``A`` given by its three arrays."""
    indptr = np.asarray(indptr, dtype=np.int64)
    indices = np.asarray(indices, dtype=np.int64)
    data = np.asarray(data, dtype=np.float64)
    x = np.ascontiguousarray(x, dtype=np.float64)
    n_rows = len(indptr) - 1
    out = np.zeros((n_rows, x.shape[1]), dtype=np.float64)
    if len(indices) == 0:
        return out
    contrib = data[:, None] * x[indices]
    rows = np.repeat(np.arange(n_rows), np.diff(indptr))
    np.add.at(out, rows, contrib)
    return out
