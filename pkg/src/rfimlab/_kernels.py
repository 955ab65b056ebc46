"""Compiled inner loops: heat-bath sweeps and breadth-first search on site masks."""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def heat_bath(sigma, order, indptr, indices, ptab, U):
    """Sequential heat-bath sweeps in place.

    ``order[a]`` is the a-th free vertex in scan order, ``ptab[a, s + 4]`` the
    probability that it becomes +1 when its neighbour sum is ``s``, and
    ``U[t, a]`` the uniform used at sweep ``t``.
    """
    for t in range(U.shape[0]):
        for a in range(order.shape[0]):
            v = order[a]
            s = 0
            for q in range(indptr[v], indptr[v + 1]):
                s += sigma[indices[q]]
            sigma[v] = 1 if U[t, a] < ptab[a, s + 4] else -1


@njit(cache=True)
def heat_bath_many(sigmas, order, indptr, indices, ptab, U):
    """Independent chains ``sigmas[c]`` driven by ``U[c]``."""
    for c in range(sigmas.shape[0]):
        heat_bath(sigmas[c], order, indptr, indices, ptab, U[c])


@njit(cache=True)
def bfs_distances(active, indptr, indices, seeds):
    """Graph distance from ``seeds`` through sites with ``active`` set; -1 if unreached.

    Seeds that are not active are ignored.
    """
    n = active.shape[0]
    dist = np.full(n, -1, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    head = 0
    tail = 0
    for s in seeds:
        if active[s] and dist[s] < 0:
            dist[s] = 0
            queue[tail] = s
            tail += 1
    while head < tail:
        u = queue[head]
        head += 1
        for q in range(indptr[u], indptr[u + 1]):
            w = indices[q]
            if active[w] and dist[w] < 0:
                dist[w] = dist[u] + 1
                queue[tail] = w
                tail += 1
    return dist
