"""Numba kernels for the HNSW graph.

Graph storage (all arrays are owned by :class:`relgrade.index.hnsw.HnswIndex`):

* ``vecs[n, dim]``      unit-normalized vectors in float32 (dots accumulate in float64)
* ``levels[n]``         top layer of each node
* ``l0_links[n, 2M]``   layer-0 adjacency, ``l0_count[n]`` valid entries
* ``up_offset[n]``      first row in ``up_links`` for layer 1 of node n (-1 if level 0)
* ``up_links[r, M]``    adjacency rows for layers >= 1, ``up_count[r]`` valid entries

Similarity is the dot product of unit vectors. Both heaps are binary
min-heaps over parallel (key, id) arrays: the candidate heap is keyed by
``-sim`` so the closest candidate pops first, the result heap by ``sim`` so
the worst result pops first.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, fastmath=True)
def _dot(vecs, i, q):
    acc = 0.0
    row = vecs[i]
    for j in range(q.shape[0]):
        acc += np.float64(row[j]) * q[j]
    return acc


@njit(cache=True)
def _heap_push(keys, ids, size, key, ident):
    pos = size
    keys[pos] = key
    ids[pos] = ident
    while pos > 0:
        parent = (pos - 1) >> 1
        if keys[parent] <= keys[pos]:
            break
        keys[parent], keys[pos] = keys[pos], keys[parent]
        ids[parent], ids[pos] = ids[pos], ids[parent]
        pos = parent
    return size + 1


@njit(cache=True)
def _heap_pop(keys, ids, size):
    """Remove the root; caller reads ``keys[0]``/``ids[0]`` beforehand."""
    size -= 1
    keys[0] = keys[size]
    ids[0] = ids[size]
    pos = 0
    while True:
        left = 2 * pos + 1
        if left >= size:
            break
        child = left
        right = left + 1
        if right < size and keys[right] < keys[left]:
            child = right
        if keys[pos] <= keys[child]:
            break
        keys[child], keys[pos] = keys[pos], keys[child]
        ids[child], ids[pos] = ids[pos], ids[child]
        pos = child
    return size


@njit(cache=True)
def _neighbors(node, layer, l0_links, l0_count, up_offset, up_links, up_count):
    if layer == 0:
        return l0_links[node, : l0_count[node]]
    row = up_offset[node] + layer - 1
    return up_links[row, : up_count[row]]


@njit(cache=True)
def search_layer(
    q, entry_ids, entry_sims, ef, layer, n_nodes,
    vecs, l0_links, l0_count, up_offset, up_links, up_count,
):
    """Best-first search of one layer; returns the (unordered) ef best nodes."""
    visited = np.zeros(n_nodes, dtype=np.bool_)
    cap = n_nodes + entry_ids.shape[0] + 1
    cand_keys = np.empty(cap, dtype=np.float64)
    cand_ids = np.empty(cap, dtype=np.int64)
    res_keys = np.empty(ef + 2, dtype=np.float64)
    res_ids = np.empty(ef + 2, dtype=np.int64)
    width = max(l0_links.shape[1], up_links.shape[1])
    fresh = np.empty(width, dtype=np.int64)
    fresh_sims = np.empty(width, dtype=np.float64)
    n_cand = 0
    n_res = 0

    for i in range(entry_ids.shape[0]):
        e = entry_ids[i]
        if visited[e]:
            continue
        visited[e] = True
        s = entry_sims[i]
        n_cand = _heap_push(cand_keys, cand_ids, n_cand, -s, e)
        n_res = _heap_push(res_keys, res_ids, n_res, s, e)
        if n_res > ef:
            n_res = _heap_pop(res_keys, res_ids, n_res)

    while n_cand > 0:
        s_c = -cand_keys[0]
        c = cand_ids[0]
        n_cand = _heap_pop(cand_keys, cand_ids, n_cand)
        if n_res >= ef and s_c < res_keys[0]:
            break
        nbrs = _neighbors(c, layer, l0_links, l0_count, up_offset, up_links, up_count)
        # score all fresh neighbors first so their row loads overlap
        n_fresh = 0
        for j in range(nbrs.shape[0]):
            nb = nbrs[j]
            if not visited[nb]:
                visited[nb] = True
                fresh[n_fresh] = nb
                n_fresh += 1
        for j in range(n_fresh):
            fresh_sims[j] = _dot(vecs, fresh[j], q)
        for j in range(n_fresh):
            nb = fresh[j]
            s = fresh_sims[j]
            if n_res < ef or s > res_keys[0]:
                n_cand = _heap_push(cand_keys, cand_ids, n_cand, -s, nb)
                n_res = _heap_push(res_keys, res_ids, n_res, s, nb)
                if n_res > ef:
                    n_res = _heap_pop(res_keys, res_ids, n_res)

    return res_ids[:n_res].copy(), res_keys[:n_res].copy()


@njit(cache=True)
def _closest_first(ids, sims):
    # stable sort on -sim, ties keep insertion order
    order = np.argsort(-sims, kind="mergesort")
    return ids[order], sims[order]


@njit(cache=True)
def select_neighbors(ids, sims, m, heuristic, vecs):
    """Pick up to ``m`` neighbors from candidates scored against the base point.

    Simple mode keeps the ``m`` closest. Heuristic mode walks candidates
    closest-first and keeps one only if it is closer to the base point than
    to every neighbor kept so far.
    """
    ordered, ordered_sims = _closest_first(ids, sims)
    if not heuristic or ordered.shape[0] <= m:
        return ordered[: min(m, ordered.shape[0])]
    kept = np.empty(m, dtype=np.int64)
    n_kept = 0
    for i in range(ordered.shape[0]):
        cand = ordered[i]
        cand_vec = vecs[cand].astype(np.float64)
        ok = True
        for j in range(n_kept):
            if _dot(vecs, kept[j], cand_vec) > ordered_sims[i]:
                ok = False
                break
        if ok:
            kept[n_kept] = cand
            n_kept += 1
            if n_kept == m:
                break
    return kept[:n_kept]


@njit(cache=True)
def _link(
    target, new, layer, mmax, heuristic,
    vecs, l0_links, l0_count, up_offset, up_links, up_count,
):
    """Add edge target->new, truncating target's list to its mmax closest."""
    if layer == 0:
        links = l0_links[target]
        count = l0_count[target]
    else:
        row = up_offset[target] + layer - 1
        links = up_links[row]
        count = up_count[row]

    if count < mmax:
        links[count] = new
        count += 1
    else:
        pool = np.empty(count + 1, dtype=np.int64)
        pool_sims = np.empty(count + 1, dtype=np.float64)
        base = vecs[target].astype(np.float64)
        for j in range(count):
            pool[j] = links[j]
            pool_sims[j] = _dot(vecs, links[j], base)
        pool[count] = new
        pool_sims[count] = _dot(vecs, new, base)
        chosen = select_neighbors(pool, pool_sims, mmax, heuristic, vecs)
        for j in range(chosen.shape[0]):
            links[j] = chosen[j]
        count = chosen.shape[0]

    if layer == 0:
        l0_count[target] = count
    else:
        up_count[up_offset[target] + layer - 1] = count


@njit(cache=True)
def insert(
    node, entry, max_level, m, ef_construction, heuristic,
    vecs, levels, l0_links, l0_count, up_offset, up_links, up_count,
):
    """Wire ``node`` (already stored in ``vecs``/``levels``) into the graph."""
    q = vecs[node].astype(np.float64)
    level = levels[node]
    n_nodes = node + 1

    ep_ids = np.empty(1, dtype=np.int64)
    ep_sims = np.empty(1, dtype=np.float64)
    ep_ids[0] = entry
    ep_sims[0] = _dot(vecs, entry, q)

    layer = max_level
    while layer > level:
        ids, sims = search_layer(
            q, ep_ids, ep_sims, 1, layer, n_nodes,
            vecs, l0_links, l0_count, up_offset, up_links, up_count,
        )
        ep_ids = ids
        ep_sims = sims
        layer -= 1

    layer = min(level, max_level)
    while layer >= 0:
        ids, sims = search_layer(
            q, ep_ids, ep_sims, ef_construction, layer, n_nodes,
            vecs, l0_links, l0_count, up_offset, up_links, up_count,
        )
        ordered = select_neighbors(ids, sims, m, heuristic, vecs)
        n_sel = ordered.shape[0]
        mmax = 2 * m if layer == 0 else m
        if layer == 0:
            for j in range(n_sel):
                l0_links[node, j] = ordered[j]
            l0_count[node] = n_sel
        else:
            row = up_offset[node] + layer - 1
            for j in range(n_sel):
                up_links[row, j] = ordered[j]
            up_count[row] = n_sel
        for j in range(n_sel):
            _link(
                ordered[j], node, layer, mmax, heuristic,
                vecs, l0_links, l0_count, up_offset, up_links, up_count,
            )
        ep_ids = ids
        ep_sims = sims
        layer -= 1


@njit(cache=True)
def search(
    q, entry, max_level, ef, n_nodes,
    vecs, l0_links, l0_count, up_offset, up_links, up_count,
):
    """Greedy descent to layer 1, then ef-wide search of layer 0."""
    ep_ids = np.empty(1, dtype=np.int64)
    ep_sims = np.empty(1, dtype=np.float64)
    ep_ids[0] = entry
    ep_sims[0] = _dot(vecs, entry, q)
    layer = max_level
    while layer > 0:
        ep_ids, ep_sims = search_layer(
            q, ep_ids, ep_sims, 1, layer, n_nodes,
            vecs, l0_links, l0_count, up_offset, up_links, up_count,
        )
        layer -= 1
    return search_layer(
        q, ep_ids, ep_sims, ef, 0, n_nodes,
        vecs, l0_links, l0_count, up_offset, up_links, up_count,
    )
