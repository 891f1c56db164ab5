"""Exact minimum spanning trees over point sets (dense Prim, O(n^2))."""

import numpy as np

METRICS = ("euclidean", "manhattan")


def _row_dist(points, i, metric):
    diff = points - points[i]
    if metric == "euclidean":
        return np.sqrt(np.einsum("ij,ij->i", diff, diff))
    return np.abs(diff).sum(axis=1)


def prim_mst(points, metric="euclidean"):
    """Return the MST of ``points`` as ``(parent, weight)`` arrays.

    ``parent[0] == -1``; for every other vertex ``v`` the tree edge is
    ``(parent[v], v)`` with length ``weight[v]``. Ties are broken by the lowest
    vertex index so results are deterministic.
    """
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2:
        raise ValueError("points must be a 2-D array of shape (n, dim)")
    n = pts.shape[0]
    parent = np.full(n, -1, dtype=np.int64)
    weight = np.zeros(n, dtype=np.float64)
    if n <= 1:
        return parent, weight

    in_tree = np.zeros(n, dtype=bool)
    best = np.full(n, np.inf)
    best_from = np.full(n, -1, dtype=np.int64)
    cur = 0
    in_tree[0] = True
    for _ in range(n - 1):
        d = _row_dist(pts, cur, metric)
        closer = (d < best) & ~in_tree
        best[closer] = d[closer]
        best_from[closer] = cur
        cand = np.where(in_tree, np.inf, best)
        nxt = int(np.argmin(cand))
        parent[nxt] = best_from[nxt]
        weight[nxt] = best[nxt]
        in_tree[nxt] = True
        cur = nxt
    return parent, weight


def mst_length(points, metric="euclidean"):
    """Total edge length of the exact MST (0.0 for fewer than two points)."""
    _, weight = prim_mst(points, metric)
    return float(weight.sum())


def batched_mst_lengths(points, valid=None, metric="euclidean"):
    """MST lengths for a batch of independent point sets.

    ``points`` has shape ``(B, n, dim)``; ``valid`` (``(B, n)`` bool) marks the
    points that belong to each set, so sets of different sizes can share one
    padded array. Returns a length-``B`` float array.
    """
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")
    pts = np.asarray(points, dtype=np.float64)
    B, n, _ = pts.shape
    valid = np.ones((B, n), dtype=bool) if valid is None else np.asarray(valid, dtype=bool)
    total = np.zeros(B)
    counts = valid.sum(axis=1)
    if B == 0 or counts.max(initial=0) <= 1:
        return total

    rows = np.arange(B)
    in_tree = ~valid
    cur = np.argmax(valid, axis=1)
    in_tree[rows, cur] = True
    best = np.full((B, n), np.inf)
    for _ in range(int(counts.max()) - 1):
        diff = pts - pts[rows, cur][:, None, :]
        if metric == "euclidean":
            d = np.sqrt(np.einsum("bij,bij->bi", diff, diff))
        else:
            d = np.abs(diff).sum(axis=2)
        np.minimum(best, d, out=best)
        cand = np.where(in_tree, np.inf, best)
        nxt = np.argmin(cand, axis=1)
        w = cand[rows, nxt]
        active = np.isfinite(w)
        total[active] += w[active]
        in_tree[rows[active], nxt[active]] = True
        cur = np.where(active, nxt, cur)
    return total
