"""Longest edges of the nearest neighbor graph and the Euclidean MST.

Three tiers of kernels share one distance formula so that values computed
by different paths can be compared with ``==``:

* dense oracles (``brute_force_nng``, ``prim_mst_longest_edge``),
* full kd-tree / Delaunay + Kruskal kernels,
* a pruned path for large Monte Carlo replicates.  A cell grid certifies
  which nearest-neighbor distances cannot be the maximum, and the dense core
  of the sample is contracted before the spanning-tree bottleneck is
  searched on the remaining sparse points.  Both prunings are exact.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from scipy.spatial import Delaunay, QhullError, cKDTree

__all__ = [
    "DuplicatePointsError",
    "EdgeResult",
    "as_points",
    "brute_force_nng",
    "emst_longest_edge",
    "kruskal_bottleneck",
    "longest_edges",
    "nearest_neighbors",
    "nn_distances",
    "nng_longest_edge",
    "prim_mst_longest_edge",
]

NNG_BRUTE_BELOW = 16
MST_PRIM_BELOW = 32
PRUNE_FROM = 2048
# degenerate triangulations up to this size are redone with exact dense Prim
DENSE_FALLBACK_MAX = 20_000

_SQRT2 = np.sqrt(2.0)
# cells are shrunk by this factor so floor() rounding cannot break the
# diagonal-distance certificates
_CELL_SAFETY = 1.0 - 1e-9
_MAX_GRID_CELLS = 16_000_000


class DuplicatePointsError(ValueError):
    """Two input points coincide, so the nearest neighbor graph is degenerate."""


@dataclass(frozen=True)
class EdgeResult:
    longest_edge: float
    argmax_pair: tuple[int, int]


def as_points(points, *, min_count: int = 0) -> np.ndarray:
    """Validate ``points`` and return them as a C-contiguous ``(N, 2)`` float array."""
    arr = np.ascontiguousarray(points, dtype=np.float64)
    if arr.size == 0:
        arr = arr.reshape(0, 2)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError(f"expected an (N, 2) array of planar points, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("point coordinates must be finite")
    if len(arr) < min_count:
        raise ValueError(f"need at least {min_count} points, got {len(arr)}")
    return arr


def _check_distinct(pts: np.ndarray) -> None:
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    s = pts[order]
    same = np.all(s[1:] == s[:-1], axis=1)
    if np.any(same):
        k = int(np.flatnonzero(same)[0])
        i, j = sorted((int(order[k]), int(order[k + 1])))
        raise DuplicatePointsError(f"points {i} and {j} coincide at {tuple(pts[i])}")


def _graph_points(points) -> np.ndarray:
    pts = as_points(points, min_count=2)
    _check_distinct(pts)
    return pts


def _dist(pts: np.ndarray, i, j):
    """Euclidean distance between rows ``i`` and ``j``; the single formula used everywhere."""
    dx = pts[i, 0] - pts[j, 0]
    dy = pts[i, 1] - pts[j, 1]
    return np.sqrt(dx * dx + dy * dy)


# ---------------------------------------------------------------------------
# nearest neighbors


def _brute_nn_rows(pts: np.ndarray, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = len(pts)
    dist = np.empty(len(rows))
    idx = np.empty(len(rows), dtype=np.intp)
    all_idx = np.arange(n)
    for k, i in enumerate(rows):
        d = _dist(pts, i, all_idx)
        d[i] = np.inf
        j = int(np.argmin(d))
        dist[k] = d[j]
        idx[k] = j
    return dist, idx


def _kd_nn_rows(tree: cKDTree, pts: np.ndarray, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    _, nbr = tree.query(pts[rows], k=2)
    # column 0 is normally the query point itself; with exact ties it may not be
    j = np.where(nbr[:, 0] == rows, nbr[:, 1], nbr[:, 0])
    return _dist(pts, rows, j), j.astype(np.intp)


def nearest_neighbors(points, *, method: str = "auto") -> tuple[np.ndarray, np.ndarray]:
    """Per-point nearest-neighbor distance and index.

    ``method`` is ``"brute"``, ``"kdtree"`` or ``"auto"`` (brute force below
    16 points).  Brute force breaks ties by lowest index.
    """
    pts = _graph_points(points)
    rows = np.arange(len(pts))
    if method == "auto":
        method = "brute" if len(pts) < NNG_BRUTE_BELOW else "kdtree"
    if method == "brute":
        return _brute_nn_rows(pts, rows)
    if method == "kdtree":
        return _kd_nn_rows(cKDTree(pts), pts, rows)
    raise ValueError(f"unknown nearest-neighbor method {method!r}")


def nn_distances(points, *, method: str = "auto") -> np.ndarray:
    return nearest_neighbors(points, method=method)[0]


def _argmax_edge(dist: np.ndarray, rows: np.ndarray, nbr: np.ndarray) -> EdgeResult:
    k = int(np.argmax(dist))
    return EdgeResult(float(dist[k]), (int(rows[k]), int(nbr[k])))


def brute_force_nng(points) -> EdgeResult:
    """O(N^2) oracle: max over points of the distance to the nearest other point."""
    pts = _graph_points(points)
    rows = np.arange(len(pts))
    dist, nbr = _brute_nn_rows(pts, rows)
    return _argmax_edge(dist, rows, nbr)


def _cell_keys(pts: np.ndarray, size: float):
    lo = pts.min(axis=0)
    cells = np.floor((pts - lo) / size).astype(np.int64)
    ny = int(cells[:, 1].max()) + 1
    return cells, cells[:, 0] * ny + cells[:, 1]


def _nng_pruned(pts: np.ndarray, tree: cKDTree) -> EdgeResult:
    n = len(pts)
    span = np.ptp(pts, axis=0)
    area = max(float(span[0] * span[1]), float(span.max()) ** 2 / n, 1e-300)
    size = 4.0 * np.sqrt(area / n)
    for _ in range(6):
        _, keys = _cell_keys(pts, size)
        _, inverse, counts = np.unique(keys, return_inverse=True, return_counts=True)
        lonely = np.flatnonzero(counts[inverse] == 1)
        if len(lonely) > n // 4:
            break
        if len(lonely):
            dist, nbr = _kd_nn_rows(tree, pts, lonely)
            best = _argmax_edge(dist, lonely, nbr)
            # every point sharing a cell has a neighbor within the cell diagonal
            if best.longest_edge > size * _SQRT2 / _CELL_SAFETY:
                return best
            size = best.longest_edge / (2.0 * _SQRT2)
        else:
            size /= 2.0
    rows = np.arange(n)
    dist, nbr = _kd_nn_rows(tree, pts, rows)
    return _argmax_edge(dist, rows, nbr)


def nng_longest_edge(points, *, method: str = "auto") -> EdgeResult:
    """Longest edge of the nearest neighbor graph.

    Methods: ``"brute"``, ``"kdtree"`` (full single-nearest queries) and
    ``"auto"``, which uses brute force below 16 points, the kd-tree below
    2048 and the grid-certified pruned query above.
    """
    pts = _graph_points(points)
    n = len(pts)
    if method == "auto":
        if n < NNG_BRUTE_BELOW:
            method = "brute"
        elif n < PRUNE_FROM:
            method = "kdtree"
        else:
            return _nng_pruned(pts, cKDTree(pts))
    if method == "pruned":
        return _nng_pruned(pts, cKDTree(pts))
    rows = np.arange(n)
    dist, nbr = nearest_neighbors(pts, method=method)
    return _argmax_edge(dist, rows, nbr)


# ---------------------------------------------------------------------------
# spanning tree bottleneck


def _prim(pts: np.ndarray, labels: np.ndarray | None = None) -> EdgeResult | None:
    n = len(pts)
    all_idx = np.arange(n)
    best = np.full(n, np.inf)
    parent = np.zeros(n, dtype=np.intp)
    in_tree = np.zeros(n, dtype=bool)
    longest, pair = None, None
    j = 0
    for _ in range(n):
        in_tree[j] = True
        best[j] = np.inf
        d = _dist(pts, j, all_idx)
        if labels is not None:
            # same-label points are already joined: zero-cost edges
            d[labels == labels[j]] = 0.0
        closer = (d < best) & ~in_tree
        best[closer] = d[closer]
        parent[closer] = j
        if in_tree.all():
            break
        j = int(np.argmin(best))
        if best[j] > 0.0 and (longest is None or best[j] > longest):
            longest, pair = float(best[j]), tuple(sorted((int(parent[j]), j)))
    if longest is None:
        return None
    return EdgeResult(longest, pair)


def prim_mst_longest_edge(points) -> EdgeResult:
    """Dense O(N^2) Prim; the reference for the Delaunay kernels."""
    return _prim(_graph_points(points))


def _find(parent: list, x: int) -> int:
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        parent[x], x = root, parent[x]
    return root


def kruskal_bottleneck(
    pts: np.ndarray, edges: np.ndarray, labels: np.ndarray | None = None
) -> EdgeResult | None:
    """Largest edge Kruskal adds before every label class is connected.

    ``edges`` is an ``(m, 2)`` index array.  ``labels`` pre-unions points
    (points sharing a label start in one component).  Returns ``None`` when
    nothing needs joining and raises if the edges cannot connect the classes.
    """
    n = len(pts)
    if labels is None:
        labels = np.arange(n)
    _, comp = np.unique(labels, return_inverse=True)
    n_comp = int(comp.max()) + 1 if n else 0
    if n_comp <= 1:
        return None
    a, b = edges[:, 0], edges[:, 1]
    ca, cb = comp[a], comp[b]
    keep = ca != cb
    a, b, ca, cb = a[keep], b[keep], ca[keep], cb[keep]
    w = _dist(pts, a, b)
    # stable sort on (length, low index, high index) makes tie-breaking reproducible
    lo_i, hi_i = np.minimum(a, b), np.maximum(a, b)
    order = np.lexsort((hi_i, lo_i, w))
    parent = list(range(n_comp))
    joins = 0
    for k in order.tolist():
        ra, rb = _find(parent, int(ca[k])), _find(parent, int(cb[k]))
        if ra == rb:
            continue
        parent[ra] = rb
        joins += 1
        if joins == n_comp - 1:
            return EdgeResult(float(w[k]), (int(lo_i[k]), int(hi_i[k])))
    raise ValueError("edge set does not connect the point set")


def _unique_edges(e: np.ndarray, n: int) -> np.ndarray:
    e = np.sort(e, axis=1)
    key = e[:, 0].astype(np.int64) * n + e[:, 1]
    _, first = np.unique(key, return_index=True)
    return e[np.sort(first)]


def _delaunay_edges(pts: np.ndarray) -> tuple[np.ndarray | None, bool]:
    """Delaunay edge set and whether it is guaranteed to contain an EMST.

    qhull silently drops points it cannot separate from a vertex at its
    working precision ("coplanar" points).  Those get their 8 nearest
    neighbors as extra candidate edges, and the result is flagged inexact.
    """
    try:
        tri = Delaunay(pts)
    except (QhullError, ValueError):
        return None, False
    simp = tri.simplices
    e = np.concatenate([simp[:, [0, 1]], simp[:, [1, 2]], simp[:, [0, 2]]])
    if len(tri.coplanar) == 0:
        return _unique_edges(e, len(pts)), True
    dropped = np.unique(tri.coplanar[:, 0])
    k = min(9, len(pts))
    _, nbr = cKDTree(pts).query(pts[dropped], k=k)
    extra = np.column_stack([np.repeat(dropped, k - 1), nbr[:, 1:].ravel()])
    return _unique_edges(np.concatenate([e, extra]), len(pts)), False


def _bottleneck_on_subset(
    pts: np.ndarray, subset: np.ndarray, labels: np.ndarray
) -> EdgeResult | None:
    sub = pts[subset]
    edges, exact = (None, False)
    if len(subset) >= MST_PRIM_BELOW:
        edges, exact = _delaunay_edges(sub)
    if edges is None or (not exact and len(subset) <= DENSE_FALLBACK_MAX):
        res = _prim(sub, labels)
    else:
        res = kruskal_bottleneck(sub, edges, labels)
    if res is None:
        return None
    i, j = res.argmax_pair
    return EdgeResult(res.longest_edge, tuple(sorted((int(subset[i]), int(subset[j])))))


def _emst_delaunay(pts: np.ndarray) -> EdgeResult:
    return _bottleneck_on_subset(pts, np.arange(len(pts)), np.arange(len(pts)))


def _emst_pruned(pts: np.ndarray, tree: cKDTree, nng: EdgeResult) -> EdgeResult:
    """Exact MST bottleneck by contracting everything joined at the NNG scale.

    The MST bottleneck is at least the NNG bottleneck ``L``.  Points in
    8-adjacent cells of side ``L / (2 sqrt 2)`` are within ``L`` of each
    other, so each 8-connected cluster of occupied cells can be merged
    up front.  Only points outside the largest cluster and the largest
    cluster's points within ``reach`` of them can carry a bottleneck edge;
    ``reach`` doubles until the bottleneck found is below it.
    """
    L = nng.longest_edge
    size = L / (2.0 * _SQRT2) * _CELL_SAFETY
    span = np.ptp(pts, axis=0)
    if size <= 0 or np.prod(np.floor(span / size) + 1) > _MAX_GRID_CELLS:
        return _emst_delaunay(pts)
    cells, _ = _cell_keys(pts, size)
    occupied = np.zeros(tuple(cells.max(axis=0) + 1), dtype=bool)
    occupied[cells[:, 0], cells[:, 1]] = True
    cell_label, n_clusters = ndimage.label(occupied, structure=np.ones((3, 3), dtype=int))
    if n_clusters == 1:
        return nng
    label = cell_label[cells[:, 0], cells[:, 1]]
    giant = int(np.argmax(np.bincount(label)))
    others = np.flatnonzero(label != giant)
    if len(others) > len(pts) // 4:
        return _emst_delaunay(pts)
    reach = 2.0 * L
    while True:
        near = tree.query_ball_point(pts[others], reach, return_sorted=False)
        cand = np.unique(np.concatenate([np.asarray(v, dtype=np.intp) for v in near]))
        subset = np.union1d(others, cand)
        res = _bottleneck_on_subset(pts, subset, label[subset])
        if res is None or res.longest_edge <= L:
            return nng
        if res.longest_edge <= reach:
            return res
        reach *= 2.0


def emst_longest_edge(points, *, method: str = "auto") -> EdgeResult:
    """Longest edge of a Euclidean minimal spanning tree.

    The value is unique even when the tree is not.  Methods: ``"prim"``
    (dense), ``"delaunay"`` (Kruskal with union-find on the Delaunay edges,
    falling back to Prim when the triangulation is rejected) and ``"auto"``
    (Prim below 32 points, Delaunay below 2048, pruned above).
    """
    pts = _graph_points(points)
    n = len(pts)
    if method == "auto":
        if n < MST_PRIM_BELOW:
            method = "prim"
        elif n < PRUNE_FROM:
            method = "delaunay"
        else:
            method = "pruned"
    if method == "prim":
        return prim_mst_longest_edge(pts)
    if method == "delaunay":
        return _emst_delaunay(pts)
    if method == "pruned":
        tree = cKDTree(pts)
        return _emst_pruned(pts, tree, _nng_pruned(pts, tree))
    raise ValueError(f"unknown MST method {method!r}")


def longest_edges(points) -> tuple[EdgeResult, EdgeResult]:
    """NNG and MST longest edges together, sharing one kd-tree for large inputs."""
    pts = _graph_points(points)
    if len(pts) < PRUNE_FROM:
        return nng_longest_edge(pts), emst_longest_edge(pts)
    tree = cKDTree(pts)
    nng = _nng_pruned(pts, tree)
    return nng, _emst_pruned(pts, tree, nng)
