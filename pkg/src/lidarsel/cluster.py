"""Density-based clustering of non-ground points into object clusters.

The pipeline is the classic hierarchical density clustering recipe:

1. per-point core distance = distance to the k-th nearest neighbour
   (excluding the point itself), k = ``min_samples``;
2. exact minimum spanning tree of the complete mutual-reachability graph,
   d_mreach(a, b) = max(core(a), core(b), d(a, b));
3. single-linkage hierarchy by ascending edge weight, condensed so that
   splits smaller than ``min_cluster_size`` fall out as noise;
4. excess-of-mass cluster selection with an epsilon floor: a selected
   cluster must be born (split off) at mutual-reachability distance of at
   least ``cluster_selection_epsilon``; clusters splitting below that
   distance stay merged into their ancestor.

Everything is deterministic: ties sort by index, cluster ids are assigned
by first point occurrence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError

# Finite stand-in for 1/0 when merges happen at distance zero (duplicate
# points); keeps the stability arithmetic free of inf - inf.
_MAX_LAMBDA = 1e12


@dataclass(frozen=True)
class HdbscanParams:
    min_cluster_size: int = 20
    min_samples: int = 10
    cluster_selection_epsilon: float = 0.5

    def __post_init__(self):
        if self.min_cluster_size < 2:
            raise ConfigError("min_cluster_size must be >= 2")
        if self.min_samples < 1:
            raise ConfigError("min_samples must be >= 1")
        if self.cluster_selection_epsilon < 0:
            raise ConfigError("cluster_selection_epsilon must be >= 0")


def core_distances(points: np.ndarray, k: int) -> np.ndarray:
    """Distance from each point to its k-th nearest neighbour (self excluded)."""
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if n <= k:
        raise ValueError(f"core distance needs more than k={k} points, got {n}")
    tree = cKDTree(pts)
    dist, _ = tree.query(pts, k=k + 1)
    return dist[:, k]


def mutual_reachability_mst(points: np.ndarray, core_dist: np.ndarray) -> np.ndarray:
    """Exact MST of the complete mutual-reachability graph.

    Prim's algorithm with one vectorized distance row per added vertex:
    O(n^2) time, O(n) memory, no approximation. Returns an (n-1, 3) array
    of (i, j, weight) rows.
    """
    pts = np.asarray(points, dtype=np.float64)
    core = np.asarray(core_dist, dtype=np.float64)
    n = pts.shape[0]
    if core.shape[0] != n:
        raise ValueError("core_dist length does not match points")
    if n <= 1:
        return np.empty((0, 3), dtype=np.float64)

    in_tree = np.zeros(n, dtype=bool)
    best_w = np.full(n, np.inf)
    best_from = np.zeros(n, dtype=np.int64)
    edges = np.empty((n - 1, 3), dtype=np.float64)

    current = 0
    in_tree[0] = True
    for t in range(n - 1):
        diff = pts - pts[current]
        d = np.sqrt(np.einsum("ij,ij->i", diff, diff))
        w = np.maximum(np.maximum(d, core), core[current])
        w[in_tree] = np.inf
        upd = w < best_w
        best_w[upd] = w[upd]
        best_from[upd] = current
        nxt = int(np.argmin(best_w))
        edges[t, 0] = best_from[nxt]
        edges[t, 1] = nxt
        edges[t, 2] = best_w[nxt]
        in_tree[nxt] = True
        best_w[nxt] = np.inf
        current = nxt
    return edges


def _lam(dist: float) -> float:
    if dist <= 0.0:
        return _MAX_LAMBDA
    return min(1.0 / dist, _MAX_LAMBDA)


def condense_and_select(
    edges: np.ndarray, min_cluster_size: int, epsilon: float
) -> np.ndarray:
    """Turn an MST into flat cluster labels (-1 = noise).

    Builds the single-linkage dendrogram, condenses it with the minimum
    cluster size, scores condensed clusters by excess-of-mass stability,
    applies the epsilon birth floor, and labels each point with its
    nearest selected ancestor. The merged cluster may be the hierarchy
    root when everything splits below epsilon.
    """
    edges = np.asarray(edges, dtype=np.float64)
    n = edges.shape[0] + 1
    labels = np.full(n, -1, dtype=np.int64)
    if n < 2 or n < min_cluster_size:
        return labels

    # --- single-linkage hierarchy (union-find over dendrogram node ids) ---
    order = np.lexsort((edges[:, 1], edges[:, 0], edges[:, 2]))
    e = edges[order]
    uf = np.arange(2 * n - 1, dtype=np.int64)

    def find(x: int) -> int:
        root = x
        while uf[root] != root:
            root = uf[root]
        while uf[x] != root:
            uf[x], x = root, uf[x]
        return root

    sz = np.ones(2 * n - 1, dtype=np.int64)
    left = np.empty(n - 1, dtype=np.int64)
    right = np.empty(n - 1, dtype=np.int64)
    dists = np.empty(n - 1, dtype=np.float64)
    for t in range(n - 1):
        ra = find(int(e[t, 0]))
        rb = find(int(e[t, 1]))
        m = n + t
        left[t] = ra
        right[t] = rb
        dists[t] = e[t, 2]
        uf[ra] = m
        uf[rb] = m
        sz[m] = sz[ra] + sz[rb]

    def subtree_points(node: int) -> list[int]:
        # only ever called on subtrees smaller than min_cluster_size
        out = []
        stack = [node]
        while stack:
            v = stack.pop()
            if v < n:
                out.append(v)
            else:
                stack.append(left[v - n])
                stack.append(right[v - n])
        return out

    # --- condense: root cluster 0, new clusters only at true splits ---
    c_parent = [-1]
    c_birth = [0.0]
    c_size = [n]
    c_points: list[list[tuple[int, float]]] = [[]]
    c_children: list[list[int]] = [[]]

    stack = [(2 * n - 2, 0)]
    while stack:
        node, cl = stack.pop()
        cur = node
        while True:
            a = left[cur - n]
            b = right[cur - n]
            lam = _lam(dists[cur - n])
            sa = int(sz[a])
            sb = int(sz[b])
            if sa >= min_cluster_size and sb >= min_cluster_size:
                for child, child_size in ((a, sa), (b, sb)):
                    cid = len(c_parent)
                    c_parent.append(cl)
                    c_birth.append(lam)
                    c_size.append(child_size)
                    c_points.append([])
                    c_children.append([])
                    c_children[cl].append(cid)
                    stack.append((child, cid))
                break
            if sa < min_cluster_size and sb < min_cluster_size:
                pts = c_points[cl]
                for p in subtree_points(a):
                    pts.append((p, lam))
                for p in subtree_points(b):
                    pts.append((p, lam))
                break
            small, big = (a, b) if sa < min_cluster_size else (b, a)
            pts = c_points[cl]
            for p in subtree_points(small):
                pts.append((p, lam))
            cur = big

    k = len(c_parent)

    # --- excess-of-mass stability ---
    stability = [0.0] * k
    for cl in range(k):
        birth = c_birth[cl]
        s = 0.0
        for _, lam in c_points[cl]:
            s += lam - birth
        for ch in c_children[cl]:
            s += (c_birth[ch] - birth) * c_size[ch]
        stability[cl] = s

    # Bottom-up selection; the root (0) is never selectable directly.
    selected = [False] * k
    subtree_stab = [0.0] * k
    for cl in range(k - 1, 0, -1):
        child_sum = sum(subtree_stab[ch] for ch in c_children[cl])
        if c_children[cl] and child_sum > stability[cl]:
            subtree_stab[cl] = child_sum
        else:
            selected[cl] = True
            subtree_stab[cl] = stability[cl]

    def topmost(flags: list[bool]) -> set[int]:
        keep: set[int] = set()
        # ids ascend from parents to children, so ancestors resolve first
        blocked = [False] * k
        for cl in range(k):
            parent = c_parent[cl]
            if parent >= 0 and (blocked[parent] or parent in keep):
                blocked[cl] = True
                continue
            if flags[cl]:
                keep.add(cl)
        return keep

    chosen = topmost(selected)

    # --- epsilon floor: clusters born below epsilon merge upward ---
    if epsilon > 0.0 and chosen:
        def birth_distance(cl: int) -> float:
            b = c_birth[cl]
            return math.inf if b <= 0.0 else 1.0 / b

        merged = set()
        for cl in chosen:
            cur = cl
            while birth_distance(cur) < epsilon:
                cur = c_parent[cur]
            merged.add(cur)
        flags = [cl in merged for cl in range(k)]
        chosen = topmost(flags)

    if not chosen:
        return labels

    # --- label every point with its nearest selected ancestor ---
    sel_anc = [-1] * k
    for cl in range(k):
        if cl in chosen:
            sel_anc[cl] = cl
        elif cl > 0:
            sel_anc[cl] = sel_anc[c_parent[cl]]
    raw = np.full(n, -1, dtype=np.int64)
    for cl in range(k):
        anc = sel_anc[cl]
        if anc < 0:
            continue
        for p, _ in c_points[cl]:
            raw[p] = anc

    # contiguous ids in order of first point occurrence
    mapping: dict[int, int] = {}
    for p in range(n):
        r = int(raw[p])
        if r >= 0:
            if r not in mapping:
                mapping[r] = len(mapping)
            labels[p] = mapping[r]
    return labels


def hdbscan(points: np.ndarray, params: HdbscanParams) -> np.ndarray:
    """Cluster 3-D points; returns one label per point, -1 for noise."""
    pts = np.asarray(points, dtype=np.float64)
    core = core_distances(pts, params.min_samples)
    edges = mutual_reachability_mst(pts, core)
    return condense_and_select(
        edges, params.min_cluster_size, params.cluster_selection_epsilon
    )
