"""Per-class k-nearest-neighbor graphs, exact or approximate.

Exact search is blocked brute force under Euclidean distance with a
deterministic tie-break (lower row index wins). The approximate index is a
forest of randomized projection trees; its contract is measured recall
against the exact graph, not any particular index structure.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from mlsvm.data import Dataset

EXACT_DEFAULT_LIMIT = 20_000


@dataclass(frozen=True)
class KnnConfig:
    k: int = 10
    mode: str = "auto"          # exact | approximate | auto (exact below limit)
    n_trees: int = 12
    leaf_size: int = 48
    search_checks: int = 1024
    refine_iters: int = 3       # neighbor-of-neighbor improvement passes

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.mode not in ("auto", "exact", "approximate"):
            raise ValueError("unknown mode %r" % self.mode)


@dataclass
class KnnGraph:
    """Directed k-NN lists plus their symmetric closure.

    node_ids map local node positions (0..n-1) to dataset row indices.
    neighbor_ids/neighbor_dists are (n, k) in nondecreasing distance order.
    und_indptr/und_indices form a CSR adjacency of the undirected edge set.
    """

    node_ids: np.ndarray
    neighbor_ids: np.ndarray
    neighbor_dists: np.ndarray
    k: int
    und_indptr: np.ndarray
    und_indices: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.node_ids.shape[0]

    def positions_of(self, row_ids) -> np.ndarray:
        """Local node positions of the given dataset rows."""
        row_ids = np.asarray(row_ids, dtype=np.int64)
        order = np.argsort(self.node_ids, kind="stable")
        sorted_ids = self.node_ids[order]
        pos = np.searchsorted(sorted_ids, row_ids)
        if (pos >= sorted_ids.size).any() or (sorted_ids[np.minimum(pos, sorted_ids.size - 1)] != row_ids).any():
            raise ValueError("some rows are not nodes of this graph")
        return order[pos]

    def undirected_neighbors(self, pos: int) -> np.ndarray:
        return self.und_indices[self.und_indptr[pos]:self.und_indptr[pos + 1]]

    def dump(self, fh) -> None:
        """Debug adjacency listing: ``node: (nbr,dist) ...`` per line."""
        for i in range(self.n_nodes):
            pairs = " ".join("(%d,%.6g)" % (self.node_ids[j], d)
                             for j, d in zip(self.neighbor_ids[i], self.neighbor_dists[i]))
            fh.write("%d: %s\n" % (self.node_ids[i], pairs))


def build_knn_graph(data: Dataset, rows, config: KnnConfig | None = None,
                    seed: int = 0) -> KnnGraph:
    """Build a k-NN graph over the given rows (one class partition).

    Rows must be fully observed. k is clamped to n-1 with a warning when the
    partition is too small.
    """
    config = config or KnnConfig()
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size == 0:
        raise ValueError("rows must be nonempty")
    if data.missing[rows].any():
        raise ValueError("rows contain missing cells; impute before building graphs")
    x = np.ascontiguousarray(data.features[rows])
    n = x.shape[0]
    k = config.k
    if k >= n:
        warnings.warn("k=%d >= %d points; clamping to %d" % (k, n, n - 1))
        k = n - 1
    if k == 0:
        empty = np.zeros((n, 0), dtype=np.int64)
        return KnnGraph(rows, empty, empty.astype(float), 0,
                        np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=np.int64))
    mode = config.mode
    if mode == "auto":
        mode = "exact" if n <= EXACT_DEFAULT_LIMIT else "approximate"
    if mode == "exact":
        nbr_ids, nbr_d2 = _exact_knn(x, k)
    else:
        nbr_ids, nbr_d2 = _approx_knn(x, k, config, seed)
    dists = np.sqrt(np.maximum(nbr_d2, 0.0))
    indptr, indices = _symmetric_closure(nbr_ids, n)
    return KnnGraph(rows, nbr_ids, dists, k, indptr, indices)


def _exact_knn(x: np.ndarray, k: int, block: int = 512):
    n = x.shape[0]
    sq = np.einsum("ij,ij->i", x, x)
    nbr_ids = np.empty((n, k), dtype=np.int64)
    nbr_d2 = np.empty((n, k))
    for start in range(0, n, block):
        stop = min(start + block, n)
        d2 = sq[start:stop, None] + sq[None, :] - 2.0 * (x[start:stop] @ x.T)
        np.maximum(d2, 0.0, out=d2)
        d2[np.arange(stop - start), np.arange(start, stop)] = np.inf
        if k < n - 1:
            part = np.argpartition(d2, k, axis=1)[:, :k]
        else:
            part = np.tile(np.arange(n), (stop - start, 1))
        for r in range(stop - start):
            cand = part[r]
            row = d2[r]
            dmax = row[cand].max()
            # ties at the selection boundary: widen so lower index can win
            tied = np.flatnonzero(row <= dmax)
            if tied.size > cand.size:
                cand = tied
            order = cand[np.lexsort((cand, row[cand]))][:k]
            nbr_ids[start + r] = order
            nbr_d2[start + r] = row[order]
    return nbr_ids, nbr_d2


def _rp_tree_leaves(x, idx, leaf_size, rng, out):
    if idx.size <= leaf_size:
        out.append(idx)
        return
    direction = rng.standard_normal(x.shape[1])
    proj = x[idx] @ direction
    med = np.median(proj)
    left = proj < med
    # degenerate split (duplicate points): halve by index order to terminate
    if not left.any() or left.all():
        half = idx.size // 2
        _rp_tree_leaves(x, idx[:half], leaf_size, rng, out)
        _rp_tree_leaves(x, idx[half:], leaf_size, rng, out)
        return
    _rp_tree_leaves(x, idx[left], leaf_size, rng, out)
    _rp_tree_leaves(x, idx[~left], leaf_size, rng, out)


def _approx_knn(x: np.ndarray, k: int, config: KnnConfig, seed: int):
    n = x.shape[0]
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x6B6E6E]))
    cand_lists: list[list[np.ndarray]] = [[] for _ in range(n)]
    for _ in range(config.n_trees):
        leaves: list[np.ndarray] = []
        _rp_tree_leaves(x, np.arange(n), config.leaf_size, rng, leaves)
        for leaf in leaves:
            for i in leaf:
                cand_lists[i].append(leaf)
    sq = np.einsum("ij,ij->i", x, x)
    nbr_ids = np.empty((n, k), dtype=np.int64)
    nbr_d2 = np.empty((n, k))
    for i in range(n):
        cand, counts = np.unique(np.concatenate(cand_lists[i]), return_counts=True)
        keep = cand != i
        cand, counts = cand[keep], counts[keep]
        if cand.size > config.search_checks:
            # frequently co-leafed points are the most promising candidates
            top = np.lexsort((cand, -counts))[:config.search_checks]
            cand = cand[top]
        if cand.size < k:
            cand = np.delete(np.arange(n), i)
        d2 = sq[cand] + sq[i] - 2.0 * (x[cand] @ x[i])
        np.maximum(d2, 0.0, out=d2)
        order = np.lexsort((cand, d2))[:k]
        nbr_ids[i] = cand[order]
        nbr_d2[i] = d2[order]
    for _ in range(max(0, config.refine_iters)):
        if not _refine_neighbors(x, sq, nbr_ids, nbr_d2):
            break
    return nbr_ids, nbr_d2


def _refine_neighbors(x, sq, nbr_ids, nbr_d2) -> bool:
    """One pass of neighbor-of-neighbor (and reverse-neighbor) improvement."""
    n, k = nbr_ids.shape
    order = np.argsort(nbr_ids.ravel(), kind="stable")
    rev_src = np.repeat(np.arange(n), k)[order]
    rev_dst = nbr_ids.ravel()[order]
    starts = np.searchsorted(rev_dst, np.arange(n))
    stops = np.searchsorted(rev_dst, np.arange(n), side="right")
    changed = False
    for i in range(n):
        cand = np.concatenate([
            nbr_ids[i],
            nbr_ids[nbr_ids[i]].ravel(),
            rev_src[starts[i]:stops[i]],
        ])
        cand = np.unique(cand)
        cand = cand[cand != i]
        d2 = sq[cand] + sq[i] - 2.0 * (x[cand] @ x[i])
        np.maximum(d2, 0.0, out=d2)
        pick = np.lexsort((cand, d2))[:k]
        new_ids = cand[pick]
        if not np.array_equal(new_ids, nbr_ids[i]):
            changed = True
            nbr_ids[i] = new_ids
            nbr_d2[i] = d2[pick]
    return changed


def _symmetric_closure(nbr_ids: np.ndarray, n: int):
    k = nbr_ids.shape[1]
    src = np.repeat(np.arange(n, dtype=np.int64), k)
    dst = nbr_ids.ravel()
    a = np.concatenate([src, dst])
    b = np.concatenate([dst, src])
    keep = a != b
    a, b = a[keep], b[keep]
    pairs = np.unique(np.stack([a, b], axis=1), axis=0)
    counts = np.bincount(pairs[:, 0], minlength=n)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return indptr, pairs[:, 1].copy()


def knn_recall(approx: KnnGraph, exact: KnnGraph) -> float:
    """Mean fraction of exact neighbors recovered by the approximate lists."""
    if approx.n_nodes != exact.n_nodes or (approx.node_ids != exact.node_ids).any():
        raise ValueError("graphs are over different node sets")
    if approx.k != exact.k:
        raise ValueError("graphs have different k (%d vs %d)" % (approx.k, exact.k))
    if exact.k == 0:
        return 1.0
    hits = 0
    for i in range(exact.n_nodes):
        hits += np.intersect1d(approx.neighbor_ids[i], exact.neighbor_ids[i]).size
    return hits / (exact.n_nodes * exact.k)
