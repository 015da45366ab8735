"""Bundle sample sets, base neighbor graphs, and block kernel matrix assembly.

The weight matrix W is kappa x kappa (kappa = total number of fibre samples),
organized in fibre blocks.  The (i, j) block is nonzero only when base points
i and j are mutual k_base-nearest neighbors; inside a nonzero block, entry
(r, s) survives only when the transported sample r and sample s are mutual
k_fibre-nearest neighbors under the post-transport fibre metric.  Diagonal
blocks are identically zero and each unordered block pair is evaluated once,
so W is symmetric exactly, not just up to roundoff.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from . import sphere

__all__ = [
    "BundleSampleSet",
    "NeighborGraph",
    "KernelConfig",
    "BlockSparseMatrix",
    "build_base_knn",
    "kernel_entry_exact",
    "kernel_entry_empirical",
    "assemble_block_matrix",
]


@dataclass
class BundleSampleSet:
    """Discretization of the unit tangent bundle: base points plus fibre samples.

    kind="exact" stores unit tangent vectors in R^3 per fibre; kind="coeff"
    stores unit coefficient vectors (length d) relative to per-point tangent
    frames.  fibres[j] has shape (kappa_j, 3) or (kappa_j, d).
    """

    base_points: np.ndarray
    fibres: List[np.ndarray]
    kind: str = "exact"

    def __post_init__(self):
        self.base_points = np.asarray(self.base_points, dtype=float)
        self.fibres = [np.asarray(f, dtype=float) for f in self.fibres]
        if self.kind not in ("exact", "coeff"):
            raise ValueError(f"unknown bundle kind {self.kind!r}")
        if len(self.fibres) != self.base_points.shape[0]:
            raise ValueError("one fibre sample array per base point required")

    @property
    def n_base(self) -> int:
        return self.base_points.shape[0]

    @property
    def fibre_sizes(self) -> np.ndarray:
        return np.array([f.shape[0] for f in self.fibres], dtype=int)

    @property
    def block_offsets(self) -> np.ndarray:
        """Prefix sums s_j: flat index of sample (j, s) is block_offsets[j] + s."""
        return np.concatenate([[0], np.cumsum(self.fibre_sizes)])

    @property
    def total(self) -> int:
        return int(self.fibre_sizes.sum())

    def validate(self, tol: float = 1e-12) -> None:
        """Check the unit/tangency constraints of every fibre sample."""
        for j, f in enumerate(self.fibres):
            nerr = np.abs(np.linalg.norm(f, axis=1) - 1.0)
            if np.any(nerr > tol):
                raise ValueError(f"fibre {j}: sample norm off unit by {nerr.max():.3e}")
            if self.kind == "exact":
                dot = np.abs(f @ self.base_points[j])
                if np.any(dot > tol):
                    raise ValueError(f"fibre {j}: sample not tangent, |v.p| {dot.max():.3e}")


@dataclass
class NeighborGraph:
    """Symmetric base-level neighbor graph without self loops."""

    n: int
    adjacency: List[np.ndarray]  # per-vertex sorted neighbor indices

    def __post_init__(self):
        self.adjacency = [np.asarray(a, dtype=int) for a in self.adjacency]
        if len(self.adjacency) != self.n:
            raise ValueError("adjacency list length must equal n")

    def edges(self) -> Iterator[Tuple[int, int]]:
        """Unordered edges, each yielded once with i < j."""
        for i, nbrs in enumerate(self.adjacency):
            for j in nbrs[nbrs > i]:
                yield i, int(j)

    def edge_count(self) -> int:
        return sum(len(a) for a in self.adjacency) // 2

    def to_sparse(self) -> sparse.csr_matrix:
        rows = np.repeat(np.arange(self.n), [len(a) for a in self.adjacency])
        cols = np.concatenate(self.adjacency) if self.n else np.array([], dtype=int)
        return sparse.csr_matrix(
            (np.ones(rows.size, dtype=np.int8), (rows, cols)), shape=(self.n, self.n)
        )

    def is_connected(self) -> bool:
        if self.n == 0:
            return True
        ncomp, _ = connected_components(self.to_sparse(), directed=False)
        return ncomp == 1


def build_base_knn(points: np.ndarray, k_base: int) -> NeighborGraph:
    """Mutual k-nearest-neighbor graph of the base cloud under Euclidean distance.

    Vertices i and j are adjacent iff each is among the other's k_base nearest.
    Disconnected results are legal but unusual, so they raise a warning rather
    than an error.
    """
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if not 1 <= k_base < n:
        raise ValueError(f"k_base must be in [1, n_base), got {k_base} for {n} points")
    tree = cKDTree(points)
    _, idx = tree.query(points, k=k_base + 1)
    nbr = idx[:, 1:]
    rows = np.repeat(np.arange(n), k_base)
    A = sparse.csr_matrix(
        (np.ones(rows.size, dtype=bool), (rows, nbr.ravel())), shape=(n, n)
    )
    M = A.multiply(A.T).tocsr()
    adjacency = [np.sort(M.indices[M.indptr[i]: M.indptr[i + 1]]) for i in range(n)]
    graph = NeighborGraph(n=n, adjacency=adjacency)
    if not graph.is_connected():
        warnings.warn("mutual kNN base graph is disconnected", stacklevel=2)
    return graph


@dataclass
class KernelConfig:
    """Bandwidths, truncation counts, and kernel family of the block assembly.

    eps scales the squared base distance, delta the squared fibre residual.
    family="gaussian_product" is exp(-(u1 + u2)); "compact_product" is
    (1-u1)(1-u2) on the unit square and zero outside.  fibre_metric picks the
    chordal distance between transported vectors (default) or the geodesic
    angle on the fibre circle; base_metric likewise chordal-in-ambient
    (default) or geodesic.
    """

    eps: float
    delta: float
    k_base: int
    k_fibre: int
    family: str = "gaussian_product"
    alpha: float = 1.0
    fibre_metric: str = "chordal"
    base_metric: str = "euclidean"

    def __post_init__(self):
        if self.eps <= 0 or self.delta <= 0:
            raise ValueError("bandwidths eps and delta must be > 0")
        if self.k_base < 1 or self.k_fibre < 1:
            raise ValueError("k_base and k_fibre must be >= 1")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.family not in ("gaussian_product", "compact_product"):
            raise ValueError(f"unknown kernel family {self.family!r}")
        if self.fibre_metric not in ("chordal", "geodesic"):
            raise ValueError(f"unknown fibre metric {self.fibre_metric!r}")
        if self.base_metric not in ("euclidean", "geodesic"):
            raise ValueError(f"unknown base metric {self.base_metric!r}")

    def evaluate(self, u1: np.ndarray, u2: np.ndarray) -> np.ndarray:
        """Kernel value at normalized squared distances u1 = b^2/eps, u2 = f^2/delta."""
        u1 = np.asarray(u1, dtype=float)
        u2 = np.asarray(u2, dtype=float)
        if self.family == "gaussian_product":
            return np.exp(-(u1 + u2))
        inside = (u1 <= 1.0) & (u2 <= 1.0)
        return np.where(inside, (1.0 - np.minimum(u1, 1.0)) * (1.0 - np.minimum(u2, 1.0)), 0.0)


def _base_sq_distance(xi: np.ndarray, xj: np.ndarray, cfg: KernelConfig) -> float:
    if cfg.base_metric == "euclidean":
        return float(np.sum((xi - xj) ** 2))
    return float(sphere.geodesic_distance(xi, xj) ** 2)


def _fibre_sq_distance(transported: np.ndarray, targets: np.ndarray, cfg: KernelConfig) -> np.ndarray:
    """Squared fibre distances between rows of transported and rows of targets."""
    if cfg.fibre_metric == "chordal":
        diff = transported[:, None, :] - targets[None, :, :]
        return np.einsum("ijk,ijk->ij", diff, diff)
    dot = np.clip(transported @ targets.T, -1.0, 1.0)
    return np.arccos(dot) ** 2


def kernel_entry_exact(
    xi_i: np.ndarray,
    xi_j: np.ndarray,
    x_ir: np.ndarray,
    x_js: np.ndarray,
    cfg: KernelConfig,
) -> float:
    """Kernel weight between unit tangent samples at distinct base points.

    The fibre residual is measured after parallel transport of x_ir to the
    tangent plane at xi_j; transport is an isometry, so the value is symmetric
    in the two samples.
    """
    if np.allclose(xi_i, xi_j, atol=1e-15):
        raise ValueError("kernel is only defined between distinct base points")
    b2 = _base_sq_distance(xi_i, xi_j, cfg)
    moved = sphere.parallel_transport(xi_i, xi_j, x_ir)
    f2 = _fibre_sq_distance(np.atleast_2d(moved), np.atleast_2d(x_js), cfg)[0, 0]
    return float(cfg.evaluate(b2 / cfg.eps, f2 / cfg.delta))


def kernel_entry_empirical(
    xi_i: np.ndarray,
    xi_j: np.ndarray,
    c_ir: np.ndarray,
    c_js: np.ndarray,
    O_ji: np.ndarray,
    cfg: KernelConfig,
) -> float:
    """Kernel weight in coefficient form with an estimated transport O_ji."""
    if np.allclose(xi_i, xi_j, atol=1e-15):
        raise ValueError("kernel is only defined between distinct base points")
    b2 = _base_sq_distance(xi_i, xi_j, cfg)
    f2 = float(np.sum((O_ji @ np.asarray(c_ir, float) - np.asarray(c_js, float)) ** 2))
    return float(cfg.evaluate(b2 / cfg.eps, f2 / cfg.delta))


@dataclass
class BlockSparseMatrix:
    """Symmetric nonnegative weight matrix with fibre-block structure.

    Backed by a CSR matrix in canonical (sorted, duplicate-free) form.
    block_offsets are the prefix sums of the fibre sizes, so block (i, j)
    occupies rows offsets[i]:offsets[i+1] and columns offsets[j]:offsets[j+1].
    """

    matrix: sparse.csr_matrix
    block_offsets: np.ndarray

    def __post_init__(self):
        self.block_offsets = np.asarray(self.block_offsets, dtype=int)
        m = self.matrix.tocsr()
        m.sum_duplicates()
        m.sort_indices()
        self.matrix = m
        if self.matrix.shape[0] != self.matrix.shape[1]:
            raise ValueError("weight matrix must be square")
        if self.block_offsets[-1] != self.matrix.shape[0]:
            raise ValueError("block offsets do not cover the matrix size")

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    @property
    def n_blocks(self) -> int:
        return len(self.block_offsets) - 1

    def entries(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Coordinate triplets sorted by (row, col)."""
        coo = self.matrix.tocoo()
        order = np.lexsort((coo.col, coo.row))
        return coo.row[order], coo.col[order], coo.data[order]

    def block(self, i: int, j: int) -> np.ndarray:
        o = self.block_offsets
        return self.matrix[o[i]: o[i + 1], o[j]: o[j + 1]].toarray()

    def validate(self) -> None:
        """Assert symmetry, nonnegativity, and zero diagonal blocks."""
        if (self.matrix != self.matrix.T).nnz != 0:
            raise ValueError("weight matrix is not symmetric")
        if self.matrix.nnz and self.matrix.data.min() < 0:
            raise ValueError("negative weight encountered")
        o = self.block_offsets
        coo = self.matrix.tocoo()
        bi = np.searchsorted(o, coo.row, side="right") - 1
        bj = np.searchsorted(o, coo.col, side="right") - 1
        if np.any(bi == bj):
            raise ValueError("nonzero entry inside a diagonal block")


def _mutual_kfibre_mask(d2: np.ndarray, k_fibre: int) -> np.ndarray:
    """Mutual k-nearest mask of a fibre distance matrix, ties to smaller index.

    Entry (r, s) survives when s is among the k_fibre nearest of row r and r is
    among the k_fibre nearest of column s; candidates at equal distance are
    ranked by index, making the mask deterministic.
    """
    nr, ns = d2.shape
    kf_r = min(k_fibre, ns)
    kf_c = min(k_fibre, nr)
    # stable argsort ranks equal distances by ascending index
    order_r = np.argsort(d2, axis=1, kind="stable")[:, :kf_r]
    mask_r = np.zeros_like(d2, dtype=bool)
    mask_r[np.arange(nr)[:, None], order_r] = True
    order_c = np.argsort(d2, axis=0, kind="stable")[:kf_c, :]
    mask_c = np.zeros_like(d2, dtype=bool)
    mask_c[order_c, np.arange(ns)[None, :]] = True
    return mask_r & mask_c


def assemble_block_matrix(
    samples: BundleSampleSet,
    graph: NeighborGraph,
    cfg: KernelConfig,
    transports: Optional[Dict[Tuple[int, int], np.ndarray]] = None,
) -> BlockSparseMatrix:
    """Assemble the symmetric block weight matrix W over the base graph.

    In exact mode the fibre residual uses the closed-form sphere transport; in
    coefficient mode `transports` must hold an orthogonal matrix for every
    graph edge, keyed (i, j) with the convention that transports[(i, j)] maps
    coefficients at i to coefficients at j (either key orientation is
    accepted, the other direction being the transpose).

    Each unordered block pair is evaluated once and mirrored, so W equals its
    transpose exactly and diagonal blocks are empty.
    """
    if graph.n != samples.n_base:
        raise ValueError("graph and sample set disagree on the number of base points")
    offsets = samples.block_offsets
    kappa = samples.total
    base = samples.base_points
    coeff_mode = samples.kind == "coeff"

    rows: List[np.ndarray] = []
    cols: List[np.ndarray] = []
    vals: List[np.ndarray] = []
    for i, j in graph.edges():
        fi, fj = samples.fibres[i], samples.fibres[j]
        if fi.shape[0] == 0 or fj.shape[0] == 0:
            continue
        if coeff_mode:
            O_ji = _edge_transport(transports, i, j)
            moved = fi @ O_ji.T
            diff = moved[:, None, :] - fj[None, :, :]
            d2 = np.einsum("rsk,rsk->rs", diff, diff)
        else:
            moved = sphere.parallel_transport(base[i], base[j], fi)
            d2 = _fibre_sq_distance(moved, fj, cfg)
        mask = _mutual_kfibre_mask(d2, cfg.k_fibre)
        r, s = np.nonzero(mask)
        if r.size == 0:
            continue
        b2 = _base_sq_distance(base[i], base[j], cfg)
        w = cfg.evaluate(b2 / cfg.eps, d2[r, s] / cfg.delta)
        keep = w > 0
        r, s, w = r[keep], s[keep], w[keep]
        rows.append(offsets[i] + r)
        cols.append(offsets[j] + s)
        vals.append(w)

    if rows:
        I = np.concatenate(rows)
        J = np.concatenate(cols)
        V = np.concatenate(vals)
    else:
        I = np.array([], dtype=int)
        J = np.array([], dtype=int)
        V = np.array([], dtype=float)
    upper = sparse.csr_matrix((V, (I, J)), shape=(kappa, kappa))
    W = upper + upper.T
    return BlockSparseMatrix(matrix=W, block_offsets=offsets)


def _edge_transport(
    transports: Optional[Dict[Tuple[int, int], np.ndarray]], i: int, j: int
) -> np.ndarray:
    """Fetch O_ji (coefficients at i -> coefficients at j) for edge (i, j)."""
    if transports is None:
        raise ValueError("coefficient-mode assembly requires transport estimates")
    if (i, j) in transports:
        return np.asarray(transports[(i, j)], dtype=float)
    if (j, i) in transports:
        return np.asarray(transports[(j, i)], dtype=float).T
    raise ValueError(f"missing transport estimate for base edge ({i}, {j})")
