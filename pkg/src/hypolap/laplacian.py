"""Graph hypoelliptic Laplacians and the alpha-renormalization chain.

From a block weight matrix W with degrees q, the alpha-normalized matrix is
W_alpha = Q^-alpha W Q^-alpha; Laplacians are then built from W_alpha and its
own degree vector.  Degree inverses are applied as diagonal scalings of the
sparse entries, never as dense matrices.
"""
from __future__ import annotations

from typing import Union

import numpy as np
from scipy import sparse

from .bundle import BlockSparseMatrix

__all__ = [
    "VARIANTS",
    "degree_vector",
    "alpha_normalize",
    "build_laplacian",
    "build_hypoelliptic_chain",
    "symmetric_transition",
]

VARIANTS = ("unnormalized", "random_walk", "symmetric")

MatrixLike = Union[BlockSparseMatrix, sparse.spmatrix, np.ndarray]


def _as_csr(W: MatrixLike) -> sparse.csr_matrix:
    if isinstance(W, BlockSparseMatrix):
        return W.matrix
    return sparse.csr_matrix(W)


def degree_vector(W: MatrixLike) -> np.ndarray:
    """Row sums of W; raises on any nonpositive degree (isolated vertex)."""
    m = _as_csr(W)
    d = np.asarray(m.sum(axis=1)).ravel()
    if m.shape[0] and d.min() <= 0:
        bad = int(np.argmin(d))
        raise ValueError(f"vertex {bad} has nonpositive degree {d[bad]:.3e}; graph must be connected")
    return d


def alpha_normalize(W: BlockSparseMatrix, alpha: float) -> BlockSparseMatrix:
    """Renormalized weights (W_alpha)_kl = W_kl / (q_k q_l)^alpha.

    alpha = 0 returns W itself; symmetry and the sparsity pattern are
    preserved for every alpha.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    if alpha == 0.0:
        return W
    q = degree_vector(W)
    qa = q ** (-alpha)
    m = W.matrix.tocoo(copy=True)
    # entrywise qa[k] * qa[l] keeps W_alpha exactly symmetric (commutative
    # product, one rounding), unlike a two-sided diagonal sandwich
    m.data = m.data * (qa[m.row] * qa[m.col])
    return BlockSparseMatrix(matrix=m.tocsr(), block_offsets=W.block_offsets)


def build_laplacian(W: MatrixLike, variant: str = "symmetric") -> sparse.csr_matrix:
    """Graph Laplacian of the weight matrix W.

    unnormalized: D - W;  random_walk: I - D^-1 W (row sums vanish);
    symmetric: I - D^-1/2 W D^-1/2, returned exactly symmetric.
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown Laplacian variant {variant!r}")
    m = _as_csr(W)
    d = degree_vector(m)
    n = m.shape[0]
    eye = sparse.identity(n, format="csr")
    if variant == "unnormalized":
        return (sparse.diags(d) - m).tocsr()
    if variant == "random_walk":
        return (eye - sparse.diags(1.0 / d) @ m).tocsr()
    s = sparse.diags(d ** -0.5)
    core = s @ m @ s
    core = (core + core.T) * 0.5  # exact symmetry despite scaling roundoff
    return (eye - core).tocsr()


def symmetric_transition(W: MatrixLike) -> sparse.csr_matrix:
    """D^-1/2 W D^-1/2, the symmetric companion of the transition matrix."""
    m = _as_csr(W)
    d = degree_vector(m)
    s = sparse.diags(d ** -0.5)
    core = s @ m @ s
    return ((core + core.T) * 0.5).tocsr()


def build_hypoelliptic_chain(
    W: BlockSparseMatrix, alpha: float, variant: str = "symmetric"
) -> sparse.csr_matrix:
    """Laplacian of the alpha-renormalized weights, degrees recomputed from W_alpha."""
    return build_laplacian(alpha_normalize(W, alpha), variant)
