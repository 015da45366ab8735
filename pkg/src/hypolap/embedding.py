"""Spectral embeddings and diffusion distances of the bundle data set.

The per-point map weights eigenvector l by lambda_l^t ("paper_literal", the
default) or by (1 - lambda_l)^t ("diffusion"); its row-normalized form lands
on the unit sphere.  The per-fibre map V^t packs, for each fibre, the matrix
of weighted inner products between eigenvector segments; Euclidean inner
products of V^t rows equal squared Frobenius norms of the blocks of the t-th
power of the Laplacian when the full spectrum is used.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .spectral import SpectralResult

__all__ = [
    "EmbeddingCoordinates",
    "BaseEmbeddingCoordinates",
    "hdm_embed",
    "hdm_normalize",
    "hdm_distance",
    "hbdm_embed",
    "hbdm_distance",
]

CONVENTIONS = ("paper_literal", "diffusion")


@dataclass
class EmbeddingCoordinates:
    """Per-sample embedding rows, one column per nontrivial eigenvector."""

    coords: np.ndarray                 # (kappa, m-1)
    t: float
    convention: str
    block_offsets: Optional[np.ndarray] = None
    normalized: bool = False

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=float)
        if self.block_offsets is not None:
            self.block_offsets = np.asarray(self.block_offsets, dtype=int)

    @property
    def n_points(self) -> int:
        return self.coords.shape[0]

    def row_index(self, j: int, s: int) -> int:
        """Flat row of fibre-j sample s."""
        if self.block_offsets is None:
            raise ValueError("embedding carries no block offsets")
        return int(self.block_offsets[j]) + s

    def fibre_rows(self, j: int) -> np.ndarray:
        if self.block_offsets is None:
            raise ValueError("embedding carries no block offsets")
        o = self.block_offsets
        return self.coords[o[j]: o[j + 1]]


@dataclass
class BaseEmbeddingCoordinates:
    """Per-fibre embedding rows of length m^2."""

    per_fibre: np.ndarray              # (n_base, m*m)
    t: float

    def __post_init__(self):
        self.per_fibre = np.asarray(self.per_fibre, dtype=float)

    @property
    def n_fibres(self) -> int:
        return self.per_fibre.shape[0]


def _weights(eigenvalues: np.ndarray, t: float, convention: str) -> np.ndarray:
    """Spectral weights lambda^t or (1-lambda)^t with 0^0 := 1."""
    lam = np.asarray(eigenvalues, dtype=float)
    if convention == "paper_literal":
        base = np.maximum(lam, 0.0)  # tolerate -1e-12 solver noise at lambda_0
    elif convention == "diffusion":
        if np.any(lam > 1.0 + 1e-10):
            raise ValueError("diffusion convention requires eigenvalues <= 1")
        base = np.maximum(1.0 - lam, 0.0)
    else:
        raise ValueError(f"unknown embedding convention {convention!r}")
    if t == 0:
        return np.ones_like(base)
    return base**t


def hdm_embed(
    spec: SpectralResult, t: float, convention: str = "paper_literal"
) -> EmbeddingCoordinates:
    """Embed every bundle sample using the nontrivial eigenvectors.

    Column l-1 holds weight(lambda_l)^t * v_l for l = 1..m-1 in ascending
    eigenvalue order; t = 0 reproduces the raw eigenvector entries.
    """
    if spec.m < 2:
        raise ValueError("need at least two eigenpairs to embed")
    if t < 0:
        raise ValueError(f"diffusion time must be >= 0, got {t}")
    w = _weights(spec.eigenvalues[1:], t, convention)
    coords = spec.eigenvectors[:, 1:] * w[None, :]
    return EmbeddingCoordinates(
        coords=coords, t=t, convention=convention, block_offsets=spec.block_offsets
    )


def hdm_normalize(emb: EmbeddingCoordinates) -> EmbeddingCoordinates:
    """Rescale every row to unit norm; raises naming the first zero row."""
    norms = np.linalg.norm(emb.coords, axis=1)
    if np.any(norms == 0):
        bad = int(np.argmin(norms))
        raise ValueError(f"cannot normalize embedding: row {bad} is identically zero")
    return EmbeddingCoordinates(
        coords=emb.coords / norms[:, None],
        t=emb.t,
        convention=emb.convention,
        block_offsets=emb.block_offsets,
        normalized=True,
    )


def hdm_distance(emb: EmbeddingCoordinates, p: int, q: int) -> float:
    """Euclidean distance between embedded samples p and q (flat indices)."""
    n = emb.n_points
    if not (0 <= p < n and 0 <= q < n):
        raise IndexError(f"point index out of range (kappa={n})")
    return float(np.linalg.norm(emb.coords[p] - emb.coords[q]))


def hbdm_embed(spec: SpectralResult, t: float) -> BaseEmbeddingCoordinates:
    """Per-fibre embedding: row j flattens the matrix
    [ lambda_l^{t/2} lambda_m^{t/2} <v_l[j], v_m[j]> ]_{l,m}."""
    if spec.block_offsets is None:
        raise ValueError("spectral result carries no block offsets")
    if t < 0:
        raise ValueError(f"diffusion time must be >= 0, got {t}")
    o = spec.block_offsets
    n_base = len(o) - 1
    w = _weights(spec.eigenvalues, t / 2.0, "paper_literal")
    m = spec.m
    rows = np.empty((n_base, m * m))
    for j in range(n_base):
        seg = spec.eigenvectors[o[j]: o[j + 1], :]  # (kappa_j, m)
        g = (seg * w[None, :]).T @ (seg * w[None, :])
        rows[j] = g.ravel()
    return BaseEmbeddingCoordinates(per_fibre=rows, t=t)


def hbdm_distance(emb: BaseEmbeddingCoordinates, i: int, j: int) -> float:
    """Euclidean distance between the fibre rows i and j."""
    n = emb.n_fibres
    if not (0 <= i < n and 0 <= j < n):
        raise IndexError(f"fibre index out of range (n_base={n})")
    return float(np.linalg.norm(emb.per_fibre[i] - emb.per_fibre[j]))
