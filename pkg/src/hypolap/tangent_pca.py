"""Tangent-plane estimation from a bare point cloud.

Frames come from weighted local PCA: around each point, collect the k nearest
neighbors, weight the centered differences by a square-rooted kernel of the
distance over the scale sqrt(eps_pca), and keep the leading left singular
vectors.  Transports between neighboring frames are estimated by orthogonal
Procrustes alignment of the two bases.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from . import sphere

__all__ = [
    "PcaConfig",
    "TangentFrame",
    "TransportEstimate",
    "pca_weight",
    "local_pca_frame",
    "local_pca_frames",
    "estimate_dimension",
    "procrustes_transport",
    "lift_coefficients",
    "transport_estimation_error",
]


def _epanechnikov(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return np.where(u <= 1.0, 1.0 - u**2, 0.0)


def _gaussian5(u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    return np.where(u <= 1.0, np.exp(-5.0 * u**2), 0.0)


_WEIGHT_KERNELS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "epanechnikov": _epanechnikov,
    "gaussian5": _gaussian5,
}


def pca_weight(u: np.ndarray, kind: str = "epanechnikov") -> np.ndarray:
    """Weight kernel K(u) on [0, 1] applied to distance / sqrt(eps_pca)."""
    try:
        return _WEIGHT_KERNELS[kind](u)
    except KeyError:
        raise ValueError(f"unknown weight kernel {kind!r}") from None


@dataclass
class PcaConfig:
    """Parameters of the local PCA frame estimator.

    eps_pca is a squared-length scale: weights vanish outside radius
    sqrt(eps_pca).  Neighbor candidates are the k_neighbors nearest points
    intersected with that radius.  target_dim fixes the frame dimension;
    when None it is estimated from the singular value decay.
    """

    eps_pca: float
    k_neighbors: int
    weight_kernel: str = "epanechnikov"
    target_dim: Optional[int] = None
    gap_threshold: float = 0.5

    def __post_init__(self):
        if self.eps_pca <= 0:
            raise ValueError(f"eps_pca must be > 0, got {self.eps_pca}")
        if self.k_neighbors < 1:
            raise ValueError(f"k_neighbors must be >= 1, got {self.k_neighbors}")
        if self.weight_kernel not in _WEIGHT_KERNELS:
            raise ValueError(f"unknown weight kernel {self.weight_kernel!r}")


@dataclass
class TangentFrame:
    """Orthonormal basis of the estimated tangent plane at one point."""

    base_index: int
    basis: np.ndarray  # (D, d), orthonormal columns

    def __post_init__(self):
        self.basis = np.asarray(self.basis, dtype=float)
        B = self.basis
        if np.max(np.abs(B.T @ B - np.eye(B.shape[1]))) > 1e-10:
            raise ValueError("frame columns are not orthonormal")

    @property
    def dim(self) -> int:
        return self.basis.shape[1]


@dataclass
class TransportEstimate:
    """Orthogonal map of tangent coefficients from one frame to another."""

    from_index: int
    to_index: int
    matrix: np.ndarray  # (d, d) orthogonal

    def __post_init__(self):
        self.matrix = np.asarray(self.matrix, dtype=float)
        O = self.matrix
        if np.max(np.abs(O.T @ O - np.eye(O.shape[1]))) > 1e-10:
            raise ValueError("transport matrix is not orthogonal")

    @property
    def determinant(self) -> float:
        """Orientation diagnostic; -1 indicates a reflection slipped in."""
        return float(np.linalg.det(self.matrix))


def _pca_svd(points: np.ndarray, j: int, cfg: PcaConfig, tree: Optional[cKDTree] = None):
    """Weighted local SVD at point j; returns (U, singular_values).

    Candidates are the k nearest neighbors truncated to radius sqrt(eps_pca).
    Points in sampling voids, where that ball holds fewer neighbors than the
    frame dimension, fall back to a plain SVD of the nearest few neighbors
    from the k-neighbor list.
    """
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    k = min(cfg.k_neighbors, n - 1)
    if k < 1:
        raise ValueError("need at least one neighbor for local PCA")
    if tree is None:
        tree = cKDTree(points)
    dist, idx = tree.query(points[j], k=k + 1)
    dist, idx = dist[1:], idx[1:]  # drop the point itself
    radius = np.sqrt(cfg.eps_pca)
    needed = cfg.target_dim if cfg.target_dim is not None else 2
    keep = dist <= radius
    if np.count_nonzero(keep) >= needed:
        dist, idx = dist[keep], idx[keep]
        w = np.sqrt(pca_weight(dist / radius, cfg.weight_kernel))
        if np.all(w == 0):
            raise ValueError(f"all PCA weights vanish at point {j}")
    else:
        m = min(max(2 * needed, 4), k)
        if m < needed:
            raise ValueError(
                f"point {j}: only {m} neighbors available for dimension {needed}"
            )
        dist, idx = dist[:m], idx[:m]
        w = np.ones(m)
    X = (points[idx] - points[j]).T  # (D, k)
    U, s, _ = np.linalg.svd(X * w[None, :], full_matrices=False)
    return U, s


def local_pca_frame(
    points: np.ndarray,
    j: int,
    cfg: PcaConfig,
    tree: Optional[cKDTree] = None,
) -> TangentFrame:
    """Estimate the tangent frame at points[j] by weighted local PCA.

    The basis consists of the first d left singular vectors of the weighted,
    centered neighbor matrix, with d = cfg.target_dim or estimated from the
    singular value gaps.  Raises ValueError when fewer than d usable
    neighbors exist.
    """
    U, s = _pca_svd(points, j, cfg, tree)
    if cfg.target_dim is not None:
        d = int(cfg.target_dim)
    else:
        d = estimate_dimension([s], gap_threshold=cfg.gap_threshold)
    usable = int(np.sum(s > 0))
    if usable < d:
        raise ValueError(f"point {j}: only {usable} usable neighbors for dimension {d}")
    return TangentFrame(base_index=j, basis=U[:, :d])


def local_pca_frames(points: np.ndarray, cfg: PcaConfig) -> list[TangentFrame]:
    """Frames at every point.  When target_dim is None, the dimension is
    estimated once from the median gap rule over all points and then shared."""
    points = np.asarray(points, dtype=float)
    tree = cKDTree(points)
    if cfg.target_dim is None:
        svals = [_pca_svd(points, j, cfg, tree)[1] for j in range(points.shape[0])]
        d = estimate_dimension(svals, gap_threshold=cfg.gap_threshold)
        cfg = PcaConfig(cfg.eps_pca, cfg.k_neighbors, cfg.weight_kernel, d, cfg.gap_threshold)
    return [local_pca_frame(points, j, cfg, tree) for j in range(points.shape[0])]


def estimate_dimension(singular_values: Sequence[np.ndarray], gap_threshold: float = 0.5) -> int:
    """Median over points of the smallest d with a relative singular-value gap.

    Per point the local dimension is the smallest d such that
    (sigma_d - sigma_{d+1}) / sigma_1 > gap_threshold (sigma_{k+1} := 0 past
    the end).  Raises ValueError if all singular values vanish at some point.
    """
    dims = []
    for s in singular_values:
        s = np.asarray(s, dtype=float)
        if s.size == 0 or s[0] <= 0:
            raise ValueError("all singular values are zero at some point")
        ext = np.concatenate([s, [0.0]])
        gaps = (ext[:-1] - ext[1:]) / s[0]
        hit = np.nonzero(gaps > gap_threshold)[0]
        dims.append(int(hit[0]) + 1 if hit.size else s.size)
    return int(np.median(dims))


def procrustes_transport(frame_from: TangentFrame, frame_to: TangentFrame) -> TransportEstimate:
    """Orthogonal Procrustes alignment taking coefficients in frame_from to frame_to.

    The matrix is U V^T from the SVD of B_to^T B_from, the closest orthogonal
    matrix to that product.  Raises ValueError when the product is rank
    deficient (alignment ambiguous) or the frame dimensions differ.
    """
    if frame_from.dim != frame_to.dim:
        raise ValueError("frames have different dimensions")
    M = frame_to.basis.T @ frame_from.basis
    U, s, Vt = np.linalg.svd(M)
    if s[-1] < 1e-12:
        raise ValueError(
            f"ambiguous alignment between frames {frame_from.base_index} and "
            f"{frame_to.base_index}: smallest singular value {s[-1]:.3e}"
        )
    return TransportEstimate(
        from_index=frame_from.base_index,
        to_index=frame_to.base_index,
        matrix=U @ Vt,
    )


def lift_coefficients(frame: TangentFrame, c: np.ndarray) -> np.ndarray:
    """Ambient vector B @ c of the coefficient vector c; an isometry."""
    c = np.asarray(c, dtype=float)
    if c.shape[-1] != frame.dim:
        raise ValueError(f"coefficient dimension {c.shape[-1]} != frame dimension {frame.dim}")
    return c @ frame.basis.T


def transport_estimation_error(
    frame_from: TangentFrame,
    frame_to: TangentFrame,
    estimate: TransportEstimate,
    base_from: np.ndarray,
    base_to: np.ndarray,
    n_test: int = 16,
) -> float:
    """Worst-case deviation of the estimated transport from the exact one.

    Evaluates max over unit test coefficients c of
    || B_to O c  -  P(B_from c) ||, where P is the exact sphere transport
    between the two base points.  The test set is n_test equally spaced unit
    vectors on the coefficient circle/sphere plus the canonical basis.
    """
    d = frame_from.dim
    if d == 2:
        ang = 2.0 * np.pi * np.arange(n_test) / n_test
        cs = np.stack([np.cos(ang), np.sin(ang)], axis=1)
    else:
        rng = np.random.default_rng(0)
        cs = rng.standard_normal((n_test, d))
        cs /= np.linalg.norm(cs, axis=1, keepdims=True)
    cs = np.vstack([cs, np.eye(d)])
    base_from = np.asarray(base_from, dtype=float)
    base_to = np.asarray(base_to, dtype=float)
    coincident = np.linalg.norm(np.cross(base_from, base_to)) < 1e-12
    worst = 0.0
    for c in cs:
        lifted = lift_coefficients(frame_from, c)
        exact = lifted if coincident else sphere.parallel_transport(base_from, base_to, lifted)
        approx = lift_coefficients(frame_to, estimate.matrix @ c)
        worst = max(worst, float(np.linalg.norm(approx - exact)))
    return worst
