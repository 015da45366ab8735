"""Smallest eigenpairs of symmetric Laplacians and eigenvalue cluster analysis."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

__all__ = [
    "SpectralResult",
    "ClusterReport",
    "SolverError",
    "smallest_eigenpairs",
    "cluster_eigenvalues",
    "normalized_cluster_ratios",
]


class SolverError(RuntimeError):
    """Eigensolver failed to reach the requested residual tolerance."""

    def __init__(self, message: str, best_residual: float):
        super().__init__(message)
        self.best_residual = best_residual


@dataclass
class SpectralResult:
    """Ascending eigenvalues with orthonormal eigenvectors and their residuals."""

    eigenvalues: np.ndarray          # (m,)
    eigenvectors: np.ndarray         # (kappa, m), columns orthonormal
    residuals: np.ndarray            # (m,) values of ||L v - lambda v||
    block_offsets: Optional[np.ndarray] = None

    def __post_init__(self):
        self.eigenvalues = np.asarray(self.eigenvalues, dtype=float)
        self.eigenvectors = np.asarray(self.eigenvectors, dtype=float)
        self.residuals = np.asarray(self.residuals, dtype=float)
        if self.block_offsets is not None:
            self.block_offsets = np.asarray(self.block_offsets, dtype=int)
        if np.any(np.diff(self.eigenvalues) < 0):
            raise ValueError("eigenvalues must be non-decreasing")
        G = self.eigenvectors.T @ self.eigenvectors
        if np.max(np.abs(G - np.eye(G.shape[0]))) > 1e-8:
            raise ValueError("eigenvectors are not orthonormal to 1e-8")

    @property
    def m(self) -> int:
        return self.eigenvalues.size

    def segment(self, l: int, j: int) -> np.ndarray:
        """The j-th fibre segment of eigenvector l."""
        if self.block_offsets is None:
            raise ValueError("result carries no block offsets")
        o = self.block_offsets
        return self.eigenvectors[o[j]: o[j + 1], l]


def _gershgorin_upper(L: sparse.csr_matrix) -> float:
    a = abs(L).tocsr()
    row_abs = np.asarray(a.sum(axis=1)).ravel()
    diag = L.diagonal()
    return float(np.max(diag + (row_abs - np.abs(diag)))) if L.shape[0] else 0.0


def smallest_eigenpairs(
    L: sparse.spmatrix | np.ndarray,
    m: int,
    tol: float = 1e-8,
    seed: int = 0,
    block_offsets: Optional[np.ndarray] = None,
    dense_cutoff: int = 3000,
) -> SpectralResult:
    """The m smallest eigenpairs of a symmetric operator L.

    Small problems (and m close to kappa) are solved densely.  Larger ones use
    implicitly restarted Lanczos on c*I - L, where c is a Gershgorin upper
    bound, so that the smallest eigenvalues of L become the fastest-converging
    extremal ones; the start vector is derived from `seed`, making repeated
    runs bit-comparable.  Residuals ||L v - lambda v|| are verified against
    tol * max(1, c); failures raise SolverError with the best residual.
    """
    L = sparse.csr_matrix(L)
    kappa = L.shape[0]
    if not 1 <= m <= kappa:
        raise ValueError(f"m must be in [1, {kappa}], got {m}")
    scale = max(1.0, _gershgorin_upper(L))

    if kappa <= dense_cutoff or m > kappa - 2:
        dense = L.toarray()
        vals, vecs = np.linalg.eigh((dense + dense.T) * 0.5)
        vals, vecs = vals[:m], vecs[:, :m]
    else:
        c = _gershgorin_upper(L)
        A = (sparse.identity(kappa, format="csr") * c - L).tocsr()
        v0 = np.random.default_rng(seed).standard_normal(kappa)
        try:
            mu, vecs = eigsh(A, k=m, which="LA", v0=v0, tol=tol / 100.0)
        except ArpackNoConvergence as exc:
            got = np.asarray(exc.eigenvalues)
            best = float("inf")
            if got.size and exc.eigenvectors is not None and exc.eigenvectors.size:
                R = L @ exc.eigenvectors - exc.eigenvectors * (c - got)[None, :]
                best = float(np.linalg.norm(R, axis=0).min())
            raise SolverError(
                f"Lanczos did not converge to {m} eigenpairs (got {got.size})", best
            ) from exc
        vals = c - mu
        order = np.argsort(vals, kind="stable")
        vals, vecs = vals[order], vecs[:, order]

    residuals = np.linalg.norm(L @ vecs - vecs * vals[None, :], axis=0)
    limit = tol * scale
    if residuals.size and residuals.max() > limit:
        raise SolverError(
            f"eigenpair residual {residuals.max():.3e} exceeds tolerance {limit:.3e}",
            float(residuals.max()),
        )
    return SpectralResult(
        eigenvalues=vals,
        eigenvectors=vecs,
        residuals=residuals,
        block_offsets=block_offsets,
    )


@dataclass
class ClusterReport:
    """Eigenvalue clusters detected by relative gaps.

    cluster_bounds are half-open index ranges [lo, hi) into the sorted value
    list; multiplicities are the cluster sizes; means the cluster averages.
    ratios normalizes the means past the leading (zero) cluster by the first
    of them, so it leads with 1 (empty when fewer than two clusters exist).
    """

    cluster_bounds: List[Tuple[int, int]] = field(default_factory=list)
    multiplicities: List[int] = field(default_factory=list)
    means: List[float] = field(default_factory=list)
    rel_gap: float = 0.0

    @property
    def n_clusters(self) -> int:
        return len(self.multiplicities)

    @property
    def ratios(self) -> List[float]:
        if self.n_clusters < 2:
            return []
        ref = self.means[1]
        return [m / ref for m in self.means[1:]]

    def to_dict(self) -> dict:
        return {
            "cluster_bounds": [list(b) for b in self.cluster_bounds],
            "multiplicities": list(self.multiplicities),
            "means": list(self.means),
            "ratios": list(self.ratios),
            "rel_gap": self.rel_gap,
        }


def cluster_eigenvalues(values: np.ndarray, rel_gap: float = 0.2) -> ClusterReport:
    """Group an ascending eigenvalue list into clusters separated by relative gaps.

    A new cluster starts at index l when
    values[l] - values[l-1] > rel_gap * max(values[l-1], floor),
    with floor = max(values) * 1e-6 guarding the near-zero head of the
    spectrum.  Empty input yields an empty report.
    """
    values = np.asarray(values, dtype=float)
    if rel_gap <= 0:
        raise ValueError(f"rel_gap must be > 0, got {rel_gap}")
    if np.any(np.diff(values) < 0):
        raise ValueError("values must be ascending")
    report = ClusterReport(rel_gap=rel_gap)
    n = values.size
    if n == 0:
        return report
    floor = float(values.max()) * 1e-6
    start = 0
    for l in range(1, n):
        if values[l] - values[l - 1] > rel_gap * max(values[l - 1], floor):
            report.cluster_bounds.append((start, l))
            start = l
    report.cluster_bounds.append((start, n))
    for lo, hi in report.cluster_bounds:
        report.multiplicities.append(hi - lo)
        report.means.append(float(values[lo:hi].mean()))
    return report


def normalized_cluster_ratios(report: ClusterReport) -> np.ndarray:
    """Cluster means divided by the first nonzero cluster mean; leads with 1."""
    if report.n_clusters < 2:
        raise ValueError("need the zero cluster plus at least one more to form ratios")
    return np.asarray(report.ratios, dtype=float)
