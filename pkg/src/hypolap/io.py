"""Plain-text and binary persistence for every pipeline artifact.

All text formats are whitespace-separated rows with 17 significant digits,
so that write/read round-trips are exact for doubles.  The coordinate matrix
format is `n nnz` on the first line followed by one `row col value` triple
per line, sorted by (row, col) with 0-based indices; the binary twin stores
the same logical content in a .npz archive together with the block offsets.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse

from .bundle import BlockSparseMatrix, BundleSampleSet
from .embedding import BaseEmbeddingCoordinates, EmbeddingCoordinates
from .spectral import ClusterReport, SpectralResult
from .tangent_pca import TangentFrame

__all__ = [
    "save_points",
    "load_points",
    "save_bundle",
    "load_bundle",
    "save_frames",
    "load_frames",
    "save_transports",
    "load_transports",
    "save_matrix_text",
    "load_matrix_text",
    "save_matrix_npz",
    "load_matrix_npz",
    "save_spectrum_csv",
    "load_spectrum_csv",
    "save_cluster_json",
    "load_cluster_json",
    "save_hdm_csv",
    "save_hbdm_csv",
    "save_section",
    "save_degrees",
    "load_degrees",
]

FMT = "%.17g"

PathLike = Union[str, Path]


def _fmt_row(values: Sequence[float]) -> str:
    return " ".join(FMT % v for v in values)


def save_points(path: PathLike, points: np.ndarray) -> None:
    """Base point cloud, one `x y z` row per point."""
    points = np.asarray(points, dtype=float)
    with open(path, "w") as fh:
        for p in points:
            fh.write(_fmt_row(p) + "\n")


def load_points(path: PathLike) -> np.ndarray:
    data = np.loadtxt(path, ndmin=2)
    if data.size == 0:
        return np.zeros((0, 3))
    return data


def save_bundle(path: PathLike, samples: BundleSampleSet) -> None:
    """Fibre samples: rows `j x y z vx vy vz` (exact) or `j c1 ... cd` (coeff)."""
    with open(path, "w") as fh:
        for j, fibre in enumerate(samples.fibres):
            for row in fibre:
                if samples.kind == "exact":
                    vals = np.concatenate([samples.base_points[j], row])
                else:
                    vals = row
                fh.write(f"{j} " + _fmt_row(vals) + "\n")


def load_bundle(path: PathLike, base_points: np.ndarray, kind: str = "exact") -> BundleSampleSet:
    base_points = np.asarray(base_points, dtype=float)
    fibres: List[List[np.ndarray]] = [[] for _ in range(base_points.shape[0])]
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            j = int(parts[0])
            vals = np.array([float(x) for x in parts[1:]])
            fibres[j].append(vals[3:] if kind == "exact" else vals)
    width = 3 if kind == "exact" else (fibres[0][0].size if fibres and fibres[0] else 2)
    arrays = [
        np.array(f) if f else np.zeros((0, width))
        for f in fibres
    ]
    return BundleSampleSet(base_points=base_points, fibres=arrays, kind=kind)


def save_frames(path: PathLike, frames: Sequence[TangentFrame]) -> None:
    """Tangent frames, one row `j  b11 b21 b31  b12 b22 b32` (column-major)."""
    with open(path, "w") as fh:
        for fr in frames:
            fh.write(f"{fr.base_index} " + _fmt_row(fr.basis.T.ravel()) + "\n")


def load_frames(path: PathLike, ambient_dim: int = 3) -> List[TangentFrame]:
    frames = []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            j = int(parts[0])
            vals = np.array([float(x) for x in parts[1:]])
            basis = vals.reshape(-1, ambient_dim).T
            frames.append(TangentFrame(base_index=j, basis=basis))
    return frames


def save_transports(path: PathLike, transports: Dict[Tuple[int, int], np.ndarray]) -> None:
    """Edge transports, one row `i j o11 o12 o21 o22 ...` (row-major matrix)."""
    with open(path, "w") as fh:
        for (i, j), O in sorted(transports.items()):
            fh.write(f"{i} {j} " + _fmt_row(np.asarray(O).ravel()) + "\n")


def load_transports(path: PathLike) -> Dict[Tuple[int, int], np.ndarray]:
    out: Dict[Tuple[int, int], np.ndarray] = {}
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            i, j = int(parts[0]), int(parts[1])
            vals = np.array([float(x) for x in parts[2:]])
            d = int(round(np.sqrt(vals.size)))
            out[(i, j)] = vals.reshape(d, d)
    return out


def save_matrix_text(path: PathLike, W: BlockSparseMatrix) -> None:
    rows, cols, vals = W.entries()
    with open(path, "w") as fh:
        fh.write(f"{W.n} {len(vals)}\n")
        for r, c, v in zip(rows, cols, vals):
            fh.write(f"{r} {c} " + (FMT % v) + "\n")


def load_matrix_text(path: PathLike, block_offsets: np.ndarray) -> BlockSparseMatrix:
    with open(path) as fh:
        header = fh.readline().split()
        n, nnz = int(header[0]), int(header[1])
        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz)
        for k in range(nnz):
            parts = fh.readline().split()
            rows[k], cols[k], vals[k] = int(parts[0]), int(parts[1]), float(parts[2])
    m = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    return BlockSparseMatrix(matrix=m, block_offsets=np.asarray(block_offsets, dtype=int))


def save_matrix_npz(path: PathLike, W: BlockSparseMatrix) -> None:
    m = W.matrix
    np.savez(
        path,
        data=m.data,
        indices=m.indices,
        indptr=m.indptr,
        shape=np.array(m.shape),
        block_offsets=W.block_offsets,
    )


def load_matrix_npz(path: PathLike) -> BlockSparseMatrix:
    with np.load(path) as z:
        m = sparse.csr_matrix(
            (z["data"], z["indices"], z["indptr"]), shape=tuple(z["shape"])
        )
        offsets = z["block_offsets"]
    return BlockSparseMatrix(matrix=m, block_offsets=offsets)


def save_spectrum_csv(path: PathLike, spec: SpectralResult) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "eigenvalue", "residual"])
        for l, (lam, res) in enumerate(zip(spec.eigenvalues, spec.residuals)):
            writer.writerow([l, FMT % lam, FMT % res])


def load_spectrum_csv(path: PathLike) -> Tuple[np.ndarray, np.ndarray]:
    """Eigenvalues and residuals (eigenvectors are not persisted in CSV)."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 1], data[:, 2]


def save_cluster_json(path: PathLike, report: ClusterReport) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=2)
        fh.write("\n")


def load_cluster_json(path: PathLike) -> dict:
    with open(path) as fh:
        return json.load(fh)


def save_hdm_csv(path: PathLike, emb: EmbeddingCoordinates) -> None:
    """Per-sample embedding rows `j,s,coord_1,...` in block order."""
    if emb.block_offsets is None:
        raise ValueError("embedding carries no block offsets")
    offsets = emb.block_offsets
    ncols = emb.coords.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["j", "s"] + [f"coord_{k+1}" for k in range(ncols)])
        for j in range(len(offsets) - 1):
            for s in range(offsets[j + 1] - offsets[j]):
                row = emb.coords[offsets[j] + s]
                writer.writerow([j, s] + [FMT % v for v in row])


def save_hbdm_csv(path: PathLike, emb: BaseEmbeddingCoordinates) -> None:
    """Per-fibre embedding rows `j,entry_11,entry_12,...` (row-major matrix)."""
    m = int(round(np.sqrt(emb.per_fibre.shape[1])))
    header = ["j"] + [f"entry_{l+1}{k+1}" for l in range(m) for k in range(m)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for j, row in enumerate(emb.per_fibre):
            writer.writerow([j] + [FMT % v for v in row])


def save_section(
    path: PathLike,
    base_points: np.ndarray,
    vectors: np.ndarray,
    angle_errors: Optional[np.ndarray] = None,
) -> None:
    """Section rows `k base_x base_y base_z vx vy vz angle_error`."""
    n = base_points.shape[0]
    if angle_errors is None:
        angle_errors = np.full(n, np.nan)
    with open(path, "w") as fh:
        for k in range(n):
            fh.write(
                f"{k} "
                + _fmt_row(base_points[k])
                + " "
                + _fmt_row(vectors[k])
                + " "
                + (FMT % angle_errors[k])
                + "\n"
            )


def save_degrees(path: PathLike, degrees: np.ndarray) -> None:
    with open(path, "w") as fh:
        for d in degrees:
            fh.write((FMT % d) + "\n")


def load_degrees(path: PathLike) -> np.ndarray:
    return np.loadtxt(path, ndmin=1)
