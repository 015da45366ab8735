"""As-flat-as-possible sections: propagate one unit tangent to every fibre.

Starting from an anchor sample, each fibre contributes the sample whose
row in the normalized spectral embedding is closest to the anchor's row.
On the sphere the chosen vectors can be compared against exact geodesic
transport of the anchor vector, which quantifies how close the section is
to a parallel field.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import sphere
from .bundle import BundleSampleSet
from .embedding import EmbeddingCoordinates
from .tangent_pca import TangentFrame, lift_coefficients

__all__ = [
    "DiscreteSection",
    "transport_via_embedding",
    "extract_section",
    "section_angle_report",
]


@dataclass
class DiscreteSection:
    """One chosen sample index (and unit tangent) per fibre."""

    anchor: Tuple[int, int]            # (fibre j, sample s)
    choices: np.ndarray                # (n_base,) chosen sample index per fibre
    vectors: Optional[np.ndarray]      # (n_base, 3) unit tangents, when liftable

    def __post_init__(self):
        self.choices = np.asarray(self.choices, dtype=int)
        if self.vectors is not None:
            self.vectors = np.asarray(self.vectors, dtype=float)
        j, s = self.anchor
        if self.choices[j] != s:
            raise ValueError("anchor fibre must map to the anchor sample itself")


def transport_via_embedding(
    emb: EmbeddingCoordinates, anchor: Tuple[int, int], k: int
) -> int:
    """Index of the sample in fibre k embedded closest to the anchor sample.

    Requires row-normalized coordinates.  Ties resolve to the smallest index;
    the anchor's own fibre returns the anchor sample (distance zero).
    """
    if not emb.normalized:
        raise ValueError("embedding must be row-normalized first")
    j, s = anchor
    target = emb.coords[emb.row_index(j, s)]
    rows = emb.fibre_rows(k)
    if rows.shape[0] == 0:
        raise ValueError(f"fibre {k} has no samples")
    d2 = np.sum((rows - target[None, :]) ** 2, axis=1)
    return int(np.argmin(d2))  # argmin takes the first minimum: smallest index


def extract_section(
    emb: EmbeddingCoordinates,
    samples: BundleSampleSet,
    anchor: Tuple[int, int],
    frames: Optional[Sequence[TangentFrame]] = None,
) -> DiscreteSection:
    """Propagate the anchor sample to every fibre by embedding nearest-neighbor.

    In exact mode the chosen tangent vectors are taken directly from the
    samples; in coefficient mode they are lifted through the supplied frames
    (left unset otherwise).
    """
    n = samples.n_base
    j, s = anchor
    if not (0 <= j < n and 0 <= s < samples.fibre_sizes[j]):
        raise IndexError("anchor index out of range")
    choices = np.empty(n, dtype=int)
    for k in range(n):
        choices[k] = s if k == j else transport_via_embedding(emb, anchor, k)
    vectors = None
    if samples.kind == "exact":
        vectors = np.stack([samples.fibres[k][choices[k]] for k in range(n)])
    elif frames is not None:
        vectors = np.stack(
            [lift_coefficients(frames[k], samples.fibres[k][choices[k]]) for k in range(n)]
        )
    return DiscreteSection(anchor=anchor, choices=choices, vectors=vectors)


def section_angle_report(
    section: DiscreteSection, samples: BundleSampleSet
) -> Tuple[np.ndarray, np.ndarray, List[int]]:
    """Per fibre: base distance from the anchor and angle to exact transport.

    Returns (distances, angles, skipped) where angles[k] is the unsigned angle
    between the section's vector at fibre k and the geodesic parallel
    transport of the anchor vector to that fibre.  Fibres antipodal to the
    anchor (no unique geodesic) are skipped and their indices reported;
    the anchor's own entry is (0, 0).
    """
    if section.vectors is None:
        raise ValueError("section carries no ambient vectors to compare")
    j, _ = section.anchor
    base = samples.base_points
    anchor_base = base[j]
    anchor_vec = section.vectors[j]
    n = samples.n_base
    dists = np.full(n, np.nan)
    angles = np.full(n, np.nan)
    skipped: List[int] = []
    for k in range(n):
        if k == j:
            dists[k] = 0.0
            angles[k] = 0.0
            continue
        d = float(sphere.geodesic_distance(anchor_base, base[k]))
        if np.pi - d < 1e-8:
            skipped.append(k)
            continue
        moved = sphere.parallel_transport(anchor_base, base[k], anchor_vec)
        cosang = np.clip(np.dot(moved, section.vectors[k]), -1.0, 1.0)
        dists[k] = d
        angles[k] = float(np.arccos(cosang))
    keep = ~np.isnan(dists)
    return dists[keep], angles[keep], skipped
