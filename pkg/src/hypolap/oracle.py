"""Analytic and brute-force references for validating the discrete pipeline.

Provides the classical reference spectra/multiplicity patterns, a quadrature
discretization of the continuous diffusion operator on the unit tangent
bundle of S^2, the untruncated empirical operator at finite sample sizes,
and the order-of-accuracy check for the geodesic transport expansion.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from . import sphere
from .bundle import BundleSampleSet, KernelConfig

__all__ = [
    "AnalyticSpectrum",
    "UtmGrid",
    "reference_multiplicities",
    "sphere_spectrum",
    "liouville_volume",
    "quadrature_node_density",
    "quadrature_operator_apply",
    "empirical_operator_apply",
    "transport_taylor_residual",
    "loglog_slope",
]

LIOUVILLE_VOLUME = 8.0 * np.pi**2  # area(S^2) * circumference(fibre circle)

_MULTIPLICITIES = {
    "horizontal": [1, 6, 13],
    "total": [1, 9, 25],
    "base": [1, 3, 5],
}


def reference_multiplicities(regime: str) -> List[int]:
    """Leading eigenvalue multiplicities of the three bandwidth regimes.

    "horizontal" (fibre bandwidth << base bandwidth), "total" (balanced), and
    "base" (fibre bandwidth >> base bandwidth, spectrum of the base sphere).
    """
    try:
        return list(_MULTIPLICITIES[regime])
    except KeyError:
        raise ValueError(f"unknown regime {regime!r}") from None


@dataclass
class AnalyticSpectrum:
    """Closed-form eigenvalues with multiplicities, ascending."""

    entries: List[Tuple[float, int]]

    def __post_init__(self):
        vals = [e[0] for e in self.entries]
        if any(b < a for a, b in zip(vals, vals[1:])):
            raise ValueError("eigenvalues must be ascending")
        if any(e[1] < 1 for e in self.entries):
            raise ValueError("multiplicities must be >= 1")

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([e[0] for e in self.entries])

    @property
    def multiplicities(self) -> np.ndarray:
        return np.array([e[1] for e in self.entries], dtype=int)


def sphere_spectrum(l_max: int) -> AnalyticSpectrum:
    """Laplace-Beltrami spectrum of S^2: eigenvalue l(l+1), multiplicity 2l+1."""
    if l_max < 0:
        raise ValueError(f"l_max must be >= 0, got {l_max}")
    return AnalyticSpectrum([(float(l * (l + 1)), 2 * l + 1) for l in range(l_max + 1)])


@dataclass
class UtmGrid:
    """Product quadrature grid on the unit tangent bundle of S^2.

    Nodes are midpoints in colatitude theta, longitude phi, and fibre angle
    psi (half-cell offsets keep the poles out of the node set).  Fibre frames
    at the nodes follow the deterministic convention of sphere.fibre_frame,
    so psi is the angle against (d/dtheta, unit d/dphi).  theta_rule "cell"
    (default) uses the exact mass of sin(theta) over each cell, making the
    total quadrature volume exactly 8 pi^2; "midpoint" uses sin(theta_mid) *
    dtheta, which converges to it at second order.
    """

    thetas: np.ndarray
    theta_weights: np.ndarray
    phis: np.ndarray
    psis: np.ndarray
    theta_rule: str = "cell"

    @classmethod
    def build(cls, resolution: Tuple[int, int, int], theta_rule: str = "cell") -> "UtmGrid":
        nt, nph, nps = (int(r) for r in resolution)
        if min(nt, nph, nps) < 2:
            raise ValueError(f"grid resolution too small: {resolution}")
        edges = np.linspace(0.0, np.pi, nt + 1)
        thetas = 0.5 * (edges[:-1] + edges[1:])
        if theta_rule == "cell":
            wt = np.cos(edges[:-1]) - np.cos(edges[1:])
        elif theta_rule == "midpoint":
            wt = np.sin(thetas) * (np.pi / nt)
        else:
            raise ValueError(f"unknown theta rule {theta_rule!r}")
        phis = (np.arange(nph) + 0.5) * (2.0 * np.pi / nph)
        psis = (np.arange(nps) + 0.5) * (2.0 * np.pi / nps)
        return cls(thetas=thetas, theta_weights=wt, phis=phis, psis=psis, theta_rule=theta_rule)

    @property
    def resolution(self) -> Tuple[int, int, int]:
        return (self.thetas.size, self.phis.size, self.psis.size)

    @property
    def n_nodes(self) -> int:
        nt, nph, nps = self.resolution
        return nt * nph * nps

    def base_nodes(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Flattened base points (n_base, 3), their frames t1, t2, and weights."""
        TH, PH = np.meshgrid(self.thetas, self.phis, indexing="ij")
        th, ph = TH.ravel(), PH.ravel()
        st, ct = np.sin(th), np.cos(th)
        pts = np.stack([st * np.cos(ph), st * np.sin(ph), ct], axis=1)
        t1, t2 = sphere.fibre_frame(pts)
        wb = (self.theta_weights[:, None] * np.full(self.phis.size, 2.0 * np.pi / self.phis.size)).ravel()
        return pts, t1, t2, wb


def liouville_volume(grid: UtmGrid) -> float:
    """Total quadrature mass of the grid (integral of the constant 1)."""
    _, _, _, wb = grid.base_nodes()
    return float(wb.sum() * grid.psis.size * (2.0 * np.pi / grid.psis.size))


def _check_resolution(cfg: KernelConfig, grid: UtmGrid, min_nodes: int = 8) -> None:
    """Bandwidths must either span >= min_nodes grid cells or exceed the domain."""
    nt, nph, nps = grid.resolution
    dtheta = np.pi / nt
    dphi = 2.0 * np.pi / nph
    dpsi = 2.0 * np.pi / nps
    flat = np.pi**2
    if cfg.eps < flat:
        cell = max(dtheta, dphi)
        if np.sqrt(cfg.eps) < min_nodes * cell:
            need = int(np.ceil(min_nodes * np.pi / np.sqrt(cfg.eps)))
            raise ValueError(
                f"base bandwidth eps={cfg.eps:g} under-resolved: needs about "
                f"{need} nodes in theta (and 2x in phi), grid has {nt}"
            )
    if cfg.delta < flat:
        if np.sqrt(cfg.delta) < min_nodes * dpsi:
            need = int(np.ceil(min_nodes * 2.0 * np.pi / np.sqrt(cfg.delta)))
            raise ValueError(
                f"fibre bandwidth delta={cfg.delta:g} under-resolved: needs about "
                f"{need} nodes in psi, grid has {nps}"
            )


def _transport_to_many(x: np.ndarray, ys: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Parallel transport of one tangent v at x to many base points ys.

    Rows of ys coincident with x get v unchanged; exactly antipodal rows have
    no unique geodesic and also return v, which only ever matters for kernels
    wide enough to reach the antipode (a measure-zero node set).
    """
    axes = np.cross(np.broadcast_to(x, ys.shape), ys)
    s = np.linalg.norm(axes, axis=1)
    c = np.clip(ys @ x, -1.0, 1.0)
    out = np.broadcast_to(v, ys.shape).copy()
    ok = s > 1e-13
    k = axes[ok] / s[ok][:, None]
    vv = np.broadcast_to(v, k.shape)
    out[ok] = (
        vv * c[ok][:, None]
        + np.cross(k, vv) * s[ok][:, None]
        + k * ((k * vv).sum(axis=1) * (1.0 - c[ok]))[:, None]
    )
    return out


def _operator_at(
    x: np.ndarray,
    v: np.ndarray,
    f: Optional[Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]],
    cfg: KernelConfig,
    pts: np.ndarray,
    t1: np.ndarray,
    t2: np.ndarray,
    wb: np.ndarray,
    th: np.ndarray,
    ph: np.ndarray,
    psis: np.ndarray,
    alpha: float,
    theta_density: Optional[np.ndarray],
    theta_index: np.ndarray,
) -> Tuple[float, float]:
    """Numerator and denominator of the quadrature operator at one point."""
    if cfg.base_metric == "euclidean":
        b2 = np.sum((pts - x[None, :]) ** 2, axis=1)
    else:
        b2 = sphere.geodesic_distance(pts, x[None, :]) ** 2
    u1 = b2 / cfg.eps
    if cfg.family == "gaussian_product":
        kb = np.exp(-u1) * wb
        sel = kb > kb.max() * 1e-16
    else:
        kb = np.where(u1 <= 1.0, 1.0 - u1, 0.0) * wb
        sel = kb > 0
    idx = np.nonzero(sel)[0]
    moved = _transport_to_many(x, pts[idx], v)
    ang = np.arctan2((moved * t2[idx]).sum(1), (moved * t1[idx]).sum(1))
    gap = np.abs(((psis[None, :] - ang[:, None]) + np.pi) % (2.0 * np.pi) - np.pi)
    if cfg.fibre_metric == "chordal":
        f2 = (2.0 * np.sin(gap / 2.0)) ** 2
    else:
        f2 = gap**2
    u2 = f2 / cfg.delta
    wpsi = 2.0 * np.pi / psis.size
    if cfg.family == "gaussian_product":
        kf = np.exp(-u2) * wpsi
    else:
        kf = np.where(u2 <= 1.0, 1.0 - u2, 0.0) * wpsi
    weights = kb[idx][:, None] * kf
    if alpha != 0.0:
        weights = weights * theta_density[theta_index[idx]][:, None] ** (-alpha)
    den = float(weights.sum())
    if f is None:
        return den, den
    fv = f(th[idx][:, None], ph[idx][:, None], psis[None, :])
    num = float((weights * fv).sum())
    return num, den


def quadrature_node_density(cfg: KernelConfig, grid: UtmGrid) -> np.ndarray:
    """Kernel quadrature density at the grid nodes, one value per theta ring.

    With the uniform density, the node density is invariant under the grid's
    discrete rotations in phi and psi, so it only varies with theta.
    """
    pts, t1, t2, wb = grid.base_nodes()
    nt, nph, _ = grid.resolution
    th = np.repeat(grid.thetas, nph)
    ph = np.tile(grid.phis, nt)
    tindex = np.repeat(np.arange(nt), nph)
    out = np.empty(nt)
    for i, theta in enumerate(grid.thetas):
        x = np.array([np.sin(theta) * np.cos(grid.phis[0]), np.sin(theta) * np.sin(grid.phis[0]), np.cos(theta)])
        xt1, xt2 = sphere.fibre_frame(x)
        v = np.cos(grid.psis[0]) * xt1 + np.sin(grid.psis[0]) * xt2
        _, den = _operator_at(
            x, v, None, cfg, pts, t1, t2, wb, th, ph, grid.psis, 0.0, None, tindex
        )
        out[i] = den
    return out


def quadrature_operator_apply(
    f: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray],
    cfg: KernelConfig,
    grid: UtmGrid,
    eval_angles: np.ndarray,
    alpha: Optional[float] = None,
    theta_density: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Quadrature evaluation of the continuous diffusion operator at given points.

    f maps broadcastable (theta, phi, psi) arrays to values; eval_angles is an
    (n, 3) array of (theta, phi, psi) triples.  The sampling density is
    uniform, so alpha-normalization (alpha taken from cfg unless overridden)
    only reweights nodes by their kernel density, supplied per theta ring by
    `theta_density` or computed on demand.  Raises when a bandwidth is neither
    resolved by >= 8 cells nor wide enough to be flat across the domain.
    """
    _check_resolution(cfg, grid)
    alpha = cfg.alpha if alpha is None else float(alpha)
    if alpha != 0.0 and theta_density is None:
        theta_density = quadrature_node_density(cfg, grid)
    pts, t1, t2, wb = grid.base_nodes()
    nt, nph, _ = grid.resolution
    th = np.repeat(grid.thetas, nph)
    ph = np.tile(grid.phis, nt)
    tindex = np.repeat(np.arange(nt), nph)
    eval_angles = np.atleast_2d(np.asarray(eval_angles, dtype=float))
    out = np.empty(eval_angles.shape[0])
    for i, (theta, phi, psi) in enumerate(eval_angles):
        x = np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])
        xt1, xt2 = sphere.fibre_frame(x)
        v = np.cos(psi) * xt1 + np.sin(psi) * xt2
        num, den = _operator_at(
            x, v, f, cfg, pts, t1, t2, wb, th, ph, grid.psis, alpha, theta_density, tindex
        )
        if den == 0:
            raise ValueError("kernel mass vanished at an evaluation point; bandwidths too small")
        out[i] = num / den
    return out


def _kernel_row(samples: BundleSampleSet, cfg: KernelConfig, i: int, r: int) -> np.ndarray:
    """Untruncated kernel weights from sample (i, r) to every other sample.

    Flat (block-offset) order; the block of fibre i itself is zero.
    """
    base = samples.base_points
    offsets = samples.block_offsets
    x = base[i]
    v = samples.fibres[i][r]
    if cfg.base_metric == "euclidean":
        b2 = np.sum((base - x[None, :]) ** 2, axis=1)
    else:
        b2 = sphere.geodesic_distance(base, x[None, :]) ** 2
    moved = _transport_to_many(x, base, v)
    row = np.zeros(samples.total)
    for j in range(samples.n_base):
        if j == i:
            continue
        u1 = b2[j] / cfg.eps
        if cfg.family == "gaussian_product":
            kb = np.exp(-u1)
        else:
            kb = max(1.0 - u1, 0.0)
        if kb == 0.0:
            continue
        targets = samples.fibres[j]
        if cfg.fibre_metric == "chordal":
            f2 = np.sum((targets - moved[j][None, :]) ** 2, axis=1)
        else:
            f2 = np.arccos(np.clip(targets @ moved[j], -1.0, 1.0)) ** 2
        u2 = f2 / cfg.delta
        if cfg.family == "gaussian_product":
            kf = np.exp(-u2)
        else:
            kf = np.maximum(1.0 - u2, 0.0)
        row[offsets[j]: offsets[j + 1]] = kb * kf
    return row


def empirical_operator_apply(
    samples: BundleSampleSet,
    f_values: np.ndarray,
    cfg: KernelConfig,
    probes: Sequence[Tuple[int, int]],
    alpha: float = 0.0,
) -> np.ndarray:
    """Untruncated discrete diffusion operator at selected sample points.

    f_values holds f at every bundle sample in flat (block-offset) order.
    Off-fibre pairs all contribute (no nearest-neighbor masking); the fibre
    residual uses exact parallel transport, so samples must be in exact mode.
    alpha > 0 reweights by empirical kernel densities, which costs a full
    pass over all sample pairs.
    """
    if samples.kind != "exact":
        raise ValueError("empirical operator needs exact-mode samples")
    f_values = np.asarray(f_values, dtype=float)
    if f_values.shape[0] != samples.total:
        raise ValueError("f_values must align with the flattened sample set")
    dens_alpha = None
    if alpha != 0.0:
        dens_alpha = _empirical_density(samples, cfg) ** (-alpha)
    out = np.empty(len(probes))
    for p, (i, r) in enumerate(probes):
        w = _kernel_row(samples, cfg, i, r)
        if dens_alpha is not None:
            w = w * dens_alpha  # the probe's own density factor cancels in the ratio
        den = float(w.sum())
        if den == 0:
            raise ValueError(f"probe ({i},{r}) has zero kernel mass; bandwidths too small")
        out[p] = float(w @ f_values) / den
    return out


def _empirical_density(samples: BundleSampleSet, cfg: KernelConfig) -> np.ndarray:
    """Kernel density at every sample: row sums of the untruncated kernel."""
    dens = np.empty(samples.total)
    flat = 0
    for j in range(samples.n_base):
        for s in range(samples.fibre_sizes[j]):
            dens[flat] = _kernel_row(samples, cfg, j, s).sum()
            flat += 1
    return dens


def transport_taylor_residual(
    x: np.ndarray,
    theta: np.ndarray,
    v: np.ndarray,
    t_values: Sequence[float],
    fd_step: float = 1e-6,
) -> np.ndarray:
    """Deviation of exact transport coefficients from their second-order expansion.

    The vector v is transported from x along the geodesic with unit direction
    theta for each arclength t.  Exact coefficients are extracted in the
    geodesic normal coordinate frame at the endpoint (obtained by central
    differences of the exponential map); the expansion applies the curvature
    correction of the unit sphere, contracted from the constant-curvature
    tensor R_abcd = delta_ac delta_bd - delta_ad delta_bc.  Returns one
    residual norm per t.
    """
    x = np.asarray(x, dtype=float)
    theta = np.asarray(theta, dtype=float)
    v = np.asarray(v, dtype=float)
    sphere.check_unit_point(x)
    sphere.check_unit_tangent(x, theta)
    sphere.check_unit_tangent(x, v, tol=1e-9)
    t_values = np.asarray(t_values, dtype=float)
    if np.any(t_values <= 0) or np.any(t_values > 0.5):
        raise ValueError("t values must lie in (0, 0.5]")

    n = np.cross(x, theta)
    E = np.stack([theta, n], axis=1)  # orthonormal tangent basis at x
    vc = E.T @ v
    tc = np.array([1.0, 0.0])  # theta in this basis

    d = 2
    eye = np.eye(d)
    R = np.einsum("ac,bd->abcd", eye, eye) - np.einsum("ad,bc->abcd", eye, eye)
    corr = np.einsum("k,s,l,lskj->j", tc, tc, vc, R) + np.einsum("k,s,l,kslj->j", tc, tc, vc, R)

    res = np.empty(t_values.size)
    for i, t in enumerate(t_values):
        y = sphere.exp_map(x, t * theta)
        exact_vec = sphere.parallel_transport(x, y, v)
        F = np.empty((3, d))
        s0 = np.array([t, 0.0])
        for k in range(d):
            sp = s0.copy()
            sp[k] += fd_step
            sm = s0.copy()
            sm[k] -= fd_step
            F[:, k] = (sphere.exp_map(x, E @ sp) - sphere.exp_map(x, E @ sm)) / (2 * fd_step)
        exact_coeff = np.linalg.lstsq(F, exact_vec, rcond=None)[0]
        approx_coeff = vc - (t**2 / 6.0) * corr
        res[i] = float(np.linalg.norm(exact_coeff - approx_coeff))
    return res


def loglog_slope(t_values: Sequence[float], residuals: Sequence[float]) -> float:
    """Least-squares slope of log(residual) against log(t)."""
    t = np.asarray(t_values, dtype=float)
    r = np.asarray(residuals, dtype=float)
    if np.any(r <= 0):
        raise ValueError("residuals must be positive to fit a log-log slope")
    return float(np.polyfit(np.log(t), np.log(r), 1)[0])


def write_report(
    path,
    regime: str,
    grid: UtmGrid,
    slopes: Optional[dict] = None,
    r_squared: Optional[dict] = None,
) -> dict:
    """Persist an oracle validation summary as JSON; returns the dict written."""
    import json

    report = {
        "regime": regime,
        "grid_resolution": list(grid.resolution),
        "theta_rule": grid.theta_rule,
        "slopes": slopes or {},
        "r_squared": r_squared or {},
    }
    with open(path, "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    return report
