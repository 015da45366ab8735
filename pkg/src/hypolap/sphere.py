"""Exact geometry of the unit sphere S^2 and its unit tangent bundle.

Points live on S^2 as unit vectors in R^3; unit tangents are unit vectors
orthogonal to their base point.  Parallel transport along the unique geodesic
between two (non-antipodal) points is the rotation about their cross-product
axis, which is exact on the sphere.  All sampling is driven by
``numpy.random.Generator`` so that a fixed seed reproduces results
byte-for-byte.
"""
from __future__ import annotations

from typing import Tuple, Union

import numpy as np

__all__ = [
    "as_rng",
    "sample_sphere_uniform",
    "fibre_frame",
    "sample_fibre_circle",
    "geodesic_distance",
    "exp_map",
    "log_map",
    "parallel_transport",
    "spherical_angles",
    "tangent_angle",
    "tangent_from_angle",
    "check_unit_point",
    "check_unit_tangent",
]

UNIT_TOL = 1e-12

RngLike = Union[int, np.integer, np.random.Generator, None]


def as_rng(seed: RngLike) -> np.random.Generator:
    """Coerce a 64-bit seed (or an existing Generator) to a Generator."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def check_unit_point(p: np.ndarray, tol: float = UNIT_TOL) -> None:
    """Raise ValueError unless all rows of p are unit vectors."""
    p = np.atleast_2d(np.asarray(p, dtype=float))
    err = np.abs(np.linalg.norm(p, axis=-1) - 1.0)
    if np.any(err > tol):
        raise ValueError(f"point not on the unit sphere: |norm-1| up to {err.max():.3e}")


def check_unit_tangent(base: np.ndarray, v: np.ndarray, tol: float = UNIT_TOL) -> None:
    """Raise ValueError unless v is unit length and orthogonal to base."""
    base = np.atleast_2d(np.asarray(base, dtype=float))
    v = np.atleast_2d(np.asarray(v, dtype=float))
    nerr = np.abs(np.linalg.norm(v, axis=-1) - 1.0)
    if np.any(nerr > tol):
        raise ValueError(f"tangent not unit length: |norm-1| up to {nerr.max():.3e}")
    dot = np.abs(np.sum(base * v, axis=-1))
    if np.any(dot > tol):
        raise ValueError(f"vector not tangent to base point: |v.p| up to {dot.max():.3e}")


def sample_sphere_uniform(n: int, seed: RngLike = None) -> np.ndarray:
    """Sample n points i.i.d. uniformly on S^2 via normalized Gaussians.

    Returns an (n, 3) array; deterministic for a fixed integer seed.
    """
    n = int(n)
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    rng = as_rng(seed)
    x = rng.standard_normal((n, 3))
    if n == 0:
        return x.reshape(0, 3)
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def fibre_frame(base: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Deterministic orthonormal frame (t1, t2) of the tangent plane at each base point.

    For base = (sin t cos p, sin t sin p, cos t) away from the poles,
    t1 is the unit meridian direction d/dt and t2 the unit parallel direction,
    so the fibre angle measured against (t1, t2) matches the spherical-angle
    parameterization used by the quadrature oracle.  Near the poles a fixed
    fallback frame is used; the in-fibre angular origin is a free convention.
    """
    p = np.atleast_2d(np.asarray(base, dtype=float))
    n = p.shape[0]
    t2 = np.stack([-p[:, 1], p[:, 0], np.zeros(n)], axis=1)
    nrm = np.linalg.norm(t2, axis=1)
    near_pole = nrm < 1e-12
    if np.any(near_pole):
        e = np.tile([1.0, 0.0, 0.0], (int(near_pole.sum()), 1))
        e -= np.sum(e * p[near_pole], axis=1, keepdims=True) * p[near_pole]
        t2[near_pole] = e
        nrm[near_pole] = np.linalg.norm(t2[near_pole], axis=1)
    t2 /= nrm[:, None]
    t1 = np.cross(t2, p)
    if np.asarray(base).ndim == 1:
        return t1[0], t2[0]
    return t1, t2


def tangent_from_angle(base: np.ndarray, angle: np.ndarray) -> np.ndarray:
    """Unit tangent at base with fibre angle `angle` in the fibre_frame convention."""
    t1, t2 = fibre_frame(base)
    a = np.asarray(angle, dtype=float)
    return np.cos(a)[..., None] * t1 + np.sin(a)[..., None] * t2


def tangent_angle(base: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Fibre angle of tangent v at base in the fibre_frame convention, in (-pi, pi]."""
    t1, t2 = fibre_frame(base)
    return np.arctan2(np.sum(v * t2, axis=-1), np.sum(v * t1, axis=-1))


def sample_fibre_circle(
    base: np.ndarray,
    n: int,
    mode: str = "random",
    seed: RngLike = None,
) -> np.ndarray:
    """Sample n unit tangents on the fibre circle at a single base point.

    mode="random" draws angles i.i.d. uniform on [0, 2pi); mode="equispaced"
    places them at 2*pi*k/n from the deterministic fibre frame.  Returns (n, 3).
    """
    n = int(n)
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    if mode == "random":
        angles = as_rng(seed).uniform(0.0, 2.0 * np.pi, n)
    elif mode == "equispaced":
        angles = 2.0 * np.pi * np.arange(n) / max(n, 1)
    else:
        raise ValueError(f"unknown fibre sampling mode {mode!r}")
    return tangent_from_angle(np.asarray(base, dtype=float), angles)


def geodesic_distance(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Great-circle distance arccos(<x, y>) in [0, pi]; broadcasts over rows."""
    d = np.sum(np.asarray(x, float) * np.asarray(y, float), axis=-1)
    return np.arccos(np.clip(d, -1.0, 1.0))


def exp_map(x: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Riemannian exponential at x: follow the geodesic with velocity v for unit time.

    v must be tangent to x (not necessarily unit); exp_x(0) = x.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    t = np.linalg.norm(v, axis=-1)
    if np.any(np.abs(np.sum(x * v, axis=-1)) > 1e-9 * np.maximum(t, 1.0)):
        raise ValueError("exp_map requires v tangent to x")
    t_safe = np.where(t > 0, t, 1.0)
    out = np.cos(t)[..., None] * x + (np.sin(t) / t_safe)[..., None] * v
    return out / np.linalg.norm(out, axis=-1, keepdims=True)


def log_map(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Inverse of exp_map: the tangent at x pointing to y with |log| = distance.

    Undefined for y antipodal to x (raises).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    d = geodesic_distance(x, y)
    if np.any(np.pi - d < 1e-9):
        raise ValueError("log_map undefined for antipodal points")
    w = y - np.sum(x * y, axis=-1)[..., None] * x
    nw = np.linalg.norm(w, axis=-1)
    nw_safe = np.where(nw > 0, nw, 1.0)
    return (d / nw_safe)[..., None] * w


def parallel_transport(x: np.ndarray, y: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Parallel transport of tangent v from x to y along the connecting geodesic.

    Realized as the rotation about the axis x cross y taking x to y; an isometry
    of the tangent planes.  x and y must not be equal or antipodal (the geodesic,
    hence the axis, would be undefined).  v may be a batch (..., 3) of tangents
    at x.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    v = np.asarray(v, dtype=float)
    axis = np.cross(x, y)
    s = np.linalg.norm(axis)
    if s < 1e-12:
        raise ValueError("parallel transport undefined for coincident or antipodal points")
    c = float(np.clip(np.dot(x, y), -1.0, 1.0))
    k = axis / s
    kv = np.cross(np.broadcast_to(k, v.shape), v)
    kdotv = np.sum(v * k, axis=-1)
    return v * c + kv * s + k * (kdotv * (1.0 - c))[..., None]


def spherical_angles(p: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Colatitude theta in [0, pi] and longitude phi in (-pi, pi] of points on S^2."""
    p = np.asarray(p, dtype=float)
    theta = np.arccos(np.clip(p[..., 2], -1.0, 1.0))
    phi = np.arctan2(p[..., 1], p[..., 0])
    return theta, phi
