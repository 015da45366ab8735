"""Command-line pipeline: sample, build, eig, embed, afap, report.

Stages communicate through files in the run's output directory, so each one
can be rerun independently.  All randomness funnels through one 64-bit seed:
stage k draws from numpy's SeedSequence(seed, spawn_key=(k,)), which makes
every stage independently reproducible.  The environment variable
HYPOLAP_THREADS caps the BLAS thread count (set before numpy spins up its
pools); no other environment is consulted.
"""
from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from . import afap as afap_mod
from . import io as io_mod
from . import plots, sphere
from .bundle import BundleSampleSet, KernelConfig, assemble_block_matrix, build_base_knn
from .embedding import EmbeddingCoordinates, hbdm_embed, hdm_embed, hdm_normalize
from .laplacian import alpha_normalize, build_laplacian, degree_vector
from .spectral import SpectralResult, cluster_eigenvalues, smallest_eigenpairs
from .tangent_pca import PcaConfig, local_pca_frames, procrustes_transport

__all__ = ["RunConfig", "main", "cmd_sample", "cmd_build", "cmd_eig", "cmd_embed", "cmd_afap", "cmd_report"]

STAGE_IDS = {"sample": 0, "build": 1, "eig": 2, "embed": 3, "afap": 4, "report": 5}


@dataclass
class RunConfig:
    """One experiment's parameters; a flat key-value file plus CLI overrides."""

    n_base: int = 800
    n_fibre: int = 32
    k_base: int = 60
    k_fibre: int = 16
    eps: float = 0.35
    delta: float = 0.0105
    alpha: float = 1.0
    eps_pca: float = 0.025
    mode: str = "exact"
    m_eigs: int = 36
    t: float = 1.0
    seed: int = 0
    out_dir: str = "run"
    rel_gap: float = 0.2
    fibre_mode: str = "random"
    variant: str = "symmetric"
    anchor_j: int = 0
    anchor_s: int = 0
    solver_tol: float = 1e-8

    def __post_init__(self):
        for name in ("n_base", "n_fibre", "k_base", "k_fibre", "m_eigs"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.eps <= 0 or self.delta <= 0 or self.eps_pca <= 0:
            raise ValueError("bandwidths must be > 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.mode not in ("exact", "empirical"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.fibre_mode not in ("random", "equispaced"):
            raise ValueError(f"unknown fibre_mode {self.fibre_mode!r}")

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        values = {}
        casts = {f.name: type(f.default) for f in fields(cls)}
        with open(path) as fh:
            for line in fh:
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                key, _, raw = line.replace("=", " ").partition(" ")
                key, raw = key.strip(), raw.strip()
                if key not in casts:
                    raise ValueError(f"unknown config key {key!r}")
                values[key] = casts[key](raw)
        return cls(**values)

    def with_overrides(self, overrides: Dict[str, str]) -> "RunConfig":
        casts = {f.name: type(f.default) for f in fields(self)}
        data = asdict(self)
        for key, raw in overrides.items():
            if key not in casts:
                raise ValueError(f"unknown config key {key!r}")
            data[key] = casts[key](raw)
        return RunConfig(**data)

    def kernel_config(self) -> KernelConfig:
        return KernelConfig(
            eps=self.eps,
            delta=self.delta,
            k_base=self.k_base,
            k_fibre=self.k_fibre,
            alpha=self.alpha,
        )

    def stage_rng(self, stage: str) -> np.random.Generator:
        return np.random.default_rng(
            np.random.SeedSequence(self.seed, spawn_key=(STAGE_IDS[stage],))
        )


def _paths(cfg: RunConfig) -> Dict[str, Path]:
    out = Path(cfg.out_dir)
    return {
        "dir": out,
        "base": out / "base_points.txt",
        "bundle": out / "bundle.txt",
        "frames": out / "frames.txt",
        "transports": out / "transports.txt",
        "matrix": out / "matrix.txt",
        "matrix_npz": out / "matrix.npz",
        "meta": out / "matrix_meta.json",
        "degrees": out / "degrees.txt",
        "spectrum": out / "spectrum.csv",
        "clusters": out / "clusters.json",
        "eigvecs": out / "eigenvectors.npz",
        "bars": out / "spectrum_bars.svg",
        "hdm": out / "hdm.csv",
        "hdm_norm": out / "hdm_normalized.csv",
        "hbdm": out / "hbdm.csv",
        "section": out / "section.txt",
        "quiver": out / "section_quiver.svg",
        "report": out / "report.json",
    }


def _sample_bundle(cfg: RunConfig) -> BundleSampleSet:
    """Draw the base cloud and per-fibre angles; both modes share the angles."""
    rng = cfg.stage_rng("sample")
    base = sphere.sample_sphere_uniform(cfg.n_base, rng)
    if cfg.fibre_mode == "random":
        angles = rng.uniform(0.0, 2.0 * np.pi, (cfg.n_base, cfg.n_fibre))
    else:
        angles = np.broadcast_to(
            2.0 * np.pi * np.arange(cfg.n_fibre) / cfg.n_fibre, (cfg.n_base, cfg.n_fibre)
        ).copy()
    if cfg.mode == "exact":
        t1, t2 = sphere.fibre_frame(base)
        fibres = [
            np.cos(angles[j])[:, None] * t1[j] + np.sin(angles[j])[:, None] * t2[j]
            for j in range(cfg.n_base)
        ]
        return BundleSampleSet(base_points=base, fibres=fibres, kind="exact")
    fibres = [np.stack([np.cos(a), np.sin(a)], axis=1) for a in angles]
    return BundleSampleSet(base_points=base, fibres=fibres, kind="coeff")


def cmd_sample(cfg: RunConfig) -> BundleSampleSet:
    """Write the base cloud and fibre samples for the configured mode."""
    paths = _paths(cfg)
    paths["dir"].mkdir(parents=True, exist_ok=True)
    samples = _sample_bundle(cfg)
    io_mod.save_points(paths["base"], samples.base_points)
    io_mod.save_bundle(paths["bundle"], samples)
    return samples


def _load_samples(cfg: RunConfig) -> BundleSampleSet:
    paths = _paths(cfg)
    if not paths["base"].exists():
        raise FileNotFoundError(f"missing sample artifact {paths['base']}; run `sample` first")
    base = io_mod.load_points(paths["base"])
    kind = "exact" if cfg.mode == "exact" else "coeff"
    return io_mod.load_bundle(paths["bundle"], base, kind=kind)


def cmd_build(cfg: RunConfig) -> None:
    """Assemble and persist the alpha-normalized block weight matrix."""
    paths = _paths(cfg)
    samples = _load_samples(cfg)
    kcfg = cfg.kernel_config()
    timings = {}
    t0 = time.perf_counter()
    graph = build_base_knn(samples.base_points, cfg.k_base)
    if not graph.is_connected():
        raise RuntimeError("base neighbor graph is disconnected; increase k_base or n_base")
    timings["graph"] = time.perf_counter() - t0

    transports = None
    if cfg.mode == "empirical":
        t0 = time.perf_counter()
        pca = PcaConfig(
            eps_pca=cfg.eps_pca,
            k_neighbors=cfg.k_base,
            weight_kernel="gaussian5",
        )
        frames = local_pca_frames(samples.base_points, pca)
        d = frames[0].dim
        width = samples.fibres[0].shape[1]
        if d != width:
            raise RuntimeError(
                f"estimated tangent dimension {d} does not match coefficient width {width}"
            )
        transports = {}
        for i, j in graph.edges():
            transports[(i, j)] = procrustes_transport(frames[i], frames[j]).matrix
        io_mod.save_frames(paths["frames"], frames)
        io_mod.save_transports(paths["transports"], transports)
        timings["pca"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    W = assemble_block_matrix(samples, graph, kcfg, transports=transports)
    timings["assembly"] = time.perf_counter() - t0
    degrees = degree_vector(W)
    t0 = time.perf_counter()
    W_alpha = alpha_normalize(W, cfg.alpha)
    timings["normalize"] = time.perf_counter() - t0

    io_mod.save_degrees(paths["degrees"], degrees)
    io_mod.save_matrix_text(paths["matrix"], W_alpha)
    io_mod.save_matrix_npz(paths["matrix_npz"], W_alpha)
    meta = {
        "kappa": int(W.n),
        "nnz": int(W_alpha.nnz),
        "alpha": cfg.alpha,
        "variant": cfg.variant,
        "fibre_sizes": samples.fibre_sizes.tolist(),
        "n_edges": graph.edge_count(),
        "mode": cfg.mode,
        "config": asdict(cfg),
        "timings": timings,
    }
    with open(paths["meta"], "w") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")


def cmd_eig(cfg: RunConfig) -> SpectralResult:
    """Solve for the smallest Laplacian eigenpairs and report their clusters."""
    paths = _paths(cfg)
    if not paths["matrix_npz"].exists():
        raise FileNotFoundError(f"missing matrix artifact {paths['matrix_npz']}; run `build` first")
    W_alpha = io_mod.load_matrix_npz(paths["matrix_npz"])
    L = build_laplacian(W_alpha, cfg.variant)
    seed = int(cfg.stage_rng("eig").integers(2**31))
    spec = smallest_eigenpairs(
        L,
        cfg.m_eigs,
        tol=cfg.solver_tol,
        seed=seed,
        block_offsets=W_alpha.block_offsets,
    )
    io_mod.save_spectrum_csv(paths["spectrum"], spec)
    report = cluster_eigenvalues(spec.eigenvalues, cfg.rel_gap)
    io_mod.save_cluster_json(paths["clusters"], report)
    np.savez(
        paths["eigvecs"],
        eigenvalues=spec.eigenvalues,
        eigenvectors=spec.eigenvectors,
        residuals=spec.residuals,
        block_offsets=spec.block_offsets,
    )
    with open(paths["bars"], "w") as fh:
        fh.write(plots.spectrum_bar_svg(spec.eigenvalues))
    return spec


def _load_spectral(cfg: RunConfig) -> SpectralResult:
    paths = _paths(cfg)
    if not paths["eigvecs"].exists():
        raise FileNotFoundError(f"missing eigen artifact {paths['eigvecs']}; run `eig` first")
    with np.load(paths["eigvecs"]) as z:
        return SpectralResult(
            eigenvalues=z["eigenvalues"],
            eigenvectors=z["eigenvectors"],
            residuals=z["residuals"],
            block_offsets=z["block_offsets"],
        )


def cmd_embed(cfg: RunConfig) -> EmbeddingCoordinates:
    """Write the spectral embeddings (raw, normalized, and per-fibre)."""
    paths = _paths(cfg)
    spec = _load_spectral(cfg)
    emb = hdm_embed(spec, cfg.t)
    io_mod.save_hdm_csv(paths["hdm"], emb)
    emb_norm = hdm_normalize(emb)
    io_mod.save_hdm_csv(paths["hdm_norm"], emb_norm)
    base_emb = hbdm_embed(spec, cfg.t)
    io_mod.save_hbdm_csv(paths["hbdm"], base_emb)
    return emb_norm


def cmd_afap(cfg: RunConfig) -> afap_mod.DiscreteSection:
    """Extract the embedding-propagated section and plot it."""
    paths = _paths(cfg)
    samples = _load_samples(cfg)
    spec = _load_spectral(cfg)
    emb_norm = hdm_normalize(hdm_embed(spec, cfg.t))
    anchor = (cfg.anchor_j, cfg.anchor_s)
    frames = None
    if cfg.mode == "empirical" and paths["frames"].exists():
        frames = io_mod.load_frames(paths["frames"])
    section = afap_mod.extract_section(emb_norm, samples, anchor, frames=frames)
    angle_errors = np.full(samples.n_base, np.nan)
    if samples.kind == "exact":
        dists, angles, _skipped = afap_mod.section_angle_report(section, samples)
        keep = np.nonzero(~np.isin(np.arange(samples.n_base), _skipped))[0]
        angle_errors[keep] = angles
    io_mod.save_section(paths["section"], samples.base_points, section.vectors, angle_errors)
    with open(paths["quiver"], "w") as fh:
        fh.write(
            plots.section_quiver_svg(samples.base_points, section.vectors, anchor_index=cfg.anchor_j)
        )
    return section


def cmd_report(cfg: RunConfig) -> dict:
    """Aggregate the run's artifacts into one JSON report."""
    paths = _paths(cfg)
    for key in ("meta", "spectrum", "clusters"):
        if not paths[key].exists():
            raise FileNotFoundError(f"missing artifact {paths[key]}")
    with open(paths["meta"]) as fh:
        meta = json.load(fh)
    eigenvalues, residuals = io_mod.load_spectrum_csv(paths["spectrum"])
    clusters = io_mod.load_cluster_json(paths["clusters"])
    report = {
        "config": meta["config"],
        "matrix": {"kappa": meta["kappa"], "nnz": meta["nnz"], "n_edges": meta["n_edges"]},
        "eigenvalues": eigenvalues.tolist(),
        "residuals": residuals.tolist(),
        "clusters": clusters,
        "timings": meta.get("timings", {}),
    }
    with open(paths["report"], "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    return report


COMMANDS = {
    "sample": cmd_sample,
    "build": cmd_build,
    "eig": cmd_eig,
    "embed": cmd_embed,
    "afap": cmd_afap,
    "report": cmd_report,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hypolap",
        description="Spectral analysis of unit tangent bundle point clouds",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=fn.__doc__)
        p.add_argument("--config", type=str, default=None, help="key-value config file")
        for f in fields(RunConfig):
            p.add_argument(f"--{f.name.replace('_', '-')}", type=str, default=None)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = _build_parser().parse_args(argv)
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    overrides = {
        f.name: getattr(args, f.name)
        for f in fields(RunConfig)
        if getattr(args, f.name) is not None
    }
    cfg = cfg.with_overrides(overrides)
    try:
        COMMANDS[args.command](cfg)
    except (ValueError, RuntimeError, FileNotFoundError) as exc:
        print(f"hypolap {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
