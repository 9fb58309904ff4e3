"""Command-line driver: validate -> param -> bake -> reconstruct -> evaluate.

Configuration comes from defaults, then an optional flat key = value config
file, then command-line flags (flags win). Exit codes: 0 success, 1 domain
failure (topology, mismatched inputs), 2 I/O or parse failure.
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import click
import numpy as np

from .mesh import (
    MeshError,
    TopologyError,
    TriangleMesh,
    load_mesh,
    save_mesh,
    validate_topology,
)
from .parameterize import (
    ParamConfig,
    parameterize,
    save_embedding,
    load_embedding,
)
from .codec import SgrMap, bake, center_symmetric_pad, read_sgr, reconstruct, write_sgr
from .metrics import (
    MetricsReport,
    RegWeights,
    aspect_ratio,
    chamfer_distance,
    edge_length_reg,
    f_score,
    geometric_reg_total,
    laplacian_smoothing,
    normals_consistency,
)

EXIT_OK = 0
EXIT_DOMAIN = 1
EXIT_IO = 2

OUTPUT_DIR_ENV = "SGR_OUTPUT_DIR"


@dataclass
class PipelineConfig:
    resolution: int = 256
    param: ParamConfig = field(default_factory=ParamConfig)
    reg_weights: RegWeights = field(default_factory=RegWeights)
    chamfer_samples: int = 20000
    tau_mm: float = 1.0
    seed: int = 0
    output_dir: Path = field(
        default_factory=lambda: Path(os.environ.get(OUTPUT_DIR_ENV, "."))
    )

    def __post_init__(self):
        if self.resolution < 2:
            raise ValueError("resolution must be >= 2")
        if self.tau_mm <= 0:
            raise ValueError("tau must be > 0")
        if self.chamfer_samples < 1:
            raise ValueError("chamfer_samples must be >= 1")


_PARAM_KEYS = {
    "epsilon": float,
    "p": int,
    "directions_per_pass": int,
    "local_tolerance": float,
    "global_sweep_growth_factor": float,
    "global_convergence_threshold": float,
    "max_sweep_passes": int,
}
_WEIGHT_KEYS = {"alpha_nor": float, "alpha_lap": float, "alpha_edg": float}


def parse_config_file(path) -> dict:
    """Flat `key = value` lines; '#' starts a comment; blank lines ignored."""
    values: dict = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"bad config line: {raw!r}")
        k, v = (s.strip() for s in line.split("=", 1))
        values[k] = v.strip("\"'")
    return values


def build_config(config_path=None, **overrides) -> PipelineConfig:
    """Defaults, then config file, then non-None keyword overrides."""
    raw: dict = {}
    if config_path is not None:
        raw.update(parse_config_file(config_path))
    for k, v in overrides.items():
        if v is not None:
            raw[k] = v

    cfg = PipelineConfig()
    param_kw: dict = {}
    weight_kw: dict = {}
    for k, v in raw.items():
        if k == "resolution":
            cfg.resolution = int(v)
        elif k == "chamfer_samples":
            cfg.chamfer_samples = int(v)
        elif k == "tau_mm":
            cfg.tau_mm = float(v)
        elif k == "seed":
            cfg.seed = int(v)
        elif k == "output_dir":
            cfg.output_dir = Path(v)
        elif k in _PARAM_KEYS:
            param_kw[k] = _PARAM_KEYS[k](v)
        elif k in _WEIGHT_KEYS:
            weight_kw[k] = _WEIGHT_KEYS[k](v)
        else:
            raise ValueError(f"unknown config key: {k!r}")
    cfg.param = replace(cfg.param, rng_seed=cfg.seed, **param_kw)
    if weight_kw:
        cfg.reg_weights = replace(cfg.reg_weights, **weight_kw)
    cfg.__post_init__()
    return cfg


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_mesh_or_exit(path) -> TriangleMesh:
    try:
        return load_mesh(path)
    except (OSError, MeshError, ValueError) as exc:
        _fail(EXIT_IO, f"cannot load mesh {path}: {exc}")


def _read_sgr_or_exit(path) -> SgrMap:
    try:
        return read_sgr(path)
    except (OSError, MeshError, ValueError) as exc:
        _fail(EXIT_IO, f"cannot read SGR {path}: {exc}")


def _out_path(cfg: PipelineConfig, name: str, explicit) -> Path:
    if explicit is not None:
        return Path(explicit)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    return cfg.output_dir / name


_config_option = click.option(
    "--config", "config_path", type=click.Path(exists=True, dir_okay=False),
    default=None, help="Flat key = value config file.",
)
_seed_option = click.option("--seed", type=int, default=None)


def _build_config_or_exit(config_path, **overrides) -> PipelineConfig:
    try:
        return build_config(config_path, **overrides)
    except (OSError, ValueError) as exc:
        _fail(EXIT_IO, f"bad configuration: {exc}")


@click.group()
def main():
    """Spherical geometry representation pipeline."""


@main.command("validate")
@click.argument("mesh_path", type=click.Path(exists=True, dir_okay=False))
def cmd_validate(mesh_path):
    """Check that a mesh is a watertight genus-zero 2-manifold."""
    mesh = _load_mesh_or_exit(mesh_path)
    report = validate_topology(mesh)
    click.echo(f"vertices: {report.vertex_count}")
    click.echo(f"edges: {report.edge_count}")
    click.echo(f"faces: {report.face_count}")
    click.echo(f"watertight: {str(report.is_watertight).lower()}")
    click.echo(f"manifold: {str(report.is_manifold).lower()}")
    click.echo(f"boundary_edges: {report.boundary_edge_count}")
    click.echo(f"euler_characteristic: {report.euler_characteristic}")
    click.echo(f"genus: {report.genus if report.genus is not None else 'n/a'}")
    ok = report.is_watertight and report.is_manifold and report.genus == 0
    sys.exit(EXIT_OK if ok else EXIT_DOMAIN)


def _parameterize_or_exit(mesh: TriangleMesh, cfg: PipelineConfig):
    report = validate_topology(mesh)
    if not (report.is_watertight and report.is_manifold and report.genus == 0):
        _fail(EXIT_DOMAIN, "mesh is not a watertight genus-zero 2-manifold")
    try:
        return parameterize(mesh, cfg.param)
    except (TopologyError, ValueError) as exc:
        _fail(EXIT_DOMAIN, str(exc))


@main.command("param")
@click.argument("mesh_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "-o", "out_path", type=click.Path(), default=None)
@_config_option
@_seed_option
def cmd_param(mesh_path, out_path, config_path, seed):
    """Compute a spherical embedding and write it next to the mesh."""
    cfg = _build_config_or_exit(config_path, seed=seed)
    mesh = _load_mesh_or_exit(mesh_path)
    embedding, stats = _parameterize_or_exit(mesh, cfg)
    out = _out_path(cfg, Path(mesh_path).stem + ".embedding.ply", out_path)
    try:
        save_embedding(embedding, out)
    except (OSError, MeshError) as exc:
        _fail(EXIT_IO, str(exc))
    click.echo(f"embedding: {out}")
    click.echo(f"l2_stretch: {stats.l2_stretch:.6f}")
    click.echo(f"efficiency: {stats.efficiency:.6f}")


@main.command("bake")
@click.argument("mesh_path", type=click.Path(exists=True, dir_okay=False))
@click.argument("embedding_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "-o", "out_path", type=click.Path(), default=None)
@click.option("--resolution", "-r", type=int, default=None)
@click.option(
    "--kind", type=click.Choice(["geometry", "texture", "displacement"]),
    default="geometry",
)
@_config_option
@_seed_option
def cmd_bake(mesh_path, embedding_path, out_path, resolution, kind, config_path, seed):
    """Resample vertex positions over the equal-area grid into an SGR image."""
    cfg = _build_config_or_exit(config_path, seed=seed, resolution=resolution)
    mesh = _load_mesh_or_exit(mesh_path)
    try:
        embedding = load_embedding(embedding_path, mesh)
    except MeshError as exc:
        code = EXIT_DOMAIN if "does not match" in str(exc) else EXIT_IO
        _fail(code, str(exc))
    sgr = bake(embedding, mesh.vertices, cfg.resolution, kind=kind)
    out = _out_path(cfg, Path(mesh_path).stem + f".r{cfg.resolution}.png", out_path)
    try:
        write_sgr(sgr, out)
    except (OSError, MeshError) as exc:
        _fail(EXIT_IO, str(exc))
    click.echo(f"sgr: {out}")
    click.echo(f"resolution: {cfg.resolution}")


@main.command("reconstruct")
@click.argument("sgr_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "-o", "out_path", type=click.Path(), default=None)
@_config_option
def cmd_reconstruct(sgr_path, out_path, config_path):
    """Triangulate the sphere samples of a geometry SGR into a mesh."""
    cfg = _build_config_or_exit(config_path)
    sgr = _read_sgr_or_exit(sgr_path)
    try:
        mesh = reconstruct(sgr)
    except ValueError as exc:
        _fail(EXIT_DOMAIN, str(exc))
    out = _out_path(cfg, Path(sgr_path).stem + ".reconstructed.ply", out_path)
    try:
        save_mesh(mesh, out)
    except MeshError as exc:
        _fail(EXIT_IO, str(exc))
    click.echo(f"mesh: {out}")
    click.echo(f"vertices: {mesh.vertex_count}")


def _single_mesh_report(mesh: TriangleMesh, cfg: PipelineConfig) -> MetricsReport:
    _, ar_mean, ar_max = aspect_ratio(mesh)
    return MetricsReport(
        l_nor=normals_consistency(mesh),
        l_lap=laplacian_smoothing(mesh),
        l_edge=edge_length_reg(mesh, cfg.reg_weights.e0_policy),
        reg_total=geometric_reg_total(mesh, cfg.reg_weights),
        aspect_ratio_mean=ar_mean,
        aspect_ratio_max=ar_max,
    )


def _echo_report(report: MetricsReport) -> None:
    for line in report.to_text().splitlines():
        click.echo(line)


@main.command("metrics")
@click.argument("mesh_a", type=click.Path(exists=True, dir_okay=False))
@click.argument("mesh_b", type=click.Path(exists=True, dir_okay=False), required=False)
@click.option("--report", "report_path", type=click.Path(), default=None)
@_config_option
@_seed_option
def cmd_metrics(mesh_a, mesh_b, report_path, config_path, seed):
    """Regularization metrics for one mesh; Chamfer/F-score for a pair."""
    cfg = _build_config_or_exit(config_path, seed=seed)
    a = _load_mesh_or_exit(mesh_a)
    report = _single_mesh_report(a, cfg)
    if mesh_b is not None:
        b = _load_mesh_or_exit(mesh_b)
        report.chamfer_mm = chamfer_distance(
            a, b, samples=cfg.chamfer_samples, seed=cfg.seed
        )
        report.f_score_pct = f_score(
            a, b, cfg.tau_mm, samples=cfg.chamfer_samples, seed=cfg.seed
        )
    _echo_report(report)
    click.echo(
        f"weights: ({cfg.reg_weights.alpha_nor}, "
        f"{cfg.reg_weights.alpha_lap}, {cfg.reg_weights.alpha_edg})"
    )
    if report_path is not None:
        Path(report_path).write_text(report.to_text())


@main.command("roundtrip")
@click.argument("mesh_path", type=click.Path(exists=True, dir_okay=False))
@click.option(
    "--resolutions", default="32,64,128,256", show_default=True,
    help="Comma-separated grid resolutions.",
)
@click.option("--report", "report_path", type=click.Path(), default=None)
@_config_option
@_seed_option
def cmd_roundtrip(mesh_path, resolutions, report_path, config_path, seed):
    """Parameterize, bake, and reconstruct at several resolutions; report
    Chamfer distance, F-score, and aspect ratio per resolution."""
    cfg = _build_config_or_exit(config_path, seed=seed)
    try:
        ladder = [int(s) for s in resolutions.split(",") if s.strip()]
        if not ladder or min(ladder) < 2:
            raise ValueError(resolutions)
    except ValueError:
        _fail(EXIT_IO, f"bad resolution list: {resolutions!r}")
    mesh = _load_mesh_or_exit(mesh_path)
    embedding, _ = _parameterize_or_exit(mesh, cfg)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(mesh_path).stem
    lines = []
    for r in ladder:
        sgr = bake(embedding, mesh.vertices, r, kind="geometry")
        png = cfg.output_dir / f"{stem}.r{r}.png"
        write_sgr(sgr, png)
        recon = reconstruct(read_sgr(png))
        save_mesh(recon, cfg.output_dir / f"{stem}.r{r}.reconstructed.ply")
        cd = chamfer_distance(mesh, recon, samples=cfg.chamfer_samples, seed=cfg.seed)
        fs = f_score(mesh, recon, cfg.tau_mm, samples=cfg.chamfer_samples, seed=cfg.seed)
        _, ar_mean, _ = aspect_ratio(recon)
        for key, val in (
            (f"r{r}_chamfer", cd),
            (f"r{r}_f_score_pct", fs),
            (f"r{r}_aspect_ratio_mean", ar_mean),
        ):
            line = f"{key}: {val!r}"
            lines.append(line)
            click.echo(line)
    if report_path is not None:
        Path(report_path).write_text("\n".join(lines) + "\n")


@main.command("pad")
@click.argument("sgr_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "-o", "out_path", type=click.Path(), default=None)
@_config_option
def cmd_pad(sgr_path, out_path, config_path):
    """Write a copy of an SGR with the one-pixel center-symmetric border."""
    cfg = _build_config_or_exit(config_path)
    sgr = _read_sgr_or_exit(sgr_path)
    padded = SgrMap(
        resolution=(sgr.resolution[0] + 2, sgr.resolution[1] + 2),
        channels=sgr.channels,
        kind=sgr.kind,
        values=center_symmetric_pad(sgr.values),
        source_hash=sgr.source_hash,
    )
    out = _out_path(cfg, Path(sgr_path).stem + ".padded.png", out_path)
    try:
        write_sgr(padded, out)
    except (OSError, MeshError) as exc:
        _fail(EXIT_IO, str(exc))
    click.echo(f"padded: {out}")
    click.echo(f"resolution: {padded.resolution[0]}x{padded.resolution[1]}")


if __name__ == "__main__":
    main()
