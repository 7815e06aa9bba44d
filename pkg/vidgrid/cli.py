"""Command line: ``vidgrid render-synthetic | warp | keyframes | fill | eval``."""

import json
import logging
import sys
from pathlib import Path
from typing import Optional

import numpy as np
import typer

from vidgrid.config import (
    PipelineConfig,
    config_digest,
    describe,
    load_config,
    with_overrides,
)
from vidgrid.errors import ConfigError, VidgridError
from vidgrid.grid import CellStatus
from vidgrid.io.frames import save_depth, save_frame
from vidgrid.io.manifest import cell_file, read_manifest, write_manifest
from vidgrid.io.metrics import evaluate_grid, xt_slice
from vidgrid.pipeline import prepare_inputs, run_keyframes, run_pipeline, warp_inputs

logger = logging.getLogger(__name__)

app = typer.Typer(
    add_completion=False,
    no_args_is_help=True,
    help="Fill a camera-time video grid from one input video.",
)

ConfigOpt = typer.Option(..., "--config", "-c", help="Pipeline config (TOML)")
OutOpt = typer.Option(..., "--out", "-o", help="Output directory")
SeedOpt = typer.Option(None, "--seed", help="Override the config seed")
BackendOpt = typer.Option(
    None, "--backend", help="ideal, noisy-ideal, gaussian, identity or external:<cmd>"
)
NoWarpOpt = typer.Option(False, "--no-warp-guidance", help="Ignore the warped views")
NoStbiOpt = typer.Option(False, "--no-stbi", help="Interpolate interior rows only")
ParallelOpt = typer.Option(False, "--parallel", help="Process grid lines concurrently")


@app.callback()
def setup(verbose: bool = typer.Option(False, "--verbose", "-v")):
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        stream=sys.stderr,
    )


def _fail(e: Exception) -> None:
    report = (
        e.to_dict()
        if isinstance(e, VidgridError)
        else {"error": type(e).__name__, "message": str(e), "context": {}}
    )
    logger.error(f"{report['error']}: {report['message']}")
    typer.echo(json.dumps(report, sort_keys=True), err=True)
    raise typer.Exit(code=1)


def _config(
    path: Path,
    seed: Optional[int] = None,
    backend: Optional[str] = None,
    no_warp_guidance: bool = False,
    no_stbi: bool = False,
    parallel: bool = False,
) -> PipelineConfig:
    config = load_config(path)
    return with_overrides(config, seed, backend, no_warp_guidance, no_stbi, parallel)


@app.command("render-synthetic")
def render_synthetic(config: Path = ConfigOpt, out: Path = OutOpt):
    """Write the ground-truth grid and depth maps of the configured scene."""
    try:
        cfg = _config(config)
        inputs = prepare_inputs(cfg)
        if inputs.truth is None:
            raise ConfigError(
                "render-synthetic needs a [scene] block", source=str(config)
            )
        N, F = inputs.truth.shape[:2]
        write_manifest(
            out,
            inputs.truth,
            cfg.seed,
            config_digest(cfg),
            cfg.trajectory.model_dump(mode="json"),
            bit_depth=cfg.output.bit_depth,
        )
        for n in range(N):
            for i in range(F):
                name = f"depth_view{n:03d}_time{i:03d}.pfm"
                save_depth(out / name, inputs.truth_depths[n, i])
    except (VidgridError, OSError) as e:
        _fail(e)
    typer.echo(json.dumps({"out": str(out), "cells": N * F}))


@app.command()
def warp(config: Path = ConfigOpt, out: Path = OutOpt):
    """Write every warped view and its hole mask."""
    try:
        cfg = _config(config)
        warped = warp_inputs(prepare_inputs(cfg))
        statuses = np.full(warped.masks.shape[:2], CellStatus.WARPED, dtype=np.int8)
        statuses[0] = CellStatus.FINAL
        write_manifest(
            out,
            warped.frames,
            cfg.seed,
            config_digest(cfg),
            cfg.trajectory.model_dump(mode="json"),
            statuses,
            cfg.output.bit_depth,
            prefix="warp_",
        )
        for n in range(warped.n_views):
            for i in range(warped.n_frames):
                save_frame(out / cell_file(n, i, "mask_"), warped.masks[n, i], 8)
        missing = float(warped.masks.mean())
    except (VidgridError, OSError) as e:
        _fail(e)
    typer.echo(json.dumps({"out": str(out), "missing_fraction": round(missing, 6)}))


@app.command()
def keyframes(
    config: Path = ConfigOpt,
    out: Path = OutOpt,
    seed: Optional[int] = SeedOpt,
    backend: Optional[str] = BackendOpt,
    no_warp_guidance: bool = NoWarpOpt,
    no_stbi: bool = NoStbiOpt,
    parallel: bool = ParallelOpt,
):
    """Run Stage A only; interior cells keep their warped views."""
    try:
        cfg = _config(config, seed, backend, no_warp_guidance, no_stbi, parallel)
        result = run_keyframes(cfg, out)
    except (VidgridError, OSError) as e:
        _fail(e)
    key = int((result.grid.status == CellStatus.KEY).sum())
    typer.echo(json.dumps({"out": str(out), "key_cells": key, "digest": result.digest}))


@app.command()
def fill(
    config: Path = ConfigOpt,
    out: Path = OutOpt,
    seed: Optional[int] = SeedOpt,
    backend: Optional[str] = BackendOpt,
    no_warp_guidance: bool = NoWarpOpt,
    no_stbi: bool = NoStbiOpt,
    parallel: bool = ParallelOpt,
):
    """Run the full pipeline and write the completed grid."""
    try:
        cfg = _config(config, seed, backend, no_warp_guidance, no_stbi, parallel)
        logger.info(f"Config: {json.dumps(describe(cfg))}")
        result = run_pipeline(cfg, out)
    except (VidgridError, OSError) as e:
        _fail(e)
    cells = result.grid.n_views * result.grid.n_frames
    typer.echo(json.dumps({"out": str(out), "cells": cells, "digest": result.digest}))


@app.command("eval")
def evaluate(
    grid: Path = typer.Option(..., "--grid", help="Directory with a grid manifest"),
    reference: Path = typer.Option(..., "--reference", help="Reference grid directory"),
    out: Optional[Path] = typer.Option(None, "--out", "-o", help="Write report here"),
    slice_view: Optional[int] = typer.Option(None, "--slice-view"),
    slice_row: Optional[int] = typer.Option(None, "--slice-row"),
):
    """Compare a grid with a reference grid and print the metrics report."""
    try:
        candidate = read_manifest(grid)
        ref = read_manifest(reference)
        same = candidate.manifest.config_digest == ref.manifest.config_digest
        report = evaluate_grid(candidate.frames, ref.frames, digest_match=same)
        payload = json.dumps(report.to_dict(), sort_keys=True)
        if out is not None:
            out.mkdir(parents=True, exist_ok=True)
            (out / "metrics.json").write_text(payload)
            if slice_view is not None:
                y = candidate.manifest.height // 2 if slice_row is None else slice_row
                image = xt_slice(candidate.frames, slice_view, y)
                save_frame(out / f"xt_view{slice_view:03d}_row{y:03d}.png", image)
    except (VidgridError, OSError) as e:
        _fail(e)
    typer.echo(payload)


def main():
    app()


if __name__ == "__main__":
    main()
