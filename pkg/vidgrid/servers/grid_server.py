from mcp.server.fastmcp import FastMCP
import sys
import logging
from pathlib import Path
from typing import Optional

from vidgrid.config import config_digest, describe, load_config, with_overrides
from vidgrid.errors import ConfigError, VidgridError
from vidgrid.io.manifest import read_manifest, write_manifest
from vidgrid.io.metrics import evaluate_grid as grid_metrics
from vidgrid.pipeline import prepare_inputs, run_pipeline

# Set up logging to stderr; stdout carries the MCP stdio transport
logging.basicConfig(
    level=logging.INFO,
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    stream=sys.stderr,
)
logger = logging.getLogger("VidGrid")

mcp = FastMCP("VidGrid", dependencies=["numpy", "pypng", "rdflib", "pydantic"])


def _error(tool: str, e: Exception) -> dict:
    logger.error(f"Error in {tool}: {e}")
    if isinstance(e, VidgridError):
        return e.to_dict()
    return {"error": type(e).__name__, "message": str(e), "context": {}}


@mcp.tool()
def describe_config(config_path: str) -> dict:
    """Validate a pipeline config and summarise the grid, schedule and ablations"""
    try:
        return describe(load_config(config_path))
    except Exception as e:
        return _error("describe_config", e)


@mcp.tool()
def render_synthetic(config_path: str, out_dir: str) -> dict:
    """Write the ground-truth grid of the configured synthetic scene"""
    try:
        config = load_config(config_path)
        inputs = prepare_inputs(config)
        if inputs.truth is None:
            raise ConfigError("render_synthetic needs a [scene] block")
        manifest = write_manifest(
            Path(out_dir),
            inputs.truth,
            config.seed,
            config_digest(config),
            config.trajectory.model_dump(mode="json"),
            bit_depth=config.output.bit_depth,
        )
        return {
            "out": out_dir,
            "cells": manifest.n_views * manifest.n_frames,
            "digest": manifest.config_digest,
        }
    except Exception as e:
        return _error("render_synthetic", e)


@mcp.tool()
def fill_grid(
    config_path: str,
    out_dir: str,
    seed: Optional[int] = None,
    backend: Optional[str] = None,
    no_warp_guidance: bool = False,
    no_stbi: bool = False,
    parallel: bool = False,
) -> dict:
    """Run the full pipeline and write the completed grid to out_dir"""
    try:
        config = with_overrides(
            load_config(config_path),
            seed,
            backend,
            no_warp_guidance,
            no_stbi,
            parallel,
        )
        result = run_pipeline(config, Path(out_dir))
        return {
            "out": out_dir,
            "cells": result.grid.n_views * result.grid.n_frames,
            "seed": config.seed,
            "digest": result.digest,
        }
    except Exception as e:
        return _error("fill_grid", e)


@mcp.tool()
def evaluate_grid(grid_dir: str, reference_dir: str) -> dict:
    """PSNR of every grid cell against a reference grid, plus boundary checks"""
    try:
        candidate = read_manifest(grid_dir)
        reference = read_manifest(reference_dir)
        same = candidate.manifest.config_digest == reference.manifest.config_digest
        report = grid_metrics(candidate.frames, reference.frames, digest_match=same)
        return report.to_dict()
    except Exception as e:
        return _error("evaluate_grid", e)


def main():
    print("VidGrid MCP server starting...", file=sys.stderr)
    mcp.run()


if __name__ == "__main__":
    main()
