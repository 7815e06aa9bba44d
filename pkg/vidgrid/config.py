"""Pipeline configuration: TOML on disk, pydantic models in memory.

See README.md for the full schema. Every block has defaults, so an empty file is a
valid config for the 64×64 synthetic demo.
"""

from __future__ import annotations

import hashlib
import json
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from vidgrid.errors import ConfigError
from vidgrid.geometry.camera import Intrinsics
from vidgrid.geometry.trajectory import (
    Trajectory,
    complex_waypoints,
    make_complex_trajectory,
    make_dolly_trajectory,
    make_elevation_trajectory,
    make_orbit_trajectory,
    make_translate_trajectory,
)
from vidgrid.grid import GridSettings
from vidgrid.sampling.bidi import BidiStepConfig, ResidualMode
from vidgrid.sampling.edm import AnnealingParams, NoiseSchedule, make_schedule
from vidgrid.scene import SyntheticScene


class _Block(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class GridConfig(_Block):
    n_views: int = Field(9, ge=2)
    n_frames: int = Field(9, ge=2)
    width: int = Field(64, ge=1)
    height: int = Field(64, ge=1)
    channels: Literal[1, 3] = 3


class TrajectoryConfig(_Block):
    kind: Literal["orbit", "dolly", "elevation", "complex", "translate"] = "translate"
    # translate
    offset: tuple[float, float, float] = (0.5, 0.0, 0.0)
    # orbit
    center_depth: float = 2.0
    max_angle: float = 0.0
    # dolly
    distance: float = 0.0
    zoom_subject_depth: float | None = None
    # elevation
    height: float = 0.0
    # elevation and complex
    pivot_depth: float = 2.0
    # complex: explicit waypoints, or one of the two presets
    waypoints: list[tuple[float, float, float]] | None = None
    variant: Literal["in_out", "out_in"] = "in_out"
    lateral: float = 0.2
    depth: float = 0.5

    def build(self, n_views: int) -> Trajectory:
        if self.kind == "translate":
            return make_translate_trajectory(self.offset, n_views)
        if self.kind == "orbit":
            return make_orbit_trajectory(self.center_depth, self.max_angle, n_views)
        if self.kind == "dolly":
            return make_dolly_trajectory(
                self.distance, n_views, self.zoom_subject_depth
            )
        if self.kind == "elevation":
            return make_elevation_trajectory(self.height, self.pivot_depth, n_views)
        waypoints = self.waypoints or complex_waypoints(
            self.variant, self.depth, self.lateral
        )
        return make_complex_trajectory(waypoints, self.pivot_depth, n_views)


class IntrinsicsConfig(_Block):
    # None: focal = width, principal point at the image centre
    focal: float | None = None
    cx: float | None = None
    cy: float | None = None

    def build(self, width: int, height: int) -> Intrinsics:
        base = Intrinsics.centered(width, height, self.focal)
        return Intrinsics(
            base.fx,
            base.fy,
            base.cx if self.cx is None else self.cx,
            base.cy if self.cy is None else self.cy,
            width,
            height,
        )


class SamplerConfig(_Block):
    steps: int = Field(25, ge=1)
    sigma_min: float = Field(0.002, gt=0)
    sigma_max: float = Field(80.0, gt=0)
    rho: float = Field(7.0, gt=0)

    def schedule(self) -> NoiseSchedule:
        return make_schedule(self.steps, self.sigma_min, self.sigma_max, self.rho)


class AnnealingConfig(_Block):
    # None: half the sampler steps
    t_guide: int | None = Field(None, ge=0)
    r_total: int = Field(3, ge=1)
    r_guide: int = Field(2, ge=1)

    def build(self, steps: int) -> AnnealingParams:
        t_guide = steps // 2 if self.t_guide is None else self.t_guide
        if t_guide > steps:
            raise ConfigError(
                "annealing.t_guide cannot exceed sampler.steps",
                t_guide=t_guide,
                steps=steps,
            )
        return AnnealingParams(t_guide, self.r_total, self.r_guide)


class InterpolationConfig(_Block):
    residual_mode: ResidualMode = ResidualMode.UNCONDITIONAL


class SceneConfig(_Block):
    z_bg: float = 4.0
    z_fg: float = 2.0
    fg_size: tuple[int, int] = (16, 16)
    fg_start: tuple[int, int] = (16, 24)
    motion: Literal["linear", "circular", "static"] = "linear"
    velocity: tuple[int, int] = (2, 0)
    radius: float = 0.0
    period: float = 8.0
    checker: int = 8
    texture_seed: int = 0

    def build(self, grid: GridConfig, focal: float | None = None) -> SyntheticScene:
        return SyntheticScene(
            width=grid.width,
            height=grid.height,
            channels=grid.channels,
            n_frames=grid.n_frames,
            focal=focal,
            **self.model_dump(),
        )


class InputConfig(_Block):
    """A real input video: one PNG and one PFM depth map per frame."""

    frames: list[str]
    depths: list[str]

    @model_validator(mode="after")
    def _same_length(self):
        if len(self.frames) != len(self.depths):
            raise ValueError("input frames and depths must have the same length")
        return self


class BackendConfig(_Block):
    kind: Literal["ideal", "noisy-ideal", "gaussian", "identity", "external"] = "ideal"
    command: str | None = None
    timeout: float = Field(300.0, gt=0)
    # noisy-ideal
    amplitude: float = Field(0.1, ge=0)
    spread: float = Field(0.02, ge=0)
    noise_seed: int = 0
    # gaussian
    mu: float = 0.0
    tau: float = Field(1.0, gt=0)

    @model_validator(mode="after")
    def _command_for_external(self):
        if self.kind == "external" and not self.command:
            raise ValueError("the external backend needs a command")
        return self


class AblationConfig(_Block):
    disable_warp_guidance: bool = False
    disable_stbi: bool = False
    skip_known_lines: bool = False
    symmetric_renoise: bool = False


class OutputConfig(_Block):
    bit_depth: Literal[8, 16] = 16


class PipelineConfig(_Block):
    grid: GridConfig = GridConfig()
    trajectory: TrajectoryConfig = TrajectoryConfig()
    intrinsics: IntrinsicsConfig = IntrinsicsConfig()
    sampler: SamplerConfig = SamplerConfig()
    annealing: AnnealingConfig = AnnealingConfig()
    interpolation: InterpolationConfig = InterpolationConfig()
    scene: SceneConfig | None = SceneConfig()
    input: InputConfig | None = None
    backend: BackendConfig = BackendConfig()
    ablation: AblationConfig = AblationConfig()
    output: OutputConfig = OutputConfig()
    seed: int = Field(0, ge=0)
    parallel: bool = False
    max_workers: int | None = Field(None, ge=1)

    @model_validator(mode="after")
    def _check(self):
        if self.input is None and self.scene is None:
            raise ValueError("need either an [input] video or a [scene]")
        if self.input is not None and len(self.input.frames) != self.grid.n_frames:
            raise ValueError("[input] must list exactly grid.n_frames frames")
        if self.backend.kind in ("ideal", "noisy-ideal") and self.scene is None:
            raise ValueError(f"the {self.backend.kind} backend needs a [scene]")
        if self.sampler.sigma_min >= self.sampler.sigma_max:
            raise ValueError("sampler.sigma_min must be below sampler.sigma_max")
        if self.annealing.r_guide > self.annealing.r_total:
            raise ValueError("annealing.r_guide cannot exceed annealing.r_total")
        t_guide = self.annealing.t_guide
        if t_guide is not None and t_guide > self.sampler.steps:
            raise ValueError("annealing.t_guide cannot exceed sampler.steps")
        return self

    def intrinsics_for_grid(self) -> Intrinsics:
        return self.intrinsics.build(self.grid.width, self.grid.height)

    def build_scene(self) -> SyntheticScene | None:
        if self.scene is None:
            return None
        return self.scene.build(self.grid, self.intrinsics.focal)

    def settings(self) -> GridSettings:
        schedule = self.sampler.schedule()
        return GridSettings(
            schedule=schedule,
            annealing=self.annealing.build(schedule.steps),
            bidi=BidiStepConfig(self.interpolation.residual_mode),
            disable_warp_guidance=self.ablation.disable_warp_guidance,
            disable_stbi=self.ablation.disable_stbi,
            skip_known_lines=self.ablation.skip_known_lines,
            symmetric_renoise=self.ablation.symmetric_renoise,
            parallel=self.parallel,
            max_workers=self.max_workers,
        )


def parse_backend_flag(flag: str) -> dict:
    """``ideal`` / ``gaussian`` / ``external:<command>`` to backend block fields."""
    kind, sep, command = flag.partition(":")
    if kind == "external":
        if not command:
            raise ConfigError("external backend flag needs a command: external:<cmd>")
        return {"kind": "external", "command": command}
    if sep:
        raise ConfigError(f"only the external backend takes a command: {flag!r}")
    return {"kind": kind}


def with_overrides(
    config: PipelineConfig,
    seed: int | None = None,
    backend: str | None = None,
    no_warp_guidance: bool = False,
    no_stbi: bool = False,
    parallel: bool = False,
) -> PipelineConfig:
    """Apply command-line overrides and re-validate the result."""
    data = config.model_dump(mode="json")
    if seed is not None:
        data["seed"] = seed
    if backend is not None:
        data["backend"] = {**data["backend"], **parse_backend_flag(backend)}
    if no_warp_guidance:
        data["ablation"]["disable_warp_guidance"] = True
    if no_stbi:
        data["ablation"]["disable_stbi"] = True
    if parallel:
        data["parallel"] = True
    return validate_config(data)


def validate_config(data: dict, source: str | None = None) -> PipelineConfig:
    try:
        return PipelineConfig.model_validate(data)
    except ValidationError as e:
        errors = [
            {"loc": ".".join(str(p) for p in err["loc"]), "msg": err["msg"]}
            for err in e.errors()
        ]
        raise ConfigError(
            "invalid pipeline config", source=source, errors=errors
        ) from e


def load_config(path: str | Path) -> PipelineConfig:
    """Read and validate a TOML config.

    Relative input paths resolve against the config's folder.
    """
    path = Path(path)
    try:
        with open(path, "rb") as f:
            data = tomllib.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}", source=str(path)) from e
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"config is not valid TOML: {e}", source=str(path)) from e
    block = data.get("input")
    if isinstance(block, dict):
        for key in ("frames", "depths"):
            if isinstance(block.get(key), list):
                block[key] = [
                    str(p) if Path(p).is_absolute() else str(path.parent / p)
                    for p in block[key]
                ]
    return validate_config(data, source=str(path))


def config_digest(config: PipelineConfig) -> str:
    """SHA-256 over the canonical JSON form of the config."""
    canonical = json.dumps(
        config.model_dump(mode="json"), sort_keys=True, separators=(",", ":")
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def describe(config: PipelineConfig) -> dict:
    """Summary used by the CLI and the MCP server."""
    settings = config.settings()
    return {
        "grid": [config.grid.n_views, config.grid.n_frames],
        "frame": [config.grid.height, config.grid.width, config.grid.channels],
        "trajectory": config.trajectory.kind,
        "backend": config.backend.kind,
        "steps": settings.schedule.steps,
        "sigmas": [float(np.round(s, 6)) for s in settings.schedule.sigmas],
        "annealing": {
            "t_guide": settings.annealing.t_guide,
            "r_total": settings.annealing.r_total,
            "r_guide": settings.annealing.r_guide,
        },
        "ablation": config.ablation.model_dump(),
        "seed": config.seed,
        "digest": config_digest(config),
    }
