"""Build the configured backend."""

from __future__ import annotations

import numpy as np

from vidgrid.backends.base import DenoiserBackend
from vidgrid.backends.external import ExternalProcessDenoiser
from vidgrid.backends.reference import (
    GaussianAnalyticDenoiser,
    IdealDenoiser,
    IdentityDenoiser,
    NoisyIdealDenoiser,
)
from vidgrid.config import BackendConfig
from vidgrid.errors import ConfigError


def make_backend(
    block: BackendConfig, truth: np.ndarray | None = None
) -> DenoiserBackend:
    """``truth`` is the ground-truth grid the ideal backends answer from."""
    if block.kind in ("ideal", "noisy-ideal"):
        if truth is None:
            raise ConfigError(f"the {block.kind} backend needs a synthetic scene")
        if block.kind == "ideal":
            return IdealDenoiser(truth)
        return NoisyIdealDenoiser(
            truth, block.amplitude, block.noise_seed, spread=block.spread
        )
    if block.kind == "gaussian":
        return GaussianAnalyticDenoiser(block.mu, block.tau)
    if block.kind == "identity":
        return IdentityDenoiser()
    return ExternalProcessDenoiser(block.command, block.timeout)
