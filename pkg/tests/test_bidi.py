#!/usr/bin/env python3
"""
Tests for bidirectional interpolation between two known end frames.
"""

import numpy as np
import pytest

from vidgrid.backends.base import (
    BackendDescriptor,
    Condition,
    DenoiseOutput,
    DenoiserBackend,
)
from vidgrid.backends.reference import (
    GaussianAnalyticDenoiser,
    IdealDenoiser,
    IdentityDenoiser,
)
from vidgrid.errors import InvalidInputError
from vidgrid.sampling.bidi import (
    BidiStepConfig,
    Pins,
    ResidualMode,
    bidi_step,
    interpolate_clip,
)
from vidgrid.sampling.edm import make_schedule
from vidgrid.sampling.noise import NoiseSource
from vidgrid.sampling.state import Axis, ClipState, GridLine
from vidgrid.warp import WarpedClip, warp_video_row


class SplitDenoiser(DenoiserBackend):
    """Conditional estimate 0, unconditional estimate 1."""

    _descriptor = BackendDescriptor("split", has_unconditional=True)

    @property
    def descriptor(self):
        return self._descriptor

    def _denoise(self, x_t, sigma, condition, warped):
        shape = x_t.frames.shape
        dtype = x_t.frames.dtype
        return DenoiseOutput(np.zeros(shape, dtype), np.ones(shape, dtype))


def _conditions(frames):
    return Condition((0, 0), frames[0]), Condition((len(frames) - 1, 0), frames[-1])


def test_ideal_step_to_zero_returns_truth(scene, trajectory, K):
    """With no warp and the ideal denoiser one step to zero lands on the truth."""
    truth = scene.render_grid(trajectory, K)[0].astype(np.float32)
    line = GridLine(Axis.TIME, 1)
    clip = truth[1]
    x = ClipState(np.random.default_rng(0).standard_normal(clip.shape), 2.0)
    x = x.with_frames(x.frames.astype(np.float32), 2.0)
    c_start, c_end = _conditions(clip)
    out = bidi_step(
        x,
        2.0,
        0.0,
        c_start,
        c_end,
        None,
        IdealDenoiser(truth, line=line),
        NoiseSource(0),
    )
    np.testing.assert_array_equal(out.frames, clip)
    assert out.sigma == 0.0


def test_visible_warp_pins_everything(rng):
    """All-visible masks at sigma 0 reproduce the warp whatever the denoiser."""
    frames = rng.random((4, 3, 3, 3)).astype(np.float32)
    warped = WarpedClip(frames, np.zeros((4, 3, 3), dtype=np.uint8))
    x = ClipState(rng.standard_normal((4, 3, 3, 3)).astype(np.float32), 1.0)
    c_start, c_end = _conditions(frames)
    out = bidi_step(
        x,
        1.0,
        0.0,
        c_start,
        c_end,
        warped,
        GaussianAnalyticDenoiser(0.3, 0.2),
        NoiseSource(2),
    )
    np.testing.assert_array_equal(out.frames, frames)


def test_reversed_clip_gives_reversed_result(rng):
    """Flipping the clip and swapping the conditions flips the output."""
    frames = rng.random((5, 2, 2, 1)).astype(np.float32)
    masks = (rng.random((5, 2, 2)) < 0.5).astype(np.uint8)
    warped = WarpedClip(frames, masks)
    x = ClipState(rng.standard_normal((5, 2, 2, 1)).astype(np.float32), 3.0)
    c_start, c_end = _conditions(frames)
    denoiser = GaussianAnalyticDenoiser(0.1, 0.5)
    forward = bidi_step(x, 3.0, 1.0, c_start, c_end, warped, denoiser, NoiseSource(8))
    backward = bidi_step(
        x.flip(), 3.0, 1.0, c_end, c_start, warped.flip(), denoiser, NoiseSource(8)
    )
    np.testing.assert_array_equal(backward.frames[::-1], forward.frames)


def test_reversed_clip_over_whole_schedule(rng):
    """Interpolating the mirrored problem gives the mirrored clip at every level."""
    frames = rng.random((5, 3, 3, 2)).astype(np.float32)
    masks = (rng.random((5, 3, 3)) < 0.5).astype(np.uint8)
    warped = WarpedClip(frames, masks)
    pins = Pins(frames, np.array([False, False, True, False, False]))
    c_start, c_end = _conditions(frames)
    schedule = make_schedule(6, 0.002, 10.0, 7.0)
    x = ClipState(10.0 * rng.standard_normal(frames.shape).astype(np.float32), 10.0)
    denoiser = GaussianAnalyticDenoiser(0.4, 0.3)
    forward = interpolate_clip(
        x, c_start, c_end, warped, denoiser, schedule, NoiseSource(5), pins=pins
    )
    backward = interpolate_clip(
        x.flip(),
        c_end,
        c_start,
        warped.flip(),
        denoiser,
        schedule,
        NoiseSource(5),
        pins=pins.flip(),
    )
    np.testing.assert_array_equal(backward[::-1], forward)
    np.testing.assert_array_equal(forward[[0, 2, 4]], frames[[0, 2, 4]])


def test_residual_modes_differ_by_estimate_gap():
    """Unconditional and conditional residuals differ as the two estimates do."""
    x = ClipState(np.full((3, 1, 1, 1), 2.0), 1.0)
    cond = np.zeros((1, 1, 1))
    c_start, c_end = Condition((0, 0), cond), Condition((2, 0), cond)
    outs = {}
    for mode in (ResidualMode.UNCONDITIONAL, ResidualMode.CONDITIONAL):
        outs[mode] = bidi_step(
            x,
            1.0,
            0.5,
            c_start,
            c_end,
            None,
            SplitDenoiser(),
            NoiseSource(4),
            BidiStepConfig(mode),
        ).frames
    gap = outs[ResidualMode.CONDITIONAL][1] - outs[ResidualMode.UNCONDITIONAL][1]
    np.testing.assert_allclose(gap, 0.75, atol=1e-12)


def test_interpolate_clip_ideal(scene, trajectory, K):
    """Interpolating a column with the ideal denoiser recovers the truth."""
    truth, depths = scene.render_grid(trajectory, K)
    warped = warp_video_row(list(truth[0]), list(depths[0]), trajectory, K)
    truth32 = truth.astype(np.float32)
    line = GridLine(Axis.CAMERA, 2)
    out = interpolate_clip(
        None,
        Condition((0, 2), truth32[0, 2]),
        Condition((2, 2), truth32[2, 2]),
        warped.column(2),
        IdealDenoiser(truth),
        make_schedule(5, 0.002, 80.0, 7.0),
        NoiseSource(3),
        line=line,
    )
    assert np.max(np.abs(out - truth[:, 2])) <= 1e-6


def test_interpolate_two_frames_returns_conditions(rng):
    """A two-frame clip is exactly its two conditions."""
    a = rng.random((3, 3, 1)).astype(np.float32)
    b = rng.random((3, 3, 1)).astype(np.float32)
    out = interpolate_clip(
        None,
        Condition((0, 0), a),
        Condition((1, 0), b),
        None,
        IdentityDenoiser(),
        make_schedule(3, 0.002, 80.0, 7.0),
        NoiseSource(0),
        length=2,
    )
    np.testing.assert_array_equal(out[0], a)
    np.testing.assert_array_equal(out[1], b)


def test_interpolate_is_deterministic(rng):
    """The same seed gives bit-identical clips."""
    a = rng.random((2, 2, 1)).astype(np.float32)
    b = rng.random((2, 2, 1)).astype(np.float32)

    def run(seed):
        return interpolate_clip(
            None,
            Condition((0, 0), a),
            Condition((3, 0), b),
            None,
            GaussianAnalyticDenoiser(0.5, 0.3),
            make_schedule(4, 0.002, 80.0, 7.0),
            NoiseSource(seed),
            length=4,
        )

    np.testing.assert_array_equal(run(1), run(1))
    assert not np.array_equal(run(1), run(2))


def test_pins_keep_known_interior_slots(rng):
    """Known interior slots come back exactly once the level reaches zero."""
    frames = rng.random((4, 2, 2, 1)).astype(np.float32)
    pins = Pins(frames, np.array([False, True, False, False]))
    c_start, c_end = _conditions(frames)
    out = interpolate_clip(
        None,
        c_start,
        c_end,
        None,
        GaussianAnalyticDenoiser(),
        make_schedule(3, 0.002, 80.0, 7.0),
        NoiseSource(6),
        pins=pins,
    )
    np.testing.assert_array_equal(out[1], frames[1])
    np.testing.assert_array_equal(out[0], frames[0])


def test_pins_apply_at_zero_is_exact(rng):
    """Pinning at sigma 0 copies the known frames."""
    frames = rng.random((3, 2, 2, 1))
    pins = Pins(frames, np.array([True, False, True]))
    state = ClipState(np.zeros((3, 2, 2, 1)), 0.0)
    out = pins.apply(state, 0.0, NoiseSource(0))
    np.testing.assert_array_equal(out.frames[[0, 2]], frames[[0, 2]])
    assert not out.frames[1].any()


def test_bidi_step_validation(rng):
    """Bad levels, missing conditions and mismatched frames are rejected."""
    x = ClipState(np.zeros((3, 2, 2, 1), dtype=np.float32), 1.0)
    frame = np.zeros((2, 2, 1), dtype=np.float32)
    cond = Condition((0, 0), frame)
    with pytest.raises(InvalidInputError):
        bidi_step(x, 1.0, 1.0, cond, cond, None, IdentityDenoiser(), NoiseSource(0))
    with pytest.raises(InvalidInputError):
        bidi_step(x, 1.0, 0.5, cond, None, None, IdentityDenoiser(), NoiseSource(0))
    wrong = Condition((0, 0), np.zeros((3, 3, 1), dtype=np.float32))
    with pytest.raises(InvalidInputError):
        bidi_step(x, 1.0, 0.5, wrong, cond, None, IdentityDenoiser(), NoiseSource(0))
