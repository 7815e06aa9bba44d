#!/usr/bin/env python3
"""
Tests for the noise schedule, Euler updates and the warp-guided clip sampler.
"""

import math

import numpy as np
import pytest

from vidgrid.backends.base import Condition
from vidgrid.backends.reference import (
    GaussianAnalyticDenoiser,
    IdealDenoiser,
    IdentityDenoiser,
)
from vidgrid.errors import BackendError, InvalidInputError
from vidgrid.sampling.edm import (
    AnnealingParams,
    NoiseSchedule,
    euler_step,
    guided_euler_step,
    make_schedule,
    renoise,
    sample_warp_guided_clip,
    warp_guided_estimate,
)
from vidgrid.sampling.noise import NoiseSource
from vidgrid.sampling.state import Axis, ClipState, GridLine
from vidgrid.warp import WarpedClip, warp_video_row


def _state(value, shape=(1, 1, 1, 1), sigma=1.0):
    return ClipState(np.full(shape, value, dtype=np.float64), sigma)


def test_single_step_schedule():
    """One step goes straight from sigma_max to zero."""
    assert make_schedule(1, 0.002, 80.0, 7.0).sigmas == (80.0, 0.0)


def test_three_step_linear_schedule():
    """rho = 1 spaces the levels linearly."""
    sigmas = make_schedule(3, 0.1, 1.0, 1.0).sigmas
    np.testing.assert_allclose(sigmas, [1.0, 0.55, 0.1, 0.0], atol=1e-12)


def test_default_schedule_shape():
    """The default schedule has T + 1 decreasing levels ending at zero."""
    schedule = make_schedule(25, 0.002, 80.0, 7.0)
    assert schedule.steps == 25
    assert schedule.sigmas[0] == pytest.approx(80.0)
    assert schedule.sigmas[-2] == pytest.approx(0.002)
    assert schedule.sigmas[-1] == 0.0


def test_schedule_validation():
    """Bad schedule parameters are rejected."""
    with pytest.raises(InvalidInputError):
        make_schedule(0, 0.002, 80.0, 7.0)
    with pytest.raises(InvalidInputError):
        make_schedule(5, 1.0, 0.5, 7.0)
    with pytest.raises(InvalidInputError):
        make_schedule(5, 0.002, 80.0, float("nan"))
    with pytest.raises(InvalidInputError):
        NoiseSchedule((1.0, 2.0, 0.0))


def test_euler_step_scalar():
    """x_t = 2, estimate 0, sigma 1 -> 0.5 gives 1."""
    out = euler_step(_state(2.0), np.zeros((1, 1, 1, 1)), 1.0, 0.5)
    assert out.frames.item() == 1.0
    assert out.sigma == 0.5


def test_euler_step_to_zero_returns_estimate():
    """Stepping to sigma 0 returns the estimate exactly."""
    x_hat = np.array([[[[0.3]]]])
    assert euler_step(_state(5.0), x_hat, 2.0, 0.0).frames.item() == 0.3


def test_euler_step_fixed_point():
    """An estimate equal to the state leaves it unchanged."""
    x = _state(0.7)
    assert euler_step(x, x.frames.copy(), 1.0, 0.25).frames.item() == 0.7


def test_euler_step_rejects_bad_levels():
    """The level must decrease and start above zero."""
    with pytest.raises(InvalidInputError):
        euler_step(_state(1.0), np.zeros((1, 1, 1, 1)), 1.0, 1.0)
    with pytest.raises(InvalidInputError):
        euler_step(_state(1.0, sigma=0.0), np.zeros((1, 1, 1, 1)), 0.0, 0.0)


def _warp(value, mask):
    frames = np.full((1, 1, 1, 1), value, dtype=np.float64)
    return WarpedClip(frames, np.full((1, 1, 1), mask, dtype=np.uint8))


def test_warp_guided_estimate_masks(rng):
    """Holes keep the estimate; visible pixels take the warp."""
    x_hat = rng.random((2, 3, 3, 1))
    warped = rng.random((2, 3, 3, 1))
    holes = WarpedClip(warped, np.ones((2, 3, 3), dtype=np.uint8))
    visible = WarpedClip(warped, np.zeros((2, 3, 3), dtype=np.uint8))
    np.testing.assert_array_equal(warp_guided_estimate(x_hat, holes), x_hat)
    np.testing.assert_array_equal(warp_guided_estimate(x_hat, visible), warped)
    assert warp_guided_estimate(np.full((1, 1, 1, 1), 0.7), _warp(0.2, 0)).item() == 0.2


def test_guided_step_with_all_holes_is_plain_step(rng):
    """With every pixel missing the guided step equals the plain step bit for bit."""
    x = ClipState(rng.standard_normal((2, 4, 4, 3)).astype(np.float32), 3.0)
    x_hat = rng.random((2, 4, 4, 3)).astype(np.float32)
    holes = WarpedClip.holes((2, 4, 4, 3))
    guided = guided_euler_step(x, x_hat, holes, 3.0, 1.5)
    plain = euler_step(x, x_hat, 3.0, 1.5)
    np.testing.assert_array_equal(guided.frames, plain.frames)


def test_guided_step_to_zero_pins_visible_pixels(rng):
    """At sigma 0 every visible pixel equals the warp exactly."""
    x = ClipState(rng.standard_normal((2, 4, 4, 1)), 1.0)
    warped = rng.random((2, 4, 4, 1))
    masks = (rng.random((2, 4, 4)) < 0.3).astype(np.uint8)
    x_hat = rng.random((2, 4, 4, 1))
    out = guided_euler_step(x, x_hat, WarpedClip(warped, masks), 1.0, 0.0)
    visible = masks == 0
    np.testing.assert_array_equal(out.frames[visible], warped[visible])


def test_guided_step_scalar():
    """x_t = 2, estimate 1, warp 0 on a visible pixel, sigma 1 -> 0.5 gives 0.5."""
    x_hat = np.ones((1, 1, 1, 1))
    out = guided_euler_step(_state(2.0), x_hat, _warp(0.0, 0), 1.0, 0.5)
    assert out.frames.item() == 0.5


def test_renoise_same_level_is_identity():
    """Re-noising to the same level changes nothing."""
    x = _state(0.4, sigma=0.5)
    assert renoise(x, 0.5, 0.5, NoiseSource(0)).frames.item() == 0.4


def test_renoise_variance():
    """Added noise has variance sigma_t^2 - sigma_prev^2."""
    x = ClipState(np.zeros((10, 10, 10, 10), dtype=np.float32), 0.6)
    out = renoise(x, 1.0, 0.6, NoiseSource(5))
    assert out.sigma == 1.0
    assert float(out.frames.var()) == pytest.approx(0.64, rel=0.05)
    with pytest.raises(InvalidInputError):
        renoise(x, 0.5, 0.6, NoiseSource(5))


def test_renoise_is_seeded():
    """The same seed gives bit-identical noise."""
    x = ClipState(np.zeros((2, 3, 3, 1), dtype=np.float32), 0.5)
    a = renoise(x, 1.0, 0.5, NoiseSource(3, ("k",)))
    b = renoise(x, 1.0, 0.5, NoiseSource(3, ("k",)))
    c = renoise(x, 1.0, 0.5, NoiseSource(4, ("k",)))
    np.testing.assert_array_equal(a.frames, b.frames)
    assert not np.array_equal(a.frames, c.frames)


def _gaussian_contraction(schedule, tau=1.0):
    factor = 1.0
    for s, s_prev in schedule.pairs():
        factor *= (tau**2 + s * s_prev) / (tau**2 + s**2)
    return factor


def test_gaussian_prior_sample_statistics():
    """With a Gaussian prior and no guidance the samples stay close to N(0, 1)."""
    schedule = make_schedule(100, 0.002, 80.0, 7.0)
    shape = (10, 10, 10, 1)
    cond = Condition((0, 0), np.zeros((10, 10, 1), dtype=np.float32))
    out = sample_warp_guided_clip(
        GaussianAnalyticDenoiser(0.0, 1.0),
        WarpedClip.holes(shape),
        cond,
        schedule,
        AnnealingParams(t_guide=0),
        NoiseSource(11),
    )
    assert out.dtype == np.float32
    assert abs(float(out.mean())) < 4.0 / math.sqrt(out.size)
    assert 0.8 <= float(out.var()) <= 1.2


def test_gaussian_prior_matches_closed_form():
    """Euler steps with the analytic denoiser shrink the noise by a known factor."""
    schedule = make_schedule(25, 0.002, 80.0, 7.0)
    shape = (10, 10, 10, 1)
    cond = Condition((0, 0), np.zeros((10, 10, 1), dtype=np.float32))
    rng = NoiseSource(2)
    out = sample_warp_guided_clip(
        GaussianAnalyticDenoiser(0.0, 1.0),
        WarpedClip.holes(shape),
        cond,
        schedule,
        AnnealingParams(t_guide=0),
        rng,
    )
    factor = _gaussian_contraction(schedule)
    eps = rng.child("init").normal(shape)
    expected = schedule.sigma_max * factor * eps.astype(np.float64)
    np.testing.assert_allclose(out, expected, rtol=1e-4, atol=1e-6)
    predicted = (schedule.sigma_max * factor) ** 2
    assert float(out.var()) == pytest.approx(predicted, rel=0.15)


def _ideal_setup(scene, trajectory, K):
    truth, depths = scene.render_grid(trajectory, K)
    warped = warp_video_row(list(truth[0]), list(depths[0]), trajectory, K)
    return truth, warped


def test_ideal_denoiser_recovers_truth(scene, trajectory, K):
    """With the ideal denoiser the sampler returns the ground-truth column."""
    truth, warped = _ideal_setup(scene, trajectory, K)
    line = GridLine(Axis.CAMERA, 0)
    schedule = make_schedule(6, 0.002, 80.0, 7.0)
    out = sample_warp_guided_clip(
        IdealDenoiser(truth),
        warped.column(0),
        Condition((0, 0), truth[0, 0].astype(np.float32)),
        schedule,
        AnnealingParams(t_guide=3),
        NoiseSource(0),
        line=line,
    )
    assert np.max(np.abs(out - truth[:, 0])) <= 1e-6


def test_annealing_rounds_do_not_change_ideal_result(scene, trajectory, K):
    """One or three rounds give the same clip with the ideal denoiser."""
    truth, warped = _ideal_setup(scene, trajectory, K)
    line = GridLine(Axis.TIME, 2)
    schedule = make_schedule(6, 0.002, 80.0, 7.0)
    cond = Condition((2, 0), truth[2, 0].astype(np.float32))
    runs = [
        sample_warp_guided_clip(
            IdealDenoiser(truth),
            warped.row(2),
            cond,
            schedule,
            params,
            NoiseSource(9),
            line=line,
        )
        for params in (AnnealingParams(3, 3, 2), AnnealingParams(3, 1, 1))
    ]
    np.testing.assert_allclose(runs[0], runs[1], atol=1e-6)


def test_full_guidance_returns_warp(rng):
    """Guiding every step with an all-visible warp reproduces the warp exactly."""
    shape = (3, 4, 4, 3)
    frames = rng.random(shape).astype(np.float32)
    warped = WarpedClip(frames, np.zeros(shape[:3], dtype=np.uint8))
    schedule = make_schedule(5, 0.002, 80.0, 7.0)
    out = sample_warp_guided_clip(
        GaussianAnalyticDenoiser(0.5, 0.3),
        warped,
        Condition((0, 0), frames[0]),
        schedule,
        AnnealingParams(t_guide=schedule.steps, r_total=1, r_guide=1),
        NoiseSource(1),
    )
    np.testing.assert_array_equal(out, frames)


def test_sampler_is_deterministic():
    """Same seed and config give bit-identical clips."""
    shape = (3, 4, 4, 1)
    cond = Condition((0, 0), np.zeros((4, 4, 1), dtype=np.float32))
    schedule = make_schedule(4, 0.002, 80.0, 7.0)

    def run(seed):
        return sample_warp_guided_clip(
            GaussianAnalyticDenoiser(),
            WarpedClip.holes(shape),
            cond,
            schedule,
            AnnealingParams(2),
            NoiseSource(seed),
        )

    np.testing.assert_array_equal(run(4), run(4))
    assert not np.array_equal(run(4), run(5))


def test_sampler_rejects_long_guidance():
    """t_guide cannot exceed the number of steps."""
    schedule = make_schedule(2, 0.002, 80.0, 7.0)
    with pytest.raises(InvalidInputError):
        sample_warp_guided_clip(
            IdentityDenoiser(),
            WarpedClip.holes((2, 2, 2, 1)),
            Condition((0, 0), np.zeros((2, 2, 1), dtype=np.float32)),
            schedule,
            AnnealingParams(3),
            NoiseSource(0),
        )


def test_sampler_reports_failing_step():
    """Denoiser failures carry the step and noise level."""

    class Broken(IdentityDenoiser):
        def _denoise(self, x_t, sigma, condition, warped):
            raise RuntimeError("out of memory")

    schedule = make_schedule(3, 0.002, 80.0, 7.0)
    with pytest.raises(BackendError) as info:
        sample_warp_guided_clip(
            Broken(),
            WarpedClip.holes((2, 2, 2, 1)),
            Condition((0, 0), np.zeros((2, 2, 1), dtype=np.float32)),
            schedule,
            AnnealingParams(1),
            NoiseSource(0),
        )
    assert info.value.context["step"] == 0
    assert info.value.context["sigma"] == schedule.sigmas[0]
