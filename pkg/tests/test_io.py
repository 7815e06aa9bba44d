#!/usr/bin/env python3
"""
Tests for frame, depth and manifest files.
"""

import numpy as np
import pytest

from vidgrid.errors import (
    DepthValueError,
    FormatError,
    InvalidInputError,
    ManifestIncompleteError,
)
from vidgrid.grid import CellStatus
from vidgrid.io.frames import load_depth, load_frame, save_depth, save_frame
from vidgrid.io.manifest import MANIFEST_NAME, cell_file, read_manifest, write_manifest


def _pfm(path, depth, big_endian=False):
    scale = b"1.0" if big_endian else b"-1.0"
    dtype = ">f4" if big_endian else "<f4"
    H, W = depth.shape
    body = np.flipud(depth).astype(dtype).tobytes()
    path.write_bytes(b"Pf\n%d %d\n%s\n" % (W, H, scale) + body)
    return path


def test_png_8bit_quantisation(tmp_path):
    """A constant 0.5 frame comes back within half a code value."""
    frame = np.full((4, 5, 3), 0.5)
    save_frame(tmp_path / "half.png", frame, bit_depth=8)
    back = load_frame(tmp_path / "half.png")
    assert back.shape == (4, 5, 3) and back.dtype == np.float32
    assert np.abs(back - 0.5).max() <= 1 / 510 + 1e-7


def test_png_16bit_roundtrip(tmp_path, rng):
    """16-bit frames lose at most half a 16-bit step."""
    frame = rng.random((6, 7, 3))
    save_frame(tmp_path / "f.png", frame)
    back = load_frame(tmp_path / "f.png")
    assert np.abs(back - frame).max() <= 1 / (2 * 65535) + 1e-7


def test_png_greyscale_and_clipping(tmp_path):
    """Single-channel frames stay single-channel; values are clipped to [0, 1]."""
    frame = np.array([[-0.5, 0.0], [1.0, 2.0]])[..., None]
    save_frame(tmp_path / "g.png", frame, bit_depth=8)
    back = load_frame(tmp_path / "g.png")
    assert back.shape == (2, 2, 1)
    np.testing.assert_array_equal(back[..., 0], [[0.0, 0.0], [1.0, 1.0]])


def test_save_frame_rejects_bad_input(tmp_path):
    """Unsupported bit depths, shapes and NaNs are refused."""
    with pytest.raises(InvalidInputError):
        save_frame(tmp_path / "x.png", np.zeros((2, 2, 3)), bit_depth=12)
    with pytest.raises(InvalidInputError):
        save_frame(tmp_path / "x.png", np.zeros((2, 2, 2)))
    with pytest.raises(InvalidInputError):
        save_frame(tmp_path / "x.png", np.full((2, 2, 3), np.nan))


def test_corrupt_png_raises_format_error(tmp_path):
    """Garbage bytes and missing files are format errors."""
    bad = tmp_path / "bad.png"
    bad.write_bytes(b"definitely not a png")
    with pytest.raises(FormatError):
        load_frame(bad)
    with pytest.raises(FormatError):
        load_frame(tmp_path / "missing.png")


def test_pfm_roundtrip(tmp_path, rng):
    """Depth maps survive a PFM write and read exactly."""
    depth = rng.uniform(0.5, 5.0, size=(5, 7)).astype(np.float32)
    save_depth(tmp_path / "d.pfm", depth)
    np.testing.assert_array_equal(load_depth(tmp_path / "d.pfm"), depth)


def test_pfm_big_endian(tmp_path):
    """A positive scale field means big-endian samples."""
    depth = np.arange(1, 13, dtype=np.float32).reshape(3, 4)
    path = _pfm(tmp_path / "be.pfm", depth, big_endian=True)
    np.testing.assert_array_equal(load_depth(path), depth)


def test_zero_depth_names_the_pixel(tmp_path):
    """Non-positive depth is reported with its row and column."""
    depth = np.ones((4, 5), dtype=np.float32)
    depth[1, 2] = 0.0
    with pytest.raises(DepthValueError) as err:
        load_depth(_pfm(tmp_path / "z.pfm", depth))
    assert (err.value.context["row"], err.value.context["col"]) == (1, 2)
    assert "row 1, col 2" in str(err.value)
    with pytest.raises(DepthValueError):
        save_depth(tmp_path / "z2.pfm", depth)


def test_malformed_pfm(tmp_path):
    """Wrong tags and truncated rasters are format errors."""
    colour = tmp_path / "c.pfm"
    colour.write_bytes(b"PF\n1 1\n-1.0\n" + bytes(12))
    with pytest.raises(FormatError):
        load_depth(colour)
    short = tmp_path / "s.pfm"
    short.write_bytes(b"Pf\n2 2\n-1.0\n" + bytes(8))
    with pytest.raises(FormatError):
        load_depth(short)
    with pytest.raises(FormatError):
        load_depth(tmp_path / "none.pfm")


def test_manifest_roundtrip(tmp_path, rng):
    """Quantised grids come back from the manifest with their metadata."""
    frames = np.round(rng.random((3, 3, 4, 4, 3)) * 65535) / 65535
    statuses = np.full((3, 3), CellStatus.FINAL)
    statuses[1, 1] = CellStatus.WARPED
    write_manifest(
        tmp_path, frames, 7, "abc123", {"kind": "translate"}, statuses=statuses
    )
    loaded = read_manifest(tmp_path)
    m = loaded.manifest
    assert (m.n_views, m.n_frames, m.height, m.width, m.channels) == (3, 3, 4, 4, 3)
    assert (m.seed, m.config_digest, m.bit_depth) == (7, "abc123", 16)
    assert m.trajectory == {"kind": "translate"}
    assert m.statuses[(1, 1)] == "WARPED" and m.statuses[(0, 2)] == "FINAL"
    assert m.files[(2, 1)] == cell_file(2, 1)
    np.testing.assert_allclose(loaded.frames, frames, atol=1e-7)
    np.testing.assert_array_equal(loaded.cell(2, 1), loaded.frames[2, 1])


def test_manifest_lists_missing_cells(tmp_path):
    """Every missing cell file is named in one error."""
    write_manifest(tmp_path, np.zeros((3, 3, 2, 2, 1)), 0, "d")
    (tmp_path / cell_file(1, 2)).unlink()
    (tmp_path / cell_file(2, 0)).unlink()
    with pytest.raises(ManifestIncompleteError) as err:
        read_manifest(tmp_path)
    assert "view 1 time 2" in str(err.value)
    assert "view 2 time 0" in str(err.value)
    assert err.value.context["missing"] == [(1, 2), (2, 0)]


def test_read_manifest_errors(tmp_path):
    """Missing or unparsable manifests are format errors."""
    with pytest.raises(FormatError):
        read_manifest(tmp_path)
    (tmp_path / MANIFEST_NAME).write_text("this is @@ not turtle")
    with pytest.raises(FormatError):
        read_manifest(tmp_path)
