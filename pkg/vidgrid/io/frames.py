"""Frame and depth files: 8/16-bit PNG through pypng, single-channel PFM for depth."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np
import png

from vidgrid.errors import DepthValueError, FormatError, InvalidInputError

_PFM_HEADER = re.compile(rb"^(P[fF])\s+(\d+)\s+(\d+)\s+(\S+)\s")


def save_frame(path: str | Path, frame: np.ndarray, bit_depth: int = 16) -> None:
    """Write an ``(H, W, 1|3)`` or ``(H, W)`` frame with values clipped to [0, 1]."""
    if bit_depth not in (8, 16):
        raise InvalidInputError("bit depth must be 8 or 16", bit_depth=bit_depth)
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim == 2:
        frame = frame[..., None]
    if frame.ndim != 3 or frame.shape[2] not in (1, 3):
        raise InvalidInputError("frames must be (H, W, 1|3)", shape=frame.shape)
    if not np.all(np.isfinite(frame)):
        raise InvalidInputError("frame holds non-finite values", path=str(path))
    H, W, C = frame.shape
    maxval = (1 << bit_depth) - 1
    dtype = np.uint8 if bit_depth == 8 else np.uint16
    q = np.round(np.clip(frame, 0.0, 1.0) * maxval).astype(dtype)
    writer = png.Writer(width=W, height=H, greyscale=(C == 1), bitdepth=bit_depth)
    with open(path, "wb") as f:
        writer.write(f, q.reshape(H, W * C))


def load_frame(path: str | Path) -> np.ndarray:
    """Read a PNG as float32 ``(H, W, C)`` in [0, 1]; alpha is dropped."""
    try:
        width, height, rows, info = png.Reader(filename=str(path)).asDirect()
        data = np.vstack([np.asarray(row, dtype=np.uint16) for row in rows])
    except png.Error as e:
        raise FormatError(f"not a readable PNG: {e}", path=str(path)) from e
    except OSError as e:
        raise FormatError(f"cannot read frame: {e}", path=str(path)) from e
    bit_depth = info["bitdepth"]
    if bit_depth not in (8, 16):
        raise FormatError(
            "unsupported PNG bit depth", path=str(path), bit_depth=bit_depth
        )
    planes = info["planes"]
    data = data.reshape(height, width, planes)
    if info.get("alpha"):
        data = data[..., : planes - 1]
    maxval = (1 << bit_depth) - 1
    return (data.astype(np.float64) / maxval).astype(np.float32)


def check_depth(depth: np.ndarray, source: str | None = None) -> None:
    bad = ~(np.isfinite(depth) & (depth > 0))
    if bad.any():
        v, u = (int(c) for c in np.argwhere(bad)[0])
        raise DepthValueError(
            f"depth must be finite and positive, got {depth[v, u]} at row {v}, col {u}",
            row=v,
            col=u,
            bad_pixels=int(bad.sum()),
            path=source,
        )


def save_depth(path: str | Path, depth: np.ndarray) -> None:
    """Little-endian single-channel PFM (rows stored bottom-up, scale -1)."""
    depth = np.asarray(depth, dtype=np.float32)
    if depth.ndim != 2:
        raise InvalidInputError("depth maps must be (H, W)", shape=depth.shape)
    check_depth(depth, str(path))
    H, W = depth.shape
    with open(path, "wb") as f:
        f.write(f"Pf\n{W} {H}\n-1.0\n".encode("ascii"))
        f.write(np.flipud(depth).astype("<f4").tobytes())


def load_depth(path: str | Path) -> np.ndarray:
    """Read a single-channel PFM; the sign of the scale field gives the byte order."""
    try:
        raw = Path(path).read_bytes()
    except OSError as e:
        raise FormatError(f"cannot read depth map: {e}", path=str(path)) from e
    match = _PFM_HEADER.match(raw)
    if match is None:
        raise FormatError("not a PFM file", path=str(path))
    tag, width, height, scale = match.groups()
    if tag != b"Pf":
        raise FormatError("depth maps must be single-channel (Pf) PFM", path=str(path))
    try:
        scale = float(scale)
    except ValueError:
        raise FormatError("bad PFM scale field", path=str(path)) from None
    if scale == 0:
        raise FormatError("PFM scale must be non-zero", path=str(path))
    W, H = int(width), int(height)
    body = raw[match.end() :]
    if len(body) != W * H * 4:
        raise FormatError(
            "PFM raster size does not match the header",
            path=str(path),
            expected=W * H * 4,
            got=len(body),
        )
    dtype = "<f4" if scale < 0 else ">f4"
    depth = np.flipud(np.frombuffer(body, dtype=dtype).reshape(H, W))
    depth = depth.astype(np.float32)
    check_depth(depth, str(path))
    return depth
