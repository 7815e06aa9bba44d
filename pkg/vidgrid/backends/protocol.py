"""Binary wire protocol between the sampler and an external denoiser process.

Every message is ``magic (8 bytes) | u32 version | u32 payload length | payload``,
little-endian. The payload starts with a u32 message kind. Requests and replies
continue with ``u32 L, u32 H, u32 W, u32 C, f64 sigma, u32 condition slot`` and then
raw f32 tensors in row-major ``L×H×W×C`` order.

Request tensors: x_t, condition frame (one ``H×W×C`` frame), warped frames, mask
(``L×H×W``, sent as f32 0/1). Reply tensors: the conditional estimate, optionally
followed by the unconditional one; the count follows from the payload length.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import IntEnum
from typing import IO

import numpy as np

from vidgrid.errors import ProtocolError, TransportError

MAGIC = b"Z4DPROTO"
PROTOCOL_VERSION = 1
FRAME_HEADER = struct.Struct("<8sII")
KIND = struct.Struct("<I")
TENSOR_HEADER = struct.Struct("<IIIIIdI")
HELLO_FLAGS = struct.Struct("<II")
F32 = np.dtype("<f4")

HAS_UNCONDITIONAL = 0x1


class MessageKind(IntEnum):
    HELLO = 1
    REQUEST = 2
    REPLY = 3
    ERROR = 4
    BYE = 5


@dataclass(frozen=True, eq=False)
class Request:
    sigma: float
    slot: int
    x_t: np.ndarray  # (L, H, W, C)
    condition: np.ndarray  # (H, W, C)
    warped: np.ndarray  # (L, H, W, C)
    mask: np.ndarray  # (L, H, W)


def _read_exact(stream: IO[bytes], n: int) -> bytes:
    buf = b""
    while len(buf) < n:
        chunk = stream.read(n - len(buf))
        if not chunk:
            raise TransportError(
                "stream closed mid-message", expected=n, received=len(buf)
            )
        buf += chunk
    return buf


def write_message(
    stream: IO[bytes], payload: bytes, version: int = PROTOCOL_VERSION
) -> None:
    stream.write(FRAME_HEADER.pack(MAGIC, version, len(payload)) + payload)
    stream.flush()


def read_message(stream: IO[bytes]) -> tuple[int, bytes] | None:
    """Next ``(version, payload)``; None on a clean end of stream."""
    first = stream.read(FRAME_HEADER.size)
    if not first:
        return None
    if len(first) < FRAME_HEADER.size:
        first += _read_exact(stream, FRAME_HEADER.size - len(first))
    magic, version, length = FRAME_HEADER.unpack(first)
    if magic != MAGIC:
        raise ProtocolError("bad magic", magic=magic.hex())
    return version, _read_exact(stream, length)


def message_kind(payload: bytes) -> MessageKind:
    if len(payload) < KIND.size:
        raise ProtocolError("payload too short for a message kind", length=len(payload))
    (kind,) = KIND.unpack_from(payload)
    try:
        return MessageKind(kind)
    except ValueError:
        raise ProtocolError("unknown message kind", kind=kind) from None


def encode_hello(has_unconditional: bool) -> bytes:
    flags = HAS_UNCONDITIONAL if has_unconditional else 0
    return HELLO_FLAGS.pack(MessageKind.HELLO, flags)


def decode_hello(payload: bytes) -> bool:
    kind = message_kind(payload)
    if kind is not MessageKind.HELLO or len(payload) != HELLO_FLAGS.size:
        raise ProtocolError("expected a hello message")
    _, flags = HELLO_FLAGS.unpack(payload)
    return bool(flags & HAS_UNCONDITIONAL)


def encode_error(message: str) -> bytes:
    return KIND.pack(MessageKind.ERROR) + message.encode("utf-8")


def decode_error(payload: bytes) -> str:
    return payload[KIND.size :].decode("utf-8", errors="replace")


def encode_bye() -> bytes:
    return KIND.pack(MessageKind.BYE)


def _f32(a: np.ndarray) -> bytes:
    return np.ascontiguousarray(a, dtype=F32).tobytes()


def encode_request(
    x_t: np.ndarray,
    sigma: float,
    slot: int,
    condition: np.ndarray,
    warped: np.ndarray,
    mask: np.ndarray,
) -> bytes:
    L, H, W, C = x_t.shape
    header = TENSOR_HEADER.pack(MessageKind.REQUEST, L, H, W, C, float(sigma), slot)
    return header + _f32(x_t) + _f32(condition) + _f32(warped) + _f32(mask)


def _tensor_header(payload: bytes, expected: MessageKind):
    if message_kind(payload) is not expected:
        raise ProtocolError(
            f"expected a {expected.name.lower()} message",
            kind=int(KIND.unpack_from(payload)[0]),
        )
    if len(payload) < TENSOR_HEADER.size:
        raise ProtocolError("truncated header", length=len(payload))
    _, L, H, W, C, sigma, slot = TENSOR_HEADER.unpack_from(payload)
    return (L, H, W, C), sigma, slot


def _take(payload: bytes, offset: int, shape: tuple[int, ...]):
    count = int(np.prod(shape))
    arr = np.frombuffer(payload, dtype=F32, count=count, offset=offset)
    return arr.reshape(shape).astype(np.float32), offset + count * F32.itemsize


def decode_request(payload: bytes) -> Request:
    (L, H, W, C), sigma, slot = _tensor_header(payload, MessageKind.REQUEST)
    clip = L * H * W * C
    expected = TENSOR_HEADER.size + F32.itemsize * (2 * clip + H * W * C + L * H * W)
    if len(payload) != expected:
        raise ProtocolError(
            "request payload has the wrong length", expected=expected, got=len(payload)
        )
    offset = TENSOR_HEADER.size
    x_t, offset = _take(payload, offset, (L, H, W, C))
    condition, offset = _take(payload, offset, (H, W, C))
    warped, offset = _take(payload, offset, (L, H, W, C))
    mask, offset = _take(payload, offset, (L, H, W))
    return Request(sigma, slot, x_t, condition, warped, mask)


def encode_reply(
    conditional: np.ndarray, unconditional: np.ndarray | None, sigma: float, slot: int
) -> bytes:
    L, H, W, C = conditional.shape
    body = _f32(conditional)
    if unconditional is not None:
        body += _f32(unconditional)
    return TENSOR_HEADER.pack(MessageKind.REPLY, L, H, W, C, float(sigma), slot) + body


def decode_reply(payload: bytes) -> tuple[np.ndarray, np.ndarray | None]:
    shape, _, _ = _tensor_header(payload, MessageKind.REPLY)
    size = int(np.prod(shape)) * F32.itemsize
    body = len(payload) - TENSOR_HEADER.size
    if size == 0 or body not in (size, 2 * size):
        raise ProtocolError(
            "reply must carry one or two clip tensors", tensor_bytes=size, got=body
        )
    conditional, offset = _take(payload, TENSOR_HEADER.size, shape)
    unconditional = None
    if body == 2 * size:
        unconditional, _ = _take(payload, offset, shape)
    return conditional, unconditional
