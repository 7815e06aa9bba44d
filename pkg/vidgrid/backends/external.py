"""Denoiser backed by a child process speaking the wire protocol on its std streams."""

from __future__ import annotations

import logging
import queue
import shlex
import subprocess
import threading
from typing import Sequence

from vidgrid.backends import protocol
from vidgrid.backends.base import (
    BackendDescriptor,
    Condition,
    DenoiseOutput,
    DenoiserBackend,
    condition_slot,
)
from vidgrid.backends.protocol import MessageKind
from vidgrid.errors import BackendError, ProtocolError, TransportError, VidgridError
from vidgrid.sampling.state import ClipState
from vidgrid.warp import WarpedClip

logger = logging.getLogger(__name__)

DEFAULT_TIMEOUT_S = 300.0
_CLOSED = object()


class ExternalProcessDenoiser(DenoiserBackend):
    """One child process, one request in flight at a time.

    A reader thread moves incoming frames onto a queue so that every wait can time
    out. The child must send HELLO with the expected protocol version first.
    """

    def __init__(
        self,
        command: str | Sequence[str],
        timeout: float = DEFAULT_TIMEOUT_S,
        name: str = "external",
    ):
        if isinstance(command, str):
            command = shlex.split(command)
        self.command = list(command)
        if not self.command:
            raise BackendError("empty external backend command")
        self.timeout = float(timeout)
        self._lock = threading.Lock()
        self._requests = 0
        self._last: dict = {}
        self._broken = False
        self._inbox: queue.Queue = queue.Queue()
        logger.info(f"Starting external backend: {self.command}")
        try:
            self._proc = subprocess.Popen(
                self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE
            )
        except OSError as e:
            raise TransportError(
                f"cannot start external backend: {e}", command=self.command
            ) from e
        self._reader = threading.Thread(target=self._pump, daemon=True)
        self._reader.start()
        try:
            has_uncond = self._handshake()
        except VidgridError:
            self.close()
            raise
        self._descriptor = BackendDescriptor(
            name, concurrent_safe=False, has_unconditional=has_uncond
        )

    @property
    def descriptor(self) -> BackendDescriptor:
        return self._descriptor

    def _pump(self) -> None:
        try:
            while True:
                msg = protocol.read_message(self._proc.stdout)
                if msg is None:
                    break
                self._inbox.put(msg)
        except VidgridError as e:
            self._inbox.put(e)
        except (OSError, ValueError) as e:
            self._inbox.put(TransportError(f"read failed: {e}"))
        self._inbox.put(_CLOSED)

    def _receive(self) -> bytes:
        try:
            item = self._inbox.get(timeout=self.timeout)
        except queue.Empty:
            self._kill()
            raise TransportError(
                "external backend timed out", timeout_s=self.timeout, **self._last
            ) from None
        if item is _CLOSED:
            code = self._proc.poll()
            raise TransportError(
                "external backend exited", returncode=code, **self._last
            )
        if isinstance(item, VidgridError):
            raise item.with_context(**self._last)
        version, payload = item
        if version != protocol.PROTOCOL_VERSION:
            raise ProtocolError(
                "protocol version mismatch",
                expected=protocol.PROTOCOL_VERSION,
                got=version,
            )
        return payload

    def _kill(self) -> None:
        """Stop a child that can no longer be trusted to answer in order."""
        self._broken = True
        if self._proc.poll() is None:
            logger.warning(f"Killing external backend after a failure: {self._last}")
            self._proc.kill()
        self._proc.wait()

    def _handshake(self) -> bool:
        self._last = {"request": "handshake"}
        payload = self._receive()
        has_uncond = protocol.decode_hello(payload)
        logger.info(f"External backend ready (unconditional={has_uncond})")
        return has_uncond

    def _denoise(
        self,
        x_t: ClipState,
        sigma: float,
        condition: Condition,
        warped: WarpedClip | None,
    ) -> DenoiseOutput:
        if warped is None:
            warped = WarpedClip.holes(x_t.frames.shape)
        slot = condition_slot(x_t, condition)
        payload = protocol.encode_request(
            x_t.frames, sigma, slot, condition.frame, warped.frames, warped.masks
        )
        with self._lock:
            if self._broken:
                raise TransportError(
                    "external backend was stopped after an earlier failure",
                    **self._last,
                )
            self._requests += 1
            self._last = {
                "request": self._requests,
                "sigma": float(sigma),
                "line": str(x_t.line),
            }
            try:
                protocol.write_message(self._proc.stdin, payload)
                reply = self._receive()
            except (OSError, ValueError) as e:
                self._kill()
                raise TransportError(
                    f"cannot write to external backend: {e}", **self._last
                ) from e
            except VidgridError:
                self._kill()
                raise
        kind = protocol.message_kind(reply)
        if kind is MessageKind.ERROR:
            raise BackendError(
                f"external backend error: {protocol.decode_error(reply)}", **self._last
            )
        conditional, unconditional = protocol.decode_reply(reply)
        if conditional.shape != x_t.frames.shape:
            raise ProtocolError(
                "reply shape differs from the request",
                expected=x_t.frames.shape,
                got=conditional.shape,
            )
        dtype = x_t.frames.dtype
        return DenoiseOutput(
            conditional.astype(dtype, copy=False),
            None if unconditional is None else unconditional.astype(dtype, copy=False),
        )

    def close(self) -> None:
        proc = getattr(self, "_proc", None)
        if proc is None or proc.poll() is not None:
            return
        try:
            protocol.write_message(proc.stdin, protocol.encode_bye())
            proc.stdin.close()
        except (OSError, ValueError):
            pass
        try:
            proc.wait(timeout=5)
        except subprocess.TimeoutExpired:
            proc.kill()
            proc.wait()
        logger.info("External backend stopped")


def external_process_denoiser(
    command: str | Sequence[str], timeout: float = DEFAULT_TIMEOUT_S
) -> ExternalProcessDenoiser:
    return ExternalProcessDenoiser(command, timeout)
