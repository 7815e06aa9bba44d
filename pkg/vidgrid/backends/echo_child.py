"""Child side of the wire protocol, wrapping an in-process backend.

Run as ``python -m vidgrid.backends.echo_child [--backend identity|gaussian]``.
stdout carries protocol frames only; logs go to stderr.
"""

import logging
import sys
from typing import IO

import typer

from vidgrid.backends import protocol
from vidgrid.backends.base import Condition, DenoiserBackend
from vidgrid.backends.protocol import MessageKind
from vidgrid.backends.reference import GaussianAnalyticDenoiser, IdentityDenoiser
from vidgrid.sampling.state import ClipState
from vidgrid.warp import WarpedClip

logger = logging.getLogger(__name__)


def serve_backend(
    backend: DenoiserBackend,
    reader: IO[bytes],
    writer: IO[bytes],
    version: int = protocol.PROTOCOL_VERSION,
) -> int:
    """Answer requests until BYE or end of input; returns the number served."""
    has_uncond = backend.descriptor.has_unconditional
    protocol.write_message(writer, protocol.encode_hello(has_uncond), version)
    served = 0
    while True:
        msg = protocol.read_message(reader)
        if msg is None:
            break
        msg_version, payload = msg
        if msg_version != version:
            protocol.write_message(
                writer,
                protocol.encode_error(f"unsupported protocol version {msg_version}"),
                version,
            )
            break
        kind = protocol.message_kind(payload)
        if kind is MessageKind.BYE:
            break
        try:
            req = protocol.decode_request(payload)
            state = ClipState(req.x_t, req.sigma)
            condition = Condition((0, req.slot), req.condition)
            warped = WarpedClip(req.warped, req.mask.astype("uint8"))
            out = backend.denoise(state, req.sigma, condition, warped)
            reply = protocol.encode_reply(
                out.conditional, out.unconditional, req.sigma, req.slot
            )
        except Exception as e:
            logger.error(f"Error serving request {served}: {e}")
            reply = protocol.encode_error(str(e))
        protocol.write_message(writer, reply, version)
        served += 1
    logger.info(f"Served {served} requests")
    return served


def main(
    backend: str = typer.Option("identity", help="identity or gaussian"),
    protocol_version: int = typer.Option(protocol.PROTOCOL_VERSION),
    mu: float = typer.Option(0.0),
    tau: float = typer.Option(1.0),
):
    logging.basicConfig(
        level=logging.INFO,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        stream=sys.stderr,
    )
    if backend == "identity":
        impl = IdentityDenoiser()
    elif backend == "gaussian":
        impl = GaussianAnalyticDenoiser(mu, tau)
    else:
        raise typer.BadParameter(f"unknown backend {backend!r}")
    serve_backend(impl, sys.stdin.buffer, sys.stdout.buffer, protocol_version)


if __name__ == "__main__":
    typer.run(main)
