"""
TCP daemons for the signing application. Alice listens and serves exactly
one signing session per key; Bob connects, evaluates his hash bits and
submits the signature.
"""

import asyncio
import logging
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..engine.parties import AliceSession, BobSession
from ..sig.signature import (
    Signature,
    SignatureParams,
    SigningKey,
    SigningOutcome,
    alice_signing_service,
    bob_request_signature,
)
from ..tabler import SharedTableAlice, SharedTableBob
from .frames import MAX_PAYLOAD
from .messages import VerifyResult
from .transport import StreamTransport

logger = logging.getLogger("qotp")


@dataclass
class DaemonSettings:
    keepalive: Optional[float] = 30.0  # seconds a recv may wait; None disables
    max_payload: int = MAX_PAYLOAD
    session_id: int = 1
    seed: int = 0
    test_lines: int = 0
    test_seed: int = 0
    chsh_abort_below: float = 2.5
    constant_round_factor: int = 0


def parse_address(address: str, default_port: int = 7401) -> tuple[str, int]:
    """'host:port' -> (host, port); a bare host gets the default port."""
    host, sep, port = address.rpartition(":")
    if not sep:
        return address, default_port
    try:
        return host or "127.0.0.1", int(port)
    except ValueError:
        raise ValueError(f"Invalid address: {address}") from None


async def serve_signature(
    host: str,
    port: int,
    table: SharedTableAlice,
    key: SigningKey,
    settings: Optional[DaemonSettings] = None,
    on_listening: Optional[Callable[[int], None]] = None,
) -> SigningOutcome:
    """
    Listen on host:port and run one signing session with the first peer.
    Later connections are refused because the key is single-use.
    `on_listening` receives the bound port (useful with port 0).
    """
    settings = settings or DaemonSettings()
    done = asyncio.get_running_loop().create_future()
    lock = asyncio.Lock()

    async def handle(reader: asyncio.StreamReader, writer: asyncio.StreamWriter) -> None:
        peer = writer.get_extra_info("peername")
        transport = StreamTransport(reader, writer, settings.max_payload, settings.keepalive)
        async with lock:
            if done.done():
                logger.warning(f"Refusing {peer}: the signing key has already been used")
                await transport.close()
                return
            logger.info(f"Signing session with {peer}")
            session = AliceSession(
                table,
                transport,
                np.random.default_rng(settings.seed),
                session_id=settings.session_id,
                constant_round_factor=settings.constant_round_factor,
                max_payload=settings.max_payload,
            )
            try:
                outcome = await alice_signing_service(
                    session,
                    key,
                    test_lines=settings.test_lines,
                    test_seed=settings.test_seed,
                    chsh_abort_below=settings.chsh_abort_below,
                )
            except Exception as e:
                logger.error(f"Signing session with {peer} failed: {e}")
                done.set_exception(e)
            else:
                done.set_result(outcome)
            finally:
                await transport.close()

    server = await asyncio.start_server(handle, host, port)
    bound = server.sockets[0].getsockname()[1]
    logger.info(f"Alice listening on {host}:{bound}")
    if on_listening:
        on_listening(bound)
    async with server:
        return await done


async def request_signature(
    host: str,
    port: int,
    table: SharedTableBob,
    message: bytes,
    params: SignatureParams,
    settings: Optional[DaemonSettings] = None,
) -> tuple[Signature, VerifyResult]:
    """Connect to Alice's daemon and obtain one signature on `message`."""
    settings = settings or DaemonSettings()
    reader, writer = await asyncio.open_connection(host, port)
    transport = StreamTransport(reader, writer, settings.max_payload, settings.keepalive)
    logger.info(f"Bob connected to {host}:{port}")
    session = BobSession(
        table, transport, session_id=settings.session_id, max_payload=settings.max_payload
    )
    try:
        return await bob_request_signature(session, message, params)
    finally:
        await transport.close()
