"""
Ordered, reliable frame transports. The protocol never retransmits, so every
implementation must deliver frames exactly once and in order.
"""

import asyncio
import logging
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .frames import (
    CRC,
    HEADER,
    MAX_PAYLOAD,
    Frame,
    MessageType,
    decode_frame,
    encode_frame,
    parse_header,
)

logger = logging.getLogger("qotp")


class Transport(ABC):
    @abstractmethod
    async def send(self, frame: Frame) -> None:
        pass

    @abstractmethod
    async def recv(self) -> Frame:
        pass

    async def close(self) -> None:
        pass


class QueueTransport(Transport):
    """One end of an in-process duplex link. Frames cross it encoded."""

    def __init__(self, outbox: asyncio.Queue, inbox: asyncio.Queue, max_payload: int = MAX_PAYLOAD):
        self._outbox = outbox
        self._inbox = inbox
        self.max_payload = max_payload

    @staticmethod
    def pair(max_payload: int = MAX_PAYLOAD) -> tuple["QueueTransport", "QueueTransport"]:
        a_to_b: asyncio.Queue = asyncio.Queue()
        b_to_a: asyncio.Queue = asyncio.Queue()
        return (
            QueueTransport(a_to_b, b_to_a, max_payload),
            QueueTransport(b_to_a, a_to_b, max_payload),
        )

    async def send(self, frame: Frame) -> None:
        await self._outbox.put(encode_frame(frame, self.max_payload))

    async def recv(self) -> Frame:
        return decode_frame(await self._inbox.get(), self.max_payload)


class StreamTransport(Transport):
    """Frames over an asyncio byte stream (TCP)."""

    def __init__(
        self,
        reader: asyncio.StreamReader,
        writer: asyncio.StreamWriter,
        max_payload: int = MAX_PAYLOAD,
        keepalive: Optional[float] = None,
    ):
        self.reader = reader
        self.writer = writer
        self.max_payload = max_payload
        self.keepalive = keepalive

    async def send(self, frame: Frame) -> None:
        self.writer.write(encode_frame(frame, self.max_payload))
        await self.writer.drain()

    async def _read(self) -> Frame:
        header = await self.reader.readexactly(HEADER.size)
        _, _, length = parse_header(header, self.max_payload)
        rest = await self.reader.readexactly(length + CRC.size)
        return decode_frame(header + rest, self.max_payload)

    async def recv(self) -> Frame:
        if self.keepalive:
            return await asyncio.wait_for(self._read(), timeout=self.keepalive)
        return await self._read()

    async def close(self) -> None:
        self.writer.close()
        try:
            await self.writer.wait_closed()
        except (ConnectionError, OSError):
            pass


@dataclass
class TranscriptEntry:
    direction: str  # "sent" or "recv"
    timestamp: float
    msg_type: MessageType
    session_id: int
    payload: bytes = field(repr=False)

    @property
    def frame(self) -> Frame:
        return Frame(self.msg_type, self.session_id, self.payload)


class RecordingTransport(Transport):
    """Logs every frame in both directions with a wall-clock timestamp."""

    def __init__(self, inner: Transport):
        self.inner = inner
        self.transcript: list[TranscriptEntry] = []

    def _log(self, direction: str, frame: Frame) -> None:
        self.transcript.append(
            TranscriptEntry(direction, time.time(), frame.msg_type, frame.session_id, frame.payload)
        )

    async def send(self, frame: Frame) -> None:
        self._log("sent", frame)
        await self.inner.send(frame)

    async def recv(self) -> Frame:
        frame = await self.inner.recv()
        self._log("recv", frame)
        return frame

    async def close(self) -> None:
        await self.inner.close()


class ReplayMismatch(Exception):
    """A replayed party sent a frame that differs from the recording."""

    pass


class ReplayTransport(Transport):
    """
    Plays back the frames one party received and checks that every frame it
    sends matches the recording byte for byte.
    """

    def __init__(self, transcript: list[TranscriptEntry]):
        self._received = [e.frame for e in transcript if e.direction == "recv"]
        self._sent = [e.frame for e in transcript if e.direction == "sent"]
        self._next_recv = 0
        self._next_sent = 0

    async def send(self, frame: Frame) -> None:
        if self._next_sent >= len(self._sent):
            raise ReplayMismatch(f"Unexpected extra {frame.msg_type.name} frame")
        expected = self._sent[self._next_sent]
        if frame != expected:
            raise ReplayMismatch(
                f"Frame {self._next_sent} differs: sent {frame.msg_type.name}, "
                f"recorded {expected.msg_type.name}"
            )
        self._next_sent += 1

    async def recv(self) -> Frame:
        if self._next_recv >= len(self._received):
            raise ReplayMismatch("Recording has no more frames to deliver")
        frame = self._received[self._next_recv]
        self._next_recv += 1
        return frame

    @property
    def complete(self) -> bool:
        return self._next_recv == len(self._received) and self._next_sent == len(self._sent)


class LatencyTransport(Transport):
    """
    Delays every outgoing frame by `one_way_delay` plus non-negative
    Gaussian jitter (seconds). Deliveries never overtake each other.
    """

    def __init__(
        self,
        inner: Transport,
        one_way_delay: float,
        jitter: float = 0.0,
        rng: Optional[np.random.Generator] = None,
    ):
        self.inner = inner
        self.one_way_delay = one_way_delay
        self.jitter = jitter
        self.rng = rng or np.random.default_rng(0)
        self._queue: asyncio.Queue = asyncio.Queue()
        self._last_delivery = 0.0
        self._worker: Optional[asyncio.Task] = None

    def _delay(self) -> float:
        extra = abs(self.rng.normal(0.0, self.jitter)) if self.jitter > 0 else 0.0
        return self.one_way_delay + extra

    async def _deliver(self) -> None:
        loop = asyncio.get_running_loop()
        while True:
            deliver_at, frame = await self._queue.get()
            wait = deliver_at - loop.time()
            if wait > 0:
                await asyncio.sleep(wait)
            await self.inner.send(frame)
            self._queue.task_done()

    async def send(self, frame: Frame) -> None:
        if self.one_way_delay <= 0 and self.jitter <= 0:
            await self.inner.send(frame)
            return
        loop = asyncio.get_running_loop()
        if self._worker is None:
            self._worker = loop.create_task(self._deliver())
        deliver_at = max(loop.time() + self._delay(), self._last_delivery)
        self._last_delivery = deliver_at
        await self._queue.put((deliver_at, frame))

    async def recv(self) -> Frame:
        return await self.inner.recv()

    async def flush(self) -> None:
        if self._worker is not None:
            await self._queue.join()

    async def close(self) -> None:
        await self.flush()
        if self._worker is not None:
            self._worker.cancel()
            try:
                await self._worker
            except asyncio.CancelledError:
                pass
            self._worker = None
        await self.inner.close()
