"""
Shared-table file format (little-endian):

    magic "OTPT" | version u16 | party u8 | reserved u8 | line_count u64 | seed u64
    line_count records
        Alice: line_id u64, gate u8, status u8
        Bob:   line_id u64, input u8, output u8, status u8
    CRC32 u32 over all preceding bytes
"""

import logging
import struct
import zlib
from pathlib import Path

import numpy as np

from ..types import Party
from .table import SharedTable, SharedTableAlice, SharedTableBob

logger = logging.getLogger("qotp")

MAGIC = b"OTPT"
VERSION = 1
HEADER = struct.Struct("<4sHBBQQ")
CRC = struct.Struct("<I")

ALICE_RECORD = np.dtype([("line_id", "<u8"), ("gate", "u1"), ("status", "u1")])
BOB_RECORD = np.dtype(
    [("line_id", "<u8"), ("input", "u1"), ("output", "u1"), ("status", "u1")]
)


class TableFile:
    class FormatError(Exception):
        pass

    class VersionMismatch(FormatError):
        pass

    class Truncated(FormatError):
        pass

    class ChecksumFailure(FormatError):
        pass

    @staticmethod
    def to_bytes(table: SharedTable) -> bytes:
        if isinstance(table, SharedTableAlice):
            records = np.empty(len(table), dtype=ALICE_RECORD)
            records["gate"] = table.gates
        elif isinstance(table, SharedTableBob):
            records = np.empty(len(table), dtype=BOB_RECORD)
            records["input"] = table.inputs
            records["output"] = table.outputs
        else:
            raise TypeError(f"Not a shared table: {type(table).__name__}")
        records["line_id"] = table.line_ids
        records["status"] = table.status
        body = HEADER.pack(MAGIC, VERSION, int(table.party), 0, len(table), table.seed) + records.tobytes()
        return body + CRC.pack(zlib.crc32(body))

    @staticmethod
    def from_bytes(data: bytes) -> SharedTable:
        if len(data) < HEADER.size + CRC.size:
            raise TableFile.Truncated(
                f"Table file has {len(data)} bytes, shorter than the {HEADER.size + CRC.size}-byte minimum"
            )
        magic, version, party, _reserved, count, seed = HEADER.unpack_from(data)
        if magic != MAGIC:
            raise TableFile.FormatError(f"Bad magic {magic!r}, expected {MAGIC!r}")
        if version != VERSION:
            raise TableFile.VersionMismatch(f"Table file version {version}, expected {VERSION}")
        (stored_crc,) = CRC.unpack_from(data, len(data) - CRC.size)
        if zlib.crc32(data[: -CRC.size]) != stored_crc:
            raise TableFile.ChecksumFailure("Table file CRC32 does not match its contents")
        if party not in (Party.ALICE, Party.BOB):
            raise TableFile.FormatError(f"Unknown party byte {party}")
        dtype = ALICE_RECORD if party == Party.ALICE else BOB_RECORD
        expected = HEADER.size + count * dtype.itemsize + CRC.size
        if len(data) != expected:
            raise TableFile.FormatError(
                f"Table file holds {len(data)} bytes but its header implies {expected}"
            )
        records = np.frombuffer(data, dtype=dtype, count=count, offset=HEADER.size)
        if party == Party.ALICE:
            return SharedTableAlice(
                records["line_id"].copy(), records["gate"].copy(), records["status"].copy(), seed=seed
            )
        return SharedTableBob(
            records["line_id"].copy(),
            records["input"].copy(),
            records["output"].copy(),
            records["status"].copy(),
            seed=seed,
        )

    @staticmethod
    def save(table: SharedTable, path: str | Path) -> None:
        data = TableFile.to_bytes(table)
        Path(path).write_bytes(data)
        logger.debug(f"Wrote {len(table)} {table.party.name} lines to {path}")

    @staticmethod
    def load(path: str | Path) -> SharedTable:
        table = TableFile.from_bytes(Path(path).read_bytes())
        logger.debug(f"Loaded {len(table)} {table.party.name} lines from {path}")
        return table


def save_table(table: SharedTable, path: str | Path) -> None:
    TableFile.save(table, path)


def load_table(path: str | Path) -> SharedTable:
    return TableFile.load(path)
