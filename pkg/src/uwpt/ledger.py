"""Append-only SHA-256 hash chain for market events.

Each record commits to its predecessor::

    hash_i = SHA256(index_i as 8-byte big-endian || previous_hash_i || payload_i)

where ``payload_i`` is the canonical JSON encoding of the event (sorted
keys, no insignificant whitespace, UTF-8). Record 0 is the genesis record,
chained to 32 zero bytes.

On disk a ledger is JSON Lines, one object per record::

    {"hash": "<hex>", "index": 0, "payload": {...}, "previous_hash": "<hex>"}
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Iterable, Iterator, List

from uwpt.errors import SchemaError

GENESIS_PREVIOUS = bytes(32)
GENESIS_PAYLOAD = {"type": "genesis"}


def canonical_json(obj) -> bytes:
    return json.dumps(
        obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False
    ).encode("utf-8")


def record_hash(index: int, previous_hash: bytes, payload: bytes) -> bytes:
    h = hashlib.sha256()
    h.update(index.to_bytes(8, "big"))
    h.update(previous_hash)
    h.update(payload)
    return h.digest()


@dataclass(frozen=True)
class LedgerRecord:
    index: int
    previous_hash: bytes
    payload: bytes
    hash: bytes

    @property
    def event(self) -> dict:
        return json.loads(self.payload.decode("utf-8"))

    def to_json_line(self) -> str:
        obj = {
            "index": self.index,
            "previous_hash": self.previous_hash.hex(),
            "payload": json.loads(self.payload.decode("utf-8")),
            "hash": self.hash.hex(),
        }
        return canonical_json(obj).decode("utf-8")


class Ledger:
    """In-memory hash chain, starting with a genesis record."""

    def __init__(self):
        self._records: List[LedgerRecord] = []
        self._append_bytes(canonical_json(GENESIS_PAYLOAD))

    def _append_bytes(self, payload: bytes) -> LedgerRecord:
        index = len(self._records)
        prev = self._records[-1].hash if self._records else GENESIS_PREVIOUS
        rec = LedgerRecord(index, prev, payload, record_hash(index, prev, payload))
        self._records.append(rec)
        return rec

    def append(self, event: dict) -> LedgerRecord:
        return self._append_bytes(canonical_json(event))

    @property
    def records(self) -> tuple:
        return tuple(self._records)

    def __len__(self):
        return len(self._records)

    def __iter__(self) -> Iterator[LedgerRecord]:
        return iter(tuple(self._records))

    def dumps(self) -> str:
        return "".join(rec.to_json_line() + "\n" for rec in self._records)


def verify_ledger(records: Iterable[LedgerRecord]) -> bool:
    """True iff every record re-hashes correctly and chains from genesis."""
    prev = GENESIS_PREVIOUS
    count = 0
    for i, rec in enumerate(records):
        if rec.index != i or rec.previous_hash != prev:
            return False
        if record_hash(rec.index, rec.previous_hash, rec.payload) != rec.hash:
            return False
        if i == 0 and rec.payload != canonical_json(GENESIS_PAYLOAD):
            return False
        prev = rec.hash
        count += 1
    return count > 0


def parse_ledger(text: str) -> list:
    """Parse JSON Lines ledger text written by :meth:`Ledger.dumps`.

    Every line must be the canonical serialisation of its record and the
    file must end with a newline.

    Raises:
        SchemaError: for lines that are not well-formed canonical records. Hash
            mismatches are *not* errors here; use :func:`verify_ledger`.
    """
    if not text.strip():
        raise SchemaError("ledger file is empty")
    if not text.endswith("\n"):
        # a file cut mid-record may still parse if the cut fell on a boundary
        raise SchemaError("ledger does not end with a newline; file looks truncated")
    records = []
    for lineno, line in enumerate(text[:-1].split("\n"), start=1):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"line {lineno}: not valid JSON ({exc.msg})") from None
        if not isinstance(obj, dict) or set(obj) != {"index", "previous_hash", "payload", "hash"}:
            raise SchemaError(f"line {lineno}: expected keys index, previous_hash, payload, hash")
        index = obj["index"]
        if not isinstance(index, int) or isinstance(index, bool) or index < 0:
            raise SchemaError(f"line {lineno}: index must be a non-negative integer")
        try:
            prev = bytes.fromhex(obj["previous_hash"])
            digest = bytes.fromhex(obj["hash"])
        except (TypeError, ValueError):
            raise SchemaError(f"line {lineno}: hashes must be hex strings") from None
        if len(prev) != 32 or len(digest) != 32:
            raise SchemaError(f"line {lineno}: hashes must be 32 bytes")
        try:
            payload = canonical_json(obj["payload"])
        except ValueError as exc:
            raise SchemaError(f"line {lineno}: payload not serialisable ({exc})") from None
        rec = LedgerRecord(index, prev, payload, digest)
        # the hash covers canonical bytes, so any other spelling of the same
        # JSON (upper-case hex, 1E-05, reordered keys) is an edit, not a copy
        if rec.to_json_line() != line:
            raise SchemaError(f"line {lineno}: record is not in canonical form")
        records.append(rec)
    return records
