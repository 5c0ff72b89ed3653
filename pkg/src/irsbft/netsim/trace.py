"""Per-event message trace, written as CSV."""

from __future__ import annotations

import csv
import hashlib
import io
import os
from dataclasses import dataclass

HEADER = ("timestamp_ns", "replica_id", "event", "view", "phase", "block_hash_prefix8", "size_bytes")


@dataclass(frozen=True)
class TraceRow:
    timestamp_ns: int
    replica_id: int
    event: str
    view: int
    phase: str
    block_hash_prefix8: str
    size_bytes: int


class Trace:
    """Send lines are stamped at transmission start, receive lines when the
    handler runs, commit lines when the block is applied."""

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self.rows: list[TraceRow] = []

    def add(self, ts: int, replica: int, event: str, view: int, phase: str, block_hash: bytes, size: int) -> None:
        if self.enabled:
            self.rows.append(TraceRow(ts, replica, event, view, phase, block_hash[:4].hex(), size))

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    def csv_text(self) -> str:
        out = io.StringIO()
        w = csv.writer(out, lineterminator="\n")
        w.writerow(HEADER)
        for r in self.rows:
            w.writerow((r.timestamp_ns, r.replica_id, r.event, r.view, r.phase, r.block_hash_prefix8, r.size_bytes))
        return out.getvalue()

    def write_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.csv_text())

    def digest(self) -> str:
        return hashlib.sha256(self.csv_text().encode()).hexdigest()


def read_csv(path: str | os.PathLike) -> list[TraceRow]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [
            TraceRow(
                int(r["timestamp_ns"]),
                int(r["replica_id"]),
                r["event"],
                int(r["view"]),
                r["phase"],
                r["block_hash_prefix8"],
                int(r["size_bytes"]),
            )
            for r in reader
        ]
