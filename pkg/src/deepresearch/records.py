"""Line-delimited JSON record files.

Every durable artifact (bank snapshots, session event logs, plan exports,
transcripts, manifests) is an append-only log of one JSON object per line.
Strict files carry a ``kind`` discriminator and a monotonically increasing
``seq`` number; loose files (manifests, transcripts) are plain JSONL.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any, Iterable, Iterator

from .errors import RecordError

Record = dict[str, Any]


def dump_record(record: Record) -> str:
    return json.dumps(record, sort_keys=True, ensure_ascii=False)


def write_records(path: str | os.PathLike, records: Iterable[Record]) -> int:
    """Write a strict record file, assigning seq numbers in order. Returns count."""
    path = Path(path)
    count = 0
    with path.open("w", encoding="utf-8") as fh:
        for seq, record in enumerate(records, start=1):
            if "kind" not in record:
                raise ValueError(f"record {seq - 1} missing 'kind'")
            row = dict(record)
            row["seq"] = seq
            fh.write(dump_record(row) + "\n")
            count += 1
    return count


def read_records(path: str | os.PathLike, *, strict: bool = True) -> list[Record]:
    """Read a record file; on the first malformed entry raise RecordError.

    Strict mode additionally requires ``kind`` and a strictly increasing ``seq``.
    """
    path = Path(path)
    records: list[Record] = []
    last_seq = 0
    with path.open("r", encoding="utf-8") as fh:
        for index, line in enumerate(_nonblank_lines(fh)):
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise RecordError(
                    f"malformed JSON: {exc.msg}", index=index, last_valid=index - 1
                ) from exc
            if not isinstance(record, dict):
                raise RecordError(
                    "record is not an object", index=index, last_valid=index - 1
                )
            if strict:
                if "kind" not in record:
                    raise RecordError(
                        "record missing 'kind'", index=index, last_valid=index - 1
                    )
                seq = record.get("seq")
                if not isinstance(seq, int) or seq <= last_seq:
                    raise RecordError(
                        f"non-monotonic or missing seq {seq!r}",
                        index=index,
                        last_valid=index - 1,
                    )
                last_seq = seq
            records.append(record)
    return records


def _nonblank_lines(fh) -> Iterator[str]:
    for line in fh:
        stripped = line.strip()
        if stripped:
            yield stripped


class RecordLog:
    """Append-only strict record log backed by a file."""

    def __init__(self, path: str | os.PathLike) -> None:
        self.path = Path(path)
        self._next_seq = 1
        if self.path.exists():
            existing = read_records(self.path)
            if existing:
                self._next_seq = existing[-1]["seq"] + 1

    def append(self, kind: str, payload: Record) -> int:
        seq = self._next_seq
        row = dict(payload)
        row["kind"] = kind
        row["seq"] = seq
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(dump_record(row) + "\n")
        self._next_seq += 1
        return seq
