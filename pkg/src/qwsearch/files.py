"""CSV/JSON artifacts and seed derivation.

Every CSV starts with its column header; readers compare it against the
expected schema and refuse files that drifted. Reals are written with 17
significant digits so that values round-trip exactly.
"""
from __future__ import annotations

import csv
import json
import math
import zlib
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .search import SearchRecord
from .spectral import SpectralSummary

__all__ = [
    "SchemaError",
    "format_value",
    "write_csv",
    "read_csv",
    "write_records",
    "read_records",
    "write_records_json",
    "write_json",
    "derive_seed",
    "SUMMARY_COLUMNS",
]

SUMMARY_COLUMNS = tuple(SpectralSummary.__dataclass_fields__)


class SchemaError(ValueError):
    pass


def format_value(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        return "%.17g" % v
    return str(v)


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence], comment: str | None = None) -> None:
    """Write a CSV, optionally preceded by a single ``# comment`` line."""
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(columns)
        for row in rows:
            if len(row) != len(columns):
                raise ValueError(f"row has {len(row)} fields, schema has {len(columns)}")
            wr.writerow([format_value(v) for v in row])


def read_csv(path, columns: Sequence[str]) -> list[list[str]]:
    """Rows of a CSV whose header must equal ``columns`` exactly.

    Leading ``#`` lines are skipped.
    """
    with open(path, newline="") as fh:
        lines = [ln for ln in fh]
        start = 0
        while start < len(lines) and lines[start].startswith("#"):
            start += 1
        rd = csv.reader(lines[start:])
        try:
            header = next(rd)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        if tuple(h.strip() for h in header) != tuple(columns):
            raise SchemaError(f"{path}: header {','.join(header)!r} does not match "
                              f"expected {','.join(columns)!r}")
        rows = []
        for lineno, row in enumerate(rd, start=start + 2):
            if not row:
                continue
            if len(row) != len(columns):
                raise SchemaError(f"{path}:{lineno}: expected {len(columns)} fields, got {len(row)}")
            rows.append(row)
    return rows


def _parse_bool(s: str) -> bool:
    s = s.strip().lower()
    if s in ("true", "1"):
        return True
    if s in ("false", "0"):
        return False
    raise SchemaError(f"not a boolean: {s!r}")


def write_records(records: Sequence[SearchRecord], path, labels=None) -> None:
    """Records CSV; ``labels`` maps node ids back to the ids of the source file."""
    cols = SearchRecord.columns()

    def row(r):
        d = r.as_dict()
        if labels is not None:
            d["node"] = int(labels[r.node])
        return [d[c] for c in cols]

    write_csv(path, cols, (row(r) for r in records))


def read_records(path) -> list[SearchRecord]:
    out = []
    for row in read_csv(path, SearchRecord.columns()):
        try:
            out.append(SearchRecord(
                node=int(row[0]), degree=int(row[1]), gamma_opt=float(row[2]),
                t_opt=float(row[3]), p_succ=float(row[4]), t_search=float(row[5]),
                start_used=row[6], evaluations=int(row[7]), converged=_parse_bool(row[8]),
            ))
        except ValueError as exc:
            raise SchemaError(f"{path}: bad record {row}: {exc}") from None
    return out


def write_json(doc, path) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"cannot serialise {type(o).__name__}")


def write_records_json(records: Sequence[SearchRecord], path, labels=None) -> None:
    rows = []
    for r in records:
        d = r.as_dict()
        if labels is not None:
            d["node"] = int(labels[r.node])
        rows.append(d)
    write_json({"columns": list(SearchRecord.columns()), "records": rows}, path)


def derive_seed(master: int, stage: str, counter: int = 0) -> int:
    """Sub-seed for ``(stage, counter)``.

    Each sub-seed depends only on the master seed, the stage name and the
    counter, so inserting a new stage never changes the streams of the others.
    """
    ss = np.random.SeedSequence([int(master), zlib.crc32(stage.encode()), int(counter)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))
