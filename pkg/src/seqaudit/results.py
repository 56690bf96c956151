"""Result files: a versioned JSON summary plus CSV tables.

Outputs are byte-deterministic: keys are sorted, floats are written with 17
significant digits, and nothing time-dependent goes into a file unless
explicitly requested.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Sequence

SCHEMA_VERSION = "seqaudit-result/1"
OUTPUT_DIR_ENV = "SEQAUDIT_OUTPUT_DIR"
DEFAULT_OUTPUT_DIR = "seqaudit_out"

TRACE_COLUMNS = ("t", "s", "L", "U")
TRIAL_COLUMNS = ("trial", "b", "b_prime", "l")
LCDF_COLUMNS = ("b", "l", "cdf")


def decimal(x) -> str:
    return format(float(x), ".17g")


def probability(x) -> dict:
    """A probability as a 17-digit decimal and, when exact, a rational."""
    if isinstance(x, Fraction):
        return {"decimal": decimal(x), "rational": f"{x.numerator}/{x.denominator}"}
    return {"decimal": decimal(x), "rational": None}


def _plain(obj):
    if isinstance(obj, Fraction):
        return probability(obj)
    if isinstance(obj, float):
        # 17 significant digits round-trip every double
        return float(decimal(obj))
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if hasattr(obj, "item") and callable(obj.item):
        return _plain(obj.item())
    return obj


def dumps_json(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _cell(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return decimal(v)
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}"
    return str(v)


def dumps_csv(columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row {row!r} does not match columns {columns}")
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def output_dir(explicit: str | os.PathLike | None = None) -> Path:
    """``explicit``, else ``$SEQAUDIT_OUTPUT_DIR``, else ``./seqaudit_out``."""
    if explicit:
        return Path(explicit)
    return Path(os.environ.get(OUTPUT_DIR_ENV) or DEFAULT_OUTPUT_DIR)


def config_hash(config_text: str) -> str:
    return hashlib.sha256(config_text.encode("utf-8")).hexdigest()


def version_string() -> str:
    from seqaudit import __version__

    return f"v{__version__}"


@dataclass
class AuditRecord:
    """Everything written for one CLI run.

    ``tables`` maps a file stem to ``(columns, rows)``.  ``wall_clock`` is
    kept out of the files unless ``include_timing`` is set, so replays stay
    byte-identical.
    """

    command: str
    config_text: str
    summary: dict
    tables: dict[str, tuple[Sequence[str], list]] = field(default_factory=dict)
    seed: int | None = None
    wall_clock: float | None = None
    version: str = field(default_factory=version_string)

    def document(self, include_timing: bool = False) -> dict:
        doc = {
            "schema": SCHEMA_VERSION,
            "command": self.command,
            "version": self.version,
            "seed": self.seed,
            "config_sha256": config_hash(self.config_text),
            "result": self.summary,
        }
        if include_timing and self.wall_clock is not None:
            doc["wall_clock_seconds"] = self.wall_clock
        return doc


def emit_results(record: AuditRecord, out_dir: str | os.PathLike, include_timing: bool = False) -> dict[str, Path]:
    """Write ``<command>.json`` and one CSV per table; return the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise PermissionError(f"output directory {out} is not writable")
    paths = {}
    stem = record.command.replace("-", "_")
    files = {f"{stem}.json": dumps_json(record.document(include_timing))}
    for name, (cols, rows) in record.tables.items():
        files[f"{name}.csv"] = dumps_csv(cols, rows)
    for fname, text in files.items():
        p = out / fname
        p.write_text(text, encoding="utf-8")
        paths[fname] = p
    return paths
