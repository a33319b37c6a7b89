"""Tabular outputs with provenance headers, and timestamp import.

CSV layout: a block of ``# key: value`` lines (artifact version, command,
seed, units, resolved configuration as compact JSON), then a column header
row, then data rows.  Floats are written with ``repr`` so every value reads
back bit-identical.
"""

from __future__ import annotations

import bisect
import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .spectroscopy import SpectrumPoint

DEFAULT_DRIFT_FACTOR = 1.25e-5
MAX_DRIFT_FACTOR = 1e-3


@dataclass(frozen=True)
class Table:
    columns: tuple[str, ...]
    rows: tuple[tuple, ...]
    header: dict

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if hasattr(v, "item"):  # numpy scalar
        return _fmt(v.item())
    return str(v)


def _parse(text: str):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def format_csv(columns, rows, header: dict | None = None) -> str:
    """Render a table; ``header`` values are JSON-encoded when not plain strings."""
    buf = io.StringIO()
    hdr = {"artifact_version": __version__, **(header or {})}
    for k, v in hdr.items():
        val = v if isinstance(v, str) else json.dumps(v, sort_keys=True, separators=(",", ":"))
        buf.write(f"# {k}: {val}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        if len(r) != len(columns):
            raise ValueError(f"row has {len(r)} values, expected {len(columns)}")
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def write_csv(path, columns, rows, header: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(format_csv(columns, rows, header))
    return path


def parse_csv(text: str) -> Table:
    header = {}
    lines = text.splitlines()
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        key, _, val = lines[i][1:].strip().partition(":")
        val = val.strip()
        try:
            header[key.strip()] = json.loads(val)
        except json.JSONDecodeError:
            header[key.strip()] = val
        i += 1
    reader = csv.reader(lines[i:])
    try:
        columns = tuple(next(reader))
    except StopIteration:
        raise ValueError("CSV has no column header row") from None
    rows = []
    for n, r in enumerate(reader, start=i + 2):
        if not r:
            continue
        if len(r) != len(columns):
            raise ValueError(f"line {n}: {len(r)} values, expected {len(columns)}")
        rows.append(tuple(_parse(v) for v in r))
    return Table(columns, tuple(rows), header)


def read_csv(path) -> Table:
    return parse_csv(Path(path).read_text(encoding="utf-8"))


def write_json(path, doc: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps({"artifact_version": __version__, **doc}, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    return path


# --- spectra --------------------------------------------------------------------

SPECTRUM_COLUMNS = ("tau_us", "p_down", "sigma")


def spectrum_rows(points) -> list[tuple]:
    return [(p.tau, p.signal, "" if p.sigma is None else p.sigma) for p in points]


def read_spectrum(path):
    """Spectrum points from a CSV with ``tau_us`` and ``p_down`` (and optionally ``sigma``) columns."""
    table = read_csv(path)
    missing = {"tau_us", "p_down"} - set(table.columns)
    if missing:
        raise ValueError(f"{path}: missing spectrum columns {sorted(missing)}")
    taus = table.column("tau_us")
    ys = table.column("p_down")
    sig = table.column("sigma") if "sigma" in table.columns else [""] * len(taus)
    return [SpectrumPoint(float(t), float(y), None if s == "" else float(s)) for t, y, s in zip(taus, ys, sig)]


# --- timestamps -----------------------------------------------------------------

@dataclass(frozen=True)
class TimestampRecord:
    raw_time: float  # s, acquisition clock
    corrected_time: float  # s, reference clock


def correct_clock_drift(records, factor: float = DEFAULT_DRIFT_FACTOR) -> list[TimestampRecord]:
    """Rescale acquisition timestamps onto the reference clock: t * (1 - factor).

    ``records`` may hold :class:`TimestampRecord` items or bare raw times.
    A positive factor shrinks timestamps; pass a negative one for the
    opposite clock ordering.
    """
    if not (math.isfinite(factor) and abs(factor) < MAX_DRIFT_FACTOR):
        raise ValueError(f"drift factor must satisfy |factor| < {MAX_DRIFT_FACTOR}, got {factor}")
    scale = 1.0 - factor
    out = []
    for r in records:
        raw = r.raw_time if isinstance(r, TimestampRecord) else float(r)
        out.append(TimestampRecord(raw, raw * scale))
    return out


def read_timestamps(path, factor: float = DEFAULT_DRIFT_FACTOR) -> list[TimestampRecord]:
    """Read the ``raw_time_s`` column (else the first column) and correct it."""
    table = read_csv(path)
    col = "raw_time_s" if "raw_time_s" in table.columns else table.columns[0]
    try:
        return correct_clock_drift([float(v) for v in table.column(col)], factor)
    except (TypeError, ValueError) as exc:
        raise ValueError(f"{path}: {exc}") from None


def counts_in_windows(times, edges) -> list[int]:
    """Number of timestamps in each half-open window [edges[i], edges[i+1])."""
    ts = sorted(times)
    if any(b < a for a, b in zip(edges, edges[1:])):
        raise ValueError("window edges must be sorted")
    return [bisect.bisect_left(ts, b) - bisect.bisect_left(ts, a) for a, b in zip(edges, edges[1:])]
