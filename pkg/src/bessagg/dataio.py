"""CSV ingestion and emission of unit and price data.

Layout of a data directory::

    prices.csv          timestamp,da_price,rt_price
    units/<id>.csv      timestamp,pv_kw,demand_kw

Timestamps are ISO-8601 UTC hours (``2012-02-01T00:00:00Z``). Floats
are written with ``repr`` so a round trip is exact.
"""

from __future__ import annotations

import csv
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .core import HOURS, BatterySpec, HourlySeries, InvalidArgumentError, UnitSpec
from .sim import Dataset

PRICE_COLUMNS = ("timestamp", "da_price", "rt_price")
UNIT_COLUMNS = ("timestamp", "pv_kw", "demand_kw")
ONE_HOUR = timedelta(hours=1)


class DataFormatError(InvalidArgumentError):
    """A data file violates the expected layout or content rules."""


def format_time(ts: datetime) -> str:
    return ts.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def parse_time(text: str) -> datetime:
    ts = datetime.fromisoformat(text.strip().replace("Z", "+00:00"))
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=timezone.utc)
    ts = ts.astimezone(timezone.utc)
    if ts.minute or ts.second or ts.microsecond:
        raise ValueError("timestamp is not on the hour")
    return ts


def read_table(path: Path, columns: tuple) -> tuple[datetime, np.ndarray]:
    """Parse a timestamped CSV; returns the first timestamp and a (rows, cols-1) array."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != columns:
            raise DataFormatError(f"{path}:1: expected header {','.join(columns)}")
        start = None
        prev = None
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(columns):
                raise DataFormatError(f"{path}:{lineno}: expected {len(columns)} fields, got {len(row)}")
            try:
                ts = parse_time(row[0])
                vals = [float(cell) for cell in row[1:]]
            except ValueError as exc:
                raise DataFormatError(f"{path}:{lineno}: {exc}") from None
            if not all(np.isfinite(vals)):
                raise DataFormatError(f"{path}:{lineno}: non-finite value")
            if prev is not None and ts != prev + ONE_HOUR:
                if ts > prev + ONE_HOUR:
                    raise DataFormatError(f"{path}:{lineno}: missing hour {format_time(prev + ONE_HOUR)}")
                raise DataFormatError(f"{path}:{lineno}: timestamp {format_time(ts)} out of order or repeated")
            if start is None:
                start = ts
            prev = ts
            rows.append(vals)
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    return start, np.array(rows, dtype=float)


def load_prices(path) -> tuple[HourlySeries, HourlySeries]:
    start, arr = read_table(Path(path), PRICE_COLUMNS)
    return HourlySeries(start, arr[:, 0], "currency/kWh"), HourlySeries(start, arr[:, 1], "currency/kWh")


def load_unit(path, battery: BatterySpec, unit_id: str | None = None) -> UnitSpec:
    path = Path(path)
    start, arr = read_table(path, UNIT_COLUMNS)
    for col, name in ((0, "pv_kw"), (1, "demand_kw")):
        bad = np.flatnonzero(arr[:, col] < 0)
        if bad.size:
            # header is line 1, data row i sits on line i + 2 (blank lines aside)
            raise DataFormatError(f"{path}: negative {name} in data row {int(bad[0])} (line {int(bad[0]) + 2})")
    if arr.shape[0] % HOURS:
        raise DataFormatError(f"{path}: {arr.shape[0]} rows is not a whole number of days")
    return UnitSpec(unit_id or path.stem, battery, HourlySeries(start, arr[:, 0], "kW"),
                    HourlySeries(start, arr[:, 1], "kW"))


def ingest(directory, battery: BatterySpec) -> Dataset:
    """Load and validate a data directory; every unit gets ``battery``."""
    root = Path(directory)
    if not root.is_dir():
        raise FileNotFoundError(f"data directory {root} does not exist")
    da, rt = load_prices(root / "prices.csv")
    unit_files = sorted((root / "units").glob("*.csv"))
    if not unit_files:
        raise DataFormatError(f"{root / 'units'}: no unit files")
    units = [load_unit(p, battery) for p in unit_files]
    for u in units:
        if u.pv_history.start_time != da.start_time or len(u.pv_history) != len(da):
            raise DataFormatError(
                f"unit {u.id} covers {format_time(u.pv_history.start_time)} + {len(u.pv_history)} h, "
                f"prices cover {format_time(da.start_time)} + {len(da)} h")
    return Dataset(tuple(units), da, rt)


def _write_rows(path: Path, header, start: datetime, columns) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        ts = start
        for vals in zip(*columns):
            writer.writerow([format_time(ts)] + [repr(float(v)) for v in vals])
            ts += ONE_HOUR


def emit(data: Dataset, directory) -> Path:
    root = Path(directory)
    _write_rows(root / "prices.csv", PRICE_COLUMNS, data.da_prices.start_time,
                (data.da_prices.values, data.rt_prices.values))
    for u in data.units:
        _write_rows(root / "units" / f"{u.id}.csv", UNIT_COLUMNS, u.pv_history.start_time,
                    (u.pv_history.values, u.demand_history.values))
    return root


def write_records(path, rows: list[dict]) -> Path:
    """Write dict rows as CSV with a fixed column order taken from the first row."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        if not rows:
            return path
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    return path


def read_records(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))
