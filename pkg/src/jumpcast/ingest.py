"""Hourly kline CSV ingestion.

Parses exchange dump files (one file per calendar month, UTC) into validated
series and stitches consecutive months into one continuous array-backed
series for rolling-window computations. Missing hours are never imputed:
they are recorded as gap markers and downstream feature windows that span a
gap are invalidated.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import EmptyFile, GapTooLarge, MalformedRow, OrderViolation

logger = logging.getLogger(__name__)

HOUR_MS = 3_600_000

# Exchange dump column order. Only the first ten are retained; trailing
# columns (taker_buy_quote_volume, ignore) vary by vintage and are dropped.
DUMP_COLUMNS = (
    "open_time",
    "open",
    "high",
    "low",
    "close",
    "volume",
    "close_time",
    "quote_volume",
    "count",
    "taker_buy_volume",
)


@dataclass(frozen=True)
class Kline:
    """One hourly OHLCV candle."""

    open_time: int  # epoch ms UTC, start of the hour
    open: float
    high: float
    low: float
    close: float
    volume: float
    quote_volume: float
    count: int
    taker_buy_volume: float


@dataclass(frozen=True)
class MonthSeries:
    """All candles of one calendar month, ascending in time."""

    year: int
    month: int
    klines: tuple[Kline, ...]
    source_path: str


def month_of(open_time_ms: int) -> tuple[int, int]:
    dt = datetime.fromtimestamp(open_time_ms / 1000.0, tz=timezone.utc)
    return dt.year, dt.month


def _validate_candle(k: Kline) -> str | None:
    """Return a rejection reason, or None if the candle is consistent."""
    prices = (k.open, k.high, k.low, k.close)
    if not all(math.isfinite(p) and p > 0 for p in prices):
        return "non-positive or non-finite price"
    if k.low > min(k.open, k.close) or k.high < max(k.open, k.close):
        return "OHLC inconsistency (low/high do not bracket open/close)"
    if k.volume < 0 or k.quote_volume < 0 or k.taker_buy_volume < 0 or k.count < 0:
        return "negative volume or trade count"
    return None


def parse_kline_csv(
    path: str | Path,
    schema: Sequence[str] = DUMP_COLUMNS,
    *,
    strict: bool = True,
) -> MonthSeries:
    """Parse one monthly dump file.

    ``schema`` names the column order of the file; it must contain every
    retained field of :data:`DUMP_COLUMNS`. A header line is detected and
    skipped. In strict mode an OHLC-inconsistent row raises
    :class:`MalformedRow`; in lenient mode it is logged and dropped.
    """
    path = Path(path)
    col_idx = {name: i for i, name in enumerate(schema)}
    missing = [c for c in DUMP_COLUMNS if c != "close_time" and c not in col_idx]
    if missing:
        raise ValueError(f"schema is missing columns: {missing}")
    width = max(col_idx[c] for c in col_idx if c != "close_time") + 1

    klines: list[Kline] = []
    dropped = 0
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        for line_no, row in enumerate(reader, start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if line_no == 1:
                ts_pos = col_idx["open_time"]
                cell = row[ts_pos].strip() if ts_pos < len(row) else ""
                if not cell.lstrip("-").isdigit():
                    continue  # header line
            if len(row) < width:
                raise MalformedRow(line_no, f"expected >= {width} columns, got {len(row)}")
            try:
                kline = Kline(
                    open_time=int(row[col_idx["open_time"]]),
                    open=float(row[col_idx["open"]]),
                    high=float(row[col_idx["high"]]),
                    low=float(row[col_idx["low"]]),
                    close=float(row[col_idx["close"]]),
                    volume=float(row[col_idx["volume"]]),
                    quote_volume=float(row[col_idx["quote_volume"]]),
                    count=int(float(row[col_idx["count"]])),
                    taker_buy_volume=float(row[col_idx["taker_buy_volume"]]),
                )
            except ValueError as exc:
                raise MalformedRow(line_no, f"unparsable numeric field: {exc}") from exc
            reason = _validate_candle(kline)
            if reason is not None:
                if strict:
                    raise MalformedRow(line_no, reason)
                logger.warning("%s line %d dropped: %s", path.name, line_no, reason)
                dropped += 1
                continue
            klines.append(kline)

    if not klines:
        raise EmptyFile(str(path))
    if dropped:
        logger.info("%s: dropped %d inconsistent rows (lenient mode)", path.name, dropped)

    year, month = month_of(klines[0].open_time)
    for i, k in enumerate(klines):
        if i > 0:
            dt = k.open_time - klines[i - 1].open_time
            if dt <= 0:
                raise OrderViolation(
                    f"{path.name}: open_time not strictly increasing near row {i + 1}"
                )
            if dt % HOUR_MS != 0:
                raise OrderViolation(
                    f"{path.name}: spacing {dt} ms near row {i + 1} is not a whole hour"
                )
        if month_of(k.open_time) != (year, month):
            raise OrderViolation(
                f"{path.name}: row at {k.open_time} falls outside month {year}-{month:02d}"
            )
    return MonthSeries(year=year, month=month, klines=tuple(klines), source_path=str(path))


def write_kline_csv(series: MonthSeries, path: str | Path) -> None:
    """Serialize back to dump layout (the ten retained columns, no header)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        for k in series.klines:
            writer.writerow(
                [
                    k.open_time,
                    repr(k.open),
                    repr(k.high),
                    repr(k.low),
                    repr(k.close),
                    repr(k.volume),
                    k.open_time + HOUR_MS - 1,
                    repr(k.quote_volume),
                    k.count,
                    repr(k.taker_buy_volume),
                ]
            )


def _next_month(year: int, month: int) -> tuple[int, int]:
    return (year + 1, 1) if month == 12 else (year, month + 1)


_FLOAT_FIELDS = (
    "open",
    "high",
    "low",
    "close",
    "volume",
    "quote_volume",
    "count",
    "taker_buy_volume",
)


class StitchedSeries:
    """Continuous multi-month candle series with per-row month tags.

    Column arrays are aligned by row. ``gap_before[i]`` is True when row i
    is not exactly one hour after row i-1 (and for row 0); rolling windows
    must not cross such a marker.
    """

    def __init__(self, months: Sequence[MonthSeries], lookback_hours: int):
        rows = [k for m in months for k in m.klines]
        self.lookback_hours = int(lookback_hours)
        self.open_time = np.array([k.open_time for k in rows], dtype=np.int64)
        for name in _FLOAT_FIELDS:
            setattr(self, name, np.array([getattr(k, name) for k in rows], dtype=float))
        self.year = np.array([m.year for m in months for _ in m.klines], dtype=np.int64)
        self.month = np.array([m.month for m in months for _ in m.klines], dtype=np.int64)

        dt = np.diff(self.open_time)
        self.gap_before = np.ones(len(rows), dtype=bool)
        if len(rows) > 1:
            self.gap_before[1:] = dt != HOUR_MS

        self._bounds: dict[tuple[int, int], tuple[int, int]] = {}
        start = 0
        for m in months:
            self._bounds[(m.year, m.month)] = (start, start + len(m.klines))
            start += len(m.klines)

    def __len__(self) -> int:
        return len(self.open_time)

    @property
    def month_keys(self) -> list[tuple[int, int]]:
        return list(self._bounds)

    def month_rows(self, key: tuple[int, int]) -> tuple[int, int]:
        """Row range [start, end) of one calendar month."""
        return self._bounds[key]

    def month_window(self, key: tuple[int, int]) -> tuple[int, int]:
        """Month rows preceded by the final ``lookback_hours`` rows of the
        prior month (clipped at the series start)."""
        start, end = self._bounds[key]
        return max(0, start - self.lookback_hours), end

    def n_gaps(self) -> int:
        return int(self.gap_before[1:].sum())


def stitch_months(
    months: Sequence[MonthSeries],
    lookback_hours: int,
    *,
    max_gap_hours: int = 24,
) -> StitchedSeries:
    """Stitch consecutive monthly series into one continuous series.

    Raises :class:`GapTooLarge` when the input months are not consecutive
    calendar months or when a month boundary misses more than
    ``max_gap_hours`` hours.
    """
    if not months:
        raise EmptyFile("no months to stitch")
    for prev, cur in zip(months, months[1:]):
        if (cur.year, cur.month) != _next_month(prev.year, prev.month):
            raise GapTooLarge(
                f"months {prev.year}-{prev.month:02d} and {cur.year}-{cur.month:02d} "
                "are not consecutive"
            )
        dt = cur.klines[0].open_time - prev.klines[-1].open_time
        if dt <= 0:
            raise OrderViolation("month boundary out of order")
        missing = dt // HOUR_MS - 1
        if missing > max_gap_hours:
            raise GapTooLarge(
                f"{missing} hours missing between {prev.year}-{prev.month:02d} "
                f"and {cur.year}-{cur.month:02d} (max {max_gap_hours})"
            )
    stitched = StitchedSeries(months, lookback_hours)
    n_gaps = stitched.n_gaps()
    if n_gaps:
        logger.info("stitched series has %d gap markers (hours are not imputed)", n_gaps)
    return stitched
