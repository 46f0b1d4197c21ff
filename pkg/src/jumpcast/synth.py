"""Deterministic synthetic kline months for smoke tests and demos.

Prices follow a seeded geometric random walk at realistic hourly scales;
high/low/close and the volume fields respect every candle invariant the
parser enforces. Files land in the exchange dump layout (12 columns) so
they exercise the trailing-column handling of the real format.
"""

from __future__ import annotations

import calendar
import csv
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .config import month_range, parse_month
from .ingest import HOUR_MS


def _month_start_ms(year: int, month: int) -> int:
    return int(datetime(year, month, 1, tzinfo=timezone.utc).timestamp() * 1000)


def synthetic_month_rows(
    year: int,
    month: int,
    s0: float,
    seed: int,
    *,
    drift: float = 0.0,
    vol: float = 0.008,
) -> tuple[list[list], float]:
    """Rows for one month in dump layout; returns them with the next month's
    starting price so consecutive months chain continuously."""
    hours = calendar.monthrange(year, month)[1] * 24
    rng = np.random.default_rng(np.random.SeedSequence((seed, year, month)))
    rets = drift + vol * rng.standard_normal(hours)
    opens = s0 * np.exp(np.concatenate([[0.0], np.cumsum(rets)]))  # one extra: next open
    wick_hi = np.abs(vol * rng.standard_normal(hours)) * 0.5
    wick_lo = np.abs(vol * rng.standard_normal(hours)) * 0.5
    volume = np.exp(rng.normal(7.5, 0.6, hours))
    taker_frac = rng.uniform(0.3, 0.7, hours)
    counts = rng.integers(2_000, 20_000, hours)

    start = _month_start_ms(year, month)
    rows = []
    for i in range(hours):
        op, cl = float(opens[i]), float(opens[i + 1])
        hi = max(op, cl) * (1.0 + float(wick_hi[i]))
        lo = min(op, cl) / (1.0 + float(wick_lo[i]))
        vol_i = float(volume[i])
        quote = vol_i * (op + cl) / 2.0
        open_time = start + i * HOUR_MS
        rows.append(
            [
                open_time,
                repr(op),
                repr(hi),
                repr(lo),
                repr(cl),
                repr(vol_i),
                open_time + HOUR_MS - 1,
                repr(quote),
                int(counts[i]),
                repr(vol_i * float(taker_frac[i])),
                repr(quote * float(taker_frac[i])),
                "0",
            ]
        )
    return rows, float(opens[-1])


def write_synthetic_months(
    directory: str | Path,
    start: str = "2021-01",
    n_months: int = 2,
    *,
    symbol: str = "SYNUSDT",
    seed: int = 7,
    s0: float = 20_000.0,
    drift: float = 0.0,
    vol: float = 0.008,
) -> list[Path]:
    """Write ``n_months`` consecutive monthly CSVs; fully determined by the
    arguments."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    first = parse_month(start)
    last = first
    for _ in range(n_months - 1):
        y, m = last
        last = (y + 1, 1) if m == 12 else (y, m + 1)
    paths = []
    price = s0
    for year, month in month_range(first, last):
        rows, price = synthetic_month_rows(year, month, price, seed, drift=drift, vol=vol)
        path = directory / f"{symbol}-1h-{year:04d}-{month:02d}.csv"
        with path.open("w", newline="") as fh:
            csv.writer(fh).writerows(rows)
        paths.append(path)
    return paths
