"""Rolling drift/volatility feature engineering.

Builds the twelve predictor columns — open at delay 0, the seven remaining
candle fields at delay 1, and pct_change / drift / vol / del_drift computed
on the open price — under a strict no-lookahead shift discipline: the
feature row at hour i contains no information from hour i other than its
open price.

NaN marks an unavailable value throughout (insufficient trailing window, or
a window that would span a recorded data gap).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import NonPositivePrice, WindowExceedsSeries, ZeroVariance
from .ingest import StitchedSeries

BASE_COLUMNS = (
    "open",
    "close",
    "high",
    "low",
    "volume",
    "quote_volume",
    "count",
    "taker_buy_volume",
    "pct_change",
    "drift",
    "vol",
    "del_drift",
)

FORECAST_COLUMNS = (
    "lr_pct",
    "poly_pct",
    "xgb_pct",
    "lgbm_pct",
    "forc_vol_lr",
    "forc_vol_poly",
    "forc_vol_xgb",
    "forc_vol_gjr",
)

DELAY_ONE_FIELDS = (
    "close",
    "high",
    "low",
    "volume",
    "quote_volume",
    "count",
    "taker_buy_volume",
)


def pct_change(prices: np.ndarray) -> np.ndarray:
    """Simple returns (P_i - P_{i-1}) / P_{i-1}; output is one shorter."""
    prices = np.asarray(prices, dtype=float)
    if prices.size < 2:
        raise WindowExceedsSeries("need at least 2 prices")
    if not np.all(np.isfinite(prices) & (prices > 0)):
        raise NonPositivePrice("prices must be finite and > 0")
    return (prices[1:] - prices[:-1]) / prices[:-1]


def rolling_drift(deltas: np.ndarray, n: int) -> np.ndarray:
    """Trailing n-mean of the return series, aligned with its input.

    The first n-1 outputs lack a full window and are NaN (warm-up). NaNs in
    the input propagate, so windows spanning a gap come out NaN as well.
    """
    deltas = np.asarray(deltas, dtype=float)
    if n < 1:
        raise ValueError("window must be >= 1")
    if deltas.size < n:
        raise WindowExceedsSeries(f"series of {deltas.size} shorter than window {n}")
    out = np.full(deltas.size, np.nan)
    out[n - 1:] = sliding_window_view(deltas, n).mean(axis=1)
    return out


def rolling_vol(deltas: np.ndarray, rho: np.ndarray, n: int) -> np.ndarray:
    """Trailing population standard deviation of returns about ``rho``.

    Divides by n (not n-1), centering each window on the rolling mean for
    the same window.
    """
    deltas = np.asarray(deltas, dtype=float)
    rho = np.asarray(rho, dtype=float)
    if deltas.shape != rho.shape:
        raise ValueError("deltas and rho must be aligned")
    if deltas.size < n:
        raise WindowExceedsSeries(f"series of {deltas.size} shorter than window {n}")
    windows = sliding_window_view(deltas, n)
    centered = windows - rho[n - 1:, None]
    out = np.full(deltas.size, np.nan)
    out[n - 1:] = np.sqrt((centered**2).mean(axis=1))
    return out


def delta_drift(rho: np.ndarray) -> np.ndarray:
    """First difference of the drift series; output is one shorter."""
    rho = np.asarray(rho, dtype=float)
    if rho.size < 2:
        raise WindowExceedsSeries("need at least 2 drift values")
    return rho[1:] - rho[:-1]


@dataclass(frozen=True)
class FeatureRow:
    open_time: int
    open: float
    close: float
    high: float
    low: float
    volume: float
    quote_volume: float
    count: float
    taker_buy_volume: float
    pct_change: float
    drift: float
    vol: float
    del_drift: float
    warmup: bool


class FeatureTable:
    """Array-backed table of the twelve predictors plus forecast slots.

    ``warmup`` flags the first n rows of the series (insufficient trailing
    window); forecast slots are NaN until a model run fills them.
    """

    def __init__(
        self,
        open_time: np.ndarray,
        year: np.ndarray,
        month: np.ndarray,
        columns: dict[str, np.ndarray],
        n: int,
        warmup: np.ndarray,
        gap_before: np.ndarray,
    ):
        self.open_time = open_time
        self.year = year
        self.month = month
        self.columns = columns
        self.n = n
        self.warmup = warmup
        self.gap_before = gap_before
        for name in FORECAST_COLUMNS:
            self.columns.setdefault(name, np.full(len(open_time), np.nan))

    def __len__(self) -> int:
        return len(self.open_time)

    @property
    def month_keys(self) -> list[tuple[int, int]]:
        keys: list[tuple[int, int]] = []
        for y, m in zip(self.year, self.month):
            if not keys or keys[-1] != (int(y), int(m)):
                keys.append((int(y), int(m)))
        return keys

    def month_mask(self, key: tuple[int, int]) -> np.ndarray:
        return (self.year == key[0]) & (self.month == key[1])

    def feature_matrix(self) -> np.ndarray:
        """(rows, 12) matrix of the base predictors, NaN where unavailable."""
        return np.column_stack([self.columns[c] for c in BASE_COLUMNS])

    def complete_mask(self) -> np.ndarray:
        """Rows usable as model inputs: not warm-up, all 12 predictors finite."""
        return ~self.warmup & np.isfinite(self.feature_matrix()).all(axis=1)

    def row(self, i: int) -> FeatureRow:
        vals = {c: float(self.columns[c][i]) for c in BASE_COLUMNS}
        return FeatureRow(
            open_time=int(self.open_time[i]), warmup=bool(self.warmup[i]), **vals
        )

    def write_csv(self, path) -> None:
        """Stable plot-ready CSV: open_time, the 20 named columns, warmup."""
        names = list(BASE_COLUMNS) + list(FORECAST_COLUMNS)
        with open(path, "w", newline="") as fh:
            fh.write("open_time," + ",".join(names) + ",warmup\n")
            for i in range(len(self)):
                cells = [str(int(self.open_time[i]))]
                for c in names:
                    v = self.columns[c][i]
                    cells.append("" if not np.isfinite(v) else repr(float(v)))
                cells.append("1" if self.warmup[i] else "0")
                fh.write(",".join(cells) + "\n")


def build_feature_table(
    series: StitchedSeries, n: int, *, del_drift_on: str = "drift"
) -> FeatureTable:
    """Compute the feature set over a stitched series.

    ``del_drift_on`` selects whether del_drift differences the drift series
    (default, matching the feature's description) or the pct_change series
    (the alternative reading of its defining equation).
    """
    if del_drift_on not in ("drift", "pct_change"):
        raise ValueError("del_drift_on must be 'drift' or 'pct_change'")
    t = len(series)
    if t < n + 2:
        raise WindowExceedsSeries(f"{t} rows cannot support window {n}")

    opens = series.open
    if not np.all(np.isfinite(opens) & (opens > 0)):
        raise NonPositivePrice("open prices must be finite and > 0")

    # Returns on the open price; invalid where the previous row is not
    # exactly one hour earlier.
    delta = np.full(t, np.nan)
    delta[1:] = (opens[1:] - opens[:-1]) / opens[:-1]
    delta[series.gap_before] = np.nan

    rho = rolling_drift(delta[1:], n)
    sig = rolling_vol(delta[1:], rho, n)
    drift = np.concatenate([[np.nan], rho])
    vol = np.concatenate([[np.nan], sig])

    if del_drift_on == "drift":
        dd_src = drift
    else:
        dd_src = delta
    del_d = np.full(t, np.nan)
    del_d[1:] = dd_src[1:] - dd_src[:-1]

    columns: dict[str, np.ndarray] = {
        "open": opens.copy(),
        "pct_change": delta,
        "drift": drift,
        "vol": vol,
        "del_drift": del_d,
    }
    for name in DELAY_ONE_FIELDS:
        raw = getattr(series, name)
        shifted = np.full(t, np.nan)
        shifted[1:] = raw[:-1]
        shifted[series.gap_before] = np.nan
        columns[name] = shifted

    warmup = np.arange(t) < n
    return FeatureTable(
        open_time=series.open_time.copy(),
        year=series.year.copy(),
        month=series.month.copy(),
        columns=columns,
        n=n,
        warmup=warmup,
        gap_before=series.gap_before.copy(),
    )


def pearson_corr_matrix(
    table: FeatureTable, columns: list[str] | None = None
) -> tuple[list[str], np.ndarray]:
    """Pearson correlation over rows where every selected column is finite."""
    if columns is None:
        columns = list(BASE_COLUMNS)
    data = np.column_stack([table.columns[c] for c in columns])
    rows = ~table.warmup & np.isfinite(data).all(axis=1)
    data = data[rows]
    if data.shape[0] < 2:
        raise WindowExceedsSeries("need at least 2 complete rows for correlation")
    for j, c in enumerate(columns):
        if np.ptp(data[:, j]) == 0.0:
            raise ZeroVariance(c)
    corr = np.corrcoef(data, rowvar=False)
    corr = np.clip((corr + corr.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return list(columns), corr


def histogram(
    values: np.ndarray, bins: int | np.ndarray = 50
) -> tuple[np.ndarray, np.ndarray]:
    """Histogram of the finite inputs; counts always sum to their number."""
    values = np.asarray(values, dtype=float)
    finite = values[np.isfinite(values)]
    if finite.size == 0:
        edges = np.linspace(0.0, 1.0, bins + 1) if np.isscalar(bins) else np.asarray(bins, dtype=float)
        return edges, np.zeros(len(edges) - 1, dtype=np.int64)
    counts, edges = np.histogram(finite, bins=bins)
    return edges, counts
