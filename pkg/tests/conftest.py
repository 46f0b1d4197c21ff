import numpy as np
import pytest

from jumpcast import features, ingest, synth
from jumpcast.config import RunConfig

SYNTH_SEED = 7
SYMBOL = "SYNUSDT"


@pytest.fixture(scope="session")
def synth_dir(tmp_path_factory):
    """Two bundled synthetic months in exchange dump layout."""
    directory = tmp_path_factory.mktemp("synth")
    synth.write_synthetic_months(directory, "2021-01", 2, symbol=SYMBOL, seed=SYNTH_SEED)
    return directory


@pytest.fixture(scope="session")
def synth_months(synth_dir):
    paths = sorted(synth_dir.glob(f"{SYMBOL}-1h-*.csv"))
    return [ingest.parse_kline_csv(p) for p in paths]


def config_for(synth_dir, **overrides) -> RunConfig:
    base = dict(
        data_dir=str(synth_dir),
        symbol=SYMBOL,
        start="2021-01",
        end="2021-02",
        n_sim=300,
        seed=11,
    )
    base.update(overrides)
    return RunConfig(**base)


@pytest.fixture
def cfg(synth_dir):
    return config_for(synth_dir)


@pytest.fixture
def table(synth_months, cfg):
    series = ingest.stitch_months(synth_months, cfg.resolved_lookback)
    return features.build_feature_table(series, cfg.window_n)


def make_month(year, month, opens, *, volume=10.0, count=100) -> ingest.MonthSeries:
    """MonthSeries from an open-price path (one extra price closes the
    last candle); candles are flat enough to satisfy every invariant."""
    opens = np.asarray(opens, dtype=float)
    start = synth._month_start_ms(year, month)
    klines = []
    for i in range(len(opens) - 1):
        op, cl = float(opens[i]), float(opens[i + 1])
        klines.append(
            ingest.Kline(
                open_time=start + i * ingest.HOUR_MS,
                open=op,
                high=max(op, cl) * 1.001,
                low=min(op, cl) * 0.999,
                close=cl,
                volume=volume,
                quote_volume=volume * op,
                count=count,
                taker_buy_volume=volume / 2,
            )
        )
    return ingest.MonthSeries(year=year, month=month, klines=tuple(klines), source_path="<test>")
