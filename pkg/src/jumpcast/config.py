"""Run configuration: file loading, flag overrides, and fingerprinting.

A run is fully determined by (data, RunConfig, seed); every artifact embeds
the config fingerprint so reruns are verifiable byte-for-byte.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised only on 3.10
    import tomli as tomllib

JUMP_RULES = ("clamp", "abs", "none")
TIE_RULES = ("short", "hold")


@dataclass(frozen=True)
class RunConfig:
    data_dir: str = "data"
    symbol: str = "BTCUSDT"
    start: str = "2020-01"
    end: str = "2023-01"
    window_n: int = 60
    lookback_hours: int | None = None  # None resolves to window_n + 1
    max_gap_hours: int = 24
    strict_parsing: bool = True
    n_sim: int = 10_000
    seed: int = 0
    steps_per_hour: int = 1
    jump_rule: str = "clamp"  # lambda = clamp(2*drift) | abs(2*drift) | 0
    jump_size_mean: float = 0.0
    jump_size_scale: float = 2.0  # jump size std = scale * sigma term
    jump_sampler: str = "compound_poisson"
    tie_rule: str = "short"
    vol_floor: float = 1e-8
    del_drift_on: str = "drift"
    poly_interactions: bool = True
    gbt_rounds: int = 100
    gbt_learning_rate: float = 0.1
    gbt_max_depth: int = 4
    gbt_reg_lambda: float = 1.0
    gbt_min_child_weight: float = 1.0
    goss_top_fraction: float = 0.2
    goss_rest_fraction: float = 0.2
    garch_min_obs: int = 100
    min_train_rows: int = 30
    threads: int = 1
    output_dir: str = "out"

    def __post_init__(self):
        if self.window_n < 1 or self.n_sim < 1 or self.steps_per_hour < 1:
            raise ValueError("window_n, n_sim, steps_per_hour must be >= 1")
        if self.jump_rule not in JUMP_RULES:
            raise ValueError(f"jump_rule must be one of {JUMP_RULES}")
        if self.tie_rule not in TIE_RULES:
            raise ValueError(f"tie_rule must be one of {TIE_RULES}")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")
        parse_month(self.start)
        parse_month(self.end)

    @property
    def resolved_lookback(self) -> int:
        # window_n + 1 rows of history make every non-first-month row
        # fully featured (del_drift needs one extra trailing hour).
        return self.lookback_hours if self.lookback_hours is not None else self.window_n + 1

    def months(self) -> list[tuple[int, int]]:
        return month_range(parse_month(self.start), parse_month(self.end))

    def data_path(self, year: int, month: int) -> Path:
        return Path(self.data_dir) / f"{self.symbol}-1h-{year:04d}-{month:02d}.csv"

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def fingerprint(self) -> str:
        canon = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()[:16]

    def replace(self, **kwargs) -> "RunConfig":
        return dataclasses.replace(self, **kwargs)


def parse_month(text: str) -> tuple[int, int]:
    try:
        y, m = text.split("-")
        year, month = int(y), int(m)
    except ValueError as exc:
        raise ValueError(f"month must look like YYYY-MM, got {text!r}") from exc
    if not 1 <= month <= 12:
        raise ValueError(f"month out of range in {text!r}")
    return year, month


def month_range(start: tuple[int, int], end: tuple[int, int]) -> list[tuple[int, int]]:
    if start > end:
        raise ValueError(f"start {start} after end {end}")
    out = []
    y, m = start
    while (y, m) <= end:
        out.append((y, m))
        y, m = (y + 1, 1) if m == 12 else (y, m + 1)
    return out


def month_key(key: tuple[int, int]) -> str:
    return f"{key[0]:04d}-{key[1]:02d}"


_FIELD_NAMES = {f.name for f in dataclasses.fields(RunConfig)}


def load_config(path: str | Path | None, overrides: dict | None = None) -> RunConfig:
    """Merge defaults <- config file <- overrides (flags win)."""
    merged: dict = {}
    if path is not None:
        path = Path(path)
        if path.suffix == ".json":
            data = json.loads(path.read_text())
        elif path.suffix == ".toml":
            with path.open("rb") as fh:
                data = tomllib.load(fh)
        else:
            raise ValueError(f"config must be .toml or .json, got {path.name}")
        unknown = set(data) - _FIELD_NAMES
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        merged.update(data)
    for key, val in (overrides or {}).items():
        if val is not None:
            merged[key] = val
    return RunConfig(**merged)
