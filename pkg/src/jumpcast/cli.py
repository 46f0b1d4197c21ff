"""Command-line front end: features -> models -> simulation -> reports.

Subcommands: ``features`` (feature/correlation/histogram CSVs),
``simulate`` (one multi-hour sample path), ``backtest`` (full combo sweep),
``report`` (pretty-print a combos.csv). Exit codes: 0 success, 1 usage,
2 data error, 3 model error (partial results preserved).

Every run writes only inside the configured output directory and drops a
run_manifest.json carrying the seed, the config fingerprint, and input
checksums; equal fingerprints reproduce byte-identical artifacts.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__, backtest, features, ingest, jumpsim
from .config import RunConfig, load_config, month_key
from .errors import (
    EmptyEvaluation,
    EmptyFile,
    EmptyInput,
    GapTooLarge,
    InsufficientMonths,
    JumpcastError,
    MalformedRow,
    NonFinite,
    NonPositivePrice,
    OrderViolation,
    TooFewObservations,
    UnknownTermId,
    WidthMismatch,
    WindowExceedsSeries,
    ZeroVariance,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_MODEL = 3

_DATA_ERRORS = (
    MalformedRow,
    OrderViolation,
    EmptyFile,
    GapTooLarge,
    NonPositivePrice,
    WindowExceedsSeries,
    ZeroVariance,
    InsufficientMonths,
    EmptyEvaluation,
    FileNotFoundError,
)
_MODEL_ERRORS = (TooFewObservations, NonFinite, EmptyInput, WidthMismatch)

DIRECT_TERMS = {"pct_change", "drift", "pct_change_negated", "drift_negated", "vol"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems exit 1, not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _load_months(cfg: RunConfig) -> tuple[list[ingest.MonthSeries], dict[str, str]]:
    months = []
    checksums = {}
    for year, month in cfg.months():
        path = cfg.data_path(year, month)
        if not path.exists():
            raise FileNotFoundError(f"missing data file {path}")
        months.append(ingest.parse_kline_csv(path, strict=cfg.strict_parsing))
        checksums[path.name] = _sha256(path)
    return months, checksums


def _build_table(cfg: RunConfig) -> tuple[features.FeatureTable, dict[str, str]]:
    months, checksums = _load_months(cfg)
    series = ingest.stitch_months(
        months, cfg.resolved_lookback, max_gap_hours=cfg.max_gap_hours
    )
    table = features.build_feature_table(
        series, cfg.window_n, del_drift_on=cfg.del_drift_on
    )
    return table, checksums


def _write_manifest(cfg: RunConfig, out_dir: Path, command: str, extra: dict) -> None:
    doc = {
        "command": command,
        "version": __version__,
        "seed": cfg.seed,
        "config_fingerprint": cfg.fingerprint(),
        "config": cfg.to_dict(),
        **extra,
    }
    (out_dir / "run_manifest.json").write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def cmd_features(cfg: RunConfig) -> int:
    table, checksums = _build_table(cfg)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table.write_csv(out_dir / "features.csv")

    names, corr = features.pearson_corr_matrix(table)
    with (out_dir / "correlation.csv").open("w", newline="") as fh:
        fh.write("," + ",".join(names) + "\n")
        for name, row in zip(names, corr):
            fh.write(name + "," + ",".join(repr(float(v)) for v in row) + "\n")

    hist_files = []
    for col in features.BASE_COLUMNS:
        values = table.columns[col][~table.warmup]
        if not np.isfinite(values).any():
            continue
        edges, counts = features.histogram(values, bins=50)
        path = out_dir / f"hist_{col}.csv"
        with path.open("w", newline="") as fh:
            fh.write("bin_left,bin_right,count\n")
            for k in range(len(counts)):
                fh.write(f"{edges[k]!r},{edges[k + 1]!r},{counts[k]}\n")
        hist_files.append(path.name)

    _write_manifest(
        cfg,
        out_dir,
        "features",
        {
            "data_files": checksums,
            "rows": len(table),
            "gap_markers": int(table.gap_before[1:].sum()),
            "histograms": hist_files,
        },
    )
    return EXIT_OK


def _terms_for(cfg: RunConfig, table: features.FeatureTable, needed: set[str]) -> tuple[dict, dict]:
    """Term series for the requested ids, fitting models only when needed."""
    if needed <= DIRECT_TERMS:
        cols = table.columns
        terms = {
            "pct_change": cols["pct_change"],
            "drift": cols["drift"],
            "pct_change_negated": -cols["pct_change"],
            "drift_negated": -cols["drift"],
            "vol": cols["vol"],
        }
        return terms, {"models": {}, "errors": []}
    schedule = backtest.monthly_retrain_schedule(table)
    return backtest.build_terms(table, schedule, cfg)


def cmd_simulate(cfg: RunConfig, drift_term: str, vol_term: str, hours: int) -> int:
    if drift_term not in backtest.DRIFT_TERMS:
        raise UnknownTermId(drift_term, backtest.DRIFT_TERMS)
    if vol_term not in backtest.VOL_TERMS:
        raise UnknownTermId(vol_term, backtest.VOL_TERMS)
    if hours < 0:
        raise ValueError("hours must be >= 0")
    table, checksums = _build_table(cfg)
    terms, diag = _terms_for(cfg, table, {drift_term, vol_term})

    d, v = terms[drift_term], terms[vol_term]
    usable = ~table.warmup & np.isfinite(d) & np.isfinite(v)
    rows = np.flatnonzero(usable)
    if rows.size == 0:
        raise EmptyEvaluation("no hour has both requested terms available")
    i = int(rows[-1])
    mu = float(d[i])
    sigma = max(0.0, float(v[i]))
    lam = backtest._jump_intensity(mu, cfg.jump_rule)
    rng = np.random.default_rng(
        np.random.SeedSequence((cfg.seed, 97, int(table.open_time[i])))
    )
    path_prices = jumpsim.simulate_path(
        jumpsim.SimConfig(
            s0=float(table.columns["open"][i]),
            mu=mu,
            sigma=sigma,
            jumps=jumpsim.JumpParams(lam, cfg.jump_size_mean, cfg.jump_size_scale * sigma),
            horizon=hours,
            steps_per_hour=cfg.steps_per_hour,
            n_sim=1,
            jump_sampler=cfg.jump_sampler,
        ),
        rng,
    )
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / "sample_path.csv").open("w", newline="") as fh:
        fh.write("hour,price\n")
        for k, price in enumerate(path_prices):
            fh.write(f"{k / cfg.steps_per_hour!r},{float(price)!r}\n")
    _write_manifest(
        cfg,
        out_dir,
        "simulate",
        {
            "data_files": checksums,
            "drift_term": drift_term,
            "vol_term": vol_term,
            "anchor_open_time": int(table.open_time[i]),
            "mu": mu,
            "sigma": sigma,
            "jump_intensity": lam,
            "hours": hours,
            "model_errors": diag["errors"],
        },
    )
    return EXIT_OK


def _parse_combo_filter(text: str | None) -> list[tuple[str, str]] | None:
    if text is None:
        return None
    pairs = []
    for part in text.split(";"):
        bits = [b.strip() for b in part.split(",")]
        if len(bits) != 2:
            raise UnknownTermId(part, ("<drift>,<vol>",))
        pairs.append((bits[0], bits[1]))
    return pairs


def cmd_backtest(cfg: RunConfig, combo_filter: str | None) -> int:
    combos = _parse_combo_filter(combo_filter)
    if combos is not None:
        for d, v in combos:
            if d not in backtest.DRIFT_TERMS:
                raise UnknownTermId(d, backtest.DRIFT_TERMS)
            if v not in backtest.VOL_TERMS:
                raise UnknownTermId(v, backtest.VOL_TERMS)
    table, checksums = _build_table(cfg)
    schedule = backtest.monthly_retrain_schedule(table)
    terms, term_diag = backtest.build_terms(table, schedule, cfg)

    out_dir = Path(cfg.output_dir)
    fc_dir = out_dir / "forecasts"
    fc_dir.mkdir(parents=True, exist_ok=True)

    def on_combo(report: backtest.ComboReport, fcs: list[backtest.HourlyForecast]) -> None:
        backtest.write_forecast_csv(
            fcs, fc_dir / f"{report.drift_term}__{report.vol_term}.csv"
        )

    reports, sweep_diag = backtest.sweep_all_combos(
        table, terms, cfg, schedule, combos=combos, on_combo=on_combo
    )
    backtest.write_combo_csv(reports, out_dir / "combos.csv")

    jump_totals = {f"{r.drift_term}/{r.vol_term}": r.n_jumps for r in reports}
    _write_manifest(
        cfg,
        out_dir,
        "backtest",
        {
            "data_files": checksums,
            "schedule": [[month_key(a), month_key(b)] for a, b in schedule],
            "combos": len(reports),
            "model_diagnostics": term_diag["models"],
            "model_errors": term_diag["errors"],
            "combo_errors": sweep_diag["combo_errors"],
            "skipped_hours": sweep_diag["skipped_hours"],
            "realized_jumps": jump_totals,
        },
    )
    if term_diag["errors"] or sweep_diag["combo_errors"]:
        logger.error(
            "completed with %d model/combos errors; artifacts preserved",
            len(term_diag["errors"]) + len(sweep_diag["combo_errors"]),
        )
        return EXIT_MODEL
    return EXIT_OK


def cmd_report(path: str, sort_by: str, descending: bool, top: int | None) -> int:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise EmptyFile(path)
    if sort_by not in rows[0]:
        raise ValueError(f"unknown column {sort_by!r}; have {list(rows[0])}")

    def sort_key(row: dict) -> tuple:
        raw = row[sort_by]
        try:
            val = float(raw)
        except ValueError:
            return (1, 0.0)
        return (1, 0.0) if math.isnan(val) else (0, -val if descending else val)

    rows.sort(key=sort_key)
    if top is not None:
        rows = rows[:top]
    cols = (
        "drift_term",
        "diffusion_term",
        "rmse",
        "mape",
        "rmse_t",
        "mape_t",
        "accuracy",
        "accuracy_t",
        "precision_t",
        "recall_t",
        "f1_score_t",
    )
    widths = {c: max(len(c), *(len(_short(r[c])) for r in rows)) for c in cols}
    print("  ".join(c.ljust(widths[c]) for c in cols))
    for r in rows:
        print("  ".join(_short(r[c]).ljust(widths[c]) for c in cols))
    return EXIT_OK


def _short(cell: str) -> str:
    try:
        return f"{float(cell):.4g}"
    except ValueError:
        return cell if cell else "-"


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML or JSON config file")
    p.add_argument("--data-dir", dest="data_dir")
    p.add_argument("--symbol")
    p.add_argument("--start", help="first month, YYYY-MM")
    p.add_argument("--end", help="last month, YYYY-MM")
    p.add_argument("--window-n", dest="window_n", type=int)
    p.add_argument("--n-sim", dest="n_sim", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--jump-rule", dest="jump_rule", choices=("clamp", "abs", "none"))
    p.add_argument("--threads", type=int)
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument(
        "--lenient",
        action="store_true",
        help="log and drop inconsistent candles instead of rejecting the file",
    )


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    overrides = {
        key: getattr(args, key, None)
        for key in (
            "data_dir",
            "symbol",
            "start",
            "end",
            "window_n",
            "n_sim",
            "seed",
            "jump_rule",
            "threads",
            "output_dir",
        )
    }
    if getattr(args, "lenient", False):
        overrides["strict_parsing"] = False
    return load_config(args.config, overrides)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="jumpcast", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_feat = sub.add_parser("features", help="feature, correlation and histogram CSVs")
    _add_common(p_feat)

    p_sim = sub.add_parser("simulate", help="one multi-hour sample path")
    _add_common(p_sim)
    p_sim.add_argument("--drift", required=True, help="drift term id")
    p_sim.add_argument("--vol", required=True, help="volatility term id")
    p_sim.add_argument("--hours", type=int, default=24)

    p_back = sub.add_parser("backtest", help="full drift x volatility sweep")
    _add_common(p_back)
    p_back.add_argument(
        "--combo",
        help="restrict to pairs, e.g. 'drift_negated,forc_vol_gjr;drift,vol'",
    )

    p_rep = sub.add_parser("report", help="pretty-print a combos.csv")
    p_rep.add_argument("--input", required=True, help="path to combos.csv")
    p_rep.add_argument("--sort-by", dest="sort_by", default="rmse")
    p_rep.add_argument("--descending", action="store_true")
    p_rep.add_argument("--top", type=int)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "report":
            return cmd_report(args.input, args.sort_by, args.descending, args.top)
        cfg = _config_from_args(args)
        if args.command == "features":
            return cmd_features(cfg)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.drift, args.vol, args.hours)
        return cmd_backtest(cfg, args.combo)
    except UnknownTermId as exc:
        print(f"jumpcast: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"jumpcast: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _DATA_ERRORS as exc:
        print(f"jumpcast: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except _MODEL_ERRORS as exc:
        print(f"jumpcast: model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except JumpcastError as exc:
        print(f"jumpcast: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
