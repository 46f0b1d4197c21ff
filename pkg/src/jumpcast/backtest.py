"""Monthly-retrained term building, per-hour Monte Carlo forecasting over
all drift/volatility pairs, and hourly plus transactional scoring.

Eight drift terms (two empirical, four model forecasts, two negations) and
five volatility terms (one empirical, four forecasts) are built once from
the feature table; every (drift, vol) pair is then swept with a
path-dependent hourly Monte Carlo where each hour restarts from the
realized open price. Models are refit at the start of every month on the
immediately preceding month only.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import garch, jumpsim, regress
from .config import RunConfig, month_key
from .errors import (
    EmptyEvaluation,
    InsufficientMonths,
    JumpcastError,
    TooFewObservations,
    UnknownTermId,
)
from .features import FeatureTable

logger = logging.getLogger(__name__)

DRIFT_TERMS = (
    "pct_change",
    "drift",
    "lr_pct",
    "poly_pct",
    "xgb_pct",
    "lgbm_pct",
    "pct_change_negated",
    "drift_negated",
)
VOL_TERMS = ("vol", "forc_vol_lr", "forc_vol_poly", "forc_vol_xgb", "forc_vol_gjr")

LONG = "long"
SHORT = "short"


@dataclass(frozen=True)
class HourlyForecast:
    open_time: int
    drift_term: str
    vol_term: str
    open: float
    forecast: float
    signal: str
    realized_next_open: float
    n_jumps: int | None = None


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


@dataclass(frozen=True)
class ClassificationMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    specificity: float
    matrix: ConfusionMatrix
    undefined: tuple[str, ...] = ()


@dataclass(frozen=True)
class ComboReport:
    drift_term: str
    vol_term: str
    rmse: float
    mape: float
    rmse_t: float
    mape_t: float
    accuracy: float
    accuracy_t: float
    precision_t: float
    recall_t: float
    f1_t: float
    specificity_t: float
    n_hours: int
    n_transactions: int
    n_jumps: int
    undefined: tuple[str, ...]
    config_fingerprint: str


def monthly_retrain_schedule(table: FeatureTable) -> list[tuple[tuple[int, int], tuple[int, int]]]:
    """(train_month, predict_month) pairs; each month is predicted by models
    trained on the immediately preceding month, so the first month is
    training-only. A missing calendar month breaks the chain: that pair is
    skipped and logged."""
    keys = table.month_keys
    if len(keys) < 2:
        raise InsufficientMonths(f"need >= 2 months, have {len(keys)}")
    pairs = []
    for prev, cur in zip(keys, keys[1:]):
        y, m = prev
        expected = (y + 1, 1) if m == 12 else (y, m + 1)
        if cur != expected:
            logger.warning(
                "months %s and %s are not consecutive; pair skipped",
                month_key(prev),
                month_key(cur),
            )
            continue
        pairs.append((prev, cur))
    if not pairs:
        raise InsufficientMonths("no consecutive month pairs available")
    return pairs


def _next_value(table: FeatureTable, column: str) -> np.ndarray:
    """y[i] = column value one hour later, NaN when the next row is absent
    or not contiguous. This is the forecast target for hour i under the
    shift discipline: inputs known at the start of hour i predict the value
    realized at the start of hour i+1."""
    col = table.columns[column]
    out = np.full(len(table), np.nan)
    out[:-1] = col[1:]
    out[:-1][table.gap_before[1:]] = np.nan
    return out


def _family_seed(cfg: RunConfig, family: str, key: tuple[int, int]) -> int:
    ent = (cfg.seed, sum(map(ord, family)), key[0] * 100 + key[1])
    return int(np.random.SeedSequence(ent).generate_state(1)[0])


def _fit_predict_monthly(
    table: FeatureTable,
    schedule: Sequence[tuple[tuple[int, int], tuple[int, int]]],
    cfg: RunConfig,
    target_column: str,
    families: Sequence[str],
) -> tuple[dict[str, np.ndarray], dict]:
    """Walk the retrain schedule for the OLS/poly/GBT families."""
    t = len(table)
    x_all = table.feature_matrix()
    complete = table.complete_mask()
    y_next = _next_value(table, target_column)
    series = {f: np.full(t, np.nan) for f in families}
    diag: dict = {"models": {}, "errors": []}

    goss = regress.GossParams(cfg.goss_top_fraction, cfg.goss_rest_fraction)

    for train_key, pred_key in schedule:
        train_in_month = table.month_mask(train_key)
        next_in_month = np.zeros(t, dtype=bool)
        next_in_month[:-1] = train_in_month[1:]
        train = train_in_month & next_in_month & complete & np.isfinite(y_next)
        pred = table.month_mask(pred_key) & complete
        mk = month_key(pred_key)
        if train.sum() < cfg.min_train_rows:
            diag["errors"].append(
                f"{mk}: only {int(train.sum())} training rows (< {cfg.min_train_rows}); "
                f"{target_column} models skipped"
            )
            continue
        if not pred.any():
            continue
        x_tr, y_tr = x_all[train], y_next[train]
        x_pr = x_all[pred]
        for family in families:
            try:
                dm = regress.design_matrix(x_tr, y_tr)
                info: dict = {"train_rows": int(train.sum())}
                if family.endswith("_lr") or family == "lr_pct":
                    model = regress.ols_fit(dm)
                    info["ridge_fallback"] = model.ridge_fallback
                elif family.endswith("_poly") or family == "poly_pct":
                    model = regress.ols_fit(
                        regress.poly_expand(dm, 2, interactions=cfg.poly_interactions)
                    )
                    info["ridge_fallback"] = model.ridge_fallback
                else:
                    use_goss = family == "lgbm_pct"
                    params = regress.GbtParams(
                        rounds=cfg.gbt_rounds,
                        learning_rate=cfg.gbt_learning_rate,
                        max_depth=cfg.gbt_max_depth,
                        reg_lambda=cfg.gbt_reg_lambda,
                        min_child_weight=cfg.gbt_min_child_weight,
                        goss=goss if use_goss else None,
                        seed=_family_seed(cfg, family, pred_key),
                    )
                    model = regress.gbt_fit(dm, params)
                    info["trees"] = len(model.trees)
                series[family][pred] = model.predict(x_pr)
                diag["models"].setdefault(family, {})[mk] = info
            except JumpcastError as exc:
                diag["errors"].append(f"{mk}/{family}: {exc}")
                logger.warning("month %s skipped for %s: %s", mk, family, exc)
    return series, diag


def forecast_drift_terms(
    table: FeatureTable,
    schedule: Sequence[tuple[tuple[int, int], tuple[int, int]]],
    cfg: RunConfig,
) -> tuple[dict[str, np.ndarray], dict]:
    """The eight drift series, aligned to the table (NaN = unavailable)."""
    pct = table.columns["pct_change"]
    drift = table.columns["drift"]
    terms = {
        "pct_change": pct.copy(),
        "drift": drift.copy(),
        "pct_change_negated": -pct,
        "drift_negated": -drift,
    }
    fitted, diag = _fit_predict_monthly(
        table, schedule, cfg, "pct_change", ("lr_pct", "poly_pct", "xgb_pct", "lgbm_pct")
    )
    terms.update(fitted)
    return terms, diag


def forecast_vol_terms(
    table: FeatureTable,
    schedule: Sequence[tuple[tuple[int, int], tuple[int, int]]],
    cfg: RunConfig,
) -> tuple[dict[str, np.ndarray], dict]:
    """The five volatility series; forecast terms are floored at a small
    positive epsilon (regressors can emit negatives), the empirical vol
    column passes through untouched."""
    terms = {"vol": table.columns["vol"].copy()}
    fitted, diag = _fit_predict_monthly(
        table, schedule, cfg, "vol", ("forc_vol_lr", "forc_vol_poly", "forc_vol_xgb")
    )
    for name, values in fitted.items():
        terms[name] = np.maximum(values, cfg.vol_floor)

    gjr_series = np.full(len(table), np.nan)
    pct = table.columns["pct_change"]
    for train_key, pred_key in schedule:
        mk = month_key(pred_key)
        train_returns = pct[table.month_mask(train_key)]
        train_returns = train_returns[np.isfinite(train_returns)]
        pred_rows = np.flatnonzero(table.month_mask(pred_key))
        if pred_rows.size == 0:
            continue
        try:
            fit = garch.gjr_fit(train_returns, min_obs=cfg.garch_min_obs)
        except TooFewObservations as exc:
            diag["errors"].append(f"{mk}/forc_vol_gjr: {exc}")
            continue
        gjr_series[pred_rows] = garch.gjr_roll_forecasts(fit, pct[pred_rows])
        diag["models"].setdefault("forc_vol_gjr", {})[mk] = {
            "converged": fit.converged,
            "persistence": fit.params.persistence,
        }
        if not fit.converged:
            diag["errors"].append(f"{mk}/forc_vol_gjr: optimizer did not converge")
    terms["forc_vol_gjr"] = np.maximum(gjr_series, cfg.vol_floor)
    return terms, diag


def build_terms(
    table: FeatureTable,
    schedule: Sequence[tuple[tuple[int, int], tuple[int, int]]],
    cfg: RunConfig,
) -> tuple[dict[str, np.ndarray], dict]:
    """All thirteen term series plus merged diagnostics; forecast slots on
    the table are filled in place for CSV export."""
    drift_terms, d_diag = forecast_drift_terms(table, schedule, cfg)
    vol_terms, v_diag = forecast_vol_terms(table, schedule, cfg)
    terms = {**drift_terms, **vol_terms}
    for name in ("lr_pct", "poly_pct", "xgb_pct", "lgbm_pct"):
        table.columns[name] = terms[name]
    for name in ("forc_vol_lr", "forc_vol_poly", "forc_vol_xgb", "forc_vol_gjr"):
        table.columns[name] = terms[name]
    diag = {
        "models": {**d_diag["models"], **v_diag["models"]},
        "errors": d_diag["errors"] + v_diag["errors"],
    }
    return terms, diag


def _jump_intensity(mu: float, rule: str) -> float:
    if rule == "clamp":
        return max(0.0, 2.0 * mu)
    if rule == "abs":
        return abs(2.0 * mu)
    return 0.0


def run_combo(
    table: FeatureTable,
    terms: dict[str, np.ndarray],
    drift_term: str,
    vol_term: str,
    cfg: RunConfig,
    eval_months: Sequence[tuple[int, int]],
) -> list[HourlyForecast]:
    """Hour-by-hour Monte Carlo for one pair; each hour restarts from the
    realized open and is seeded by (master seed, combo, timestamp), so any
    hour's forecast is reproducible in isolation."""
    if drift_term not in DRIFT_TERMS:
        raise UnknownTermId(drift_term, DRIFT_TERMS)
    if vol_term not in VOL_TERMS:
        raise UnknownTermId(vol_term, VOL_TERMS)
    d = terms[drift_term]
    v = terms[vol_term]
    t = len(table)
    opens = table.columns["open"]
    eval_mask = np.zeros(t, dtype=bool)
    for key in eval_months:
        eval_mask |= table.month_mask(key)
    next_ok = np.zeros(t, dtype=bool)
    next_ok[:-1] = ~table.gap_before[1:]
    eligible = eval_mask & ~table.warmup & next_ok & np.isfinite(d) & np.isfinite(v)

    di = DRIFT_TERMS.index(drift_term)
    vi = VOL_TERMS.index(vol_term)
    out: list[HourlyForecast] = []
    prev_signal = SHORT
    for i in np.flatnonzero(eligible):
        mu = float(d[i])
        sigma = max(0.0, float(v[i]))
        lam = _jump_intensity(mu, cfg.jump_rule)
        seed = np.random.SeedSequence((cfg.seed, di, vi, int(table.open_time[i])))
        fc = jumpsim.mc_forecast(
            jumpsim.SimConfig(
                s0=float(opens[i]),
                mu=mu,
                sigma=sigma,
                jumps=jumpsim.JumpParams(lam, cfg.jump_size_mean, cfg.jump_size_scale * sigma),
                horizon=1,
                steps_per_hour=cfg.steps_per_hour,
                n_sim=cfg.n_sim,
                seed=seed,
                jump_sampler=cfg.jump_sampler,
            )
        )
        if fc.mean_price > opens[i]:
            signal = LONG
        elif fc.mean_price < opens[i]:
            signal = SHORT
        else:
            signal = prev_signal if cfg.tie_rule == "hold" else SHORT
        prev_signal = signal
        out.append(
            HourlyForecast(
                open_time=int(table.open_time[i]),
                drift_term=drift_term,
                vol_term=vol_term,
                open=float(opens[i]),
                forecast=fc.mean_price,
                signal=signal,
                realized_next_open=float(opens[i + 1]),
                n_jumps=fc.jump_count,
            )
        )
    return out


def regression_metrics(forecasts: Sequence[HourlyForecast]) -> tuple[float, float]:
    """(RMSE, MAPE) of the forecast price against the realized next open;
    MAPE is in percent."""
    if not forecasts:
        raise EmptyEvaluation("no forecasts to score")
    y = np.array([f.realized_next_open for f in forecasts])
    y_hat = np.array([f.forecast for f in forecasts])
    rmse = float(np.sqrt(np.mean((y - y_hat) ** 2)))
    mape = float(np.mean(np.abs((y - y_hat) / y)) * 100.0)
    return rmse, mape


def confusion_matrix(forecasts: Sequence[HourlyForecast]) -> ConfusionMatrix:
    """Long is the positive class; the true label is an up-move of the next
    open over the current open (a flat next open counts as down)."""
    tp = tn = fp = fn = 0
    for f in forecasts:
        up = f.realized_next_open > f.open
        if f.signal == LONG:
            tp, fp = tp + (1 if up else 0), fp + (0 if up else 1)
        else:
            fn, tn = fn + (1 if up else 0), tn + (0 if up else 1)
    return ConfusionMatrix(tp=tp, tn=tn, fp=fp, fn=fn)


def classification_metrics(forecasts: Sequence[HourlyForecast]) -> ClassificationMetrics:
    """Accuracy, precision, recall, F1, specificity from the confusion
    matrix. Ratios with a zero denominator are NaN and named in
    ``undefined`` together with the empty denominator — never silently 0."""
    if not forecasts:
        raise EmptyEvaluation("no forecasts to score")
    cm = confusion_matrix(forecasts)
    undefined: list[str] = []

    def ratio(num: int, den: int, name: str, den_desc: str) -> float:
        if den == 0:
            undefined.append(f"{name}: {den_desc}=0")
            return math.nan
        return num / den

    accuracy = (cm.tp + cm.tn) / cm.total
    precision = ratio(cm.tp, cm.tp + cm.fp, "precision", "tp+fp")
    recall = ratio(cm.tp, cm.tp + cm.fn, "recall", "tp+fn")
    specificity = ratio(cm.tn, cm.tn + cm.fp, "specificity", "tn+fp")
    if math.isnan(precision) or math.isnan(recall):
        undefined.append("f1: precision or recall undefined")
        f1 = math.nan
    elif precision + recall == 0.0:
        undefined.append("f1: precision+recall=0")
        f1 = math.nan
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return ClassificationMetrics(
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1,
        specificity=specificity,
        matrix=cm,
        undefined=tuple(undefined),
    )


def transactional_filter(forecasts: Sequence[HourlyForecast]) -> list[HourlyForecast]:
    """Hours where the signal changed from the previous hour; the first
    evaluated hour is always retained."""
    out: list[HourlyForecast] = []
    for k, f in enumerate(forecasts):
        if k == 0 or f.signal != forecasts[k - 1].signal:
            out.append(f)
    return out


def _nan_report(drift_term: str, vol_term: str, fingerprint: str, reason: str) -> ComboReport:
    nan = math.nan
    return ComboReport(
        drift_term=drift_term,
        vol_term=vol_term,
        rmse=nan,
        mape=nan,
        rmse_t=nan,
        mape_t=nan,
        accuracy=nan,
        accuracy_t=nan,
        precision_t=nan,
        recall_t=nan,
        f1_t=nan,
        specificity_t=nan,
        n_hours=0,
        n_transactions=0,
        n_jumps=0,
        undefined=(reason,),
        config_fingerprint=fingerprint,
    )


def score_combo(
    forecasts: Sequence[HourlyForecast],
    drift_term: str,
    vol_term: str,
    fingerprint: str,
) -> ComboReport:
    if not forecasts:
        return _nan_report(drift_term, vol_term, fingerprint, "no evaluated hours")
    rmse, mape = regression_metrics(forecasts)
    hourly = classification_metrics(forecasts)
    trans = transactional_filter(forecasts)
    rmse_t, mape_t = regression_metrics(trans)
    cls_t = classification_metrics(trans)
    undefined = tuple(f"hourly {u}" for u in hourly.undefined) + tuple(
        f"transactional {u}" for u in cls_t.undefined
    )
    n_jumps = sum(f.n_jumps for f in forecasts if f.n_jumps is not None)
    return ComboReport(
        drift_term=drift_term,
        vol_term=vol_term,
        rmse=rmse,
        mape=mape,
        rmse_t=rmse_t,
        mape_t=mape_t,
        accuracy=hourly.accuracy,
        accuracy_t=cls_t.accuracy,
        precision_t=cls_t.precision,
        recall_t=cls_t.recall,
        f1_t=cls_t.f1,
        specificity_t=cls_t.specificity,
        n_hours=len(forecasts),
        n_transactions=len(trans),
        n_jumps=n_jumps,
        undefined=undefined,
        config_fingerprint=fingerprint,
    )


def sweep_all_combos(
    table: FeatureTable,
    terms: dict[str, np.ndarray],
    cfg: RunConfig,
    schedule: Sequence[tuple[tuple[int, int], tuple[int, int]]],
    *,
    combos: Sequence[tuple[str, str]] | None = None,
    on_combo: Callable[[ComboReport, list[HourlyForecast]], None] | None = None,
) -> tuple[list[ComboReport], dict]:
    """Score every (drift, vol) pair in canonical order.

    A failing combo is recorded in the diagnostics and reported as a NaN
    row; the sweep never aborts. ``on_combo`` receives each combo's report
    and hourly forecasts as they complete (in canonical order), so callers
    can stream per-combo files without holding all of them.
    """
    eval_months = [pred for _, pred in schedule]
    pairs = list(combos) if combos is not None else [
        (d, v) for d in DRIFT_TERMS for v in VOL_TERMS
    ]
    for d, v in pairs:
        if d not in DRIFT_TERMS:
            raise UnknownTermId(d, DRIFT_TERMS)
        if v not in VOL_TERMS:
            raise UnknownTermId(v, VOL_TERMS)
    fingerprint = cfg.fingerprint()
    diag: dict = {"combo_errors": [], "skipped_hours": {}}

    def one(pair: tuple[str, str]) -> tuple[ComboReport, list[HourlyForecast], str | None]:
        d, v = pair
        try:
            forecasts = run_combo(table, terms, d, v, cfg, eval_months)
            return score_combo(forecasts, d, v, fingerprint), forecasts, None
        except JumpcastError as exc:
            return _nan_report(d, v, fingerprint, f"failed: {exc}"), [], f"{d}/{v}: {exc}"

    reports: list[ComboReport] = []
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(one, pairs))
    else:
        results = map(one, pairs)
    # emit in canonical order so artifacts and diagnostics are byte-stable
    # regardless of worker scheduling
    for (d, v), (report, forecasts, error) in zip(pairs, results):
        reports.append(report)
        if error is not None:
            diag["combo_errors"].append(error)
        diag["skipped_hours"][f"{d}/{v}"] = _count_skipped(
            table, terms, d, v, eval_months, report.n_hours
        )
        if on_combo is not None:
            on_combo(report, forecasts)
    return reports, diag


def _count_skipped(table, terms, drift_term, vol_term, eval_months, n_scored) -> int:
    """Evaluation-month hours dropped because a term was unavailable."""
    eval_mask = np.zeros(len(table), dtype=bool)
    for key in eval_months:
        eval_mask |= table.month_mask(key)
    next_ok = np.zeros(len(table), dtype=bool)
    next_ok[:-1] = ~table.gap_before[1:]
    candidates = int((eval_mask & ~table.warmup & next_ok).sum())
    return candidates - n_scored


# --- stable CSV serialization ---

COMBO_CSV_COLUMNS = (
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
    "specificity_t",
    "n_hours",
    "n_transactions",
    "n_jumps",
    "undefined",
    "config_fingerprint",
)


def _fmt(v: float) -> str:
    return "" if math.isnan(v) else repr(float(v))


def write_combo_csv(reports: Sequence[ComboReport], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(",".join(COMBO_CSV_COLUMNS) + "\n")
        for r in reports:
            fh.write(
                ",".join(
                    [
                        r.drift_term,
                        r.vol_term,
                        _fmt(r.rmse),
                        _fmt(r.mape),
                        _fmt(r.rmse_t),
                        _fmt(r.mape_t),
                        _fmt(r.accuracy),
                        _fmt(r.accuracy_t),
                        _fmt(r.precision_t),
                        _fmt(r.recall_t),
                        _fmt(r.f1_t),
                        _fmt(r.specificity_t),
                        str(r.n_hours),
                        str(r.n_transactions),
                        str(r.n_jumps),
                        '"' + "; ".join(r.undefined) + '"',
                        r.config_fingerprint,
                    ]
                )
                + "\n"
            )


def write_forecast_csv(forecasts: Sequence[HourlyForecast], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("open_time,open,forecast,signal,realized_next_open,n_jumps\n")
        for f in forecasts:
            jumps = "" if f.n_jumps is None else str(f.n_jumps)
            fh.write(
                f"{f.open_time},{f.open!r},{f.forecast!r},{f.signal},"
                f"{f.realized_next_open!r},{jumps}\n"
            )
