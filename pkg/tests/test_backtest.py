import math

import numpy as np
import pytest

from conftest import config_for
from jumpcast import backtest, features, ingest
from jumpcast.backtest import (
    DRIFT_TERMS,
    LONG,
    SHORT,
    VOL_TERMS,
    HourlyForecast,
    classification_metrics,
    confusion_matrix,
    monthly_retrain_schedule,
    regression_metrics,
    run_combo,
    sweep_all_combos,
    transactional_filter,
)
from jumpcast.config import RunConfig
from jumpcast.errors import EmptyEvaluation, InsufficientMonths, UnknownTermId
from jumpcast.features import BASE_COLUMNS, FeatureTable

HOUR_MS = ingest.HOUR_MS
START_MS = 1_609_459_200_000  # 2021-01-01 00:00 UTC


def fabricate_table(month_sizes, columns, n=10, start_ms=START_MS):
    """FeatureTable straight from column arrays: contiguous hourly rows
    labelled with real consecutive months."""
    total = sum(size for _, _, size in month_sizes)
    open_time = start_ms + HOUR_MS * np.arange(total, dtype=np.int64)
    year = np.concatenate([np.full(s, y, dtype=np.int64) for y, m, s in month_sizes])
    month = np.concatenate([np.full(s, m, dtype=np.int64) for y, m, s in month_sizes])
    gap_before = np.zeros(total, dtype=bool)
    gap_before[0] = True
    warmup = np.arange(total) < n
    cols = {c: np.asarray(columns[c], dtype=float).copy() for c in BASE_COLUMNS}
    return FeatureTable(
        open_time=open_time,
        year=year,
        month=month,
        columns=cols,
        n=n,
        warmup=warmup,
        gap_before=gap_before,
    )


def random_columns(rng, total, pct=None, opens=None):
    cols = {c: rng.standard_normal(total) for c in BASE_COLUMNS}
    cols["open"] = opens if opens is not None else 100.0 + rng.uniform(0, 1, total)
    if pct is not None:
        cols["pct_change"] = pct
    cols["vol"] = np.abs(cols["vol"]) * 0.01
    return cols


class TestSchedule:
    def test_four_months_three_pairs(self):
        rng = np.random.default_rng(0)
        sizes = [(2020, m, 50) for m in (1, 2, 3, 4)]
        table = fabricate_table(sizes, random_columns(rng, 200))
        sched = monthly_retrain_schedule(table)
        assert sched == [
            ((2020, 1), (2020, 2)),
            ((2020, 2), (2020, 3)),
            ((2020, 3), (2020, 4)),
        ]

    def test_single_month_raises(self):
        rng = np.random.default_rng(1)
        table = fabricate_table([(2020, 1, 50)], random_columns(rng, 50))
        with pytest.raises(InsufficientMonths):
            monthly_retrain_schedule(table)

    def test_gap_month_skipped_and_logged(self, caplog):
        rng = np.random.default_rng(2)
        sizes = [(2020, 1, 50), (2020, 2, 50), (2020, 4, 50)]
        table = fabricate_table(sizes, random_columns(rng, 150))
        with caplog.at_level("WARNING"):
            sched = monthly_retrain_schedule(table)
        assert sched == [((2020, 1), (2020, 2))]
        assert any("not consecutive" in r.message for r in caplog.records)


class TestDriftTerms:
    def test_negations_are_pointwise(self, table, cfg):
        sched = monthly_retrain_schedule(table)
        terms, _ = backtest.forecast_drift_terms(table, sched, cfg)
        np.testing.assert_array_equal(
            terms["drift_negated"], -terms["drift"]
        )
        np.testing.assert_array_equal(
            terms["pct_change_negated"], -terms["pct_change"]
        )

    def test_planted_linear_model_recovered(self):
        # pct_change one hour ahead is an exact linear function of the 12
        # features at the current hour; lr_pct must then match realized
        # pct_change on the prediction month.
        rng = np.random.default_rng(3)
        total = 800
        cols = random_columns(rng, total)
        coefs = rng.uniform(-0.5, 0.5, 12)
        cols["pct_change"] = np.empty(total)
        cols["pct_change"][0] = 0.0
        for i in range(total - 1):
            x = np.array([cols[c][i] for c in BASE_COLUMNS])
            cols["pct_change"][i + 1] = 0.01 + coefs @ x
        table = fabricate_table([(2021, 1, 400), (2021, 2, 400)], cols)
        cfg = RunConfig(n_sim=10)
        terms, diag = backtest.forecast_drift_terms(
            table, monthly_retrain_schedule(table), cfg
        )
        assert not diag["errors"]
        rows = np.flatnonzero(table.month_mask((2021, 2)))[:-1]
        realized = table.columns["pct_change"][rows + 1]
        np.testing.assert_allclose(terms["lr_pct"][rows], realized, atol=1e-8)

    def test_model_terms_nan_outside_prediction_months(self, table, cfg):
        sched = monthly_retrain_schedule(table)
        terms, _ = backtest.forecast_drift_terms(table, sched, cfg)
        jan = table.month_mask((2021, 1))
        assert np.isnan(terms["lr_pct"][jan]).all()
        feb = table.month_mask((2021, 2))
        assert np.isfinite(terms["xgb_pct"][feb]).all()


class TestVolTerms:
    def test_vol_passthrough_is_exact(self, table, cfg):
        sched = monthly_retrain_schedule(table)
        terms, _ = backtest.forecast_vol_terms(table, sched, cfg)
        np.testing.assert_array_equal(terms["vol"], table.columns["vol"])

    def test_forecast_terms_floored(self, table, cfg):
        sched = monthly_retrain_schedule(table)
        terms, _ = backtest.forecast_vol_terms(table, sched, cfg)
        for name in ("forc_vol_lr", "forc_vol_poly", "forc_vol_xgb", "forc_vol_gjr"):
            finite = terms[name][np.isfinite(terms[name])]
            assert finite.size and np.all(finite >= cfg.vol_floor)

    def test_gjr_tracks_homoskedastic_truth(self):
        rng = np.random.default_rng(4)
        sigma_true = 0.012
        total = 1500
        cols = random_columns(rng, total, pct=rng.normal(0.0, sigma_true, total))
        table = fabricate_table([(2021, 1, 750), (2021, 2, 750)], cols)
        cfg = RunConfig(n_sim=10)
        terms, diag = backtest.forecast_vol_terms(
            table, monthly_retrain_schedule(table), cfg
        )
        feb = terms["forc_vol_gjr"][table.month_mask((2021, 2))]
        feb = feb[np.isfinite(feb)]
        med = np.median(np.abs(feb / sigma_true - 1.0))
        assert med <= 0.20


class TestRunCombo:
    def _zero_table(self, rng, total=120):
        cols = random_columns(rng, total, opens=np.full(total, 100.0))
        return fabricate_table([(2021, 1, total // 2), (2021, 2, total // 2)], cols)

    def test_zero_drift_zero_vol_forecast_equals_open(self):
        rng = np.random.default_rng(5)
        table = self._zero_table(rng)
        terms = {"drift": np.zeros(len(table)), "vol": np.zeros(len(table))}
        cfg = RunConfig(n_sim=50)
        fcs = run_combo(table, terms, "drift", "vol", cfg, [(2021, 2)])
        assert fcs
        for f in fcs:
            assert f.forecast == f.open
            assert f.signal == SHORT  # strict-inequality tie rule

    def test_positive_drift_zero_vol_always_long(self):
        rng = np.random.default_rng(6)
        table = self._zero_table(rng)
        terms = {"drift": np.full(len(table), 1e-3), "vol": np.zeros(len(table))}
        cfg = RunConfig(n_sim=50)
        fcs = run_combo(table, terms, "drift", "vol", cfg, [(2021, 2)])
        assert fcs and all(f.signal == LONG for f in fcs)

    def test_fixed_seed_reproducible(self, table, cfg):
        terms = {
            "pct_change": table.columns["pct_change"],
            "vol": table.columns["vol"],
        }
        a = run_combo(table, terms, "pct_change", "vol", cfg, [(2021, 2)])
        b = run_combo(table, terms, "pct_change", "vol", cfg, [(2021, 2)])
        assert a == b

    def test_unknown_term_rejected(self, table, cfg):
        with pytest.raises(UnknownTermId):
            run_combo(table, {}, "nope", "vol", cfg, [(2021, 2)])
        with pytest.raises(UnknownTermId):
            run_combo(table, {}, "drift", "nope", cfg, [(2021, 2)])

    def test_hours_with_missing_terms_skipped(self):
        rng = np.random.default_rng(7)
        table = self._zero_table(rng)
        d = np.zeros(len(table))
        d[70:75] = np.nan  # five evaluation hours lose their drift term
        terms = {"drift": d, "vol": np.zeros(len(table))}
        cfg = RunConfig(n_sim=20)
        fcs = run_combo(table, terms, "drift", "vol", cfg, [(2021, 2)])
        covered = {f.open_time for f in fcs}
        for i in range(70, 75):
            assert int(table.open_time[i]) not in covered
        # 60 Feb rows, minus 5 NaN hours, minus the final row (no next open)
        assert len(fcs) == 60 - 5 - 1

    def test_hold_tie_rule_keeps_previous_signal(self):
        rng = np.random.default_rng(12)
        table = self._zero_table(rng)
        d = np.zeros(len(table))
        d[::2] = 1e-3  # alternate: decisive long, then an exact tie
        terms = {"drift": d, "vol": np.zeros(len(table))}
        strict = run_combo(table, terms, "drift", "vol", RunConfig(n_sim=20), [(2021, 2)])
        hold = run_combo(
            table, terms, "drift", "vol", RunConfig(n_sim=20, tie_rule="hold"), [(2021, 2)]
        )
        assert {f.signal for f in strict} == {LONG, SHORT}
        assert all(f.signal == LONG for f in hold)  # ties inherit the long

    def test_negation_with_no_jumps_flips_signals(self):
        # With the vol term at zero and jumps disabled the MC mean is
        # exactly open*exp(+-mu): signals must be complementary except at
        # exact ties, where both sides fall to short.
        rng = np.random.default_rng(8)
        total = 160
        cols = random_columns(rng, total, opens=np.full(total, 250.0))
        drift = rng.normal(0, 1e-3, total)
        drift[::7] = 0.0  # plant exact ties
        cols["drift"] = drift
        table = fabricate_table([(2021, 1, 80), (2021, 2, 80)], cols)
        terms = {
            "drift": table.columns["drift"].copy(),
            "drift_negated": -table.columns["drift"],
            "vol": np.zeros(total),
        }
        cfg = RunConfig(n_sim=20, jump_rule="none")
        pos = run_combo(table, terms, "drift", "vol", cfg, [(2021, 2)])
        neg = run_combo(table, terms, "drift_negated", "vol", cfg, [(2021, 2)])
        assert len(pos) == len(neg) > 0
        for f_pos, f_neg in zip(pos, neg):
            mu = terms["drift"][np.flatnonzero(table.open_time == f_pos.open_time)[0]]
            if mu == 0.0:
                assert f_pos.signal == f_neg.signal == SHORT
            else:
                assert f_pos.signal != f_neg.signal


class TestMetrics:
    def _fc(self, open_, forecast, realized, signal=None):
        if signal is None:
            signal = LONG if forecast > open_ else SHORT
        return HourlyForecast(
            open_time=0,
            drift_term="drift",
            vol_term="vol",
            open=open_,
            forecast=forecast,
            signal=signal,
            realized_next_open=realized,
        )

    def test_perfect_forecasts(self):
        fcs = [self._fc(100.0, 105.0, 105.0), self._fc(105.0, 103.0, 103.0)]
        assert regression_metrics(fcs) == (0.0, 0.0)

    def test_hand_computed_rmse_mape(self):
        fcs = [self._fc(90.0, 110.0, 100.0), self._fc(90.0, 190.0, 200.0)]
        rmse, mape = regression_metrics(fcs)
        assert rmse == pytest.approx(10.0, abs=1e-12)
        assert mape == pytest.approx(7.5, abs=1e-12)

    def test_empty_evaluation(self):
        with pytest.raises(EmptyEvaluation):
            regression_metrics([])
        with pytest.raises(EmptyEvaluation):
            classification_metrics([])

    def test_all_correct_classification(self):
        fcs = [self._fc(100.0, 101.0, 102.0), self._fc(100.0, 99.0, 98.0)]
        m = classification_metrics(fcs)
        assert m.accuracy == 1.0 and m.f1 == 1.0
        assert not m.undefined

    def test_hand_confusion_matrix(self):
        fcs = (
            [self._fc(100.0, 101.0, 101.0)] * 3  # tp
            + [self._fc(100.0, 101.0, 99.0)] * 1  # fp
            + [self._fc(100.0, 99.0, 101.0)] * 2  # fn
            + [self._fc(100.0, 99.0, 99.0)] * 4  # tn
        )
        m = classification_metrics(fcs)
        cm = m.matrix
        assert (cm.tp, cm.fp, cm.fn, cm.tn) == (3, 1, 2, 4)
        assert m.precision == pytest.approx(0.75)
        assert m.recall == pytest.approx(0.6)
        assert m.f1 == pytest.approx(2 * 0.45 / 1.35, abs=1e-12)
        assert m.accuracy == pytest.approx(0.7)
        assert m.specificity == pytest.approx(0.8)

    def test_undefined_ratios_reported_not_zeroed(self):
        fcs = [self._fc(100.0, 99.0, 101.0), self._fc(100.0, 98.0, 99.0)]  # all short
        m = classification_metrics(fcs)
        assert math.isnan(m.precision)
        assert any(u.startswith("precision") and "tp+fp=0" in u for u in m.undefined)
        assert math.isnan(m.f1)

    def test_metric_identities(self):
        rng = np.random.default_rng(9)
        for _ in range(25):
            n = rng.integers(3, 60)
            fcs = [
                self._fc(
                    100.0,
                    100.0 + rng.normal(),
                    100.0 + rng.normal(),
                )
                for _ in range(n)
            ]
            m = classification_metrics(fcs)
            cm = m.matrix
            assert m.accuracy * cm.total == pytest.approx(cm.tp + cm.tn, abs=1e-9)
            if not math.isnan(m.f1):
                assert m.f1 == pytest.approx(
                    2 * m.precision * m.recall / (m.precision + m.recall), abs=1e-12
                )


class TestTransactionalFilter:
    def _sig(self, signals):
        return [
            HourlyForecast(
                open_time=i,
                drift_term="drift",
                vol_term="vol",
                open=100.0,
                forecast=101.0 if s == LONG else 99.0,
                signal=s,
                realized_next_open=100.0,
            )
            for i, s in enumerate(signals)
        ]

    def test_change_points(self):
        fcs = self._sig([LONG, LONG, SHORT, SHORT, LONG])
        kept = transactional_filter(fcs)
        assert [f.open_time for f in kept] == [0, 2, 4]

    def test_constant_signal_keeps_first(self):
        kept = transactional_filter(self._sig([SHORT] * 6))
        assert [f.open_time for f in kept] == [0]

    def test_alternating_keeps_all(self):
        fcs = self._sig([LONG, SHORT, LONG, SHORT])
        assert transactional_filter(fcs) == fcs

    def test_matches_from_scratch_scan(self):
        rng = np.random.default_rng(10)
        for _ in range(50):
            signals = [LONG if b else SHORT for b in rng.integers(0, 2, rng.integers(1, 40))]
            fcs = self._sig(signals)
            kept = transactional_filter(fcs)
            manual = [
                f
                for i, f in enumerate(fcs)
                if i == 0 or fcs[i].signal != fcs[i - 1].signal
            ]
            assert kept == manual


@pytest.fixture(scope="module")
def built(synth_months):
    cfg = config_for(None, n_sim=400, seed=11)
    cfg = cfg.replace(data_dir="unused")
    series = ingest.stitch_months(synth_months, cfg.resolved_lookback)
    table = features.build_feature_table(series, cfg.window_n)
    sched = monthly_retrain_schedule(table)
    terms, _ = backtest.build_terms(table, sched, cfg)
    return table, terms, cfg, sched


class TestSweep:
    def test_forty_rows_and_invariants(self, built):
        table, terms, cfg, sched = built
        reports, diag = sweep_all_combos(table, terms, cfg, sched)
        assert len(reports) == 40
        assert len({(r.drift_term, r.vol_term) for r in reports}) == 40
        for r in reports:
            assert r.n_transactions <= r.n_hours
            assert r.rmse_t >= 0.0
            assert r.config_fingerprint == cfg.fingerprint()

    def test_combo_filter(self, built):
        table, terms, cfg, sched = built
        reports, _ = sweep_all_combos(
            table, terms, cfg, sched, combos=[("drift_negated", "forc_vol_gjr")]
        )
        assert len(reports) == 1
        assert reports[0].drift_term == "drift_negated"

    def test_threaded_sweep_matches_sequential(self, built):
        import dataclasses

        table, terms, cfg, sched = built
        combos = [("drift", "vol"), ("pct_change", "forc_vol_lr")]
        seq, _ = sweep_all_combos(table, terms, cfg, sched, combos=combos)
        par, _ = sweep_all_combos(
            table, terms, cfg.replace(threads=4), sched, combos=combos
        )
        # the threads field is part of the config, so only the fingerprint
        # may differ; every computed value must be identical
        strip = lambda r: dataclasses.replace(r, config_fingerprint="")
        assert [strip(r) for r in seq] == [strip(r) for r in par]

    def test_rankings_stable_under_reseeding(self, built):
        # Vol-term pairs whose RMSEs are separated by clearly more than the
        # observed reseed fluctuation must rank identically under a fresh
        # seed; pairs inside MC noise are allowed to flip.
        table, terms, cfg, sched = built
        first, _ = sweep_all_combos(table, terms, cfg, sched)
        second, _ = sweep_all_combos(table, terms, cfg.replace(seed=9090), sched)
        rmse1 = {(r.drift_term, r.vol_term): r.rmse for r in first}
        rmse2 = {(r.drift_term, r.vol_term): r.rmse for r in second}
        checked = 0
        for d in DRIFT_TERMS:
            for i, va in enumerate(VOL_TERMS):
                for vb in VOL_TERMS[i + 1 :]:
                    a1, b1 = rmse1[(d, va)], rmse1[(d, vb)]
                    a2, b2 = rmse2[(d, va)], rmse2[(d, vb)]
                    noise = 3.0 * max(abs(a1 - a2), abs(b1 - b2)) + 1e-9
                    if abs(a1 - b1) > noise:
                        checked += 1
                        assert (a1 < b1) == (a2 < b2), (d, va, vb)
        assert checked > 0

    def test_term_sets_have_spec_cardinality(self):
        assert len(DRIFT_TERMS) == 8
        assert len(VOL_TERMS) == 5
        assert set(VOL_TERMS) == {
            "vol", "forc_vol_lr", "forc_vol_poly", "forc_vol_xgb", "forc_vol_gjr"
        }
