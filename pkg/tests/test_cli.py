import json
from pathlib import Path

from conftest import SYMBOL
from jumpcast.cli import EXIT_DATA, EXIT_MODEL, EXIT_OK, EXIT_USAGE, main
from jumpcast.features import BASE_COLUMNS, FORECAST_COLUMNS


def _common_args(synth_dir, out_dir, **extra):
    args = [
        "--data-dir", str(synth_dir),
        "--symbol", SYMBOL,
        "--start", "2021-01",
        "--end", "2021-02",
        "--seed", "5",
        "--n-sim", "100",
        "--output-dir", str(out_dir),
    ]
    for key, val in extra.items():
        args += [f"--{key.replace('_', '-')}", str(val)]
    return args


def _tree(out_dir: Path) -> dict[str, bytes]:
    return {
        str(p.relative_to(out_dir)): p.read_bytes()
        for p in sorted(out_dir.rglob("*"))
        if p.is_file()
    }


class TestFeaturesCommand:
    def test_writes_schema_and_manifest(self, synth_dir, tmp_path):
        out = tmp_path / "out"
        assert main(["features", *_common_args(synth_dir, out)]) == EXIT_OK
        header = (out / "features.csv").read_text().splitlines()[0].split(",")
        assert header == ["open_time", *BASE_COLUMNS, *FORECAST_COLUMNS, "warmup"]
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert manifest["seed"] == 5
        assert manifest["config_fingerprint"]
        assert (out / "correlation.csv").exists()
        assert (out / "hist_pct_change.csv").exists()

    def test_rerun_is_byte_identical(self, synth_dir, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        args = lambda o: ["features", *_common_args(synth_dir, o)]
        assert main(args(out1)) == EXIT_OK
        assert main(args(out2)) == EXIT_OK
        t1, t2 = _tree(out1), _tree(out2)
        # manifests embed output_dir, which legitimately differs
        t1.pop("run_manifest.json"), t2.pop("run_manifest.json")
        assert t1 == t2

    def test_corrupt_row_strict_mode_exits_2_with_line_number(self, synth_dir, tmp_path, capsys):
        bad_dir = tmp_path / "bad"
        bad_dir.mkdir()
        for src in synth_dir.glob("*.csv"):
            (bad_dir / src.name).write_bytes(src.read_bytes())
        target = bad_dir / f"{SYMBOL}-1h-2021-01.csv"
        lines = target.read_text().splitlines()
        cells = lines[9].split(",")
        cells[2] = "0.0001"  # high below open
        lines[9] = ",".join(cells)
        target.write_text("\n".join(lines) + "\n")
        code = main(["features", *_common_args(bad_dir, tmp_path / "o")])
        assert code == EXIT_DATA
        assert "line 10" in capsys.readouterr().err

    def test_missing_data_dir_clean_error_no_partial_files(self, tmp_path, capsys):
        out = tmp_path / "out"
        code = main(["features", *_common_args(tmp_path / "nowhere", out)])
        assert code == EXIT_DATA
        assert not out.exists()


class TestSimulateCommand:
    def test_sample_path_with_direct_terms(self, synth_dir, tmp_path):
        out = tmp_path / "out"
        code = main(
            ["simulate", *_common_args(synth_dir, out), "--drift", "drift",
             "--vol", "vol", "--hours", "12"]
        )
        assert code == EXIT_OK
        lines = (out / "sample_path.csv").read_text().splitlines()
        assert lines[0] == "hour,price"
        assert len(lines) == 1 + 12 + 1  # header + steps + starting point

    def test_zero_horizon_single_row(self, synth_dir, tmp_path):
        out = tmp_path / "out"
        code = main(
            ["simulate", *_common_args(synth_dir, out), "--drift", "pct_change",
             "--vol", "vol", "--hours", "0"]
        )
        assert code == EXIT_OK
        lines = (out / "sample_path.csv").read_text().splitlines()
        assert len(lines) == 2

    def test_unknown_term_exits_1(self, synth_dir, tmp_path, capsys):
        code = main(
            ["simulate", *_common_args(synth_dir, tmp_path / "o"), "--drift", "bogus",
             "--vol", "vol"]
        )
        assert code == EXIT_USAGE
        assert "bogus" in capsys.readouterr().err

    def test_fixed_seed_identical_path_file(self, synth_dir, tmp_path):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert main(
                ["simulate", *_common_args(synth_dir, out), "--drift", "drift_negated",
                 "--vol", "vol", "--hours", "24"]
            ) == EXIT_OK
            outs.append((out / "sample_path.csv").read_bytes())
        assert outs[0] == outs[1]


class TestBacktestCommand:
    def test_full_sweep_forty_rows(self, synth_dir, tmp_path):
        out = tmp_path / "out"
        assert main(["backtest", *_common_args(synth_dir, out)]) == EXIT_OK
        lines = (out / "combos.csv").read_text().splitlines()
        assert len(lines) == 41  # header + 40 combos
        forecast_files = list((out / "forecasts").glob("*.csv"))
        assert len(forecast_files) == 40
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert manifest["schedule"] == [["2021-01", "2021-02"]]
        assert manifest["combo_errors"] == []

    def test_combo_filter_single_row(self, synth_dir, tmp_path):
        out = tmp_path / "out"
        code = main(
            ["backtest", *_common_args(synth_dir, out), "--combo",
             "drift_negated,forc_vol_gjr"]
        )
        assert code == EXIT_OK
        lines = (out / "combos.csv").read_text().splitlines()
        assert len(lines) == 2
        assert lines[1].startswith("drift_negated,forc_vol_gjr")

    def test_missing_dir_no_partial_outputs(self, tmp_path):
        out = tmp_path / "out"
        code = main(["backtest", *_common_args(tmp_path / "absent", out)])
        assert code == EXIT_DATA
        assert not out.exists()

    def test_single_month_is_data_error(self, synth_dir, tmp_path):
        out = tmp_path / "out"
        args = _common_args(synth_dir, out)
        args[args.index("2021-02")] = "2021-01"  # end = start
        assert main(["backtest", *args]) == EXIT_DATA

    def test_model_errors_exit_3_with_partial_results(self, synth_dir, tmp_path):
        # An impossible training floor knocks out every fitted model; the
        # sweep still completes on the empirical terms and artifacts are
        # preserved alongside the nonzero exit.
        cfg_file = tmp_path / "cfg.json"
        out = tmp_path / "out"
        cfg_file.write_text(json.dumps({
            "data_dir": str(synth_dir),
            "symbol": SYMBOL,
            "start": "2021-01",
            "end": "2021-02",
            "n_sim": 50,
            "min_train_rows": 10_000_000,
            "output_dir": str(out),
        }))
        code = main(["backtest", "--config", str(cfg_file), "--combo",
                     "drift,vol;lr_pct,forc_vol_lr"])
        assert code == EXIT_MODEL
        assert (out / "combos.csv").exists()
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert manifest["model_errors"]


class TestReportCommand:
    def test_sorted_output(self, synth_dir, tmp_path, capsys):
        out = tmp_path / "out"
        main(
            ["backtest", *_common_args(synth_dir, out), "--combo",
             "drift,vol;pct_change,vol;drift_negated,vol"]
        )
        capsys.readouterr()
        code = main(["report", "--input", str(out / "combos.csv"), "--sort-by", "rmse"])
        assert code == EXIT_OK
        printed = capsys.readouterr().out.splitlines()
        assert printed[0].startswith("drift_term")
        assert len(printed) == 4
        rmse_col = printed[0].split().index("rmse")
        values = [float(line.split()[rmse_col]) for line in printed[1:]]
        assert values == sorted(values)

    def test_unknown_sort_column_is_usage_error(self, synth_dir, tmp_path):
        out = tmp_path / "out"
        main(["backtest", *_common_args(synth_dir, out), "--combo", "drift,vol"])
        assert main(["report", "--input", str(out / "combos.csv"),
                     "--sort-by", "nope"]) == EXIT_USAGE


class TestConfigHandling:
    def test_toml_config_with_flag_precedence(self, synth_dir, tmp_path):
        cfg_file = tmp_path / "run.toml"
        cfg_file.write_text(
            "\n".join(
                [
                    f'data_dir = "{synth_dir}"',
                    f'symbol = "{SYMBOL}"',
                    'start = "2021-01"',
                    'end = "2021-02"',
                    "n_sim = 100",
                    "seed = 1",
                ]
            )
        )
        out = tmp_path / "out"
        code = main(
            ["features", "--config", str(cfg_file), "--seed", "99",
             "--output-dir", str(out)]
        )
        assert code == EXIT_OK
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert manifest["seed"] == 99  # flag beats file
        assert manifest["config"]["n_sim"] == 100  # file beats default

    def test_json_config(self, synth_dir, tmp_path):
        cfg_file = tmp_path / "run.json"
        cfg_file.write_text(
            json.dumps(
                {
                    "data_dir": str(synth_dir),
                    "symbol": SYMBOL,
                    "start": "2021-01",
                    "end": "2021-01",
                    "window_n": 40,
                }
            )
        )
        out = tmp_path / "out"
        assert main(["features", "--config", str(cfg_file),
                     "--output-dir", str(out)]) == EXIT_OK

    def test_unknown_config_key_is_usage_error(self, tmp_path, capsys):
        cfg_file = tmp_path / "run.json"
        cfg_file.write_text(json.dumps({"n_sims": 5}))
        assert main(["features", "--config", str(cfg_file)]) == EXIT_USAGE
        assert "n_sims" in capsys.readouterr().err

    def test_bad_month_string_is_usage_error(self, synth_dir, tmp_path):
        args = _common_args(synth_dir, tmp_path / "o")
        args[args.index("2021-01")] = "January"
        assert main(["features", *args]) == EXIT_USAGE
