import hashlib
import json
import subprocess
import sys
from pathlib import Path

import pandas as pd
import pytest

from cdrses import cli, pipeline
from cdrses.config import ConfigError, load_config

from conftest import DATA

EXPECTED = ["active_days_histogram.csv", "active_sims.csv", "activity_categories.csv", "activity_stats.csv",
            "anchors.csv", "attributes.csv", "category_stats.csv", "cell_map.csv", "census_diff_age.csv",
            "census_diff_district.csv", "census_report.json", "commute_age.csv", "commute_district.csv",
            "daily_indicators.csv", "daily_profile.csv", "day_hour_matrix.csv", "feature_matrix.csv",
            "indicators.csv", "ingest_report.json", "merged_cells.csv", "pca_loadings.csv", "pca_ratios.csv",
            "pca_scores.csv", "records.npz", "ses_assignments.csv", "ses_report.json", "spatial_report.json",
            "stationary_removed.csv", "stratum_stats.csv"]

HEADERS = {
    "anchors.csv": ["sim_id", "home_merged_id", "work_merged_id", "home_count", "work_count", "home_work_km"],
    "indicators.csv": ["sim_id", "day_type", "rg_km", "rg2_km", "entropy", "mobility_class", "location_count",
                       "travel_diversity"],
    "activity_stats.csv": ["sim_id", "total_records", "active_days", "weekday_active_days", "weekend_active_days",
                           "weekday_daily_mean", "weekend_daily_mean", "records_per_day_mean"],
    "ses_assignments.csv": ["sim_id", "v_ses", "work_price", "home_price_category", "stratum", "quartile_group",
                            "home_work_km"],
    "commute_district.csv": ["district", "same", "other_bp", "agglo", "outside"],
    "commute_age.csv": ["sector", "a20_29", "a30_39", "a40_49", "a50_59", "a60p"],
    "pca_ratios.csv": ["component", "ratio", "cumulative"],
}


def digests(d):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(Path(d).iterdir()) if p.is_file()}


def test_all_outputs_present(small_run):
    assert sorted(p.name for p in small_run.iterdir()) == EXPECTED


@pytest.mark.parametrize("name", sorted(HEADERS))
def test_output_schema(small_run, name):
    df = pd.read_csv(small_run / name)
    assert list(df.columns) == HEADERS[name]
    assert len(df) > 0


def test_feature_matrix_shape(small_run):
    fm = pd.read_csv(small_run / "feature_matrix.csv")
    assert fm.shape[1] == 3 + 60
    blocks = fm.iloc[:, 3:43].sum(axis=1), fm.iloc[:, 43:].sum(axis=1)
    for b in blocks:
        assert ((b - 1).abs() < 1e-9).all()


def test_report_snapshot(small_run):
    before = digests(small_run)
    text = pipeline.report(small_run)
    assert text == (DATA / "report_snapshot.txt").read_text()
    assert digests(small_run) == before


def test_report_cli(small_run, capsys):
    assert cli.main(["report", str(small_run)]) == 0
    assert "SIMs active" in capsys.readouterr().out


def test_report_empty_dir(tmp_path, capsys):
    assert cli.main(["report", str(tmp_path)]) == 2
    assert "missing artifacts" in capsys.readouterr().err


def test_missing_cells_exit_2(city_copy, tmp_path, capsys):
    missing = tmp_path / "nowhere" / "cells.csv"
    code = cli.main(["pipeline", "--config", str(city_copy / "run.cfg"), "--cells", str(missing),
                     "--outdir", str(tmp_path / "o")])
    assert code == 2
    assert str(missing) in capsys.readouterr().err


def test_stage_failure_names_stage(tmp_path, capsys):
    assert cli.main(["pca", "--outdir", str(tmp_path)]) == 2
    assert "[pca]" in capsys.readouterr().err


def test_bad_config_key(tmp_path, capsys):
    (tmp_path / "x.cfg").write_text("frobnicate = 3\n")
    assert cli.main(["stats", "--config", str(tmp_path / "x.cfg")]) == 2
    assert "frobnicate" in capsys.readouterr().err


def test_usage_error_exit_2():
    with pytest.raises(SystemExit) as exc:
        cli.main(["nonsense"])
    assert exc.value.code == 2


def test_internal_error_exit_1(small_run, tmp_path, monkeypatch, capsys):
    def boom(*a, **k):
        raise RuntimeError("kaboom")
    monkeypatch.setattr(pipeline.pca, "run_pca", boom)
    out = tmp_path / "o"
    out.mkdir()
    for f in ("ses_assignments.csv", "indicators.csv"):
        (out / f).write_bytes((small_run / f).read_bytes())
    assert cli.main(["pca", "--outdir", str(out)]) == 1
    assert "[pca]" in capsys.readouterr().err


def test_staged_equals_pipeline(small_city, small_run, tmp_path):
    out = tmp_path / "staged"
    for stage in pipeline.STAGES:
        assert cli.main([stage, "--config", str(small_city / "run.cfg"), "--outdir", str(out)]) == 0
    assert digests(out) == digests(small_run)


def test_rerun_identical(small_city, small_run, tmp_path):
    out = tmp_path / "again"
    assert cli.main(["pipeline", "--config", str(small_city / "run.cfg"), "--outdir", str(out)]) == 0
    assert digests(out) == digests(small_run)
    # idempotent over an existing run directory
    assert cli.main(["pipeline", "--config", str(small_city / "run.cfg"), "--outdir", str(out)]) == 0
    assert digests(out) == digests(small_run)


def test_ingest_report_formats(small_city, tmp_path, capfd):
    cfg = str(small_city / "run.cfg")
    assert cli.main(["ingest", "--config", cfg, "--outdir", str(tmp_path / "a")]) == 0
    err = capfd.readouterr().err
    assert "records=" in err and "malformed=0" in err
    assert cli.main(["ingest", "--config", cfg, "--outdir", str(tmp_path / "b"), "--report-json"]) == 0
    assert json.loads(capfd.readouterr().err)["malformed"] == 0


def test_set_override(small_city, tmp_path):
    out = tmp_path / "o"
    cfg = str(small_city / "run.cfg")
    for stage in ("ingest", "stats"):
        assert cli.main([stage, "--config", cfg, "--outdir", str(out)]) == 0
    assert cli.main(["filter", "--config", cfg, "--outdir", str(out), "--set", "min_days=31"]) == 0
    assert pd.read_csv(out / "active_sims.csv").empty


def test_synth_flags(tmp_path):
    assert cli.main(["synth", "--seed", "1", "--sims", "20", "--cells", "15", "--days", "30",
                     "--out", str(tmp_path)]) == 0
    truth = pd.read_csv(tmp_path / "truth.csv")
    assert len(truth) == 20 and len(pd.read_csv(tmp_path / "cells.csv")) == 15
    assert load_config(tmp_path / "run.cfg").cells == str(tmp_path / "cells.csv")


def test_config_file_and_flags(tmp_path):
    (tmp_path / "r.cfg").write_text("# comment\ncdr = data/cdr.csv\nthreads = 2\ndirected = false\n"
                                    "holidays = 2017-04-17, 2017-04-14\n")
    cfg = load_config(tmp_path / "r.cfg", threads=5)
    assert cfg.cdr == str(tmp_path / "data" / "cdr.csv")
    assert cfg.threads == 5 and cfg.directed is False
    assert [d.day for d in cfg.holidays] == [14, 17]
    with pytest.raises(ConfigError):
        load_config(tmp_path / "r.cfg", strata_q="0")


def test_console_script_runs():
    out = subprocess.run([sys.executable, "-m", "cdrses.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "pipeline" in out.stdout


def test_census_mismatch_exit_2(city_copy, tmp_path, capsys):
    census = pd.read_csv(city_copy / "census_district.csv")
    extra = census.iloc[[0]].assign(district=99)
    pd.concat([census, extra]).to_csv(city_copy / "census_district.csv", index=False)
    code = cli.main(["pipeline", "--config", str(city_copy / "run.cfg"), "--outdir", str(tmp_path / "o")])
    assert code == 2
    err = capsys.readouterr().err
    assert "[commute]" in err and "99" in err
