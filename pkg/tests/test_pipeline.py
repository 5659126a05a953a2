import csv
import json
import shutil
from dataclasses import replace

import pytest

from regimekit.config import load_config
from regimekit.exceptions import ConfigError, DataError, MissingInputError, MissingStageOutputError, StageFailure
from regimekit.pipeline import (
    MANIFEST,
    STAGES,
    RunManifest,
    export_reports,
    load_trees,
    read_returns,
    run_pipeline,
)

from .synthetic import write_config


def tree_digests(root):
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file() and p.name != MANIFEST}


@pytest.fixture(scope="module")
def full_run(tmp_path_factory, price_dir):
    root = tmp_path_factory.mktemp("full")
    (root / "data").symlink_to(price_dir, target_is_directory=True)
    cfg = load_config(write_config(root))
    return cfg, run_pipeline(cfg)


def test_empty_stage_list_writes_only_manifest(project):
    cfg = load_config(project / "cfg.ini")
    m = run_pipeline(cfg, [])
    assert [p.name for p in cfg.output_dir.iterdir()] == [MANIFEST]
    assert m.files == {} and m.stages == []


def test_unknown_stage(project):
    with pytest.raises(ConfigError):
        run_pipeline(load_config(project / "cfg.ini"), ["nope"])


def test_single_ticker_regimes(project):
    cfg = load_config(project / "cfg.ini").select(["AAA"])
    run_pipeline(cfg, ["ingest", "regimes"])
    labels = sorted(p.name for p in (cfg.output_dir / "regimes").glob("*.labels.csv"))
    assert labels == ["AAA.labels.csv"]
    rep = json.loads((cfg.output_dir / "regimes/representative_years.json").read_text())
    own = json.loads((cfg.output_dir / "regimes/AAA.years.json").read_text())
    assert rep["groups"]["developed"] == own


def test_stage_outputs(full_run):
    cfg, m = full_run
    root = cfg.output_dir
    assert m.stages == list(STAGES)
    assert set(m.timings) == set(STAGES)
    for t in cfg.all_tickers:
        for rel in (f"ingest/{t}.states.csv", f"bds/{t}.csv", f"regimes/{t}.imfs.csv",
                    f"hhsa/{t}.profiles.csv", f"sensitivity/{t}.json"):
            assert rel in m.files
    with open(root / "bds/AAA.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["m"] for r in rows] == ["2", "3"]
    r = read_returns(root / "ingest/AAA.returns.csv")
    assert len(r.r) == 1999
    for g in ("developed", "developing"):
        for regime in ("Extreme", "High", "Normal"):
            doc = json.loads((root / f"metrics/{g}_{regime}.json").read_text())
            assert doc["n_trees"] >= 2
            assert set(doc) >= {"unconditional", "order1", "order2"}


def test_checksums_match_files(full_run):
    cfg, m = full_run
    m.verify()
    loaded = RunManifest.load(cfg.output_dir)
    assert loaded.files == m.files
    assert loaded.config_hash == cfg.config_hash


def test_per_index_years_come_from_the_index(full_run):
    cfg, _ = full_run
    root = cfg.output_dir
    for t in cfg.all_tickers:
        own = json.loads((root / f"regimes/{t}.years.json").read_text())
        for path in (root / "vlmc" / t).glob("*.json"):
            regime, year = path.stem.split("_")
            assert int(year) in own[regime]


def test_synthetic_bursts_rank_extreme_first(full_run):
    # volatility bursts make Extreme the most energetic regime for every ticker
    cfg, _ = full_run
    with open(cfg.output_dir / "hhsa/profiles.csv") as fh:
        rows = list(csv.DictReader(fh))
    pame = {(r["ticker"], r["regime"]): float(r["pame"]) for r in rows}
    for t in cfg.all_tickers:
        assert pame[(t, "Extreme")] > pame[(t, "Normal")]


def test_stage_by_stage_matches_full_run(full_run, tmp_path, price_dir):
    cfg, _ = full_run
    other = replace(cfg, output_dir=tmp_path / "staged", jobs=2)
    for stage in STAGES:
        run_pipeline(other, [stage])
    assert tree_digests(other.output_dir) == tree_digests(cfg.output_dir)
    assert RunManifest.load(other.output_dir).files == RunManifest.load(cfg.output_dir).files


def test_rerun_is_deterministic(full_run, tmp_path):
    cfg, m = full_run
    again = run_pipeline(replace(cfg, output_dir=tmp_path / "again"))
    assert again.files == m.files


def test_reports_csv_and_json_agree(full_run):
    cfg, m = full_run
    csv_out = export_reports(m, "csv")
    json_out = export_reports(m, "json")
    assert "report/pame.csv" in csv_out and "report/report.json" in json_out
    doc = json.loads((cfg.output_dir / "report/report.json").read_text())
    for rel in csv_out:
        if not rel.endswith(".csv"):
            continue
        name = rel.split("/")[1][:-4]
        with open(cfg.output_dir / rel) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == len(doc[name])
        for a, b in zip(rows, doc[name]):
            for k, v in a.items():
                if isinstance(b[k], float):
                    assert float(v) == pytest.approx(b[k], rel=1e-15) or v == b[k]
                else:
                    assert v == str(b[k])
    with open(cfg.output_dir / "report/pame.csv") as fh:
        header = next(csv.reader(fh))
    assert header[:2] == ["group", "ticker"]


def test_copied_tree_verifies_and_reports_identically(full_run, tmp_path):
    cfg, m = full_run
    digests = export_reports(m, "csv")
    copy = tmp_path / "copy"
    shutil.copytree(cfg.output_dir, copy)
    moved = RunManifest.load(copy)
    moved.verify()
    assert export_reports(moved, "csv") == digests


def test_tampered_file_is_detected(full_run, tmp_path):
    cfg, _ = full_run
    copy = tmp_path / "copy"
    shutil.copytree(cfg.output_dir, copy)
    with open(copy / "bds/AAA.csv", "a") as fh:
        fh.write("\n")
    with pytest.raises(MissingStageOutputError):
        export_reports(RunManifest.load(copy))


def test_downstream_stage_without_inputs(project):
    cfg = load_config(project / "cfg.ini")
    with pytest.raises((MissingStageOutputError, StageFailure)):
        run_pipeline(cfg, ["hhsa"])
    with pytest.raises(MissingStageOutputError):
        export_reports(RunManifest.load(cfg.output_dir))


def test_missing_price_file(project):
    (project / "cfg.ini").write_text((project / "cfg.ini").read_text().replace("AAA", "ZZZ"))
    with pytest.raises(MissingInputError) as err:
        run_pipeline(load_config(project / "cfg.ini"))
    assert err.value.ticker == "ZZZ"


def test_report_without_manifest(tmp_path):
    with pytest.raises(MissingStageOutputError):
        RunManifest.load(tmp_path)


def test_load_trees_needs_vlmc_output(tmp_path):
    with pytest.raises(MissingStageOutputError):
        load_trees(tmp_path, ["AAA"], "Extreme")


def test_bad_price_data_is_a_stage_failure(tmp_path, price_dir):
    (tmp_path / "data").mkdir()
    for f in price_dir.iterdir():
        shutil.copy(f, tmp_path / "data" / f.name)
    lines = (tmp_path / "data/BBB.csv").read_text().splitlines()
    lines[5] = lines[5].rsplit(",", 1)[0] + ",-3"
    (tmp_path / "data/BBB.csv").write_text("\n".join(lines) + "\n")
    with pytest.raises(StageFailure) as err:
        run_pipeline(load_config(write_config(tmp_path)), ["ingest"])
    assert err.value.stage == "ingest"
    assert isinstance(err.value.cause, DataError)
