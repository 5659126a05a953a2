from pathlib import Path

import pytest

from regimekit.config import OUTPUT_ENV, load_config, parse_config
from regimekit.exceptions import ConfigError

MINIMAL = "[data]\ndir = prices\n[tickers]\ndeveloped = NYA, GSPC\ndeveloping = BVSP\n"


def test_defaults():
    cfg = parse_config(MINIMAL, "/proj")
    assert cfg.data_dir == Path("/proj/prices")
    assert cfg.output_dir == Path("/proj/out")
    assert cfg.all_tickers == ["NYA", "GSPC", "BVSP"]
    assert cfg.thresholds == (1.0, 6.0)
    assert len(cfg.sensitivity_grid) == 9
    assert cfg.prune.cutoff == 3.372 and cfg.prune.max_depth == 4
    assert cfg.emd.s_number == 4 and cfg.emd.max_imfs is None
    assert cfg.n_bins == 64 and cfg.out_of_range == "drop"
    assert cfg.bds_dimensions == (2, 3)
    assert cfg.price_path("NYA") == Path("/proj/prices/NYA.csv")
    assert cfg.group_of("BVSP") == "developing"


def test_overrides_and_inline_comments():
    text = MINIMAL + (
        "[thresholds]\na = 0.5 ; looser\nb = 5\n"
        "[sensitivity]\na = 1.0\nb = 5, 7\n"
        "[emd]\nmax_imfs = 6\nrefine_extrema = no\n"
        "[hhsa]\nout_of_range = clip\n"
        "[bds]\ndimensions = 2, 3, 4\n"
        "[output]\ndir = results\njobs = 3\n"
    )
    cfg = parse_config(text, "/p")
    assert cfg.thresholds == (0.5, 5.0)
    assert cfg.sensitivity_grid == ((1.0, 5.0), (1.0, 7.0))
    assert cfg.emd.max_imfs == 6 and cfg.emd.refine_extrema is False
    assert cfg.out_of_range == "clip"
    assert cfg.bds_dimensions == (2, 3, 4)
    assert cfg.output_dir == Path("/p/results") and cfg.jobs == 3


def test_environment_overrides_output(monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, "/elsewhere")
    assert parse_config(MINIMAL, "/p").output_dir == Path("/elsewhere")


@pytest.mark.parametrize("text", [
    "[tickers]\ndeveloped = A\n",
    "[data]\ndir = d\n",
    MINIMAL + "[mystery]\nx = 1\n",
    MINIMAL + "[emd]\nsnumber = 4\n",
    MINIMAL + "[thresholds]\na = 6\nb = 1\n",
    MINIMAL + "[thresholds]\na = high\n",
    MINIMAL + "[sensitivity]\na = 2\nb = 1\n",
    MINIMAL + "[hhsa]\nout_of_range = wrap\n",
    MINIMAL + "[bds]\ndimensions = 1\n",
    MINIMAL + "[bds]\ndimensions = 2.5\n",
    MINIMAL + "[prune]\nmax_depth = 0\n",
    MINIMAL + "[data]\nfile_pattern = prices.csv\n",
    "[data]\ndir = d\n[tickers]\ndeveloped = A\ndeveloping = A\n",
    "not an ini file",
])
def test_invalid_configs(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_select_subset():
    cfg = parse_config(MINIMAL).select(["BVSP"])
    assert cfg.tickers == {"developing": ("BVSP",)}
    with pytest.raises(ConfigError):
        cfg.select(["NYA"])


def test_hash_ignores_paths_and_jobs(monkeypatch):
    a = parse_config(MINIMAL, "/a")
    b = parse_config(MINIMAL + "[output]\njobs = 4\n", "/b")
    assert a.config_hash == b.config_hash
    assert parse_config(MINIMAL + "[thresholds]\nb = 7\n").config_hash != a.config_hash


def test_load_resolves_relative_to_file(tmp_path):
    (tmp_path / "cfg.ini").write_text(MINIMAL)
    cfg = load_config(tmp_path / "cfg.ini")
    assert cfg.data_dir == tmp_path / "prices"
    assert cfg.source == str(tmp_path / "cfg.ini")
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.ini")
