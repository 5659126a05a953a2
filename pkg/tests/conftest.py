import pytest

from .synthetic import TICKERS, write_config, write_prices


@pytest.fixture(scope="session")
def price_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("prices")
    for i, t in enumerate(t for g in TICKERS.values() for t in g):
        write_prices(d / f"{t}.csv", i)
    return d


@pytest.fixture
def project(tmp_path, price_dir):
    """A project directory holding ``data/`` and ``cfg.ini``."""
    (tmp_path / "data").symlink_to(price_dir, target_is_directory=True)
    write_config(tmp_path)
    return tmp_path


@pytest.fixture(autouse=True)
def _no_output_override(monkeypatch):
    monkeypatch.delenv("REGIMEKIT_OUTPUT_DIR", raising=False)
