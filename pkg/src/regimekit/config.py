"""Pipeline configuration.

An INI file with the sections below; every key is optional except
``[data] dir`` and at least one ticker::

    [data]
    dir = prices              ; relative paths resolve against the config file
    file_pattern = {ticker}.csv
    date_column = Date
    close_column = Close

    [tickers]
    developed = NYA, GSPC
    developing = BVSP

    [thresholds]
    a = 1.0
    b = 6.0
    per_regime_count = 2

    [sensitivity]
    a = 0.75, 1.0, 1.25
    b = 4.5, 6.0, 7.5

    [prune]
    cutoff = 3.372
    max_depth = 4
    min_count = 1

    [emd]
    s_number = 4
    max_sifts = 50
    n_mirror = 2
    max_imfs =                ; blank means no limit
    mask_freq_factor = 1.0
    mask_amp_factor = 1.6
    refine_extrema = true

    [hhsa]
    n_bins = 64
    f_max = 0.5
    out_of_range = drop       ; or clip

    [bds]
    dimensions = 2, 3
    eps_factor = 0.5
    t_lag = 1

    [metrics]
    min_tree_count = 3

    [output]
    dir = out
    jobs = 1

The environment variable ``REGIMEKIT_OUTPUT_DIR``, when set, replaces
``[output] dir``.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .emd import SiftOptions
from .exceptions import ConfigError
from .hhsa import OUT_OF_RANGE
from .regimes import BASELINE, DEFAULT_GRID
from .vlmc import PruneConfig

OUTPUT_ENV = "REGIMEKIT_OUTPUT_DIR"
GROUPS = ("developed", "developing")

_KNOWN = {
    "data": {"dir", "file_pattern", "date_column", "close_column"},
    "tickers": set(GROUPS),
    "thresholds": {"a", "b", "per_regime_count"},
    "sensitivity": {"a", "b"},
    "prune": {"cutoff", "max_depth", "min_count"},
    "emd": {"s_number", "max_sifts", "n_mirror", "max_imfs", "mask_freq_factor",
            "mask_amp_factor", "refine_extrema"},
    "hhsa": {"n_bins", "f_max", "out_of_range"},
    "bds": {"dimensions", "eps_factor", "t_lag"},
    "metrics": {"min_tree_count"},
    "output": {"dir", "jobs"},
}


@dataclass(frozen=True)
class PipelineConfig:
    data_dir: Path
    tickers: dict[str, tuple[str, ...]]
    output_dir: Path = Path("out")
    file_pattern: str = "{ticker}.csv"
    date_column: str = "Date"
    close_column: str = "Close"
    thresholds: tuple[float, float] = BASELINE
    per_regime_count: int = 2
    sensitivity_grid: tuple[tuple[float, float], ...] = DEFAULT_GRID
    prune: PruneConfig = PruneConfig()
    emd: SiftOptions = SiftOptions()
    n_bins: int = 64
    f_max: float = 0.5
    out_of_range: str = "drop"
    bds_dimensions: tuple[int, ...] = (2, 3)
    bds_eps_factor: float = 0.5
    bds_t_lag: int = 1
    min_tree_count: int = 3
    jobs: int = 1
    source: str | None = field(default=None, compare=False)

    def __post_init__(self):
        if not any(self.tickers.values()):
            raise ConfigError("no tickers configured")
        seen = set()
        for group, names in self.tickers.items():
            if group not in GROUPS:
                raise ConfigError(f"unknown ticker group {group!r}")
            for t in names:
                if t in seen:
                    raise ConfigError(f"ticker {t!r} listed twice")
                seen.add(t)
        a, b = self.thresholds
        if not a < b:
            raise ConfigError(f"thresholds need a < b, got a={a}, b={b}")
        for a, b in self.sensitivity_grid:
            if not a < b:
                raise ConfigError(f"sensitivity cell a={a}, b={b} has a >= b")
        if "{ticker}" not in self.file_pattern:
            raise ConfigError("file_pattern must contain {ticker}")
        if self.per_regime_count < 1 or self.min_tree_count < 1 or self.jobs < 1:
            raise ConfigError("per_regime_count, min_tree_count and jobs must be >= 1")
        if self.n_bins < 1 or not 0 < self.f_max <= 0.5:
            raise ConfigError("need n_bins >= 1 and 0 < f_max <= 0.5")
        if self.out_of_range not in OUT_OF_RANGE:
            raise ConfigError(f"out_of_range must be one of {', '.join(OUT_OF_RANGE)}")
        if not self.bds_dimensions or min(self.bds_dimensions) < 2:
            raise ConfigError("BDS dimensions must be >= 2")

    @property
    def all_tickers(self) -> list[str]:
        return [t for g in GROUPS for t in self.tickers.get(g, ())]

    def group_of(self, ticker: str) -> str:
        for g, names in self.tickers.items():
            if ticker in names:
                return g
        raise ConfigError(f"ticker {ticker!r} is not configured")

    def price_path(self, ticker: str) -> Path:
        return self.data_dir / self.file_pattern.format(ticker=ticker)

    def select(self, tickers) -> "PipelineConfig":
        """Restrict to a subset of the configured tickers, keeping group membership."""
        wanted = list(tickers)
        unknown = [t for t in wanted if t not in self.all_tickers]
        if unknown:
            raise ConfigError(f"tickers not in config: {', '.join(unknown)}")
        groups = {g: tuple(t for t in names if t in wanted) for g, names in self.tickers.items()}
        return replace(self, tickers={g: v for g, v in groups.items() if v})

    def to_dict(self) -> dict:
        """Analysis settings only; paths, parallelism and the source file are left out."""
        d = asdict(self)
        for k in ("data_dir", "output_dir", "jobs", "source"):
            d.pop(k)
        d["tickers"] = {g: list(v) for g, v in self.tickers.items()}
        return d

    @property
    def config_hash(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, default=list)
        return hashlib.sha256(text.encode()).hexdigest()


def _floats(text: str, key: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.replace(";", ",").split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"{key}: expected a comma-separated list of numbers, got {text!r}") from None


def _names(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.replace("\n", ",").split(",") if v.strip())


def _get(cp, section, key, conv, default):
    if not cp.has_option(section, key):
        return default
    raw = cp.get(section, key).strip()
    if raw == "":
        return default
    try:
        return conv(raw)
    except ValueError:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r}") from None


def _bool(text: str) -> bool:
    v = text.lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(text)


def parse_config(text: str, base_dir: Path | str = ".", source: str | None = None) -> PipelineConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    for section in cp.sections():
        if section not in _KNOWN:
            raise ConfigError(f"unknown section [{section}]")
        extra = set(cp.options(section)) - _KNOWN[section]
        if extra:
            raise ConfigError(f"unknown keys in [{section}]: {', '.join(sorted(extra))}")
    if not cp.has_option("data", "dir"):
        raise ConfigError("[data] dir is required")

    base = Path(base_dir)
    data_dir = base / cp.get("data", "dir").strip()
    out = os.environ.get(OUTPUT_ENV) or _get(cp, "output", "dir", str, "out")
    output_dir = base / out

    tickers = {g: _names(cp.get("tickers", g)) for g in GROUPS if cp.has_option("tickers", g)}
    a_vals = _floats(_get(cp, "sensitivity", "a", str, "0.75, 1.0, 1.25"), "sensitivity.a")
    b_vals = _floats(_get(cp, "sensitivity", "b", str, "4.5, 6.0, 7.5"), "sensitivity.b")
    try:
        prune = PruneConfig(_get(cp, "prune", "cutoff", float, PruneConfig.cutoff),
                            _get(cp, "prune", "max_depth", int, PruneConfig.max_depth),
                            _get(cp, "prune", "min_count", int, PruneConfig.min_count))
    except ValueError as exc:
        raise ConfigError(f"[prune] {exc}") from None
    d = SiftOptions()
    emd = SiftOptions(
        s_number=_get(cp, "emd", "s_number", int, d.s_number),
        max_sifts=_get(cp, "emd", "max_sifts", int, d.max_sifts),
        n_mirror=_get(cp, "emd", "n_mirror", int, d.n_mirror),
        max_imfs=_get(cp, "emd", "max_imfs", int, d.max_imfs),
        mask_freq_factor=_get(cp, "emd", "mask_freq_factor", float, d.mask_freq_factor),
        mask_amp_factor=_get(cp, "emd", "mask_amp_factor", float, d.mask_amp_factor),
        refine_extrema=_get(cp, "emd", "refine_extrema", _bool, d.refine_extrema),
    )
    if emd.s_number < 1 or emd.max_sifts < 1 or emd.n_mirror < 1:
        raise ConfigError("[emd] s_number, max_sifts and n_mirror must be >= 1")

    dims = _floats(_get(cp, "bds", "dimensions", str, "2, 3"), "bds.dimensions")
    if any(m != int(m) for m in dims):
        raise ConfigError("[bds] dimensions must be integers")

    return PipelineConfig(
        data_dir=data_dir,
        tickers=tickers,
        output_dir=output_dir,
        file_pattern=_get(cp, "data", "file_pattern", str, "{ticker}.csv"),
        date_column=_get(cp, "data", "date_column", str, "Date"),
        close_column=_get(cp, "data", "close_column", str, "Close"),
        thresholds=(_get(cp, "thresholds", "a", float, BASELINE[0]),
                    _get(cp, "thresholds", "b", float, BASELINE[1])),
        per_regime_count=_get(cp, "thresholds", "per_regime_count", int, 2),
        sensitivity_grid=tuple((a, b) for a in a_vals for b in b_vals),
        prune=prune,
        emd=emd,
        n_bins=_get(cp, "hhsa", "n_bins", int, 64),
        f_max=_get(cp, "hhsa", "f_max", float, 0.5),
        out_of_range=_get(cp, "hhsa", "out_of_range", str, "drop"),
        bds_dimensions=tuple(int(m) for m in dims),
        bds_eps_factor=_get(cp, "bds", "eps_factor", float, 0.5),
        bds_t_lag=_get(cp, "bds", "t_lag", int, 1),
        min_tree_count=_get(cp, "metrics", "min_tree_count", int, 3),
        jobs=_get(cp, "output", "jobs", int, 1),
        source=source,
    )


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, path.parent, str(path))
