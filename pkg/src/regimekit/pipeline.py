"""Config-driven batch pipeline.

Each stage writes under ``output_dir/<stage>/`` and reads only what earlier
stages wrote, so any stage can be rerun alone::

    ingest       prices  -> ingest/<T>.returns.csv, <T>.states.csv, <T>.cutoffs.json
    bds          ingest  -> bds/<T>.csv
    regimes      ingest  -> regimes/<T>.imfs.csv, <T>.emd.json, <T>.labels.csv,
                            <T>.years.json, representative_years.json
    sensitivity  regimes -> sensitivity/<T>.json, sensitivity/<group>.json
    hhsa         regimes -> hhsa/<T>/<Regime>_<year>.csv (+ .json), hhsa/<T>.profiles.csv,
                            hhsa/profiles.csv
    vlmc         ingest, regimes -> vlmc/<T>/<Regime>_<year>.json
    metrics      vlmc    -> metrics/<group>_<Regime>.contexts.csv, metrics/<group>_<Regime>.json

Floats go out with 17 significant digits and JSON keys are sorted, so the
same config and data give the same bytes. ``manifest.json`` at the top of
the output tree lists every file with its SHA-256 plus timings and warnings;
it is the only file holding wall-clock values.
"""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import tempfile
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bds import bds_suite
from .config import GROUPS, PipelineConfig
from .emd import Decomposition, direct_quadrature, emd_decompose
from .exceptions import (
    ConfigError,
    MissingInputError,
    MissingStageOutputError,
    StageFailure,
    ZeroEnergyError,
)
from .hhsa import RegimeProfile, holo_spectrum, regime_profile, second_layer, write_profiles
from .ingest import (
    ReturnSeries,
    StateSequence,
    compute_log_returns,
    compute_quintile_cutoffs,
    discretize_returns,
    load_prices,
)
from .metrics import aggregate_contexts, metrics_report
from .regimes import (
    REGIMES,
    EnergySeries,
    RegimeLabeling,
    RegimeYears,
    classify_regimes,
    instantaneous_energy,
    panel_sensitivity,
    regime_years,
    representative_years,
    threshold_sensitivity,
)
from .vlmc import ContextTree, fit_vlmc

log = logging.getLogger(__name__)

STAGES = ("ingest", "bds", "regimes", "sensitivity", "hhsa", "vlmc", "metrics")
MANIFEST = "manifest.json"
REPORT_DIR = "report"
ORDERED_REGIMES = tuple(reversed(REGIMES))  # Extreme, High, Normal


# file helpers ---------------------------------------------------------------

@contextmanager
def atomic_path(path: Path):
    """Yield a temporary sibling of ``path``; rename it into place on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    tmp = Path(tmp)
    try:
        yield tmp
        os.chmod(tmp, 0o644)
        os.replace(tmp, path)
    except BaseException:
        tmp.unlink(missing_ok=True)
        raise


def _write_json(path: Path, obj) -> None:
    with atomic_path(path) as tmp:
        with open(tmp, "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
            fh.write("\n")


def _jsonable(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (set, frozenset, tuple)):
        return sorted(v) if isinstance(v, (set, frozenset)) else list(v)
    raise TypeError(f"cannot serialise {type(v).__name__}")


def _read_json(path: Path):
    with open(path) as fh:
        return json.load(fh)


def sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _need(path: Path, stage: str) -> Path:
    if not path.exists():
        raise MissingStageOutputError(f"{path} not found; run the {stage} stage first")
    return path


def write_returns(r: ReturnSeries, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "return"])
        for d, v in zip(r.dates, r.r):
            w.writerow([str(d), f"{v:.17g}"])


def read_returns(path: Path, ticker: str = "") -> ReturnSeries:
    dates, vals = [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            dates.append(np.datetime64(row["date"], "D"))
            vals.append(float(row["return"]))
    return ReturnSeries(np.array(dates, dtype="datetime64[D]"), np.array(vals), ticker)


def _fmt(v) -> str:
    if isinstance(v, float):
        return "inf" if math.isinf(v) else f"{v:.17g}"
    return str(v)


# per-ticker stage work --------------------------------------------------------

class _Work:
    """Files and warnings produced by one unit of stage work."""

    def __init__(self, root: Path):
        self.root = root
        self.files: list[str] = []
        self.warnings: list[str] = []

    @contextmanager
    def open(self, rel: str):
        path = self.root / rel
        with atomic_path(path) as tmp:
            yield tmp
        self.files.append(rel)

    def json(self, rel: str, obj) -> None:
        _write_json(self.root / rel, obj)
        self.files.append(rel)


def _ingest(cfg: PipelineConfig, t: str, w: _Work) -> None:
    prices = load_prices(cfg.price_path(t), t, cfg.date_column, cfg.close_column)
    r = compute_log_returns(prices)
    q = compute_quintile_cutoffs(r)
    s = discretize_returns(r, q)
    with w.open(f"ingest/{t}.returns.csv") as tmp:
        write_returns(r, tmp)
    with w.open(f"ingest/{t}.states.csv") as tmp:
        s.to_csv(tmp)
    w.json(f"ingest/{t}.cutoffs.json", asdict(q))


def _bds(cfg: PipelineConfig, t: str, w: _Work) -> None:
    r = read_returns(_need(w.root / f"ingest/{t}.returns.csv", "ingest"), t)
    results = bds_suite(r, cfg.bds_dimensions, cfg.bds_eps_factor, cfg.bds_t_lag)
    with w.open(f"bds/{t}.csv") as tmp:
        with open(tmp, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["ticker", "m", "epsilon", "statistic", "p_value"])
            for res in results:
                out.writerow([t, res.m, _fmt(res.epsilon), _fmt(res.statistic), _fmt(res.p_value)])


def _regimes(cfg: PipelineConfig, t: str, w: _Work) -> None:
    r = read_returns(_need(w.root / f"ingest/{t}.returns.csv", "ingest"), t)
    d = emd_decompose(r.r, cfg.emd)
    with w.open(f"regimes/{t}.imfs.csv") as tmp:
        d.to_csv(tmp)
    w.json(f"regimes/{t}.emd.json", d.options)
    inst = [direct_quadrature(c) for c in d.imfs]
    clamped = sum(q.n_clamped for q in inst)
    if clamped:
        w.warnings.append(f"first layer: {clamped} negative frequencies clamped to 0")
    e = instantaneous_energy(inst, r.dates)
    labels = classify_regimes(e, *cfg.thresholds)
    with w.open(f"regimes/{t}.labels.csv") as tmp:
        labels.to_csv(tmp)
    w.json(f"regimes/{t}.years.json", regime_years(labels).as_dict())


def _read_years(root: Path, t: str) -> RegimeYears:
    data = _read_json(_need(root / f"regimes/{t}.years.json", "regimes"))
    return RegimeYears(*(frozenset(data[name]) for name in ORDERED_REGIMES))


def _rep_years(root: Path, group: str) -> dict[str, list[int]]:
    data = _read_json(_need(root / "regimes/representative_years.json", "regimes"))
    if group not in data["groups"]:
        raise MissingStageOutputError(f"no representative years for group {group!r}; rerun regimes")
    return data["groups"][group]


def _ticker_years(cfg: PipelineConfig, t: str, w: _Work) -> dict[str, list[int]]:
    """Representative years of the ticker's group that the ticker itself has in each regime.

    A regime with no such year falls back to the full representative set,
    with a warning.
    """
    own = _read_years(w.root, t)
    out = {}
    for regime, years in _rep_years(w.root, cfg.group_of(t)).items():
        mine = [y for y in years if y in own.get(regime)]
        if not mine and years:
            w.warnings.append(f"{regime}: none of {years} is a {regime} year here, using them anyway")
            mine = list(years)
        out[regime] = mine
    return out


def _hhsa(cfg: PipelineConfig, t: str, w: _Work) -> None:
    root = w.root
    d = Decomposition.from_csv(_need(root / f"regimes/{t}.imfs.csv", "regimes"))
    dates = RegimeLabeling.from_csv(_need(root / f"regimes/{t}.labels.csv", "regimes")).dates
    inst = [direct_quadrature(c) for c in d.imfs]
    sl = second_layer(d, cfg.emd)
    if sl.n_clamped:
        w.warnings.append(f"second layer: {sl.n_clamped} negative frequencies clamped to 0")
    if sl.n_envelope_fallbacks:
        w.warnings.append(f"{sl.n_envelope_fallbacks} envelopes fell back to a constant")
    rows = []
    years_avail = set((dates.astype("datetime64[Y]").astype(int) + 1970).tolist())
    for regime, years in _ticker_years(cfg, t, w).items():
        for year in years:
            if year not in years_avail:
                w.warnings.append(f"{regime} {year}: no data in that year, skipped")
                continue
            h = holo_spectrum(sl, inst, year, dates, cfg.n_bins, cfg.f_max, cfg.out_of_range)
            h.meta.update({"ticker": t, "regime": regime})
            base = f"hhsa/{t}/{regime}_{year}"
            with w.open(base + ".csv") as tmp:
                h.to_csv(tmp)
            w.json(base + ".json", h.meta_dict())
            try:
                p = regime_profile(h, sl, inst, year, dates)
            except ZeroEnergyError:
                w.warnings.append(f"{regime} {year}: no modulation energy, profile skipped")
                continue
            rows.append((regime, year, p))
    with w.open(f"hhsa/{t}.profiles.csv") as tmp:
        with open(tmp, "w", newline="") as fh:
            out = csv.writer(fh, lineterminator="\n")
            out.writerow(["regime", "year", "pame", "wc95", "wam95"])
            for regime, year, p in rows:
                out.writerow([regime, year, _fmt(p.pame), _fmt(p.wc95), _fmt(p.wam95)])


def _read_year_profiles(root: Path, t: str) -> list[tuple[str, int, RegimeProfile]]:
    with open(_need(root / f"hhsa/{t}.profiles.csv", "hhsa"), newline="") as fh:
        return [(r["regime"], int(r["year"]),
                 RegimeProfile(float(r["pame"]), float(r["wc95"]), float(r["wam95"])))
                for r in csv.DictReader(fh)]


def _vlmc(cfg: PipelineConfig, t: str, w: _Work) -> None:
    root = w.root
    s = StateSequence.from_csv(_need(root / f"ingest/{t}.states.csv", "ingest"), t)
    for regime, years in _ticker_years(cfg, t, w).items():
        for year in years:
            seq = s.select_year(year)
            if len(seq) <= cfg.prune.max_depth:
                w.warnings.append(f"{regime} {year}: {len(seq)} states, too few for a tree")
                continue
            tree = fit_vlmc(seq, cfg.prune)
            tree.meta.update({"ticker": t, "regime": regime, "year": int(year), "n": len(seq)})
            w.json(f"vlmc/{t}/{regime}_{year}.json", tree.to_dict())


_TICKER_WORK = {"ingest": _ingest, "bds": _bds, "regimes": _regimes, "hhsa": _hhsa, "vlmc": _vlmc}


def _run_ticker(stage: str, cfg: PipelineConfig, t: str) -> tuple[list[str], list[str]]:
    w = _Work(cfg.output_dir)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        _TICKER_WORK[stage](cfg, t, w)
    seen = []
    for c in caught:
        msg = f"{c.category.__name__}: {c.message}"
        if msg not in seen:
            seen.append(msg)
    return w.files, w.warnings + seen


# group-level stage work -------------------------------------------------------

def _regimes_group(cfg: PipelineConfig, w: _Work) -> None:
    out = {}
    for g in GROUPS:
        names = cfg.tickers.get(g, ())
        if names:
            out[g] = representative_years([_read_years(w.root, t) for t in names],
                                          cfg.per_regime_count)
    w.json("regimes/representative_years.json",
           {"groups": out, "per_regime_count": cfg.per_regime_count,
            "tickers": {g: list(v) for g, v in cfg.tickers.items()}})


def _energy(root: Path, t: str) -> EnergySeries:
    lab = RegimeLabeling.from_csv(_need(root / f"regimes/{t}.labels.csv", "regimes"))
    return EnergySeries.from_values(lab.energy, lab.dates)


def _sensitivity_group(cfg: PipelineConfig, w: _Work) -> None:
    for g in GROUPS:
        names = cfg.tickers.get(g, ())
        if not names:
            continue
        energies = {t: _energy(w.root, t) for t in names}
        for t, e in energies.items():
            w.json(f"sensitivity/{t}.json", threshold_sensitivity(e, cfg.sensitivity_grid).to_dict())
        panel = panel_sensitivity(energies, cfg.sensitivity_grid, cfg.per_regime_count)
        w.json(f"sensitivity/{g}.json", panel.to_dict())


def _hhsa_group(cfg: PipelineConfig, w: _Work) -> None:
    rows = []
    for t in cfg.all_tickers:
        per = {}
        for regime, _, p in _read_year_profiles(w.root, t):
            per.setdefault(regime, []).append(p)
        for regime in ORDERED_REGIMES:
            ps = per.get(regime)
            if ps:
                rows.append((t, regime, RegimeProfile(*(float(np.mean(v)) for v in zip(
                    *[(p.pame, p.wc95, p.wam95) for p in ps])))))
    with w.open("hhsa/profiles.csv") as tmp:
        write_profiles(tmp, rows)


def load_trees(root: Path, tickers, regime: str) -> list[ContextTree]:
    trees = []
    for t in tickers:
        d = root / "vlmc" / t
        if not d.is_dir():
            raise MissingStageOutputError(f"{d} not found; run the vlmc stage first")
        for path in sorted(d.glob(f"{regime}_*.json")):
            trees.append(ContextTree.from_dict(_read_json(path)))
    return trees


def _metrics_group(cfg: PipelineConfig, w: _Work) -> None:
    for g in GROUPS:
        names = cfg.tickers.get(g, ())
        if not names:
            continue
        for regime in ORDERED_REGIMES:
            trees = load_trees(w.root, names, regime)
            if not trees:
                w.warnings.append(f"{g} {regime}: no trees, metrics skipped")
                continue
            agg = aggregate_contexts(trees, cfg.min_tree_count)
            with w.open(f"metrics/{g}_{regime}.contexts.csv") as tmp:
                agg.to_csv(tmp)
            rep = metrics_report(trees, cfg.min_tree_count, agg)
            w.json(f"metrics/{g}_{regime}.json",
                   {"group": g, "regime": regime, "n_trees": len(trees), **rep.to_dict()})


_GROUP_WORK = {"regimes": _regimes_group, "sensitivity": _sensitivity_group,
               "hhsa": _hhsa_group, "metrics": _metrics_group}


# manifest ---------------------------------------------------------------------

@dataclass
class RunManifest:
    tool_version: str
    config_hash: str
    output_dir: Path
    tickers: dict[str, list[str]] = field(default_factory=dict)
    stages: list[str] = field(default_factory=list)
    timings: dict[str, float] = field(default_factory=dict)
    files: dict[str, str] = field(default_factory=dict)
    warnings: dict[str, list[str]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("output_dir")
        return d

    def save(self) -> Path:
        path = self.output_dir / MANIFEST
        _write_json(path, self.to_dict())
        return path

    @classmethod
    def load(cls, output_dir) -> "RunManifest":
        """Read ``manifest.json`` from an output tree; paths resolve against that tree."""
        output_dir = Path(output_dir)
        path = output_dir / MANIFEST
        if not path.exists():
            raise MissingStageOutputError(f"no {MANIFEST} in {output_dir}")
        return cls(output_dir=output_dir, **_read_json(path))

    def stage_files(self, stage: str) -> list[str]:
        return sorted(f for f in self.files if f.startswith(stage + "/"))

    def verify(self, stage: str | None = None) -> None:
        """Raise :class:`MissingStageOutputError` if a listed file is absent or changed."""
        for rel in (self.stage_files(stage) if stage else sorted(self.files)):
            path = self.output_dir / rel
            if not path.exists():
                raise MissingStageOutputError(f"{rel} is listed in the manifest but missing")
            if sha256(path) != self.files[rel]:
                raise MissingStageOutputError(f"{rel} does not match its manifest checksum")


def _start_manifest(cfg: PipelineConfig) -> RunManifest:
    fresh = RunManifest(__version__, cfg.config_hash, cfg.output_dir,
                        {g: list(v) for g, v in cfg.tickers.items()})
    path = cfg.output_dir / MANIFEST
    if not path.exists():
        return fresh
    try:
        old = RunManifest.load(cfg.output_dir)
    except (ValueError, TypeError):
        return fresh
    if old.config_hash != cfg.config_hash or old.tool_version != __version__:
        return fresh
    # a ticker subset keeps the earlier run's record of the others
    for g, names in fresh.tickers.items():
        merged = list(old.tickers.get(g, []))
        merged += [t for t in names if t not in merged]
        old.tickers[g] = merged
    return old


# driver -----------------------------------------------------------------------

def normalize_stages(stages) -> list[str]:
    if stages is None:
        return list(STAGES)
    stages = list(stages)
    unknown = [s for s in stages if s not in STAGES]
    if unknown:
        raise ConfigError(f"unknown stage(s): {', '.join(unknown)}; choose from {', '.join(STAGES)}")
    return [s for s in STAGES if s in stages]


def _map(cfg: PipelineConfig, stage: str):
    tickers = cfg.all_tickers
    if cfg.jobs > 1 and len(tickers) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.jobs, len(tickers))) as pool:
            return list(zip(tickers, pool.map(_run_ticker, [stage] * len(tickers),
                                              [cfg] * len(tickers), tickers)))
    return [(t, _run_ticker(stage, cfg, t)) for t in tickers]


def run_pipeline(cfg: PipelineConfig, stages=None) -> RunManifest:
    """Run ``stages`` (all of :data:`STAGES` when ``None``) in order.

    Every file written is recorded in ``output_dir/manifest.json``. An empty
    stage list writes only the manifest.
    """
    order = normalize_stages(stages)
    if "ingest" in order:
        for t in cfg.all_tickers:
            path = cfg.price_path(t)
            if not path.is_file():
                raise MissingInputError(t, path)
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    manifest = _start_manifest(cfg)
    for stage in order:
        t0 = time.perf_counter()
        log.info("stage %s: %d tickers", stage, len(cfg.all_tickers))
        files: list[str] = []
        try:
            if stage in _TICKER_WORK:
                for t, (fs, warns) in _map(cfg, stage):
                    files += fs
                    _note(manifest, t, stage, warns)
            if stage in _GROUP_WORK:
                w = _Work(cfg.output_dir)
                _GROUP_WORK[stage](cfg, w)
                files += w.files
                _note(manifest, "*", stage, w.warnings)
        except (MissingInputError, MissingStageOutputError, ConfigError):
            raise
        except Exception as exc:
            raise StageFailure(stage, exc) from exc
        for rel in files:
            manifest.files[rel] = sha256(cfg.output_dir / rel)
        manifest.files = dict(sorted(manifest.files.items()))
        if stage not in manifest.stages:
            manifest.stages = [s for s in STAGES if s in manifest.stages or s == stage]
        manifest.timings[stage] = round(time.perf_counter() - t0, 6)
    manifest.save()
    return manifest


def _note(manifest: RunManifest, key: str, stage: str, messages) -> None:
    prefix = f"{stage}: "
    kept = [m for m in manifest.warnings.get(key, []) if not m.startswith(prefix)]
    kept += [prefix + m for m in messages]
    if kept:
        manifest.warnings[key] = kept
    else:
        manifest.warnings.pop(key, None)


# reports ----------------------------------------------------------------------

Table = tuple[list[str], list[list]]


def _profile_table(root: Path, tickers: dict[str, list[str]]) -> Table:
    cols = ["group", "ticker"] + [f"{r.lower()}_{k}" for r in ORDERED_REGIMES
                                  for k in ("pame", "wc95", "wam95")]
    by_ticker: dict[str, dict[str, RegimeProfile]] = {}
    with open(_need(root / "hhsa/profiles.csv", "hhsa"), newline="") as fh:
        for r in csv.DictReader(fh):
            by_ticker.setdefault(r["ticker"], {})[r["regime"]] = RegimeProfile(
                float(r["pame"]), float(r["wc95"]), float(r["wam95"]))
    rows = []
    for g in GROUPS:
        members = [t for t in tickers.get(g, []) if t in by_ticker]
        for t in members:
            row = [g, t]
            for regime in ORDERED_REGIMES:
                p = by_ticker[t].get(regime)
                row += [math.nan] * 3 if p is None else [p.pame, p.wc95, p.wam95]
            rows.append(row)
        if members:
            avg = [g, "average"]
            for regime in ORDERED_REGIMES:
                ps = [by_ticker[t][regime] for t in members if regime in by_ticker[t]]
                avg += [float(np.mean([getattr(p, k) for p in ps])) if ps else math.nan
                        for k in ("pame", "wc95", "wam95")]
            rows.append(avg)
    return cols, rows


def _metric_docs(root: Path, tickers) -> list[dict]:
    docs = []
    for g in GROUPS:
        if not tickers.get(g):
            continue
        for regime in ORDERED_REGIMES:
            path = root / f"metrics/{g}_{regime}.json"
            if path.exists():
                docs.append(_read_json(path))
    if not docs:
        raise MissingStageOutputError("no metrics outputs; run the metrics stage first")
    return docs


def _num(v) -> float:
    return math.inf if v == "inf" else float(v)


def _unconditional_table(docs) -> Table:
    cols = ["group", "regime", "p1", "p2", "p3", "p4", "p5", "tail_ratio", "entropy"]
    rows = [[d["group"], d["regime"], *d["unconditional"]["p"],
             _num(d["unconditional"]["tail_ratio"]), d["unconditional"]["entropy"]] for d in docs]
    return cols, rows


def _order1_table(docs) -> Table:
    cols = ["group", "regime", "M1", "M2", "M3", "M4", "M5", "V1", "V2"]
    rows = [[d["group"], d["regime"], *d["order1"]["M"], d["order1"]["V1"], d["order1"]["V2"]]
            for d in docs]
    return cols, rows


def _orderk_table(docs) -> Table:
    cols = ["group", "regime", "k", "C", "E", "Z", "B"]
    rows = []
    for d in docs:
        for key in ("order2", "order3"):
            if key in d:
                o = d[key]
                rows.append([d["group"], d["regime"], o["k"], o["C"], o["E"], o["Z"], o["B"]])
    return cols, rows


def _years_table(root: Path, tickers) -> Table:
    cols = ["group", "ticker", "extreme", "high", "normal"]
    rep = _read_json(_need(root / "regimes/representative_years.json", "regimes"))["groups"]
    rows = []
    for g in GROUPS:
        for t in tickers.get(g, []):
            ry = _read_years(root, t).as_dict()
            rows.append([g, t] + [" ".join(map(str, ry[r])) for r in ORDERED_REGIMES])
        if g in rep:
            rows.append([g, "representative"] + [" ".join(map(str, rep[g][r]))
                                                 for r in ORDERED_REGIMES])
    return cols, rows


def _bds_table(root: Path, tickers) -> Table:
    cols = ["ticker", "m", "epsilon", "statistic", "p_value"]
    rows = []
    for g in GROUPS:
        for t in tickers.get(g, []):
            with open(_need(root / f"bds/{t}.csv", "bds"), newline="") as fh:
                for r in csv.DictReader(fh):
                    rows.append([t, int(r["m"]), float(r["epsilon"]), float(r["statistic"]),
                                 float(r["p_value"])])
    return cols, rows


def _contexts_tables(root: Path, tickers) -> dict[str, Table]:
    out = {}
    for g in GROUPS:
        if not tickers.get(g):
            continue
        for regime in ORDERED_REGIMES:
            path = root / f"metrics/{g}_{regime}.contexts.csv"
            if not path.exists():
                continue
            cols = ["context", "count", "p1", "p2", "p3", "p4", "p5"]
            with open(path, newline="") as fh:
                rows = [[r["context"], int(r["count"])] + [float(r[f"p{i}"]) for i in range(1, 6)]
                        for r in csv.DictReader(fh)]
            out[f"contexts_{g}_{regime.lower()}"] = (cols, rows)
    return out


def collect_tables(manifest: RunManifest) -> dict[str, Table]:
    """Every report table the manifest's stages support, keyed by file stem."""
    root = manifest.output_dir
    tk = manifest.tickers
    tables: dict[str, Table] = {}
    done = set(manifest.stages)
    if "bds" in done:
        tables["bds"] = _bds_table(root, tk)
    if "regimes" in done:
        tables["regime_years"] = _years_table(root, tk)
    if "hhsa" in done:
        tables["pame"] = _profile_table(root, tk)
    if "metrics" in done:
        docs = _metric_docs(root, tk)
        tables["unconditional"] = _unconditional_table(docs)
        tables["order1"] = _order1_table(docs)
        tables["orderk"] = _orderk_table(docs)
        tables.update(_contexts_tables(root, tk))
    return tables


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    return v


def export_reports(manifest: RunManifest, fmt: str = "csv") -> dict[str, str]:
    """Write consolidated report tables under ``output_dir/report/``.

    ``fmt="csv"`` writes one CSV per table, ``fmt="json"`` a single
    ``report.json``. Sensitivity panels are copied as ``sensitivity.json`` in
    both cases. Returns ``{relative path: sha256}``.
    """
    if fmt not in ("csv", "json"):
        raise ConfigError(f"unknown report format {fmt!r}")
    manifest.verify()
    tables = collect_tables(manifest)
    root = manifest.output_dir
    sens = {}
    if "sensitivity" in manifest.stages:
        for g in GROUPS:
            if manifest.tickers.get(g):
                sens[g] = _read_json(_need(root / f"sensitivity/{g}.json", "sensitivity"))
    if not tables and not sens:
        raise MissingStageOutputError("the manifest lists no stage outputs to report on")

    written = []
    if fmt == "csv":
        for name, (cols, rows) in tables.items():
            rel = f"{REPORT_DIR}/{name}.csv"
            with atomic_path(root / rel) as tmp:
                with open(tmp, "w", newline="") as fh:
                    w = csv.writer(fh, lineterminator="\n")
                    w.writerow(cols)
                    for row in rows:
                        w.writerow([_fmt(v) for v in row])
            written.append(rel)
    else:
        doc = {name: [dict(zip(cols, map(_json_value, row))) for row in rows]
               for name, (cols, rows) in tables.items()}
        rel = f"{REPORT_DIR}/report.json"
        _write_json(root / rel, doc)
        written.append(rel)
    if sens:
        rel = f"{REPORT_DIR}/sensitivity.json"
        _write_json(root / rel, sens)
        written.append(rel)
    return {rel: sha256(root / rel) for rel in written}
