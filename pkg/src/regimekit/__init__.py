"""Market-regime analysis toolkit.

Nonlinearity testing (BDS), Hilbert-Huang instantaneous-energy regimes,
holospectral regime profiles and variable-length Markov chains over
quintile return states.
"""

from importlib.metadata import PackageNotFoundError, version

from .bds import BdsConfig, BdsResult, bds_statistic, bds_suite, correlation_integral
from .emd import (
    EMD,
    Decomposition,
    InstantSeries,
    SiftOptions,
    amplitude_envelope,
    direct_quadrature,
    emd_decompose,
    masking_emd,
)
from .hhsa import HoloSpectrum, RegimeProfile, analyze, holo_spectrum, regime_profile, second_layer
from .ingest import (
    QuintileDiscretizer,
    compute_log_returns,
    compute_quintile_cutoffs,
    discretize_returns,
    load_prices,
)
from .metrics import (
    aggregate_contexts,
    higher_order_metrics,
    metrics_report,
    order1_metrics,
    unconditional_stats,
)
from .regimes import (
    RegimeClassifier,
    classify_regimes,
    instantaneous_energy,
    jaccard,
    regime_years,
    representative_years,
    threshold_sensitivity,
)
from .vlmc import VLMC, ContextTree, PruneConfig, build_context_tree, fit_vlmc, predict_next, prune_tree

try:
    __version__ = version("regimekit")
except PackageNotFoundError:  # pragma: no cover
    __version__ = "0.0.0"

__all__ = [
    "BdsConfig", "BdsResult", "bds_statistic", "bds_suite", "correlation_integral",
    "EMD", "Decomposition", "InstantSeries", "SiftOptions", "amplitude_envelope",
    "direct_quadrature", "emd_decompose", "masking_emd",
    "HoloSpectrum", "RegimeProfile", "analyze", "holo_spectrum", "regime_profile", "second_layer",
    "QuintileDiscretizer", "compute_log_returns", "compute_quintile_cutoffs",
    "discretize_returns", "load_prices",
    "aggregate_contexts", "higher_order_metrics", "metrics_report", "order1_metrics",
    "unconditional_stats",
    "RegimeClassifier", "classify_regimes", "instantaneous_energy", "jaccard", "regime_years",
    "representative_years", "threshold_sensitivity",
    "VLMC", "ContextTree", "PruneConfig", "build_context_tree", "fit_vlmc", "predict_next",
    "prune_tree",
]
