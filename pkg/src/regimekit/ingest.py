"""Price ingestion, log returns and quintile state discretisation.

States are stored as integer codes ``0..4`` and rendered as ``R1..R5``;
``R1`` holds the most negative fifth of returns.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_1d_float
from .exceptions import (
    DuplicateDateError,
    NonPositivePriceError,
    ParseError,
    TooFewObservationsError,
    TooFewRowsError,
)

STATE_LABELS = ("R1", "R2", "R3", "R4", "R5")
N_STATES = len(STATE_LABELS)
QUINTILE_PROBS = (0.2, 0.4, 0.6, 0.8)


@dataclass(frozen=True)
class PriceSeries:
    ticker: str
    dates: NDArray[np.datetime64]
    close: NDArray[np.float64]

    def __post_init__(self):
        if len(self.dates) != len(self.close):
            raise ValueError("dates and close differ in length")
        if len(self.close) < 2:
            raise TooFewRowsError(f"{self.ticker}: need at least 2 prices, got {len(self.close)}")
        if np.any(np.diff(self.dates) <= np.timedelta64(0, "D")):
            raise ValueError("dates must be strictly increasing")
        if not np.all(self.close > 0):
            raise NonPositivePriceError(f"{self.ticker}: prices must be > 0")

    def __len__(self):
        return len(self.close)


@dataclass(frozen=True)
class ReturnSeries:
    dates: NDArray[np.datetime64]
    r: NDArray[np.float64]
    ticker: str = ""

    def __len__(self):
        return len(self.r)


@dataclass(frozen=True)
class QuintileCutoffs:
    q20: float
    q40: float
    q60: float
    q80: float

    def as_array(self) -> NDArray[np.float64]:
        return np.array([self.q20, self.q40, self.q60, self.q80])


@dataclass(frozen=True)
class StateSequence:
    dates: NDArray[np.datetime64]
    states: NDArray[np.int8]
    ticker: str = ""

    def __len__(self):
        return len(self.states)

    @property
    def labels(self) -> list[str]:
        return [STATE_LABELS[s] for s in self.states]

    def select_year(self, year: int) -> "StateSequence":
        years = self.dates.astype("datetime64[Y]").astype(int) + 1970
        mask = years == year
        return StateSequence(self.dates[mask], self.states[mask], self.ticker)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["date", "state"])
            for d, s in zip(self.dates, self.states):
                w.writerow([str(d), STATE_LABELS[s]])

    @classmethod
    def from_csv(cls, path, ticker: str = "") -> "StateSequence":
        dates, states = [], []
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                dates.append(np.datetime64(row["date"], "D"))
                states.append(STATE_LABELS.index(row["state"]))
        return cls(np.array(dates, dtype="datetime64[D]"), np.array(states, dtype=np.int8), ticker)


def _find_column(header, name):
    for i, h in enumerate(header):
        if h.strip().lower() == name.lower():
            return i
    return None


def load_prices(path: str | os.PathLike, ticker: str, date_col: str = "Date",
                close_col: str = "Close") -> PriceSeries:
    """Read a dated closing-price CSV.

    Rows whose close cell is blank or non-numeric (Yahoo writes ``null``)
    are dropped. A row that cannot be split into the header's fields or
    whose date does not parse raises :class:`ParseError` with its 1-based
    data-row index. Duplicate dates raise :class:`DuplicateDateError`.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)

    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TooFewRowsError(f"{path}: empty file") from None
        di = _find_column(header, date_col)
        ci = _find_column(header, close_col)
        if di is None or ci is None:
            raise ParseError(f"{path}: header must name {date_col!r} and {close_col!r} columns")

        rows = {}
        for idx, row in enumerate(reader, start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < max(di, ci) + 1:
                raise ParseError(f"expected {len(header)} fields, got {len(row)}", row=idx)
            try:
                date = np.datetime64(row[di].strip(), "D")
            except ValueError:
                raise ParseError(f"bad date {row[di]!r}", row=idx) from None
            if np.isnat(date):
                raise ParseError(f"bad date {row[di]!r}", row=idx)
            try:
                close = float(row[ci])
            except ValueError:
                continue
            if not math.isfinite(close):
                continue
            if date in rows:
                raise DuplicateDateError(f"{path}: duplicate date {date} (row {idx})")
            rows[date] = close

    if len(rows) < 2:
        raise TooFewRowsError(f"{path}: need at least 2 valid rows, got {len(rows)}")
    dates = np.array(sorted(rows), dtype="datetime64[D]")
    close = np.array([rows[d] for d in dates], dtype=np.float64)
    return PriceSeries(ticker, dates, close)


def compute_log_returns(p: PriceSeries) -> ReturnSeries:
    close = np.asarray(p.close, dtype=np.float64)
    if not np.all(close > 0):
        raise NonPositivePriceError("log returns need strictly positive prices")
    r = np.log(close[1:] / close[:-1])
    return ReturnSeries(p.dates[1:], r, p.ticker)


def compute_quintile_cutoffs(r: ReturnSeries | NDArray) -> QuintileCutoffs:
    """Full-sample quintile cutoffs.

    Uses linear interpolation between order statistics, i.e. the value at
    1-based position ``h = (n - 1) p + 1`` of the sorted sample.
    """
    x = as_1d_float(r.r if isinstance(r, ReturnSeries) else r, name="returns")
    if x.size < 5:
        raise TooFewObservationsError(f"need at least 5 returns, got {x.size}")
    q = np.quantile(x, QUINTILE_PROBS, method="linear")
    return QuintileCutoffs(*(float(v) for v in q))


def discretize_returns(r: ReturnSeries | NDArray, q: QuintileCutoffs) -> StateSequence | NDArray[np.int8]:
    """Map each return to R1..R5; a value equal to a cutoff goes to the lower state.

    Returns a :class:`StateSequence` for a :class:`ReturnSeries` input and a
    bare code array otherwise.
    """
    values = r.r if isinstance(r, ReturnSeries) else np.asarray(r, dtype=np.float64)
    # side="left" counts cutoffs strictly below the value, so r == q goes down
    codes = np.searchsorted(q.as_array(), values, side="left").astype(np.int8)
    if isinstance(r, ReturnSeries):
        return StateSequence(r.dates, codes, r.ticker)
    return codes


class QuintileDiscretizer(TransformerMixin, BaseEstimator):
    """Estimator form of the quintile state assignment.

    ``fit`` learns the four cutoffs from a return sample; ``transform``
    maps returns to integer state codes ``0..4``.
    """

    def fit(self, X, y=None):
        x = as_1d_float(X, name="X")
        self.cutoffs_ = compute_quintile_cutoffs(x)
        self.n_features_in_ = 1
        return self

    def transform(self, X):
        check_is_fitted(self, "cutoffs_")
        return discretize_returns(as_1d_float(X, name="X"), self.cutoffs_)
