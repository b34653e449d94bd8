"""
Norm Bookkeeping Module

X-norm components of recorded profiles, the time-indexed NormSeries table
with CSV/JSON I/O, and log-log decay fits.

The X-norm bundles, for h = exp(it<nabla>) f,

    <t> || |nabla|^(1/2) <nabla> h ||_inf      (sup_decay)
    <t>^(-delta1) ||h||_{H^N}                  (hN)
    <t>^(1 - 2/q) ||h||_{L^q}                  (lq)
    ||h||_{H^N'}                               (hNprime)
    ||<x> f||_{L^(2+eps1)}                     (weighted)

and X_1 is the same sum without the H^N term.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy.stats import linregress

from src.exceptions import DecayFitError, InvalidStateError
from src.integrator import Profile, sup_decay_norm
from src.model import ParamSet
from src.spectral_core import lebesgue_norm, sobolev_norm, weighted_profile_norm

logger = logging.getLogger(__name__)

XNORM_COLUMNS = ["sup_decay", "hN", "hNprime", "lq", "weighted"]
X1_COLUMNS = [c for c in XNORM_COLUMNS if c != "hN"]
MIN_FIT_POINTS = 8
CSV_FLOAT_FORMAT = "%.17g"


def japanese_bracket(t: float) -> float:
    return float(np.sqrt(1.0 + t * t))


def time_weights(t: float, params: ParamSet) -> Dict[str, float]:
    """Time weights multiplying each raw norm in the X-norm."""
    bt = japanese_bracket(t)
    return {
        "sup_decay": bt,
        "hN": bt ** (-params.delta1),
        "hNprime": 1.0,
        "lq": bt ** (1.0 - 2.0 / params.q),
        "weighted": 1.0,
    }


def compute_xnorm_components(p: Profile, params: Optional[ParamSet] = None) -> Dict[str, float]:
    """
    Raw X-norm components, their time-weighted products (prefix ``w_``) and
    the totals ``xnorm`` and ``x1norm``.
    """
    params = params or ParamSet()
    h = p.h()
    raw = {
        "sup_decay": sup_decay_norm(h),
        "hN": sobolev_norm(h, params.n_top),
        "hNprime": sobolev_norm(h, params.n_prime),
        "lq": lebesgue_norm(h, params.q),
        "weighted": weighted_profile_norm(p.f, 2.0 + params.eps1),
    }
    weights = time_weights(p.t, params)
    row: Dict[str, float] = dict(raw)
    for name, value in raw.items():
        row[f"w_{name}"] = weights[name] * value
    row["xnorm"] = sum(row[f"w_{name}"] for name in XNORM_COLUMNS)
    row["x1norm"] = row["xnorm"] - row["w_hN"]
    return row


def compute_x1_components(p: Profile, params: Optional[ParamSet] = None) -> Dict[str, float]:
    """X_1 components: everything in the X-norm except H^N."""
    full = compute_xnorm_components(p, params)
    row = {name: full[name] for name in X1_COLUMNS}
    row.update({f"w_{name}": full[f"w_{name}"] for name in X1_COLUMNS})
    row["x1norm"] = full["x1norm"]
    return row


def smallness_surrogate(
    h0, t_end: float, params: Optional[ParamSet] = None, samples: int = 16
) -> Tuple[float, pd.DataFrame]:
    """
    sup over [0, t_end] of ||exp(it<nabla>) h0||_X on the free flow.

    The hypothesis is a statement about all t >= 0; only the window before
    the box wraps around is evaluated here.
    """
    params = params or ParamSet()
    rows, times = [], np.linspace(0.0, t_end, samples)
    for t in times:
        rows.append(compute_xnorm_components(Profile(h0, float(t)), params))
    frame = pd.DataFrame(rows, index=pd.Index(times, name="t"))
    return float(frame["xnorm"].max()), frame


class NormSeries:
    """
    Time-indexed table of named norms.

    Rows are appended in strictly increasing time; every entry must be
    finite.
    """

    def __init__(self, frame: Optional[pd.DataFrame] = None):
        self._rows: List[Dict[str, float]] = []
        self._times: List[float] = []
        if frame is not None:
            frame = frame.copy()
            frame.index = pd.Index(frame.index.astype(float), name="t")
            # empty cells are columns a row never had
            for t, row in frame.iterrows():
                self.append(float(t), row.dropna().to_dict())

    def __len__(self) -> int:
        return len(self._times)

    def append(self, t: float, row: Mapping[str, float]) -> None:
        if self._times and not t > self._times[-1]:
            raise InvalidStateError(
                "NormSeries times must be strictly increasing", t=t, last=self._times[-1]
            )
        values = {k: float(v) for k, v in row.items()}
        bad = [k for k, v in values.items() if not np.isfinite(v)]
        if bad:
            raise InvalidStateError("Non-finite norm entries", t=t, columns=bad)
        self._times.append(float(t))
        self._rows.append(values)

    def extend(self, frame: pd.DataFrame, prefix: str = "") -> None:
        """Merge diagnostic columns keyed by the same times."""
        lookup = {float(t): row for t, row in frame.iterrows()}
        for t, row in zip(self._times, self._rows):
            extra = lookup.get(t)
            if extra is None:
                continue
            for name, value in extra.items():
                row[f"{prefix}{name}"] = float(value)

    @property
    def times(self) -> np.ndarray:
        return np.array(self._times)

    @property
    def columns(self) -> List[str]:
        seen: Dict[str, None] = {}
        for row in self._rows:
            for name in row:
                seen.setdefault(name, None)
        return list(seen)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self._rows, index=pd.Index(self._times, name="t"))
        return frame[self.columns] if self._rows else frame

    def column(self, name: str) -> pd.Series:
        frame = self.to_frame()
        if name not in frame.columns:
            raise KeyError(f"NormSeries has no column {name!r}")
        return frame[name]

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, float_format=CSV_FLOAT_FORMAT, encoding="utf-8")
        logger.debug(f"Wrote {len(self)} norm rows to {path}")
        return path

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "NormSeries":
        frame = pd.read_csv(path, index_col="t", float_precision="round_trip")
        return cls(frame)

    def to_dict(self) -> Dict[str, Any]:
        return {"t": self._times, "columns": {c: self.column(c).tolist() for c in self.columns}}


def series_from_profiles(
    profiles: Iterable[Profile], params: Optional[ParamSet] = None
) -> NormSeries:
    series = NormSeries()
    for p in profiles:
        series.append(p.t, compute_xnorm_components(p, params))
    return series


@dataclass
class DecayFit:
    column: str
    exponent: float
    r2: float
    intercept: float
    points: int
    window: Tuple[float, float]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "column": self.column,
            "exponent": self.exponent,
            "r2": self.r2,
            "intercept": self.intercept,
            "points": self.points,
            "window": list(self.window),
        }


def decay_fit(
    series: Union[NormSeries, pd.DataFrame, pd.Series],
    column: Optional[str] = None,
    window: Optional[Tuple[float, float]] = None,
) -> DecayFit:
    """
    Least-squares slope of log(norm) against log(t) inside ``window``.

    Needs at least eight points, all with t > 0 and positive values.
    """
    if isinstance(series, NormSeries):
        data = series.column(column)
    elif isinstance(series, pd.DataFrame):
        data = series[column]
    else:
        data = series
        column = column or str(series.name)
    times = np.asarray(data.index, dtype=float)
    values = np.asarray(data.values, dtype=float)

    t0, t1 = window if window is not None else (times[0], times[-1])
    inside = (times >= t0) & (times <= t1)
    times, values = times[inside], values[inside]
    if len(times) < MIN_FIT_POINTS:
        raise DecayFitError(
            f"Need at least {MIN_FIT_POINTS} points in the fit window",
            column=column,
            points=len(times),
            window=(t0, t1),
        )
    if np.any(times <= 0) or np.any(values <= 0):
        raise DecayFitError(
            "Decay fit needs positive times and values", column=column, window=(t0, t1)
        )

    log_t, log_v = np.log(times), np.log(values)
    if np.ptp(log_v) == 0:
        return DecayFit(column, 0.0, 1.0, float(log_v[0]), len(times), (t0, t1))
    fit = linregress(log_t, log_v)
    result = DecayFit(
        column=column,
        exponent=float(fit.slope),
        r2=float(fit.rvalue**2),
        intercept=float(fit.intercept),
        points=len(times),
        window=(float(t0), float(t1)),
    )
    logger.info(f"Decay fit {column}: exponent {result.exponent:.4f} (r2={result.r2:.4f})")
    return result


def default_fit_window(t_end: float, t_wrap: float, start: float = 5.0) -> Tuple[float, float]:
    return (start, min(t_end, t_wrap))


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, Path):
        return str(value)
    if hasattr(value, "to_dict"):
        return value.to_dict()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def write_json(payload: Mapping[str, Any], path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, default=_json_default)
    return path


def read_json(path: Union[str, Path]) -> Dict[str, Any]:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)
