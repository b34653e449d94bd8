#!/usr/bin/env python3
"""
Tests for X-norm components, the NormSeries table and decay fits.

**Property 1: Power laws are recovered by the log-log fit**
**Property 2: CSV round trips are bit-identical**
"""

import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st

project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from src.exceptions import DecayFitError, InvalidStateError
from src.integrator import Profile
from src.model import ParamSet
from src.norms import (
    MIN_FIT_POINTS,
    X1_COLUMNS,
    XNORM_COLUMNS,
    NormSeries,
    compute_x1_components,
    compute_xnorm_components,
    decay_fit,
    default_fit_window,
    read_json,
    series_from_profiles,
    smallness_surrogate,
    time_weights,
    write_json,
)
from src.spectral_core import GridSpec
from tests.strategies import gaussian_data


def _power_series(exponent: float, start: float = 5.0, stop: float = 50.0, count: int = 40):
    t = np.linspace(start, stop, count)
    return pd.Series(3.0 * t**exponent, index=pd.Index(t, name="t"), name="norm")


@pytest.mark.harness
class TestXNorm:
    def setup_method(self):
        self.grid = GridSpec.square(32, 32.0)
        self.h0 = gaussian_data(self.grid, 0.01, 3.0).h

    def test_components_and_totals(self):
        row = compute_xnorm_components(Profile(self.h0, 0.0))
        for name in XNORM_COLUMNS:
            assert row[name] > 0
            assert f"w_{name}" in row
        assert row["xnorm"] == pytest.approx(sum(row[f"w_{n}"] for n in XNORM_COLUMNS))
        assert row["x1norm"] == pytest.approx(row["xnorm"] - row["w_hN"])

    def test_weights_at_time_zero_are_one(self):
        weights = time_weights(0.0, ParamSet())
        assert all(value == pytest.approx(1.0) for value in weights.values())

    def test_weights_grow_and_decay(self):
        params = ParamSet()
        weights = time_weights(10.0, params)
        assert weights["sup_decay"] == pytest.approx(np.sqrt(101.0))
        assert weights["hN"] < 1.0
        assert weights["lq"] == pytest.approx(101.0 ** (0.5 * (1.0 - 2.0 / params.q)))

    def test_x1_drops_top_sobolev_term(self):
        row = compute_x1_components(Profile(self.h0, 1.0))
        assert "hN" not in row and "w_hN" not in row
        assert set(X1_COLUMNS) <= set(row)

    def test_components_scale_linearly(self):
        small = compute_xnorm_components(Profile(self.h0, 0.0))
        large = compute_xnorm_components(Profile(self.h0.scale(2.0), 0.0))
        assert large["xnorm"] == pytest.approx(2.0 * small["xnorm"], rel=1e-10)

    def test_smallness_surrogate(self):
        value, frame = smallness_surrogate(self.h0, 10.0, samples=6)
        assert len(frame) == 6
        assert value == pytest.approx(frame["xnorm"].max())
        assert frame.index[0] == 0.0


@pytest.mark.harness
class TestNormSeries:
    def test_append_enforces_increasing_times(self):
        series = NormSeries()
        series.append(0.0, {"a": 1.0})
        series.append(1.0, {"a": 2.0})
        with pytest.raises(InvalidStateError):
            series.append(1.0, {"a": 3.0})
        with pytest.raises(InvalidStateError):
            series.append(0.5, {"a": 3.0})

    def test_non_finite_entries_are_rejected(self):
        series = NormSeries()
        with pytest.raises(InvalidStateError):
            series.append(0.0, {"a": float("nan")})
        with pytest.raises(InvalidStateError):
            series.append(0.0, {"a": float("inf")})
        assert len(series) == 0

    def test_column_lookup(self):
        series = NormSeries()
        series.append(0.0, {"a": 1.0, "b": 2.0})
        series.append(1.0, {"a": 3.0, "b": 4.0})
        assert series.columns == ["a", "b"]
        assert series.column("b").tolist() == [2.0, 4.0]
        with pytest.raises(KeyError):
            series.column("c")

    def test_extend_merges_by_time(self):
        series = NormSeries()
        for t in (0.0, 1.0, 2.0):
            series.append(t, {"a": t})
        extra = pd.DataFrame({"g": [5.0, 7.0]}, index=pd.Index([0.0, 2.0], name="t"))
        series.extend(extra, prefix="x_")
        frame = series.to_frame()
        assert frame.loc[2.0, "x_g"] == 7.0
        assert np.isnan(frame.loc[1.0, "x_g"])

    @pytest.mark.property
    @given(seed=st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=10, deadline=10000)
    @example(seed=0)
    def test_csv_round_trip_is_exact(self, seed, tmp_path_factory):
        """**Property 2: CSV round trips are bit-identical**"""
        rng = np.random.default_rng(seed)
        series = NormSeries()
        times = np.cumsum(rng.uniform(0.01, 1.0, 12))
        for t in times:
            series.append(float(t), {"a": float(rng.lognormal()), "b": float(rng.normal())})
        path = series.to_csv(tmp_path_factory.mktemp("csv") / "norms.csv")
        loaded = NormSeries.from_csv(path)
        assert np.array_equal(loaded.times, series.times)
        for name in ("a", "b"):
            assert np.array_equal(loaded.column(name).values, series.column(name).values)

    def test_series_from_profiles(self):
        grid = GridSpec.square(16, 16.0)
        h0 = gaussian_data(grid, 0.01, 2.0).h
        series = series_from_profiles([Profile(h0, 0.0), Profile(h0, 1.0)])
        assert len(series) == 2
        assert "xnorm" in series.columns
        data = series.to_dict()
        assert data["t"] == [0.0, 1.0]


@pytest.mark.harness
class TestDecayFit:
    @pytest.mark.property
    @given(exponent=st.floats(min_value=-2.0, max_value=0.5))
    @settings(max_examples=20, deadline=10000)
    @example(exponent=-1.0)
    def test_power_law_is_recovered(self, exponent):
        """**Property 1: Power laws are recovered by the log-log fit**"""
        fit = decay_fit(_power_series(exponent))
        assert fit.exponent == pytest.approx(exponent, abs=1e-9)
        assert fit.points == 40

    def test_inverse_time_decay(self):
        fit = decay_fit(_power_series(-1.0), window=(10.0, 40.0))
        assert fit.exponent == pytest.approx(-1.0, abs=1e-10)
        assert fit.r2 == pytest.approx(1.0)
        assert fit.window == (10.0, 40.0)

    def test_constant_data(self):
        fit = decay_fit(_power_series(0.0))
        assert fit.exponent == 0.0
        assert fit.r2 == 1.0

    def test_oscillating_data_has_poor_fit(self):
        t = np.linspace(5.0, 50.0, 200)
        series = pd.Series(2.0 + np.sin(t), index=t, name="osc")
        fit = decay_fit(series)
        assert abs(fit.exponent) < 0.2
        assert fit.r2 < 0.5

    def test_too_few_points(self):
        series = _power_series(-1.0, count=MIN_FIT_POINTS - 1)
        with pytest.raises(DecayFitError):
            decay_fit(series)

    def test_nonpositive_values(self):
        series = _power_series(-1.0)
        series.iloc[3] = 0.0
        with pytest.raises(DecayFitError):
            decay_fit(series)

    def test_fit_from_norm_series_and_frame(self):
        source = _power_series(-0.5)
        series = NormSeries(source.to_frame())
        assert decay_fit(series, "norm").exponent == pytest.approx(-0.5)
        assert decay_fit(source.to_frame(), "norm").exponent == pytest.approx(-0.5)

    def test_default_window(self):
        assert default_fit_window(100.0, 45.0) == (5.0, 45.0)
        assert default_fit_window(20.0, 45.0, start=2.0) == (2.0, 20.0)


def test_json_helpers(tmp_path):
    payload = {"value": np.float64(1.5), "array": np.arange(3), "path": tmp_path}
    path = write_json(payload, tmp_path / "out" / "summary.json")
    data = read_json(path)
    assert data["value"] == 1.5
    assert data["array"] == [0, 1, 2]
    assert data["path"] == str(tmp_path)
