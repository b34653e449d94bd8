#!/usr/bin/env python3
"""
Tests for the task drivers and the command line.

**Property 1: Skipped criteria never fail a run**
**Property 2: Exit codes follow the run outcome**
"""

import json
import sys
from pathlib import Path

import numpy as np
import pytest

project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

import main as cli
from src import harness
from src.exceptions import BlowUpError
from src.harness import (
    Criterion,
    HarnessResult,
    _fit_criteria,
    _growth_criterion,
    _scattering_criterion,
    _thinned,
    kernel_scan,
    linear_decay,
    normal_form_check,
    refit,
    run_sweep,
    run_task,
    simulate,
    verify_lemmas,
)
from src.integrator import Profile, Trajectory, scattering_check
from src.integrator import run as integrate
from src.model import InitialDataSpec, ParamSet
from src.norms import NormSeries
from src.run_config import RunConfig
from src.spectral_core import GridSpec
from tests.strategies import gaussian_data

SMALL_RUN = """
[grid]
n = 16
box_length = 16

[time]
t_end = 1
dt = 0.05
record_stride = 2

[data]
density_width = 2.0

[task]
name = linear-decay
"""


def _small_run(tmp_path, **changes) -> RunConfig:
    base = RunConfig(
        n=16,
        box_length=16.0,
        t_end=1.0,
        dt=0.05,
        record_stride=2,
        data=InitialDataSpec(density_width=2.0),
        output_dir=str(tmp_path),
    )
    return base.with_overrides(**changes)


def _stepped_trajectory(levels) -> Trajectory:
    """Profiles levels[j] * v at t = 0, 1, 2, 4, 8 for one fixed field v."""
    grid = GridSpec.square(8, 8.0)
    v = gaussian_data(grid, 0.01, 1.0).h
    times = [0.0, 1.0, 2.0, 4.0, 8.0]
    profiles = [Profile(v.scale(c), t) for c, t in zip(levels, times)]
    return Trajectory(times, profiles, dt=1.0, record_stride=1)


@pytest.mark.harness
@pytest.mark.unit
class TestCriteria:
    def test_passed_ignores_skipped(self):
        """**Property 1: Skipped criteria never fail a run**"""
        result = HarnessResult(task="simulate", output_dir=Path("."))
        result.criteria = [
            harness._at_most("a", 1.0, 2.0),
            harness._skipped("b", "no data"),
        ]
        assert result.passed
        result.criteria.append(harness._at_least("c", 0.1, 0.5))
        assert not result.passed
        assert [c.name for c in result.failures] == ["c"]

    def test_within(self):
        assert harness._within("w", 0.5, 0.0, 1.0).passed
        assert not harness._within("w", 1.5, 0.0, 1.0).passed

    def test_to_dict(self):
        criterion = Criterion("x", True, 1.0, "<= 2")
        assert criterion.to_dict()["name"] == "x"
        result = HarnessResult(task="t", output_dir=Path("."), criteria=[criterion])
        assert result.to_dict()["passed"] is True

    def test_fit_with_too_few_points_is_skipped(self):
        series = NormSeries()
        for t in (1.0, 2.0, 3.0):
            series.append(t, {"sup_decay": 1.0 / t})
        found, fit = _fit_criteria(series, "sup_decay", (0.5, 4.0), "exp", -1.1, -0.9)
        assert fit is None
        assert found[0].skipped

    def test_fit_on_missing_column_is_skipped(self):
        series = NormSeries()
        series.append(1.0, {"a": 1.0})
        found, _ = _fit_criteria(series, "b", (0.0, 2.0), "exp", None, -0.8)
        assert found[0].skipped

    def test_fit_bounds(self):
        series = NormSeries()
        for t in np.linspace(5.0, 20.0, 16):
            series.append(float(t), {"sup_decay": 1.0 / t})
        found, fit = _fit_criteria(series, "sup_decay", (5.0, 20.0), "exp", -1.15, -0.85, 0.98)
        assert all(c.passed for c in found)
        assert fit["exponent"] == pytest.approx(-1.0)

    def test_growth_of_zero_data_is_vacuous(self):
        series = NormSeries()
        for t in (0.0, 1.0, 2.0):
            series.append(t, {"hN": 0.0})
        criterion = _growth_criterion(series)
        assert criterion.passed
        assert criterion.measured == 1.0

    def test_growth_ratio(self):
        series = NormSeries()
        for t, value in ((0.0, 2.0), (1.0, 2.5), (2.0, 4.0)):
            series.append(t, {"hN": value})
        assert _growth_criterion(series).measured == pytest.approx(2.0)
        assert not _growth_criterion(series).passed
        series = NormSeries()
        for t, value in ((0.0, 0.0), (1.0, 1e-3)):
            series.append(t, {"hN": value})
        assert not _growth_criterion(series).passed

    def test_scattering_requires_strict_decrease(self):
        # increments [1.0, 1.05, 0.15]: within 10% slack but rising in the middle
        rising = _stepped_trajectory([0.0, 0.0, 1.0, 2.05, 2.2])
        assert scattering_check(rising).passed
        criterion, report = _scattering_criterion(rising, ParamSet())
        assert report["increments"][1] > report["increments"][0]
        assert not criterion.passed

        falling = _stepped_trajectory([0.0, 0.0, 1.0, 1.5, 1.6])
        criterion, report = _scattering_criterion(falling, ParamSet())
        assert criterion.passed
        assert criterion.measured == pytest.approx(0.1)

    def test_scattering_of_free_flow_passes(self):
        criterion, _ = _scattering_criterion(_stepped_trajectory([1.0] * 5), ParamSet())
        assert criterion.passed

    def test_scattering_without_dyadic_snapshots_is_skipped(self):
        traj = _stepped_trajectory([0.0, 0.0, 1.0, 1.5, 1.6])
        criterion, report = _scattering_criterion(traj.until(4.0), ParamSet())
        assert criterion.skipped
        assert report is None

    def test_thinned_trajectory(self):
        grid = GridSpec.square(8, 8.0)
        traj = integrate(gaussian_data(grid, 0.01, 1.0), 0.4, dt=0.05, record_stride=2)
        coarse = _thinned(traj)
        assert len(coarse) == 3
        assert coarse.spacing == pytest.approx(2 * traj.spacing)
        assert _thinned(traj.until(0.3)) is None
        assert _thinned(traj.until(0.2)) is None


@pytest.mark.harness
@pytest.mark.integration
class TestDrivers:
    def test_linear_decay_writes_outputs(self, tmp_path):
        result = run_task(_small_run(tmp_path, task="linear-decay"))
        assert result.passed
        assert Path(result.outputs["norms"]).exists()
        summary = json.loads(Path(result.outputs["summary"]).read_text())
        assert summary["task"] == "linear-decay"
        assert summary["run"]["n"] == 16
        assert summary["summary"]["snapshots"] == 11
        assert "fft_workers" in summary["environment"]
        assert "Starting task linear-decay" in Path(result.outputs["log"]).read_text()
        # fit window starts after t_end: the fit is skipped, not failed
        assert all(c.skipped for c in result.criteria)

    def test_linear_decay_forces_free_flow(self, tmp_path):
        result = linear_decay(_small_run(tmp_path, task="linear-decay"))
        assert "g_hNprime" not in result.summary["final_norms"]

    def test_simulate_collects_diagnostics(self, tmp_path):
        result = simulate(_small_run(tmp_path, task="simulate", save_trajectory=True))
        frame = NormSeries.from_csv(result.outputs["norms"]).to_frame()
        for column in ("xnorm", "dtf_lq", "energy_ratio", "g_hNprime_half"):
            assert column in frame.columns
        assert Path(result.outputs["trajectory"]).exists()
        names = {c.name for c in result.criteria}
        assert {"hN_growth", "nonlinear_sup_decay_exponent", "scattering"} <= names
        assert next(c for c in result.criteria if c.name == "hN_growth").passed

    def test_simulate_without_checks(self, tmp_path):
        result = simulate(_small_run(tmp_path, task="simulate", check=False, write_csv=False))
        assert result.criteria == []
        assert "norms" not in result.outputs

    def test_refit(self, tmp_path):
        series = NormSeries()
        for t in np.linspace(5.0, 25.0, 21):
            series.append(float(t), {"sup_decay": 2.0 / t, "w_sup_decay": 2.0})
        path = series.to_csv(tmp_path / "norms.csv")
        run = _small_run(tmp_path, task="decay-fit", fit_end=25.0)
        result = refit(run, path)
        assert set(result.summary["fits"]) == {"sup_decay"}
        assert result.summary["fits"]["sup_decay"]["exponent"] == pytest.approx(-1.0)

    def test_refit_records_fit_errors(self, tmp_path):
        series = NormSeries()
        for t in (5.0, 6.0):
            series.append(t, {"lq": 1.0 / t})
        path = series.to_csv(tmp_path / "short.csv")
        result = run_task(_small_run(tmp_path, task="decay-fit"), csv_path=path)
        assert "error" in result.summary["fits"]["lq"]

    def test_verify_lemmas(self, tmp_path):
        run = _small_run(tmp_path, task="verify-lemmas", n=8, box_length=8.0, samples=2000)
        run = run.with_overrides(data=InitialDataSpec(density_width=1.0))
        result = verify_lemmas(run)
        for criterion in result.criteria:
            if not criterion.name.startswith("bernstein"):
                assert criterion.passed, criterion.name
        assert set(result.summary["factorization"]) == {"phi1", "phi2", "phi3"}
        assert result.summary["lattice_phase_bound"]["++"]["exhaustive"]

    def test_kernel_scan(self, tmp_path):
        run = _small_run(tmp_path, task="kernel-scan", kernel_scales=(1.0,), kernel_times=(0.0, 1.0))
        result = kernel_scan(run)
        assert len(result.summary["lp"]) == 2
        assert result.passed

    def test_normal_form_check(self, tmp_path):
        run = _small_run(
            tmp_path,
            task="normal-form-check",
            normal_form_time=0.5,
            dt=0.0015625,
            record_stride=8,
        )
        result = normal_form_check(run)
        names = {c.name: c for c in result.criteria}
        assert names["normal_form_residual"].passed
        assert names["duhamel_agreement"].passed
        assert "simpson_order" in names
        assert Path(result.outputs["report"]).exists()

    def test_sweep_uses_separate_directories(self, tmp_path):
        runs = [_small_run(tmp_path, task="linear-decay", t_end=t) for t in (0.5, 1.0)]
        summaries = run_sweep(runs, workers=1)
        assert len(summaries) == 2
        dirs = {Path(s["outputs"]["summary"]).parent.parent.name for s in summaries}
        assert dirs == {"run-000", "run-001"}


@pytest.mark.harness
class TestCommandLine:
    """**Property 2: Exit codes follow the run outcome**"""

    def test_successful_run(self, tmp_path, capsys):
        cfg = tmp_path / "small.cfg"
        cfg.write_text(SMALL_RUN)
        code = cli.main(
            ["linear-decay", "--config", str(cfg), "--output-dir", str(tmp_path / "out")]
        )
        assert code == cli.EXIT_OK
        assert (tmp_path / "out" / "linear-decay" / "summary.json").exists()
        assert "linear-decay" in capsys.readouterr().out

    def test_empty_config(self, tmp_path):
        cfg = tmp_path / "empty.cfg"
        cfg.write_text("")
        assert cli.main(["simulate", "--config", str(cfg)]) == cli.EXIT_CONFIG

    def test_missing_config(self, tmp_path):
        code = cli.main(["simulate", "--config", str(tmp_path / "absent.cfg")])
        assert code == cli.EXIT_CONFIG

    def test_unknown_key(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("[grid]\nn = 16\nresolution = 3\n")
        assert cli.main(["simulate", "--config", str(cfg)]) == cli.EXIT_CONFIG

    def test_decay_fit_requires_csv(self):
        with pytest.raises(SystemExit) as info:
            cli.main(["decay-fit"])
        assert info.value.code == 2

    def test_numerical_error(self, tmp_path, monkeypatch):
        def explode(run):
            raise BlowUpError(0.5, {"l2": 1.0})

        monkeypatch.setitem(harness.TASK_DRIVERS, "simulate", explode)
        code = cli.main(["simulate", "--output-dir", str(tmp_path)])
        assert code == cli.EXIT_NUMERICAL

    def test_failed_criterion(self, tmp_path, monkeypatch):
        def failing(run):
            result = HarnessResult(task=run.task, output_dir=tmp_path)
            result.criteria.append(harness._at_most("always", 2.0, 1.0))
            return result

        monkeypatch.setitem(harness.TASK_DRIVERS, "kernel-scan", failing)
        code = cli.main(["kernel-scan", "--output-dir", str(tmp_path)])
        assert code == cli.EXIT_FAILED
