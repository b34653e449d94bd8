"""
Harness Module

Task drivers behind the command line: each driver takes a RunConfig, runs
the numerical work, writes its CSV/JSON/trajectory outputs into a per-run
directory and evaluates named acceptance criteria.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.config import config
from src.exceptions import DecayFitError, EPSimError, InsufficientSnapshotsError
from src.integrator import (
    Trajectory,
    energy_growth_check,
    partial_t_f_decay,
    run as integrate,
    scattering_check,
)
from src.logging_config import run_log
from src.model import ParamSet, make_initial_data
from src.multipliers import bernstein_check, kernel_l1_norm, kernel_moment_bounds
from src.normal_form import decompose, duhamel_residual, g_decay_scan, ibp_identity_check
from src.norms import (
    NormSeries,
    decay_fit,
    japanese_bracket,
    series_from_profiles,
    write_json,
)
from src.phase_geometry import (
    LEMMA_PHASES,
    deform_Q_scan,
    lattice_lower_bound_scan,
    phase_factorization_scan,
    phase_lower_bound_scan,
)
from src.run_config import RunConfig
from src.trajectory_store import save_trajectory

logger = logging.getLogger(__name__)

PHASE_BOUND = 0.05
DEFORM_RESIDUAL = 1e-10
DEFORM_NORM = 1.0 + 1e-9
DEFORM_SCALED = 0.3
FACTORIZATION_FRACTION = 0.999
IBP_TOL = 1e-12
KERNEL_CONSTANT = 20.0
NORMAL_FORM_RTOL = 1e-6
DUHAMEL_RTOL = 1e-5
SIMPSON_GAIN = 8.0


@dataclass
class Criterion:
    """One named acceptance check."""

    name: str
    passed: bool
    measured: Any
    threshold: Any
    skipped: bool = False
    detail: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return dict(self.__dict__)


def _at_most(name: str, value: float, limit: float) -> Criterion:
    return Criterion(name, bool(value <= limit), float(value), f"<= {limit}")


def _at_least(name: str, value: float, limit: float) -> Criterion:
    return Criterion(name, bool(value >= limit), float(value), f">= {limit}")


def _within(name: str, value: float, low: float, high: float) -> Criterion:
    return Criterion(name, bool(low <= value <= high), float(value), [low, high])


def _skipped(name: str, reason: str) -> Criterion:
    return Criterion(name, True, None, None, skipped=True, detail=reason)


@dataclass
class HarnessResult:
    task: str
    output_dir: Path
    criteria: List[Criterion] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)
    outputs: Dict[str, str] = field(default_factory=dict)
    elapsed: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.criteria if not c.skipped)

    @property
    def failures(self) -> List[Criterion]:
        return [c for c in self.criteria if not c.skipped and not c.passed]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "task": self.task,
            "passed": self.passed,
            "elapsed_seconds": self.elapsed,
            "criteria": [c.to_dict() for c in self.criteria],
            "summary": self.summary,
            "outputs": self.outputs,
        }


def _output_dir(run: RunConfig) -> Path:
    path = Path(run.output_dir) / run.task
    path.mkdir(parents=True, exist_ok=True)
    return path


def _fit_criteria(
    series: NormSeries,
    column: str,
    window: Tuple[float, float],
    name: str,
    low: Optional[float],
    high: Optional[float],
    min_r2: Optional[float] = None,
) -> Tuple[List[Criterion], Optional[dict]]:
    try:
        fit = decay_fit(series.column(column).dropna(), column, window)
    except (DecayFitError, KeyError) as e:
        return [_skipped(name, str(e))], None
    if low is None:
        found = [_at_most(name, fit.exponent, high)]
    elif high is None:
        found = [_at_least(name, fit.exponent, low)]
    else:
        found = [_within(name, fit.exponent, low, high)]
    if min_r2 is not None:
        found.append(_at_least(f"{name}_r2", fit.r2, min_r2))
    return found, fit.to_dict()


def _ratio_in_window(series: NormSeries, column: str, window: Tuple[float, float]) -> float:
    data = series.column(column).dropna()
    data = data[(data.index >= window[0]) & (data.index <= window[1])]
    if len(data) < 2 or data.min() <= 0:
        raise InsufficientSnapshotsError(2, len(data), f"max/min of {column}")
    return float(data.max() / data.min())


def _growth_criterion(series: NormSeries, limit: float = 1.5) -> Criterion:
    """max_t ||h(t)||_{H^N} / ||h(0)||_{H^N}; vacuous for zero data."""
    hn = series.column("hN").dropna()
    if hn.empty:
        return _skipped("hN_growth", "no H^N norms recorded")
    initial = float(hn.iloc[0])
    if initial == 0.0:
        if hn.max() == 0.0:
            return Criterion("hN_growth", True, 1.0, f"<= {limit}", detail="zero data")
        return Criterion("hN_growth", False, float("inf"), f"<= {limit}")
    return _at_most("hN_growth", float(hn.max()) / initial, limit)


# ---------------------------------------------------------------------------
# simulate / linear-decay
# ---------------------------------------------------------------------------


def _collect_series(run: RunConfig, traj: Trajectory) -> Tuple[NormSeries, Dict[str, Any]]:
    series = series_from_profiles(traj.profiles, run.params)
    extra: Dict[str, Any] = {}
    if run.nonlinear and len(traj) >= 5:
        series.extend(partial_t_f_decay(traj, run.params).to_frame())
    if len(traj) >= 3:
        energy = energy_growth_check(traj, run.params)
        series.extend(energy.frame[["ratio", "domination"]], prefix="energy_")
        extra["energy"] = energy.to_dict()
    if run.nonlinear:
        g_frame = g_decay_scan(traj, run.params, modes=run.g_modes, every=run.g_every)
        series.extend(g_frame)
    return series, extra


def _trajectory_criteria(
    run: RunConfig, series: NormSeries, traj: Trajectory
) -> Tuple[List[Criterion], Dict[str, Any]]:
    window = run.fit_window()
    criteria: List[Criterion] = []
    fits: Dict[str, Any] = {}

    if not run.nonlinear:
        found, fits["sup_decay"] = _fit_criteria(
            series, "sup_decay", window, "linear_sup_decay_exponent", -1.15, -0.85, 0.98
        )
        criteria += found
        try:
            ratio = _ratio_in_window(series, "w_sup_decay", window)
            criteria.append(_at_most("linear_weighted_sup_ratio", ratio, 4.0))
        except InsufficientSnapshotsError as e:
            criteria.append(_skipped("linear_weighted_sup_ratio", str(e)))
        return criteria, fits

    found, fits["sup_decay"] = _fit_criteria(
        series, "sup_decay", window, "nonlinear_sup_decay_exponent", -1.15, -0.85
    )
    criteria += found
    found, fits["lq"] = _fit_criteria(
        series, "lq", window, "nonlinear_lq_exponent", -1.05, -0.75
    )
    criteria += found
    criteria.append(_growth_criterion(series))

    found, fits["dtf_lq"] = _fit_criteria(
        series, "dtf_lq", window, "dtf_exponent", -2.3, -1.7
    )
    criteria += found
    found, fits["g_hNprime_half"] = _fit_criteria(
        series, "g_hNprime_half", window, "g_exponent", None, -0.8
    )
    criteria += found
    try:
        ratio = _ratio_in_window(series, "t_g_hNprime_half", window)
        criteria.append(_at_most("g_weighted_ratio", ratio, 5.0))
    except InsufficientSnapshotsError as e:
        criteria.append(_skipped("g_weighted_ratio", str(e)))

    criterion, fits["scattering"] = _scattering_criterion(traj, run.params)
    criteria.append(criterion)
    return criteria, fits


def _scattering_criterion(
    traj: Trajectory, params: ParamSet
) -> Tuple[Criterion, Optional[Dict[str, Any]]]:
    """Increments at T/8, T/4, T/2, T: strictly decreasing, last <= 0.2 x first."""
    try:
        report = scattering_check(traj, params=params, slack=0.0, strict=True)
    except (EPSimError, KeyError) as e:
        return _skipped("scattering", str(e)), None
    criterion = Criterion(
        "scattering",
        report.passed,
        report.final_ratio,
        "strictly decreasing and <= 0.2",
        detail=f"increments={report.increments}",
    )
    return criterion, report.to_dict()


def simulate(run: RunConfig) -> HarnessResult:
    """Integrate, record X-norm components and diagnostics, evaluate criteria."""
    out = _output_dir(run)
    result = HarnessResult(task=run.task, output_dir=out)
    data = make_initial_data(run.grid, run.data, run.params)
    traj = integrate(data, run.t_end, run.dt, run.record_stride, run.nonlinear)

    series, extra = _collect_series(run, traj)
    if run.write_csv:
        result.outputs["norms"] = str(series.to_csv(out / "norms.csv"))
    if run.save_trajectory:
        result.outputs["trajectory"] = str(save_trajectory(traj, out / "trajectory.bin"))

    if run.check:
        result.criteria, fits = _trajectory_criteria(run, series, traj)
    else:
        fits = {}
    final = series.to_frame().iloc[-1].to_dict()
    result.summary = {
        "grid": run.grid.describe(),
        "t_wrap": run.t_wrap,
        "fit_window": list(run.fit_window()),
        "snapshots": len(traj),
        "final_norms": final,
        "fits": fits,
        **extra,
    }
    return result


def linear_decay(run: RunConfig) -> HarnessResult:
    return simulate(run.with_overrides(nonlinear=False))


# ---------------------------------------------------------------------------
# decay-fit
# ---------------------------------------------------------------------------


def refit(run: RunConfig, csv_path: Union[str, Path], columns: Optional[Sequence[str]] = None) -> HarnessResult:
    """Decay fits of an existing norms CSV."""
    out = _output_dir(run)
    series = NormSeries.from_csv(csv_path)
    columns = list(columns) if columns else [c for c in series.columns if not c.startswith("w_")]
    window = run.fit_window()
    fits: Dict[str, Any] = {}
    for column in columns:
        try:
            fits[column] = decay_fit(series.column(column).dropna(), column, window).to_dict()
        except DecayFitError as e:
            fits[column] = {"error": str(e)}
            logger.warning(f"Skipping fit of {column}: {e}")
    return HarnessResult(
        task=run.task,
        output_dir=out,
        summary={"source": str(csv_path), "window": list(window), "fits": fits},
    )


# ---------------------------------------------------------------------------
# verify-lemmas
# ---------------------------------------------------------------------------


def verify_lemmas(run: RunConfig) -> HarnessResult:
    """Phase bounds, deformation matrix, phase factorizations, IBP identity, Bernstein."""
    out = _output_dir(run)
    result = HarnessResult(task=run.task, output_dir=out)
    summary: Dict[str, Any] = {}
    seed = run.data.seed

    sampled = phase_lower_bound_scan(run.samples, run.radius, seed)
    lattice = lattice_lower_bound_scan(run.grid, seed=seed)
    summary["phase_bound"] = {k: v.to_dict() for k, v in sampled.items()}
    summary["lattice_phase_bound"] = {k: v.to_dict() for k, v in lattice.items()}
    for label, found in sampled.items():
        result.criteria.append(_at_least(f"phase_bound[{label}]", found.minimum, PHASE_BOUND))
    for label, found in lattice.items():
        result.criteria.append(
            _at_least(f"lattice_phase_bound[{label}]", found.minimum, PHASE_BOUND)
        )

    deformation = deform_Q_scan(run.samples, run.radius, seed)
    summary["deformation"] = deformation.to_dict()
    result.criteria += [
        _at_most("deform_residual", deformation.max_residual, DEFORM_RESIDUAL),
        _at_most("deform_norm", deformation.max_norm, DEFORM_NORM),
        _at_least("deform_scaled_norm", deformation.min_scaled_norm, DEFORM_SCALED),
    ]

    summary["factorization"] = {}
    for which in LEMMA_PHASES:
        scan = phase_factorization_scan(which, min(run.samples, 10_000), seed=seed)
        summary["factorization"][which] = scan.to_dict()
        result.criteria.append(
            _at_least(f"factorization[{which}]", scan.passing_fraction, FACTORIZATION_FRACTION)
        )

    ibp = ibp_identity_check(seed=seed)
    summary["ibp_identity"] = ibp
    worst = max(v["closed_form"] for v in ibp.values())
    result.criteria.append(_at_most("ibp_identity", worst, IBP_TOL))

    data = make_initial_data(run.grid, run.data, run.params)
    summary["bernstein"] = []
    for m in (0.25, 0.5, 1.0, 2.0):
        try:
            report = bernstein_check(data.h, m, p=2.0, q=np.inf, s=1.0)
        except ValueError as e:
            logger.debug(f"Bernstein block M={m} skipped: {e}")
            continue
        summary["bernstein"].append(report.to_dict())
        result.criteria.append(
            Criterion(f"bernstein[M={m}]", report.passed, report.block_ratio, report.window)
        )

    result.summary = summary
    return result


# ---------------------------------------------------------------------------
# normal-form-check
# ---------------------------------------------------------------------------


def _thinned(traj: Trajectory) -> Optional[Trajectory]:
    """Every other snapshot, if the result still supports Simpson's rule."""
    profiles = traj.profiles[::2]
    if len(traj) % 2 == 0 or len(profiles) < 3 or len(profiles) % 2 == 0:
        return None
    return Trajectory(
        traj.times[::2], profiles, traj.dt, traj.record_stride * 2, traj.nonlinear
    )


def normal_form_check(run: RunConfig) -> HarnessResult:
    """Decompose f(t) = h0~ + g + f_cubic on a small-grid run."""
    out = _output_dir(run)
    result = HarnessResult(task=run.task, output_dir=out)
    t = run.normal_form_time
    data = make_initial_data(run.grid, run.data, run.params)
    traj = integrate(data, t, run.dt, run.record_stride, nonlinear=True)

    fine = decompose(traj, t, run.cubic_method)
    summary: Dict[str, Any] = {"fine": fine.to_dict()}
    result.criteria.append(
        _at_most("normal_form_residual", fine.relative_residual, NORMAL_FORM_RTOL)
    )

    mismatch = duhamel_residual(traj, t)
    summary["duhamel_relative_mismatch"] = mismatch
    result.criteria.append(_at_most("duhamel_agreement", mismatch, DUHAMEL_RTOL))

    coarse_traj = _thinned(traj)
    if coarse_traj is None:
        result.criteria.append(
            _skipped("simpson_order", "snapshot count does not allow halving")
        )
    else:
        coarse = decompose(coarse_traj, t, run.cubic_method)
        summary["coarse"] = coarse.to_dict()
        gain = coarse.residual / fine.residual if fine.residual > 0 else np.inf
        result.criteria.append(_at_least("simpson_order", gain, SIMPSON_GAIN))

    result.outputs["report"] = str(write_json(summary, out / "decomposition.json"))
    result.summary = summary
    return result


# ---------------------------------------------------------------------------
# kernel-scan
# ---------------------------------------------------------------------------


def kernel_scan(run: RunConfig) -> HarnessResult:
    """||K||_1 / <Mt> over the configured scales and times."""
    out = _output_dir(run)
    result = HarnessResult(task=run.task, output_dir=out)
    rows = []
    for m in run.kernel_scales:
        for t in run.kernel_times:
            l1 = kernel_l1_norm(m, t)
            moments = kernel_moment_bounds(m, t)
            rows.append(
                {
                    "M": m,
                    "t": t,
                    "l1": l1,
                    "constant": l1 / japanese_bracket(m * t),
                    "interpolation_bound": moments.interpolation_bound,
                }
            )
            logger.info(f"Kernel M={m}, t={t}: |K|_1={l1:.4g}")
    smoothed = [
        {"t": t, "l1": kernel_l1_norm(1.0, t, "bracket4")} for t in run.kernel_times
    ]
    worst = max(row["constant"] for row in rows)
    result.criteria.append(_at_most("kernel_constant", worst, KERNEL_CONSTANT))
    result.summary = {"lp": rows, "bracket4": smoothed, "max_constant": worst}
    return result


TASK_DRIVERS: Dict[str, Callable[[RunConfig], HarnessResult]] = {
    "simulate": simulate,
    "linear-decay": linear_decay,
    "verify-lemmas": verify_lemmas,
    "normal-form-check": normal_form_check,
    "kernel-scan": kernel_scan,
}


def write_summary(run: RunConfig, result: HarnessResult) -> Path:
    payload = {"run": run.to_dict(), "environment": config.get_summary(), **result.to_dict()}
    path = write_json(payload, result.output_dir / "summary.json")
    result.outputs["summary"] = str(path)
    return path


def run_task(run: RunConfig, **options: Any) -> HarnessResult:
    """Dispatch a task, time it and write summary.json."""
    started = time.perf_counter()
    with run_log(_output_dir(run)) as log_path:
        logger.info(f"Starting task {run.task}")
        if run.task == "decay-fit":
            result = refit(run, options["csv_path"], options.get("columns"))
        else:
            result = TASK_DRIVERS[run.task](run)
        result.elapsed = time.perf_counter() - started
        result.outputs["log"] = str(log_path)
        write_summary(run, result)
    for failure in result.failures:
        logger.error(
            f"Criterion {failure.name} failed: measured {failure.measured}, "
            f"threshold {failure.threshold}"
        )
    logger.info(
        f"Task {run.task} finished in {result.elapsed:.1f}s "
        f"({'passed' if result.passed else 'FAILED'})"
    )
    return result


def _sweep_worker(run: RunConfig) -> Dict[str, Any]:
    from src.logging_config import setup_logging

    setup_logging()
    return run_task(run).to_dict()


def run_sweep(runs: Sequence[RunConfig], workers: int = 1) -> List[Dict[str, Any]]:
    """Independent runs on a process pool, each in its own output directory."""
    staged = [
        r.with_overrides(output_dir=str(Path(r.output_dir) / f"run-{i:03d}"))
        for i, r in enumerate(runs)
    ]
    if workers <= 1:
        return [run_task(r).to_dict() for r in staged]
    results: List[Optional[Dict[str, Any]]] = [None] * len(staged)
    with ProcessPoolExecutor(max_workers=workers) as executor:
        futures = {executor.submit(_sweep_worker, r): i for i, r in enumerate(staged)}
        for future in as_completed(futures):
            results[futures[future]] = future.result()
    return [r for r in results if r is not None]
