"""
Integrator Module

Time integration of the profile f(t) = exp(-it<nabla>) h(t), which solves

    d_t f = exp(-it<nabla>) N(exp(it<nabla>) f).

The linear flow is carried exactly by the integrating factor; classical
RK4 handles the quadratic nonlinearity.  Trajectories record profiles at
multiples of a fixed stride and feed the normal-form and harness modules.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterator, List, Optional, Sequence

import numpy as np
import pandas as pd

from src.exceptions import (
    BlowUpError,
    HorizonError,
    InsufficientSnapshotsError,
    InvalidStateError,
)
from src.model import (
    DiagonalState,
    FluidState,
    ParamSet,
    nonlinearity,
    undiagonalize,
)
from src.multipliers import MultiplierSpec, apply_multiplier
from src.spectral_core import (
    GridSpec,
    SpectralField,
    lebesgue_norm,
    sobolev_norm,
    to_physical,
)

logger = logging.getLogger(__name__)

DEFAULT_DT = 0.05
DEFAULT_STRIDE = 10
TIME_MATCH_TOL = 1e-9


@dataclass(frozen=True)
class Profile:
    """Profile f at time t; its zero mode vanishes."""

    f: SpectralField
    t: float = 0.0

    def __post_init__(self):
        scale = max(1.0, float(np.max(np.abs(self.f.coeffs))))
        if abs(self.f.zero_mode) > 1e-12 * scale:
            raise InvalidStateError(
                "Profile carries a zero mode", t=self.t, zero_mode=abs(self.f.zero_mode)
            )

    @property
    def grid(self) -> GridSpec:
        return self.f.grid

    @classmethod
    def from_diagonal(cls, d: DiagonalState) -> "Profile":
        return cls(_propagate(d.h, -d.t), d.t)

    def to_diagonal(self) -> DiagonalState:
        return DiagonalState(_propagate(self.f, self.t), self.t)

    def h(self) -> SpectralField:
        return _propagate(self.f, self.t)


def _propagate(f: SpectralField, t: float) -> SpectralField:
    """exp(it<nabla>) f."""
    if t == 0:
        return f
    return SpectralField(f.grid, np.exp(1j * t * f.grid.bracket) * f.coeffs)


def _profile_rhs(f_coeffs: np.ndarray, grid: GridSpec, s: float) -> np.ndarray:
    """exp(-is<nabla>) N(exp(is<nabla>) f)."""
    rotation = np.exp(1j * s * grid.bracket)
    h = SpectralField(grid, rotation * f_coeffs)
    return np.conj(rotation) * nonlinearity(DiagonalState(h, s)).coeffs


def _check_finite(coeffs: np.ndarray, t: float, stage: int) -> None:
    if not np.all(np.isfinite(coeffs)):
        raise BlowUpError(t, stage=stage)


def _advance(p: Profile, dt: float, nonlinear: bool = True) -> Profile:
    """One integrating-factor RK4 step; dt may be negative."""
    if not nonlinear:
        return Profile(p.f, p.t + dt)
    grid = p.grid
    t = p.t
    f0 = np.asarray(p.f.coeffs)

    k1 = _profile_rhs(f0, grid, t)
    _check_finite(k1, t, 1)
    k2 = _profile_rhs(f0 + 0.5 * dt * k1, grid, t + 0.5 * dt)
    _check_finite(k2, t, 2)
    k3 = _profile_rhs(f0 + 0.5 * dt * k2, grid, t + 0.5 * dt)
    _check_finite(k3, t, 3)
    k4 = _profile_rhs(f0 + dt * k3, grid, t + dt)
    _check_finite(k4, t, 4)

    f1 = f0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    _check_finite(f1, t, 5)
    f1[0, 0] = 0.0
    return Profile(SpectralField(grid, f1), t + dt)


def step(p: Profile, dt: float, nonlinear: bool = True) -> Profile:
    """
    Advance the profile by dt.

    Args:
        p: Current profile
        dt: Positive time step
        nonlinear: When False the profile is left unchanged (free flow)

    Returns:
        Profile at p.t + dt
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    return _advance(p, dt, nonlinear)


@dataclass
class Trajectory:
    """Profiles recorded every `record_stride` steps of size `dt`."""

    times: np.ndarray
    profiles: List[Profile] = field(repr=False)
    dt: float
    record_stride: int
    nonlinear: bool = True

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        if len(self.times) != len(self.profiles):
            raise InvalidStateError(
                "Times and profiles differ in length",
                times=len(self.times),
                profiles=len(self.profiles),
            )
        for t, p in zip(self.times, self.profiles):
            if abs(t - p.t) > TIME_MATCH_TOL * max(1.0, abs(t)):
                raise InvalidStateError("Profile timestamp mismatch", t=t, profile_t=p.t)
        if len(self.times) > 1 and np.any(np.diff(self.times) <= 0):
            raise InvalidStateError("Trajectory times must increase")

    def __len__(self) -> int:
        return len(self.profiles)

    @property
    def grid(self) -> GridSpec:
        return self.profiles[0].grid

    @property
    def spacing(self) -> float:
        """Time between recorded snapshots."""
        return self.dt * self.record_stride

    def index_of(self, t: float) -> int:
        idx = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[idx] - t) > TIME_MATCH_TOL * max(1.0, abs(t)):
            raise InvalidStateError("No snapshot recorded at the requested time", t=t)
        return idx

    def at(self, t: float) -> Profile:
        return self.profiles[self.index_of(t)]

    def until(self, t: float) -> "Trajectory":
        """Snapshots on [0, t]."""
        end = self.index_of(t) + 1
        return Trajectory(
            self.times[:end],
            self.profiles[:end],
            self.dt,
            self.record_stride,
            self.nonlinear,
        )

    def diagonal_states(self) -> Iterator[DiagonalState]:
        for p in self.profiles:
            yield p.to_diagonal()

    def fluid_states(self) -> Iterator[FluidState]:
        for d in self.diagonal_states():
            yield undiagonalize(d)


def run(
    data: DiagonalState,
    t_end: float,
    dt: float = DEFAULT_DT,
    record_stride: int = DEFAULT_STRIDE,
    nonlinear: bool = True,
    on_record: Optional[Callable[[Profile], None]] = None,
) -> Trajectory:
    """
    Integrate from data.t = 0 to t_end and record every record_stride steps.

    Raises:
        HorizonError: t_end beyond the wrap-around horizon 0.45 L
        BlowUpError: non-finite values, with the last finite norms attached
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if record_stride < 1:
        raise ValueError(f"record_stride must be >= 1, got {record_stride}")
    t_wrap = data.grid.wrap_horizon()
    if t_end > t_wrap:
        raise HorizonError(t_end, t_wrap)
    n_steps = int(round(t_end / dt))
    if abs(n_steps * dt - t_end) > TIME_MATCH_TOL * max(1.0, t_end):
        raise ValueError(f"t_end={t_end} is not a multiple of dt={dt}")
    if n_steps % record_stride:
        logger.warning(
            f"Final step {n_steps} is not a multiple of the stride {record_stride}; "
            f"the last recorded time is {dt * record_stride * (n_steps // record_stride)}"
        )

    t0 = data.t
    current = Profile.from_diagonal(data)
    profiles = [current]
    if on_record:
        on_record(current)

    logger.info(
        f"Integrating to t={t_end} with dt={dt} ({n_steps} steps, stride "
        f"{record_stride}, nonlinear={nonlinear})"
    )
    for k in range(1, n_steps + 1):
        try:
            nxt = _advance(current, dt, nonlinear)
        except BlowUpError as e:
            last = {
                "l2": current.f.l2_norm(),
                "h1": sobolev_norm(current.f, 1.0),
            }
            logger.error(f"Blow-up at t={current.t:.6g}; last finite norms {last}")
            raise BlowUpError(current.t, last, e.context.get("stage")) from e
        # pin the clock to the step grid
        current = Profile(nxt.f, t0 + k * dt)
        if k % record_stride == 0:
            profiles.append(current)
            if on_record:
                on_record(current)
            logger.debug(f"t={current.t:.4f} |f|_2={current.f.l2_norm():.6g}")

    traj = Trajectory(
        np.array([p.t for p in profiles]), profiles, dt, record_stride, nonlinear
    )
    logger.info(
        f"Run complete: {len(traj)} snapshots, final |f|_2={current.f.l2_norm():.6g}"
    )
    return traj


def _require(traj: Trajectory, needed: int, operation: str) -> None:
    if len(traj) < needed:
        raise InsufficientSnapshotsError(needed, len(traj), operation)


def partial_t_f_decay(traj: Trajectory, params: Optional[ParamSet] = None) -> pd.Series:
    """
    ||exp(it<nabla>) d_t f||_{L^q} = ||N(h)||_{L^q} per snapshot, q = params.q.

    The equation gives d_t f exactly, so no time differences are taken.
    """
    _require(traj, 5, "partial_t_f_decay")
    params = params or ParamSet()
    values = []
    for d in traj.diagonal_states():
        if not traj.nonlinear:
            values.append(0.0)
            continue
        values.append(lebesgue_norm(nonlinearity(d), params.q))
    return pd.Series(values, index=pd.Index(traj.times, name="t"), name="dtf_lq")


def _sup_gradient(f: SpectralField) -> float:
    parts = [
        to_physical(apply_multiplier(MultiplierSpec.partial(j), f)) for j in (1, 2)
    ]
    return float(np.max(np.sqrt(sum(np.abs(p) ** 2 for p in parts))))


def dissipation_weight(d: DiagonalState) -> float:
    """D(t) = ||grad h||_inf + ||<nabla> u||_inf + ||d v||_inf."""
    state = undiagonalize(d)
    bracket_u = to_physical(apply_multiplier(MultiplierSpec.bracket_power(1.0), state.u))
    dv = [
        to_physical(apply_multiplier(MultiplierSpec.partial(i), v))
        for v in (state.v1, state.v2)
        for i in (1, 2)
    ]
    dv_sup = float(np.max(np.sqrt(sum(np.abs(c) ** 2 for c in dv))))
    return _sup_gradient(d.h) + float(np.max(np.abs(bracket_u))) + dv_sup


def sup_decay_norm(h: SpectralField) -> float:
    """|| |nabla|^(1/2) <nabla> h ||_inf."""
    m = MultiplierSpec.abs_grad_power(0.5) * MultiplierSpec.bracket_power(1.0)
    return lebesgue_norm(apply_multiplier(m, h), np.inf)


@dataclass
class EnergyReport:
    frame: pd.DataFrame
    max_ratio: float
    max_domination: float

    def to_dict(self) -> Dict[str, float]:
        return {"max_ratio": self.max_ratio, "max_domination": self.max_domination}


def energy_growth_check(
    traj: Trajectory, params: Optional[ParamSet] = None
) -> EnergyReport:
    """
    Ratio (d/dt ||h||_{H^N}^2) / (D(t) ||h||_{H^N}^2) and the domination
    ratio D(t) / || |nabla|^(1/2) <nabla> h ||_inf per snapshot.
    """
    _require(traj, 3, "energy_growth_check")
    params = params or ParamSet()
    energy = np.array([sobolev_norm(p.f, params.n_top) ** 2 for p in traj.profiles])
    rate = np.gradient(energy, traj.spacing, edge_order=2)

    weights, sups = [], []
    for d in traj.diagonal_states():
        weights.append(dissipation_weight(d))
        sups.append(sup_decay_norm(d.h))
    weights = np.array(weights)
    sups = np.array(sups)

    denominator = weights * energy
    ratio = np.divide(rate, denominator, out=np.zeros_like(rate), where=denominator > 0)
    domination = np.divide(weights, sups, out=np.zeros_like(weights), where=sups > 0)
    frame = pd.DataFrame(
        {
            "energy": energy,
            "energy_rate": rate,
            "dissipation_weight": weights,
            "sup_decay": sups,
            "ratio": ratio,
            "domination": domination,
        },
        index=pd.Index(traj.times, name="t"),
    )
    return EnergyReport(
        frame=frame,
        max_ratio=float(np.max(np.abs(ratio))),
        max_domination=float(np.max(domination)),
    )


@dataclass
class ScatteringReport:
    times: List[float]
    increments: List[float]
    monotone: bool
    final_ratio: float
    passed: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def scattering_check(
    traj: Trajectory,
    times: Optional[Sequence[float]] = None,
    params: Optional[ParamSet] = None,
    slack: float = 0.1,
    final_fraction: float = 0.2,
    strict: bool = False,
) -> ScatteringReport:
    """
    Cauchy increments ||f(t_{j+1}) - f(t_j)||_{H^{N'}} at dyadic-ish times.

    Defaults to T/8, T/4, T/2, T for the last recorded time T. With strict
    the increments must decrease strictly and slack is ignored; a run whose
    increments all vanish (free flow) passes either way.
    """
    params = params or ParamSet()
    if times is None:
        t_last = float(traj.times[-1])
        times = [t_last / 8.0, t_last / 4.0, t_last / 2.0, t_last]
    if len(times) < 3:
        raise InsufficientSnapshotsError(3, len(times), "scattering_check")
    snapshots = [traj.at(t) for t in times]
    increments = [
        sobolev_norm(b.f - a.f, params.n_prime)
        for a, b in zip(snapshots[:-1], snapshots[1:])
    ]
    pairs = list(zip(increments[:-1], increments[1:]))
    if not any(increments):
        monotone = True
    elif strict:
        monotone = all(later < earlier for earlier, later in pairs)
    else:
        monotone = all(later <= (1.0 + slack) * earlier for earlier, later in pairs)
    final_ratio = increments[-1] / increments[0] if increments[0] > 0 else 0.0
    return ScatteringReport(
        times=list(map(float, times)),
        increments=increments,
        monotone=monotone,
        final_ratio=final_ratio,
        passed=monotone and final_ratio <= final_fraction,
    )


def time_reversal_check(
    p: Profile, t_total: float, dt: float, nonlinear: bool = True
) -> float:
    """Step to p.t + t_total and back; relative L^2 mismatch with p."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    n_steps = int(round(t_total / dt))
    current = p
    for _ in range(n_steps):
        current = _advance(current, dt, nonlinear)
    for _ in range(n_steps):
        current = _advance(current, -dt, nonlinear)
    mismatch = (current.f - p.f).l2_norm()
    scale = p.f.l2_norm()
    return mismatch / scale if scale > 0 else mismatch


def norm_increment_series(traj: Trajectory, amplitude: float) -> pd.DataFrame:
    """
    Per-step change of ||h||_2 between snapshots and the constant C in
    |change| <= C eps^3 dt (column `constant`).
    """
    _require(traj, 2, "norm_increment_series")
    norms = np.array([p.f.l2_norm() for p in traj.profiles])
    per_step = np.abs(np.diff(norms)) / traj.record_stride
    scale = amplitude**3 * traj.dt
    constant = per_step / scale if scale > 0 else np.zeros_like(per_step)
    return pd.DataFrame(
        {"l2": norms[1:], "per_step_change": per_step, "constant": constant},
        index=pd.Index(traj.times[1:], name="t"),
    )
