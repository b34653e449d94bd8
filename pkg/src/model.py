"""
Euler-Poisson Model Module

The rescaled electron Euler-Poisson system (gamma = 3, physical constants
set to one)

    d_t u + div v + div(u v) = 0
    d_t v + grad u + grad(u^2/2 + |v|^2/2) = grad psi
    Laplace psi = u

for an irrotational, neutral perturbation, and its diagonalization to the
complex scalar

    h = (<nabla>/|nabla|) u + i (nabla/|nabla|) . v

which solves d_t h = i<nabla> h + N(h) with

    N(h) = -(<nabla> nabla/|nabla|) . (u v) + (i/2) |nabla| (u^2 + |v|^2).

States live on the modes off the Nyquist rows (GridSpec.resolved_mask):
Riesz transforms vanish there, so velocity content on those rows could not
be recovered from h.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.exceptions import (
    ConfigurationError,
    InsufficientSnapshotsError,
    InvalidStateError,
    NeutralityViolationError,
    ProfileSupportError,
    RotationalFlowError,
)
from src.multipliers import MultiplierSpec, apply_multiplier
from src.spectral_core import (
    GridSpec,
    SpectralField,
    dealiased_product,
    drop_nyquist,
    from_physical,
    sobolev_norm,
    to_physical,
)

logger = logging.getLogger(__name__)

NEUTRALITY_RTOL = 1e-12
CURL_RTOL = 1e-10
SUPPORT_LIMIT = 0.01

# (<nabla>/|nabla|) and its inverse
_BRACKET_OVER_GRAD = MultiplierSpec.bracket_power(1.0) * MultiplierSpec.abs_grad_power(
    -1.0
)
_GRAD_OVER_BRACKET = MultiplierSpec.abs_grad_power(1.0) * MultiplierSpec.bracket_power(
    -1.0
)


def _zero_mode_tolerance(f: SpectralField) -> float:
    return NEUTRALITY_RTOL * max(1.0, float(np.max(np.abs(f.coeffs))))


@dataclass(frozen=True)
class ParamSet:
    """
    Desk-scale stand-ins for the norm exponents and small parameters.

    n_top is the top Sobolev index N, n_prime the intermediate index N',
    n_one stands in for the universal constant N_1.
    """

    n_top: float = 8.0
    n_prime: float = 4.0
    n_one: float = 2.0
    delta1: float = 0.05
    delta2: float = 0.4
    eps1: float = 0.1

    @property
    def q(self) -> float:
        return self.n_one / self.eps1

    def problems(self) -> List[str]:
        found = []
        if not self.n_one < self.n_prime < self.n_top:
            found.append("ordering n_one < n_prime < n_top violated")
        if not 0 < self.eps1 < self.delta2 / self.n_one < self.delta2 < 1:
            found.append("ordering eps1 < delta2/n_one < delta2 < 1 violated")
        if not 0 < self.delta1 < self.delta2 / self.n_one:
            found.append("ordering delta1 < delta2/n_one violated")
        return found

    def validate(self) -> "ParamSet":
        found = self.problems()
        if found:
            raise ConfigurationError(
                f"Invalid parameter set: {'; '.join(found)}",
                missing_keys=None,
            )
        return self

    def to_dict(self) -> Dict[str, float]:
        data = asdict(self)
        data["q"] = self.q
        return data


@dataclass(frozen=True)
class FluidState:
    """Rescaled density perturbation u and velocity (v1, v2)."""

    u: SpectralField
    v1: SpectralField
    v2: SpectralField

    @property
    def grid(self) -> GridSpec:
        return self.u.grid

    @property
    def psi(self) -> SpectralField:
        return poisson_solve(self.u)

    @classmethod
    def from_potential(cls, u: SpectralField, phi1: SpectralField) -> "FluidState":
        """State with velocity v = grad phi1."""
        return cls(
            u,
            apply_multiplier(MultiplierSpec.partial(1), phi1),
            apply_multiplier(MultiplierSpec.partial(2), phi1),
        )

    def curl(self) -> SpectralField:
        return apply_multiplier(MultiplierSpec.partial(1), self.v2) - apply_multiplier(
            MultiplierSpec.partial(2), self.v1
        )

    def velocity_norm(self) -> float:
        return math.hypot(self.v1.l2_norm(), self.v2.l2_norm())

    def validate(self, check_positivity: bool = True) -> "FluidState":
        """Raise if the state is not a neutral irrotational perturbation."""
        for f in (self.v1, self.v2):
            self.u._check_grid(f)
        if not (self.u.is_real and self.v1.is_real and self.v2.is_real):
            raise InvalidStateError("Fluid fields must be real")

        tol = _zero_mode_tolerance(self.u)
        if abs(self.u.zero_mode) > tol:
            raise NeutralityViolationError(self.u.zero_mode, tol)
        for name, v in (("v1", self.v1), ("v2", self.v2)):
            if abs(v.zero_mode) > _zero_mode_tolerance(v):
                raise InvalidStateError("Velocity has nonzero mean", component=name)

        v_norm = self.velocity_norm()
        curl_norm = self.curl().l2_norm()
        if curl_norm > CURL_RTOL * v_norm:
            raise RotationalFlowError(curl_norm, v_norm, CURL_RTOL)
        unresolved = math.hypot(
            *(
                np.linalg.norm(np.where(self.grid.resolved_mask, 0.0, v.coeffs))
                for v in (self.v1, self.v2)
            )
        )
        if unresolved > CURL_RTOL * max(v_norm * self.grid.box_length, 1e-300):
            raise RotationalFlowError(unresolved, v_norm, CURL_RTOL)

        if check_positivity:
            density = 1.0 + to_physical(self.u)
            if np.min(density) <= 0:
                raise InvalidStateError(
                    "Density 1 + u is not positive", min_density=float(np.min(density))
                )
        return self


@dataclass(frozen=True)
class DiagonalState:
    """The complex unknown h at time t."""

    h: SpectralField
    t: float = 0.0

    def __post_init__(self):
        tol = _zero_mode_tolerance(self.h)
        if abs(self.h.zero_mode) > tol:
            raise InvalidStateError(
                "Diagonal state carries a zero mode", zero_mode=abs(self.h.zero_mode)
            )

    @property
    def grid(self) -> GridSpec:
        return self.h.grid


def poisson_solve(u: SpectralField) -> SpectralField:
    """psi with Laplace psi = u on nonzero modes, psi(0) = 0."""
    tol = _zero_mode_tolerance(u)
    if abs(u.zero_mode) > tol:
        raise NeutralityViolationError(u.zero_mode, tol)
    return apply_multiplier(MultiplierSpec.inverse_laplacian(), u)


def velocity_potential(v1: SpectralField, v2: SpectralField) -> SpectralField:
    """Mean-zero phi1 with grad phi1 = v for irrotational v."""
    divergence = apply_multiplier(MultiplierSpec.partial(1), v1) + apply_multiplier(
        MultiplierSpec.partial(2), v2
    )
    return apply_multiplier(MultiplierSpec.inverse_laplacian(), divergence)


def diagonalize(state: FluidState, t: float = 0.0, validate: bool = True) -> DiagonalState:
    if validate:
        state.validate(check_positivity=False)
    h1 = apply_multiplier(_BRACKET_OVER_GRAD, state.u)
    h2 = apply_multiplier(MultiplierSpec.riesz(1), state.v1) + apply_multiplier(
        MultiplierSpec.riesz(2), state.v2
    )
    return DiagonalState(SpectralField(state.grid, h1.coeffs + 1j * h2.coeffs), t)


def undiagonalize(d: DiagonalState) -> FluidState:
    """u = (|nabla|/<nabla>) Re h, v = -(nabla/|nabla|) Im h."""
    h1 = d.h.real_part()
    h2 = d.h.imag_part()
    return FluidState(
        apply_multiplier(_GRAD_OVER_BRACKET, h1),
        -apply_multiplier(MultiplierSpec.riesz(1), h2),
        -apply_multiplier(MultiplierSpec.riesz(2), h2),
    )


def pair_to_h(u: SpectralField, phi1: SpectralField) -> SpectralField:
    """(<nabla>/|nabla|) u - i |nabla| phi1, the diagonal variable of (u, grad phi1)."""
    h1 = apply_multiplier(_BRACKET_OVER_GRAD, u)
    h2 = apply_multiplier(MultiplierSpec.abs_grad_power(1.0), phi1)
    return SpectralField(u.grid, h1.coeffs - 1j * h2.coeffs)


def _quadratic_products(state: FluidState) -> Tuple[SpectralField, SpectralField, SpectralField]:
    uv1 = dealiased_product(state.u, state.v1)
    uv2 = dealiased_product(state.u, state.v2)
    energy = (
        dealiased_product(state.u, state.u)
        + dealiased_product(state.v1, state.v1)
        + dealiased_product(state.v2, state.v2)
    )
    return uv1, uv2, energy


def nonlinearity(d: DiagonalState) -> SpectralField:
    """N(h); the zero mode and the Nyquist rows of the result are exactly 0."""
    state = undiagonalize(d)
    uv1, uv2, energy = _quadratic_products(state)
    transport = apply_multiplier(
        _BRACKET_OVER_GRAD * MultiplierSpec.partial(1), uv1
    ) + apply_multiplier(_BRACKET_OVER_GRAD * MultiplierSpec.partial(2), uv2)
    pressure = apply_multiplier(MultiplierSpec.abs_grad_power(1.0), energy)
    coeffs = -transport.coeffs + 0.5j * pressure.coeffs
    return drop_nyquist(SpectralField(d.grid, coeffs))


def diagonal_time_derivative(d: DiagonalState) -> SpectralField:
    """d_t h = i<nabla> h + N(h)."""
    linear = 1j * d.grid.bracket * d.h.coeffs
    return SpectralField(d.grid, linear + nonlinearity(d).coeffs)


def pair_time_derivative(
    u: SpectralField, phi1: SpectralField
) -> Tuple[SpectralField, SpectralField]:
    """
    Right side of the potential form

        d_t u    = -Laplace phi1 - div(u grad phi1)
        d_t phi1 = -|nabla|^-2 <nabla>^2 u - (u^2 + |grad phi1|^2)/2

    with the (gauge) zero mode of d_t phi1 set to 0.
    """
    state = FluidState.from_potential(u, phi1)
    uv1, uv2, energy = _quadratic_products(state)
    k2 = u.grid.k2
    divergence = apply_multiplier(MultiplierSpec.partial(1), uv1) + apply_multiplier(
        MultiplierSpec.partial(2), uv2
    )
    du = SpectralField(u.grid, k2 * phi1.coeffs - divergence.coeffs, True)

    restoring = apply_multiplier(
        MultiplierSpec.abs_grad_power(-2.0) * MultiplierSpec.bracket_power(2.0), u
    )
    dphi = -restoring.coeffs - 0.5 * energy.coeffs
    dphi[0, 0] = 0.0
    return du, SpectralField(u.grid, dphi, True)


def kg_residual(
    states: Sequence[FluidState], dt: float, include_nonlinear: bool = True
) -> float:
    """
    Relative residual of (box + 1) u = Laplace(u^2/2 + |v|^2/2) - d_t div(u v).

    Time derivatives use fourth-order central differences over five
    consecutive snapshots; the largest residual over all interior
    centers is returned.
    """
    if len(states) < 5:
        raise InsufficientSnapshotsError(5, len(states), "kg_residual")
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")

    grid = states[0].grid
    k2 = grid.k2
    u_hat = [s.u.coeffs for s in states]
    if include_nonlinear:
        flux_hat = []
        quad_hat = []
        for s in states:
            uv1, uv2, energy = _quadratic_products(s)
            flux_hat.append(
                apply_multiplier(MultiplierSpec.partial(1), uv1).coeffs
                + apply_multiplier(MultiplierSpec.partial(2), uv2).coeffs
            )
            quad_hat.append(0.5 * energy.coeffs)

    worst = 0.0
    for c in range(2, len(states) - 2):
        um2, um1, u0, up1, up2 = u_hat[c - 2 : c + 3]
        utt = (-um2 + 16 * um1 - 30 * u0 + 16 * up1 - up2) / (12 * dt**2)
        lhs = utt + (k2 + 1.0) * u0
        rhs = np.zeros_like(lhs)
        if include_nonlinear:
            fm2, fm1, _, fp1, fp2 = flux_hat[c - 2 : c + 3]
            flux_t = (fm2 - 8 * fm1 + 8 * fp1 - fp2) / (12 * dt)
            rhs = -k2 * quad_hat[c] - flux_t
        scale = np.linalg.norm(utt) + np.linalg.norm((k2 + 1.0) * u0)
        if scale == 0:
            continue
        worst = max(worst, float(np.linalg.norm(lhs - rhs) / scale))
    return worst


@dataclass
class InitialDataSpec:
    """Initial data: amplitude times density and potential profiles."""

    amplitude: float = 0.01
    density_profile: str = "gaussian"
    density_width: float = 4.0
    potential_profile: str = "zero"
    potential_width: float = 4.0
    center: Tuple[float, float] = (0.0, 0.0)
    wavenumber: float = 1.0
    seed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def _profile_values(
    grid: GridSpec, kind: str, width: float, spec: InitialDataSpec, rng
) -> np.ndarray:
    x = grid.x - spec.center[0]
    y = grid.y - spec.center[1]
    if kind == "zero":
        return np.zeros(grid.shape)
    envelope = np.exp(-(x**2 + y**2) / (2.0 * width**2))
    if kind == "gaussian":
        return envelope
    if kind == "packet":
        angle = rng.uniform(0.0, 2.0 * np.pi)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        kx, ky = spec.wavenumber * np.cos(angle), spec.wavenumber * np.sin(angle)
        return envelope * np.cos(kx * x + ky * y + phase)
    raise ConfigurationError(f"Unknown profile: {kind}", key=kind)


def _check_support(values: np.ndarray, grid: GridSpec) -> None:
    total = np.sum(np.abs(values))
    if total == 0:
        return
    outer = np.maximum(np.abs(grid.x), np.abs(grid.y)) > 0.4 * grid.box_length
    fraction = float(np.sum(np.abs(values[outer])) / total)
    if fraction >= SUPPORT_LIMIT:
        raise ProfileSupportError(fraction, SUPPORT_LIMIT)


def make_initial_data(
    grid: GridSpec, spec: InitialDataSpec, params: Optional[ParamSet] = None
) -> DiagonalState:
    """
    u = eps (density profile - mean), v = eps grad(potential profile).

    Profiles must be effectively supported well inside the box: at least
    1% of the mass in the outer 10% of the box is rejected.
    """
    if spec.amplitude < 0:
        raise ValueError(f"amplitude must be non-negative, got {spec.amplitude}")
    rng = np.random.default_rng(spec.seed)
    density = _profile_values(grid, spec.density_profile, spec.density_width, spec, rng)
    potential = _profile_values(
        grid, spec.potential_profile, spec.potential_width, spec, rng
    )
    _check_support(density, grid)
    _check_support(potential, grid)

    u = drop_nyquist(from_physical(spec.amplitude * density, grid))
    coeffs = np.array(u.coeffs)
    coeffs[0, 0] = 0.0
    u = u.with_coeffs(coeffs)
    phi1 = drop_nyquist(from_physical(spec.amplitude * potential, grid))
    state = FluidState.from_potential(u, phi1).validate()
    data = diagonalize(state)

    # norms imports this module
    from src.integrator import Profile
    from src.norms import compute_xnorm_components

    params = params or ParamSet()
    components = compute_xnorm_components(Profile.from_diagonal(data), params)
    logger.info(
        f"Initial data: eps={spec.amplitude}, density={spec.density_profile}, "
        f"potential={spec.potential_profile}, "
        f"|h|_L2={data.h.l2_norm():.6g}, |h|_H^N={sobolev_norm(data.h, params.n_top):.6g}"
    )
    logger.info(
        "X-norm components at t=0: "
        + ", ".join(f"{name}={value:.6g}" for name, value in components.items())
    )
    return data


@dataclass
class PhysicalVariables:
    """Unscaled density, velocity and potential for reporting."""

    density: np.ndarray = field(repr=False)
    velocity: Tuple[np.ndarray, np.ndarray] = field(repr=False)
    potential: np.ndarray = field(repr=False)
    n0: float = 1.0 / 3.0
    sound_speed: float = 1.0
    printed_sound_speed: float = math.sqrt(3.0) / 3.0

    def time_of(self, t_rescaled: float) -> float:
        return t_rescaled / self.sound_speed


def physical_variables(state: FluidState, n0: float = 1.0 / 3.0) -> PhysicalVariables:
    """
    n = n0 (1 + u), velocity = c0 v, potential = psi / 3, at physical time t / c0.

    The rescaling uses c0 = sqrt(3 n0), the value for which n0 = 1/3 gives
    unit wave speed.  The alternative reading c0 = sqrt(3) n0 is carried in
    `printed_sound_speed` for comparison only.
    """
    if not n0 > 0:
        raise ValueError(f"n0 must be positive, got {n0}")
    c0 = math.sqrt(3.0 * n0)
    return PhysicalVariables(
        density=n0 * (1.0 + to_physical(state.u)),
        velocity=(c0 * to_physical(state.v1), c0 * to_physical(state.v2)),
        potential=to_physical(state.psi) / 3.0,
        n0=n0,
        sound_speed=c0,
        printed_sound_speed=math.sqrt(3.0) * n0,
    )
