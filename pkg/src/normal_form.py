"""
Normal Form Module

Integration by parts in time on the profile equation

    d_s f^(xi) = sum_c T_{exp(-is phi_c) K_c}(F_c1, F_c2)

gives the decomposition f(t) = h0~ + g(t) + f_cubic(t) with

    h0~      = h0 + sum_c T_{K_c / (i phi_c)}(h0_c1, h0_c2)
    g(t)     = sum_c T_{exp(-it phi_c) K_c / (-i phi_c)}(F_c1(t), F_c2(t))
    f_cubic  = sum_c int_0^t T_{exp(-is phi_c) K_c / (i phi_c)}(d_s(F_c1 F_c2)) ds

where F_+ = f^ and F_- is its reflected conjugate.  d_s F_c is expanded
with the same quadratic catalogue, which makes the cubic term a sum of 32
trilinear pieces (4 outer patterns x 2 differentiated slots x 4 inner
patterns) over the 8 cubic phases.

Every exponential exp(-is Phi) splits into a factor of the output frequency
and one factor per input, so at each node s the inputs are the fields
X_c = exp(ics<nabla>) F_c (h itself for c = +1) and the output is rotated
by exp(-is<xi>).
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from src.exceptions import InsufficientSnapshotsError, QuadratureError
from src.integrator import Profile, Trajectory
from src.model import ParamSet
from src.norms import compute_x1_components
from src.phase_geometry import PhaseSpec, SignCombo, quadratic_combos
from src.pseudoproduct import (
    BilinearSymbol,
    SeparableTerm,
    TrilinearSymbol,
    bilinear_apply,
    combo_of,
    conjugated,
    divided_symbol,
    inner_kernel,
    m0_symbol,
    m1_symbol,
    quadratic_terms,
    trilinear_apply,
)
from src.spectral_core import (
    GridSpec,
    SpectralField,
    drop_nyquist,
    lebesgue_norm,
    restrict,
    sobolev_norm,
    weighted_profile_norm,
)

logger = logging.getLogger(__name__)

SLOTS = ("eta", "difference")


def _wave_field(p: Profile, c: int) -> SpectralField:
    """X_c = exp(ics<nabla>) F_c at the profile time."""
    return conjugated(p.h(), c)


def _finish(coeffs: np.ndarray, grid: GridSpec) -> SpectralField:
    out = np.where(grid.resolved_mask, coeffs, 0.0)
    out[0, 0] = 0.0
    return SpectralField(grid, out)


# ---------------------------------------------------------------------------
# Time quadrature
# ---------------------------------------------------------------------------


def simpson_weights(count: int, spacing: float) -> np.ndarray:
    """Composite Simpson weights for `count` equally spaced nodes."""
    if count < 3 or count % 2 == 0:
        raise QuadratureError(
            "Composite Simpson needs an odd number (>= 3) of snapshots", count=count
        )
    weights = np.full(count, 2.0)
    weights[1::2] = 4.0
    weights[0] = weights[-1] = 1.0
    return weights * spacing / 3.0


def _nodes(traj: Trajectory, t: float) -> Trajectory:
    sub = traj.until(t)
    if len(sub) > 2:
        steps = np.diff(sub.times)
        if np.max(np.abs(steps - steps[0])) > 1e-9 * max(1.0, steps[0]):
            raise QuadratureError("Snapshots are not uniformly spaced", t=t)
    return sub


def _integrate(traj: Trajectory, t: float, integrand) -> SpectralField:
    sub = _nodes(traj, t)
    grid = sub.grid
    if t == 0 or len(sub) == 1:
        return SpectralField.zeros(grid, is_real=False)
    weights = simpson_weights(len(sub), sub.spacing)
    total = np.zeros(grid.shape, dtype=complex)
    for w, p in zip(weights, sub.profiles):
        total += w * integrand(p).coeffs
    return _finish(total, grid)


# ---------------------------------------------------------------------------
# Quadratic pieces
# ---------------------------------------------------------------------------


def oscillating_symbol(combo: SignCombo, s: float, base: BilinearSymbol) -> BilinearSymbol:
    """exp(-is phi_combo(xi, eta)) * base(xi, eta), acting on profile inputs."""
    phase = PhaseSpec(combo)
    e2, e3 = combo.signs
    factorization = None
    if base.factorization is not None:
        factorization = tuple(
            SeparableTerm(
                output=lambda z, t=term: np.exp(-1j * s * np.sqrt(1.0 + np.sum(z * z, -1)))
                * (t.output(z) if t.output else 1.0),
                left=lambda z, t=term: np.exp(-1j * s * e2 * np.sqrt(1.0 + np.sum(z * z, -1)))
                * (t.left(z) if t.left else 1.0),
                right=lambda z, t=term: np.exp(-1j * s * e3 * np.sqrt(1.0 + np.sum(z * z, -1)))
                * (t.right(z) if t.right else 1.0),
            )
            for term in base.factorization
        )
    return BilinearSymbol(
        lambda xi, eta: np.exp(-1j * s * phase.evaluate(xi, eta)) * base(xi, eta),
        factorization,
        f"exp(-i{s}phi){base.name}",
    )


def quadratic_integrand(p: Profile, fast_path: bool = True) -> SpectralField:
    """sum_c T_{exp(-is phi_c) m0_c}(F_c1, F_c2), which equals d_s f^ at s = p.t."""
    grid = p.grid
    total = np.zeros(grid.shape, dtype=complex)
    for term in quadratic_terms():
        symbol = oscillating_symbol(term.combo, p.t, term.kernel)
        left, right = term.inputs(p.f)
        total += bilinear_apply(symbol, left, right, fast_path=fast_path).coeffs
    return _finish(total, grid)


def duhamel_rhs(traj: Trajectory, t: float, fast_path: bool = True) -> SpectralField:
    """
    int_0^t d_s f ds from the quadratic catalogue by composite Simpson over
    the recorded snapshots (the right side minus h0).
    """
    return _integrate(traj, t, lambda p: quadratic_integrand(p, fast_path))


def duhamel_residual(traj: Trajectory, t: float, fast_path: bool = True) -> float:
    """||f(t) - h0 - duhamel_rhs|| / ||f(t) - h0||."""
    increment = traj.at(t).f - traj.profiles[0].f
    mismatch = (increment - duhamel_rhs(traj, t, fast_path)).l2_norm()
    scale = increment.l2_norm()
    return mismatch / scale if scale > 0 else mismatch


def _boundary_sum(p: Profile, factor: complex, support_tol: float) -> SpectralField:
    grid = p.grid
    total = np.zeros(grid.shape, dtype=complex)
    for term in quadratic_terms():
        base = divided_symbol(term.combo, factor)
        symbol = oscillating_symbol(term.combo, p.t, base)
        left, right = term.inputs(p.f)
        total += bilinear_apply(symbol, left, right, support_tol=support_tol).coeffs
    return _finish(total, grid)


def transformed_data(h0: SpectralField, support_tol: float = 0.0) -> SpectralField:
    """h0~ = h0 + sum_c T_{m0_c/(i phi_c)}(h0_c1, h0_c2)."""
    correction = _boundary_sum(Profile(h0, 0.0), 1j, support_tol)
    return _finish((h0 + correction).coeffs, h0.grid)


def boundary_term_g(p: Profile, support_tol: float = 0.0) -> SpectralField:
    """g(t) = sum_c T_{exp(-it phi_c) m0_c/(-i phi_c)}(F_c1(t), F_c2(t))."""
    return _boundary_sum(p, -1j, support_tol)


# ---------------------------------------------------------------------------
# Cubic piece
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CubicTerm:
    """
    One trilinear piece of the cubic term.

    `outer_field` is the conjugation of the undifferentiated factor (in the
    xi - eta slot after the slot swap), `inner_fields` those of the two
    factors produced by d_s F_sign, and `combo` the cubic phase signs.
    """

    outer: SignCombo
    slot: str
    inner: SignCombo
    sign: int
    outer_field: int
    inner_fields: tuple
    combo: SignCombo

    def symbol(self) -> TrilinearSymbol:
        return m1_symbol(self.outer, self.inner, self.slot, self.sign)

    def label(self) -> str:
        return f"{self.outer}:{self.slot}:{self.inner}"


def cubic_term_table() -> List[CubicTerm]:
    """All 32 cubic pieces, generated by substituting d_s F into each slot."""
    table = []
    for c1, c2 in itertools.product((1, -1), repeat=2):
        outer = combo_of(c1, c2)
        for slot in SLOTS:
            undiff, sign = (c1, c2) if slot == "eta" else (c2, c1)
            for d1, d2 in itertools.product((1, -1), repeat=2):
                table.append(
                    CubicTerm(
                        outer=outer,
                        slot=slot,
                        inner=combo_of(d1, d2),
                        sign=sign,
                        outer_field=undiff,
                        inner_fields=(sign * d1, sign * d2),
                        combo=SignCombo((-undiff, -sign * d1, -sign * d2)),
                    )
                )
    return table


def _signed_kernel(combo: SignCombo, sign: int) -> BilinearSymbol:
    # conj(K(-xi, -eta)) = -K(xi, eta): K is imaginary and even under joint negation
    base = m0_symbol(combo)
    terms = base.factorization
    if sign < 0:
        terms = tuple(
            SeparableTerm(
                output=lambda z, t=term: -t.output(z), left=term.left, right=term.right
            )
            for term in terms
        )
    return BilinearSymbol(inner_kernel(combo, sign).evaluator, terms, base.name)


def _nested_integrand(p: Profile) -> SpectralField:
    """Cubic integrand at s = p.t through nested bilinear applications."""
    grid = p.grid
    waves = {c: _wave_field(p, c) for c in (1, -1)}

    # sum_d T_{b_d}(X_{sign d1}, X_{sign d2}) for each conjugation sign
    inner_sum = {}
    for sign in (1, -1):
        acc = np.zeros(grid.shape, dtype=complex)
        for d1, d2 in itertools.product((1, -1), repeat=2):
            kernel = _signed_kernel(combo_of(d1, d2), sign)
            acc += bilinear_apply(
                kernel, waves[sign * d1], waves[sign * d2], fast_path=True
            ).coeffs
        inner_sum[sign] = SpectralField(grid, np.where(grid.resolved_mask, acc, 0.0))

    total = np.zeros(grid.shape, dtype=complex)
    for c1, c2 in itertools.product((1, -1), repeat=2):
        outer = combo_of(c1, c2)
        for slot in SLOTS:
            undiff, sign = (c1, c2) if slot == "eta" else (c2, c1)
            a = divided_symbol(outer, 1j, swap=(slot == "difference"))
            total += bilinear_apply(a, waves[undiff], inner_sum[sign]).coeffs
    return _finish(np.exp(-1j * p.t * grid.bracket) * total, grid)


def _cubic_phase_symbol(term: CubicTerm, s: float) -> TrilinearSymbol:
    m1 = term.symbol()
    phase = PhaseSpec(term.combo)
    return TrilinearSymbol(
        lambda xi, eta, sigma: np.exp(-1j * s * phase.evaluate(xi, eta, sigma))
        * m1(xi, eta, sigma),
        None,
        f"exp(-is Phi){m1.name}",
    )


def _direct_integrand(p: Profile) -> SpectralField:
    """Cubic integrand from the 32-term table with direct trilinear sums."""
    grid = p.grid
    profiles = {1: p.f, -1: p.f.conj_reflect()}
    total = np.zeros(grid.shape, dtype=complex)
    for term in cubic_term_table():
        symbol = _cubic_phase_symbol(term, p.t)
        total += trilinear_apply(
            symbol,
            profiles[term.outer_field],
            profiles[term.inner_fields[0]],
            profiles[term.inner_fields[1]],
            resolved=True,
        ).coeffs
    return _finish(total, grid)


def cubic_term(traj: Trajectory, t: float, method: str = "nested") -> SpectralField:
    """
    f_cubic(t) by composite Simpson over the snapshots.

    method="nested" uses the a(xi, eta) b(eta, sigma) structure; "direct"
    sums the 32 trilinear pieces (small grids only).
    """
    if method == "nested":
        integrand = _nested_integrand
    elif method == "direct":
        integrand = _direct_integrand
    else:
        raise ValueError(f"Unknown cubic method: {method}")
    return _integrate(traj, t, integrand)


# ---------------------------------------------------------------------------
# Decomposition
# ---------------------------------------------------------------------------


@dataclass
class Decomposition:
    t: float
    h0_tilde: SpectralField = field(repr=False)
    g: SpectralField = field(repr=False)
    f_cubic: SpectralField = field(repr=False)
    residual: float
    relative_residual: float
    snapshot_spacing: float
    amplitude: float

    @property
    def budget_constant(self) -> float:
        """C in residual <= C (dt_snap^4 + eps^4)."""
        scale = self.snapshot_spacing**4 + self.amplitude**4
        return self.residual / scale if scale > 0 else 0.0

    def to_dict(self) -> Dict[str, float]:
        return {
            "t": self.t,
            "h0_tilde_l2": self.h0_tilde.l2_norm(),
            "g_l2": self.g.l2_norm(),
            "f_cubic_l2": self.f_cubic.l2_norm(),
            "residual": self.residual,
            "relative_residual": self.relative_residual,
            "snapshot_spacing": self.snapshot_spacing,
            "amplitude": self.amplitude,
            "budget_constant": self.budget_constant,
        }


def decompose(traj: Trajectory, t: float, method: str = "nested") -> Decomposition:
    """Assemble h0~, g(t), f_cubic(t) and the residual against f(t)."""
    h0 = traj.profiles[0].f
    target = traj.at(t)
    h0_tilde = transformed_data(h0)
    g = boundary_term_g(target)
    f_cubic = cubic_term(traj, t, method)
    residual = (target.f - h0_tilde - g - f_cubic).l2_norm()
    scale = target.f.l2_norm()
    amplitude = lebesgue_norm(h0, np.inf)
    result = Decomposition(
        t=t,
        h0_tilde=h0_tilde,
        g=g,
        f_cubic=f_cubic,
        residual=residual,
        relative_residual=residual / scale if scale > 0 else residual,
        snapshot_spacing=traj.spacing,
        amplitude=amplitude,
    )
    logger.info(
        f"Decomposition at t={t}: residual {residual:.3e} "
        f"(relative {result.relative_residual:.3e})"
    )
    return result


# ---------------------------------------------------------------------------
# Scans on full-size runs
# ---------------------------------------------------------------------------


def _coarsen(p: Profile, modes: Optional[int]) -> Profile:
    grid = p.grid
    if modes is None or modes >= grid.nx:
        return p
    small = GridSpec(modes, modes, grid.box_length)
    f = drop_nyquist(SpectralField(small, restrict(np.asarray(p.f.coeffs), small.shape)))
    return Profile(f, p.t)


def g_decay_scan(
    traj: Trajectory,
    params: Optional[ParamSet] = None,
    support_tol: float = 1e-10,
    modes: Optional[int] = None,
    every: int = 1,
) -> pd.DataFrame:
    """
    ||g||_{H^N'}, ||g||_{H^(N'/2)}, <t> ||g||_{H^(N'/2)} and ||<x> g||_{L^(2+eps1)}
    at recorded times.

    `modes` restricts profiles to the central modes x modes sub-lattice of
    the same box before the bilinear sums; `support_tol` skips modes below
    that fraction of the peak coefficient.
    """
    if len(traj) < 1:
        raise InsufficientSnapshotsError(1, 0, "g_decay_scan")
    params = params or ParamSet()
    rows = []
    times = []
    for p in traj.profiles[::every]:
        g = boundary_term_g(_coarsen(p, modes), support_tol)
        half = sobolev_norm(g, params.n_prime / 2.0)
        rows.append(
            {
                "g_hNprime": sobolev_norm(g, params.n_prime),
                "g_hNprime_half": half,
                "t_g_hNprime_half": np.sqrt(1.0 + p.t**2) * half,
                "g_weighted": weighted_profile_norm(g, 2.0 + params.eps1),
            }
        )
        times.append(p.t)
        logger.debug(f"g scan t={p.t:.3f}: |g|_H^(N'/2)={half:.4g}")
    return pd.DataFrame(rows, index=pd.Index(times, name="t"))


def g_x1_components(
    traj: Trajectory,
    params: Optional[ParamSet] = None,
    support_tol: float = 1e-10,
    modes: Optional[int] = None,
    every: int = 1,
) -> pd.DataFrame:
    """X_1 components of exp(it<nabla>) g(t) at recorded times."""
    params = params or ParamSet()
    rows, times = [], []
    for p in traj.profiles[::every]:
        coarse = _coarsen(p, modes)
        g = boundary_term_g(coarse, support_tol)
        rows.append(compute_x1_components(Profile(g, p.t), params))
        times.append(p.t)
    return pd.DataFrame(rows, index=pd.Index(times, name="t"))


# ---------------------------------------------------------------------------
# Identity checks
# ---------------------------------------------------------------------------


def ibp_identity_check(
    samples: int = 1000, radius: float = 10.0, seed: int = 0, step: float = 1e-6
) -> Dict[str, Dict[str, float]]:
    """
    d/ds [exp(-is phi)/(-i phi)] = exp(-is phi) per quadratic combo, with the
    derivative taken in closed form and by central differences.
    """
    rng = np.random.default_rng(seed)
    xi = rng.uniform(-radius, radius, (samples, 2))
    eta = rng.uniform(-radius, radius, (samples, 2))
    s = rng.uniform(0.0, 10.0, samples)
    report = {}
    for combo in quadratic_combos():
        phi = PhaseSpec(combo).evaluate(xi, eta)

        def antiderivative(x):
            return np.exp(-1j * x * phi) / (-1j * phi)

        target = np.exp(-1j * s * phi)
        closed = (-1j * phi) * np.exp(-1j * s * phi) / (-1j * phi)
        differenced = (antiderivative(s + step) - antiderivative(s - step)) / (2 * step)
        report[combo.label()] = {
            "closed_form": float(np.max(np.abs(closed - target))),
            "finite_difference": float(np.max(np.abs(differenced - target))),
        }
    return report


def change_of_variable_residual(
    symbol: BilinearSymbol, F: SpectralField, G: SpectralField
) -> float:
    """|| T_m(F, G) - T_{m(xi, xi - eta)}(G, F) ||_2, zero up to rounding."""
    swapped = BilinearSymbol(lambda xi, eta: symbol(xi, xi - eta), None, symbol.name + "~")
    return (bilinear_apply(symbol, F, G) - bilinear_apply(swapped, G, F)).l2_norm()
