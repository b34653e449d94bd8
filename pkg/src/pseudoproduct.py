"""
Pseudoproduct Module

Bilinear and trilinear frequency-space operators

    T_m(F, G)^(xi)    = sum_eta m(xi, eta) F(xi - eta) G(eta) d(eta)
    T_m(F, G, H)^(xi) = sum_{eta, sigma} m(xi, eta, sigma)
                        F(xi - eta) G(eta - sigma) H(sigma) d(eta) d(sigma)

on the lattice of a GridSpec, with d(eta) = 1/L^2 (the measure that makes
T_1(F, G) the Fourier transform of F * G, see spectral_core).  Terms with
xi - eta (or eta - sigma) off the lattice are dropped, which is exactly
what the 3/2-padded product computes.

Also hosts the quadratic symbol catalogue of the Klein-Gordon form.  With
X_+ = h^ and X_- the reflected conjugate xi -> conj(h^(-xi)),

    N(h)^(xi) = sum_{c1, c2} T_{K_c}(X_c1, X_c2)(xi)

where the kernels K_c come from

    u^ = sum_c (|xi|/2<xi>) X_c,    v^ = sum_c -(c/2)(xi/|xi|) X_c.

For the profile f the same expansion reads d_s f^ = sum_c
T_{exp(-is phi_c) K_c}(F_c1, F_c2) with the phase
phi_c = <xi> - c1 <xi - eta> - c2 <eta>, i.e. the sign combo (-c1, -c2).
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np

from src.config import config
from src.exceptions import GridTooLargeError, PhaseDegeneracyError
from src.phase_geometry import PhaseSpec, SignCombo, bracket
from src.spectral_core import GridSpec, SpectralField, dealiased_product

logger = logging.getLogger(__name__)

PHASE_FLOOR = 1e-6

FrequencyFunction = Callable[[np.ndarray], np.ndarray]


def lattice_vectors(grid: GridSpec) -> np.ndarray:
    """Frequency vectors of the lattice, shape (nx, ny, 2), FFT order."""
    return np.stack([grid.kx, grid.ky], axis=-1)


def _norm(z: np.ndarray) -> np.ndarray:
    return np.sqrt(np.sum(z * z, axis=-1))


def _ratio(num: np.ndarray, den: np.ndarray) -> np.ndarray:
    num, den = np.broadcast_arrays(num, den)
    out = np.zeros(num.shape, dtype=np.result_type(num, float))
    np.divide(num, den, out=out, where=den != 0)
    return out


@dataclass(frozen=True)
class SeparableTerm:
    """out(xi) * left(xi - eta) * right(eta); a missing factor is 1."""

    output: Optional[FrequencyFunction] = None
    left: Optional[FrequencyFunction] = None
    right: Optional[FrequencyFunction] = None

    def __call__(self, xi: np.ndarray, eta: np.ndarray) -> np.ndarray:
        value = np.ones(np.broadcast_shapes(xi.shape[:-1], eta.shape[:-1]), complex)
        if self.output is not None:
            value = value * self.output(xi)
        if self.left is not None:
            value = value * self.left(xi - eta)
        if self.right is not None:
            value = value * self.right(eta)
        return value


@dataclass(frozen=True)
class BilinearSymbol:
    """m(xi, eta) with an optional separable factorization."""

    evaluator: Callable[[np.ndarray, np.ndarray], np.ndarray]
    factorization: Optional[Tuple[SeparableTerm, ...]] = None
    name: str = "custom"

    def __call__(self, xi: np.ndarray, eta: np.ndarray) -> np.ndarray:
        return self.evaluator(np.asarray(xi, float), np.asarray(eta, float))

    def factorization_residual(self, xi: np.ndarray, eta: np.ndarray) -> float:
        if self.factorization is None:
            raise ValueError(f"Symbol {self.name} has no factorization")
        xi, eta = np.asarray(xi, float), np.asarray(eta, float)
        summed = sum(term(xi, eta) for term in self.factorization)
        return float(np.max(np.abs(summed - self(xi, eta)), initial=0.0))


@dataclass(frozen=True)
class TrilinearSymbol:
    """m(xi, eta, sigma), optionally a(xi, eta) * b(eta, sigma)."""

    evaluator: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    factorization: Optional[Tuple[BilinearSymbol, BilinearSymbol]] = None
    name: str = "custom"

    def __call__(self, xi, eta, sigma) -> np.ndarray:
        return self.evaluator(
            np.asarray(xi, float), np.asarray(eta, float), np.asarray(sigma, float)
        )

    @classmethod
    def from_factors(
        cls, a: BilinearSymbol, b: BilinearSymbol, name: str = "product"
    ) -> "TrilinearSymbol":
        return cls(lambda xi, eta, sigma: a(xi, eta) * b(eta, sigma), (a, b), name)

    def factorization_residual(self, xi, eta, sigma) -> float:
        if self.factorization is None:
            raise ValueError(f"Symbol {self.name} has no factorization")
        a, b = self.factorization
        return float(
            np.max(np.abs(a(xi, eta) * b(eta, sigma) - self(xi, eta, sigma)), initial=0.0)
        )


def unit_symbol() -> BilinearSymbol:
    return BilinearSymbol(
        lambda xi, eta: np.ones(np.broadcast_shapes(xi.shape[:-1], eta.shape[:-1]), complex),
        (SeparableTerm(),),
        "unit",
    )


# ---------------------------------------------------------------------------
# Application
# ---------------------------------------------------------------------------


def _signed_indices(grid: GridSpec) -> Tuple[np.ndarray, np.ndarray]:
    i1, i2 = np.meshgrid(grid.index_x, grid.index_y, indexing="ij")
    return i1.ravel(), i2.ravel()


def _on_lattice(d1: np.ndarray, d2: np.ndarray, grid: GridSpec) -> np.ndarray:
    return (
        (d1 >= -(grid.nx // 2))
        & (d1 < grid.nx // 2)
        & (d2 >= -(grid.ny // 2))
        & (d2 < grid.ny // 2)
    )


def _flat(d1: np.ndarray, d2: np.ndarray, grid: GridSpec) -> np.ndarray:
    return (d1 % grid.nx) * grid.ny + (d2 % grid.ny)


def _support(coeffs: np.ndarray, tol: float) -> np.ndarray:
    magnitude = np.abs(coeffs)
    peak = np.max(magnitude, initial=0.0)
    if peak == 0:
        return np.array([], dtype=int)
    if tol <= 0:
        return np.arange(coeffs.size)
    return np.flatnonzero(magnitude > tol * peak)


def _apply_separable(
    terms: Tuple[SeparableTerm, ...], F: SpectralField, G: SpectralField
) -> np.ndarray:
    grid = F.grid
    vectors = lattice_vectors(grid)
    out = np.zeros(grid.shape, dtype=complex)
    for term in terms:
        left = F if term.left is None else F.with_coeffs(term.left(vectors) * F.coeffs, False)
        right = G if term.right is None else G.with_coeffs(term.right(vectors) * G.coeffs, False)
        product = dealiased_product(left, right).coeffs
        if term.output is not None:
            product = term.output(vectors) * product
        out += product
    return out


def _direct_bilinear(
    m: BilinearSymbol, F: SpectralField, G: SpectralField, support_tol: float
) -> np.ndarray:
    grid = F.grid
    i1, i2 = _signed_indices(grid)
    f_flat = F.coeffs.ravel()
    g_flat = G.coeffs.ravel()
    out = np.zeros(grid.nx * grid.ny, dtype=complex)

    eta_sel = _support(g_flat, support_tol)
    f_sel = _support(f_flat, support_tol)
    if eta_sel.size == 0 or f_sel.size == 0:
        return out.reshape(grid.shape)

    # outputs that the supports can reach
    reach1 = np.max(np.abs(i1[f_sel])) + np.max(np.abs(i1[eta_sel]))
    reach2 = np.max(np.abs(i2[f_sel])) + np.max(np.abs(i2[eta_sel]))
    xi_sel = np.flatnonzero((np.abs(i1) <= reach1) & (np.abs(i2) <= reach2))

    dk = grid.dk
    eta_vec = dk * np.stack([i1[eta_sel], i2[eta_sel]], axis=-1)
    g_eta = g_flat[eta_sel]
    rows = max(1, config.BILINEAR_BLOCK // eta_sel.size)
    for start in range(0, xi_sel.size, rows):
        xi_idx = xi_sel[start : start + rows]
        d1 = i1[xi_idx, None] - i1[None, eta_sel]
        d2 = i2[xi_idx, None] - i2[None, eta_sel]
        valid = _on_lattice(d1, d2, grid)
        f_diff = np.where(valid, f_flat[_flat(d1, d2, grid)], 0.0)
        xi_vec = dk * np.stack([i1[xi_idx], i2[xi_idx]], axis=-1)
        values = m(xi_vec[:, None, :], eta_vec[None, :, :])
        out[xi_idx] = (values * f_diff) @ g_eta
    return (out / grid.box_length**2).reshape(grid.shape)


def bilinear_apply(
    m: BilinearSymbol,
    F: SpectralField,
    G: SpectralField,
    fast_path: bool = False,
    resolved: bool = False,
    support_tol: float = 0.0,
) -> SpectralField:
    """
    T_m(F, G) on the grid of F and G.

    Args:
        m: Symbol
        F, G: Input fields on the same grid
        fast_path: Use the separable factorization through padded products
        resolved: Zero the output on the Nyquist rows
        support_tol: Skip input modes below this fraction of the peak
            (direct path only; 0 keeps every mode)
    """
    F._check_grid(G)
    if fast_path:
        if m.factorization is None:
            raise ValueError(f"Symbol {m.name} has no separable factorization")
        coeffs = _apply_separable(m.factorization, F, G)
    else:
        coeffs = _direct_bilinear(m, F, G, support_tol)
    if resolved:
        coeffs = np.where(F.grid.resolved_mask, coeffs, 0.0)
    return SpectralField(F.grid, coeffs)


def _direct_trilinear(
    m: TrilinearSymbol,
    F: SpectralField,
    G: SpectralField,
    H: SpectralField,
    resolved: bool,
) -> np.ndarray:
    grid = F.grid
    i1, i2 = _signed_indices(grid)
    dk = grid.dk
    vec = dk * np.stack([i1, i2], axis=-1)
    f_flat, g_flat, h_flat = (x.coeffs.ravel() for x in (F, G, H))
    d1 = i1[:, None] - i1[None, :]
    d2 = i2[:, None] - i2[None, :]
    eta_sigma_valid = _on_lattice(d1, d2, grid)
    g_pairs = np.where(eta_sigma_valid, g_flat[_flat(d1, d2, grid)], 0.0)
    inner = g_pairs * h_flat[None, :]
    if resolved:
        inner = inner * grid.resolved_mask.ravel()[:, None]

    out = np.zeros(i1.size, dtype=complex)
    for k in range(i1.size):
        e1 = i1[k] - i1
        e2 = i2[k] - i2
        valid = _on_lattice(e1, e2, grid)
        f_diff = np.where(valid, f_flat[_flat(e1, e2, grid)], 0.0)
        if not np.any(f_diff):
            continue
        values = m(vec[k][None, None, :], vec[:, None, :], vec[None, :, :])
        out[k] = np.sum(values * f_diff[:, None] * inner)
    return (out / grid.box_length**4).reshape(grid.shape)


def trilinear_apply(
    m: TrilinearSymbol,
    F: SpectralField,
    G: SpectralField,
    H: SpectralField,
    fast_path: bool = False,
    resolved: bool = False,
) -> SpectralField:
    """
    T_m(F, G, H).

    The fast path nests bilinear applications through the factorization
    a(xi, eta) b(eta, sigma); the direct path is limited to small grids.
    With `resolved` the intermediate frequency eta and the output skip the
    Nyquist rows.
    """
    F._check_grid(G)
    F._check_grid(H)
    if fast_path:
        if m.factorization is None:
            raise ValueError(f"Symbol {m.name} has no factorization")
        a, b = m.factorization
        inner = bilinear_apply(b, G, H, resolved=resolved)
        return bilinear_apply(a, F, inner, resolved=resolved)
    grid = F.grid
    limit = config.TRILINEAR_DIRECT_MAX
    if max(grid.shape) > limit:
        raise GridTooLargeError(grid.shape, limit, "trilinear")
    coeffs = _direct_trilinear(m, F, G, H, resolved)
    if resolved:
        coeffs = np.where(grid.resolved_mask, coeffs, 0.0)
    return SpectralField(grid, coeffs)


# ---------------------------------------------------------------------------
# Quadratic catalogue
# ---------------------------------------------------------------------------


def conjugation_of(combo: SignCombo) -> Tuple[int, int]:
    """Slot conjugations (c1, c2) of a quadratic combo (e2, e3) = (-c1, -c2)."""
    e2, e3 = combo.signs
    return -e2, -e3


def combo_of(c1: int, c2: int) -> SignCombo:
    return SignCombo((-c1, -c2))


def conjugated(f: SpectralField, c: int) -> SpectralField:
    """f for c = +1, the reflected conjugate xi -> conj(f^(-xi)) for c = -1."""
    return f if c > 0 else f.conj_reflect()


def quadratic_kernel(c1: int, c2: int, xi: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """
    K_c(xi, eta) for X_c1 in the xi - eta slot and X_c2 in the eta slot:

        (i c2/4) <xi> (xi.eta) |xi-eta| / (|xi| |eta| <xi-eta>)
      + (i/8) |xi| |xi-eta| |eta| / (<xi-eta> <eta>)
      + (i c1 c2/8) |xi| ((xi-eta).eta) / (|xi-eta| |eta|)

    Zero whenever xi, eta or xi - eta is the zero frequency.
    """
    xi = np.asarray(xi, float)
    eta = np.asarray(eta, float)
    zeta = xi - eta
    a_xi, a_eta, a_zeta = _norm(xi), _norm(eta), _norm(zeta)
    b_xi, b_eta, b_zeta = bracket(xi), bracket(eta), bracket(zeta)

    transport = _ratio(b_xi * np.sum(xi * eta, axis=-1) * a_zeta, a_xi * a_eta * b_zeta)
    pressure = a_xi * a_zeta * a_eta / (b_zeta * b_eta)
    kinetic = _ratio(a_xi * np.sum(zeta * eta, axis=-1), a_zeta * a_eta)
    value = 0.25j * c2 * transport + 0.125j * pressure + 0.125j * c1 * c2 * kinetic
    singular = (a_xi == 0) | (a_eta == 0) | (a_zeta == 0)
    return np.where(singular, 0.0, value)


def _riesz_factor(j: int) -> FrequencyFunction:
    return lambda z: _ratio(z[..., j], _norm(z))


def _coordinate(j: int, scale: complex = 1.0) -> FrequencyFunction:
    return lambda z: scale * z[..., j]


def _kernel_factorization(c1: int, c2: int) -> Tuple[SeparableTerm, ...]:
    def transport_out(z):
        return _ratio(bracket(z), _norm(z))

    def density(z):
        return _norm(z) / bracket(z)

    terms = []
    for j in (0, 1):
        terms.append(
            SeparableTerm(
                output=lambda z, j=j: 0.25j * c2 * transport_out(z) * z[..., j],
                left=density,
                right=_riesz_factor(j),
            )
        )
    terms.append(SeparableTerm(output=lambda z: 0.125j * _norm(z), left=density, right=density))
    for j in (0, 1):
        terms.append(
            SeparableTerm(
                output=lambda z: 0.125j * c1 * c2 * _norm(z),
                left=_riesz_factor(j),
                right=_riesz_factor(j),
            )
        )
    return tuple(terms)


def m0_symbol(combo: SignCombo, symmetrized: bool = False) -> BilinearSymbol:
    """
    Coefficient kernel of the quadratic term with phase combo `combo`.

    The symmetrized variant averages with the slot-swapped partner:
    (K_{c1 c2}(xi, eta) + K_{c2 c1}(xi, xi - eta)) / 2, so that
    m0_{c1 c2}(xi, eta) = m0_{c2 c1}(xi, xi - eta).
    """
    if combo.arity != 2:
        raise ValueError("m0 needs a quadratic combo")
    c1, c2 = conjugation_of(combo)
    if not symmetrized:
        return BilinearSymbol(
            lambda xi, eta: quadratic_kernel(c1, c2, xi, eta),
            _kernel_factorization(c1, c2),
            f"m0{combo}",
        )
    return BilinearSymbol(
        lambda xi, eta: 0.5
        * (quadratic_kernel(c1, c2, xi, eta) + quadratic_kernel(c2, c1, xi, xi - eta)),
        None,
        f"m0_sym{combo}",
    )


@dataclass(frozen=True)
class QuadraticTermSpec:
    """One of the four quadratic interactions."""

    combo: SignCombo
    conjugation: Tuple[int, int]
    kernel: BilinearSymbol

    @property
    def phase(self) -> PhaseSpec:
        return PhaseSpec(self.combo)

    def inputs(self, f: SpectralField) -> Tuple[SpectralField, SpectralField]:
        c1, c2 = self.conjugation
        return conjugated(f, c1), conjugated(f, c2)


def quadratic_terms(symmetrized: bool = False) -> List[QuadraticTermSpec]:
    terms = []
    for c1, c2 in itertools.product((1, -1), repeat=2):
        combo = combo_of(c1, c2)
        terms.append(QuadraticTermSpec(combo, (c1, c2), m0_symbol(combo, symmetrized)))
    return terms


def checked_phase(combo: SignCombo, xi: np.ndarray, eta: np.ndarray) -> np.ndarray:
    """Quadratic phase values; raises if any is numerically zero."""
    phi = PhaseSpec(combo).evaluate(xi, eta)
    if phi.size and np.min(np.abs(phi)) < PHASE_FLOOR:
        k = np.unravel_index(int(np.argmin(np.abs(phi))), phi.shape)
        raise PhaseDegeneracyError(combo.label(), float(phi[k]))
    return phi


def divided_symbol(combo: SignCombo, factor: complex, swap: bool = False) -> BilinearSymbol:
    """
    m0(xi, eta) / (factor * phi(xi, eta)), or with `swap` the same symbol
    evaluated at (xi, xi - eta), i.e. with the two input slots exchanged.
    """
    c1, c2 = conjugation_of(combo)

    def evaluate(xi, eta):
        if swap:
            eta = xi - eta
        phi = checked_phase(combo, xi, eta)
        return quadratic_kernel(c1, c2, xi, eta) / (factor * phi)

    return BilinearSymbol(evaluate, None, f"m0/({factor}phi){combo}{'~' if swap else ''}")


def inner_kernel(combo: SignCombo, sign: int) -> BilinearSymbol:
    """
    Kernel of d_s F_sign: K itself for sign = +1, conj(K(-xi, -eta)) for -1.
    """
    c1, c2 = conjugation_of(combo)
    if sign > 0:
        return BilinearSymbol(
            lambda xi, eta: quadratic_kernel(c1, c2, xi, eta), None, f"K{combo}"
        )
    return BilinearSymbol(
        lambda xi, eta: np.conj(quadratic_kernel(c1, c2, -xi, -eta)),
        None,
        f"K*{combo}",
    )


def m1_symbol(
    outer: SignCombo, inner: SignCombo, slot: str = "eta", sign: Optional[int] = None
) -> TrilinearSymbol:
    """
    Cubic symbol a(xi, eta) b(eta, sigma) after integrating by parts in time.

    a = m0(xi, eta)/(i phi(xi, eta)) when the eta slot is differentiated,
    or the slot-swapped m0(xi, xi - eta)/(i phi(xi, xi - eta)) when the
    xi - eta slot is; b is the kernel of the differentiated factor, whose
    conjugation `sign` defaults to that slot's conjugation.
    """
    if slot not in ("eta", "difference"):
        raise ValueError(f"slot must be 'eta' or 'difference', got {slot}")
    c1, c2 = conjugation_of(outer)
    if sign is None:
        sign = c2 if slot == "eta" else c1
    a = divided_symbol(outer, 1j, swap=(slot == "difference"))
    b = inner_kernel(inner, sign)
    return TrilinearSymbol.from_factors(a, b, f"m1{outer}{inner}:{slot}")
