"""
Fourier Multiplier Module

Scalar Fourier multipliers on the frequency lattice: Riesz transforms,
|nabla|^s, <nabla>^s, Littlewood-Paley projections, the Klein-Gordon
semigroup exp(it<nabla>) and the inverse Laplacian.  Also hosts the
Bernstein and propagator-kernel measurements built on them.

Conventions:
  - d/dx_j has symbol i xi_j, so the Riesz transform nabla_j/|nabla| has
    symbol i xi_j/|xi| and maps real fields to real fields.
  - Symbols singular at xi = 0 are set to 0 at the zero mode.
  - Odd symbols (derivatives, Riesz) vanish on the Nyquist row of their
    axis, where negation modulo n cannot flip their sign.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np
from tenacity import RetryError, Retrying, retry_if_exception_type, stop_after_attempt

from src.config import config
from src.exceptions import KernelBudgetError, KernelTailError
from src.spectral_core import (
    GridSpec,
    SpectralField,
    lebesgue_norm,
    to_physical,
    values_lp_norm,
)

logger = logging.getLogger(__name__)

BUMP_INNER = 1.0
BUMP_OUTER = 25.0 / 24.0

REAL_EVEN_KINDS = {
    "abs_grad_power",
    "bracket_power",
    "lp_at",
    "lp_leq",
    "lp_gt",
    "lp_fat",
    "inverse_laplacian",
}
IMAGINARY_ODD_KINDS = {"riesz", "partial"}


def _smooth_step(s: np.ndarray) -> np.ndarray:
    """C-infinity transition from 0 (s <= 0) to 1 (s >= 1)."""
    s = np.clip(s, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
        b = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
    return a / (a + b)


def bump(r: np.ndarray) -> np.ndarray:
    """Radial bump: 1 on |x| <= 1, 0 on |x| >= 25/24, smooth in between."""
    r = np.asarray(r, dtype=float)
    s = (r - BUMP_INNER) / (BUMP_OUTER - BUMP_INNER)
    return 1.0 - _smooth_step(s)


@dataclass(frozen=True)
class MultiplierSpec:
    """
    A Fourier multiplier identified by its kind and parameter.

    Build instances with the classmethods (riesz, abs_grad_power, ...);
    `symbol(grid)` returns the lattice values.
    """

    kind: str
    param: Optional[float] = None
    factors: Tuple["MultiplierSpec", ...] = ()
    values: Optional[np.ndarray] = field(default=None, compare=False, repr=False)

    @classmethod
    def riesz(cls, j: int) -> "MultiplierSpec":
        if j not in (1, 2):
            raise ValueError(f"Riesz index must be 1 or 2, got {j}")
        return cls("riesz", j)

    @classmethod
    def partial(cls, j: int) -> "MultiplierSpec":
        if j not in (1, 2):
            raise ValueError(f"Derivative index must be 1 or 2, got {j}")
        return cls("partial", j)

    @classmethod
    def abs_grad_power(cls, s: float) -> "MultiplierSpec":
        return cls("abs_grad_power", float(s))

    @classmethod
    def bracket_power(cls, s: float) -> "MultiplierSpec":
        return cls("bracket_power", float(s))

    @classmethod
    def lp_at(cls, n: float) -> "MultiplierSpec":
        return cls("lp_at", _positive(n))

    @classmethod
    def lp_leq(cls, n: float) -> "MultiplierSpec":
        return cls("lp_leq", _positive(n))

    @classmethod
    def lp_gt(cls, n: float) -> "MultiplierSpec":
        return cls("lp_gt", _positive(n))

    @classmethod
    def lp_fat(cls, n: float) -> "MultiplierSpec":
        return cls("lp_fat", _positive(n))

    @classmethod
    def kg_semigroup(cls, t: float) -> "MultiplierSpec":
        return cls("kg_semigroup", float(t))

    @classmethod
    def inverse_laplacian(cls) -> "MultiplierSpec":
        return cls("inverse_laplacian")

    @classmethod
    def custom(cls, values: np.ndarray) -> "MultiplierSpec":
        return cls("custom", values=np.asarray(values, dtype=complex))

    def __mul__(self, other: "MultiplierSpec") -> "MultiplierSpec":
        return MultiplierSpec("product", factors=(self, other))

    def preserves_real(self) -> bool:
        if self.kind in REAL_EVEN_KINDS:
            return True
        if self.kind in IMAGINARY_ODD_KINDS:
            return True
        if self.kind == "product":
            return all(f.preserves_real() for f in self.factors)
        return False

    def symbol(self, grid: GridSpec) -> np.ndarray:
        """Lattice values of the symbol, FFT ordered."""
        kind = self.kind
        if kind == "riesz":
            k = grid.kx if self.param == 1 else grid.ky
            nyquist = grid.nyquist_x if self.param == 1 else grid.nyquist_y
            out = 1j * _safe_divide(k, grid.kabs)
            return np.where(nyquist, 0.0, out)
        if kind == "partial":
            k = grid.kx if self.param == 1 else grid.ky
            nyquist = grid.nyquist_x if self.param == 1 else grid.nyquist_y
            return np.where(nyquist, 0.0, 1j * k).astype(complex)
        if kind == "abs_grad_power":
            s = self.param
            if s == 0:
                return np.ones(grid.shape, dtype=complex)
            if s > 0:
                return (grid.kabs**s).astype(complex)
            return _safe_divide(1.0, grid.kabs ** (-s)).astype(complex)
        if kind == "bracket_power":
            return (grid.bracket**self.param).astype(complex)
        if kind == "lp_leq":
            return bump(grid.kabs / self.param).astype(complex)
        if kind == "lp_gt":
            return (1.0 - bump(grid.kabs / self.param)).astype(complex)
        if kind == "lp_at":
            n = self.param
            return (bump(grid.kabs / n) - bump(2.0 * grid.kabs / n)).astype(complex)
        if kind == "lp_fat":
            n = self.param
            # P_{N/2} + P_N + P_{2N} telescopes to phi(xi/2N) - phi(4 xi/N)
            return (bump(grid.kabs / (2.0 * n)) - bump(4.0 * grid.kabs / n)).astype(
                complex
            )
        if kind == "kg_semigroup":
            return np.exp(1j * self.param * grid.bracket)
        if kind == "inverse_laplacian":
            return -_safe_divide(1.0, grid.k2).astype(complex)
        if kind == "custom":
            if self.values is None or self.values.shape != grid.shape:
                raise ValueError("Custom multiplier values do not match the grid")
            return self.values
        if kind == "product":
            out = np.ones(grid.shape, dtype=complex)
            for factor in self.factors:
                out = out * factor.symbol(grid)
            return out
        raise ValueError(f"Unknown multiplier kind: {kind}")


def _positive(n: float) -> float:
    if not n > 0:
        raise ValueError(f"Littlewood-Paley scale must be positive, got {n}")
    return float(n)


def _safe_divide(num, den: np.ndarray) -> np.ndarray:
    num = np.broadcast_to(np.asarray(num, dtype=float), den.shape)
    out = np.zeros(den.shape, dtype=float)
    np.divide(num, den, out=out, where=den != 0)
    return out


def apply_multiplier(m: MultiplierSpec, f: SpectralField) -> SpectralField:
    """coeff_out(xi) = m(xi) * coeff_in(xi)."""
    is_real = f.is_real and m.preserves_real()
    return SpectralField(f.grid, m.symbol(f.grid) * f.coeffs, is_real)


def lp_project(f: SpectralField, n: float, kind: str = "at") -> SpectralField:
    """Littlewood-Paley projection P_N, P_{<=N}, P_{>N} or the fattened P~_N."""
    if not n > 0:
        raise ValueError(f"N must be positive, got {n}")
    builders = {
        "at": MultiplierSpec.lp_at,
        "leq": MultiplierSpec.lp_leq,
        "gt": MultiplierSpec.lp_gt,
        "fat": MultiplierSpec.lp_fat,
    }
    if kind not in builders:
        raise ValueError(f"Unknown projection kind: {kind}")
    return apply_multiplier(builders[kind](n), f)


def lp_band(f: SpectralField, m: float, n: float) -> SpectralField:
    """P_{M < . <= N} := P_{<=N} - P_{<=M}."""
    if not 0 < m < n:
        raise ValueError(f"Band requires 0 < M < N, got M={m}, N={n}")
    return lp_project(f, n, "leq") - lp_project(f, m, "leq")


@dataclass
class BernsteinReport:
    """Measured Bernstein ratios for one dyadic block."""

    m: float
    p: float
    q: float
    s: float
    derivative_ratio: float
    inverse_derivative_ratio: float
    block_ratio: float
    lowpass_ratio: float
    window: float
    passed: bool

    def to_dict(self) -> Dict[str, float]:
        return dict(self.__dict__)


def bernstein_check(
    f: SpectralField, m: float, p: float, q: float, s: float, window: float = 4.0
) -> BernsteinReport:
    """
    Measure the Bernstein ratios of P_M f.

    derivative ratios must lie in [1/C, C]; the L^p -> L^q ratios only
    need to stay below C.
    """
    if not 1 <= p <= q:
        raise ValueError(f"Bernstein estimates need 1 <= p <= q, got p={p}, q={q}")
    block = lp_project(f, m, "at")
    low = lp_project(f, m, "leq")
    base = lebesgue_norm(block, p)
    if base == 0:
        raise ValueError("P_M f vanishes; choose a band that carries content")

    up = lebesgue_norm(apply_multiplier(MultiplierSpec.abs_grad_power(s), block), p)
    down = lebesgue_norm(apply_multiplier(MultiplierSpec.abs_grad_power(-s), block), p)
    derivative_ratio = up / (m**s * base)
    inverse_ratio = down / (m ** (-s) * base)

    scale = m ** (2.0 / p - 2.0 / q)
    block_ratio = lebesgue_norm(block, q) / (scale * base)
    low_base = lebesgue_norm(low, p)
    lowpass_ratio = (
        lebesgue_norm(low, q) / (scale * low_base) if low_base > 0 else 0.0
    )

    passed = (
        1.0 / window <= derivative_ratio <= window
        and 1.0 / window <= inverse_ratio <= window
        and block_ratio <= window
        and lowpass_ratio <= window
    )
    return BernsteinReport(
        m=m,
        p=p,
        q=q,
        s=s,
        derivative_ratio=derivative_ratio,
        inverse_derivative_ratio=inverse_ratio,
        block_ratio=block_ratio,
        lowpass_ratio=lowpass_ratio,
        window=window,
        passed=passed,
    )


# ---------------------------------------------------------------------------
# Propagator kernel of exp(it<nabla>) P_{<M}
# ---------------------------------------------------------------------------


def _kernel_symbol(grid: GridSpec, m: float, t: float, smoothing: str) -> np.ndarray:
    phase = np.exp(1j * t * grid.bracket)
    if smoothing == "lp":
        return phase * bump(grid.kabs / m)
    if smoothing == "bracket4":
        return phase * grid.bracket ** (-4.0)
    raise ValueError(f"Unknown kernel smoothing: {smoothing}")


def _kernel_grid(m: float, t: float, smoothing: str, enlargement: int) -> GridSpec:
    # box must hold the light cone |x| <= t plus a few kernel widths
    width = 1.0 / m if smoothing == "lp" else 1.0
    box = (2.0 * t + 48.0 * width + 16.0) * 2**enlargement
    # frequency cutoff well beyond the symbol's support / decay
    kmax = 2.5 * BUMP_OUTER * m if smoothing == "lp" else 40.0
    n = int(np.ceil(kmax * box / np.pi))
    n += n % 2
    return GridSpec.square(max(n, 16), box)


def _kernel_values(m: float, t: float, smoothing: str, enlargement: int, tail_tol):
    grid = _kernel_grid(m, t, smoothing, enlargement)
    required_mb = 6 * grid.nx * grid.ny * 16 / (1024 * 1024)
    budget_mb = config.memory_budget_mb()
    if required_mb > budget_mb:
        raise KernelBudgetError(required_mb, budget_mb, grid.nx)

    kernel = to_physical(SpectralField(grid, _kernel_symbol(grid, m, t, smoothing)))
    magnitude = np.abs(kernel)
    total = np.sum(magnitude)
    outer = np.maximum(np.abs(grid.x), np.abs(grid.y)) > 0.4 * grid.box_length
    tail = float(np.sum(magnitude[outer]) / total) if total > 0 else 0.0
    if tail > tail_tol:
        logger.debug(f"Kernel tail {tail:.3g} on n={grid.nx}; enlarging the box")
        raise KernelTailError(tail, tail_tol, grid.nx)
    return kernel, grid


def _kernel(m: float, t: float, smoothing: str):
    if not m > 0:
        raise ValueError(f"M must be positive, got {m}")
    if t < 0:
        raise ValueError(f"t must be non-negative, got {t}")
    tail_tol = config.KERNEL_TAIL_TOL
    try:
        for attempt in Retrying(
            stop=stop_after_attempt(config.KERNEL_MAX_ATTEMPTS),
            retry=retry_if_exception_type(KernelTailError),
            reraise=True,
        ):
            with attempt:
                enlargement = attempt.retry_state.attempt_number - 1
                return _kernel_values(m, t, smoothing, enlargement, tail_tol)
    except RetryError as e:  # pragma: no cover - reraise=True re-raises directly
        raise e.last_attempt.exception()
    raise AssertionError("unreachable")


def kernel_l1_norm(m: float, t: float, smoothing: str = "lp") -> float:
    """
    L^1 norm of the kernel of exp(it<nabla>) P_{<M} (or of
    exp(it<nabla>) <nabla>^-4 with smoothing="bracket4").

    The box is enlarged until less than the configured fraction of the
    kernel mass sits near the box edge.
    """
    kernel, grid = _kernel(m, t, smoothing)
    return float(np.sum(np.abs(kernel)) * grid.cell_area)


@dataclass
class KernelMoments:
    l1: float
    l2: float
    x2_l2: float
    interpolation_bound: float


def kernel_moment_bounds(m: float, t: float, smoothing: str = "lp") -> KernelMoments:
    """||K||_2, || |x|^2 K ||_2 and the bound ||K||_2^(1/2) || |x|^2 K ||_2^(1/2)."""
    kernel, grid = _kernel(m, t, smoothing)
    l1 = float(np.sum(np.abs(kernel)) * grid.cell_area)
    l2 = values_lp_norm(kernel, grid, 2.0)
    x2 = values_lp_norm(grid.radius**2 * kernel, grid, 2.0)
    # in 2D, ||K||_1 <= 2 sqrt(pi) ||K||_2^(1/2) || |x|^2 K ||_2^(1/2)
    bound = 2.0 * math.sqrt(math.pi) * math.sqrt(l2 * x2)
    return KernelMoments(l1=l1, l2=l2, x2_l2=x2, interpolation_bound=bound)


def propagator_lp_check(g: SpectralField, m: float, t: float, p: float) -> float:
    """||exp(it<nabla>) P_{<M} g||_p / (<Mt>^|1-2/p| ||g||_p)."""
    evolved = apply_multiplier(
        MultiplierSpec.kg_semigroup(t) * MultiplierSpec.lp_leq(m), g
    )
    denominator = (1.0 + (m * t) ** 2) ** (0.5 * abs(1.0 - 2.0 / p)) * lebesgue_norm(
        g, p
    )
    if denominator == 0:
        return 0.0
    return lebesgue_norm(evolved, p) / denominator
