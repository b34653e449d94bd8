"""
Spectral Core Module

Discrete Fourier representation of scalar fields on the periodic box
[-L/2, L/2)^2, which stands in for the plane.

Normalization (used everywhere in the package):

    coeff(xi) = integral over the box of exp(-i xi.x) f(x) dx
              ~ dx * dy * sum_j f(x_j) exp(-i xi.x_j)

i.e. the coefficients approximate the continuous Fourier transform, and

    f(x) = (1 / L^2) * sum_xi coeff(xi) exp(i xi.x).

With this choice L^2 norms satisfy ||f||_2^2 = (1 / L^2) * sum |coeff|^2 and the
frequency measure d(eta) of a lattice sum is (2 pi / L)^2 / (2 pi)^2 = 1 / L^2.

Lattice indices are kept in FFT order; the signed index range per axis is
[-n/2, n/2 - 1].  Negation is taken modulo n, so the lattice is closed under
negation (the Nyquist row maps to itself).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Optional, Tuple, Union

import numpy as np
from scipy import fft as sfft

from src.config import config
from src.exceptions import DimensionMismatchError, GridMismatchError, InvalidStateError

logger = logging.getLogger(__name__)

HERMITIAN_RTOL = 1e-12


@dataclass(frozen=True)
class GridSpec:
    """Periodic-box discretization and its frequency lattice."""

    nx: int
    ny: int
    box_length: float

    def __post_init__(self):
        for name, n in (("nx", self.nx), ("ny", self.ny)):
            if int(n) != n or n < 4 or n % 2:
                raise ValueError(f"{name} must be an even integer >= 4, got {n}")
        if not self.box_length > 0:
            raise ValueError(f"box_length must be positive, got {self.box_length}")

    @classmethod
    def square(cls, n: int, box_length: float) -> "GridSpec":
        return cls(n, n, float(box_length))

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.nx, self.ny)

    @property
    def dx(self) -> float:
        return self.box_length / self.nx

    @property
    def dy(self) -> float:
        return self.box_length / self.ny

    @property
    def cell_area(self) -> float:
        return self.dx * self.dy

    @property
    def dk(self) -> float:
        """Lattice spacing 2 pi / L."""
        return 2.0 * np.pi / self.box_length

    @cached_property
    def index_x(self) -> np.ndarray:
        """Signed lattice index along x in FFT order."""
        return np.rint(sfft.fftfreq(self.nx) * self.nx).astype(int)

    @cached_property
    def index_y(self) -> np.ndarray:
        return np.rint(sfft.fftfreq(self.ny) * self.ny).astype(int)

    @cached_property
    def kx(self) -> np.ndarray:
        return np.broadcast_to(self.dk * self.index_x[:, None], self.shape).copy()

    @cached_property
    def ky(self) -> np.ndarray:
        return np.broadcast_to(self.dk * self.index_y[None, :], self.shape).copy()

    @cached_property
    def k2(self) -> np.ndarray:
        return self.kx**2 + self.ky**2

    @cached_property
    def kabs(self) -> np.ndarray:
        return np.sqrt(self.k2)

    @cached_property
    def bracket(self) -> np.ndarray:
        """Japanese bracket <xi> = (1 + |xi|^2)^(1/2), the dispersion relation."""
        return np.sqrt(1.0 + self.k2)

    @cached_property
    def nyquist_x(self) -> np.ndarray:
        return np.broadcast_to((self.index_x == -self.nx // 2)[:, None], self.shape)

    @cached_property
    def nyquist_y(self) -> np.ndarray:
        return np.broadcast_to((self.index_y == -self.ny // 2)[None, :], self.shape)

    @cached_property
    def resolved_mask(self) -> np.ndarray:
        """Modes off both Nyquist rows, where odd symbols are representable."""
        return ~(self.nyquist_x | self.nyquist_y)

    @cached_property
    def _centering_phase(self) -> np.ndarray:
        # exp(i xi L/2) = (-1)^(j1 + j2) for the box centered at the origin
        sign_x = 1.0 - 2.0 * (self.index_x % 2)
        sign_y = 1.0 - 2.0 * (self.index_y % 2)
        return sign_x[:, None] * sign_y[None, :]

    @cached_property
    def x(self) -> np.ndarray:
        x1d = -0.5 * self.box_length + self.dx * np.arange(self.nx)
        return np.broadcast_to(x1d[:, None], self.shape).copy()

    @cached_property
    def y(self) -> np.ndarray:
        y1d = -0.5 * self.box_length + self.dy * np.arange(self.ny)
        return np.broadcast_to(y1d[None, :], self.shape).copy()

    @cached_property
    def radius(self) -> np.ndarray:
        return np.sqrt(self.x**2 + self.y**2)

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        """Modes kept by the 2/3 rule (|j| < n/3 per axis)."""
        keep_x = np.abs(self.index_x) < self.nx / 3.0
        keep_y = np.abs(self.index_y) < self.ny / 3.0
        return keep_x[:, None] & keep_y[None, :]

    def zero_mode_index(self) -> Tuple[int, int]:
        return (0, 0)

    def padded(self) -> "GridSpec":
        """Grid with at least 3/2 the modes per axis, same box."""
        return GridSpec(_padded_size(self.nx), _padded_size(self.ny), self.box_length)

    def wrap_horizon(self, fraction: float = 0.45) -> float:
        """Time before waves with group speed < 1 wrap around the box."""
        return fraction * self.box_length

    def describe(self) -> dict:
        return {"nx": self.nx, "ny": self.ny, "box_length": self.box_length}


def _padded_size(n: int) -> int:
    m = int(np.ceil(1.5 * n))
    return m + (m % 2)


def reflect(coeffs: np.ndarray) -> np.ndarray:
    """Array of values at -xi (negation modulo the lattice size)."""
    return np.roll(np.flip(coeffs, axis=(0, 1)), shift=1, axis=(0, 1))


def embed(coeffs: np.ndarray, shape: Tuple[int, int]) -> np.ndarray:
    """Place FFT-ordered coefficients into a larger FFT-ordered array."""
    nx, ny = coeffs.shape
    out = np.zeros(shape, dtype=complex)
    ix = np.rint(sfft.fftfreq(nx) * nx).astype(int) % shape[0]
    iy = np.rint(sfft.fftfreq(ny) * ny).astype(int) % shape[1]
    out[np.ix_(ix, iy)] = coeffs
    return out


def restrict(coeffs: np.ndarray, shape: Tuple[int, int]) -> np.ndarray:
    """Inverse of embed: keep the signed index range of the smaller shape."""
    ix = np.rint(sfft.fftfreq(shape[0]) * shape[0]).astype(int) % coeffs.shape[0]
    iy = np.rint(sfft.fftfreq(shape[1]) * shape[1]).astype(int) % coeffs.shape[1]
    return coeffs[np.ix_(ix, iy)]


def _forward(values: np.ndarray, grid: GridSpec) -> np.ndarray:
    coeffs = sfft.fft2(values, workers=config.fft_workers())
    return coeffs * (grid.cell_area * grid._centering_phase)


def _inverse(coeffs: np.ndarray, grid: GridSpec) -> np.ndarray:
    values = sfft.ifft2(coeffs * grid._centering_phase, workers=config.fft_workers())
    return values * (grid.nx * grid.ny / grid.box_length**2)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """A complex scalar field stored as Fourier coefficients on a GridSpec."""

    grid: GridSpec
    coeffs: np.ndarray = field(repr=False)
    is_real: bool = False

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=complex)
        if coeffs.shape != self.grid.shape:
            raise DimensionMismatchError(self.grid.shape, coeffs.shape)
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)
        if self.is_real:
            residual = hermitian_residual(coeffs)
            if residual > HERMITIAN_RTOL:
                raise InvalidStateError(
                    "Field flagged real is not Hermitian symmetric",
                    residual=residual,
                )

    @classmethod
    def zeros(cls, grid: GridSpec, is_real: bool = True) -> "SpectralField":
        return cls(grid, np.zeros(grid.shape, dtype=complex), is_real)

    @property
    def zero_mode(self) -> complex:
        return complex(self.coeffs[0, 0])

    def _check_grid(self, other: "SpectralField") -> None:
        if other.grid != self.grid:
            raise GridMismatchError(self.grid.describe(), other.grid.describe())

    def __add__(self, other: "SpectralField") -> "SpectralField":
        self._check_grid(other)
        return SpectralField(
            self.grid, self.coeffs + other.coeffs, self.is_real and other.is_real
        )

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        self._check_grid(other)
        return SpectralField(
            self.grid, self.coeffs - other.coeffs, self.is_real and other.is_real
        )

    def __neg__(self) -> "SpectralField":
        return replace(self, coeffs=-self.coeffs)

    def scale(self, factor: Union[float, complex]) -> "SpectralField":
        keeps_real = self.is_real and np.isreal(factor)
        return SpectralField(self.grid, self.coeffs * factor, bool(keeps_real))

    def __mul__(self, factor: Union[float, complex]) -> "SpectralField":
        return self.scale(factor)

    __rmul__ = __mul__

    def conj_reflect(self) -> "SpectralField":
        """Coefficients of the complex-conjugate field: xi -> conj(coeff(-xi))."""
        return SpectralField(self.grid, np.conj(reflect(self.coeffs)), self.is_real)

    def real_part(self) -> "SpectralField":
        return SpectralField(
            self.grid, 0.5 * (self.coeffs + np.conj(reflect(self.coeffs))), True
        )

    def imag_part(self) -> "SpectralField":
        return SpectralField(
            self.grid, -0.5j * (self.coeffs - np.conj(reflect(self.coeffs))), True
        )

    def with_coeffs(self, coeffs: np.ndarray, is_real: Optional[bool] = None):
        return SpectralField(
            self.grid, coeffs, self.is_real if is_real is None else is_real
        )

    def l2_norm(self) -> float:
        """L^2 norm computed in frequency (Parseval)."""
        return float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2)) / self.grid.box_length)


def drop_nyquist(f: SpectralField) -> SpectralField:
    """Zero the Nyquist rows of f."""
    return f.with_coeffs(np.where(f.grid.resolved_mask, f.coeffs, 0.0))


def hermitian_residual(coeffs: np.ndarray) -> float:
    scale = np.max(np.abs(coeffs))
    if scale == 0:
        return 0.0
    return float(np.max(np.abs(coeffs - np.conj(reflect(coeffs)))) / scale)


def to_physical(f: SpectralField) -> np.ndarray:
    """Grid values of f; real array when the field is flagged real."""
    values = _inverse(np.asarray(f.coeffs), f.grid)
    if f.is_real:
        return values.real
    return values


def from_physical(values: np.ndarray, grid: GridSpec) -> SpectralField:
    """Fourier coefficients of grid values; real input gives a real field."""
    values = np.asarray(values)
    if values.shape != grid.shape:
        raise DimensionMismatchError(grid.shape, values.shape)
    is_real = not np.iscomplexobj(values)
    coeffs = _forward(values.astype(complex), grid)
    if is_real:
        # symmetrize away round-off so the Hermitian flag holds exactly
        coeffs = 0.5 * (coeffs + np.conj(reflect(coeffs)))
    return SpectralField(grid, coeffs, is_real)


def to_padded_physical(f: SpectralField) -> Tuple[np.ndarray, GridSpec]:
    """Grid values of f on the 3/2-padded grid used for products."""
    padded = f.grid.padded()
    values = _inverse(embed(np.asarray(f.coeffs), padded.shape), padded)
    if f.is_real:
        values = values.real
    return values, padded


def from_padded_physical(
    values: np.ndarray, padded: GridSpec, grid: GridSpec
) -> SpectralField:
    is_real = not np.iscomplexobj(values)
    coeffs = restrict(_forward(values.astype(complex), padded), grid.shape)
    if is_real:
        coeffs = 0.5 * (coeffs + np.conj(reflect(coeffs)))
    return SpectralField(grid, coeffs, is_real)


def dealiased_product(*fields: SpectralField) -> SpectralField:
    """
    Product of fields computed on the 3/2-padded grid.

    For two factors this equals the lattice convolution with off-lattice
    contributions dropped, exactly (no aliasing onto retained modes).
    """
    grid = fields[0].grid
    for other in fields[1:]:
        fields[0]._check_grid(other)
    if not config.DEALIAS:
        product = to_physical(fields[0])
        for other in fields[1:]:
            product = product * to_physical(other)
        return from_physical(product, grid)
    values, padded = to_padded_physical(fields[0])
    for other in fields[1:]:
        other_values, _ = to_padded_physical(other)
        values = values * other_values
    return from_padded_physical(values, padded, grid)


def lebesgue_norm(f: SpectralField, p: float) -> float:
    """L^p norm by the rectangle rule on the grid (p = inf allowed)."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    return values_lp_norm(to_physical(f), f.grid, p)


def values_lp_norm(values: np.ndarray, grid: GridSpec, p: float) -> float:
    magnitude = np.abs(values)
    if np.isinf(p):
        return float(np.max(magnitude))
    peak = np.max(magnitude)
    if peak == 0:
        return 0.0
    # factor out the peak so large p does not underflow
    total = np.sum((magnitude / peak) ** p) * grid.cell_area
    return float(peak * total ** (1.0 / p))


def sobolev_norm(f: SpectralField, s: float) -> float:
    """H^s norm ||<nabla>^s f||_2 computed in frequency."""
    weights = f.grid.bracket ** (2.0 * s)
    return float(
        np.sqrt(np.sum(weights * np.abs(f.coeffs) ** 2)) / f.grid.box_length
    )


def weighted_profile_norm(f: SpectralField, p: float) -> float:
    """||<x> f||_p with x the representative in the centered box."""
    if p < 1:
        raise ValueError(f"p must be >= 1, got {p}")
    weight = np.sqrt(1.0 + f.grid.radius**2)
    return values_lp_norm(weight * to_physical(f), f.grid, p)
