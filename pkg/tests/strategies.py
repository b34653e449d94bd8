"""
Shared field builders and hypothesis strategies for the test suite.
"""

import sys
from pathlib import Path

import numpy as np
from hypothesis import strategies as st
from hypothesis.strategies import composite

project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from src.model import DiagonalState, FluidState, diagonalize
from src.phase_geometry import SignCombo
from src.spectral_core import GridSpec, SpectralField, drop_nyquist, from_physical, reflect


def gaussian(grid: GridSpec, width: float, center=(0.0, 0.0)) -> np.ndarray:
    x = grid.x - center[0]
    y = grid.y - center[1]
    return np.exp(-(x**2 + y**2) / (2.0 * width**2))


def smooth_coeffs(grid: GridSpec, seed: int, decay: float = 1.0) -> np.ndarray:
    """Random complex coefficients with a Gaussian envelope in frequency."""
    rng = np.random.default_rng(seed)
    raw = rng.normal(size=grid.shape) + 1j * rng.normal(size=grid.shape)
    coeffs = raw * np.exp(-decay * grid.k2) * grid.box_length
    coeffs = np.where(grid.resolved_mask, coeffs, 0.0)
    coeffs[0, 0] = 0.0
    return coeffs


def random_real_field(grid: GridSpec, seed: int, decay: float = 1.0, scale: float = 1.0):
    """Real, mean-zero field without Nyquist content."""
    c = smooth_coeffs(grid, seed, decay)
    c = 0.5 * (c + np.conj(reflect(c)))
    return SpectralField(grid, scale * c, True)


def random_complex_field(grid: GridSpec, seed: int, decay: float = 1.0, scale: float = 1.0):
    return SpectralField(grid, scale * smooth_coeffs(grid, seed, decay))


def random_fluid_state(grid: GridSpec, seed: int, amplitude: float = 0.01) -> FluidState:
    u = random_real_field(grid, seed, scale=amplitude)
    phi = random_real_field(grid, seed + 1000, scale=amplitude)
    return FluidState.from_potential(u, phi)


def random_diagonal_state(grid: GridSpec, seed: int, amplitude: float = 0.01) -> DiagonalState:
    return diagonalize(random_fluid_state(grid, seed, amplitude))


def gaussian_data(grid: GridSpec, amplitude: float, width: float) -> DiagonalState:
    u = drop_nyquist(from_physical(amplitude * gaussian(grid, width), grid))
    coeffs = np.array(u.coeffs)
    coeffs[0, 0] = 0.0
    phi = SpectralField.zeros(grid)
    return diagonalize(FluidState.from_potential(u.with_coeffs(coeffs), phi))


@composite
def seeds(draw):
    return draw(st.integers(min_value=0, max_value=2**31 - 1))


@composite
def quadratic_sign_combos(draw):
    return SignCombo((draw(st.sampled_from([1, -1])), draw(st.sampled_from([1, -1]))))


@composite
def frequency_vectors(draw, radius: float = 20.0):
    x = draw(st.floats(min_value=-radius, max_value=radius, allow_nan=False))
    y = draw(st.floats(min_value=-radius, max_value=radius, allow_nan=False))
    return np.array([x, y])
