#!/usr/bin/env python3
"""
Tests for the spectral core: grid lattice, transforms, normalization,
the dealiased product and the norm helpers.

**Property 1: Transform pair is the identity on grid values**
**Property 2: Parseval holds with the 1/L^2 lattice measure**
**Property 3: Padded product equals the truncated lattice convolution**
"""

import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import example, given, settings
from hypothesis import strategies as st

project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))

from src.exceptions import DimensionMismatchError, GridMismatchError, InvalidStateError
from src.spectral_core import (
    GridSpec,
    SpectralField,
    dealiased_product,
    drop_nyquist,
    embed,
    from_physical,
    hermitian_residual,
    lebesgue_norm,
    reflect,
    restrict,
    sobolev_norm,
    to_physical,
    weighted_profile_norm,
)
from tests.strategies import gaussian, random_complex_field, random_real_field


def _direct_convolution(a: np.ndarray, b: np.ndarray, grid: GridSpec) -> np.ndarray:
    """Lattice convolution with frequencies outside the signed index range dropped."""
    out = np.zeros(grid.shape, dtype=complex)
    ix, iy = grid.index_x, grid.index_y
    half_x, half_y = grid.nx // 2, grid.ny // 2
    for p in range(grid.nx):
        for q in range(grid.ny):
            if a[p, q] == 0:
                continue
            for r in range(grid.nx):
                sx = ix[p] + ix[r]
                if not -half_x <= sx < half_x:
                    continue
                for s in range(grid.ny):
                    sy = iy[q] + iy[s]
                    if not -half_y <= sy < half_y:
                        continue
                    out[sx % grid.nx, sy % grid.ny] += a[p, q] * b[r, s]
    return out / grid.box_length**2


@pytest.mark.spectral
class TestGridSpec:
    """Lattice geometry."""

    def test_rejects_odd_or_small_sizes(self):
        with pytest.raises(ValueError):
            GridSpec(7, 8, 10.0)
        with pytest.raises(ValueError):
            GridSpec(2, 2, 10.0)
        with pytest.raises(ValueError):
            GridSpec(8, 8, 0.0)

    def test_lattice_spacing_and_indices(self):
        grid = GridSpec.square(8, 4 * np.pi)
        assert grid.dk == pytest.approx(0.5)
        assert list(grid.index_x) == [0, 1, 2, 3, -4, -3, -2, -1]
        assert grid.kx[1, 0] == pytest.approx(0.5)
        assert grid.ky[0, 7] == pytest.approx(-0.5)

    def test_box_is_centered(self):
        grid = GridSpec.square(8, 8.0)
        assert grid.x[0, 0] == pytest.approx(-4.0)
        assert grid.x[4, 0] == pytest.approx(0.0)
        assert grid.y[0, 7] == pytest.approx(3.0)

    def test_resolved_mask_excludes_nyquist_rows(self):
        grid = GridSpec.square(8, 8.0)
        mask = grid.resolved_mask
        assert not mask[4, :].any()
        assert not mask[:, 4].any()
        assert mask.sum() == 49

    def test_padded_grid_has_three_halves_modes(self):
        grid = GridSpec(8, 12, 10.0)
        padded = grid.padded()
        assert padded.shape == (12, 18)
        assert padded.box_length == grid.box_length

    def test_wrap_horizon(self):
        assert GridSpec.square(16, 100.0).wrap_horizon() == pytest.approx(45.0)


@pytest.mark.spectral
class TestTransforms:
    """Forward and inverse transforms."""

    def setup_method(self):
        self.grid = GridSpec.square(32, 20.0)

    def test_gaussian_coefficients_match_continuous_transform(self):
        width = 1.5
        field = from_physical(gaussian(self.grid, width), self.grid)
        expected = 2 * np.pi * width**2 * np.exp(-0.5 * width**2 * self.grid.k2)
        assert np.max(np.abs(field.coeffs - expected)) < 1e-8

    def test_real_input_gives_hermitian_field(self):
        rng = np.random.default_rng(3)
        field = from_physical(rng.normal(size=self.grid.shape), self.grid)
        assert field.is_real
        assert hermitian_residual(field.coeffs) == 0.0

    def test_real_flag_rejects_non_hermitian_coefficients(self):
        coeffs = np.zeros(self.grid.shape, dtype=complex)
        coeffs[1, 0] = 1.0
        with pytest.raises(InvalidStateError):
            SpectralField(self.grid, coeffs, True)

    def test_shape_mismatch_is_rejected(self):
        with pytest.raises(DimensionMismatchError):
            from_physical(np.zeros((4, 4)), self.grid)

    def test_fields_on_different_grids_do_not_add(self):
        other = GridSpec.square(32, 21.0)
        with pytest.raises(GridMismatchError):
            SpectralField.zeros(self.grid) + SpectralField.zeros(other)

    @pytest.mark.property
    @given(seed=st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=10, deadline=10000)
    @example(seed=0)
    def test_transform_round_trip(self, seed):
        """**Property 1: Transform pair is the identity on grid values**"""
        rng = np.random.default_rng(seed)
        values = rng.normal(size=self.grid.shape) + 1j * rng.normal(size=self.grid.shape)
        back = to_physical(from_physical(values, self.grid))
        assert np.max(np.abs(back - values)) < 1e-12

    @pytest.mark.property
    @given(seed=st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=10, deadline=10000)
    def test_parseval(self, seed):
        """**Property 2: Parseval holds with the 1/L^2 lattice measure**"""
        field = random_complex_field(self.grid, seed, decay=0.5)
        values = to_physical(field)
        physical = np.sqrt(np.sum(np.abs(values) ** 2) * self.grid.cell_area)
        assert field.l2_norm() == pytest.approx(physical, rel=1e-12)
        assert lebesgue_norm(field, 2) == pytest.approx(physical, rel=1e-12)


@pytest.mark.spectral
class TestLatticeHelpers:
    def test_reflect_negates_indices(self):
        grid = GridSpec.square(8, 8.0)
        coeffs = grid.index_x[:, None] * 100.0 + grid.index_y[None, :]
        flipped = reflect(coeffs)
        for p in range(8):
            for q in range(8):
                jx = -grid.index_x[p] % 8
                jy = -grid.index_y[q] % 8
                assert flipped[p, q] == coeffs[jx, jy]

    def test_embed_then_restrict_is_identity(self):
        rng = np.random.default_rng(0)
        coeffs = rng.normal(size=(8, 8)) + 0j
        assert np.array_equal(restrict(embed(coeffs, (12, 12)), (8, 8)), coeffs)

    def test_conj_reflect_is_coefficients_of_conjugate(self):
        grid = GridSpec.square(16, 10.0)
        field = random_complex_field(grid, 4)
        conjugate = from_physical(np.conj(to_physical(field)), grid)
        assert np.max(np.abs(field.conj_reflect().coeffs - conjugate.coeffs)) < 1e-12

    def test_real_and_imaginary_parts(self):
        grid = GridSpec.square(16, 10.0)
        field = random_complex_field(grid, 5)
        values = to_physical(field)
        assert np.allclose(to_physical(field.real_part()), values.real, atol=1e-12)
        assert np.allclose(to_physical(field.imag_part()), values.imag, atol=1e-12)

    def test_drop_nyquist(self):
        grid = GridSpec.square(8, 8.0)
        field = SpectralField(grid, np.ones(grid.shape))
        dropped = drop_nyquist(field)
        assert np.count_nonzero(dropped.coeffs) == 49

    def test_scaling_by_complex_factor_drops_real_flag(self):
        grid = GridSpec.square(8, 8.0)
        field = random_real_field(grid, 1)
        assert field.scale(2.0).is_real
        assert not field.scale(1j).is_real


@pytest.mark.spectral
class TestDealiasedProduct:
    @pytest.mark.property
    @given(seed=st.integers(min_value=0, max_value=10_000))
    @settings(max_examples=4, deadline=30000)
    @example(seed=7)
    def test_matches_truncated_convolution(self, seed):
        """**Property 3: Padded product equals the truncated lattice convolution**"""
        grid = GridSpec.square(8, 2 * np.pi * 4)
        f = random_complex_field(grid, seed, decay=0.0)
        g = random_complex_field(grid, seed + 1, decay=0.0)
        expected = _direct_convolution(f.coeffs, g.coeffs, grid)
        product = dealiased_product(f, g)
        scale = np.max(np.abs(expected))
        assert np.max(np.abs(product.coeffs - expected)) <= 1e-12 * scale

    def test_real_factors_give_real_product(self):
        grid = GridSpec.square(16, 10.0)
        product = dealiased_product(random_real_field(grid, 1), random_real_field(grid, 2))
        assert product.is_real

    def test_band_limited_product_is_pointwise(self):
        grid = GridSpec.square(32, 2 * np.pi)
        values = np.cos(grid.x) * np.sin(2 * grid.y)
        f = from_physical(values, grid)
        product = to_physical(dealiased_product(f, f))
        assert np.max(np.abs(product - values**2)) < 1e-12


@pytest.mark.spectral
class TestNorms:
    def setup_method(self):
        self.grid = GridSpec.square(64, 30.0)
        self.field = from_physical(gaussian(self.grid, 1.0), self.grid)

    def test_gaussian_lp_norms(self):
        # ||exp(-r^2/2)||_p^p = 2 pi / p
        for p in (1.0, 2.0, 4.0):
            expected = (2 * np.pi / p) ** (1.0 / p)
            assert lebesgue_norm(self.field, p) == pytest.approx(expected, rel=1e-8)
        assert lebesgue_norm(self.field, np.inf) == pytest.approx(1.0)

    def test_large_exponent_does_not_underflow(self):
        value = lebesgue_norm(self.field, 400.0)
        assert np.isfinite(value)
        assert 0.98 < value <= 1.0

    def test_p_below_one_is_rejected(self):
        with pytest.raises(ValueError):
            lebesgue_norm(self.field, 0.5)

    def test_sobolev_zero_is_l2(self):
        assert sobolev_norm(self.field, 0.0) == pytest.approx(self.field.l2_norm())
        assert sobolev_norm(self.field, 1.0) > sobolev_norm(self.field, 0.0)

    def test_weighted_norm_dominates_plain_norm(self):
        assert weighted_profile_norm(self.field, 2.0) > lebesgue_norm(self.field, 2.0)
