"""
Phase Geometry Module

Quadratic and cubic Klein-Gordon phases

    phi(xi, eta)        = <xi> + e2 <xi - eta> + e3 <eta>
    phi(xi, eta, sigma) = <xi> + e2 <xi - eta> + e3 <eta - sigma> + e4 <sigma>

with closed-form gradients, the lower bound |phi| >~ 1/<|xi| + |eta|>,
the Jacobian-mean matrix Q(x, y) with x/<x> - y/<y> = Q (x - y), and the
assembled factorizations of d_xi phi for the three cubic phases used in
the nonlinear estimates.

Frequencies are arrays whose last axis has length 2.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.special import roots_legendre
from scipy.stats import linregress

from src.spectral_core import GridSpec

logger = logging.getLogger(__name__)

GAUSS_ORDER = 16
SINGULAR_DET = 1e-10
FACTORIZATION_TOL = 1e-10


def bracket(z: np.ndarray) -> np.ndarray:
    """<z> = (1 + |z|^2)^(1/2) over the last axis."""
    z = np.asarray(z, dtype=float)
    return np.sqrt(1.0 + np.sum(z * z, axis=-1))


def unit_map(z: np.ndarray) -> np.ndarray:
    """z / <z>, the gradient of <z>."""
    z = np.asarray(z, dtype=float)
    return z / bracket(z)[..., None]


@dataclass(frozen=True)
class SignCombo:
    """Signs (e2, e3) of a quadratic phase or (e2, e3, e4) of a cubic one."""

    signs: Tuple[int, ...]

    def __post_init__(self):
        if len(self.signs) not in (2, 3) or any(s not in (1, -1) for s in self.signs):
            raise ValueError(f"Invalid sign combo: {self.signs}")

    @property
    def arity(self) -> int:
        return len(self.signs)

    def label(self) -> str:
        return "".join("+" if s > 0 else "-" for s in self.signs)

    def __str__(self) -> str:
        return f"({','.join('+' if s > 0 else '-' for s in self.signs)})"


def quadratic_combos() -> List[SignCombo]:
    return [SignCombo(s) for s in itertools.product((1, -1), repeat=2)]


def cubic_combos() -> List[SignCombo]:
    return [SignCombo(s) for s in itertools.product((1, -1), repeat=3)]


@dataclass(frozen=True)
class PhaseSpec:
    """A quadratic (arity 2) or cubic (arity 3) phase."""

    combo: SignCombo

    @property
    def arity(self) -> int:
        return self.combo.arity

    def evaluate(
        self, xi: np.ndarray, eta: np.ndarray, sigma: Optional[np.ndarray] = None
    ) -> np.ndarray:
        xi, eta = np.asarray(xi, float), np.asarray(eta, float)
        if self.arity == 2:
            e2, e3 = self.combo.signs
            return bracket(xi) + e2 * bracket(xi - eta) + e3 * bracket(eta)
        e2, e3, e4 = self.combo.signs
        sigma = np.asarray(sigma, float)
        return (
            bracket(xi)
            + e2 * bracket(xi - eta)
            + e3 * bracket(eta - sigma)
            + e4 * bracket(sigma)
        )

    def gradients(
        self, xi: np.ndarray, eta: np.ndarray, sigma: Optional[np.ndarray] = None
    ) -> Tuple[np.ndarray, ...]:
        """(d_xi phi, d_eta phi[, d_sigma phi]) in closed form."""
        xi, eta = np.asarray(xi, float), np.asarray(eta, float)
        if self.arity == 2:
            e2, e3 = self.combo.signs
            d_xi = unit_map(xi) + e2 * unit_map(xi - eta)
            d_eta = -e2 * unit_map(xi - eta) + e3 * unit_map(eta)
            return d_xi, d_eta
        e2, e3, e4 = self.combo.signs
        sigma = np.asarray(sigma, float)
        d_xi = unit_map(xi) + e2 * unit_map(xi - eta)
        d_eta = -e2 * unit_map(xi - eta) + e3 * unit_map(eta - sigma)
        d_sigma = -e3 * unit_map(eta - sigma) + e4 * unit_map(sigma)
        return d_xi, d_eta, d_sigma


def gradient_fd_error(
    spec: PhaseSpec, points: np.ndarray, step: float = 1e-5
) -> float:
    """Largest gap between closed-form gradients and central differences.

    `points` has shape (n, arity, 2).
    """
    points = np.asarray(points, float)
    exact = np.stack(spec.gradients(*[points[:, k] for k in range(spec.arity)]), axis=1)
    worst = 0.0
    for slot in range(spec.arity):
        for axis in range(2):
            shift = np.zeros_like(points)
            shift[:, slot, axis] = step
            plus = spec.evaluate(*[(points + shift)[:, k] for k in range(spec.arity)])
            minus = spec.evaluate(*[(points - shift)[:, k] for k in range(spec.arity)])
            approx = (plus - minus) / (2.0 * step)
            worst = max(worst, float(np.max(np.abs(approx - exact[:, slot, axis]))))
    return worst


def sample_disk(rng: np.random.Generator, n: int, radius: float) -> np.ndarray:
    """n points uniform in the disk |z| <= radius."""
    r = radius * np.sqrt(rng.uniform(0.0, 1.0, n))
    theta = rng.uniform(0.0, 2.0 * np.pi, n)
    return np.stack([r * np.cos(theta), r * np.sin(theta)], axis=-1)


# ---------------------------------------------------------------------------
# Quadratic phase lower bound
# ---------------------------------------------------------------------------


@dataclass
class LowerBoundResult:
    combo: str
    minimum: float
    worst_xi: List[float]
    worst_eta: List[float]
    samples: int
    exhaustive: bool = False

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _weighted_phase(spec: PhaseSpec, xi: np.ndarray, eta: np.ndarray) -> np.ndarray:
    size = np.hypot(xi[..., 0], xi[..., 1]) + np.hypot(eta[..., 0], eta[..., 1])
    return np.abs(spec.evaluate(xi, eta)) * np.sqrt(1.0 + size**2)


def _scan_result(spec, xi, eta, values, exhaustive) -> LowerBoundResult:
    idx = int(np.argmin(values))
    return LowerBoundResult(
        combo=spec.combo.label(),
        minimum=float(values[idx]),
        worst_xi=xi[idx].tolist(),
        worst_eta=eta[idx].tolist(),
        samples=len(values),
        exhaustive=exhaustive,
    )


def phase_lower_bound_scan(
    samples: int = 10_000, radius: float = 20.0, seed: int = 0
) -> Dict[str, LowerBoundResult]:
    """
    Per-combo minimum of |phi(xi, eta)| <|xi| + |eta|> over random pairs in
    the disk of the given radius.
    """
    if samples < 1:
        raise ValueError("samples must be positive")
    rng = np.random.default_rng(seed)
    xi = sample_disk(rng, samples, radius)
    eta = sample_disk(rng, samples, radius)
    results = {}
    for combo in quadratic_combos():
        spec = PhaseSpec(combo)
        result = _scan_result(spec, xi, eta, _weighted_phase(spec, xi, eta), False)
        logger.info(
            f"Phase bound {combo}: min {result.minimum:.4g} at "
            f"xi={result.worst_xi}, eta={result.worst_eta}"
        )
        results[combo.label()] = result
    return results


def lattice_lower_bound_scan(
    grid: GridSpec, max_pairs: int = 20_000_000, seed: int = 0, chunk: int = 1 << 20
) -> Dict[str, LowerBoundResult]:
    """
    The same minimum over pairs of lattice frequencies of `grid`.

    Every pair is visited when there are at most `max_pairs`; otherwise
    `max_pairs` random lattice pairs are drawn.
    """
    lattice = np.stack([grid.kx.ravel(), grid.ky.ravel()], axis=-1)
    n = len(lattice)
    exhaustive = n * n <= max_pairs
    rng = np.random.default_rng(seed)
    total = n * n if exhaustive else max_pairs
    best: Dict[str, Tuple[float, np.ndarray, np.ndarray]] = {}
    for start in range(0, total, chunk):
        stop = min(start + chunk, total)
        if exhaustive:
            flat = np.arange(start, stop)
            i, j = flat // n, flat % n
        else:
            i = rng.integers(0, n, stop - start)
            j = rng.integers(0, n, stop - start)
        xi, eta = lattice[i], lattice[j]
        for combo in quadratic_combos():
            spec = PhaseSpec(combo)
            values = _weighted_phase(spec, xi, eta)
            k = int(np.argmin(values))
            label = combo.label()
            if label not in best or values[k] < best[label][0]:
                best[label] = (float(values[k]), xi[k], eta[k])
    results = {}
    for label, (value, xi_w, eta_w) in best.items():
        results[label] = LowerBoundResult(
            combo=label,
            minimum=value,
            worst_xi=xi_w.tolist(),
            worst_eta=eta_w.tolist(),
            samples=total,
            exhaustive=exhaustive,
        )
        logger.info(f"Lattice phase bound ({label}): min {value:.4g}")
    return results


# ---------------------------------------------------------------------------
# Jacobian-mean deformation matrix
# ---------------------------------------------------------------------------


@lru_cache(maxsize=4)
def _gauss_nodes(order: int) -> Tuple[np.ndarray, np.ndarray]:
    nodes, weights = roots_legendre(order)
    return 0.5 * (nodes + 1.0), 0.5 * weights


def jacobian(z: np.ndarray) -> np.ndarray:
    """J(z) = (<z>^2 I - z z^T) / <z>^3, the derivative of z/<z>."""
    z = np.asarray(z, float)
    b = bracket(z)[..., None, None]
    outer = z[..., :, None] * z[..., None, :]
    eye = np.eye(2)
    return (b**2 * eye - outer) / b**3


def deform_Q_batch(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """
    Q(x, y) = int_0^1 J(y + tau (x - y)) dtau for stacked pairs.

    The segment is cut into panels of unit length in z, each integrated
    with 16-point Gauss-Legendre.
    """
    x = np.atleast_2d(np.asarray(x, float))
    y = np.atleast_2d(np.asarray(y, float))
    nodes, weights = _gauss_nodes(GAUSS_ORDER)
    length = float(np.max(np.hypot(*(x - y).T), initial=0.0))
    panels = max(1, int(np.ceil(length)))
    edges = np.linspace(0.0, 1.0, panels + 1)
    tau = (edges[:-1, None] + (edges[1:] - edges[:-1])[:, None] * nodes[None, :]).ravel()
    w = ((edges[1:] - edges[:-1])[:, None] * weights[None, :]).ravel()
    points = y[:, None, :] + tau[None, :, None] * (x - y)[:, None, :]
    return np.einsum("k,nkij->nij", w, jacobian(points))


@dataclass
class DeformationResult:
    Q: np.ndarray
    norm: float
    residual: float


def deform_Q(x, y) -> DeformationResult:
    """Q with x/<x> - y/<y> = Q (x - y), its operator norm and the identity residual."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    Q = deform_Q_batch(x[None, :], y[None, :])[0]
    residual = float(np.linalg.norm(unit_map(x) - unit_map(y) - Q @ (x - y)))
    return DeformationResult(Q=Q, norm=float(np.linalg.norm(Q, 2)), residual=residual)


@dataclass
class DeformationScan:
    samples: int
    max_residual: float
    max_norm: float
    min_scaled_norm: float
    worst_x: List[float] = field(default_factory=list)
    worst_y: List[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def deform_Q_scan(
    samples: int = 100_000, radius: float = 20.0, seed: int = 0, chunk: int = 2048
) -> DeformationScan:
    """Residual, max ||Q|| and min ||Q|| <|x| + |y|>^3 over random pairs."""
    rng = np.random.default_rng(seed)
    x_all = sample_disk(rng, samples, radius)
    y_all = sample_disk(rng, samples, radius)
    max_residual = 0.0
    max_norm = 0.0
    min_scaled = np.inf
    worst = (None, None)
    for start in range(0, samples, chunk):
        x = x_all[start : start + chunk]
        y = y_all[start : start + chunk]
        Q = deform_Q_batch(x, y)
        residual = np.linalg.norm(
            unit_map(x) - unit_map(y) - np.einsum("nij,nj->ni", Q, x - y), axis=-1
        )
        norms = np.linalg.svd(Q, compute_uv=False)[:, 0]
        size = np.hypot(*x.T) + np.hypot(*y.T)
        scaled = norms * (1.0 + size**2) ** 1.5
        max_residual = max(max_residual, float(np.max(residual)))
        max_norm = max(max_norm, float(np.max(norms)))
        k = int(np.argmin(scaled))
        if scaled[k] < min_scaled:
            min_scaled = float(scaled[k])
            worst = (x[k].tolist(), y[k].tolist())
    logger.info(
        f"Deformation scan: residual {max_residual:.3g}, max |Q| {max_norm:.12g}, "
        f"min |Q|<|x|+|y|>^3 {min_scaled:.4g}"
    )
    return DeformationScan(
        samples=samples,
        max_residual=max_residual,
        max_norm=max_norm,
        min_scaled_norm=min_scaled,
        worst_x=worst[0] or [],
        worst_y=worst[1] or [],
    )


# ---------------------------------------------------------------------------
# Cubic phase factorizations
# ---------------------------------------------------------------------------

LEMMA_PHASES = {
    "phi1": SignCombo((1, -1, -1)),
    "phi2": SignCombo((-1, 1, -1)),
    "phi3": SignCombo((-1, -1, 1)),
}

# d_eta phi1 = Q2 (sigma - xi) with Q2 = Q(eta - xi, eta - sigma)
ETA_SIGN = -1.0


@dataclass
class FactorizationResult:
    which: str
    matrices: Dict[str, np.ndarray]
    residual: float
    singular: bool


def phase_factorization(
    which: str, xi, eta, sigma, eta_sign: float = ETA_SIGN
) -> FactorizationResult:
    """
    Assemble d_xi phi from d_eta phi and d_sigma phi (phi1) or from d_sigma phi
    alone (phi2, phi3) and return the identity residual.

    For phi1, d_eta phi1 = eta_sign * Q2 (xi - sigma); passing eta_sign=+1
    reproduces the alternative bookkeeping so the residual can compare both.
    """
    if which not in LEMMA_PHASES:
        raise ValueError(f"Unknown phase {which}; expected one of {list(LEMMA_PHASES)}")
    xi, eta, sigma = (np.asarray(a, float) for a in (xi, eta, sigma))
    spec = PhaseSpec(LEMMA_PHASES[which])
    d_xi, d_eta, d_sigma = spec.gradients(xi, eta, sigma)

    if which == "phi1":
        q1 = deform_Q(xi, eta - xi).Q
        q2 = deform_Q(eta - xi, eta - sigma).Q
        q3 = deform_Q(eta - sigma, sigma).Q
        singular = min(np.linalg.det(q2), np.linalg.det(q3)) < SINGULAR_DET
        if singular:
            return FactorizationResult(which, {}, np.nan, True)
        q11 = 2.0 * eta_sign * q1 @ np.linalg.inv(q2)
        q12 = -q1 @ np.linalg.inv(q3)
        assembled = q11 @ d_eta + q12 @ d_sigma
        matrices = {"Q1": q1, "Q2": q2, "Q3": q3, "Q11": q11, "Q12": q12}
    else:
        outer = deform_Q(xi, xi - eta).Q
        if which == "phi2":
            inner = deform_Q(sigma - eta, sigma).Q
            sign = -1.0
        else:
            inner = deform_Q(sigma, sigma - eta).Q
            sign = 1.0
        if np.linalg.det(inner) < SINGULAR_DET:
            return FactorizationResult(which, {}, np.nan, True)
        second = sign * np.linalg.inv(inner)
        assembled = outer @ second @ d_sigma
        key = which[-1]
        matrices = {f"Q{key}1": outer, f"Q{key}2": second}

    residual = float(np.linalg.norm(d_xi - assembled))
    return FactorizationResult(which, matrices, residual, False)


@dataclass
class FactorizationScan:
    which: str
    samples: int
    singular: int
    passing_fraction: float
    max_residual: float
    growth_exponent: Optional[float]
    growth_constant: Optional[float]

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def phase_factorization_scan(
    which: str, samples: int = 10_000, radius: float = 5.0, seed: int = 0
) -> FactorizationScan:
    """
    Residual statistics over random points; singular samples are counted and
    excluded.  For phi1 also fits ||Q11|| <= C <|xi|+|eta|+|sigma|>^C'.
    """
    rng = np.random.default_rng(seed)
    points = [sample_disk(rng, samples, radius) for _ in range(3)]
    residuals, sizes, norms = [], [], []
    singular = 0
    for xi, eta, sigma in zip(*points):
        result = phase_factorization(which, xi, eta, sigma)
        if result.singular:
            singular += 1
            continue
        residuals.append(result.residual)
        if which == "phi1":
            sizes.append(np.sqrt(1.0 + (np.hypot(*xi) + np.hypot(*eta) + np.hypot(*sigma)) ** 2))
            norms.append(np.linalg.norm(result.matrices["Q11"], 2))

    residuals = np.array(residuals)
    passing = float(np.mean(residuals <= FACTORIZATION_TOL)) if len(residuals) else 0.0
    exponent = constant = None
    if which == "phi1" and len(norms) > 2:
        fit = linregress(np.log(sizes), np.log(norms))
        exponent = float(fit.slope)
        constant = float(np.max(np.array(norms) / np.array(sizes) ** exponent))
    if singular:
        logger.warning(f"{which}: {singular} singular samples excluded")
    logger.info(
        f"Factorization {which}: {passing:.4%} within {FACTORIZATION_TOL}, "
        f"max residual {np.max(residuals, initial=0.0):.3g}"
    )
    return FactorizationScan(
        which=which,
        samples=samples,
        singular=singular,
        passing_fraction=passing,
        max_residual=float(np.max(residuals, initial=0.0)),
        growth_exponent=exponent,
        growth_constant=constant,
    )
