"""Spectral representation of seed kernels and direct synthesis of the zoom
field ``X_eps`` from a discretised half-plane of independent Gaussian weights.

The half-plane carries the intensity ``F(d lambda) dy / y`` on
``R x [1, 1/eps)``. Each cell of a finite partition contributes
``a cos(lambda_c y_c t) + b sin(lambda_c y_c t)`` with ``a``, ``b`` independent
centred Gaussians whose variance is the cell's intensity.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, optimize

DENSITY_TAIL_MASS = 1e-6


class NoSpectralForm(LookupError):
    """The kernel has no registered spectral measure."""


class InvalidEpsilon(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class SpectralMeasure:
    """Symmetric finite measure ``F`` with ``k(t) = int cos(lambda t) F(d lambda)``.

    Either ``kind == "atoms"`` with matching ``locations``/``masses`` arrays, or
    ``kind == "density"`` with a vectorised even ``density``. For densities
    ``total_mass`` must be supplied (it equals ``k(0)``); ``cdf_tail`` may give
    the exact mass of ``[x, inf)`` to locate the truncation point.
    """

    kind: str
    total_mass: float
    density: Callable[[np.ndarray], np.ndarray] | None = None
    locations: np.ndarray | None = None
    masses: np.ndarray | None = None
    cdf_tail: Callable[[float], float] | None = None

    @classmethod
    def from_atoms(cls, locations: Sequence[float], masses: Sequence[float]) -> "SpectralMeasure":
        loc = np.asarray(locations, dtype=float)
        w = np.asarray(masses, dtype=float)
        if loc.shape != w.shape or np.any(w <= 0):
            raise ValueError("atoms need matching locations and positive masses")
        return cls("atoms", float(w.sum()), locations=loc, masses=w)

    @classmethod
    def from_density(cls, density, total_mass: float, cdf_tail=None) -> "SpectralMeasure":
        return cls("density", float(total_mass), density=density, cdf_tail=cdf_tail)

    def is_symmetric(self, probes: Sequence[float] = (0.1, 0.7, 1.0, 3.3), rtol=1e-12) -> bool:
        if self.kind == "atoms":
            pairs = {}
            for x, w in zip(self.locations, self.masses):
                pairs[round(float(x), 12)] = pairs.get(round(float(x), 12), 0.0) + w
            return all(math.isclose(w, pairs.get(-x, 0.0), rel_tol=rtol) for x, w in pairs.items())
        p = np.asarray(probes, dtype=float)
        return bool(np.allclose(self.density(p), self.density(-p), rtol=rtol))

    def tail_mass(self, x: float) -> float:
        """Mass of ``[x, inf)`` (one side)."""
        if self.cdf_tail is not None:
            return float(self.cdf_tail(x))
        value, _ = integrate.quad(self.density, x, np.inf, limit=200)
        return float(value)

    def truncation(self, rel_mass: float = DENSITY_TAIL_MASS) -> float:
        """Smallest ``Lambda`` with both tails beyond it carrying < rel_mass of F."""
        target = 0.5 * rel_mass * self.total_mass
        hi = 1.0
        while self.tail_mass(hi) > target:
            hi *= 2.0
        return float(optimize.brentq(lambda x: self.tail_mass(x) - target, 0.0, hi,
                                     xtol=1e-12 * hi))


def kernel_from_spectral(F: SpectralMeasure, t: float, tol: float = 1e-10) -> float:
    """``int cos(lambda t) F(d lambda)``."""
    if F.kind == "atoms":
        return float(np.dot(F.masses, np.cos(F.locations * t)))
    if t == 0.0:
        return F.total_mass
    # even density: 2 int_0^inf f(l) cos(l t) dl, Fourier-weighted quadrature
    value, _ = integrate.quad(F.density, 0.0, np.inf, weight="cos", wvar=abs(t),
                              epsabs=tol, limlst=200)
    return 2.0 * float(value)


@dataclass(frozen=True, eq=False)
class PlaneDiscretization:
    """Finite partition of ``R x [1, 1/eps)``.

    ``frequencies`` and ``variances`` are flat arrays over cells; the
    frequency of a cell is the product of its mass centroids in ``lambda`` and
    in ``y``. The per-axis pieces are kept for inspection.
    """

    epsilon: float
    lambda_centroids: np.ndarray
    lambda_masses: np.ndarray
    y_centroids: np.ndarray
    y_masses: np.ndarray

    @property
    def frequencies(self) -> np.ndarray:
        return np.outer(self.lambda_centroids, self.y_centroids).ravel()

    @property
    def cell_variances(self) -> np.ndarray:
        return np.outer(self.lambda_masses, self.y_masses).ravel()

    @property
    def total_variance(self) -> float:
        return float(self.cell_variances.sum())

    def covariance(self, lag) -> np.ndarray:
        """Exact covariance of the synthesised field at ``lag``."""
        lag = np.asarray(lag, dtype=float)
        return np.cos(np.multiply.outer(lag, self.frequencies)) @ self.cell_variances


def _y_cells(eps: float, y_cells: int):
    edges = eps ** (-np.arange(y_cells + 1) / y_cells)
    mass = np.diff(np.log(edges))
    # centroid of y under dy/y on [a, b] is (b - a) / ln(b/a)
    cent = np.diff(edges) / mass
    return cent, mass


HEAVY_TAIL_RATIO = 50.0


def _cell_moments(F: SpectralMeasure, edges: np.ndarray):
    masses = np.empty(edges.size - 1)
    cents = np.empty(edges.size - 1)
    for i, (a, b) in enumerate(zip(edges[:-1], edges[1:])):
        m, _ = integrate.quad(F.density, a, b, epsabs=0, epsrel=1e-12)
        mom, _ = integrate.quad(lambda x: x * F.density(x), a, b, epsabs=1e-15, epsrel=1e-12)
        masses[i] = m
        cents[i] = mom / m if m > 0 else 0.5 * (a + b)
    keep = masses > 0
    return cents[keep], masses[keep]


def _median_frequency(F: SpectralMeasure, lam_max: float) -> float:
    half = 0.25 * F.total_mass
    return float(optimize.brentq(lambda x: F.tail_mass(x) - half, 0.0, lam_max))


def _lambda_cells_density(F: SpectralMeasure, n: int, spacing: str = "auto"):
    """Cells on ``[-Lambda, Lambda]``, mirrored about 0.

    ``"width"`` gives equal-width cells, ``"mass"`` equal-mass cells;
    ``"auto"`` takes equal mass when ``Lambda`` exceeds the median
    ``|lambda|`` by more than ``HEAVY_TAIL_RATIO`` (heavy tails, where equal
    widths would waste every cell on the far tail). Truncated mass is dropped,
    not redistributed, so the synthesised variance stays a lower bound.
    """
    lam_max = F.truncation()
    if spacing == "auto":
        heavy = lam_max > HEAVY_TAIL_RATIO * _median_frequency(F, lam_max)
        spacing = "mass" if heavy else "width"
    if spacing == "width":
        return _cell_moments(F, np.linspace(-lam_max, lam_max, n + 1))
    if spacing != "mass":
        raise ValueError(f"unknown lambda spacing {spacing!r}")
    half = max(1, n // 2)
    cut = F.tail_mass(lam_max)
    side = F.tail_mass(0.0) - cut
    edges = [0.0]
    for i in range(1, half):
        target = cut + side * (1.0 - i / half)
        edges.append(optimize.brentq(lambda x: F.tail_mass(x) - target, edges[-1], lam_max,
                                     xtol=1e-14 * lam_max))
    edges.append(lam_max)
    c, m = _cell_moments(F, np.array(edges))
    return np.concatenate([-c[::-1], c]), np.concatenate([m[::-1], m])


def discretize_plane(F: SpectralMeasure, eps: float, lambda_cells: int = 256,
                     y_cells: int = 32, lambda_spacing: str = "auto") -> PlaneDiscretization:
    """Partition the half-plane for ``y in [1, 1/eps)``.

    Atoms each get their own frequency cell (``lambda_cells`` is ignored);
    densities are cut where both tails together carry less than ``1e-6`` of
    the mass and split into ``lambda_cells`` cells (see
    :func:`_lambda_cells_density` for ``lambda_spacing``).
    """
    if not 0.0 < eps < 1.0:
        raise InvalidEpsilon(f"epsilon must lie in (0, 1), got {eps}")
    if lambda_cells < 1 or y_cells < 1:
        raise ValueError("cell counts must be >= 1")
    yc, ym = _y_cells(eps, y_cells)
    if F.total_mass == 0.0:
        lc, lm = np.empty(0), np.empty(0)
    elif F.kind == "atoms":
        lc, lm = F.locations.copy(), F.masses.copy()
    else:
        lc, lm = _lambda_cells_density(F, lambda_cells, lambda_spacing)
    return PlaneDiscretization(eps, lc, lm, yc, ym)


def synth_layer_field(D: PlaneDiscretization, grid, rng: np.random.Generator,
                      draws: int | None = None) -> np.ndarray:
    """Draw ``X_eps`` at the positions ``grid``.

    With ``draws`` given, returns an array of shape ``(draws, len(grid))`` of
    independent realisations; otherwise a single realisation.
    """
    t = np.atleast_1d(np.asarray(grid, dtype=float))
    single = draws is None
    m = 1 if single else int(draws)
    freq = D.frequencies
    if freq.size == 0:
        out = np.zeros((m, t.size))
        return out[0] if single else out
    sd = np.sqrt(D.cell_variances)
    phase = np.multiply.outer(freq, t)
    basis = np.concatenate([sd[:, None] * np.cos(phase), sd[:, None] * np.sin(phase)])
    coeffs = rng.standard_normal((m, basis.shape[0]))
    out = coeffs @ basis
    return out[0] if single else out


def covariance_crosscheck(k, eps: float, lags: Sequence[float], draws: int,
                          rng: np.random.Generator, lambda_cells: int = 256,
                          y_cells: int = 32, chunk: int = 2000) -> dict:
    """Standardised deviation of the synthesised covariance from ``k_eps``.

    The field is drawn at ``0`` and at every lag; the empirical covariance
    ``mean(X(0) X(lag))`` (the mean is known to be zero) is compared with
    ``epsilon_kernel`` evaluated by quadrature, using the sample standard
    error of the products.
    """
    from .kernels import epsilon_kernel

    if k.spectral is None:
        raise NoSpectralForm(f"kernel {k.name!r} has no registered spectral measure")
    lags = np.asarray(lags, dtype=float)
    D = discretize_plane(k.spectral, eps, lambda_cells, y_cells)
    target = np.array([epsilon_kernel(k, eps, x, 1e-12, use_closed_form=False) for x in lags])
    if D.frequencies.size == 0:
        z = np.zeros_like(lags)
        return {"lags": lags, "target": target, "empirical": z, "stderr": z,
                "z": z, "max_z": 0.0}
    positions = np.concatenate([[0.0], lags])
    s1 = np.zeros(lags.size)
    s2 = np.zeros(lags.size)
    done = 0
    while done < draws:
        m = min(chunk, draws - done)
        X = synth_layer_field(D, positions, rng, draws=m)
        prod = X[:, :1] * X[:, 1:]
        s1 += prod.sum(axis=0)
        s2 += (prod ** 2).sum(axis=0)
        done += m
    mean = s1 / draws
    var = np.maximum(s2 / draws - mean ** 2, 0.0)
    se = np.sqrt(var / draws)
    z = np.where(se > 0, np.abs(mean - target) / np.where(se > 0, se, 1.0), 0.0)
    return {"lags": lags, "target": target, "empirical": mean, "stderr": se,
            "z": z, "max_z": float(z.max(initial=0.0))}
