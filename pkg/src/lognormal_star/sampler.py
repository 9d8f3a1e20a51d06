"""Grid sampling of the layered Gaussian fields and of the chaos measures.

Layer ``n`` of a :class:`ScaleLadder` is a stationary Gaussian field with
covariance ``k_eps(r / eps^n)``. Summing layers ``0..N`` and exponentiating
(normalised to unit mean) gives the cell masses of the approximating measure.
Stationary vectors are drawn by circulant embedding on a circle of ``2n``
points.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import linalg

from .kernels import EpsilonKernel, SeedKernel

CLAMP_BUDGET = 1e-6
DENSE_LIMIT = 4096


class NotPSD(RuntimeError):
    """Covariance could not be factorised: the kernel is not a valid covariance on this grid."""


class GridMismatch(ValueError):
    pass


class IncompatibleGrid(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    length: float
    cells: int

    def __post_init__(self):
        if self.length <= 0:
            raise ValueError("grid length must be positive")
        if self.cells < 2:
            raise ValueError("grid needs at least two cells")

    @property
    def spacing(self) -> float:
        return self.length / self.cells

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.cells) + 0.5) * self.spacing

    def to_dict(self) -> dict:
        return {"length": self.length, "cells": self.cells}


@dataclass(frozen=True)
class ScaleLadder:
    epsilon: float
    layers: int

    def __post_init__(self):
        if not 0.0 < self.epsilon < 1.0:
            raise ValueError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if self.layers < 0:
            raise ValueError("layer count must be >= 0")

    @property
    def small_scale(self) -> float:
        return self.epsilon ** self.layers

    @classmethod
    def auto(cls, kernel: SeedKernel, grid: GridSpec, epsilon: float) -> "ScaleLadder":
        """Deepest ladder whose finest correlation length reaches the grid spacing.

        The finest layer has correlation length ``length_scale * eps^N``; ``N``
        is the smallest integer bringing that down to ``grid.spacing``, capped
        so that the ladder never outruns the grid.
        """
        ell = min(kernel.length_scale, grid.length)
        ratio = math.log(ell / grid.spacing) / math.log(1.0 / epsilon)
        n = max(1, math.ceil(ratio - 1e-9))
        return cls(epsilon, min(n, cls.max_layers(grid, epsilon)))

    @staticmethod
    def max_layers(grid: GridSpec, epsilon: float) -> int:
        return max(1, math.ceil(math.log(grid.cells) / math.log(1.0 / epsilon) - 1e-9))

    def check(self, grid: GridSpec) -> None:
        if self.layers > self.max_layers(grid, self.epsilon):
            raise ValueError(
                f"ladder of {self.layers} layers at eps={self.epsilon} outruns a grid of "
                f"{grid.cells} cells")

    def covariance(self, kernel: SeedKernel, lags) -> np.ndarray:
        """Covariance of the sum of layers ``0..N``."""
        ke = EpsilonKernel(kernel, self.epsilon)
        lags = np.asarray(lags, dtype=float)
        out = np.zeros_like(lags)
        for n in range(self.layers + 1):
            out += ke(lags / self.epsilon ** n)
        return out

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon, "layers": self.layers}


@dataclass
class FieldSample:
    values: np.ndarray
    variance: float
    layer_index: int | str = "aggregate"


@dataclass
class MeasureSample:
    masses: np.ndarray
    grid: GridSpec
    y_factor: float = 1.0
    meta: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return float(self.masses.sum())

    def interval_mass(self, start: int, stop: int) -> float:
        """Mass of cells ``start..stop-1``."""
        return float(self.masses[start:stop].sum())


@dataclass(frozen=True)
class YLaw:
    """Law of the ergodic prefactor ``Y``."""

    kind: str = "deterministic"
    s2: float = 0.0
    c: float = 1.0

    def __post_init__(self):
        if self.kind not in ("deterministic", "lognormal", "constant"):
            raise ValueError(f"unknown Y law {self.kind!r}")
        if self.kind == "lognormal" and self.s2 < 0:
            raise ValueError("lognormal Y needs s2 >= 0")
        if self.kind == "constant" and self.c < 0:
            raise ValueError("Y must be nonnegative")

    def draw(self, rng: np.random.Generator) -> float:
        if self.kind == "deterministic":
            return 1.0
        if self.kind == "constant":
            return float(self.c)
        s = math.sqrt(self.s2)
        return float(math.exp(s * rng.standard_normal() - 0.5 * self.s2))

    def to_dict(self) -> dict:
        if self.kind == "lognormal":
            return {"kind": "lognormal", "s2": self.s2}
        if self.kind == "constant":
            return {"kind": "constant", "c": self.c}
        return {"kind": "deterministic"}


# ---------------------------------------------------------------------------
# stationary Gaussian vectors


class CirculantSampler:
    """Sampler for a centred stationary vector with covariance ``row[|i-j|]``.

    ``row`` holds the covariance at lags ``0, h, ..., n h`` (``n + 1`` values).
    The Toeplitz matrix is embedded in a circulant of size ``2n``; negative
    eigenvalues are clamped to zero if they carry at most ``CLAMP_BUDGET`` of
    the spectral energy. Otherwise, for ``n <= DENSE_LIMIT``, a dense
    factorisation is used instead.
    """

    def __init__(self, row: np.ndarray):
        row = np.asarray(row, dtype=float)
        self.n = row.size - 1
        self.variance = float(row[0])
        self.clamped_fraction = 0.0
        self.method = "zero"
        self._sqrt_eig = None
        self._chol = None
        if not np.any(row):
            return
        n = self.n
        m = 2 * n
        ext = np.concatenate([row, row[n - 1:0:-1]])
        eig = np.fft.rfft(ext).real
        weights = np.full(eig.size, 2.0)
        weights[0] = weights[-1] = 1.0
        energy = float(np.sum(weights * np.abs(eig)))
        neg = float(np.sum(weights * np.where(eig < 0, -eig, 0.0)))
        self.clamped_fraction = neg / energy if energy > 0 else 0.0
        if self.clamped_fraction <= CLAMP_BUDGET:
            scale = np.sqrt(np.clip(eig, 0.0, None))
            scale[1:-1] *= math.sqrt(0.5)
            self._sqrt_eig = scale * math.sqrt(m)
            self.method = "circulant"
            return
        if n > DENSE_LIMIT:
            raise NotPSD(
                f"circulant embedding clamps {self.clamped_fraction:.2e} of the spectral "
                f"energy (budget {CLAMP_BUDGET:g}) and n={n} exceeds the dense limit")
        self._chol = _dense_factor(row[:n])
        self.method = "dense"

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        n = self.n
        if self.method == "zero":
            return np.zeros(n)
        if self.method == "dense":
            return self._chol @ rng.standard_normal(n)
        m = 2 * n
        z = rng.standard_normal(m)
        w = np.empty(n + 1, dtype=complex)
        w.real[0] = z[0]
        w.imag[0] = 0.0
        w.real[n] = z[1]
        w.imag[n] = 0.0
        w.real[1:n] = z[2:n + 1]
        w.imag[1:n] = z[n + 1:]
        w *= self._sqrt_eig
        return np.fft.irfft(w, m)[:n]


def _dense_factor(row: np.ndarray) -> np.ndarray:
    cov = linalg.toeplitz(row)
    try:
        return linalg.cholesky(cov, lower=True)
    except linalg.LinAlgError:
        pass
    vals, vecs = linalg.eigh(cov)
    if vals.min() < -1e-10 * max(vals.max(), 1e-300):
        raise NotPSD(f"covariance matrix has eigenvalue {vals.min():.3e}")
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def sample_stationary_field(K_eval: Callable, grid: GridSpec,
                            rng: np.random.Generator) -> FieldSample:
    """One centred stationary Gaussian vector on the cell midpoints of ``grid``."""
    lags = np.arange(grid.cells + 1) * grid.spacing
    sampler = CirculantSampler(np.asarray(K_eval(lags), dtype=float))
    return FieldSample(sampler.draw(rng), sampler.variance)


def sample_layer(k: SeedKernel, ladder: ScaleLadder, n_layer: int, grid: GridSpec,
                 rng: np.random.Generator) -> FieldSample:
    """Layer ``n_layer`` of the ladder: covariance ``k_eps(r / eps^n_layer)``."""
    if not 0 <= n_layer <= ladder.layers:
        raise ValueError(f"layer {n_layer} outside 0..{ladder.layers}")
    ke = EpsilonKernel(k, ladder.epsilon)
    scale = ladder.epsilon ** n_layer
    sample = sample_stationary_field(lambda r: ke(r / scale), grid, rng)
    sample.layer_index = n_layer
    return sample


def build_measure(layers: Sequence[FieldSample], grid: GridSpec, Y: YLaw,
                  rng: np.random.Generator, meta: dict | None = None) -> MeasureSample:
    """Cell masses ``Y h exp(sum X - sum Var / 2)``; ``Y`` is drawn once."""
    y = Y.draw(rng)
    log_density = np.zeros(grid.cells)
    for layer in layers:
        if layer.values.shape != (grid.cells,):
            raise GridMismatch("layer does not live on this grid")
        log_density += layer.values - 0.5 * layer.variance
    masses = (y * grid.spacing) * np.exp(log_density)
    return MeasureSample(masses, grid, y, dict(meta or {}))


def star_compose(omega: FieldSample, M_eps: MeasureSample, grid: GridSpec) -> MeasureSample:
    """Multiply ``M_eps`` cell by cell by ``exp(omega - Var(omega)/2)``.

    ``omega`` carries the raw Gaussian values; the unit-mean normalisation is
    applied here.
    """
    if M_eps.grid != grid or omega.values.shape != (grid.cells,):
        raise GridMismatch("omega, M_eps and grid must share the same grid")
    factor = np.exp(omega.values - 0.5 * omega.variance)
    return MeasureSample(factor * M_eps.masses, grid, M_eps.y_factor, dict(M_eps.meta))


def zoom_rescale(M: MeasureSample, eps: float, target: GridSpec | None = None) -> MeasureSample:
    """The measure ``A -> eps M(A / eps)`` on the grid shrunk by ``eps``.

    Without ``target`` the cell count is kept and the spacing becomes
    ``eps h``. With ``target``, the shrunk cells are aggregated onto it, which
    requires the target spacing to be a whole multiple of ``eps h`` and the
    target to fit inside the shrunk domain.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {eps}")
    shrunk = GridSpec(eps * M.grid.length, M.grid.cells)
    masses = eps * M.masses
    if target is None:
        return MeasureSample(masses, shrunk, M.y_factor, dict(M.meta))
    ratio = target.spacing / shrunk.spacing
    block = int(round(ratio))
    if block < 1 or not math.isclose(ratio, block, rel_tol=1e-9):
        raise IncompatibleGrid(
            f"target spacing {target.spacing} is not a multiple of {shrunk.spacing}")
    if target.cells * block > shrunk.cells:
        raise IncompatibleGrid("target grid extends beyond the zoomed domain")
    agg = masses[: target.cells * block].reshape(target.cells, block).sum(axis=1)
    return MeasureSample(agg, target, M.y_factor, dict(M.meta))
