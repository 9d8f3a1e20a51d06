"""Built-in seed kernels addressable by name.

=========  ===================  ===============================================
name       parameters           k(u)
=========  ===================  ===============================================
cone       lambda2, T           lambda2 (1 - |u|/T) on |u| <= T, 0 beyond
gaussian   sigma                exp(-u^2 / 2 sigma^2) / (sigma sqrt(2 pi))
ou         sigma, theta         sigma^2 / (2 theta) exp(-theta |u|)
cosine     (none)               cos(u)
zero       (none)               0
constant   value                value (no convergent K; used for error paths)
=========  ===================  ===============================================
"""
from __future__ import annotations

import math

import numpy as np
from scipy import special

from .kernels import SeedKernel
from .spectral import SpectralMeasure


def cone(lambda2: float = 1.0, T: float = 1.0) -> SeedKernel:
    if lambda2 < 0 or T <= 0:
        raise ValueError("cone kernel needs lambda2 >= 0 and T > 0")

    def k(u):
        return lambda2 * np.clip(1.0 - u / T, 0.0, None)

    def K(r):
        r = np.asarray(r, dtype=float)
        inside = r < T
        rr = np.where(inside, r, T)
        return np.where(inside, lambda2 * (np.log(T / rr) + rr / T - 1.0), 0.0)

    def k_eps(r, eps):
        r = np.asarray(r, dtype=float)
        safe = np.where(r > 0, r, T)
        near = lambda2 * (math.log(1.0 / eps) + r / T - r / (eps * T))
        mid = lambda2 * (np.log(T / safe) + r / T - 1.0)
        return np.where(r >= T, 0.0, np.where(r >= eps * T, mid, near))

    def tail(x):
        x = np.asarray(x, dtype=float)
        return np.where(x < T, k(x) / np.where(x > 0, x, 1.0), 0.0)

    return SeedKernel(
        name="cone", evaluator=k, k0=float(lambda2), support_radius=float(T),
        params={"lambda2": lambda2, "T": T}, length_scale=float(T),
        log_closed_form=K, eps_closed_form=k_eps, tail_profile=tail,
    )


def gaussian(sigma: float = 1.0) -> SeedKernel:
    if sigma <= 0:
        raise ValueError("gaussian kernel needs sigma > 0")
    k0 = 1.0 / (sigma * math.sqrt(2.0 * math.pi))

    def k(u):
        return k0 * np.exp(-0.5 * (u / sigma) ** 2)

    def K(r):
        # int_r^inf exp(-u^2/2s^2)/u du = E1(r^2 / 2 s^2) / 2
        return 0.5 * k0 * special.exp1(0.5 * (np.asarray(r, dtype=float) / sigma) ** 2)

    def tail(x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, k(x) / np.where(x > 0, x, 1.0), np.inf)

    def density(x):
        return np.exp(-0.5 * (sigma * np.asarray(x, dtype=float)) ** 2) / (2.0 * math.pi)

    def density_tail(x):
        return 0.5 * k0 * special.erfc(sigma * x / math.sqrt(2.0))

    return SeedKernel(
        name="gaussian", evaluator=k, k0=k0, params={"sigma": sigma},
        length_scale=float(sigma), log_closed_form=K, tail_profile=tail,
        spectral=SpectralMeasure.from_density(density, k0, cdf_tail=density_tail),
    )


def ou(sigma: float = 1.0, theta: float = 1.0) -> SeedKernel:
    if sigma <= 0 or theta <= 0:
        raise ValueError("ou kernel needs sigma > 0 and theta > 0")
    k0 = sigma ** 2 / (2.0 * theta)

    def k(u):
        return k0 * np.exp(-theta * u)

    def K(r):
        return k0 * special.exp1(theta * np.asarray(r, dtype=float))

    def tail(x):
        x = np.asarray(x, dtype=float)
        return np.where(x > 0, k(x) / np.where(x > 0, x, 1.0), np.inf)

    # Lorentzian: int e^{i l t} theta / (pi (theta^2 + l^2)) dl = e^{-theta |t|}
    def density(x):
        x = np.asarray(x, dtype=float)
        return sigma ** 2 / (2.0 * math.pi * (theta ** 2 + x ** 2))

    def density_tail(x):
        return k0 * (0.5 - math.atan(x / theta) / math.pi)

    return SeedKernel(
        name="ou", evaluator=k, k0=k0, params={"sigma": sigma, "theta": theta},
        length_scale=1.0 / theta, log_closed_form=K, tail_profile=tail,
        spectral=SpectralMeasure.from_density(density, k0, cdf_tail=density_tail),
    )


def cosine() -> SeedKernel:
    def K(r):
        # int_r^inf cos(u)/u du = -Ci(r)
        return -special.sici(np.asarray(r, dtype=float))[1]

    return SeedKernel(
        name="cosine", evaluator=np.cos, k0=1.0, length_scale=1.0,
        log_closed_form=K,
        spectral=SpectralMeasure.from_atoms([-1.0, 1.0], [0.5, 0.5]),
    )


def zero() -> SeedKernel:
    return SeedKernel(
        name="zero", evaluator=np.zeros_like, k0=0.0, support_radius=0.0,
        length_scale=1.0, log_closed_form=np.zeros_like,
        eps_closed_form=lambda r, eps: np.zeros_like(np.asarray(r, dtype=float)),
        tail_profile=np.zeros_like,
        spectral=SpectralMeasure("atoms", 0.0, locations=np.empty(0), masses=np.empty(0)),
    )


def constant(value: float = 1.0) -> SeedKernel:
    return SeedKernel(
        name="constant", evaluator=lambda u: np.full(np.shape(u), float(value)),
        k0=float(value), params={"value": value}, length_scale=1.0,
        spectral=SpectralMeasure.from_atoms([0.0], [value]) if value > 0 else None,
    )


CATALOG = {
    "cone": (cone, ("lambda2", "T")),
    "gaussian": (gaussian, ("sigma",)),
    "ou": (ou, ("sigma", "theta")),
    "cosine": (cosine, ()),
    "zero": (zero, ()),
    "constant": (constant, ("value",)),
}


def make_kernel(name: str, **params) -> SeedKernel:
    """Build a catalog kernel, rejecting unknown names and parameters."""
    try:
        factory, allowed = CATALOG[name]
    except KeyError:
        raise KeyError(f"unknown kernel {name!r}; known: {sorted(CATALOG)}") from None
    extra = set(params) - set(allowed)
    if extra:
        raise TypeError(f"kernel {name!r} does not take {sorted(extra)}; allowed: {list(allowed)}")
    return factory(**{k: float(v) for k, v in params.items()})
