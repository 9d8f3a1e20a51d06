"""Estimators and hypothesis checks over ensembles of measure samples.

Every estimator reduces each realisation to a small row of numbers (via
``ensemble.map``), then works on the stacked rows. Error bars come from a
nonparametric bootstrap over realisations, so dependence between intervals
inside one realisation is accounted for.

An *ensemble* is anything with a ``map(func)`` method (``Ensemble``,
``DiskEnsemble``) or a plain sequence of :class:`MeasureSample`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial
from typing import Sequence

import numpy as np
from scipy import stats as sps

from .kernels import LogKernel, SeedKernel, moment_order_bound
from .sampler import GridSpec, MeasureSample

BOOTSTRAP = 200
Z_MULT = 4.0


class MomentOutOfRange(ValueError):
    """Requested moment order is not finite for the generating kernel."""


class InsufficientSamples(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# helpers


def _map(ensemble, func) -> list:
    if hasattr(ensemble, "map"):
        return ensemble.map(func)
    return [func(s) for s in ensemble]


def _first_grid(ensemble) -> GridSpec:
    if hasattr(ensemble, "grid"):
        return ensemble.grid
    return ensemble[0].grid


def _kernel_k0(ensemble, k0: float | None) -> float | None:
    if k0 is not None:
        return k0
    kernel = getattr(ensemble, "kernel", None)
    if isinstance(kernel, SeedKernel):
        return kernel.k0
    return None


def _cells(length: float, grid: GridSpec, what: str) -> int:
    c = length / grid.spacing
    ci = int(round(c))
    if ci < 1 or not math.isclose(c, ci, rel_tol=1e-9):
        raise ValueError(f"{what}={length} is not a whole number of cells (h={grid.spacing})")
    return ci


def bootstrap_indices(n: int, resamples: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0xB007,)))
    return rng.integers(0, n, size=(resamples, n))


def _spread(values: np.ndarray) -> float:
    # deviations from the first entry: exactly zero for identical values
    values = np.asarray(values, dtype=float)
    return float(np.std(values - values[0], ddof=1)) if values.size > 1 else 0.0


def _block_sums(masses: np.ndarray, block: int) -> np.ndarray:
    usable = (masses.size // block) * block
    return masses[:usable].reshape(-1, block).sum(axis=1)


def _window_sums(masses: np.ndarray, width: int) -> np.ndarray:
    c = np.concatenate([[0.0], np.cumsum(masses)])
    return c[width:] - c[:-width]


@dataclass
class Report:
    """Outcome of one check: a table of estimates plus a verdict."""

    test_name: str
    passed: bool
    rows: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def verdict(self) -> dict:
        return {"test_name": self.test_name, "pass": bool(self.passed),
                "details": _jsonable(self.details)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else str(x)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _row(x, estimate, stderr, lo, hi) -> dict:
    return {"x": float(x), "estimate": float(estimate), "stderr": float(stderr),
            "ci_lo": float(lo), "ci_hi": float(hi)}


# ---------------------------------------------------------------------------
# moment accumulation


def _power_row(blocks: tuple, qs: tuple, sample: MeasureSample) -> np.ndarray:
    out = np.empty((len(blocks), len(qs)))
    total = np.sum(sample.masses)
    for i, b in enumerate(blocks):
        s = _block_sums(sample.masses, b)
        full = s.size * b == sample.masses.size
        for j, q in enumerate(qs):
            # blocks tiling the grid add up to the total mass; using it
            # directly keeps the q = 1 row free of scale-dependent rounding
            out[i, j] = total if (q == 1.0 and full) else np.sum(s ** q)
    return out


def _two_point_row(width: int, seps: tuple, sample: MeasureSample) -> np.ndarray:
    w = _window_sums(sample.masses, width)
    out = np.empty(len(seps))
    for i, s in enumerate(seps):
        out[i] = np.sum(w[: w.size - s] * w[s:])
    return out


@dataclass
class MomentAccumulator:
    """Mergeable per-realisation power sums and two-point sums.

    ``blocks`` are dyadic interval sizes in cells; for each realisation the
    accumulator keeps ``sum_blocks M(block)^q`` for every ``q`` and, for each
    separation in ``separations`` (cells), ``sum_x M([x, x+w]) M([x+s, x+s+w])``
    over sliding windows of ``window`` cells. Rows are keyed by realisation
    index and totals are always recomputed in index order, so merging is
    commutative and associative bit for bit.
    """

    blocks: tuple
    qs: tuple
    separations: tuple = ()
    window: int = 1
    power_rows: dict = field(default_factory=dict)
    pair_rows: dict = field(default_factory=dict)

    def absorb(self, index: int, sample: MeasureSample) -> None:
        if index in self.power_rows:
            raise ValueError(f"realization {index} already absorbed")
        self.power_rows[index] = _power_row(self.blocks, self.qs, sample)
        if self.separations:
            self.pair_rows[index] = _two_point_row(self.window, self.separations, sample)

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        if (self.blocks, self.qs, self.separations, self.window) != (
                other.blocks, other.qs, other.separations, other.window):
            raise ValueError("cannot merge accumulators with different layouts")
        overlap = set(self.power_rows) & set(other.power_rows)
        if overlap:
            raise ValueError(f"realizations {sorted(overlap)[:5]} present in both")
        return MomentAccumulator(self.blocks, self.qs, self.separations, self.window,
                                 {**self.power_rows, **other.power_rows},
                                 {**self.pair_rows, **other.pair_rows})

    @property
    def count(self) -> int:
        return len(self.power_rows)

    def stacked(self) -> np.ndarray:
        return np.stack([self.power_rows[i] for i in sorted(self.power_rows)])

    def power_sums(self) -> np.ndarray:
        return self.stacked().sum(axis=0)

    def pair_sums(self) -> np.ndarray:
        return np.stack([self.pair_rows[i] for i in sorted(self.pair_rows)]).sum(axis=0)


# ---------------------------------------------------------------------------
# structure exponents


@dataclass
class ScalingFit:
    """Fitted exponent for one moment order; ``log_moments`` are base-2 logs."""

    q: float
    slope: float
    stderr: float
    fit_range: tuple
    r_squared: float
    scales: np.ndarray = None
    log_moments: np.ndarray = None


def default_scales(grid: GridSpec) -> np.ndarray:
    """``L 2^-j`` for ``j = 3 .. log2(n) - 3``."""
    j_max = int(round(math.log2(grid.cells)))
    return np.array([grid.length * 2.0 ** -j for j in range(3, j_max - 2)])


def _ols(x, y):
    """Slope and r^2 of the least-squares line, in centred form.

    The centred sums are exact for small integer or half-integer inputs, so
    a perfectly linear log2 table gives its slope without rounding.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.dot(dx, dx))
    slope = float(np.dot(dx, dy)) / sxx
    resid = dy - slope * dx
    ss_tot = float(np.dot(dy, dy))
    r2 = 1.0 - float(np.dot(resid, resid)) / ss_tot if ss_tot > 0 else 1.0
    return slope, r2


def estimate_xi(ensemble, q_list: Sequence[float], fit_range: tuple | None = None, *,
                k0: float | None = None, bootstrap: int = BOOTSTRAP, seed: int = 0,
                min_realizations: int = 100) -> list[ScalingFit]:
    """Fit ``E[M([0,t])^q] ~ C t^xi(q)`` over dyadic scales.

    ``E[M([0,t])^q]`` is estimated by averaging over all disjoint intervals
    of length ``t`` in every realisation (stationarity). The slope is the OLS
    fit of the log moment on ``ln t``; its standard error is the spread over
    bootstrap resamples of realisations.
    """
    k0 = _kernel_k0(ensemble, k0)
    if k0 is not None and k0 > 0:
        bound = 1.0 + moment_order_bound(k0)
        bad = [q for q in q_list if q >= bound]
        if bad:
            raise MomentOutOfRange(f"q={bad} >= 1 + delta_max = {bound}")
    grid = _first_grid(ensemble)
    scales = default_scales(grid)
    if fit_range is not None:
        lo, hi = fit_range
        scales = scales[(scales >= lo * (1 - 1e-12)) & (scales <= hi * (1 + 1e-12))]
    if scales.size < 4:
        raise ValueError(f"fit needs at least 4 scales, got {scales.size}")
    blocks = tuple(_cells(t, grid, "scale") for t in scales)
    qs = tuple(float(q) for q in q_list)
    rows = np.stack(_map(ensemble, partial(_power_row, blocks, qs)))
    if rows.shape[0] < min_realizations:
        raise InsufficientSamples(f"{rows.shape[0]} realizations < {min_realizations}")
    nblocks = np.array([grid.cells // b for b in blocks], dtype=float)[:, None]
    # base-2 logs: dyadic scales give integer abscissae
    lt = np.log2(scales)

    # mean block moment = (sum over the L/t blocks) * t / L, so the slope is
    # 1 + slope of log2 E[sum_blocks M^q]; for q = 1 that sum is the same
    # number at every scale and the slope comes out exactly 1
    def slopes(sub):
        sums = sub.mean(axis=0)
        return [1.0 + _ols(lt, np.log2(sums[:, j]))[0] for j in range(len(qs))]

    sums = rows.mean(axis=0)
    moments = sums / nblocks
    idx = bootstrap_indices(rows.shape[0], bootstrap, seed)
    boot = np.array([slopes(rows[i]) for i in idx])
    point = slopes(rows)
    fits = []
    for j, q in enumerate(qs):
        r2 = _ols(lt, np.log2(moments[:, j]))[1]
        fits.append(ScalingFit(q, point[j], _spread(boot[:, j]),
                               (float(scales.min()), float(scales.max())), r2,
                               scales, np.log2(moments[:, j])))
    return fits


# ---------------------------------------------------------------------------
# two-point statistics


def _pair_row(width: int, seps: tuple, sample: MeasureSample):
    w = _window_sums(sample.masses, width)
    means = np.array([np.mean(w[: w.size - s] * w[s:]) for s in seps])
    y_hat = sample.total / sample.grid.length
    return means, sample.y_factor, y_hat


def recover_kernel(ensemble, separations: Sequence[float], h: float, *,
                   y_mode: str = "known", y_floor: float = 1e-3, tolerance: float | None = None,
                   bootstrap: int = BOOTSTRAP, seed: int = 0) -> Report:
    """``K(s) ~ ln(E[M([0,h]) M([s,s+h])] / h^2) - 2 ln Y``.

    ``y_mode="known"`` divides each realisation by its recorded ``Y``;
    ``y_mode="ergodic"`` uses the whole-domain average ``M([0,L])/L`` instead.
    Realisations whose ``Y`` falls below ``y_floor`` are dropped and counted.
    """
    grid = _first_grid(ensemble)
    seps = np.asarray(separations, dtype=float)
    if h > seps.min() / 4 * (1 + 1e-12):
        raise ValueError("interval length h must be <= min(separations) / 4")
    width = _cells(h, grid, "h")
    s_cells = tuple(_cells(s, grid, "separation") for s in seps)
    if max(s_cells) + width > grid.cells:
        raise ValueError("separation does not fit in the domain")
    out = _map(ensemble, partial(_pair_row, width, s_cells))
    means = np.stack([o[0] for o in out])
    y = np.array([o[1] if y_mode == "known" else o[2] for o in out])
    if y_mode not in ("known", "ergodic"):
        raise ValueError(f"unknown y_mode {y_mode!r}")
    keep = y >= y_floor
    flagged = int((~keep).sum())
    vals = means[keep] / (y[keep, None] ** 2)
    if vals.shape[0] == 0:
        raise InsufficientSamples("every realization fell below the Y floor")

    def est(sub):
        with np.errstate(divide="ignore"):
            return np.log(sub.mean(axis=0) / (h * h))

    point = est(vals)
    idx = bootstrap_indices(vals.shape[0], bootstrap, seed)
    boot = np.array([est(vals[i]) for i in idx])
    lo, hi = np.percentile(boot, [2.5, 97.5], axis=0)
    rows = [_row(s, point[i], _spread(boot[:, i]), lo[i], hi[i]) for i, s in enumerate(seps)]
    half = 0.5 * (hi - lo)
    if tolerance is not None and np.any(half > tolerance):
        raise InsufficientSamples(
            f"CI half-widths {np.round(half, 4).tolist()} exceed tolerance {tolerance}")
    return Report("kernel_recovery", True, rows,
                  {"h": h, "flagged_low_y": flagged, "realizations": int(vals.shape[0]),
                   "ci_half_width": half})


def mixing_decay(ensemble, distances: Sequence[float], interval: float, *,
                 kernel: SeedKernel | None = None, bootstrap: int = BOOTSTRAP,
                 seed: int = 0) -> Report:
    """``|E[M(A) M(B)] / (Y^2 |A||B|) - 1|`` for intervals of length
    ``interval`` at each gap, against the bound ``sup_{|r|>=d} |e^K(r) - 1|``.

    The bootstrap CI is built for the signed deviation and mapped through
    ``abs``, so it reaches 0 whenever the signed CI straddles 0. A row is
    *dominated* when the lower end of that CI lies at or below the bound.
    """
    grid = _first_grid(ensemble)
    kernel = kernel or getattr(ensemble, "kernel", None)
    width = _cells(interval, grid, "interval")
    seps = tuple(width + _cells(d, grid, "distance") for d in distances)
    if max(seps) + width > grid.cells:
        raise ValueError("pairs do not fit in the domain")
    out = _map(ensemble, partial(_pair_row, width, seps))
    vals = np.stack([o[0] / o[1] ** 2 for o in out])
    a2 = interval * interval

    def est(sub):
        return sub.mean(axis=0) / a2 - 1.0

    point = est(vals)
    idx = bootstrap_indices(vals.shape[0], bootstrap, seed)
    boot = np.array([est(vals[i]) for i in idx])
    lo, hi = np.percentile(boot, [2.5, 97.5], axis=0)
    abs_lo = np.where((lo <= 0) & (hi >= 0), 0.0, np.minimum(np.abs(lo), np.abs(hi)))
    abs_hi = np.maximum(np.abs(lo), np.abs(hi))
    rows, bounds, dominated = [], [], []
    for i, d in enumerate(distances):
        b = mixing_bound(kernel, d) if kernel is not None else math.nan
        rows.append(_row(d, abs(point[i]), _spread(boot[:, i]), abs_lo[i], abs_hi[i]))
        bounds.append(b)
        dominated.append(bool(abs_lo[i] <= b) if not math.isnan(b) else True)
    return Report("mixing", all(dominated), rows,
                  {"interval": interval, "bound": bounds, "dominated": dominated,
                   "signed_estimate": point})


def mixing_bound(kernel: SeedKernel, d: float, reach: float = 1e3, probes: int = 4000) -> float:
    """``sup_{|r| >= d} |exp(K(r)) - 1|`` on a geometric probe grid."""
    r = d * np.logspace(0, math.log10(max(reach / d, 10.0)), probes)
    if kernel.support_radius is not None:
        r = r[r < kernel.support_radius]
        if r.size == 0:
            return 0.0
    K = LogKernel(kernel)(r)
    return float(np.max(np.abs(np.expm1(K))))


# ---------------------------------------------------------------------------
# star equation


def _prefix_row(cells: tuple, sample: MeasureSample) -> np.ndarray:
    c = np.cumsum(sample.masses)
    return np.array([c[n - 1] for n in cells])


def compare_samples(a: np.ndarray, b: np.ndarray, labels: Sequence[float],
                    z_mult: float = Z_MULT, ks_alpha: float = 0.01) -> Report:
    """Two-sample comparison of interval masses.

    Each report row holds the difference of the ``a`` and ``b`` means of
    ``M`` (first row per interval) or ``M^2`` (second row) with its
    standard error; ``details["moments"]`` labels the rows.

    ``a`` and ``b`` have one row per realisation and one column per interval;
    the first column is also compared in law through a Kolmogorov-Smirnov
    test on ``ln M``. The result is symmetric in ``a`` and ``b``.
    """
    rows, zs, moments = [], [], []
    for j, lab in enumerate(labels):
        for power in (1, 2):
            xa, xb = a[:, j] ** power, b[:, j] ** power
            diff = xa.mean() - xb.mean()
            se = math.sqrt(xa.var(ddof=1) / xa.size + xb.var(ddof=1) / xb.size)
            z = abs(diff) / se if se > 0 else (0.0 if diff == 0 else math.inf)
            zs.append(z)
            rows.append(_row(lab, diff, se, diff - z_mult * se, diff + z_mult * se))
            moments.append({"x": float(lab), "moment": power, "mean_a": float(xa.mean()),
                            "mean_b": float(xb.mean()), "z": z})
    with np.errstate(divide="ignore"):
        la, lb = np.log(a[:, 0]), np.log(b[:, 0])
    ks = sps.ks_2samp(la, lb)
    passed = max(zs) <= z_mult and ks.pvalue >= ks_alpha
    return Report("star_equation", bool(passed), rows,
                  {"moments": moments, "max_z": max(zs), "ks_statistic": float(ks.statistic),
                   "ks_pvalue": float(ks.pvalue), "z_mult": z_mult, "ks_alpha": ks_alpha})


def star_equation_test(k: SeedKernel, eps: float, grid: GridSpec, draws: int, *,
                       master_seed: int = 0, layers: int | None = None,
                       omega_epsilon: float | None = None, workers: int = 1) -> Report:
    """Compare the direct ``N``-layer measure with ``exp(omega_eps) M^eps``.

    ``M^eps`` is an independent ``(N-1)``-layer measure on the dilated domain
    shrunk back by ``eps``. Moments of ``M([0,a])`` for ``a in {L/8, L/4}``
    must agree within 4 standard errors and the KS test on ``ln M([0,L/8])``
    must give ``p >= 0.01``.
    """
    from .ensemble import Ensemble

    seeds = np.random.SeedSequence(master_seed).generate_state(2)
    common = dict(kernel=k, grid=grid, epsilon=eps, layers=layers, realizations=draws,
                  workers=workers)
    direct = Ensemble(master_seed=int(seeds[0]), mode="direct", **common)
    composed = Ensemble(master_seed=int(seeds[1]), mode="composed",
                        omega_epsilon=omega_epsilon, **common)
    lengths = (grid.length / 8, grid.length / 4)
    cells = tuple(_cells(a, grid, "interval") for a in lengths)
    a = np.stack(direct.map(partial(_prefix_row, cells)))
    b = np.stack(composed.map(partial(_prefix_row, cells)))
    rep = compare_samples(a, b, lengths)
    rep.details.update({"epsilon": eps, "omega_epsilon": omega_epsilon or eps,
                        "layers": direct.ladder.layers, "draws": draws})
    return rep


# ---------------------------------------------------------------------------
# ergodicity, small intervals, atoms


def _average_row(cells: tuple, sample: MeasureSample):
    c = np.cumsum(sample.masses)
    return np.array([c[n - 1] for n in cells]), sample.y_factor


def ergodic_average(ensemble, T_list: Sequence[float], *, tolerance: float = 0.2,
                    min_fraction: float = 0.9, relative_to_y: bool = False) -> Report:
    """Per-realisation ``M([0,T]) / T``; at the largest window the fraction of
    realisations within ``tolerance`` of 1 (or of ``Y`` when
    ``relative_to_y``) must reach ``min_fraction``.
    """
    grid = _first_grid(ensemble)
    Ts = np.asarray(T_list, dtype=float)
    cells = tuple(_cells(T, grid, "window") for T in Ts)
    out = _map(ensemble, partial(_average_row, cells))
    avg = np.stack([o[0] for o in out]) / Ts
    y = np.array([o[1] for o in out])
    ref = y[:, None] if relative_to_y else 1.0
    dev = np.abs(avg / ref - 1.0) if relative_to_y else np.abs(avg - 1.0)
    rows = []
    for j, T in enumerate(Ts):
        col = avg[:, j]
        rows.append(_row(T, col.mean(), col.std(ddof=1) / math.sqrt(col.size),
                         np.percentile(col, 5), np.percentile(col, 95)))
    frac = float(np.mean(dev[:, -1] <= tolerance))
    return Report("ergodic", frac >= min_fraction, rows,
                  {"fraction_within": frac, "tolerance": tolerance,
                   "min_fraction": min_fraction, "mean_abs_deviation": dev.mean(axis=0)})


def _block_power_row(blocks: tuple, power: float, sample: MeasureSample) -> np.ndarray:
    return np.array([np.mean(_block_sums(sample.masses, b) ** power) for b in blocks])


def small_interval_moments(ensemble, gamma: float, n_list: Sequence[int], *,
                           k0: float | None = None, bootstrap: int = BOOTSTRAP,
                           seed: int = 0) -> Report:
    """Table ``n -> n^(1+rho) E[M([0,1/n])^(1+gamma)]`` with
    ``rho = gamma - (gamma^2 + gamma) / (1 + delta_max)``.

    The table passes when its log-log slope over the largest decade of ``n``
    is not significantly positive (slope <= 2 bootstrap standard errors).
    """
    k0 = _kernel_k0(ensemble, k0)
    if k0 is None:
        raise ValueError("k0 is required when the ensemble does not carry a kernel")
    delta = moment_order_bound(k0)
    if gamma >= delta:
        raise MomentOutOfRange(f"gamma={gamma} >= delta_max={delta}")
    rho = gamma if math.isinf(delta) else gamma - (gamma ** 2 + gamma) / (1.0 + delta)
    grid = _first_grid(ensemble)
    ns = np.asarray(sorted(n_list), dtype=float)
    blocks = tuple(_cells(1.0 / n, grid, "1/n") for n in ns)
    vals = np.stack(_map(ensemble, partial(_block_power_row, blocks, 1.0 + gamma)))
    weight = ns ** (1.0 + rho)
    table = weight * vals.mean(axis=0)
    idx = bootstrap_indices(vals.shape[0], bootstrap, seed)
    boot = np.array([weight * vals[i].mean(axis=0) for i in idx])
    lo, hi = np.percentile(boot, [2.5, 97.5], axis=0)
    top = ns >= ns.max() / 10.0
    if top.sum() >= 2:
        ln = np.log(ns[top])
        slope = _ols(ln, np.log(table[top]))[0]
        bslopes = np.array([_ols(ln, np.log(b[top]))[0] for b in boot])
        se = _spread(bslopes)
    else:
        slope, se = 0.0, 0.0
    bounded = slope <= 2.0 * se + 1e-12
    rows = [_row(n, table[i], _spread(boot[:, i]), lo[i], hi[i]) for i, n in enumerate(ns)]
    return Report("small_interval_moments", bool(bounded), rows,
                  {"gamma": gamma, "rho": rho, "top_decade_slope": slope,
                   "slope_stderr": se})


def _exceed_row(blocks: tuple, thresholds: np.ndarray, sample: MeasureSample) -> np.ndarray:
    out = np.empty((len(blocks), thresholds.shape[1]))
    for i, b in enumerate(blocks):
        s = _block_sums(sample.masses, b)
        for j in range(thresholds.shape[1]):
            out[i, j] = np.mean(s > thresholds[i, j])
    return out


def atom_scan(ensemble, alpha_list: Sequence[float], n_list: Sequence[int], *,
              bootstrap: int = BOOTSTRAP, seed: int = 0) -> list[Report]:
    """Tables ``n -> n P(M([0,1/n]) > alpha)``, one report per ``alpha``.

    Each ``alpha`` is a number or a callable ``n -> threshold``.

    A table passes when it is non-increasing in ``n`` and ends strictly below
    where it starts (or is identically zero).
    """
    grid = _first_grid(ensemble)
    ns = np.asarray(sorted(n_list), dtype=float)
    blocks = tuple(_cells(1.0 / n, grid, "1/n") for n in ns)
    alphas = list(alpha_list)
    thresholds = np.array([[a(n) if callable(a) else float(a) for a in alphas] for n in ns])
    vals = np.stack(_map(ensemble, partial(_exceed_row, blocks, thresholds)))
    idx = bootstrap_indices(vals.shape[0], bootstrap, seed)
    reports = []
    for j, a in enumerate(alphas):
        table = ns * vals[:, :, j].mean(axis=0)
        boot = np.array([ns * vals[i, :, j].mean(axis=0) for i in idx])
        lo, hi = np.percentile(boot, [2.5, 97.5], axis=0)
        steps = np.diff(table)
        decreasing = bool(np.all(steps <= 0) and (table[-1] < table[0] or not table.any()))
        rows = [_row(n, table[i], _spread(boot[:, i]), lo[i], hi[i]) for i, n in enumerate(ns)]
        label = getattr(a, "__name__", "callable") if callable(a) else float(a)
        reports.append(Report("atoms", decreasing, rows, {"alpha": label}))
    return reports


# ---------------------------------------------------------------------------
# cut-off


def _cutoff_row(width: int, gap: int, sample: MeasureSample):
    stride = 2 * width + gap
    m = sample.masses
    starts = np.arange(0, m.size - stride + 1, stride)
    c = np.concatenate([[0.0], np.cumsum(m)])
    a = c[starts + width] - c[starts]
    b = c[starts + stride] - c[starts + width + gap]
    return a, b


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    den = math.sqrt(float(np.dot(a, a)) * float(np.dot(b, b)))
    return float(np.dot(a, b)) / den if den > 0 else math.nan


def cutoff_independence(ensemble, distance: float, interval: float, *,
                        expect: str = "independent", z_mult: float = Z_MULT,
                        bootstrap: int = BOOTSTRAP, seed: int = 0) -> Report:
    """Pearson correlation of ``M(A)`` and ``M(B)`` for intervals of length
    ``interval`` separated by a gap of ``distance`` plus one cell.

    ``expect="independent"`` passes when ``|corr|`` is within ``z_mult``
    bootstrap standard errors of 0; ``expect="positive"`` passes when
    ``corr > z_mult * stderr``. Disjoint pairs tile each realisation; the
    bootstrap resamples whole realisations.
    """
    grid = _first_grid(ensemble)
    width = _cells(interval, grid, "interval")
    gap = _cells(distance, grid, "distance") + 1
    if 2 * width + gap > grid.cells:
        raise ValueError("block pair does not fit in the domain")
    out = _map(ensemble, partial(_cutoff_row, width, gap))
    A = np.stack([o[0] for o in out])
    B = np.stack([o[1] for o in out])
    corr = _pearson(A.ravel(), B.ravel())
    if math.isnan(corr):
        return Report("cutoff", expect == "independent", [_row(distance, 0.0, 0.0, 0.0, 0.0)],
                      {"degenerate": True, "expect": expect})
    idx = bootstrap_indices(A.shape[0], bootstrap, seed)
    boot = np.array([_pearson(A[i].ravel(), B[i].ravel()) for i in idx])
    se = float(np.std(boot, ddof=1))
    lo, hi = np.percentile(boot, [2.5, 97.5])
    z = corr / se if se > 0 else math.inf
    passed = abs(z) <= z_mult if expect == "independent" else z > z_mult
    return Report("cutoff", bool(passed), [_row(distance, corr, se, lo, hi)],
                  {"degenerate": False, "expect": expect, "z": z, "pairs": int(A.size)})


# ---------------------------------------------------------------------------
# normalisation


def _total_row(sample: MeasureSample) -> float:
    return sample.total


def normalization_check(ensemble, z_mult: float = Z_MULT) -> Report:
    """Ensemble mean of ``M([0,L])`` against ``L`` (unit-mean chaos, ``E[Y] = 1``)."""
    grid = _first_grid(ensemble)
    totals = np.array(_map(ensemble, _total_row))
    mean = float(totals.mean())
    se = float(totals.std(ddof=1) / math.sqrt(totals.size)) if totals.size > 1 else 0.0
    diff = mean - grid.length
    z = abs(diff) / se if se > 0 else (0.0 if abs(diff) <= 1e-12 * grid.length else math.inf)
    return Report("normalization", z <= z_mult,
                  [_row(grid.length, mean, se, mean - z_mult * se, mean + z_mult * se)],
                  {"z": z, "z_mult": z_mult, "realizations": int(totals.size)})
