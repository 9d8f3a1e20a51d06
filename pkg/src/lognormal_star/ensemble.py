"""Reproducible ensembles of measure samples.

Realisation ``i`` draws from ``SeedSequence(master_seed, spawn_key=(i,))``,
so any realisation can be regenerated on its own and results do not depend
on the worker count. Ensembles are lazy: realisations are regenerated on
every pass instead of being held in memory.

All layers of a ladder are drawn as one field whose covariance is the sum of
the layer covariances; this is equal in law to summing independent layer
draws and needs a single FFT per realisation.
"""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

from .catalog import make_kernel
from .kernels import EpsilonKernel, SeedKernel
from .sampler import (CirculantSampler, FieldSample, GridSpec, MeasureSample, ScaleLadder,
                      YLaw, star_compose, zoom_rescale)


def realization_rngs(master_seed: int, index: int, streams: int = 3):
    ss = np.random.SeedSequence(master_seed, spawn_key=(index,))
    return [np.random.default_rng(s) for s in ss.spawn(streams)]


@dataclass
class Ensemble:
    """Lazily generated chaos measures on a common grid.

    ``mode="direct"`` samples the ``N``-layer measure. ``mode="composed"``
    builds the right-hand side of the star equation: a fresh ``(N-1)``-layer
    measure on the domain dilated by ``1/eps``, shrunk back by
    :func:`zoom_rescale`, times the zoom factor ``exp(omega)`` whose
    covariance is ``k_{omega_epsilon}`` (``omega_epsilon`` defaults to
    ``epsilon``; a different value gives a deliberately wrong composition).
    """

    kernel: SeedKernel
    grid: GridSpec
    epsilon: float = 0.5
    layers: int | None = None
    realizations: int = 100
    master_seed: int = 0
    y_law: YLaw = field(default_factory=YLaw)
    workers: int = 1
    mode: str = "direct"
    omega_epsilon: float | None = None

    def __post_init__(self):
        if self.mode not in ("direct", "composed"):
            raise ValueError(f"unknown ensemble mode {self.mode!r}")
        if self.layers is None:
            self.ladder = ScaleLadder.auto(self.kernel, self.grid, self.epsilon)
        else:
            self.ladder = ScaleLadder(self.epsilon, int(self.layers))
        self.ladder.check(self.grid)
        if self.mode == "composed" and self.ladder.layers < 1:
            raise ValueError("composed mode needs at least one layer")
        self._samplers = None

    # -- sampling ---------------------------------------------------------

    def _build_samplers(self):
        h = self.grid.spacing
        n = self.grid.cells
        lags = np.arange(n + 1) * h
        if self.mode == "direct":
            row = self.ladder.covariance(self.kernel, lags)
            self._samplers = {"field": CirculantSampler(row)}
            return
        eps = self.epsilon
        inner = ScaleLadder(eps, self.ladder.layers - 1)
        inner_grid = GridSpec(self.grid.length / eps, n)
        inner_row = inner.covariance(self.kernel, np.arange(n + 1) * inner_grid.spacing)
        om_eps = self.omega_epsilon if self.omega_epsilon is not None else eps
        omega_row = EpsilonKernel(self.kernel, om_eps)(lags)
        self._samplers = {
            "field": CirculantSampler(inner_row),
            "omega": CirculantSampler(omega_row),
            "inner_grid": inner_grid,
        }

    @property
    def samplers(self) -> dict:
        if self._samplers is None:
            self._build_samplers()
        return self._samplers

    def realization(self, index: int) -> MeasureSample:
        if not 0 <= index < self.realizations:
            raise IndexError(index)
        field_rng, y_rng, omega_rng = realization_rngs(self.master_seed, index)
        s = self.samplers
        x = s["field"].draw(field_rng)
        y = self.y_law.draw(y_rng)
        meta = self.meta(index)
        if self.mode == "direct":
            masses = (y * self.grid.spacing) * np.exp(x - 0.5 * s["field"].variance)
            return MeasureSample(masses, self.grid, y, meta)
        inner_grid = s["inner_grid"]
        inner = MeasureSample(
            (y * inner_grid.spacing) * np.exp(x - 0.5 * s["field"].variance), inner_grid, y, meta)
        zoomed = zoom_rescale(inner, self.epsilon, target=self.grid)
        omega = FieldSample(s["omega"].draw(omega_rng), s["omega"].variance, 0)
        return star_compose(omega, zoomed, self.grid)

    def __len__(self) -> int:
        return self.realizations

    def __iter__(self) -> Iterator[MeasureSample]:
        for i in range(self.realizations):
            yield self.realization(i)

    def map(self, func: Callable[[MeasureSample], object]) -> list:
        """``[func(realization(i)) for i in range(R)]``, optionally in parallel.

        With ``workers > 1`` the kernel must be a catalog kernel and ``func``
        must be picklable.
        """
        if self.workers <= 1 or self.realizations < 2:
            return [func(self.realization(i)) for i in range(self.realizations)]
        spec = self.to_dict()
        chunk = max(1, self.realizations // (4 * self.workers))
        with ProcessPoolExecutor(self.workers, initializer=_init_worker,
                                 initargs=(spec,)) as pool:
            return list(pool.map(_call_worker, [(func, i) for i in range(self.realizations)],
                                 chunksize=chunk))

    # -- description ------------------------------------------------------

    def meta(self, index: int | None = None) -> dict:
        out = {
            "kernel": self.kernel.describe(),
            "epsilon": self.epsilon,
            "layers": self.ladder.layers,
            "grid": self.grid.to_dict(),
            "master_seed": self.master_seed,
            "mode": self.mode,
            "y_law": self.y_law.to_dict(),
        }
        if self.omega_epsilon is not None:
            out["omega_epsilon"] = self.omega_epsilon
        if index is not None:
            out["realization"] = index
        return out

    def to_dict(self) -> dict:
        out = self.meta()
        out["realizations"] = self.realizations
        return out

    @classmethod
    def from_dict(cls, d: dict, workers: int = 1) -> "Ensemble":
        kd = dict(d["kernel"])
        name = kd.pop("name")
        return cls(
            kernel=make_kernel(name, **kd),
            grid=GridSpec(float(d["grid"]["length"]), int(d["grid"]["cells"])),
            epsilon=float(d["epsilon"]),
            layers=int(d["layers"]),
            realizations=int(d["realizations"]),
            master_seed=int(d["master_seed"]),
            y_law=YLaw(**d.get("y_law", {"kind": "deterministic"})),
            workers=workers,
            mode=d.get("mode", "direct"),
            omega_epsilon=d.get("omega_epsilon"),
        )


_WORKER_ENSEMBLE: Ensemble | None = None


def _init_worker(spec: dict) -> None:
    global _WORKER_ENSEMBLE
    _WORKER_ENSEMBLE = Ensemble.from_dict(spec)


def _call_worker(job):
    func, index = job
    return func(_WORKER_ENSEMBLE.realization(index))


# ---------------------------------------------------------------------------
# persistence


def format_float(x: float) -> str:
    """Shortest string that round-trips to the same double."""
    return repr(float(x))


def write_measure_csv(sample: MeasureSample, path) -> None:
    path = Path(path)
    pos = sample.grid.midpoints
    lines = ["cell_index,position,mass"]
    lines += [f"{i},{format_float(p)},{format_float(m)}"
              for i, (p, m) in enumerate(zip(pos, sample.masses))]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")
    sidecar = dict(sample.meta)
    sidecar["grid"] = sample.grid.to_dict()
    sidecar["y_factor"] = sample.y_factor
    write_json(sidecar, path.with_suffix(".json"))


def read_measure_csv(path) -> MeasureSample:
    path = Path(path)
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    side = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
    grid = GridSpec(float(side["grid"]["length"]), int(side["grid"]["cells"]))
    if data.shape[0] != grid.cells:
        raise ValueError(f"{path}: {data.shape[0]} rows for a grid of {grid.cells} cells")
    y = float(side.pop("y_factor", 1.0))
    return MeasureSample(data[:, 2].copy(), grid, y, side)


def write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2, allow_nan=False)
        fh.write("\n")


def write_report_csv(rows, path) -> None:
    """Report table with columns ``x,estimate,stderr,ci_lo,ci_hi``."""
    cols = ("x", "estimate", "stderr", "ci_lo", "ci_hi")
    lines = [",".join(cols)]
    lines += [",".join(format_float(r[c]) for c in cols) for r in rows]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def write_table_csv(columns: dict, path) -> None:
    """Columns of equal length, written side by side."""
    names = list(columns)
    data = [np.asarray(columns[c], dtype=float) for c in names]
    lines = [",".join(names)]
    lines += [",".join(format_float(v) for v in row) for row in zip(*data)]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def ensemble_dir(out_dir, master_seed: int) -> Path:
    return Path(out_dir) / f"ens-{master_seed}"


def write_ensemble(ens: Ensemble, out_dir, extra_meta: dict | None = None) -> Path:
    """Write ``ens-<seed>/real-<k>.csv`` (+ JSON sidecars) and ``meta.json``."""
    d = ensemble_dir(out_dir, ens.master_seed)
    d.mkdir(parents=True, exist_ok=True)
    for i in range(ens.realizations):
        write_measure_csv(ens.realization(i), d / f"real-{i}.csv")
    meta = ens.to_dict()
    if extra_meta:
        meta.update(extra_meta)
    write_json(meta, d / "meta.json")
    return d


class DiskEnsemble:
    """Ensemble read back from a directory written by :func:`write_ensemble`."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.meta = json.loads((self.directory / "meta.json").read_text(encoding="utf-8"))
        self.realizations = int(self.meta["realizations"])
        missing = [i for i in range(self.realizations)
                   if not (self.directory / f"real-{i}.csv").exists()]
        if missing:
            raise FileNotFoundError(f"{self.directory}: missing realizations {missing[:5]}")
        self.grid = GridSpec(float(self.meta["grid"]["length"]), int(self.meta["grid"]["cells"]))

    def realization(self, index: int) -> MeasureSample:
        return read_measure_csv(self.directory / f"real-{index}.csv")

    def __len__(self) -> int:
        return self.realizations

    def __iter__(self):
        for i in range(self.realizations):
            yield self.realization(i)

    def map(self, func):
        return [func(self.realization(i)) for i in range(self.realizations)]
