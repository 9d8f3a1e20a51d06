"""Command line driver: ``lognormal-star {kernel,sample,verify} --config FILE``.

Exit codes: 0 success, 1 configuration error, 2 kernel not good or
degenerate, 3 covariance not positive semi-definite, 4 verification failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import stats
from .config import ConfigError, ExperimentConfig, load_config
from .ensemble import (DiskEnsemble, Ensemble, ensemble_dir, write_ensemble, write_json,
                       write_report_csv, write_table_csv)
from .kernels import (DivergentTail, EpsilonKernel, LogKernel, goodness_check, series_K,
                      structure_exponent, telescope_check)
from .sampler import GridSpec, NotPSD

EXIT_OK, EXIT_CONFIG, EXIT_KERNEL, EXIT_SAMPLER, EXIT_VERIFY = 0, 1, 2, 3, 4


class CommandFailed(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# kernel


def cmd_kernel(cfg: ExperimentConfig, out: Path) -> int:
    """Tables of ``K`` and ``k_eps``, goodness, identity residuals, ``xi(q)``."""
    k = cfg.build_kernel()
    d = out / f"kernel-{k.name}"
    d.mkdir(parents=True, exist_ok=True)
    good = goodness_check(k)
    summary = {"config": cfg.to_dict(), "goodness": good.to_dict(), "k0": k.k0}
    try:
        r = np.logspace(-4, 2, 61)
        write_table_csv({"r": r, "K": LogKernel(k)(r),
                         "k_eps": EpsilonKernel(k, cfg.epsilon)(r)}, d / "tables.csv")
        probes = np.logspace(-3, 1, 40)
        tele = telescope_check(k, cfg.epsilon, probes)
        summary["telescope_max_residual"] = tele.max_residual
        summary["series_residuals"] = _series_residuals(k, cfg.epsilon)
    except DivergentTail as exc:
        summary["divergent_tail"] = str(exc)
    q = np.linspace(0.0, 4.0, 41)
    write_table_csv({"q": q, "xi": structure_exponent(k.k0, q)}, d / "xi.csv")
    write_json(_clean(summary), d / "goodness.json")
    print(f"kernel {k.name}: goodness={good.verdict} -> {d}")
    return EXIT_OK if good.verdict == "good" else EXIT_KERNEL


def _series_residuals(k, eps, lags=(0.01, 0.1, 0.5)) -> dict:
    out = {}
    K = LogKernel(k)
    for r in lags:
        if k.support_radius is not None and k.support_radius > 0:
            depth = int(np.ceil(np.log(k.support_radius / r) / np.log(1.0 / eps))) + 1
        else:
            depth = 60
        out[repr(r)] = abs(series_K(k, eps, r, max(depth, 0)) - float(K(r)))
    return out


def _clean(obj):
    return stats._jsonable(obj)


# ---------------------------------------------------------------------------
# sample / verify


def _check_goodness(cfg: ExperimentConfig, force: bool):
    k = cfg.build_kernel()
    verdict = goodness_check(k).verdict
    if verdict != "good" and not force:
        raise CommandFailed(EXIT_KERNEL, f"kernel {k.name} is {verdict}; use --force to sample anyway")
    return k


def _ensemble(cfg: ExperimentConfig, k, workers: int) -> Ensemble:
    return Ensemble(kernel=k, grid=cfg.grid, epsilon=cfg.epsilon, layers=cfg.layers,
                    realizations=cfg.realizations, master_seed=cfg.master_seed,
                    y_law=cfg.y_law, workers=workers)


def cmd_sample(cfg: ExperimentConfig, out: Path, force: bool = False) -> int:
    k = _check_goodness(cfg, force)
    ens = _ensemble(cfg, k, cfg.workers)
    d = write_ensemble(ens, out, {"config": cfg.to_dict()})
    print(f"wrote {ens.realizations} realizations ({ens.ladder.layers} layers) -> {d}")
    return EXIT_OK


def run_test(name: str, params: dict, ens, cfg: ExperimentConfig, k) -> list:
    """Run one configured test; returns ``[(label, Report), ...]``."""
    seed = cfg.master_seed
    if name == "normalization":
        return [(name, stats.normalization_check(ens, params.get("z_mult", stats.Z_MULT)))]
    if name == "xi":
        fr = None
        if "fit_min" in params or "fit_max" in params:
            fr = (params.get("fit_min", 0.0), params.get("fit_max", np.inf))
        fits = stats.estimate_xi(ens, params["q"], fr, k0=k.k0, seed=seed)
        tol = params.get("expected_tolerance", 0.05)
        rows, ok, detail = [], True, []
        for f in fits:
            target = float(structure_exponent(k.k0, f.q))
            band = max(tol, 2.0 * f.stderr)
            passed = abs(f.slope - target) <= band
            ok &= passed
            rows.append({"x": f.q, "estimate": f.slope, "stderr": f.stderr,
                         "ci_lo": f.slope - 2 * f.stderr, "ci_hi": f.slope + 2 * f.stderr})
            detail.append({"q": f.q, "xi": target, "band": band, "pass": passed,
                           "r_squared": f.r_squared, "fit_range": f.fit_range})
        return [(name, stats.Report("xi", ok, rows, {"fits": detail}))]
    if name == "kernel_recovery":
        rep = stats.recover_kernel(ens, params["separations"], params["h"],
                                   y_mode=params.get("y_mode", "known"),
                                   y_floor=params.get("y_floor", 1e-3),
                                   tolerance=params.get("tolerance"), seed=seed)
        K = LogKernel(k)
        truth = [float(K(s)) for s in params["separations"]]
        tol = params.get("tolerance")
        if tol is None:
            ok = [r["ci_lo"] <= t <= r["ci_hi"] for r, t in zip(rep.rows, truth)]
        else:
            ok = [abs(r["estimate"] - t) <= tol for r, t in zip(rep.rows, truth)]
        rep.passed = all(ok)
        rep.details.update({"K": truth, "agrees": ok})
        return [(name, rep)]
    if name == "mixing":
        return [(name, stats.mixing_decay(ens, params["distances"], params["interval"],
                                          kernel=k, seed=seed))]
    if name == "star":
        grid = GridSpec(cfg.grid.length, params.get("cells", cfg.grid.cells))
        return [(name, stats.star_equation_test(
            k, cfg.epsilon, grid, params["draws"], master_seed=seed,
            layers=params.get("layers", cfg.layers), omega_epsilon=params.get("omega_epsilon"),
            workers=cfg.workers))]
    if name == "cutoff":
        return [(name, stats.cutoff_independence(ens, params["distance"], params["interval"],
                                                 expect=params.get("expect", "independent"),
                                                 seed=seed))]
    if name == "ergodic":
        return [(name, stats.ergodic_average(ens, params["windows"],
                                             tolerance=params.get("tolerance", 0.2),
                                             min_fraction=params.get("min_fraction", 0.9),
                                             relative_to_y=params.get("relative_to_y", False)))]
    if name == "small_interval":
        return [(name, stats.small_interval_moments(ens, params["gamma"],
                                                    [int(n) for n in params["n"]],
                                                    k0=k.k0, seed=seed))]
    if name == "atoms":
        reps = stats.atom_scan(ens, params["alpha"], [int(n) for n in params["n"]], seed=seed)
        return [(f"atoms-{a!r}", r) for a, r in zip(params["alpha"], reps)]
    raise ConfigError(f"unknown test {name!r}", f"tests.{name}")


def _load_ensemble(cfg: ExperimentConfig, k, out: Path, sample: bool):
    if sample:
        return _ensemble(cfg, k, cfg.workers)
    d = ensemble_dir(out, cfg.master_seed)
    if not (d / "meta.json").exists():
        raise CommandFailed(EXIT_CONFIG,
                            f"no ensemble at {d}; run `sample` first or pass --sample")
    disk = DiskEnsemble(d)
    expected = _ensemble(cfg, k, 1).to_dict()
    for key in ("kernel", "grid", "epsilon", "layers", "y_law", "realizations"):
        if disk.meta.get(key) != expected[key]:
            raise CommandFailed(EXIT_CONFIG,
                                f"ensemble at {d} differs from the config in '{key}'")
    return disk


def cmd_verify(cfg: ExperimentConfig, out: Path, force: bool = False,
               sample: bool = False) -> int:
    k = _check_goodness(cfg, force)
    needs_ensemble = any(t != "star" for t in cfg.tests)
    ens = _load_ensemble(cfg, k, out, sample) if needs_ensemble else None
    d = out / f"verify-{cfg.master_seed}"
    d.mkdir(parents=True, exist_ok=True)
    verdicts, failed = [], []
    for name in sorted(cfg.tests):
        try:
            results = run_test(name, cfg.tests[name], ens, cfg, k)
        except stats.MomentOutOfRange as exc:
            raise ConfigError(str(exc), f"tests.{name}") from None
        except stats.InsufficientSamples as exc:
            results = [(name, stats.Report(name, False, [], {"error": str(exc)}))]
        for label, rep in results:
            write_report_csv(rep.rows, d / f"{label}.csv")
            v = rep.verdict()
            v["label"] = label
            verdicts.append(v)
            if not rep.passed:
                failed.append(label)
            print(f"{label}: {'pass' if rep.passed else 'FAIL'}")
    write_json({"config": cfg.to_dict(), "verdicts": verdicts, "failed": failed},
               d / "verdicts.json")
    if failed:
        raise CommandFailed(EXIT_VERIFY, "failed tests: " + ", ".join(failed))
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="lognormal-star",
                                description="Simulate and verify lognormal star-scale invariant measures.")
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="TOML config (or a meta JSON)")
    common.add_argument("--seed", type=int, help="override ensemble.master_seed")
    common.add_argument("--workers", type=int, help="override ensemble.workers")
    common.add_argument("--out", help="override output_dir")
    common.add_argument("--force", action="store_true", help="proceed with a kernel that is not good")
    sub.add_parser("kernel", parents=[common], help="inspect the seed kernel")
    sub.add_parser("sample", parents=[common], help="write an ensemble of realizations")
    v = sub.add_parser("verify", parents=[common], help="run the configured tests")
    v.add_argument("--sample", action="store_true",
                   help="generate the ensemble on the fly instead of reading it from disk")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if not 0 <= args.seed < 2 ** 64:
                raise ConfigError("must be an unsigned 64-bit integer", "--seed")
            cfg.master_seed = args.seed
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigError("must be >= 1", "--workers")
            cfg.workers = args.workers
        if args.out is not None:
            cfg.output_dir = args.out
        out = Path(cfg.output_dir)
        if args.command == "kernel":
            return cmd_kernel(cfg, out)
        if args.command == "sample":
            return cmd_sample(cfg, out, args.force)
        return cmd_verify(cfg, out, args.force, args.sample)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CommandFailed as exc:
        print(str(exc), file=sys.stderr)
        return exc.code
    except DivergentTail as exc:
        print(f"kernel error: {exc}", file=sys.stderr)
        return EXIT_KERNEL
    except NotPSD as exc:
        print(f"sampler error: {exc}", file=sys.stderr)
        return EXIT_SAMPLER


if __name__ == "__main__":
    sys.exit(main())
