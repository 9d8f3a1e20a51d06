import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lognormal_star import catalog, stats
from lognormal_star.ensemble import Ensemble
from lognormal_star.kernels import LogKernel
from lognormal_star.sampler import GridSpec, MeasureSample, ScaleLadder, YLaw


def lebesgue(R=100, L=8.0, n=2 ** 12, **kw):
    return Ensemble(catalog.zero(), GridSpec(L, n), realizations=R, **kw)


# -- accumulator --------------------------------------------------------------


def _samples(R=12, n=64):
    e = Ensemble(catalog.cone(0.5, 1.0), GridSpec(4.0, n), realizations=R, master_seed=2)
    return list(e)


def test_power_sums_match_naive_loops():
    s = _samples(1)[0]
    acc = stats.MomentAccumulator(blocks=(4, 16), qs=(0.5, 2.0), separations=(3,), window=2)
    acc.absorb(0, s)
    m = s.masses
    for i, b in enumerate((4, 16)):
        for j, q in enumerate((0.5, 2.0)):
            naive = sum(sum(m[k:k + b]) ** q for k in range(0, m.size, b))
            assert acc.power_sums()[i, j] == pytest.approx(naive, rel=1e-12)
    w = [sum(m[x:x + 2]) for x in range(m.size - 1)]
    naive_pair = sum(w[x] * w[x + 3] for x in range(len(w) - 3))
    assert acc.pair_sums()[0] == pytest.approx(naive_pair, rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.permutations(range(12)), st.integers(1, 11))
def test_accumulator_merge_is_bit_exact(order, cut):
    samples = _samples()
    layout = dict(blocks=(2, 8), qs=(1.0, 2.0), separations=(5,), window=4)
    whole = stats.MomentAccumulator(**layout)
    for i, s in enumerate(samples):
        whole.absorb(i, s)
    left, right = stats.MomentAccumulator(**layout), stats.MomentAccumulator(**layout)
    for i in order[:cut]:
        left.absorb(i, samples[i])
    for i in order[cut:]:
        right.absorb(i, samples[i])
    for merged in (left.merge(right), right.merge(left)):
        assert merged.count == 12
        assert np.array_equal(merged.power_sums(), whole.power_sums())
        assert np.array_equal(merged.pair_sums(), whole.pair_sums())


def test_accumulator_guards():
    s = _samples(1)[0]
    a = stats.MomentAccumulator(blocks=(2,), qs=(1.0,))
    a.absorb(0, s)
    with pytest.raises(ValueError):
        a.absorb(0, s)
    with pytest.raises(ValueError):
        a.merge(a)
    with pytest.raises(ValueError):
        a.merge(stats.MomentAccumulator(blocks=(4,), qs=(1.0,)))


# -- structure exponents ------------------------------------------------------------


def test_xi_lebesgue_exact():
    fits = stats.estimate_xi(lebesgue(), [0.5, 1.0, 2.0, 3.0])
    for f in fits:
        assert f.slope == f.q
        assert f.stderr == 0.0
        assert f.r_squared == 1.0


def test_default_scales():
    sc = stats.default_scales(GridSpec(8.0, 2 ** 12))
    assert sc[0] == 1.0 and sc[-1] == 8.0 * 2.0 ** -9 and sc.size == 7


def test_xi_preconditions():
    e = Ensemble(catalog.cone(0.5, 1.0), GridSpec(8.0, 2 ** 10), realizations=100)
    with pytest.raises(stats.MomentOutOfRange):
        stats.estimate_xi(e, [4.0])
    with pytest.raises(stats.InsufficientSamples):
        stats.estimate_xi(lebesgue(R=20), [1.0])
    with pytest.raises(ValueError):
        stats.estimate_xi(lebesgue(), [1.0], fit_range=(0.5, 1.0))


def test_xi_mass_linearity_on_random_measure():
    e = Ensemble(catalog.cone(0.5, 1.0), GridSpec(8.0, 2 ** 12), realizations=100, master_seed=4)
    f1, f2 = stats.estimate_xi(e, [1.0, 2.0])
    assert f1.slope == 1.0 and f1.stderr == 0.0
    assert f2.stderr > 0


# -- two-point statistics ----------------------------------------------------------


def test_recover_kernel_lebesgue_exact():
    rep = stats.recover_kernel(lebesgue(), [0.5, 1.0, 2.0], 0.125)
    assert [r["estimate"] for r in rep.rows] == [0.0, 0.0, 0.0]
    assert all(r["ci_lo"] <= 0.0 <= r["ci_hi"] for r in rep.rows)


def test_recover_kernel_matches_exact_grid_expectation():
    # oracle: on the grid, E[M(A) M(B)] = h^2 sum_{i in A, j in B} exp(C(|i - j|)),
    # C the ladder covariance row (unit-mean lognormal cells)
    g = GridSpec(32.0, 2 ** 10)
    k = catalog.cone(0.5, 1.0)
    e = Ensemble(k, g, realizations=400, master_seed=8)
    width, sep = 4, 16                                  # h = 0.125, s = 0.5
    C = e.ladder.covariance(k, np.arange(g.cells + 1) * g.spacing)
    lags = np.abs(np.subtract.outer(np.arange(width), sep + np.arange(width)))
    exact = math.log(np.exp(C[lags]).sum() / width ** 2)
    rep = stats.recover_kernel(e, [0.5], 0.125)
    row = rep.rows[0]
    assert abs(row["estimate"] - exact) <= 4 * row["stderr"]


def test_recover_kernel_preconditions():
    e = lebesgue()
    with pytest.raises(ValueError):
        stats.recover_kernel(e, [0.25], 0.125)           # h > s/4
    with pytest.raises(ValueError):
        stats.recover_kernel(e, [0.5], 0.1)              # not whole cells
    with pytest.raises(ValueError):
        stats.recover_kernel(e, [0.5], 0.125, y_mode="median")
    with pytest.raises(ValueError):
        stats.recover_kernel(e, [8.0], 0.125)            # does not fit


def test_recover_kernel_tolerance_and_floor():
    e = Ensemble(catalog.cone(0.5, 1.0), GridSpec(8.0, 2 ** 10), realizations=50,
                 y_law=YLaw("lognormal", s2=4.0), master_seed=1)
    with pytest.raises(stats.InsufficientSamples):
        stats.recover_kernel(e, [0.5], 0.125, tolerance=1e-6)
    rep = stats.recover_kernel(e, [0.5], 0.125, y_floor=0.2)
    ys = [s.y_factor for s in e]
    assert rep.details["flagged_low_y"] == sum(y < 0.2 for y in ys) > 0
    rep = stats.recover_kernel(e, [0.5], 0.125, y_mode="ergodic", y_floor=0.2)
    y_hat = [s.total / 8.0 for s in e]
    assert rep.details["flagged_low_y"] == sum(y < 0.2 for y in y_hat)
    assert rep.details["realizations"] == 50 - rep.details["flagged_low_y"]


def test_mixing_lebesgue_and_bounds():
    rep = stats.mixing_decay(lebesgue(), [0.5, 1.0], 0.25, kernel=catalog.zero())
    assert rep.passed
    assert all(r["estimate"] == 0.0 and r["ci_lo"] == 0.0 for r in rep.rows)
    assert stats.mixing_bound(catalog.cone(1.0, 1.0), 2.0) == 0.0
    g = catalog.gaussian(1.0)
    assert stats.mixing_bound(g, 1.0) == pytest.approx(math.expm1(float(LogKernel(g)(1.0))))


def test_mixing_cone_beyond_cutoff():
    e = Ensemble(catalog.cone(0.5, 1.0), GridSpec(32.0, 2 ** 11), realizations=200, master_seed=3)
    rep = stats.mixing_decay(e, [2.0], 0.5)
    assert rep.details["bound"] == [0.0]
    assert rep.rows[0]["ci_lo"] == 0.0 and rep.passed


def test_cutoff_lebesgue_degenerate():
    rep = stats.cutoff_independence(lebesgue(), 2.0, 1.0)
    assert rep.details["degenerate"] and rep.passed


# -- star equation ------------------------------------------------------------------


def test_compare_samples_is_symmetric():
    rng = np.random.default_rng(0)
    a = np.exp(rng.normal(size=(300, 2)))
    b = np.exp(rng.normal(0.1, 1.1, size=(250, 2)))
    ab = stats.compare_samples(a, b, [1.0, 2.0])
    ba = stats.compare_samples(b, a, [1.0, 2.0])
    assert ab.details["max_z"] == ba.details["max_z"]
    assert ab.details["ks_pvalue"] == ba.details["ks_pvalue"]
    assert ab.passed == ba.passed


def test_star_lebesgue_trivial_pass():
    rep = stats.star_equation_test(catalog.zero(), 0.5, GridSpec(8.0, 64), 50, layers=2)
    assert rep.passed and rep.details["max_z"] == 0.0 and rep.details["ks_pvalue"] == 1.0


def test_star_has_power_against_mismatch():
    g = GridSpec(8.0, 256)
    k = catalog.cone(0.5, 1.0)
    good = stats.star_equation_test(k, 0.5, g, 2000, layers=1, master_seed=4)
    bad = stats.star_equation_test(k, 0.5, g, 2000, layers=1, omega_epsilon=0.25, master_seed=4)
    assert good.passed and not bad.passed


# -- ergodicity, small intervals, atoms ------------------------------------------


def test_ergodic_lebesgue_exact():
    rep = stats.ergodic_average(lebesgue(R=5), [1.0, 4.0, 8.0])
    assert [r["estimate"] for r in rep.rows] == [1.0, 1.0, 1.0]
    assert rep.details["fraction_within"] == 1.0


def test_ergodic_relative_to_random_y():
    e = Ensemble(catalog.zero(), GridSpec(8.0, 64), realizations=20,
                 y_law=YLaw("lognormal", s2=0.5))
    rep = stats.ergodic_average(e, [8.0], relative_to_y=True, tolerance=1e-12)
    assert rep.passed


def test_small_interval_lebesgue_table_is_one():
    rep = stats.small_interval_moments(lebesgue(), 1.0, [16, 32, 64, 128])
    assert [r["estimate"] for r in rep.rows] == [1.0] * 4
    assert rep.passed and rep.details["rho"] == 1.0


def test_small_interval_rho_and_range():
    e = Ensemble(catalog.cone(0.5, 1.0), GridSpec(8.0, 2 ** 10), realizations=20)
    rep = stats.small_interval_moments(e, 1.0, [16, 32, 64])
    assert rep.details["rho"] == 0.5
    with pytest.raises(stats.MomentOutOfRange):
        stats.small_interval_moments(e, 3.0, [16])


def test_atoms_lebesgue_tables_vanish():
    e = lebesgue(R=4)
    ns = [16, 32, 64, 128]
    rel, big = stats.atom_scan(e, [lambda n: 2.0 / n, 100.0], ns)
    assert [r["estimate"] for r in rel.rows] == [0.0] * 4 and rel.passed
    assert [r["estimate"] for r in big.rows] == [0.0] * 4 and big.passed


def test_normalization_lebesgue():
    rep = stats.normalization_check(lebesgue(R=3))
    assert rep.passed and rep.rows[0]["estimate"] == 8.0


def test_report_verdict_is_json_safe():
    import json
    rep = stats.Report("t", True, [], {"z": math.inf, "arr": np.arange(2), "flag": np.bool_(True)})
    text = json.dumps(rep.verdict(), allow_nan=False)
    assert '"inf"' in text


def test_plain_sequence_is_accepted():
    samples = [MeasureSample(np.full(64, 0.125), GridSpec(8.0, 64))] * 3
    assert stats.normalization_check(samples).rows[0]["estimate"] == 8.0
