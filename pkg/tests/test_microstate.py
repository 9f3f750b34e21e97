import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from covlab import microstate as ms
from covlab import procedures as pr

Z4 = pr.ProcedureSpec.z(1.0, 4)
TRIVIAL = pr.ProcedureSpec.trivial()
UPAIR = pr.ProcedureSpec.uniform_pair()


def test_single_trial_run():
    run = ms.run_stream(TRIVIAL, 0.0, 1, 1)
    (rec,) = list(run.records())
    assert rec.index == 1 and rec.z in (0, 1)
    assert ms.slln_trace(run, [1])[0][1] in (0.0, 1.0)


def test_records_are_consistent():
    run = ms.run_stream(UPAIR, 0.3, 8, 300, block_size=64)
    recs = list(run.records())
    assert [r.index for r in recs] == list(range(1, 301))
    for r in recs:
        assert r.z == pr.coverage_indicator(r.interval, 0.3)
        assert r.interval == pr.build_interval(UPAIR, r.sample)
    assert np.array_equal(run.z, [r.z for r in recs])


@pytest.mark.parametrize("spec", [Z4, TRIVIAL, UPAIR], ids=lambda s: s.name)
def test_reproducible_across_workers_and_blocks(spec):
    base = ms.run_stream(spec, 1.5, 77, 20_000)
    for workers, block in [(1, 1000), (3, 4096), (4, 777)]:
        other = ms.run_stream(spec, 1.5, 77, 20_000, workers=workers, block_size=block)
        assert other.z.tobytes() == base.z.tobytes()
        assert other.conditional.tobytes() == base.conditional.tobytes()
    # a longer run extends a shorter one
    assert np.array_equal(ms.run_stream(spec, 1.5, 77, 30_000).z[:20_000], base.z)


def test_different_seeds_differ():
    assert not np.array_equal(ms.run_stream(Z4, 0, 1, 1000).z, ms.run_stream(Z4, 0, 2, 1000).z)


def test_contract_errors():
    with pytest.raises(pr.ContractError):
        ms.run_stream(Z4, 0, 1, 0)
    run = ms.run_stream(Z4, 0, 1, 100)
    with pytest.raises(pr.ContractError):
        ms.slln_trace(run, [])
    with pytest.raises(pr.ContractError):
        ms.slln_trace(run, [50, 10])
    with pytest.raises(pr.ContractError):
        ms.slln_trace(run, [101])
    with pytest.raises(pr.ContractError):
        ms.batch_coverage_count(run, 30)
    with pytest.raises(pr.ContractError):
        ms.pair_coverage(ms.run_stream(Z4, 0, 1, 1))
    with pytest.raises(pr.ContractError):
        ms.recurrence_experiment(TRIVIAL, 0, 1.0, 1, 10)


def test_slln_trace_trivial():
    run = ms.run_stream(TRIVIAL, 0.0, 5, 10_000)
    trace = ms.slln_trace(run, [10, 100, 10_000])
    assert [n for n, _ in trace] == [10, 100, 10_000]
    assert all(0 <= m <= 1 for _, m in trace)
    assert abs(trace[-1][1] - 0.95) <= 0.009


@pytest.mark.slow
def test_slln_band_shrinks_like_inverse_sqrt():
    # deviations from the design rate scaled by sqrt(n) stay O(1); pinned seed
    n_max = 2**20
    run = ms.run_stream(TRIVIAL, 0.0, 31, n_max)
    cps = [2**k for k in range(10, 21)]
    trace = ms.slln_trace(run, cps)
    for n, m in trace:
        assert abs(m - 0.95) <= ms.band(0.95, n)
    widths = [ms.band(0.95, n) for n in cps]
    ratios = [a / b for a, b in zip(widths, widths[1:])]
    assert ratios == pytest.approx([math.sqrt(2)] * len(ratios))


def test_iterated_expectation_trivial_is_degenerate():
    ie = ms.iterated_expectation_check(ms.run_stream(TRIVIAL, 0.0, 9, 5000))
    assert ie.conditional_mean == ie.design_mean


@pytest.mark.slow
def test_iterated_expectation_uniform_pair():
    ie = ms.iterated_expectation_check(ms.run_stream(UPAIR, -2.0, 404, 100_000))
    cov = pr.analytic_coverage(UPAIR)
    assert abs(ie.design_mean - cov) <= 0.003
    assert abs(ie.conditional_mean - cov) <= 0.003
    assert ie.conditional_var < ie.design_var


@pytest.mark.slow
def test_pair_coverage():
    pc = ms.pair_coverage(ms.run_stream(Z4, 0.0, 2025, 200_000))
    assert pc.n_pairs == 100_000
    assert abs(pc.both - 0.9025) <= 0.004
    assert pc.both_given_first_missed == 0.0
    assert abs(pc.second_given_first_covered - 0.95) <= ms.band(0.95, pc.first_covered_pairs)


def test_pair_coverage_odd_length_drops_last():
    assert ms.pair_coverage(ms.run_stream(Z4, 0.0, 3, 101)).n_pairs == 50


def test_batch_size_one_matches_coverage():
    run = ms.run_stream(UPAIR, 0.0, 6, 4000)
    bc = ms.batch_coverage_count(run, 1)
    assert set(bc.histogram()) <= {0, 1}
    assert bc.histogram().get(1, 0) == int(run.z.sum())
    assert bc.mean == run.z.mean()


@pytest.mark.slow
def test_batch_counts_binomial_mean():
    bc = ms.batch_coverage_count(ms.run_stream(Z4, 0.0, 1000, 100_000), 1000)
    assert bc.n_batches == 100
    assert abs(bc.mean - 950) <= 4 * math.sqrt(1000 * 0.05 * 0.95 / 100)


@pytest.mark.slow
def test_batch_counts_chi_square_against_binomial():
    n_batches = 2000
    bc = ms.batch_coverage_count(ms.run_stream(TRIVIAL, 0.0, 123, 1000 * n_batches), 1000)
    # pool the binomial into cells with expected count >= 5
    edges = [0, 935, 940, 944, 947, 950, 953, 956, 960, 965, 1001]
    probs = np.diff(stats.binom.cdf(np.array(edges) - 1, 1000, 0.95))
    observed, _ = np.histogram(bc.counts, bins=edges)
    assert (probs * n_batches).min() >= 5
    _, pvalue = stats.chisquare(observed, probs / probs.sum() * n_batches)
    assert pvalue > 0.01


def test_recurrence_coarse_grid():
    spec = pr.ProcedureSpec.z(1.0, 1)
    pilot = ms.recurrence_experiment(spec, 0.0, 2.0, 1, 100_000)
    rr = ms.recurrence_experiment(spec, 0.0, 2.0, 2, 10_000)
    assert rr.distinct_values <= 5
    assert rr.target == pytest.approx((-1.959963984540054, 1.959963984540054))
    mass = pilot.design_mass
    assert abs(rr.hit_count - 10_000 * mass) <= 4 * math.sqrt(10_000 * 0.25)
    # exact cell mass of round(x/2) == 0 for a standard normal
    exact = stats.norm.cdf(1) - stats.norm.cdf(-1)
    assert abs(rr.design_mass - exact) <= ms.band(exact, 10_000)
    (n1, h1), (n2, h2) = rr.checkpoint_hits
    assert (n1, n2) == (5000, 10_000)
    assert 1.8 <= h2 / h1 <= 2.2


def test_recurrence_continuous_has_no_repeats():
    rr = ms.recurrence_experiment(pr.ProcedureSpec.z(1.0, 3), 0.0, None, 3, 10_000)
    assert rr.repeats == 0 and rr.distinct_values == 10_000 and rr.target is None


def test_recurrence_target_center_off_mode():
    spec = pr.ProcedureSpec.z(1.0, 1)
    rr = ms.recurrence_experiment(spec, 0.0, 2.0, 4, 20_000, target_center=2.0)
    exact = stats.norm.cdf(3) - stats.norm.cdf(1)
    assert abs(rr.design_mass - exact) <= ms.band(exact, 20_000)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(1, 3000), min_size=1, max_size=6), st.integers(0, 2**63))
def test_tally_merge_matches_sequential(sizes, seed):
    spec = UPAIR
    start, tallies = 0, []
    for size in sizes:
        block = ms.generate_block(spec, 0.0, seed, start, size)
        tallies.append(ms.CoverageTally.from_block(spec, block))
        start += size
    merged = ms.CoverageTally()
    for t in tallies:
        merged = merged.merge(t)
    whole = ms.run_stream(spec, 0.0, seed, start)
    assert merged.n == start
    assert merged.covered == int(whole.z.sum())
    assert merged.conditional_mean == pytest.approx(float(whole.conditional.mean()), rel=1e-12)
