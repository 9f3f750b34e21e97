import math

import mpmath
import numpy as np
import pytest
from scipy import integrate, special

from covlab import procedures as pr
from covlab.microstate import band, run_stream
from covlab.procedures import IntervalRealization as IR
from _oracles import uniform_pair_window_coverage

C95 = (1 - math.sqrt(0.05)) / 2


def test_spec_validation():
    with pytest.raises(pr.ContractError):
        pr.ProcedureSpec.z(alpha=0)
    with pytest.raises(pr.ContractError):
        pr.ProcedureSpec.z(alpha=1.0)
    with pytest.raises(pr.ContractError):
        pr.ProcedureSpec.z(sigma=0)
    with pytest.raises(pr.ContractError):
        pr.ProcedureSpec.z(n=0)
    with pytest.raises(pr.ContractError):
        pr.ProcedureSpec.uniform_pair(c=0.5)
    with pytest.raises(pr.ContractError):
        pr.ProcedureSpec.uniform_pair(c=0.0)


def test_spec_dict_round_trip():
    for spec in (pr.ProcedureSpec.z(2.0, 5, 0.1), pr.ProcedureSpec.trivial(0.2), pr.ProcedureSpec.uniform_pair(0.05)):
        assert pr.ProcedureSpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(pr.ContractError):
        pr.ProcedureSpec.from_dict({"family": "trivial", "sigma": 1})


def test_calibrated_c():
    assert pr.UniformPair.calibrated_c(0.05) == pytest.approx(0.38820, abs=5e-6)
    spec = pr.ProcedureSpec.uniform_pair(0.05)
    assert pr.analytic_coverage(spec) == pytest.approx(0.95, abs=1e-15)


@pytest.mark.parametrize("p", [1e-10, 0.001, 0.025, 0.3, 0.5, 0.9, 0.975, 0.999999])
def test_normal_quantile_accuracy(p):
    assert pr.normal_quantile(p) == pytest.approx(special.ndtri(p), abs=1e-10)
    with mpmath.workdps(50):
        mp = float(mpmath.sqrt(2) * mpmath.erfinv(2 * mpmath.mpf(p) - 1))
    assert pr.normal_quantile(p) == pytest.approx(mp, abs=1e-10)


def test_draw_sample_examples():
    s = pr.draw_sample(pr.ProcedureSpec.trivial(), 123.0, pr.TrialStream(1, 0))
    assert len(s.values) == 1 and 0 <= s.values[0] < 1
    up = pr.ProcedureSpec.uniform_pair()
    for i in range(50):
        s = pr.draw_sample(up, 0.0, pr.TrialStream(5, i))
        assert all(-0.5 <= v <= 0.5 for v in s.values)
    z = pr.ProcedureSpec.z(1.0, 4)
    for i in range(50):
        s = pr.draw_sample(z, 10.0, pr.TrialStream(5, i))
        assert abs(np.mean(s.values) - 10) < 5 / 2


def test_build_interval_examples():
    trivial = pr.ProcedureSpec.trivial(0.05)
    assert pr.build_interval(trivial, pr.Sample((0.10,), trivial)) == IR.whole_line()
    assert pr.build_interval(trivial, pr.Sample((0.96,), trivial)) == IR.empty()

    up = pr.ProcedureSpec.uniform_pair(c=0.3882)
    iv = pr.build_interval(up, pr.Sample((0.1, 0.9), up))
    assert iv.lower == pytest.approx(0.1118, abs=1e-12)
    assert iv.upper == pytest.approx(0.8882, abs=1e-12)

    z = pr.ProcedureSpec.z(1.0, 1, 0.05)
    iv = pr.build_interval(z, pr.Sample((0.0,), z))
    q = float(special.ndtri(0.975))
    assert iv.lower == pytest.approx(-q, abs=1e-10) and iv.upper == pytest.approx(q, abs=1e-10)
    assert iv.upper == pytest.approx(1.959963984540054, abs=1e-12)


def test_build_interval_contract():
    z = pr.ProcedureSpec.z(1.0, 2)
    with pytest.raises(pr.ContractError):
        pr.Sample((0.0,), z)
    s = pr.Sample((0.0, 1.0), z)
    with pytest.raises(pr.ContractError):
        pr.build_interval(pr.ProcedureSpec.z(1.0, 2, alpha=0.1), s)
    with pytest.raises(pr.ContractError):
        IR.bounded(1.0, 0.0)


def test_coverage_indicator_examples():
    assert pr.coverage_indicator(IR.whole_line(), 1e300) == 1
    assert pr.coverage_indicator(IR.empty(), 0.0) == 0
    assert pr.coverage_indicator(IR.bounded(-1.96, 1.96), 0.0) == 1
    assert pr.coverage_indicator(IR.bounded(-1.96, 1.96), 1.96) == 1
    assert pr.coverage_indicator(IR.bounded(-1.96, 1.96), 1.97) == 0


def test_analytic_coverage_examples():
    assert pr.analytic_coverage(pr.ProcedureSpec.trivial(0.05)) == pytest.approx(0.95)
    assert pr.analytic_coverage(pr.ProcedureSpec.z(alpha=0.1)) == pytest.approx(0.9)
    assert pr.analytic_coverage(pr.ProcedureSpec.uniform_pair(c=0.25)) == 0.75
    assert pr.analytic_coverage(pr.ProcedureSpec.uniform_pair(c=0.5 - 1e-12)) == pytest.approx(1.0, abs=1e-11)


@pytest.mark.parametrize("c", [0.05, 0.25, C95, 0.45])
def test_uniform_pair_coverage_by_quadrature(c):
    # integrate conditional coverage against the range density 2(1 - r)
    val, _ = integrate.quad(lambda r: min(1.0, 2 * c / (1 - r)) * 2 * (1 - r), 0, 1, points=[1 - 2 * c])
    assert pr.analytic_coverage(pr.ProcedureSpec.uniform_pair(c=c)) == pytest.approx(val, abs=1e-10)


def test_conditional_coverage_examples():
    up = pr.ProcedureSpec.uniform_pair(c=0.3882)
    assert pr.conditional_coverage_given_ancillary(up, pr.Sample((-0.4, 0.4), up)) == 1.0
    assert pr.conditional_coverage_given_ancillary(up, pr.Sample((0.0, 0.1), up)) == pytest.approx(2 * 0.3882 / 0.9)
    assert pr.conditional_coverage_from_range(0.25, 0.5) == 1.0
    with pytest.raises(pr.ContractError):
        pr.conditional_coverage_given_ancillary(up, pr.Sample((-0.5, 0.5), up))
    with pytest.raises(pr.ContractError):
        pr.conditional_coverage_given_ancillary(pr.ProcedureSpec.z(), pr.Sample((0.0,), pr.ProcedureSpec.z()))


@pytest.mark.parametrize("r0, expected", [(0.8, 1.0), (0.1, 2 * 0.3882 / 0.9)])
def test_conditional_coverage_monte_carlo(r0, expected):
    mc, n = uniform_pair_window_coverage(0.3882, r0)
    assert n >= 10_000
    assert pr.conditional_coverage_from_range(0.3882, r0) == pytest.approx(expected, abs=1e-12)
    assert abs(mc - expected) <= 0.02


def test_trivial_indicators_do_not_depend_on_theta():
    spec = pr.ProcedureSpec.trivial(0.05)
    ref = run_stream(spec, 0.0, 17, 5000).z
    for theta in (-1e6, -3.5, 0.25, 42.0, 1e9):
        assert np.array_equal(run_stream(spec, theta, 17, 5000).z, ref)


@pytest.mark.slow
@pytest.mark.parametrize("spec", [pr.ProcedureSpec.z(1.0, 4), pr.ProcedureSpec.z(2.5, 1, 0.1),
                                  pr.ProcedureSpec.trivial(), pr.ProcedureSpec.uniform_pair(c=0.25)],
                         ids=lambda s: s.name)
def test_monte_carlo_coverage_matches_analytic(spec):
    n = 100_000
    cov = pr.analytic_coverage(spec)
    z = run_stream(spec, 3.0, 2718, n).z
    assert set(np.unique(z)) <= {0, 1}
    assert abs(z.mean() - cov) <= band(cov, n)


def test_grid_rounding_gives_bit_equal_endpoints():
    spec = pr.ProcedureSpec.z(1.0, 3)
    a = np.array([[0.1, 0.2, 0.0], [0.0, 0.0, 0.3], [0.3, 0.0, 0.0]])
    iv = pr.build_intervals_batch(spec, a, grid=0.1)
    assert iv.lower[0] == iv.lower[1] == iv.lower[2]
    with pytest.raises(pr.ContractError):
        pr.build_intervals_batch(pr.ProcedureSpec.trivial(), np.zeros((1, 1)), grid=0.1)
