import datetime as dt
import json
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from covbranch.estimate import (
    CaseSeries,
    alpha,
    backtest,
    build_report,
    ci_backtest,
    ci_mean,
    crump_hove,
    estimate,
    estimator_path,
    forecast_unregistered,
    harris,
    lotka_nagaev,
    round_half_away,
)
from covbranch.exceptions import (
    CalibrationError,
    InsufficientDataError,
    UndefinedEstimateError,
    ValidationError,
)
from covbranch.model import Criticality

from conftest import BULGARIA

counts = st.lists(st.integers(0, 500), min_size=3, max_size=30)
positive_counts = st.lists(st.integers(1, 500), min_size=3, max_size=30)


class TestCaseSeries:
    def test_cumulative(self):
        s = CaseSeries.from_counts(BULGARIA, "2020-03-08")
        assert s.u[-1] == 331
        assert s.date(1) == dt.date(2020, 3, 8)
        assert s.date(21) == dt.date(2020, 3, 28)
        assert s.z(21) == 38

    def test_rejects_negative(self):
        with pytest.raises(ValidationError):
            CaseSeries.from_counts([1, -1])

    def test_rejects_gaps(self):
        with pytest.raises(ValidationError):
            CaseSeries((1, 2), (dt.date(2020, 1, 1), dt.date(2020, 1, 3)))


class TestLotkaNagaev:
    def test_last_pair(self):
        assert lotka_nagaev(BULGARIA, 20).value == pytest.approx(38 / 29, abs=1e-15)
        assert lotka_nagaev(BULGARIA, 20).value == pytest.approx(1.3103, abs=1e-4)

    def test_zero_day(self):
        with pytest.raises(UndefinedEstimateError):
            lotka_nagaev(BULGARIA, 2)

    def test_constant(self):
        assert all(lotka_nagaev([7] * 6, n).value == 1 for n in range(1, 6))

    def test_out_of_range(self):
        with pytest.raises(InsufficientDataError):
            lotka_nagaev(BULGARIA, 21)


class TestHarris:
    def test_bulgaria(self):
        est = harris(BULGARIA, 20)
        assert (est.numerator, est.denominator) == (327, 293)
        assert est.value == 327 / 293

    def test_constant(self):
        assert harris([3] * 9, 5).value == 1

    @pytest.mark.parametrize("r", [2, 3, 5])
    def test_integer_geometric(self, r):
        z = [r**i for i in range(1, 12)]
        for n in range(1, 11):
            assert harris(z, n).value == r

    def test_zero_denominator(self):
        with pytest.raises(UndefinedEstimateError):
            harris([0, 0, 4], 2)

    @given(z=counts, data=st.data())
    def test_integer_identity(self, z, data):
        n = data.draw(st.integers(1, len(z) - 1))
        u = np.cumsum(z).tolist()
        assume(u[n - 1] > 0)
        est = harris(z, n)
        assert Fraction(est.numerator, est.denominator) * u[n - 1] == u[n] - z[0]


class TestCrumpHove:
    def test_bulgaria(self):
        est = crump_hove(BULGARIA, 16, 5)
        assert (est.numerator, est.denominator) == (130, 108)
        assert est.value == pytest.approx(1.2037, abs=1e-4)

    def test_constant(self):
        assert crump_hove([4] * 10, 3, 4).value == 1

    def test_window_too_long(self):
        with pytest.raises(InsufficientDataError):
            crump_hove(BULGARIA, 18, 5)

    @given(z=positive_counts, data=st.data())
    def test_window_one_is_lotka_nagaev(self, z, data):
        n = data.draw(st.integers(1, len(z) - 1))
        assert crump_hove(z, n, 1).value == lotka_nagaev(z, n).value


class TestEquivarianceAndRecovery:
    @given(z=positive_counts, c=st.integers(1, 1000), data=st.data())
    def test_scale_equivariance(self, z, c, data):
        n = data.draw(st.integers(1, len(z) - 2))
        scaled = [c * v for v in z]
        assert harris(scaled, n).value == harris(z, n).value
        assert lotka_nagaev(scaled, n).value == lotka_nagaev(z, n).value
        assert crump_hove(scaled, n, 2).value == crump_hove(z, n, 2).value

    @settings(max_examples=50)
    @given(num=st.integers(1, 40), den=st.integers(1, 40), length=st.integers(4, 15))
    def test_rational_geometric_recovery(self, num, den, length):
        r = Fraction(num, den)
        z = [r**i for i in range(1, length + 1)]
        for n in range(1, length - 2):
            for est in (lotka_nagaev(z, n), harris(z, n), crump_hove(z, n, 2)):
                assert Fraction(est.numerator) / Fraction(est.denominator) == r
                assert est.value == float(r)


class TestPath:
    def test_constant(self):
        path = estimator_path([5] * 8, "harris")
        assert path.values == [1.0] * 7

    def test_bulgaria_final(self):
        path = estimator_path(BULGARIA, "harris")
        assert path[-1].value == 327 / 293
        assert path.days == list(range(1, 21))

    def test_length_two(self):
        path = estimator_path([2, 4], "lotka_nagaev")
        assert path.values == [2.0]

    def test_skips_zero_days(self):
        path = estimator_path(BULGARIA, "lotka_nagaev")
        assert path.skipped == (2,)
        assert 2 not in path.days

    def test_crump_hove_window(self):
        path = estimator_path(BULGARIA, "crump_hove", window=5)
        assert path.days[-1] == 16
        assert path[-1].value == 130 / 108

    def test_estimate_default_day(self):
        assert estimate(BULGARIA, "harris").day == 20
        assert estimate(BULGARIA, "crump-hove").day == 16

    def test_unknown_kind(self):
        with pytest.raises(ValidationError):
            estimate(BULGARIA, "median")


class TestForecast:
    def test_one_step(self):
        f = forecast_unregistered([29, 30], 1, 1, 1.1093)
        assert f.at(2).m1_hat == pytest.approx(32.1697, abs=1e-9)

    def test_ten_steps(self):
        f = forecast_unregistered([19], 1, 10, 1.1093)
        assert f.at(11).m1_hat == pytest.approx(19 * 1.1093**10, rel=1e-12)
        assert f.at(11).m1_hat == pytest.approx(53.6, abs=0.1)

    def test_critical_flatline(self):
        f = forecast_unregistered(BULGARIA, 10, 5, 1.0)
        assert {p.m1_hat for p in f} == {19.0}

    def test_degenerate_base(self):
        with pytest.raises(UndefinedEstimateError):
            forecast_unregistered(BULGARIA, 2, 3, 1.1)

    def test_covers_in_sample_tail_and_horizon(self):
        f = forecast_unregistered(BULGARIA, 10, 5, harris(BULGARIA, 20))
        assert [p.day for p in f] == list(range(10, 27))
        assert [p.observed for p in f] == [True] * 12 + [False] * 5
        assert f.kind == "harris"

    @given(z=positive_counts, m=st.floats(0.5, 2.0), data=st.data())
    def test_recursion(self, z, m, data):
        s = data.draw(st.integers(1, len(z)))
        pts = list(forecast_unregistered(z, s, 6, m))
        for a, b in zip(pts, pts[1:]):
            assert b.m1_hat == a.m1_hat * m
            assert 0 <= b.alpha_hat <= 1


class TestAlpha:
    def test_reported_value(self):
        assert alpha(38, 31) == pytest.approx(0.5507, abs=5e-5)

    def test_limits(self):
        assert alpha(5, 0) == 1
        assert alpha(0, 3.2) == 0

    def test_undefined(self):
        with pytest.raises(UndefinedEstimateError):
            alpha(0, 0)

    @given(z=st.integers(1, 10**6), m=st.floats(0.01, 1e6), d=st.floats(0.01, 1e3))
    def test_monotone(self, z, m, d):
        assert alpha(z, m + d) < alpha(z, m)
        assert alpha(z + 1, m) > alpha(z, m)


class TestBacktest:
    def test_bulgaria_rows(self):
        rows = backtest(BULGARIA, 4, m_override=1.1093)
        assert [r.k for r in rows] == [4, 3, 2, 1]
        got = {r.k: (r.predicted, r.observed) for r in rows}
        assert got == {1: (32, 38), 2: (24, 29), 3: (24, 22), 4: (21, 22)}

    def test_constant(self):
        assert all(r.predicted == r.observed for r in backtest([6] * 10, 5))

    def test_geometric(self):
        z = [2**i for i in range(1, 12)]
        assert all(r.predicted == r.observed for r in backtest(z, 8))
        assert all(r.predicted == r.observed for r in backtest(z, 8, protocol="rolling"))

    def test_full_sample_default(self):
        rows = backtest(BULGARIA, 3)
        assert {r.m for r in rows} == {327 / 293}

    def test_k_too_large(self):
        with pytest.raises(ValidationError):
            backtest(BULGARIA, 21)

    def test_rounding(self):
        assert [round_half_away(x) for x in (0.5, 1.5, 2.5, 2.49, -0.5)] == [1, 2, 3, 2, -1]


class TestConfidenceIntervals:
    def test_contains_point_and_is_deterministic(self):
        a = ci_mean(BULGARIA, replicates=400, seed=3)
        b = ci_mean(BULGARIA, replicates=400, seed=3)
        assert a == b
        assert a[0] <= 327 / 293 <= a[1]

    @settings(max_examples=10, deadline=None)
    @given(z=st.lists(st.integers(5, 60), min_size=6, max_size=12), seed=st.integers(0, 1000))
    def test_brackets_point_for_any_series(self, z, seed):
        point = harris(z, len(z) - 1).value
        assume(point < 1 / 0.3 - 1)
        lo, hi = ci_mean(z, replicates=200, seed=seed)
        assert lo <= point <= hi

    def test_large_constant_series_is_narrow(self):
        lo, hi = ci_mean([10**5] * 30, replicates=300, seed=1)
        assert lo <= 1 <= hi
        assert hi - lo < 0.01

    def test_infeasible_calibration(self):
        with pytest.raises(CalibrationError):
            ci_mean([1, 10, 100, 1000], replicates=50, q=0.3)

    def test_too_few_defined(self):
        with pytest.raises(InsufficientDataError):
            ci_mean(BULGARIA, replicates=9, seed=0)

    def test_backtest_intervals(self):
        rows = backtest(BULGARIA, 5, m_override=1.1093)
        cis = ci_backtest(BULGARIA, 5, replicates=500, seed=4, m_override=1.1093)
        assert cis == ci_backtest(BULGARIA, 5, replicates=500, seed=4, m_override=1.1093)
        for row, (lo, hi) in zip(rows, cis):
            assert isinstance(lo, int) and isinstance(hi, int)
            assert lo <= row.predicted <= hi

    def test_bad_level(self):
        with pytest.raises(ValidationError):
            ci_mean(BULGARIA, level=1.0)


class TestReport:
    def test_json_schema(self):
        series = CaseSeries.from_counts(BULGARIA, "2020-03-08", region="BG")
        rep = build_report(series, s=10, backtest_days=4, m_override=1.1093, ci_reps=0)
        d = json.loads(rep.to_json())
        assert set(d) >= {"series_meta", "estimator_paths", "point_estimates", "forecast",
                          "alpha_path", "backtest"}
        assert d["series_meta"]["start"] == "2020-03-08"
        assert [r["predicted"] for r in d["backtest"]] == [21, 24, 24, 32]

    def test_criticality(self):
        assert harris(BULGARIA, 20).criticality is Criticality.SUPERCRITICAL
        assert math.isfinite(harris(BULGARIA, 20).value)
