import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from puprior.data_io import LabeledTable
from puprior.errors import DataError, InvalidParameterError, PUPriorError
from puprior.estimators import theta_grid
from puprior.experiments import (
    EstimationSettings,
    ExperimentReport,
    TrialRecord,
    deviation_bound,
    fit_rate,
    run_benchmark,
    run_converge,
    run_deviation,
    run_method,
    run_synth,
    worker_count,
)
from puprior.model_selection import CVConfig, Method

from helpers import synthetic

FAST = EstimationSettings(
    grid=tuple(theta_grid(0.0, 1.0, 0.1).tolist()),
    cv=CVConfig(folds=3, sigma_grid=(0.5, 1.0), lambda_grid=(0.1, 1.0)),
    max_centers=40,
)


def report_of(thetas, prior=0.5, failed=0):
    trials = [TrialRecord(i, theta_hat=t, hyperparams=[1.0, 0.1]) for i, t in enumerate(thetas)]
    trials += [TrialRecord(100 + i, status="failed", message="boom") for i in range(failed)]
    return ExperimentReport("pen-l1", {"k": 1}, trials, true_prior=prior)


class TestReport:
    def test_single_trial(self):
        agg = report_of([0.62]).aggregates
        assert agg["theta_hat"]["mean"] == agg["theta_hat"]["median"] == 0.62
        assert agg["theta_hat"]["std"] == 0.0
        assert agg["squared_error"]["mean"] == pytest.approx((0.62 - 0.5) ** 2)

    @given(st.lists(st.floats(0, 1), min_size=1, max_size=40), st.integers(0, 5))
    def test_aggregates_recompute(self, thetas, failed):
        report = report_of(thetas, 0.3, failed)
        agg = report.aggregates
        assert agg["n_ok"] == len(thetas) and agg["n_failed"] == failed
        assert agg["theta_hat"]["mean"] == pytest.approx(np.mean(thetas))
        assert agg["squared_error"]["mean"] == pytest.approx(np.mean((np.array(thetas) - 0.3) ** 2))
        counts, _ = report.histogram()
        assert counts.sum() == len(thetas)

    def test_round_trip(self):
        report = report_of([0.1, 0.4, 0.9], failed=1)
        back = ExperimentReport.from_dict(report.to_dict())
        assert back.to_dict() == report.to_dict()

    def test_tampered_aggregates(self):
        payload = report_of([0.1, 0.4]).to_dict()
        payload["aggregates"]["theta_hat"]["mean"] = 0.9
        with pytest.raises(PUPriorError, match="aggregates"):
            ExperimentReport.from_dict(payload)

    def test_all_failed(self):
        agg = report_of([], failed=2).aggregates
        assert agg["n_ok"] == 0
        assert agg["theta_hat"]["mean"] is None
        assert "squared_error" not in agg


class TestRunMethod:
    @pytest.mark.parametrize("method", [m.value for m in Method])
    def test_every_method(self, method):
        data = synthetic(n=80, n_prime=80, seed=2).data
        est = run_method(method, data, FAST)
        assert 0.0 <= est.theta_hat <= 1.0
        assert est.method == method

    def test_iterative_stride_applied(self, monkeypatch):
        import puprior.experiments as ex

        seen = {}

        def fake(method, data, grid, cv, *rest):
            seen[method] = cv.cv_stride
            raise PUPriorError("stop")

        monkeypatch.setattr(ex, "search_prior", fake)
        data = synthetic(n=30, n_prime=30).data
        for method in ("pen-l1", "l1", "pen-kl"):
            with pytest.raises(PUPriorError):
                run_method(method, data, FAST)
        assert seen == {Method.PEN_L1: 1, Method.L1: FAST.iterative_cv_stride, Method.PEN_KL: FAST.iterative_cv_stride}


class TestSynth:
    def test_deterministic_without_timing(self):
        a = run_synth(0.25, 0.7, 60, 60, 2, ("pen-l1", "pe"), seed=4, settings=FAST, timing=False)
        b = run_synth(0.25, 0.7, 60, 60, 2, ("pen-l1", "pe"), seed=4, settings=FAST, timing=False)
        assert {m: r.to_dict() for m, r in a.items()} == {m: r.to_dict() for m, r in b.items()}
        assert [t.seed for t in a["pe"].trials] == [4, 5]

    def test_threads_do_not_change_results(self, monkeypatch):
        serial = run_synth(0.25, 0.7, 60, 60, 3, ("pen-l1",), settings=FAST, timing=False)
        monkeypatch.setenv("PUPRIOR_THREADS", "2")
        assert worker_count() == 2
        parallel = run_synth(0.25, 0.7, 60, 60, 3, ("pen-l1",), settings=FAST, timing=False)
        assert serial["pen-l1"].to_dict() == parallel["pen-l1"].to_dict()

    def test_bad_thread_env(self, monkeypatch):
        monkeypatch.setenv("PUPRIOR_THREADS", "many")
        with pytest.raises(InvalidParameterError):
            worker_count()

    def test_failed_trials_recorded(self):
        # two points per sample cannot be split into three folds
        reports = run_synth(0.25, 0.7, 2, 2, 2, ("pen-l1",), settings=FAST)
        rep = reports["pen-l1"]
        assert all(t.status == "failed" and "InvalidParameterError" in t.message for t in rep.trials)
        assert rep.aggregates["n_failed"] == 2

    def test_rejects_zero_trials(self):
        with pytest.raises(InvalidParameterError):
            run_synth(0.25, 0.7, 10, 10, 0)


class TestBenchmark:
    def table(self):
        rng = np.random.default_rng(0)
        pos = rng.normal(0.0, 1.0, size=(400, 2))
        neg = rng.normal(2.0, 1.0, size=(600, 2))
        return LabeledTable(np.vstack([pos, neg]), np.r_[np.ones(400), -np.ones(600)])

    def test_records_error_rates(self):
        reports = run_benchmark(self.table(), priors=(0.3,), trials=2, methods=("pen-l1", "en"), n_positive=60, n_unlabeled=100, settings=FAST)
        assert set(reports) == {(0.3, "pen-l1"), (0.3, "en")}
        for rep in reports.values():
            for t in rep.trials:
                assert t.ok
                assert 0.0 <= t.error_rate <= 1.0 and 0.0 <= t.error_rate_true_prior <= 1.0
            assert "error_rate" in rep.aggregates

    def test_impossible_split_fails_fast(self):
        with pytest.raises(DataError):
            run_benchmark(self.table(), priors=(0.9,), trials=1, n_positive=300, n_unlabeled=400, settings=FAST)


class TestRateFit:
    def test_exact_power_law(self):
        sizes = np.array([100, 200, 400, 800])
        fit = fit_rate(sizes, 3.0 * sizes**-0.5)
        assert fit.log_log_slope == pytest.approx(-0.5, abs=1e-12)
        assert fit.intercept == pytest.approx(math.log(3.0), abs=1e-12)

    @given(st.lists(st.floats(1e-6, 1e3), min_size=2, max_size=8), st.floats(1e-3, 1e3))
    def test_scale_invariance(self, errors, factor):
        sizes = 100 * 2 ** np.arange(len(errors))
        base, scaled = fit_rate(sizes, errors), fit_rate(sizes, np.array(errors) * factor)
        assert scaled.log_log_slope == pytest.approx(base.log_log_slope, abs=1e-8)
        assert scaled.intercept - base.intercept == pytest.approx(math.log(factor), abs=1e-8)

    def test_doubling_shifts_by_log_two(self):
        sizes, errs = [100, 200, 400], [0.3, 0.2, 0.1]
        assert fit_rate(sizes, 2 * np.array(errs)).intercept - fit_rate(sizes, errs).intercept == pytest.approx(math.log(2))

    @pytest.mark.parametrize(
        "sizes, errors",
        [([100], [0.1]), ([200, 100], [0.1, 0.2]), ([100, 200], [0.1, 0.0]), ([100, 200], [0.1])],
    )
    def test_rejects(self, sizes, errors):
        with pytest.raises(InvalidParameterError):
            fit_rate(sizes, errors)


class TestConverge:
    def test_too_few_sizes(self):
        with pytest.raises(InvalidParameterError, match="at least 4"):
            run_converge(sizes=(100, 200, 400))

    def test_bad_theta(self):
        with pytest.raises(InvalidParameterError):
            run_converge(sizes=(10, 20, 40, 80), theta="auto")

    @pytest.mark.parametrize("theta", [0.5, "search"])
    def test_small_run(self, theta):
        rep = run_converge(sizes=(50, 100, 200, 400), trials=3, theta=theta, oracle_size=2000, max_centers=30)
        assert rep.mode == ("search" if theta == "search" else "fixed")
        assert [p["size"] for p in rep.per_size] == [50, 100, 200, 400]
        assert all(len(p["errors"]) == 3 for p in rep.per_size)
        assert np.isfinite(rep.fit.log_log_slope)

    def test_deterministic(self):
        kw = dict(sizes=(50, 100, 200, 400), trials=2, oracle_size=1000, max_centers=20)
        assert run_converge(**kw).per_size == run_converge(**kw).per_size


class TestDeviation:
    def test_bound_formula(self):
        expected = 3 * 10 / 0.1 * math.sqrt(math.log(2 / 0.05) / 2 * (1 / 400 + 1 / 400))
        assert deviation_bound(10, 0.1, 400, 400, 0.05) == pytest.approx(expected)

    @given(st.floats(1e-3, 10), st.floats(1.1, 100))
    def test_bound_scales_inverse_lambda(self, lam, factor):
        ratio = deviation_bound(5, lam, 100, 200, 0.1) / deviation_bound(5, lam * factor, 100, 200, 0.1)
        assert ratio == pytest.approx(factor)

    def test_too_few_resamples(self):
        with pytest.raises(InvalidParameterError, match="50"):
            run_deviation(resamples=10)

    @pytest.mark.parametrize("kwargs", [{"delta": 0.0}, {"delta": 1.0}, {"lam": 0.0}])
    def test_rejects(self, kwargs):
        with pytest.raises(InvalidParameterError):
            run_deviation(resamples=50, **kwargs)

    def test_report_reflects_lambda(self):
        small = run_deviation(n=100, n_prime=100, resamples=50, lam=0.1, max_centers=30)
        large = run_deviation(n=100, n_prime=100, resamples=50, lam=1.0, max_centers=30)
        assert small.bound == pytest.approx(10 * large.bound)
        assert not small.violated and not large.violated
        assert small.quantile == pytest.approx(np.quantile(np.abs(np.array(small.values) - small.mean), 0.95))
