"""Verification primitives: pass/fail contracts, rate fitting, CSV output."""

import csv

import numpy as np
import pytest

from zobilevel import BoundBundle, InvalidParameterError, fit_rate
from zobilevel.verify import (check_moment_bounds, check_stein,
                              write_bundles_csv, write_rate_points_csv,
                              write_ratefits_csv)


class TestBoundBundle:
    def test_passes_inside_bound(self):
        assert BoundBundle("b", lhs_estimate=0.9, lhs_se=0.0, rhs_bound=1.0).passed

    def test_fails_outside_bound(self):
        assert not BoundBundle("b", lhs_estimate=1.5, lhs_se=0.1, rhs_bound=1.0).passed

    def test_four_se_slack_is_the_contract(self):
        # exactly at lhs - 4*se == rhs the check still passes
        assert BoundBundle("b", lhs_estimate=1.4, lhs_se=0.1, rhs_bound=1.0).passed
        assert not BoundBundle("b", lhs_estimate=1.41, lhs_se=0.1, rhs_bound=1.0).passed

    def test_margin(self):
        b = BoundBundle("b", lhs_estimate=0.25, lhs_se=0.0, rhs_bound=1.0)
        assert b.margin == pytest.approx(0.75)


class TestRateFit:
    def test_recovers_synthetic_power_law(self):
        Ns = np.array([100.0, 200.0, 400.0, 800.0])
        vals = 3.0 * Ns ** -0.5
        fit = fit_rate("law", Ns, vals, target=-0.5, accept=(-0.6, -0.4),
                       min_r_squared=0.9)
        assert fit.slope == pytest.approx(-0.5, abs=1e-12)
        assert fit.r_squared == pytest.approx(1.0)
        assert fit.passed

    def test_noisy_law_within_window(self):
        rng = np.random.default_rng(0)
        Ns = np.array([100.0, 200.0, 400.0, 800.0, 1600.0])
        vals = 3.0 * Ns ** -1.0 * np.exp(0.05 * rng.standard_normal(5))
        fit = fit_rate("law", Ns, vals, accept=(-1.2, -0.8), min_r_squared=0.9)
        assert fit.passed and fit.slope_se > 0

    def test_poor_fit_is_rejected_by_r_squared(self):
        Ns = np.array([1.0, 2.0, 3.0, 4.0])
        vals = np.array([1.0, 5.0, 0.2, 4.0])
        fit = fit_rate("noise", Ns, vals, accept=(-10.0, 10.0), min_r_squared=0.9)
        assert not fit.passed

    def test_linear_x_mode(self):
        # exponential decay fitted against the raw index
        ks = np.arange(1.0, 6.0)
        vals = 2.0 * np.exp(-0.3 * ks)
        fit = fit_rate("decay", ks, vals, log_x=False)
        assert fit.slope == pytest.approx(-0.3)

    def test_rejects_degenerate_input(self):
        with pytest.raises(InvalidParameterError):
            fit_rate("x", [1.0], [1.0])
        with pytest.raises(InvalidParameterError):
            fit_rate("x", [1.0, 2.0], [1.0, -1.0])


class TestWriters:
    def test_bundle_csv_roundtrip(self, tmp_path):
        bundles = [BoundBundle("a", 0.5, 0.01, 1.0),
                   BoundBundle("b", 2.0, 0.0, 1.0)]
        path = tmp_path / "bundles.csv"
        write_bundles_csv(path, bundles)
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert [r["name"] for r in rows] == ["a", "b"]
        assert [r["pass"] for r in rows] == ["True", "False"]
        assert float(rows[0]["lhs_estimate"]) == 0.5

    def test_rate_csvs(self, tmp_path):
        fit = fit_rate("law", [10.0, 100.0], [1.0, 0.1])
        write_ratefits_csv(tmp_path / "fits.csv", [fit])
        write_rate_points_csv(tmp_path / "points.csv", [fit])
        with open(tmp_path / "points.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 2
        assert rows[0]["name"] == "law"


class TestQuickSuites:
    # small-sample smoke runs of the statistical checks; the acceptance tests
    # run them at full strength
    def test_stein_small(self):
        bundles = check_stein(dim=3, samples=200_000, seed=1)
        assert all(b.passed for b in bundles)

    def test_moments_small(self):
        bundles = check_moment_bounds(samples=100_000, seed=1)
        assert all(b.passed for b in bundles)
