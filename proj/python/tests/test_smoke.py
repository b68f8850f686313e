"""Smoke tests for the python bindings."""

import math

import numpy as np
import pytest

mslpy = pytest.importorskip("mslpy")


def test_poisson_log_pmf():
    assert mslpy.poisson_log_pmf(0, 0.0) == 0.0
    assert mslpy.poisson_log_pmf(0, 2.0) == pytest.approx(-2.0, abs=1e-14)
    assert mslpy.poisson_log_pmf(3, 2.0) == pytest.approx(
        3 * math.log(2.0) - 2.0 - math.log(6.0), abs=1e-12
    )


def test_simulate_shapes_and_determinism():
    s1 = mslpy.simulate(rows=8, cols=8, bands=3, bins=96, endmembers=3, budget=2.0, seed=5)
    s2 = mslpy.simulate(rows=8, cols=8, bands=3, bins=96, endmembers=3, budget=2.0, seed=5)
    assert s1["counts"].shape == (8, 8, 3, 96)
    assert np.array_equal(s1["counts"], s2["counts"])
    assert s1["true_depth"].shape == (8, 8)
    assert s1["true_abundance"].shape == (8, 8, 3)
    assert s1["endmembers"].shape == (3, 3)
    assert s1["irf_params"].shape == (3, 4)
    assert s1["gain"] > 0
    assert s1["t_min"] < s1["t_max"]


def test_unmix_runs_and_is_worker_invariant():
    s = mslpy.simulate(rows=8, cols=8, bands=3, bins=96, endmembers=3, budget=3.0, seed=5)
    kwargs = dict(bin_ps=s["bin_ps"], iters=40, burnin=20, tv=True, seed=9)
    r1 = mslpy.unmix(s["counts"], s["endmembers"], s["irf_params"], workers=1, **kwargs)
    r2 = mslpy.unmix(s["counts"], s["endmembers"], s["irf_params"], workers=4, **kwargs)
    assert r1["depth_bins"].shape == (8, 8)
    assert np.array_equal(r1["depth_bins"], r2["depth_bins"])
    assert np.array_equal(r1["abundance"], r2["abundance"])
    assert r1["confidence"].min() >= 0.0
    assert r1["confidence"].max() <= 1.0
    assert (r1["abundance"] >= 0.0).all()
    assert r1["labels"].shape == (8, 8, 3)
    assert len(r1["log_lik_trace"]) == 40
    assert r1["theta"]["beta0"] <= 1.0

    rm = mslpy.rmse_mm(r1["depth_bins"], s["true_depth"], bin_ps=s["bin_ps"])
    assert rm >= 0.0
    assert mslpy.rmse_mm(s["true_depth"], s["true_depth"], bin_ps=s["bin_ps"]) == 0.0


def test_ml_depth_improves_with_photons():
    lo = mslpy.simulate(rows=8, cols=8, bands=3, bins=96, endmembers=3, budget=1.0, seed=6)
    hi = mslpy.simulate(rows=8, cols=8, bands=3, bins=96, endmembers=3, budget=200.0, seed=6)
    ml_lo = mslpy.ml_depth(lo["counts"], lo["irf_params"], bin_ps=lo["bin_ps"])
    ml_hi = mslpy.ml_depth(hi["counts"], hi["irf_params"], bin_ps=hi["bin_ps"])
    err_lo = mslpy.rmse_mm(ml_lo, lo["true_depth"], bin_ps=lo["bin_ps"])
    err_hi = mslpy.rmse_mm(ml_hi, hi["true_depth"], bin_ps=hi["bin_ps"])
    assert err_hi <= err_lo


def test_label_f1():
    a = np.array([1, 0, 1, 0], dtype=np.uint8)
    b = np.array([1, 0, 0, 0], dtype=np.uint8)
    assert mslpy.label_f1(a, a) == 1.0
    assert mslpy.label_f1(a, b) == pytest.approx(2 * 1 / (2 * 1 + 1 + 0))
