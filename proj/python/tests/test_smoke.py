import math
import os

import numpy as np
import pytest

import flhom


def test_kernel_limits():
    assert flhom.dip_kernel(1.0, 1.0, 1e-6) == pytest.approx(math.exp(-1.0), abs=1e-6)
    tau = np.linspace(0.1, 5.0, 50)
    k = flhom.dip_kernel(tau, 1.0, 1e-4)
    assert k.shape == tau.shape
    assert np.max(np.abs(k - np.exp(-tau))) < 1e-3


def test_errors_map_to_python_exceptions():
    with pytest.raises(ValueError):
        flhom.dip_kernel(0.0, -1.0, 0.1)
    with pytest.raises(ValueError):
        flhom.ModelParams(lifetime_mu=0.0)


def test_simulate_and_fit():
    c = flhom.ScanConfig()
    c.model = flhom.ModelParams(7.22, flhom.sigma_from_fwhm(2.08), 0.5)
    c.delay_grid = flhom.uniform_grid(-8.0, 0.05, 600)
    c.rng_seed = 11
    t = flhom.simulate_scan(c)
    assert len(t) == 600
    assert flhom.simulate_scan(c).coincidences == t.coincidences
    o = flhom.FitOptions()
    o.irf_sigma = flhom.sigma_from_fwhm(2.08)
    r = flhom.fit_trace(t, flhom.FitMethod.NLLS, o)
    assert r.converged
    assert abs(r.params.lifetime_mu - 7.22) < 4 * r.std_errors[0]
    back = flhom.trace_from_csv(flhom.trace_to_csv(t))
    assert back.coincidences == t.coincidences


def test_visibility_and_rates():
    c = flhom.visibility_curve(0.05, 5.0, 60)
    assert 0.6 <= c.peak_ratio <= 0.8
    assert flhom.rate_tradeoff(1e5, 0.1).time_factor == pytest.approx(8.0)
    assert flhom.snr_coincidence(4.0) == pytest.approx(4.0 / 3.0)


def test_calibration_round_trip():
    pts = [flhom.CalibrationPoint(eta, 7.0 * eta**0.5) for eta in (1, 3, 10, 30, 100)]
    cal = flhom.fit_calibration(pts)
    assert cal.x == pytest.approx(0.5, rel=1e-12)
    est = flhom.viscosity_from_lifetime(cal.lifetime_at(12.5), 0.0, cal)
    assert est.eta == pytest.approx(12.5, rel=1e-12)
    floors = [flhom.min_resolvable_viscosity(s, cal) for s in (0.2, 0.5, 1.0)]
    assert floors == sorted(floors)
