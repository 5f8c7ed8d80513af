"""Consistency of the reference formulas among themselves."""

import math

import numpy as np
import pytest
from scipy import integrate
from scipy.stats import norm

from pathbv import closedforms as cf


def test_interval_images_agree_with_series():
    for t in (0.05, 0.3, 1.0, 3.0):
        for x in (-0.7, 0.0, 0.4):
            assert cf.interval_stay_images(x, -1, 1, t) == pytest.approx(
                cf.interval_stay_series(x, -1, 1, t), abs=1e-12)


def test_halfline_matches_wide_interval():
    # an interval whose far end is out of reach behaves like a half-line
    assert cf.interval_stay_images(0.1, 0.0, 40.0, 1.0) == pytest.approx(
        cf.halfline_stay(0.1, 1.0), abs=1e-12)


def test_halfline_plug_in():
    assert cf.halfline_stay(0.1, 1.0) == pytest.approx(2 * norm.cdf(0.1) - 1)
    assert cf.halfline_stay(0.1, 1.0) == pytest.approx(0.0797, abs=1e-4)


def test_drifted_passage_driftless_limit():
    assert cf.drifted_passage_cdf(1.0, 0.0, 1.0) == pytest.approx(cf.running_min_cdf(1.0, 1.0))


def test_drifted_passage_is_density_integral():
    C, r = 0.7, 0.4
    dens = lambda t: r / math.sqrt(2 * math.pi * t ** 3) * math.exp(-(r + C * t) ** 2 / (2 * t))
    val, _ = integrate.quad(dens, 0, 2.0)
    assert cf.drifted_passage_cdf(2.0, C, r) == pytest.approx(val, abs=1e-9)


def test_disk_survival_limits():
    assert cf.disk_exit_survival(0.01) == pytest.approx(1.0, abs=1e-9)
    assert cf.disk_exit_survival(20.0) < 1e-10
    # expected exit time from the centre of the unit disk is R^2 / d = 1/2
    val, _ = integrate.quad(cf.disk_exit_survival, 0.01, 40, limit=200)
    val += 0.01  # survival is 1 to machine precision before t = 0.01
    assert val == pytest.approx(0.5, abs=1e-6)


def test_reflected_ou_stationary_is_truncated_gaussian():
    x, p = cf.reflected_ou_stationary(level=1.0)
    ref = norm.pdf(x) / norm.cdf(1.0)
    assert np.max(np.abs(p - ref)) < 1e-4
