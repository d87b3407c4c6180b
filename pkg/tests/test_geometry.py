import numpy as np
import pytest

from apsdirac.errors import AssumptionError
from apsdirac.geometry import (
    FoliatedSpacetime,
    annulus,
    conformal_reduce,
    density_factor,
    interval,
    mean_curvature,
    validate_assumptions,
    warp_family,
)


def test_linear_warp_annulus_passes_all_checks():
    st = FoliatedSpacetime(2, (0.2, 0.8), lambda t, r: 1 + 0.1 * t * r * (1 - r))
    rep = validate_assumptions(st)
    assert rep.passed
    assert all(c.violation == 0 for c in rep.checks)


def test_sin_lapse_boundary_value():
    st = interval(1.0, lapse="sin_bump", lapse_params={"amplitude": 0.5})
    check = validate_assumptions(st)["boundary_lapse"]
    assert check.passed and check.violation == 0


def test_cos_lapse_fails_with_violation():
    st = interval(1.0, lapse="cos_bump", lapse_params={"amplitude": 0.5})
    rep = validate_assumptions(st)
    assert not rep.passed
    assert rep["boundary_lapse"].violation == pytest.approx(0.5, abs=1e-12)
    with pytest.raises(AssumptionError, match="boundary"):
        conformal_reduce(st)


def test_boundary_lapse_stored_exactly():
    st = interval(1.0, lapse="sin2_bump", lapse_params={"amplitude": 0.3})
    for t in np.linspace(0, 1, 7):
        assert np.array_equal(st.lapse_values(t, np.array([0.0, 1.0])), [1.0, 1.0])


def test_construction_errors():
    with pytest.raises(ValueError, match="0"):
        annulus(time_window=(1.0, 2.0))
    with pytest.raises(ValueError, match="r_in"):
        annulus(0.0, 1.0)
    with pytest.raises(ValueError, match="boundary condition"):
        annulus(boundary={"inner": "PERIODIC"})
    with pytest.raises(ValueError, match="component"):
        interval(boundary={"inner": "APS"})
    with pytest.raises(ValueError):
        warp_family("nope", 2, (1, 2))


def test_mean_curvature_examples():
    exp_t = FoliatedSpacetime(2, (1.0, 2.0), lambda t, r: np.exp(t) + 0 * r)
    r = np.linspace(1, 2, 9)
    assert np.allclose(mean_curvature(exp_t, 0.3, r), -0.5, atol=1e-9)
    static = annulus(1, 2, "static", {"f0": 0.5})
    assert np.allclose(mean_curvature(static, 0.3, r), 0.0, atol=0)
    lin = FoliatedSpacetime(1, (0.0, 1.0), lambda t, x: 1 + t * x, time_window=(-0.5, 0.5))
    assert mean_curvature(lin, 0.0, np.array([1.0]))[0] == pytest.approx(-1.0, abs=1e-8)


def test_density_factor_examples():
    r = np.linspace(1, 2, 9)
    exp_t = FoliatedSpacetime(2, (1.0, 2.0), lambda t, r: np.exp(t) + 0 * r)
    assert np.allclose(density_factor(exp_t, 0.7, r), np.exp(0.35), rtol=1e-14)
    assert np.array_equal(density_factor(exp_t, 0.0, r), np.ones_like(r))
    sq = FoliatedSpacetime(1, (0.0, 1.0), lambda t, x: (1 + t) ** 2 + 0 * x)
    assert np.allclose(density_factor(sq, 0.4, r), 1.4, rtol=1e-14)


def test_curvature_density_identity():
    # 2 rho^-1 d_t rho = -n H at every node
    st = annulus(1, 2, "sin_warp", {"f0": 0.5, "beta": 0.2})
    r = np.linspace(1, 2, 17)
    h = 1e-5
    for t in (0.2, 0.6):
        drho = (density_factor(st, t + h, r) - density_factor(st, t - h, r)) / (2 * h)
        lhs = 2 * drho / density_factor(st, t, r)
        assert np.allclose(lhs, -2 * mean_curvature(st, t, r), atol=1e-8)


def test_non_unit_lapse_rejected_by_curvature():
    st = interval(1.0, lapse="sin2_bump")
    with pytest.raises(ValueError, match="unit lapse"):
        mean_curvature(st, 0.0, np.linspace(0, 1, 5))


def test_conformal_reduce_identity_for_unit_lapse():
    st = annulus(1, 2, "exp_warp")
    red, maps = conformal_reduce(st)
    assert red is st
    x = np.linspace(1, 2, 5)
    psi = np.ones((5, 2))
    assert np.array_equal(maps.forward_spinor(0.3, x, psi), psi)
    assert np.array_equal(maps.forward_source(0.3, x, psi), psi)


def test_conformal_weights_and_round_trip(rng):
    # N = 4 at a node: spinor weight N^(n/2) = 4, source weight N^((n+2)/2) = 16 for n = 2
    st = annulus(1, 2, "static", lapse="sin2_bump", lapse_params={"amplitude": 3.0})
    red, maps = conformal_reduce(st)
    mid = np.array([1.5])
    assert st.lapse_values(0, mid)[0] == pytest.approx(4.0)
    assert maps.spinor_weight(0, mid)[0] == pytest.approx(4.0)
    assert maps.source_weight(0, mid)[0] == pytest.approx(16.0)
    st1 = interval(1.0, lapse="sin2_bump", lapse_params={"amplitude": 1.0})
    _, m1 = conformal_reduce(st1)
    assert m1.spinor_weight(0, np.array([0.5]))[0] == pytest.approx(np.sqrt(2))
    assert m1.source_weight(0, np.array([0.5]))[0] == pytest.approx(2 ** 1.5)
    x = np.linspace(1, 2, 11)
    psi = rng.normal(size=(11, 8, 2)) + 1j * rng.normal(size=(11, 8, 2))
    back = maps.backward_spinor(0.4, x, maps.forward_spinor(0.4, x, psi))
    assert np.allclose(back, psi, rtol=1e-15, atol=0)
    assert red.unit_lapse
    # reduced metric is N^-2 h
    assert np.allclose(red.sqrt_det_h(0.0, x), st.sqrt_det_h(0.0, x) / st.lapse_values(0.0, x) ** 2)
