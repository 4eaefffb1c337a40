import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dhym.errors import HypothesisFail
from dhym.estimates import (
    calibrate_stability,
    check_regime,
    de_giorgi_fit,
    de_giorgi_threshold,
    de_giorgi_verify,
    decreasing_limit_audit,
    density_functionals,
    envelope_estimate,
    envelope_ordering,
    gradient_diagnostic,
    level_density,
    level_mass,
    level_profile,
    linfty_audit,
    perturbed_density,
    regime_exponent,
    regression_slope,
    stability_experiment,
    stability_pair,
)
from dhym.solver import Backgrounds, continuity_path, manufactured_density
from dhym.torus import (
    HermitianField,
    PotentialField,
    TorusGrid,
    complex_hessian,
    integrate,
    normalize_density,
    omega_volume,
    volume_vt,
)

HALF_PI = math.pi / 2


def grid3(N=16, active=(0,)):
    g = TorusGrid.reduced(3, N, active=active)
    return g, HermitianField.identity(g)


# --- envelopes ---------------------------------------------------------------------

def test_envelope_unit_class_is_zero():
    g, I = grid3(8)
    run = envelope_estimate(I * 0.5, I, 0.5, [10, 20, 40])
    assert all(np.abs(u.values).max() <= 1e-14 for u in run.u_betas)


def test_envelope_constant_decay():
    g, I = grid3(8)
    run = envelope_estimate(I * 1.5, I, 0.5, [10, 20, 40, 80])
    for b, u in zip(run.betas, run.u_betas):
        assert np.abs(u.values - 3 / b * math.log(2)).max() <= 1e-10
    assert run.cauchy_decreasing()
    assert np.abs(run.U.values).max() == pytest.approx(3 / 80 * math.log(2), abs=1e-10)


def test_envelope_ordering():
    g, I = grid3(16)
    x = g.coords()[0]
    chit = I * 0.05 + complex_hessian(PotentialField(g, 0.3 * np.cos(x)))
    lo = envelope_estimate(chit, I, 0.1, [10, 20, 40, 80])
    hi = envelope_estimate(chit, I, 0.5, [10, 20, 40, 80])
    assert envelope_ordering(lo, hi) <= 0
    with pytest.raises(ValueError):
        envelope_ordering(hi, lo)
    with pytest.raises(ValueError):
        envelope_estimate(chit, I, 0.5, [20, 10])


# --- level sets ----------------------------------------------------------------------

def test_level_mass_examples():
    g, I = grid3(18)
    x = g.coords()[0]
    zero = PotentialField.zeros(g)
    one = PotentialField(g, np.ones(g.shape))
    V = volume_vt(I, I, 1.0)
    L = level_mass(zero, zero, one, 1.0, V)
    assert L.mass == 0 and L.excess == 0
    U = PotentialField(g, 1 + np.cos(x))
    L = level_mass(zero, U, one, 1.0, V)
    assert L.mass == pytest.approx(g.total_volume / 2, rel=1e-14)
    L0 = level_mass(zero, U, one, 0.0, V)
    # (1 + cos x) vanishes only at x = pi, which is a grid point here
    assert L0.excess == pytest.approx(g.total_volume / V, rel=1e-14)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 2), min_size=2, max_size=8))
def test_level_mass_monotone(svals):
    g, I = grid3(16)
    x = g.coords()[0]
    phi = PotentialField(g, 0.3 * np.cos(x) - 0.2 * np.sin(2 * x) - 0.5)
    U = PotentialField.zeros(g)
    gden = level_density(PotentialField(g, np.ones(g.shape)), 2.0)
    prof = level_profile(phi, U, gden, sorted(svals), 10.0, I)
    for a, b in zip(prof, prof[1:]):
        assert b.mass <= a.mass and b.excess <= a.excess
    E_t = integrate(np.maximum(U.values - phi.values, 0) * gden.values, g, I) / 10.0
    assert abs(level_mass(phi, U, gden, 0.0, 10.0, I).excess - E_t) <= 1e-12 * E_t
    assert all(p.excess <= E_t + 1e-12 for p in prof)


def test_level_density_positive():
    g, _ = grid3(8)
    with pytest.raises(ValueError):
        level_density(PotentialField(g, -np.ones(g.shape)), 1.0)


# --- De Giorgi -----------------------------------------------------------------------

@pytest.mark.parametrize("args,want", [((1, 1, 1), 4.0), ((2, 0.5, 0.25), 8.0), ((3.0, 0.7, 0.0), 0.0)])
def test_threshold_examples(args, want):
    assert de_giorgi_threshold(*args) == want


def test_threshold_formula_matches_hand_arithmetic():
    C, d, p = 0.3, 1 / 6, 0.02
    assert de_giorgi_threshold(C, d, p) == pytest.approx(C * p ** d * 2 ** ((1 + d) / d))
    with pytest.raises(ValueError):
        de_giorgi_threshold(0, 1, 1)


def test_verify_constant_fails():
    s = np.linspace(0, 5, 11)
    with pytest.raises(HypothesisFail) as exc:
        de_giorgi_verify(s, np.ones_like(s), 1.0, 1.0)
    assert exc.value.pair is not None


def test_verify_linear_decay():
    s = np.linspace(0, 3, 301)
    phi = np.maximum(0.0, 1 - s)
    C = de_giorgi_fit(s, phi, 1.0)
    assert C == pytest.approx(0.25, abs=1e-3)
    r = de_giorgi_verify(s, phi, C, 1.0)
    assert r.passed
    assert r.threshold == pytest.approx(4 * C)
    assert np.all(phi[s >= r.vanish_from] == 0)


def test_verify_rejects_bad_samples():
    with pytest.raises(ValueError):
        de_giorgi_verify([0, 1, 2], [1, 2, 0], 1, 1)
    with pytest.raises(ValueError):
        de_giorgi_verify([0, 2, 1], [1, 0.5, 0], 1, 1)


# --- L-infinity, gradient, decreasing limit -------------------------------------------

def test_linfty_constant_path():
    g, I = grid3(8)
    B = Backgrounds.constant(g)
    f = PotentialField(g, np.ones(g.shape))
    states = continuity_path(B, [1.0, 0.5, 0.25], f, HALF_PI)
    envs = [envelope_estimate(B.chi_tilde, I, s.t, [10, 20]) for s in states]
    # chi_tilde + t omega >= omega, so every finite-beta envelope is >= 0; use the exact one
    rep = linfty_audit(states, [PotentialField.zeros(g)] * 3)
    assert rep.K == [0.0, 0.0, 0.0] and rep.passed
    assert all(k >= 0 for k in linfty_audit(states, envs).K)
    with pytest.raises(ValueError):
        linfty_audit(states, envs[:2])
    with pytest.raises(ValueError):
        linfty_audit(states, [None] * 3)


def test_linfty_manufactured_path():
    g, I = grid3(16)
    B = Backgrounds.constant(g)
    phi_star = PotentialField(g, 0.05 * np.cos(g.coords()[0]))
    f = manufactured_density(phi_star, 1.0, HALF_PI, B)
    ts = [1.0, 0.5, 0.25, 0.1]
    states = continuity_path(B, ts, f, HALF_PI)
    rep = linfty_audit(states, [PotentialField.zeros(g)] * len(ts))
    assert np.all(np.isfinite(rep.K)) and rep.K_max > 0


def test_gradient_examples():
    g, I = grid3(16)
    r = gradient_diagnostic(PotentialField.zeros(g), 0.5, I)
    assert r.lhs == 0 and r.rhs > 0 and r.passed
    x = g.coords()[0]
    r = gradient_diagnostic(PotentialField(g, 0.05 * np.cos(x)), 0.5, I)
    # trace of i dd-bar phi is -0.0125 cos x, so L = 0.0125/3 rounded up on the 1e-3 grid
    assert r.L == pytest.approx(0.005)
    assert r.passed and r.lhs < 0.1 * r.rhs
    r99 = gradient_diagnostic(PotentialField(g, 0.05 * np.cos(x)), 0.999, I)
    assert r99.rhs > r.rhs and r99.passed
    with pytest.raises(ValueError):
        gradient_diagnostic(PotentialField.zeros(g), 1.0, I)


def test_decreasing_limit():
    g, _ = grid3(16)
    B = Backgrounds.constant(g)
    f = PotentialField(g, np.ones(g.shape))
    states = continuity_path(B, [1.0, 0.5, 0.25], f, HALF_PI)
    r = decreasing_limit_audit(states, 1.0)
    assert r.C == 0 and r.passed
    phi_star = PotentialField(g, 0.05 * np.cos(g.coords()[0]))
    fm = manufactured_density(phi_star, 1.0, HALF_PI, B)
    states = continuity_path(B, [1.0, 0.5, 0.25, 0.1], fm, HALF_PI)
    r = decreasing_limit_audit(states, 100.0)
    assert r.passed and math.isfinite(r.C)
    # C is the smallest multiple of 0.01 that works
    need = max(2 ** (i + 1) * inc for i, inc in enumerate(r.increments))
    assert r.C >= need and r.C - 0.01 < need
    assert not decreasing_limit_audit(states[::-1], 100.0).passed
    assert not decreasing_limit_audit(states, 0.0).passed or r.C == 0


# --- stability ---------------------------------------------------------------------------

def test_regimes():
    assert regime_exponent("general", 4) == pytest.approx(1 / 6)
    assert regime_exponent("general", 5) == pytest.approx(1 / 7)
    assert regime_exponent("hypercritical3", 3) == pytest.approx(1 / 6)
    assert regime_exponent("supercritical3", 3) == pytest.approx(1 / 5)
    with pytest.raises(ValueError):
        regime_exponent("general", 3)
    g, I = grid3(8)
    B = Backgrounds(I, I * 0.8, I * 0.3)
    check_regime("supercritical3", B, 2.0)
    with pytest.raises(ValueError):
        check_regime("hypercritical3", B, 2.0)
    bad = Backgrounds(I, HermitianField.constant(g, np.diag([1.0, -0.9, -0.9])), I)
    with pytest.raises(ValueError):
        check_regime("supercritical3", bad, 2.0)


def test_stability_identical_densities():
    g, I = grid3(16)
    B = Backgrounds.constant(g)
    f1 = normalize_density(PotentialField(g, 1 + 0.1 * np.sin(g.coords()[0])), I)
    rep = stability_experiment(B, f1, f1, 0.5, HALF_PI, 2.0, "hypercritical3", C=1.0)
    assert rep.sup_diff <= 1e-10 and rep.plus_norm <= 1e-8 and rep.passed


def test_stability_single_pair():
    g, I = grid3(16)
    B = Backgrounds.constant(g)
    x = g.coords()[0]
    f1 = normalize_density(PotentialField(g, 1 + 0.1 * np.sin(x)), I)
    cal = [stability_pair(B, f1, perturbed_density(f1, p, a, I), 0.5, HALF_PI, 2.0)
           for p in (np.cos(x), np.cos(2 * x)) for a in (0.05, 0.15)]
    C = calibrate_stability(cal, 1 / 6)
    f2 = perturbed_density(f1, np.cos(x), 0.1, I)
    rep = stability_experiment(B, f1, f2, 0.5, HALF_PI, 2.0, "hypercritical3", C)
    assert rep.exponent == pytest.approx(1 / 6)
    assert rep.ratio <= 1 and rep.passed
    assert rep.f2_lq > 0 and rep.f2_lnp > 0


def test_density_functionals():
    g, I = grid3(8)
    f = PotentialField(g, np.ones(g.shape))
    lq, lnp = density_functionals(f, I, 2.0, 4.0)
    vol = omega_volume(I)
    assert lq == pytest.approx(math.sqrt(vol))
    assert lnp == pytest.approx(vol * math.log(2) ** 4)


def test_regression_slope():
    x = np.array([0.01, 0.1, 1.0])
    assert regression_slope(x, 3 * x ** 0.5) == pytest.approx(0.5)
