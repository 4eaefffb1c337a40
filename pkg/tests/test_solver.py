import math

import numpy as np
import pytest

import dhym.solver as solver_mod
from dhym.errors import BracketFailure, ConeExit, NoConvergence, PositivityExit
from dhym.phase_algebra import PhaseWindow
from dhym.solver import (
    Backgrounds,
    SolveConfig,
    continuity_path,
    ct_monotone,
    find_s1,
    find_T1,
    intermediate_bt,
    linearized_residual,
    manufactured_density,
    newton_solve,
    residual_field,
    solve_intermediate,
    solve_ma_exponential,
    stability_constants,
    trace_positivity,
)
from dhym.torus import (
    HermitianField,
    PotentialField,
    TorusGrid,
    cohomological_ct,
    complex_hessian,
    integrate,
    normalize_density,
    omega_volume,
    phase_defect,
    sup_normalize,
)

HALF_PI = math.pi / 2


@pytest.fixture
def flat3():
    g = TorusGrid.reduced(3, 16)
    return g, Backgrounds.constant(g)


def ones(g):
    return PotentialField(g, np.ones(g.shape))


def test_config_validation():
    with pytest.raises(ValueError):
        SolveConfig(residual_tol=0)
    with pytest.raises(ValueError):
        SolveConfig(damping=1.0)


# --- residual and linearization --------------------------------------------------

def test_residual_balanced_is_zero(flat3):
    g, B = flat3
    F = residual_field(PotentialField.zeros(g), 0.5, ones(g), HALF_PI, B)
    assert np.abs(F).max() < 1e-14


def test_residual_cone_exit(flat3):
    g, B = flat3
    x = g.coords()[0]
    with pytest.raises(ConeExit) as exc:
        residual_field(PotentialField(g, 40 * np.cos(x)), 0.5, ones(g), HALF_PI, B)
    assert exc.value.margin < 0
    assert exc.value.point is not None


def test_residual_vanishes_at_manufactured_solution(flat3):
    g, B = flat3
    phi = PotentialField(g, 0.05 * np.cos(g.coords()[0]))
    f = manufactured_density(phi, 0.5, HALF_PI, B)
    assert np.all(f.values > 0)
    assert np.abs(residual_field(phi, 0.5, f, HALF_PI, B)).max() <= 1e-12


def test_linearization_matches_central_difference():
    g = TorusGrid.reduced(3, 16, active=(0, 3))
    x, y = g.coords()[0], g.coords()[3]
    I = HermitianField.identity(g)
    B = Backgrounds(I, I + complex_hessian(PotentialField(g, 0.1 * np.cos(x + y))), I)
    f = normalize_density(PotentialField(g, 1 + 0.2 * np.sin(x)), I)
    rng = np.random.default_rng(3)
    phi = PotentialField(g, 0.05 * np.cos(2 * x) * np.sin(y))
    for _ in range(3):
        psi = PotentialField(g, rng.normal(size=g.shape))
        h = 1e-5
        fd = (residual_field(phi + psi * h, 0.5, f, HALF_PI, B)
              - residual_field(phi - psi * h, 0.5, f, HALF_PI, B)) / (2 * h)
        an = linearized_residual(phi, psi, 0.5, f, HALF_PI, B)
        assert np.abs(fd - an).max() <= 1e-5 * np.abs(an).max()


# --- Newton ------------------------------------------------------------------------

def test_balanced_solve(flat3):
    g, B = flat3
    st = newton_solve(None, 0.5, ones(g), HALF_PI, B)
    assert np.abs(st.phi.values).max() <= 1e-10
    assert st.c_t == pytest.approx(8.125, abs=1e-12)
    assert st.newton_iters == 1
    assert st.phi.values.max() == 0.0


def test_manufactured_solve(flat3):
    g, B = flat3
    phi_star = PotentialField(g, 0.05 * np.cos(g.coords()[0]))
    f = manufactured_density(phi_star, 0.5, HALF_PI, B)
    st = newton_solve(None, 0.5, f, HALF_PI, B)
    assert np.abs(st.phi.values - sup_normalize(phi_star).values).max() <= 1e-8
    assert st.residual_sup <= 1e-10
    assert st.cone_margin_min >= SolveConfig().cone_safety
    # discrete compatibility of the manufactured density
    X = B.form(0.5)
    defect = phase_defect(X, B.omega, HALF_PI) - st.c_t * f.values
    assert abs(integrate(defect, g, B.omega)) / omega_volume(B.omega) <= 1e-12
    # c_t of a converged state is the cohomological constant
    assert abs(st.c_t - cohomological_ct(B.chi, B.chi_tilde, B.omega, 0.5, HALF_PI, f)) <= 1e-10
    assert trace_positivity(st, B) >= 0


def test_manufactured_solve_two_axes():
    g = TorusGrid.reduced(3, 12, active=(0, 2))
    B = Backgrounds.constant(g, chi=np.diag([1.2, 1.0, 0.9]))
    x1, x2 = g.coords()[0], g.coords()[2]
    phi_star = PotentialField(g, 0.04 * np.cos(x1) * np.sin(x2) + 0.02 * np.sin(2 * x1))
    f = manufactured_density(phi_star, 0.5, 1.8, B)
    st = newton_solve(None, 0.5, f, 1.8, B)
    assert np.abs(st.phi.values - sup_normalize(phi_star).values).max() <= 1e-8


def test_cone_exit_at_initialisation(flat3):
    g, B = flat3
    with pytest.raises(ConeExit):
        newton_solve(None, 0.5, ones(g), 0.5, B)


def test_no_convergence_budget(flat3):
    g, B = flat3
    phi_star = PotentialField(g, 0.05 * np.cos(g.coords()[0]))
    f = manufactured_density(phi_star, 0.5, HALF_PI, B)
    with pytest.raises(NoConvergence):
        newton_solve(None, 0.5, f, HALF_PI, B, SolveConfig(max_newton=1))


def test_window_object_and_theta_agree(flat3):
    g, B = flat3
    a = newton_solve(None, 0.5, ones(g), HALF_PI, B)
    b = newton_solve(None, 0.5, ones(g), PhaseWindow.with_default_upper(HALF_PI), B)
    assert a.c_t == b.c_t


# --- continuity path -----------------------------------------------------------------

def test_constant_path(flat3):
    g, B = flat3
    states = continuity_path(B, [1.0, 0.5, 0.25], ones(g), HALF_PI)
    assert [s.t for s in states] == [1.0, 0.5, 0.25]
    for s in states:
        assert np.abs(s.phi.values).max() <= 1e-12
    c = [s.c_t for s in states]
    assert c[0] > c[1] > c[2]
    assert ct_monotone(states)


def test_manufactured_path(flat3):
    g, B = flat3
    phi_star = PotentialField(g, 0.05 * np.cos(g.coords()[0]))
    f = manufactured_density(phi_star, 1.0, HALF_PI, B)
    states = continuity_path(B, [1.0, 0.5, 0.25, 0.1], f, HALF_PI)
    assert all(s.residual_sup <= 1e-10 for s in states)
    assert min(s.cone_margin_min for s in states) >= 1e-3
    assert np.abs(states[0].phi.values - sup_normalize(phi_star).values).max() <= 1e-8


@pytest.mark.parametrize("sched", [[0.5, 1.0], [0.5, 0.5], [1.0, -0.1], []])
def test_schedule_rejected(flat3, sched):
    g, B = flat3
    with pytest.raises(ValueError):
        continuity_path(B, sched, ones(g), HALF_PI)


def test_first_t_is_raised():
    # chi = omega + i dd-bar rho is far from the window at small t with phi = 0,
    # but phi = -rho solves every step exactly
    g = TorusGrid.reduced(3, 16)
    I = HermitianField.identity(g)
    rho = PotentialField(g, 8.0 * np.cos(g.coords()[0]))
    B = Backgrounds(I, I + complex_hessian(rho), I * 0.05)
    theta0 = 3 * (math.pi / 2 - math.atan(1.05))
    w = PhaseWindow.with_default_upper(theta0)
    assert solver_mod.background_margin(B, 0.1, w) < 0
    states = continuity_path(B, [0.1, 0.05], ones(g), w)
    assert [s.t for s in states] == [0.1, 0.05]
    for s in states:
        assert np.abs(s.phi.values - sup_normalize(-rho).values).max() <= 1e-9


def test_failed_step_is_bisected(flat3, monkeypatch):
    g, B = flat3
    real = solver_mod.newton_solve
    seen = []

    def flaky(phi0, t, *args, **kwargs):
        seen.append(t)
        if t == 0.25 and len(seen) == 2:
            raise NoConvergence("forced")
        return real(phi0, t, *args, **kwargs)

    monkeypatch.setattr(solver_mod, "newton_solve", flaky)
    states = continuity_path(B, [0.5, 0.25], ones(g), HALF_PI)
    assert seen == [0.5, 0.25, 0.375, 0.25]
    assert [s.t for s in states] == [0.5, 0.25]


def test_bisection_budget(flat3, monkeypatch):
    g, B = flat3

    def broken(phi0, t, *args, **kwargs):
        if t < 0.5:
            raise NoConvergence("forced")
        return solver_mod.PathState(t, PotentialField.zeros(g), 0.0, 1.0, 0.0, 1)

    monkeypatch.setattr(solver_mod, "newton_solve", broken)
    with pytest.raises(NoConvergence):
        continuity_path(B, [0.5, 0.25], ones(g), HALF_PI, max_bisections=3)


# --- exponential Monge-Ampere -------------------------------------------------------

@pytest.mark.parametrize("a,beta", [(1.0, 10.0), (2.0, 10.0), (3.0, 40.0)])
def test_ma_exponential_constant(a, beta):
    g = TorusGrid.reduced(3, 8)
    I = HermitianField.identity(g)
    u = solve_ma_exponential(HermitianField.constant(g, a - 0.5), I, 0.5, beta)
    assert np.abs(u.values - 3 / beta * math.log(a)).max() <= 1e-10


def test_ma_exponential_example_value():
    g = TorusGrid.reduced(3, 8)
    I = HermitianField.identity(g)
    u = solve_ma_exponential(HermitianField.constant(g, 1.5), I, 0.5, 10.0)
    assert u.values.max() == pytest.approx(0.2079442, abs=1e-7)


def test_ma_exponential_order_one_over_beta():
    g = TorusGrid.reduced(3, 8)
    I = HermitianField.identity(g)
    sups = [np.abs(solve_ma_exponential(I * 0.7, I, 0.3, b).values).max() * b for b in (5, 10, 20, 40)]
    assert np.allclose(sups, 3 * math.log(1.0))
    sups = [np.abs(solve_ma_exponential(I * 1.7, I, 0.3, b).values).max() * b for b in (5, 10, 20, 40)]
    assert np.allclose(sups, 3 * math.log(2.0))


def test_ma_exponential_beta_doubling_contracts():
    g = TorusGrid.reduced(3, 16)
    I = HermitianField.identity(g)
    x = g.coords()[0]
    chit = I * 0.05 + complex_hessian(PotentialField(g, 0.3 * np.cos(x)))
    us = [solve_ma_exponential(chit, I, 0.2, b) for b in (10, 20, 40, 80, 160)]
    d = [np.abs(b.values - a.values).max() for a, b in zip(us, us[1:])]
    assert all(y < x for x, y in zip(d, d[1:]))
    # the equation holds at the largest beta
    X = chit + I * 0.2 + complex_hessian(us[-1])
    det = np.linalg.det(X.entries).real
    assert np.abs(np.log(det) - 160 * us[-1].values).max() <= 1e-9


def test_ma_exponential_positivity():
    g = TorusGrid.reduced(3, 8)
    I = HermitianField.identity(g)
    with pytest.raises(PositivityExit):
        solve_ma_exponential(I * -1.0, I, 0.5, 10.0)
    with pytest.raises(ValueError):
        solve_ma_exponential(I, I, 0.5, 0.0)


# --- intermediate equation -----------------------------------------------------------

def test_s1_cubic_root(flat3):
    g, B = flat3
    s1 = find_s1(1.0, B.chi, B.chi_tilde, B.omega, HALF_PI)
    assert s1 == pytest.approx(2 * math.cos(2 * math.pi / 9) - 1, abs=1e-12)  # 0.532089
    s1_small = find_s1(1e-9, B.chi, B.chi_tilde, B.omega, HALF_PI)
    assert s1_small == pytest.approx(math.sqrt(3) - 1, abs=1e-8)  # 0.732051


def test_s1_bracket_failure(flat3):
    g, B = flat3
    with pytest.raises(BracketFailure):
        find_s1(10.0, B.chi, B.chi_tilde, B.omega, HALF_PI)
    with pytest.raises(ValueError):
        find_s1(-1.0, B.chi, B.chi_tilde, B.omega, HALF_PI)


def test_T1_and_identities(flat3):
    g, B = flat3
    sc = stability_constants(B, 1.0, HALF_PI, 0.5)
    # P(mu) = mu^3 - 3 mu vanishes at mu = sqrt(3) = 1 + s1 + T1
    assert sc.T1 == pytest.approx(math.sqrt(3) - 1 - sc.s1, abs=1e-12)
    assert 0.5 < sc.s1 < 1 and sc.T1 > 0
    vol = omega_volume(B.omega)
    lhs = integrate(phase_defect(B.chi + B.chi_tilde * sc.s1, B.omega, HALF_PI), g, B.omega)
    assert abs(lhs + sc.sigma1 * vol) / vol <= 1e-10
    mu = 1 + sc.s1 * 1.5
    assert sc.b_t == pytest.approx(mu ** 3 - 3 * mu + 1.0, abs=1e-12)


def test_T1_needs_sign_change(flat3):
    g, B = flat3
    with pytest.raises(BracketFailure):
        find_T1(0.9, B.chi * 2, B.chi_tilde, B.omega, HALF_PI)


def test_solve_intermediate_constant(flat3):
    g, B = flat3
    s1 = find_s1(0.5, B.chi, B.chi_tilde, B.omega, HALF_PI)
    v, b_t = solve_intermediate(B, s1, 0.5, 0.5, HALF_PI)
    assert np.abs(v.values).max() <= 1e-12
    assert b_t == pytest.approx(intermediate_bt(B, s1, 0.5, 0.5, HALF_PI))


def test_solve_intermediate_varying():
    g = TorusGrid.reduced(3, 16)
    I = HermitianField.identity(g)
    x = g.coords()[0]
    B = Backgrounds(I, I + complex_hessian(PotentialField(g, 0.2 * np.cos(x))), I)
    s1 = find_s1(0.5, B.chi, B.chi_tilde, B.omega, HALF_PI)
    v, b_t = solve_intermediate(B, s1, 0.5, 0.3, HALF_PI)
    assert v.values.max() == 0.0
    # the constant shift b_t - sigma1 is balanced by the average defect
    X = B.chi + (B.chi_tilde + I * 0.3) * s1 + complex_hessian(v)
    re_im = phase_defect(X, I, HALF_PI)
    assert np.abs(re_im - (b_t - 0.5)).max() <= 1e-9
