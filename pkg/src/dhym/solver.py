"""Damped, cone-preserving Newton-Krylov solvers on the torus.

The approximation equation is solved in operator form

    g(lambda(X0 + i dd-bar phi), b) = cot(theta0),   g = (Re - b) / Im,

with X0 = chi + chi_tilde + t omega and b = c_t f. The Jacobian of a
symmetric spectral function is V diag(dg/dlambda) V^H, which gives the
elliptic operator sum K_{ab} (i dd-bar psi)_{ab} applied matrix-free. Each
Krylov solve is preconditioned with the inverse of the grid-averaged
constant-coefficient operator, applied in Fourier space.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import bisect
from scipy.sparse.linalg import LinearOperator, gmres

from .errors import (
    BracketFailure,
    ConeExit,
    DHYMError,
    LinearSolveFailure,
    NoConvergence,
    PositivityExit,
)
from .phase_algebra import PhaseWindow, operator_gradient
from .torus import (
    HermitianField,
    PotentialField,
    TorusGrid,
    check_density_normalization,
    cohomological_ct,
    complex_hessian,
    integrate,
    omega_volume,
    phase_defect,
    relative_spectrum,
    sup_normalize,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SolveConfig:
    residual_tol: float = 1e-10
    max_newton: int = 50
    cone_safety: float = 1e-3
    linear_tol: float = 1e-8
    damping: float = 0.5
    max_halvings: int = 40
    krylov_restart: int = 60
    krylov_maxiter: int = 20

    def __post_init__(self):
        for name in ("residual_tol", "max_newton", "cone_safety", "linear_tol",
                     "damping", "max_halvings"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.damping >= 1:
            raise ValueError("damping factor must be below 1")


@dataclass
class Backgrounds:
    """Reference form omega and the closed forms chi, chi_tilde on one grid."""

    omega: HermitianField
    chi: HermitianField
    chi_tilde: HermitianField

    @property
    def grid(self) -> TorusGrid:
        return self.omega.grid

    def form(self, t: float) -> HermitianField:
        return self.chi + self.chi_tilde + self.omega * t

    @classmethod
    def constant(cls, grid, chi=1.0, chi_tilde=1.0, omega=1.0):
        return cls(HermitianField.constant(grid, omega),
                   HermitianField.constant(grid, chi),
                   HermitianField.constant(grid, chi_tilde))


@dataclass
class NewtonReport:
    iterations: int = 0
    residual_history: list = field(default_factory=list)
    step_lengths: list = field(default_factory=list)
    krylov_iterations: list = field(default_factory=list)


@dataclass
class PathState:
    t: float
    phi: PotentialField
    c_t: float
    cone_margin_min: float
    residual_sup: float
    newton_iters: int
    report: NewtonReport | None = None


@dataclass(frozen=True)
class StabilityConstants:
    sigma1: float
    s1: float
    T1: float
    b_t: float


def window_margin_field(lam: np.ndarray, window: PhaseWindow):
    """Pointwise min(subsolution margin, Theta0 - phase) plus the two parts."""
    a = 0.5 * np.pi - np.arctan(lam)
    theta = a.sum(axis=-1)
    # the worst (n-1)-fold sum omits the smallest arccot
    sub = window.theta0 - (theta - a.min(axis=-1))
    upper = window.Theta0 - theta
    return np.minimum(sub, upper), sub, upper


def _window(theta0_or_window) -> PhaseWindow:
    if isinstance(theta0_or_window, PhaseWindow):
        return theta0_or_window
    return PhaseWindow.with_default_upper(float(theta0_or_window))


def _K_matrix(W: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """K_ab = sum_i weights_i conj(W_ai) W_bi, so that d(scalar) = Re sum K_ab dX_ab."""
    return np.einsum("...ai,...i,...bi->...ab", np.conj(W), weights, W)


def _contract(K: np.ndarray, H: np.ndarray) -> np.ndarray:
    return np.einsum("...ab,...ab->...", K, H).real


def _symbol(grid: TorusGrid, Kbar: np.ndarray) -> np.ndarray:
    """Fourier symbol of psi -> Re sum Kbar_ab (i dd-bar psi)_ab."""
    mult = grid.derivative_multipliers()
    active = grid.active_axes

    def m(p, q):
        if not (active[p] and active[q]):
            return 0.0
        if p == q:
            return -mult[p][0] ** 2
        return -(mult[p][1] * mult[q][1])

    n = grid.complex_dim
    s = np.zeros(grid.shape)
    for a in range(n):
        for b in range(n):
            xa, ya, xb, yb = 2 * a, 2 * a + 1, 2 * b, 2 * b + 1
            h = 0.25 * ((m(xa, xb) + m(ya, yb)) + 1j * (m(xa, yb) - m(ya, xb)))
            s = s + (Kbar[a, b] * h).real
    return s


class _SpectralInverse:
    def __init__(self, grid: TorusGrid, symbol: np.ndarray):
        self.grid = grid
        self.axes = [p for p, a in enumerate(grid.active_axes) if a]
        inv = np.zeros_like(symbol)
        ok = np.abs(symbol) > 1e-14 * max(1.0, np.abs(symbol).max())
        inv[ok] = 1.0 / symbol[ok]
        self.inv = inv

    def __call__(self, r: np.ndarray) -> np.ndarray:
        if not self.axes:
            return r * self.inv
        return np.fft.ifftn(np.fft.fftn(r, axes=self.axes) * self.inv, axes=self.axes).real


class PhaseEquation:
    """Pointwise operator g(lambda, b) - cot(theta0) on a fixed background."""

    def __init__(self, X0: HermitianField, omega: HermitianField, shift,
                 window: PhaseWindow):
        self.X0 = X0
        self.omega = omega
        self.grid = X0.grid
        self.shift = np.broadcast_to(np.asarray(shift, dtype=float), self.grid.shape)
        self.window = window
        self.cot = 1.0 / math.tan(window.theta0)

    def spectrum(self, phi: np.ndarray, vectors=False):
        X = self.X0 + complex_hessian(PotentialField(self.grid, phi))
        return relative_spectrum(X, self.omega, vectors=vectors)

    def evaluate(self, phi: np.ndarray, vectors=False):
        """Residual field and window margin; raises ConeExit outside the open window."""
        out = self.spectrum(phi, vectors)
        lam = out[0] if vectors else out
        margin, _, _ = window_margin_field(lam, self.window)
        worst = int(np.argmin(margin))
        if margin.ravel()[worst] <= 0:
            raise ConeExit("spectrum left the open phase window",
                           point=worst, margin=float(margin.ravel()[worst]))
        a = lam + 1j
        z = np.prod(a, axis=-1)
        F = (z.real - self.shift) / z.imag - self.cot
        return F, margin, out

    def jacobian(self, lam, W):
        g = operator_gradient(lam, self.shift)
        K = _K_matrix(W, g)
        grid = self.grid

        def apply(psi):
            return _contract(K, complex_hessian(PotentialField(grid, psi)).entries)

        Kbar = K.reshape((-1,) + K.shape[-2:]).mean(axis=0)
        return apply, _SpectralInverse(grid, _symbol(grid, Kbar))


def _bordered_solve(apply, precond, rhs, config: SolveConfig):
    """Solve L psi + kappa = rhs with mean(psi) = 0 by preconditioned GMRES."""
    shape = rhs.shape
    N = rhs.size

    def mv(x):
        psi = x[:N].reshape(shape)
        out = np.empty(N + 1)
        out[:N] = (apply(psi) + x[N]).ravel()
        out[N] = psi.mean()
        return out

    def pc(x):
        r = x[:N].reshape(shape)
        rbar = r.mean()
        out = np.empty(N + 1)
        out[:N] = (precond(r - rbar) + x[N]).ravel()
        out[N] = rbar
        return out

    A = LinearOperator((N + 1, N + 1), matvec=mv, dtype=float)
    M = LinearOperator((N + 1, N + 1), matvec=pc, dtype=float)
    b = np.zeros(N + 1)
    b[:N] = rhs.ravel()
    return _gmres(A, M, b, config, N)


def _gmres(A, M, b, config, N):
    count = [0]

    def cb(_):
        count[0] += 1

    x, info = gmres(A, b, rtol=config.linear_tol, atol=0.0, M=M,
                    restart=min(config.krylov_restart, b.size),
                    maxiter=config.krylov_maxiter, callback=cb,
                    callback_type="pr_norm")
    if info < 0:
        raise LinearSolveFailure("GMRES breakdown")
    rel = np.linalg.norm(A.matvec(x) - b) / max(np.linalg.norm(b), 1e-300)
    if info > 0 and rel > 1e-2:
        raise LinearSolveFailure(f"GMRES stalled at relative residual {rel:.2e}")
    return x[:N], count[0]


def _newton(eq: PhaseEquation, phi0: np.ndarray, config: SolveConfig):
    phi = phi0 - phi0.mean()
    report = NewtonReport()
    F, margin, (lam, W) = eq.evaluate(phi, vectors=True)
    if margin.min() < config.cone_safety:
        raise ConeExit("initial guess violates the cone safety margin",
                       point=int(np.argmin(margin)), margin=float(margin.min()))
    for it in range(1, config.max_newton + 1):
        r = float(np.abs(F).max())
        report.residual_history.append(r)
        if r <= config.residual_tol:
            report.iterations = it
            return phi, F, margin, report
        apply, precond = eq.jacobian(lam, W)
        psi, kits = _bordered_solve(apply, precond, -F, config)
        report.krylov_iterations.append(kits)
        psi = psi.reshape(phi.shape)
        psi -= psi.mean()
        alpha = 1.0
        cone_blocked = False
        for _ in range(config.max_halvings + 1):
            trial = phi + alpha * psi
            try:
                Ft, mt, out = eq.evaluate(trial, vectors=True)
            except ConeExit:
                cone_blocked = True
                alpha *= config.damping
                continue
            if mt.min() < config.cone_safety:
                cone_blocked = True
            elif float(np.abs(Ft).max()) < r:
                break
            alpha *= config.damping
        else:
            if cone_blocked:
                raise ConeExit("no admissible step length keeps the cone margin",
                               margin=float(margin.min()))
            raise NoConvergence(f"line search stalled at residual {r:.3e}")
        report.step_lengths.append(alpha)
        phi, F, margin, (lam, W) = trial, Ft, mt, out
        logger.debug("newton %d: residual %.3e step %.3g", it, r, alpha)
    raise NoConvergence(f"no convergence in {config.max_newton} Newton steps "
                        f"(residual {float(np.abs(F).max()):.3e})")


def _check_density(f: PotentialField, flag_zeros=True):
    if np.any(f.values < 0):
        raise ValueError("density must be non-negative")
    if flag_zeros and np.any(f.values == 0):
        logger.warning("density vanishes at some grid points")


def residual_field(phi: PotentialField, t: float, f: PotentialField, theta0,
                   backgrounds: Backgrounds) -> np.ndarray:
    """Pointwise g(lambda, c_t f) - cot(theta0); raises ConeExit off the window."""
    window = _window(theta0)
    c_t = ct_for(backgrounds, t, window.theta0, f)
    eq = PhaseEquation(backgrounds.form(t), backgrounds.omega, c_t * f.values, window)
    F, _, _ = eq.evaluate(phi.values)
    return F


def linearized_residual(phi: PotentialField, psi: PotentialField, t: float,
                        f: PotentialField, theta0, backgrounds: Backgrounds) -> np.ndarray:
    """Action of the Newton linearization of :func:`residual_field` on psi."""
    window = _window(theta0)
    c_t = ct_for(backgrounds, t, window.theta0, f)
    eq = PhaseEquation(backgrounds.form(t), backgrounds.omega, c_t * f.values, window)
    lam, W = eq.spectrum(phi.values, vectors=True)
    apply, _ = eq.jacobian(lam, W)
    return apply(psi.values)


def ct_for(backgrounds: Backgrounds, t: float, theta0: float, f=None) -> float:
    return cohomological_ct(backgrounds.chi, backgrounds.chi_tilde, backgrounds.omega,
                            t, theta0, f)


def newton_solve(phi0: PotentialField | None, t: float, f: PotentialField, theta0,
                 backgrounds: Backgrounds, config: SolveConfig = SolveConfig()) -> PathState:
    """Solve the approximation equation at fixed t from the guess phi0."""
    window = _window(theta0)
    if config.cone_safety >= window.theta0:
        raise ValueError("cone safety must be below theta0")
    grid = backgrounds.grid
    check_density_normalization(f, backgrounds.omega)
    _check_density(f)
    c_t = ct_for(backgrounds, t, window.theta0)
    eq = PhaseEquation(backgrounds.form(t), backgrounds.omega, c_t * f.values, window)
    start = np.zeros(grid.shape) if phi0 is None else phi0.values
    phi, F, margin, report = _newton(eq, start, config)
    return PathState(
        t=t,
        phi=sup_normalize(PotentialField(grid, phi)),
        c_t=c_t,
        cone_margin_min=float(margin.min()),
        residual_sup=float(np.abs(F).max()),
        newton_iters=report.iterations,
        report=report,
    )


def background_margin(backgrounds: Backgrounds, t: float, window: PhaseWindow) -> float:
    lam = relative_spectrum(backgrounds.form(t), backgrounds.omega)
    return float(window_margin_field(lam, window)[0].min())


def continuity_path(backgrounds: Backgrounds, schedule, f: PotentialField, theta0,
                    config: SolveConfig = SolveConfig(), max_bisections: int = 8):
    """Warm-started solves along a strictly decreasing list of t values.

    The first t is doubled until the phi = 0 background clears twice the
    cone safety margin; that solve only seeds the path. A failed step is
    retried through intermediate t values, halving the decrement up to
    ``max_bisections`` times.
    """
    window = _window(theta0)
    ts = [float(t) for t in schedule]
    if not ts or any(t <= 0 for t in ts):
        raise ValueError("schedule must be a non-empty list of positive t")
    if any(b >= a for a, b in zip(ts, ts[1:])):
        raise ValueError("schedule must be strictly decreasing")

    t_start = ts[0]
    for _ in range(60):
        if background_margin(backgrounds, t_start, window) >= 2 * config.cone_safety:
            break
        t_start *= 2.0
    else:
        raise ConeExit("background never enters the phase window")

    phi = None
    t_prev = t_start
    if t_start != ts[0]:
        logger.info("raised first t from %g to %g", ts[0], t_start)
        phi = newton_solve(None, t_start, f, window, backgrounds, config).phi

    states = []
    for t in ts:
        current = t_prev
        target = t
        bisections = 0
        while True:
            try:
                st = newton_solve(phi, target, f, window, backgrounds, config)
            except DHYMError as exc:
                if bisections >= max_bisections:
                    raise
                bisections += 1
                target = 0.5 * (current + target)
                logger.info("step to t=%g failed (%s); trying t=%g", t, exc, target)
                continue
            phi = st.phi
            current = target
            if target == t:
                break
            target = t
        states.append(st)
        t_prev = t
    return states


def ct_monotone(states) -> bool:
    """c_t must not increase as t decreases along the path."""
    c = [s.c_t for s in states]
    return all(b <= a for a, b in zip(c, c[1:]))


def trace_positivity(state: PathState, backgrounds: Backgrounds) -> float:
    """Minimum over the grid of tr_omega(chi + chi_tilde + t omega + i dd-bar phi_t)."""
    X = backgrounds.form(state.t) + complex_hessian(state.phi)
    lam = relative_spectrum(X, backgrounds.omega)
    return float(lam.sum(axis=-1).min())


# --- exponential Monge-Ampere family -------------------------------------------

def solve_ma_exponential(chi_tilde: HermitianField, omega: HermitianField, t: float,
                         beta: float, config: SolveConfig = SolveConfig(),
                         u0: PotentialField | None = None) -> PotentialField:
    """Solve (chi_tilde + t omega + i dd-bar u)^n = exp(beta u) omega^n.

    Newton on log det(X_u)/det(omega) - beta u, with backtracking that keeps
    X_u positive definite. No normalisation: the exponential fixes the
    additive constant.
    """
    if beta <= 0:
        raise ValueError("beta must be positive")
    grid = omega.grid
    X0 = chi_tilde + omega * t
    lam0 = relative_spectrum(X0, omega)
    if lam0.min() <= 0:
        raise PositivityExit("chi_tilde + t omega is not positive definite")

    def evaluate(u):
        X = X0 + complex_hessian(PotentialField(grid, u))
        lam, W = relative_spectrum(X, omega, vectors=True)
        if lam.min() <= 0:
            raise PositivityExit("iterate lost positivity")
        return np.log(lam).sum(axis=-1) - beta * u, lam, W

    u = np.zeros(grid.shape) if u0 is None else u0.values.copy()
    R, lam, W = evaluate(u)
    N = u.size
    for _ in range(config.max_newton):
        r = float(np.abs(R).max())
        if r <= config.residual_tol:
            return PotentialField(grid, u)
        K = _K_matrix(W, 1.0 / lam)
        Kbar = K.reshape((-1, grid.complex_dim, grid.complex_dim)).mean(axis=0)
        inv = _SpectralInverse(grid, _symbol(grid, Kbar) - beta)

        def mv(x, K=K):
            psi = x.reshape(grid.shape)
            return (_contract(K, complex_hessian(PotentialField(grid, psi)).entries)
                    - beta * psi).ravel()

        A = LinearOperator((N, N), matvec=mv, dtype=float)
        M = LinearOperator((N, N), matvec=lambda x: inv(x.reshape(grid.shape)).ravel(),
                           dtype=float)
        psi, _ = _gmres(A, M, -R.ravel(), config, N)
        psi = psi.reshape(grid.shape)
        alpha = 1.0
        for _ in range(config.max_halvings + 1):
            try:
                Rt, lt, Wt = evaluate(u + alpha * psi)
            except PositivityExit:
                alpha *= config.damping
                continue
            if float(np.abs(Rt).max()) < r:
                break
            alpha *= config.damping
        else:
            raise PositivityExit("no step length keeps positivity and decreases the residual")
        u, R, lam, W = u + alpha * psi, Rt, lt, Wt
    if float(np.abs(R).max()) <= config.residual_tol:
        return PotentialField(grid, u)
    raise NoConvergence("exponential Monge-Ampere solve did not converge")


# --- intermediate equation constants ---------------------------------------------

def _mean_defect(X: HermitianField, omega: HermitianField, theta0: float) -> float:
    return integrate(phase_defect(X, omega, theta0), omega.grid, omega) / omega_volume(omega)


def find_s1(sigma1: float, chi: HermitianField, chi_tilde: HermitianField,
            omega: HermitianField, theta0: float, xtol: float = 1e-15) -> float:
    """Root s1 in (1/2, 1) of mean defect(chi + s chi_tilde) = -sigma1."""
    if sigma1 <= 0:
        raise ValueError("sigma1 must be positive")

    def h(s):
        return _mean_defect(chi + chi_tilde * s, omega, theta0) + sigma1

    lo, hi = h(0.5), h(1.0)
    if not (lo < 0 < hi):
        raise BracketFailure(f"no sign change on (1/2, 1): h(1/2)={lo:.3g}, h(1)={hi:.3g}")
    return bisect(h, 0.5, 1.0, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=200)


def find_T1(s1: float, chi: HermitianField, chi_tilde: HermitianField,
            omega: HermitianField, theta0: float, xtol: float = 1e-15) -> float:
    """Root T1 > 0 of mean defect(chi + s1 chi_tilde + T omega) = 0."""

    def h(T):
        return _mean_defect(chi + chi_tilde * s1 + omega * T, omega, theta0)

    if h(0.0) >= 0:
        raise BracketFailure("defect already non-negative at T = 0")
    hi = 1.0
    for _ in range(60):
        if h(hi) > 0:
            break
        hi *= 2.0
    else:
        raise BracketFailure("no sign change found for T1")
    return bisect(h, 0.0, hi, xtol=xtol, rtol=4 * np.finfo(float).eps, maxiter=200)


def intermediate_bt(backgrounds: Backgrounds, s1: float, sigma1: float, t: float,
                    theta0: float) -> float:
    X0 = backgrounds.chi + (backgrounds.chi_tilde + backgrounds.omega * t) * s1
    return _mean_defect(X0, backgrounds.omega, theta0) + sigma1


def solve_intermediate(backgrounds: Backgrounds, s1: float, sigma1: float, t: float,
                       theta0, config: SolveConfig = SolveConfig(),
                       v0: PotentialField | None = None):
    """Solve the intermediate equation; returns (v_t sup-normalised, b_t).

    The operator shift is b_t - sigma1, which is negative for small t.
    """
    window = _window(theta0)
    b_t = intermediate_bt(backgrounds, s1, sigma1, t, window.theta0)
    X0 = backgrounds.chi + (backgrounds.chi_tilde + backgrounds.omega * t) * s1
    eq = PhaseEquation(X0, backgrounds.omega, b_t - sigma1, window)
    start = np.zeros(backgrounds.grid.shape) if v0 is None else v0.values
    v, _, _, _ = _newton(eq, start, config)
    return sup_normalize(PotentialField(backgrounds.grid, v)), b_t


def stability_constants(backgrounds: Backgrounds, sigma1: float, theta0: float,
                        t: float) -> StabilityConstants:
    w = _window(theta0)
    s1 = find_s1(sigma1, backgrounds.chi, backgrounds.chi_tilde, backgrounds.omega, w.theta0)
    T1 = find_T1(s1, backgrounds.chi, backgrounds.chi_tilde, backgrounds.omega, w.theta0)
    return StabilityConstants(sigma1, s1, T1,
                              intermediate_bt(backgrounds, s1, sigma1, t, w.theta0))


def manufactured_density(phi_star: PotentialField, t: float, theta0: float,
                         backgrounds: Backgrounds) -> PotentialField:
    """Density f for which phi_star solves the approximation equation exactly."""
    c_t = ct_for(backgrounds, t, theta0)
    X = backgrounds.form(t) + complex_hessian(phi_star)
    f = phase_defect(X, backgrounds.omega, theta0) / c_t
    if np.any(f <= 0):
        raise ValueError("manufactured density is not strictly positive")
    return PotentialField(backgrounds.grid, f)


__all__ = [
    "Backgrounds", "NewtonReport", "PathState", "SolveConfig", "StabilityConstants",
    "PhaseEquation", "background_margin", "continuity_path", "ct_for", "ct_monotone",
    "find_T1", "find_s1", "intermediate_bt", "linearized_residual",
    "manufactured_density", "newton_solve", "residual_field", "solve_intermediate",
    "solve_ma_exponential", "stability_constants", "trace_positivity",
    "window_margin_field",
]
