"""Computable versions of the a priori estimate machinery.

Envelopes come from the exponential Monge-Ampere family, level-set masses
use exact positive parts, and the stability bound is evaluated with an
empirically calibrated constant.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import HypothesisFail
from .phase_algebra import gamma_k_membership
from .solver import Backgrounds, SolveConfig, _window, newton_solve, solve_ma_exponential
from .torus import (
    HermitianField,
    PotentialField,
    complex_hessian,
    fsum_array,
    gradient_norm_sq,
    integrate,
    normalize_density,
    omega_volume,
    relative_spectrum,
    sup_normalize,
    volume_density,
)

REGIME_EXPONENTS = {
    "general": None,  # 1/(n+2), needs n >= 4
    "hypercritical3": 1.0 / 6.0,
    "supercritical3": 1.0 / 5.0,
}


# --- envelopes ---------------------------------------------------------------

@dataclass
class EnvelopeRun:
    t: float
    betas: list
    u_betas: list
    cauchy_norms: list

    @property
    def U(self) -> PotentialField:
        """Envelope estimate: the solution at the largest beta."""
        return self.u_betas[-1]

    def cauchy_decreasing(self) -> bool:
        c = self.cauchy_norms
        return all(b < a for a, b in zip(c, c[1:]))


def envelope_estimate(chi_tilde: HermitianField, omega: HermitianField, t: float,
                      betas, config: SolveConfig = SolveConfig()) -> EnvelopeRun:
    """Run the exponential Monge-Ampere family along increasing betas, warm-started."""
    betas = [float(b) for b in betas]
    if not betas or any(b2 <= b1 for b1, b2 in zip(betas, betas[1:])):
        raise ValueError("betas must be strictly increasing")
    us = []
    u = None
    for beta in betas:
        u = solve_ma_exponential(chi_tilde, omega, t, beta, config, u0=u)
        us.append(u)
    norms = [float(np.abs(b.values - a.values).max()) for a, b in zip(us, us[1:])]
    return EnvelopeRun(t, betas, us, norms)


def envelope_ordering(lower: EnvelopeRun, upper: EnvelopeRun, tol: float = 1e-8) -> float:
    """Worst violation of U_{t1} <= U_{t2} + tol for t1 < t2 (<= 0 means it holds)."""
    if not lower.t < upper.t:
        raise ValueError("first envelope must have the smaller t")
    return float((lower.U.values - upper.U.values - tol).max())


# --- level sets and De Giorgi ------------------------------------------------------

@dataclass
class LevelData:
    s: float
    mass: float
    excess: float


def level_density(f: PotentialField, c_t: float, eps: float = 1e-3,
                  offset: float = 0.0) -> PotentialField:
    """g = offset + c_t (f + eps); ``offset`` stands in for the background constant."""
    g = f * c_t + (offset + c_t * eps)
    if np.any(g.values <= 0):
        raise ValueError("level density must be positive")
    return g


def level_mass(phi: PotentialField, U: PotentialField, g: PotentialField, s: float,
               V_t: float, omega: HermitianField | None = None) -> LevelData:
    """Mass of {-phi + U - s > 0} against g omega^n and the excess A_s."""
    h = U.values - phi.values - s
    w = g.values if omega is None else g.values * volume_density(omega)
    cell = phi.grid.cell_volume
    inside = h > 0
    mass = fsum_array(np.where(inside, w, 0.0)) * cell
    excess = fsum_array(np.where(inside, h * w, 0.0)) * cell / V_t
    return LevelData(float(s), mass, excess)


def level_profile(phi, U, g, s_values, V_t, omega=None) -> list:
    return [level_mass(phi, U, g, s, V_t, omega) for s in s_values]


def de_giorgi_threshold(C: float, delta: float, phi_s0: float) -> float:
    """Distance d beyond s0 after which the decay function must vanish."""
    if C <= 0 or delta <= 0 or phi_s0 < 0:
        raise ValueError("need C > 0, delta > 0, phi(s0) >= 0")
    return C * phi_s0 ** delta * 2.0 ** ((1.0 + delta) / delta)


def de_giorgi_fit(s, phi, delta: float) -> float:
    """Smallest C with s' phi(s + s') <= C phi(s)^(1+delta) over all sample pairs."""
    s = np.asarray(s, dtype=float)
    phi = np.asarray(phi, dtype=float)
    C = 0.0
    for i in range(len(s)):
        if phi[i] <= 0:
            continue
        gap = s[i + 1:] - s[i]
        C = max(C, float((gap * phi[i + 1:]).max(initial=0.0)) / phi[i] ** (1.0 + delta))
    return C if C > 0 else np.finfo(float).tiny


@dataclass
class DeGiorgiResult:
    passed: bool
    C: float
    delta: float
    s0: float
    threshold: float
    vanish_from: float
    checked_beyond: int


def de_giorgi_verify(s, phi, C: float, delta: float, s0: float | None = None,
                     rtol: float = 1e-12) -> DeGiorgiResult:
    """Check the decay hypothesis on every sample pair, then the vanishing claim.

    Raises HypothesisFail naming the first violating pair (s, s + s').
    """
    s = np.asarray(s, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if s.ndim != 1 or s.shape != phi.shape or np.any(np.diff(s) <= 0):
        raise ValueError("samples must be a strictly increasing grid of s")
    if np.any(phi < 0) or np.any(np.diff(phi) > 0):
        raise ValueError("phi must be non-negative and non-increasing")
    for i in range(len(s)):
        rhs = C * phi[i] ** (1.0 + delta)
        lhs = (s[i + 1:] - s[i]) * phi[i + 1:]
        bad = np.nonzero(lhs > rhs * (1 + rtol) + 1e-300)[0]
        if bad.size:
            j = i + 1 + int(bad[0])
            raise HypothesisFail(
                f"decay hypothesis fails: {lhs[bad[0]]:.6g} > {rhs:.6g}",
                pair=(float(s[i]), float(s[j])))
    s0 = float(s[0]) if s0 is None else float(s0)
    phi_s0 = float(np.interp(s0, s, phi))
    d = de_giorgi_threshold(C, delta, phi_s0) if phi_s0 > 0 else 0.0
    beyond = s >= s0 + d
    ok = bool(np.all(phi[beyond] == 0))
    return DeGiorgiResult(ok, C, delta, s0, d, s0 + d, int(beyond.sum()))


# --- L-infinity and gradient audits -----------------------------------------------

@dataclass
class LinftyReport:
    ts: list
    K: list
    K_max: float
    decade_variation: float
    passed: bool


def linfty_audit(path, envelopes, rel_variation: float = 0.1) -> LinftyReport:
    """K(t) = sup(-phi_t + U_t) along a path, with its spread over the last t-decade."""
    if len(envelopes) != len(path):
        raise ValueError("need exactly one envelope per path state")
    ts, K = [], []
    for st, U in zip(path, envelopes):
        Uv = U.U if isinstance(U, EnvelopeRun) else U
        if Uv is None:
            raise ValueError(f"missing envelope at t={st.t}")
        ts.append(st.t)
        K.append(float((Uv.values - st.phi.values).max()))
    K_arr = np.asarray(K)
    t_arr = np.asarray(ts)
    K_max = float(np.abs(K_arr).max())
    last = t_arr <= 10.0 * t_arr.min()
    spread = float(K_arr[last].max() - K_arr[last].min())
    finite = bool(np.all(np.isfinite(K_arr)))
    ok = finite and (K_max == 0 or spread <= rel_variation * K_max)
    return LinftyReport(ts, K, K_max, spread, ok)


@dataclass
class GradientReport:
    lhs: float
    rhs: float
    L: float

    @property
    def passed(self) -> bool:
        return self.lhs <= self.rhs


def gradient_diagnostic(phi: PotentialField, sigma: float, omega: HermitianField,
                        step: float = 1e-3) -> GradientReport:
    """Weighted Dirichlet energy against the bound nL/(sigma(1-sigma)) vol."""
    if not 0 < sigma < 1:
        raise ValueError("sigma must lie in (0, 1)")
    n = phi.grid.complex_dim
    trace = relative_spectrum(complex_hessian(phi), omega).sum(axis=-1)

    def ok(m):
        return bool(np.all(n * m * step + trace > 0))

    hi = 1
    while not ok(hi):
        hi *= 2
    lo = 0
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid
    L = hi * step
    hat = sup_normalize(phi)
    weight = (1.0 - hat.values) ** (sigma - 2.0)
    lhs = integrate(gradient_norm_sq(phi, omega) * weight, phi.grid, omega)
    rhs = n * L / (sigma * (1 - sigma)) * omega_volume(omega)
    return GradientReport(lhs, rhs, L)


# --- stability ---------------------------------------------------------------------

def regime_exponent(regime: str, n: int) -> float:
    if regime == "general":
        if n < 4:
            raise ValueError("general regime needs n >= 4")
        return 1.0 / (n + 2)
    if regime in ("hypercritical3", "supercritical3"):
        if n != 3:
            raise ValueError(f"{regime} regime needs n = 3")
        return REGIME_EXPONENTS[regime]
    raise ValueError(f"unknown regime {regime!r}")


def check_regime(regime: str, backgrounds: Backgrounds, theta0) -> None:
    theta0 = _window(theta0).theta0
    n = backgrounds.grid.complex_dim
    regime_exponent(regime, n)
    if regime == "hypercritical3" and not theta0 <= math.pi / 2:
        raise ValueError("hypercritical regime needs theta0 <= pi/2")
    if regime == "supercritical3":
        if not math.pi / 2 < theta0 < math.pi:
            raise ValueError("supercritical regime needs theta0 in (pi/2, pi)")
        lam = relative_spectrum(backgrounds.chi, backgrounds.omega)
        _, margin = gamma_k_membership(lam, 2)
        if np.min(margin) < -1e-12:
            raise ValueError(f"chi fails the closed Gamma^2 audit (margin {np.min(margin):.3g})")


def lq_norm(v: np.ndarray, grid, omega: HermitianField, q: float) -> float:
    return integrate(np.abs(v) ** q, grid, omega) ** (1.0 / q)


def density_functionals(f: PotentialField, omega: HermitianField, q: float, p: float):
    """Both integrability functionals of f: the L^q norm and the integral of f ln^p(1+f)."""
    v = f.values
    return (lq_norm(v, f.grid, omega, q),
            integrate(v * np.log1p(v) ** p, f.grid, omega))


@dataclass
class StabilityPair:
    sup_diff: float
    plus_norm: float
    min_U: float


@dataclass
class StabilityReport:
    sup_diff: float
    plus_norm: float
    exponent: float
    bound_rhs: float
    ratio: float
    C: float
    passed: bool
    f2_lq: float = float("nan")
    f2_lnp: float = float("nan")


def stability_pair(backgrounds: Backgrounds, f1: PotentialField, f2: PotentialField,
                   t: float, theta0, q: float, U: PotentialField | None = None,
                   config: SolveConfig = SolveConfig()) -> StabilityPair:
    """Solve with both densities and measure sup(phi2 - phi1) and the plus-part norm."""
    if q <= 1:
        raise ValueError("q must exceed 1")
    qs = q / (q - 1.0)
    s1 = newton_solve(None, t, f1, theta0, backgrounds, config)
    s2 = newton_solve(s1.phi, t, f2, theta0, backgrounds, config)
    d = s2.phi.values - s1.phi.values
    plus = lq_norm(np.maximum(d, 0.0), backgrounds.grid, backgrounds.omega, qs)
    min_U = 0.0 if U is None else float(U.values.min())
    return StabilityPair(float(d.max()), plus, min_U)


def stability_constant(pair: StabilityPair, exponent: float) -> float:
    """Smallest C for which the pair satisfies the bound."""
    if pair.plus_norm == 0:
        return 0.0
    return pair.sup_diff / (2.0 * pair.plus_norm ** exponent) + pair.min_U


def calibrate_stability(pairs, exponent: float) -> float:
    """Largest C observed over a calibration set; frozen afterwards."""
    return max(stability_constant(p, exponent) for p in pairs)


def stability_report(pair: StabilityPair, exponent: float, C: float) -> StabilityReport:
    if pair.plus_norm == 0:
        return StabilityReport(pair.sup_diff, 0.0, exponent, 0.0, 0.0, C, True)
    rhs = 2.0 * (-pair.min_U + C) * pair.plus_norm ** exponent
    ratio = pair.sup_diff / rhs if rhs > 0 else math.inf
    return StabilityReport(pair.sup_diff, pair.plus_norm, exponent, rhs, ratio, C, ratio <= 1.0)


def stability_experiment(backgrounds: Backgrounds, f1: PotentialField, f2: PotentialField,
                         t: float, theta0, q: float, regime: str, C: float,
                         U: PotentialField | None = None, p: float | None = None,
                         config: SolveConfig = SolveConfig()) -> StabilityReport:
    check_regime(regime, backgrounds, theta0)
    e = regime_exponent(regime, backgrounds.grid.complex_dim)
    pair = stability_pair(backgrounds, f1, f2, t, theta0, q, U, config)
    rep = stability_report(pair, e, C)
    n = backgrounds.grid.complex_dim
    rep.f2_lq, rep.f2_lnp = density_functionals(f2, backgrounds.omega, q,
                                                n + 1.0 if p is None else p)
    return rep


def perturbed_density(f1: PotentialField, profile: np.ndarray, amplitude: float,
                      omega: HermitianField) -> PotentialField:
    """f1 (1 + amplitude * profile), renormalised to unit average."""
    return normalize_density(PotentialField(f1.grid, f1.values * (1 + amplitude * profile)), omega)


@dataclass
class SweepResult:
    amplitudes: list
    reports: list
    slope: float
    exponent: float

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.reports) and self.slope >= self.exponent - 0.05


def regression_slope(plus_norms, sup_diffs) -> float:
    """Least-squares slope of log sup_diff against log plus_norm."""
    x = np.log(np.asarray(plus_norms, dtype=float))
    y = np.log(np.asarray(sup_diffs, dtype=float))
    return float(np.polyfit(x, y, 1)[0])


def stability_sweep(backgrounds, f1, profile, amplitudes, t, theta0, q, regime, C,
                    U=None, config: SolveConfig = SolveConfig()) -> SweepResult:
    reports = []
    for a in amplitudes:
        f2 = perturbed_density(f1, profile, a, backgrounds.omega)
        reports.append(stability_experiment(backgrounds, f1, f2, t, theta0, q, regime, C,
                                            U, config=config))
    slope = regression_slope([r.plus_norm for r in reports], [r.sup_diff for r in reports])
    return SweepResult(list(amplitudes), reports, slope, reports[0].exponent)


# --- decreasing limit -----------------------------------------------------------------

@dataclass
class DecreasingLimitResult:
    C: float
    budget: float
    passed: bool
    reason: str = ""
    increments: list = field(default_factory=list)


def decreasing_limit_audit(path, budget: float, granularity: float = 0.01) -> DecreasingLimitResult:
    """Smallest C with phi_{i+1} + C/2^{i+1} <= phi_i + C/2^i along the path."""
    ts = [st.t for st in path]
    if any(b >= a for a, b in zip(ts, ts[1:])):
        return DecreasingLimitResult(math.inf, budget, False, "path is not ordered by decreasing t")
    need = 0.0
    incs = []
    for i, (a, b) in enumerate(zip(path, path[1:])):
        inc = float((b.phi.values - a.phi.values).max())
        incs.append(inc)
        need = max(need, inc * 2.0 ** (i + 1))
    C = math.ceil(need / granularity - 1e-9) * granularity if need > 0 else 0.0
    ok = C <= budget
    return DecreasingLimitResult(C, budget, ok, "" if ok else "required C exceeds budget", incs)


__all__ = [
    "DeGiorgiResult", "DecreasingLimitResult", "EnvelopeRun", "GradientReport", "LevelData",
    "LinftyReport", "StabilityPair", "StabilityReport", "SweepResult",
    "calibrate_stability", "check_regime", "de_giorgi_fit", "de_giorgi_threshold",
    "de_giorgi_verify", "decreasing_limit_audit", "density_functionals", "envelope_estimate",
    "envelope_ordering", "gradient_diagnostic", "level_density", "level_mass", "level_profile",
    "linfty_audit", "perturbed_density", "regime_exponent", "regression_slope",
    "stability_constant", "stability_experiment", "stability_pair", "stability_report",
    "stability_sweep",
]
