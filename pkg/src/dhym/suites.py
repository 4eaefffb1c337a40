"""Randomised verification suites over the pointwise algebra.

Each suite draws its samples from one seeded generator and returns a
:class:`SuiteResult`; a violation is a single failed check at one sample.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import HypothesisFail
from .phase_algebra import (
    PhaseWindow,
    dim2_forms,
    dim3_forms,
    elementary_symmetric_all,
    hessian_negativity_margin,
    operator_gradient,
    operator_hessian_fd,
    sigma_product,
    window_margins,
    low_phase_cone_check,
)

SUITES = ("algebra", "cones", "chen", "reformulations", "degiorgi")


@dataclass
class SuiteResult:
    suite: str
    samples: int
    violations: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)
    elapsed: float = 0.0

    @property
    def passed(self) -> bool:
        return not self.violations


def _flag(result, check, bad, detail):
    for i in np.nonzero(bad)[0][:1000]:
        result.violations.append({"suite": result.suite, "check": check,
                                  "index": int(i), "detail": detail(int(i))})


def sample_spectra(rng, m, n):
    """Descending spectra mixing arccot-uniform and Gaussian draws."""
    a = rng.uniform(1e-3, math.pi - 1e-3, (m, n))
    lam = 1.0 / np.tan(a)
    gauss = rng.normal(0.0, 3.0, (m, n))
    use = rng.random(m) < 0.5
    lam[use] = gauss[use]
    return -np.sort(-lam, axis=-1)


def sample_low_phase(rng, m, n):
    """Descending spectra with total phase at most pi."""
    w = rng.dirichlet(np.ones(n + 1), m)[:, :n]
    a = np.clip(math.pi * w, 1e-6, None)
    return -np.sort(-1.0 / np.tan(a), axis=-1)


def sample_window(rng, m, n, min_arccot=0.02, theta0_range=(0.3, math.pi - 0.3)):
    """Spectra inside Gamma_{theta0, Theta0} with Theta0 = (theta0 + pi)/2.

    Phases are split by a Dirichlet draw; each arccot is kept at least
    ``min_arccot`` so eigenvalues stay below cot(min_arccot).
    Returns (lam, theta0, Theta0).
    """
    out_l, out_t = [], []
    got = 0
    while got < m:
        k = 4 * (m - got) + 64
        th0 = rng.uniform(*theta0_range, k)
        Th0 = 0.5 * (th0 + math.pi)
        total = rng.uniform(min_arccot * n, 1.0, k) * Th0
        a = total[:, None] * rng.dirichlet(np.ones(n), k)
        ok = (a.min(-1) >= min_arccot) & (total - a.min(-1) < th0) & (total < Th0)
        out_l.append(-np.sort(-1.0 / np.tan(a[ok]), axis=-1))
        out_t.append(th0[ok])
        got += int(ok.sum())
    lam = np.concatenate(out_l)[:m]
    th0 = np.concatenate(out_t)[:m]
    return lam, th0, 0.5 * (th0 + math.pi)


def sample_gamma_k(rng, m, n, k):
    out = []
    got = 0
    while got < m:
        lam = rng.normal(0.5, 2.0, (4 * (m - got) + 64, n))
        e = elementary_symmetric_all(lam)[:, 1:k + 1]
        ok = np.all(e > 1e-6, axis=-1)
        out.append(lam[ok])
        got += int(ok.sum())
    return np.concatenate(out)[:m]


# --- suites ----------------------------------------------------------------------

def phase_identity_check(lam, tol=1e-12):
    """Boolean mask of spectra where re/im disagree with cos/sin(Theta) * P."""
    a = 0.5 * np.pi - np.arctan(lam)
    theta = a.sum(-1)
    P = np.prod(np.sqrt(1.0 + lam * lam), axis=-1)
    re, im = sigma_product(lam)
    bad_re = np.abs(re - np.cos(theta) * P) > tol * P
    bad_im = np.abs(im - np.sin(theta) * P) > tol * P
    return bad_re, bad_im


def run_algebra(samples, rng, dims=(2, 3, 4, 5)):
    res = SuiteResult("algebra", 0)
    for n in dims:
        lam = sample_spectra(rng, samples, n)
        bad_re, bad_im = phase_identity_check(lam)
        _flag(res, f"re-product n={n}", bad_re, lambda i, l=lam: str(l[i].tolist()))
        _flag(res, f"im-product n={n}", bad_im, lambda i, l=lam: str(l[i].tolist()))
        theta = (0.5 * np.pi - np.arctan(lam)).sum(-1)
        sel = (theta > 0.05) & (theta < np.pi - 0.05)
        re, im = sigma_product(lam[sel])
        rel = np.abs(re / im - 1.0 / np.tan(theta[sel])) / np.maximum(1.0, np.abs(re / im))
        _flag(res, f"cot-phase n={n}", rel > 1e-10, lambda i: "operator value differs from cot")
        res.samples += samples
    return res


def run_cones(samples, rng, dims=(3, 4), low_phase_dims=(2, 3, 4, 5)):
    res = SuiteResult("cones", 0)
    for n in low_phase_dims:
        # half generic draws (filtered by the audit itself), half drawn below phase pi
        lam = np.concatenate([sample_spectra(rng, samples - samples // 2, n),
                              sample_low_phase(rng, samples // 2, n)])
        app, g, p, b = low_phase_cone_check(lam)
        bad = app & ~(g & p & b)
        _flag(res, f"low-phase-cone n={n}", bad, lambda i, l=lam: str(l[i].tolist()))
        res.stats[f"low_phase_applicable_n{n}"] = int(app.sum())
        # the worst (n-1)-fold sum omits the largest eigenvalue (asserted inside)
        window_margins(lam, PhaseWindow(math.pi / 2, 3.0))
        res.samples += samples
    for n in dims:
        for k in (1, 2):
            la = sample_gamma_k(rng, samples, n, k)
            lb = sample_gamma_k(rng, samples, n, k)
            e_a = elementary_symmetric_all(la)
            e_b = elementary_symmetric_all(lb)
            e_m = elementary_symmetric_all(0.5 * (la + lb))
            probe = (e_m[:, k + 1] / e_m[:, k]
                     - 0.5 * (e_a[:, k + 1] / e_a[:, k] + e_b[:, k + 1] / e_b[:, k]))
            _flag(res, f"sk-ratio k={k} n={n}", probe < -1e-12, lambda i, p=probe: f"{p[i]:.3e}")
            res.stats[f"sk_ratio_min_k{k}_n{n}"] = float(probe.min())
            res.samples += samples
    return res


def gradient_fd_error(lam, b, h=1e-6):
    """Relative error of the analytic gradient against central differences."""
    g = operator_gradient(lam, b)
    n = lam.shape[-1]
    fd = np.empty_like(g)
    step = h * np.maximum(1.0, np.abs(lam))
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        lp = lam + step[..., i:i + 1] * e
        lm = lam - step[..., i:i + 1] * e
        rp, ip = sigma_product(lp)
        rm, im_ = sigma_product(lm)
        fd[..., i] = ((rp - b) / ip - (rm - b) / im_) / (2 * step[..., i])
    return np.abs(fd - g) / np.abs(g), g


def run_operator(samples, rng, dims=(3, 4), hessian_tol=1e-7):
    res = SuiteResult("chen", 0)
    for n in dims:
        lam, th0, Th0 = sample_window(rng, samples, n)
        b = rng.uniform(0.0, 1.0, samples)
        err, g = gradient_fd_error(lam, b)
        _flag(res, f"gradient-positive n={n}", np.any(g <= 0, axis=-1),
              lambda i, l=lam: str(l[i].tolist()))
        _flag(res, f"gradient-fd n={n}", np.any(err > 1e-5, axis=-1),
              lambda i, e=err: f"{e[i].max():.3e}")
        H = operator_hessian_fd(lam, b)
        hmax = np.linalg.eigvalsh(H)[:, -1]
        _flag(res, f"hessian n={n}", hmax > hessian_tol, lambda i, h=hmax: f"{h[i]:.3e}")
        _, im = sigma_product(lam)
        res.stats[f"im_floor_n{n}"] = float(np.min(im))
        res.stats[f"hessian_max_eig_n{n}"] = float(hmax.max())
        res.stats[f"grad_fd_max_rel_n{n}"] = float(err.max())
        if n >= 4:
            res.stats[f"eps2_empirical_n{n}"] = float(np.min(hessian_negativity_margin(lam, b)))
            bn = rng.uniform(-0.05, 0.0, samples)
            gn = operator_gradient(lam, bn)
            hn = np.linalg.eigvalsh(operator_hessian_fd(lam, bn))[:, -1]
            res.stats[f"eps1_negative_shift_grad_min_n{n}"] = float(gn.min())
            res.stats[f"eps1_negative_shift_hessian_max_n{n}"] = float(hn.max())
            res.stats[f"eps1_negative_shift_ok_fraction_n{n}"] = float(
                np.mean((gn.min(-1) > 0) & (hn <= hessian_tol)))
        res.samples += samples
    return res


def run_reformulations(samples, rng, tol=1e-10):
    res = SuiteResult("reformulations", 0)
    lam2 = -np.sort(-rng.uniform(-5, 5, (samples, 2)), axis=-1)
    th2 = rng.uniform(0.2, math.pi - 0.2, samples)
    ma, ph = dim2_forms(lam2, th2)
    d2 = np.abs(ma - ph)
    _flag(res, "dim2", d2 > tol, lambda i: f"{d2[i]:.3e}")
    lam3 = -np.sort(-rng.uniform(-5, 5, (samples, 3)), axis=-1)
    th3 = rng.uniform(0.2, math.pi - 0.2, samples)
    rhs = dim3_forms(lam3, th3)[0]
    ma3, ph3 = dim3_forms(lam3, th3, rhs)
    _flag(res, "dim3", np.abs(ph3) > tol, lambda i: f"{ph3[i]:.3e}")
    res.stats["dim2_max"] = float(d2.max())
    res.stats["dim3_max"] = float(np.abs(ph3).max())
    res.samples = 2 * samples
    return res


def run_degiorgi(samples, rng, grid_points=200):
    """Random decay profiles: fitted constants must give a correct vanishing point."""
    from .estimates import de_giorgi_fit, de_giorgi_threshold, de_giorgi_verify

    res = SuiteResult("degiorgi", 0)
    arith = [((1, 1, 1), 4.0), ((2, 0.5, 0.25), 8.0)]
    for args, want in arith:
        if abs(de_giorgi_threshold(*args) - want) > 1e-15:
            res.violations.append({"suite": "degiorgi", "check": "threshold",
                                   "index": -1, "detail": str(args)})
    count = min(samples, 2000)
    for i in range(count):
        R = rng.uniform(0.2, 3.0)
        p = rng.uniform(1.0, 4.0)
        A = rng.uniform(0.1, 5.0)
        delta = rng.uniform(0.2, 2.0)
        s = np.linspace(0.0, 2.0 * R, grid_points)
        phi = A * np.maximum(0.0, 1.0 - s / R) ** p
        C = de_giorgi_fit(s, phi, delta)
        try:
            out = de_giorgi_verify(s, phi, C, delta)
        except HypothesisFail as exc:
            res.violations.append({"suite": "degiorgi", "check": "fit", "index": i,
                                   "detail": str(exc)})
            continue
        if not out.passed:
            res.violations.append({"suite": "degiorgi", "check": "vanishing", "index": i,
                                   "detail": f"threshold {out.threshold:.4g}"})
    res.samples = count
    return res


RUNNERS = {
    "algebra": run_algebra,
    "cones": run_cones,
    "chen": run_operator,
    "reformulations": run_reformulations,
    "degiorgi": run_degiorgi,
}


def run_suite(name: str, samples: int, seed: int) -> SuiteResult:
    if name not in RUNNERS:
        raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    res = RUNNERS[name](samples, rng)
    res.elapsed = time.perf_counter() - t0
    return res
