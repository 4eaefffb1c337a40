"""Pointwise algebra of the deformed Hermitian-Yang-Mills operator.

Every function accepts either a :class:`Spectrum` or an array whose last axis
holds the eigenvalues, so the same code serves single points and large
random batches. Batches are never re-sorted unless a clause depends on the
ordering.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConeViolation,
    MagnitudeError,
    NearBoundaryWarning,
    PhaseOutOfRange,
)

# partial products beyond this magnitude are treated as overflow
_SAFE_MAGNITUDE = 1e150


@dataclass(frozen=True)
class Spectrum:
    """Eigenvalues of a Hermitian form relative to the Kahler form, descending."""

    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).ravel()
        if v.size < 1:
            raise ValueError("a spectrum needs at least one eigenvalue")
        if not np.all(np.isfinite(v)):
            raise ValueError("spectrum entries must be finite")
        v = np.sort(v)[::-1].copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def n(self) -> int:
        return self.values.size

    def __repr__(self):
        return f"Spectrum({self.values.tolist()})"


@dataclass(frozen=True)
class PhaseWindow:
    theta0: float
    Theta0: float

    def __post_init__(self):
        if not (0.0 < self.theta0 < self.Theta0 < math.pi):
            raise ValueError(
                f"need 0 < theta0 < Theta0 < pi, got ({self.theta0}, {self.Theta0})"
            )

    @classmethod
    def with_default_upper(cls, theta0: float) -> "PhaseWindow":
        """Window with Theta0 halfway between theta0 and pi."""
        return cls(theta0, 0.5 * (theta0 + math.pi))

    @property
    def cot_theta0(self) -> float:
        return 1.0 / math.tan(self.theta0)


@dataclass(frozen=True)
class OperatorShift:
    """Right-hand shift b of the operator; the b >= 0 branch is the certified one."""

    b: float = 0.0

    def check(self, n: int, allow_negative: bool = False) -> None:
        if self.b < 0 and not (allow_negative and n >= 4):
            raise ValueError(f"shift b={self.b} outside the certified branch for n={n}")


@dataclass(frozen=True)
class ConeReport:
    in_window: bool
    subsolution_margin: float
    phase: float
    gamma_k_max: int


def _values(lam) -> np.ndarray:
    if isinstance(lam, Spectrum):
        return lam.values
    v = np.asarray(lam, dtype=float)
    if v.ndim == 0:
        v = v.reshape(1)
    if not np.all(np.isfinite(v)):
        raise ValueError("spectrum entries must be finite")
    return v


def _shift(b):
    if isinstance(b, OperatorShift):
        return b.b
    return b


def _scalar(x):
    x = np.asarray(x)
    return float(x) if x.ndim == 0 else x


def arccot(x):
    """Inverse cotangent with values in (0, pi)."""
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("arccot needs finite input")
    return _scalar(0.5 * np.pi - np.arctan(x))


def lagrangian_phase(lam):
    """Total phase: the sum of arccot over the eigenvalues."""
    v = _values(lam)
    return _scalar(np.sum(0.5 * np.pi - np.arctan(v), axis=-1))


def sigma_product(lam):
    """Real and imaginary parts of prod_i (lambda_i + sqrt(-1))."""
    v = _values(lam)
    z = np.ones(v.shape[:-1], dtype=complex)
    for i in range(v.shape[-1]):
        z = z * (v[..., i] + 1j)
        if np.any(np.abs(z) > _SAFE_MAGNITUDE):
            raise MagnitudeError("partial product exceeds the safe magnitude range")
    return _scalar(z.real), _scalar(z.imag)


def _product_excluding(v: np.ndarray) -> np.ndarray:
    """prod_{j != i} (lambda_j + sqrt(-1)) for every i, without division."""
    n = v.shape[-1]
    w = v + 1j
    left = np.ones(v.shape, dtype=complex)
    right = np.ones(v.shape, dtype=complex)
    for i in range(1, n):
        left[..., i] = left[..., i - 1] * w[..., i - 1]
    for i in range(n - 2, -1, -1):
        right[..., i] = right[..., i + 1] * w[..., i + 1]
    return left * right


def _check_phase(v, what="operator"):
    theta = np.sum(0.5 * np.pi - np.arctan(v), axis=-1)
    if np.any(theta <= 0.0) or np.any(theta >= np.pi):
        raise PhaseOutOfRange(f"{what} needs total phase in (0, pi)")
    return theta


def _flag_boundary(im, v):
    p = np.prod(np.sqrt(1.0 + v * v), axis=-1)
    if np.any(im < 1e-12 * p):
        warnings.warn("evaluation within round-off of phase pi", NearBoundaryWarning,
                      stacklevel=3)


def operator_value(lam, b=0.0):
    """(Re - b) / Im of prod(lambda_i + sqrt(-1)); cot of the phase when b = 0."""
    v = _values(lam)
    b = _shift(b)
    _check_phase(v)
    re, im = sigma_product(v)
    _flag_boundary(np.asarray(im), v)
    return _scalar((np.asarray(re) - b) / np.asarray(im))


def operator_gradient(lam, b=0.0):
    """Analytic partial derivatives of :func:`operator_value`.

    Uses d(prod)/d(lambda_i) = prod_{j != i}(lambda_j + sqrt(-1)) and the
    quotient rule.
    """
    v = _values(lam)
    b = _shift(b)
    _check_phase(v)
    re, im = sigma_product(v)
    re = np.asarray(re)[..., None]
    im = np.asarray(im)[..., None]
    d = _product_excluding(v)
    b = np.asarray(b, dtype=float)
    if b.ndim:
        b = b[..., None]
    return (d.real * im - (re - b) * d.imag) / (im * im)


def _value_unchecked(v, b):
    re, im = sigma_product(v)
    return (np.asarray(re) - b) / np.asarray(im)


def operator_hessian_fd(lam, b=0.0, h=1e-4):
    """Central finite-difference Hessian of the operator, batched."""
    v = _values(lam)
    b = np.asarray(_shift(b), dtype=float)
    n = v.shape[-1]
    H = np.empty(v.shape + (n,))
    g0 = _value_unchecked(v, b)
    eye = np.eye(n) * h
    for i in range(n):
        gp = _value_unchecked(v + eye[i], b)
        gm = _value_unchecked(v - eye[i], b)
        H[..., i, i] = (gp - 2.0 * g0 + gm) / (h * h)
        for j in range(i + 1, n):
            gpp = _value_unchecked(v + eye[i] + eye[j], b)
            gpm = _value_unchecked(v + eye[i] - eye[j], b)
            gmp = _value_unchecked(v - eye[i] + eye[j], b)
            gmm = _value_unchecked(v - eye[i] - eye[j], b)
            H[..., i, j] = H[..., j, i] = (gpp - gpm - gmp + gmm) / (4.0 * h * h)
    return H


def elementary_symmetric_all(lam) -> np.ndarray:
    """All S_0..S_n via the coefficient recurrence of prod(1 + lambda_i x)."""
    v = _values(lam)
    n = v.shape[-1]
    e = np.zeros(v.shape[:-1] + (n + 1,))
    e[..., 0] = 1.0
    for i in range(n):
        # descending k so each lambda_i is used once per coefficient
        for k in range(i + 1, 0, -1):
            e[..., k] = e[..., k] + v[..., i] * e[..., k - 1]
    return e


def elementary_symmetric(lam, k: int):
    v = _values(lam)
    n = v.shape[-1]
    if not 0 <= k <= n:
        raise ValueError(f"k={k} outside 0..{n}")
    return _scalar(elementary_symmetric_all(v)[..., k])


def gamma_k_membership(lam, k: int):
    """Membership in the k-positive cone; returns (inside, min_{j<=k} S_j)."""
    v = _values(lam)
    n = v.shape[-1]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} outside 1..{n}")
    s = elementary_symmetric_all(v)[..., 1:k + 1]
    margin = s.min(axis=-1)
    return _scalar(margin > 0), _scalar(margin)


def gamma_k_max(lam):
    """Largest k with the spectrum in the k-positive cone (0 if S_1 <= 0)."""
    v = _values(lam)
    s = elementary_symmetric_all(v)[..., 1:]
    positive = np.cumprod(s > 0, axis=-1)
    return _scalar(positive.sum(axis=-1))


def window_margins(lam, window: PhaseWindow):
    """Subsolution margin and total phase for a (batch of) spectra.

    The worst (n-1)-fold sum is taken over every omitted index j; the result
    is checked against the sum that omits the largest eigenvalue.
    """
    v = _values(lam)
    a = 0.5 * np.pi - np.arctan(v)
    theta = a.sum(axis=-1)
    partial = theta[..., None] - a
    worst = partial.max(axis=-1)
    top = np.argmax(v, axis=-1)[..., None]
    omit_largest = np.take_along_axis(partial, top, -1)[..., 0]
    assert np.all(worst == omit_largest), "worst partial sum must omit the largest eigenvalue"
    return window.theta0 - worst, theta


def window_membership(lam, window: PhaseWindow) -> ConeReport:
    v = _values(lam)
    if v.ndim != 1:
        raise ValueError("window_membership takes a single spectrum; use window_margins")
    margin, theta = window_margins(v, window)
    margin, theta = float(margin), float(theta)
    return ConeReport(
        in_window=bool(margin > 0 and theta < window.Theta0),
        subsolution_margin=margin,
        phase=theta,
        gamma_k_max=int(gamma_k_max(v)),
    )


@dataclass(frozen=True)
class LowPhaseConeResult:
    applicable: bool
    passed: bool
    violated: str | None = None


def low_phase_cone_check(lam, tol: float = 1e-12):
    """Batched cone facts for spectra with total phase at most pi.

    Returns (applicable, gamma_ok, positive_ok, balance_ok) boolean arrays.
    Clause tolerances are relative to the size of the spectrum.
    """
    v = -np.sort(-_values(lam), axis=-1)
    n = v.shape[-1]
    if n < 2:
        raise ValueError("the cone facts need n >= 2")
    theta = np.sum(0.5 * np.pi - np.arctan(v), axis=-1)
    applicable = theta <= np.pi
    scale = np.maximum(1.0, np.abs(v).max(axis=-1))
    e = elementary_symmetric_all(v)
    gamma_ok = np.ones(v.shape[:-1], dtype=bool)
    for j in range(1, n):
        gamma_ok &= e[..., j] >= -tol * math.comb(n, j) * scale ** j
    positive_ok = v[..., n - 2] > 0
    balance_ok = v[..., 0] + (n - 1) * v[..., n - 1] >= -tol * scale
    return applicable, gamma_ok, positive_ok, balance_ok


def wang_yuan_audit(lam) -> LowPhaseConeResult:
    v = _values(lam)
    if v.ndim != 1:
        raise ValueError("wang_yuan_audit takes a single spectrum; use low_phase_cone_check")
    app, g, p, bal = (bool(x) for x in low_phase_cone_check(v))
    if not app:
        return LowPhaseConeResult(False, True, None)
    for ok, name in ((g, "closed (n-1)-positive cone"),
                     (p, "lambda_{n-1} > 0"),
                     (bal, "lambda_1 + (n-1) lambda_n >= 0")):
        if not ok:
            return LowPhaseConeResult(True, False, name)
    return LowPhaseConeResult(True, True, None)


def dim2_forms(lam, theta0):
    """Both sides of the n = 2 rewrite as residuals.

    Returns (ma_form, phase_form) with
    ma_form = (l1 - c)(l2 - c) - csc^2, phase_form = l1 l2 - 1 - c (l1 + l2).
    """
    v = _values(lam)
    if v.shape[-1] != 2:
        raise ValueError("dimension-2 rewrite needs n = 2")
    c = 1.0 / np.tan(theta0)
    csc2 = 1.0 / np.sin(theta0) ** 2
    l1, l2 = v[..., 0], v[..., 1]
    ma = (l1 - c) * (l2 - c) - csc2
    ph = (l1 * l2 - 1.0) - c * (l1 + l2)
    return _scalar(ma), _scalar(ph)


def dim2_reformulation_residual(lam, theta0):
    ma, ph = dim2_forms(lam, theta0)
    return _scalar(np.abs(ma) - np.abs(ph))


def dim3_forms(lam, theta0, rhs=0.0):
    """Monge-Ampere-type and phase-type residuals for n = 3."""
    v = _values(lam)
    if v.shape[-1] != 3:
        raise ValueError("dimension-3 rewrite needs n = 3")
    c = 1.0 / np.tan(theta0)
    c = np.asarray(c)
    mu = v - (c[..., None] if c.ndim else c)
    sm = elementary_symmetric_all(mu)
    sl = elementary_symmetric_all(v)
    ma = sm[..., 3] - (c * c + 1.0) * sm[..., 1] - 2.0 * c * (c * c + 1.0) - rhs
    ph = (sl[..., 3] - sl[..., 1]) - c * (sl[..., 2] - 1.0) - rhs
    return _scalar(ma), _scalar(ph)


def dim3_reformulation_residual(lam, theta0, rhs=0.0):
    ma, ph = dim3_forms(lam, theta0, rhs)
    return _scalar(np.abs(ma) - np.abs(ph))


@dataclass
class OperatorAudit:
    """Empirical record of the structural properties of the shifted operator."""

    im: float
    im_floor_ok: bool
    inv_im_gradient_C: float
    gradient: np.ndarray
    gradient_positive: bool
    hessian_max_eig: float
    hessian_ok: bool
    eps2_empirical: float | None
    midpoint_in_window: bool | None


def inv_im_gradient_constant(lam):
    """Largest C with |d(1/Im)/d lambda_i| <= C^{-1/2} sqrt(P^2/Im^3) / sqrt(1+lambda_i^2)."""
    v = _values(lam)
    _, im = sigma_product(v)
    im = np.asarray(im)[..., None]
    d = _product_excluding(v).imag
    deriv = np.abs(d) / (im * im)
    p2 = np.prod(1.0 + v * v, axis=-1)[..., None]
    shape = np.sqrt(p2 / im ** 3) / np.sqrt(1.0 + v * v)
    with np.errstate(divide="ignore"):
        c = np.where(deriv > 0, (shape / np.where(deriv > 0, deriv, 1.0)) ** 2, np.inf)
    return _scalar(c.min(axis=-1))


def hessian_negativity_margin(lam, b=0.0, h=1e-4):
    """Empirical eps2: largest e with Hess <= -e * P^2/Im^3 * diag(1/(1+lambda^2))."""
    v = _values(lam)
    H = operator_hessian_fd(v, b, h)
    _, im = sigma_product(v)
    p2 = np.prod(1.0 + v * v, axis=-1)
    scale = p2 / np.asarray(im) ** 3
    dsq = np.sqrt(1.0 + v * v)
    # D^{-1/2} H D^{-1/2} with D = scale * diag(1/(1+lambda^2))
    Hs = H * dsq[..., :, None] * dsq[..., None, :] / np.asarray(scale)[..., None, None]
    return _scalar(-np.linalg.eigvalsh(Hs)[..., -1])


def chen_lemma_audit(lam, shift=0.0, window: PhaseWindow | None = None,
                     other=None, hessian_tol: float = 1e-7) -> OperatorAudit:
    """Numerical certificate of the operator's structural properties at one point.

    Failures are recorded in the returned audit rather than raised.
    ``other`` is a second window point for the convexity (midpoint) probe.
    """
    v = _values(lam)
    b = float(_shift(shift))
    n = v.size
    _, im = sigma_product(v)
    grad = operator_gradient(v, b)
    H = operator_hessian_fd(v, b)
    hmax = float(np.linalg.eigvalsh(H)[-1])
    eps2 = float(hessian_negativity_margin(v, b)) if n >= 4 else None
    mid = None
    if other is not None and window is not None:
        w = _values(other)
        m, th = window_margins(0.5 * (v + w), window)
        mid = bool(m >= -1e-12 and th <= window.Theta0 + 1e-12)
    return OperatorAudit(
        im=float(im),
        im_floor_ok=bool(im > 0),
        inv_im_gradient_C=float(inv_im_gradient_constant(v)),
        gradient=grad,
        gradient_positive=bool(np.all(grad > 0)),
        hessian_max_eig=hmax,
        hessian_ok=bool(hmax <= hessian_tol),
        eps2_empirical=eps2,
        midpoint_in_window=mid,
    )


def sk_ratio(lam, k: int):
    e = elementary_symmetric_all(_values(lam))
    return _scalar(e[..., k + 1] / e[..., k])


def sk_ratio_concavity_probe(lam_a, lam_b, k: int):
    """Midpoint defect of S_{k+1}/S_k along a segment inside the k-positive cone."""
    a = _values(lam_a)
    b = _values(lam_b)
    n = a.shape[-1]
    if not 1 <= k <= n - 1:
        raise ValueError(f"k={k} outside 1..{n - 1}")
    for x in (a, b):
        inside, _ = gamma_k_membership(x, k)
        if not np.all(inside):
            raise ConeViolation(f"segment endpoint outside the {k}-positive cone")
    mid = 0.5 * (a + b)
    return _scalar(sk_ratio(mid, k) - 0.5 * (np.asarray(sk_ratio(a, k)) + sk_ratio(b, k)))
