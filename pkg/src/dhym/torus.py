"""Discrete flat Kahler tori.

Real coordinates are interleaved as (x_1, y_1, x_2, y_2, ...), with
z_a = x_a + sqrt(-1) y_a. A field lives on an array whose shape is the tuple
of per-axis resolutions; axes that are switched off have resolution 1, which
gives reduced profiles for n = 3, 4 on small grids.

Closed (1,1)-forms are always built as a constant Hermitian matrix plus the
complex Hessian of a periodic potential, so closedness holds by construction.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import NonPositiveMetric, NormalizationError
from .phase_algebra import elementary_symmetric_all, sigma_product

DEFAULT_POINT_BUDGET = 2 ** 20

_JOBS = 1


def set_jobs(n: int) -> None:
    """Bound the worker count for pointwise kernels; results do not depend on it."""
    global _JOBS
    _JOBS = max(1, int(n))


def get_jobs() -> int:
    return _JOBS


def _pointwise(func: Callable, *arrays: np.ndarray, point_ndim: int):
    """Apply ``func`` over flattened grid points, chunked across threads.

    ``arrays`` share a leading grid shape; the trailing ``point_ndim`` axes
    belong to each point. Every point is processed independently, so the
    split does not change a single bit of the output.
    """
    lead = arrays[0].shape[: arrays[0].ndim - point_ndim]
    flat = [a.reshape((-1,) + a.shape[a.ndim - point_ndim:]) for a in arrays]
    npts = flat[0].shape[0]
    if _JOBS == 1 or npts < 2 * _JOBS:
        out = func(*flat)
    else:
        bounds = np.linspace(0, npts, _JOBS + 1).astype(int)
        chunks = [tuple(a[lo:hi] for a in flat) for lo, hi in zip(bounds[:-1], bounds[1:])]
        with ThreadPoolExecutor(max_workers=_JOBS) as ex:
            parts = list(ex.map(lambda c: func(*c), chunks))
        if isinstance(parts[0], tuple):
            out = tuple(np.concatenate(p, axis=0) for p in zip(*parts))
        else:
            out = np.concatenate(parts, axis=0)
    if isinstance(out, tuple):
        return tuple(o.reshape(lead + o.shape[1:]) for o in out)
    return out.reshape(lead + out.shape[1:])


@dataclass(frozen=True)
class TorusGrid:
    complex_dim: int
    resolutions: tuple
    periods: tuple = None
    point_budget: int = DEFAULT_POINT_BUDGET

    def __post_init__(self):
        n = self.complex_dim
        if n < 1:
            raise ValueError("complex dimension must be positive")
        res = tuple(int(r) for r in self.resolutions)
        if len(res) != 2 * n:
            raise ValueError(f"need {2 * n} real-axis resolutions, got {len(res)}")
        for r in res:
            if r != 1 and r < 4:
                raise ValueError("active axes need at least 4 points")
        periods = self.periods
        if periods is None:
            periods = (2.0 * math.pi,) * (2 * n)
        periods = tuple(float(p) for p in periods)
        if len(periods) != 2 * n or any(p <= 0 for p in periods):
            raise ValueError("periods must be positive, one per real axis")
        if math.prod(res) > self.point_budget:
            raise ValueError(f"grid has {math.prod(res)} points, budget {self.point_budget}")
        object.__setattr__(self, "resolutions", res)
        object.__setattr__(self, "periods", periods)

    @classmethod
    def reduced(cls, n: int, N: int, active: Sequence[int] = (0,), periods=None):
        """Grid varying only along the listed real axes (0 = x_1, 1 = y_1, ...)."""
        res = [1] * (2 * n)
        for a in active:
            res[a] = N
        return cls(n, tuple(res), periods)

    @property
    def shape(self) -> tuple:
        return self.resolutions

    @property
    def active_axes(self) -> tuple:
        return tuple(r > 1 for r in self.resolutions)

    @property
    def npoints(self) -> int:
        return math.prod(self.resolutions)

    @property
    def cell_volume(self) -> float:
        return math.prod(p / r for p, r in zip(self.periods, self.resolutions))

    @property
    def total_volume(self) -> float:
        return math.prod(self.periods)

    def coords(self) -> list:
        """Broadcastable coordinate arrays, one per real axis."""
        out = []
        for p, (L, N) in enumerate(zip(self.periods, self.resolutions)):
            shape = [1] * len(self.resolutions)
            shape[p] = N
            out.append((L * np.arange(N) / N).reshape(shape))
        return out

    def axis_name(self, p: int) -> str:
        return ("x", "y")[p % 2] + str(p // 2 + 1)

    def _wavenumbers(self, p: int):
        N, L = self.resolutions[p], self.periods[p]
        shape = [1] * len(self.resolutions)
        shape[p] = N
        k = 2.0 * math.pi / L * np.fft.fftfreq(N, 1.0 / N)
        k1 = k.copy()
        if N % 2 == 0:
            k1[N // 2] = 0.0
        return k.reshape(shape), k1.reshape(shape)

    def derivative_multipliers(self):
        """Per-axis (second-derivative, first-derivative) Fourier multipliers."""
        return [self._wavenumbers(p) for p in range(len(self.resolutions))]


@dataclass
class PotentialField:
    grid: TorusGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            self.values = np.broadcast_to(self.values, self.grid.shape).copy()

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.shape))

    def __add__(self, other):
        o = other.values if isinstance(other, PotentialField) else other
        return PotentialField(self.grid, self.values + o)

    def __sub__(self, other):
        o = other.values if isinstance(other, PotentialField) else other
        return PotentialField(self.grid, self.values - o)

    def __mul__(self, a):
        o = a.values if isinstance(a, PotentialField) else a
        return PotentialField(self.grid, self.values * o)

    __rmul__ = __mul__

    def __neg__(self):
        return PotentialField(self.grid, -self.values)

    def sup(self) -> float:
        return float(self.values.max())


@dataclass
class HermitianField:
    grid: TorusGrid
    entries: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=complex)
        n = self.grid.complex_dim
        target = self.grid.shape + (n, n)
        if e.shape != target:
            e = np.broadcast_to(e, target).copy()
        self.entries = e

    @classmethod
    def constant(cls, grid, matrix):
        m = np.asarray(matrix, dtype=complex)
        if m.ndim == 0:
            m = m * np.eye(grid.complex_dim)
        if not np.allclose(m, m.conj().T, atol=1e-13):
            raise ValueError("matrix is not Hermitian")
        return cls(grid, m)

    @classmethod
    def identity(cls, grid):
        return cls.constant(grid, np.eye(grid.complex_dim))

    def __add__(self, other):
        o = other.entries if isinstance(other, HermitianField) else other
        return HermitianField(self.grid, self.entries + o)

    def __sub__(self, other):
        o = other.entries if isinstance(other, HermitianField) else other
        return HermitianField(self.grid, self.entries - o)

    def __mul__(self, a):
        return HermitianField(self.grid, self.entries * a)

    __rmul__ = __mul__

    def is_constant(self) -> bool:
        e = self.entries.reshape((-1,) + self.entries.shape[-2:])
        return bool(np.all(e == e[0]))

    def hermitian_defect(self) -> float:
        e = self.entries
        return float(np.abs(e - np.conj(np.swapaxes(e, -1, -2))).max())


def _second_derivatives(values: np.ndarray, grid: TorusGrid, pairs):
    """Spectral second derivatives d_p d_q for the requested real-axis pairs."""
    active = [p for p, a in enumerate(grid.active_axes) if a]
    out = {}
    if not active:
        return {pq: np.zeros(grid.shape) for pq in pairs}
    vhat = np.fft.fftn(values, axes=active)
    mult = grid.derivative_multipliers()
    for p, q in pairs:
        if not (grid.active_axes[p] and grid.active_axes[q]):
            out[(p, q)] = np.zeros(grid.shape)
            continue
        if p == q:
            m = -mult[p][0] ** 2
        else:
            m = -(mult[p][1] * mult[q][1])
        out[(p, q)] = np.fft.ifftn(vhat * m, axes=active).real
    return out


def hessian_pairs(grid: TorusGrid):
    n = grid.complex_dim
    pairs = set()
    for a in range(n):
        for b in range(n):
            for p, q in ((2 * a, 2 * b), (2 * a + 1, 2 * b + 1),
                         (2 * a, 2 * b + 1), (2 * a + 1, 2 * b)):
                pairs.add((min(p, q), max(p, q)))
    return sorted(pairs)


def complex_hessian(phi) -> HermitianField:
    """Entries d^2 phi / dz_a d(conj z_b) by discrete Fourier differentiation."""
    if isinstance(phi, PotentialField):
        grid, v = phi.grid, phi.values
    else:
        raise TypeError("complex_hessian takes a PotentialField")
    n = grid.complex_dim
    D = _second_derivatives(v, grid, hessian_pairs(grid))

    def d(p, q):
        return D[(min(p, q), max(p, q))]

    H = np.zeros(grid.shape + (n, n), dtype=complex)
    for a in range(n):
        xa, ya = 2 * a, 2 * a + 1
        for b in range(a, n):
            xb, yb = 2 * b, 2 * b + 1
            val = 0.25 * ((d(xa, xb) + d(ya, yb)) + 1j * (d(xa, yb) - d(ya, xb)))
            H[..., a, b] = val
            if b != a:
                H[..., b, a] = np.conj(val)
            else:
                H[..., a, a] = val.real
    return HermitianField(grid, H)


def gradient_norm_sq(phi: PotentialField, omega: HermitianField) -> np.ndarray:
    """|d phi|^2_omega = omega^{a b-bar} phi_a phi_{b-bar} (complex-gradient norm)."""
    grid = phi.grid
    active = [p for p, a in enumerate(grid.active_axes) if a]
    n = grid.complex_dim
    first = [np.zeros(grid.shape) for _ in range(2 * n)]
    if active:
        vhat = np.fft.fftn(phi.values, axes=active)
        mult = grid.derivative_multipliers()
        for p in active:
            first[p] = np.fft.ifftn(vhat * (1j * mult[p][1]), axes=active).real
    dz = np.stack([0.5 * (first[2 * a] - 1j * first[2 * a + 1]) for a in range(n)], axis=-1)
    oinv = np.linalg.inv(omega.entries)
    return np.einsum("...a,...ab,...b->...", dz, oinv, np.conj(dz)).real


def _cholesky(omega: HermitianField) -> np.ndarray:
    try:
        if omega.is_constant():
            L = np.linalg.cholesky(omega.entries.reshape((-1,) + omega.entries.shape[-2:])[0])
            return np.broadcast_to(L, omega.entries.shape)
        return np.linalg.cholesky(omega.entries)
    except np.linalg.LinAlgError as exc:
        raise NonPositiveMetric("reference form is not positive definite") from exc


def _pencil_kernel(X, Linv):
    A = Linv @ X @ np.conj(np.swapaxes(Linv, -1, -2))
    A = 0.5 * (A + np.conj(np.swapaxes(A, -1, -2)))
    w, U = np.linalg.eigh(A)
    W = np.conj(np.swapaxes(Linv, -1, -2)) @ U
    return w[..., ::-1], W[..., ::-1]


def relative_spectrum(X: HermitianField, omega: HermitianField, vectors: bool = False):
    """Eigenvalues of X relative to omega at every point, sorted descending.

    With ``vectors=True`` also returns eigenvectors W normalised so that
    W^H omega W = I, columns ordered like the eigenvalues.
    """
    L = _cholesky(omega)
    Linv = np.linalg.inv(L)
    Linv = np.broadcast_to(Linv, X.entries.shape).copy()
    lam, W = _pointwise(_pencil_kernel, X.entries, Linv, point_ndim=2)
    if vectors:
        return lam, W
    return lam


def volume_density(omega: HermitianField) -> np.ndarray:
    """det(omega) per point: the density of omega^n against Lebesgue measure."""
    return np.linalg.det(omega.entries).real


def fsum_array(a: np.ndarray) -> float:
    """Compensated sum in fixed C order; reproducible bit for bit."""
    return math.fsum(np.ascontiguousarray(a, dtype=float).ravel().tolist())


def integrate(s, grid: TorusGrid, omega: HermitianField | None = None) -> float:
    """Uniform-grid quadrature, optionally against omega^n."""
    v = s.values if isinstance(s, PotentialField) else np.asarray(s, dtype=float)
    v = np.broadcast_to(v, grid.shape)
    if omega is not None:
        v = v * volume_density(omega)
    return fsum_array(v) * grid.cell_volume


def omega_volume(omega: HermitianField) -> float:
    return integrate(np.ones(omega.grid.shape), omega.grid, omega)


def mixed_re_im(X: HermitianField, omega: HermitianField):
    """Pointwise Re and Im of (X + sqrt(-1) omega)^n / omega^n."""
    lam = relative_spectrum(X, omega)
    return sigma_product(lam)


def mixed_re_im_sk(X: HermitianField, omega: HermitianField):
    """The same quantities through the S_k expansion of prod(lambda_i + sqrt(-1))."""
    lam = relative_spectrum(X, omega)
    n = lam.shape[-1]
    e = elementary_symmetric_all(lam)
    re = np.zeros(lam.shape[:-1])
    im = np.zeros(lam.shape[:-1])
    for k in range(n + 1):
        c = 1j ** (n - k)
        re += round(c.real) * e[..., k]
        im += round(c.imag) * e[..., k]
    return re, im


def check_density_normalization(f: PotentialField, omega: HermitianField, rtol=1e-10):
    vol = omega_volume(omega)
    mass = integrate(f, f.grid, omega)
    if abs(mass - vol) > rtol * vol:
        raise NormalizationError(f"density integrates to {mass}, expected {vol}")


def normalize_density(f: PotentialField, omega: HermitianField) -> PotentialField:
    """Rescale f so that its omega^n integral equals the volume."""
    vol = omega_volume(omega)
    return f * (vol / integrate(f, f.grid, omega))


def phase_defect(X: HermitianField, omega: HermitianField, theta0: float) -> np.ndarray:
    """Pointwise Re - cot(theta0) Im of (X + sqrt(-1) omega)^n / omega^n."""
    re, im = mixed_re_im(X, omega)
    return np.asarray(re) - np.asarray(im) / math.tan(theta0)


def cohomological_ct(chi: HermitianField, chi_tilde: HermitianField, omega: HermitianField,
                     t: float, theta0: float, f: PotentialField | None = None) -> float:
    """Normalisation constant c_t making the approximation equation integrable."""
    if f is not None:
        check_density_normalization(f, omega)
    X = chi + chi_tilde + omega * t
    vol = omega_volume(omega)
    return integrate(phase_defect(X, omega, theta0), omega.grid, omega) / vol


def volume_vt(chi_tilde: HermitianField, omega: HermitianField, t: float) -> float:
    """V_t, the omega^n integral of det(chi_tilde + t omega) / det(omega)."""
    lam = relative_spectrum(chi_tilde + omega * t, omega)
    sn = elementary_symmetric_all(lam)[..., -1]
    return integrate(sn, omega.grid, omega)


def sup_normalize(phi: PotentialField) -> PotentialField:
    return PotentialField(phi.grid, phi.values - phi.values.max())


# --- recipes -----------------------------------------------------------------

@dataclass
class FourierMode:
    """amplitude * cos/sin(sum_p wave[p] * 2 pi x_p / L_p)."""

    amplitude: float
    wave: tuple
    kind: str = "cos"

    def evaluate(self, grid: TorusGrid) -> np.ndarray:
        if len(self.wave) != 2 * grid.complex_dim:
            raise ValueError("wave vector needs one integer per real axis")
        arg = np.zeros(grid.shape)
        for w, x, L, on in zip(self.wave, grid.coords(), grid.periods, grid.active_axes):
            if w and not on:
                raise ValueError("mode varies along an inactive axis")
            arg = arg + (2.0 * math.pi * w / L) * x
        fn = {"cos": np.cos, "sin": np.sin}[self.kind]
        return self.amplitude * fn(arg)


@dataclass
class FieldRecipe:
    """Closed real (1,1)-form: constant Hermitian matrix plus i dd-bar of a potential.

    ``kind`` is ``"constant-matrix"``, ``"fourier-modes"`` or
    ``"pointwise-formula"``; the last takes ``formula(coords) -> potential``.
    """

    kind: str = "constant-matrix"
    matrix: object = 0.0
    modes: list = field(default_factory=list)
    formula: Callable | None = None

    def potential(self, grid: TorusGrid) -> PotentialField:
        v = np.zeros(grid.shape)
        if self.kind == "fourier-modes":
            for m in self.modes:
                mode = m if isinstance(m, FourierMode) else FourierMode(**m)
                v = v + mode.evaluate(grid)
        elif self.kind == "pointwise-formula":
            if self.formula is None:
                raise ValueError("pointwise-formula recipe needs a formula")
            v = v + np.asarray(self.formula(grid.coords()), dtype=float)
        elif self.kind != "constant-matrix":
            raise ValueError(f"unknown recipe kind {self.kind!r}")
        return PotentialField(grid, v)

    def build(self, grid: TorusGrid) -> HermitianField:
        base = HermitianField.constant(grid, self.matrix)
        if self.kind == "constant-matrix":
            return base
        return base + complex_hessian(self.potential(grid))
