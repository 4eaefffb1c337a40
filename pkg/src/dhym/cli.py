"""Configuration-driven runner: ``dhym run``, ``dhym verify``, ``dhym plot``.

Exit codes: 0 success, 2 solver failure, 3 audit failure, 4 configuration
or input error.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import platform
import sys
import time
from pathlib import Path

import jsonschema
import numpy as np
import scipy

from . import __version__
from .errors import DHYMError, HypothesisFail, NormalizationError
from .estimates import (
    calibrate_stability,
    check_regime,
    de_giorgi_fit,
    de_giorgi_threshold,
    de_giorgi_verify,
    decreasing_limit_audit,
    envelope_estimate,
    envelope_ordering,
    gradient_diagnostic,
    level_density,
    level_profile,
    linfty_audit,
    perturbed_density,
    regime_exponent,
    stability_pair,
    stability_sweep,
)
from .io import canonical_hash, file_sha256, read_csv, save_field, write_csv, write_json
from .phase_algebra import PhaseWindow
from .solver import (
    Backgrounds,
    SolveConfig,
    continuity_path,
    ct_monotone,
    manufactured_density,
    newton_solve,
    trace_positivity,
)
from .suites import SUITES, run_suite
from .torus import (
    FieldRecipe,
    FourierMode,
    HermitianField,
    PotentialField,
    TorusGrid,
    normalize_density,
    set_jobs,
    volume_vt,
)

EXIT_OK, EXIT_SOLVER, EXIT_AUDIT, EXIT_CONFIG = 0, 2, 3, 4

logger = logging.getLogger("dhym")

_MODE = {
    "type": "object",
    "required": ["amplitude", "wave"],
    "properties": {
        "amplitude": {"type": "number"},
        "wave": {"type": "array", "items": {"type": "integer"}},
        "kind": {"enum": ["cos", "sin"]},
    },
    "additionalProperties": False,
}

_MATRIX = {
    "oneOf": [
        {"type": "number"},
        {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
    ]
}

_RECIPE = {
    "type": "object",
    "properties": {
        "preset": {"enum": ["identity", "zero"]},
        "kind": {"enum": ["constant-matrix", "fourier-modes"]},
        "matrix": _MATRIX,
        "imag": {"type": "array", "items": {"type": "array", "items": {"type": "number"}}},
        "modes": {"type": "array", "items": _MODE},
    },
    "additionalProperties": False,
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "dhym run configuration",
    "type": "object",
    "required": ["mode"],
    "properties": {
        "mode": {"enum": ["solve", "path", "envelope", "stability", "verify", "audit"]},
        "seed": {"type": "integer", "minimum": 0},
        "output": {"type": "string"},
        "geometry": {
            "type": "object",
            "required": ["n"],
            "properties": {
                "n": {"type": "integer", "minimum": 1, "maximum": 6},
                "resolution": {"type": "integer", "minimum": 4},
                "resolutions": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "active_axes": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                "periods": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
            },
            "additionalProperties": False,
        },
        "backgrounds": {
            "type": "object",
            "properties": {"omega": _RECIPE, "chi": _RECIPE, "chi_tilde": _RECIPE},
            "additionalProperties": False,
        },
        "window": {
            "type": "object",
            "required": ["theta0"],
            "properties": {
                "theta0": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": math.pi},
                "Theta0": {"type": "number"},
            },
            "additionalProperties": False,
        },
        "density": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["constant", "fourier-modes", "manufactured"]},
                "base": {"type": "number", "exclusiveMinimum": 0},
                "modes": {"type": "array", "items": _MODE},
                "t": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "t": {"type": "number", "exclusiveMinimum": 0},
        "schedule": {"type": "array", "minItems": 1,
                     "items": {"type": "number", "exclusiveMinimum": 0}},
        "solver": {
            "type": "object",
            "properties": {
                "residual_tol": {"type": "number", "exclusiveMinimum": 0},
                "max_newton": {"type": "integer", "minimum": 1},
                "cone_safety": {"type": "number", "exclusiveMinimum": 0},
                "linear_tol": {"type": "number", "exclusiveMinimum": 0},
                "damping": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "max_halvings": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "envelope": {
            "type": "object",
            "properties": {
                "betas": {"type": "array", "minItems": 1,
                          "items": {"type": "number", "exclusiveMinimum": 0}},
                "t_values": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
            },
            "additionalProperties": False,
        },
        "stability": {
            "type": "object",
            "required": ["regime"],
            "properties": {
                "regime": {"enum": ["general", "hypercritical3", "supercritical3"]},
                "q": {"type": "number", "exclusiveMinimum": 1},
                "profile": {"type": "array", "items": _MODE},
                "amplitudes": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}},
                "calibration_profiles": {"type": "array",
                                         "items": {"type": "array", "items": _MODE}},
                "calibration_amplitudes": {"type": "array",
                                           "items": {"type": "number", "exclusiveMinimum": 0}},
            },
            "additionalProperties": False,
        },
        "verify": {
            "type": "object",
            "required": ["suite"],
            "properties": {
                "suite": {"enum": list(SUITES)},
                "samples": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "audit": {
            "type": "object",
            "properties": {
                "levels": {"type": "integer", "minimum": 2},
                "delta": {"type": "number", "exclusiveMinimum": 0},
                "sigma": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "eps": {"type": "number", "exclusiveMinimum": 0},
                "decreasing_budget": {"type": "number", "minimum": 0},
                "require_flat_K": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}

DEFAULT_BETAS = [10.0 * 2 ** k for k in range(8)]


class ConfigError(Exception):
    pass


class RunContext:
    """Everything resolved from a validated configuration."""

    def __init__(self, cfg: dict):
        self.cfg = cfg
        self.mode = cfg["mode"]
        self.rng = np.random.default_rng(cfg.get("seed", 0))
        if self.mode == "verify":
            return
        for key in ("geometry", "window"):
            if key not in cfg:
                raise ConfigError(f"mode {self.mode!r} needs a {key!r} section")
        self.grid = _grid(cfg["geometry"])
        w = cfg["window"]
        try:
            if w.get("Theta0") is None:
                self.window = PhaseWindow.with_default_upper(w["theta0"])
            else:
                self.window = PhaseWindow(w["theta0"], w["Theta0"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        bg = cfg.get("backgrounds", {})
        omega = _recipe(bg.get("omega", {"preset": "identity"}), self.grid)
        self.backgrounds = Backgrounds(
            omega,
            _recipe(bg.get("chi", {"preset": "identity"}), self.grid),
            _recipe(bg.get("chi_tilde", {"preset": "identity"}), self.grid),
        )
        try:
            self.solver = SolveConfig(**cfg.get("solver", {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        if self.solver.cone_safety >= self.window.theta0:
            raise ConfigError("cone_safety must be below theta0")

    def density(self, t: float) -> PotentialField:
        d = self.cfg.get("density", {"kind": "constant"})
        omega = self.backgrounds.omega
        if d["kind"] == "constant":
            return PotentialField(self.grid, np.ones(self.grid.shape))
        modes = [_mode(m, self.grid) for m in d.get("modes", [])]
        if d["kind"] == "fourier-modes":
            v = d.get("base", 1.0) + sum((m.evaluate(self.grid) for m in modes),
                                         np.zeros(self.grid.shape))
            if np.any(v < 0):
                raise ConfigError("density recipe is negative somewhere")
            return normalize_density(PotentialField(self.grid, v), omega)
        phi_star = PotentialField(self.grid, sum((m.evaluate(self.grid) for m in modes),
                                                 np.zeros(self.grid.shape)))
        try:
            return manufactured_density(phi_star, d.get("t", t), self.window.theta0,
                                        self.backgrounds)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def _grid(g: dict) -> TorusGrid:
    n = g["n"]
    try:
        if "resolutions" in g:
            res = tuple(g["resolutions"])
        else:
            res = [1] * (2 * n)
            for a in g.get("active_axes", [0]):
                if a >= 2 * n:
                    raise ConfigError(f"active axis {a} out of range")
                res[a] = g.get("resolution", 16)
            res = tuple(res)
        return TorusGrid(n, res, tuple(g["periods"]) if "periods" in g else None)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _mode(m: dict, grid: TorusGrid) -> FourierMode:
    mode = FourierMode(m["amplitude"], tuple(m["wave"]), m.get("kind", "cos"))
    if len(mode.wave) != 2 * grid.complex_dim:
        raise ConfigError("wave vectors need one entry per real axis")
    for w, on in zip(mode.wave, grid.active_axes):
        if w and not on:
            raise ConfigError("Fourier mode varies along an inactive axis")
    return mode


def _recipe(r: dict, grid: TorusGrid) -> HermitianField:
    n = grid.complex_dim
    if "preset" in r:
        return HermitianField.constant(grid, 1.0 if r["preset"] == "identity" else 0.0)
    m = r.get("matrix", 0.0)
    if not isinstance(m, (int, float)):
        m = np.asarray(m, dtype=float)
        if "imag" in r:
            m = m + 1j * np.asarray(r["imag"], dtype=float)
        if m.shape != (n, n):
            raise ConfigError(f"matrix must be {n}x{n}")
    try:
        recipe = FieldRecipe(r.get("kind", "constant-matrix"), m,
                             [_mode(x, grid) for x in r.get("modes", [])])
        return recipe.build(grid)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    validate_config(cfg)
    return cfg


def validate_config(cfg: dict) -> None:
    try:
        jsonschema.validate(cfg, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"schema: {exc.message}") from exc
    w = cfg.get("window")
    if w and w.get("Theta0") is not None and not w["theta0"] < w["Theta0"] < math.pi:
        raise ConfigError("window needs theta0 < Theta0 < pi")
    if cfg["mode"] == "verify" and "seed" not in cfg:
        raise ConfigError("sampling modes need a seed")
    if cfg["mode"] == "verify" and "verify" not in cfg:
        raise ConfigError("verify mode needs a 'verify' section")
    if cfg["mode"] == "stability" and "stability" not in cfg:
        raise ConfigError("stability mode needs a 'stability' section")
    if cfg["mode"] == "path" and "schedule" not in cfg:
        raise ConfigError("path mode needs a schedule")


def versions() -> dict:
    return {"dhym": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


# --- modes ----------------------------------------------------------------------------

def _state_row(st, K=None):
    row = [st.t, st.c_t, st.residual_sup, st.cone_margin_min, st.newton_iters]
    return row + ([K] if K is not None else [])


def _envelopes(ctx, ts):
    betas = ctx.cfg.get("envelope", {}).get("betas", DEFAULT_BETAS)
    return [envelope_estimate(ctx.backgrounds.chi_tilde, ctx.backgrounds.omega, t, betas,
                              ctx.solver) for t in ts]


def mode_solve(ctx, out: Path, report: dict) -> int:
    t = ctx.cfg.get("t", 1.0)
    f = ctx.density(t)
    st = newton_solve(None, t, f, ctx.window, ctx.backgrounds, ctx.solver)
    save_field(out / "fields" / "phi_t0", st.phi, label=f"phi at t={t!r}")
    write_csv(out / "summary.csv", ["t", "c_t", "residual_sup", "margin", "iters"],
              [_state_row(st)])
    tr = trace_positivity(st, ctx.backgrounds)
    report["audits"] = {"trace_positivity_min": tr, "trace_positivity": tr >= -1e-10}
    return EXIT_OK if tr >= -1e-10 else EXIT_AUDIT


def mode_path(ctx, out: Path, report: dict) -> int:
    sched = ctx.cfg["schedule"]
    f = ctx.density(sched[0])
    try:
        states = continuity_path(ctx.backgrounds, sched, f, ctx.window, ctx.solver)
    except ValueError as exc:
        if isinstance(exc, DHYMError):
            raise
        raise ConfigError(str(exc)) from exc
    envs = _envelopes(ctx, [s.t for s in states])
    lin = linfty_audit(states, envs)
    rows = []
    for i, (st, K) in enumerate(zip(states, lin.K)):
        save_field(out / "fields" / f"phi_t{i}", st.phi, label=f"phi at t={st.t!r}")
        rows.append(_state_row(st, K))
    write_csv(out / "summary.csv", ["t", "c_t", "residual_sup", "margin", "iters", "K"], rows)
    aud = ctx.cfg.get("audit", {})
    dec = decreasing_limit_audit(states, aud.get("decreasing_budget", math.inf))
    tr = min(trace_positivity(s, ctx.backgrounds) for s in states)
    audits = {
        "ct_monotone": ct_monotone(states),
        "trace_positivity_min": tr,
        "trace_positivity": tr >= -1e-10,
        "decreasing_limit_C": dec.C,
        "decreasing_limit": dec.passed,
        "K_max": lin.K_max,
        "K_decade_variation": lin.decade_variation,
        "K_flat": lin.passed,
    }
    report["audits"] = audits
    ok = audits["ct_monotone"] and audits["trace_positivity"] and dec.passed
    if aud.get("require_flat_K", False):
        ok = ok and lin.passed
    return EXIT_OK if ok else EXIT_AUDIT


def mode_envelope(ctx, out: Path, report: dict) -> int:
    env = ctx.cfg.get("envelope", {})
    ts = sorted(env.get("t_values", [ctx.cfg.get("t", 1.0)]))
    runs = _envelopes(ctx, ts)
    rows = []
    for i, r in enumerate(runs):
        save_field(out / "fields" / f"U_t{i}", r.U, label=f"envelope at t={r.t!r}")
        for j, (b, u) in enumerate(zip(r.betas, r.u_betas)):
            cn = r.cauchy_norms[j - 1] if j else float("nan")
            rows.append([r.t, b, float(u.values.min()), float(u.values.max()), cn])
    write_csv(out / "envelope.csv", ["t", "beta", "u_min", "u_max", "cauchy_norm"], rows)
    order = [envelope_ordering(a, b) for a, b in zip(runs, runs[1:])]
    audits = {"cauchy_decreasing": all(r.cauchy_decreasing() for r in runs),
              "ordering_worst": max(order) if order else None,
              "ordering": all(v <= 0 for v in order)}
    report["audits"] = audits
    return EXIT_OK if audits["cauchy_decreasing"] and audits["ordering"] else EXIT_AUDIT


def _profile(modes, ctx):
    return sum((_mode(m, ctx.grid).evaluate(ctx.grid) for m in modes), np.zeros(ctx.grid.shape))


def mode_stability(ctx, out: Path, report: dict) -> int:
    sc = ctx.cfg["stability"]
    regime = sc["regime"]
    t = ctx.cfg.get("t", 0.5)
    q = sc.get("q", 2.0)
    try:
        check_regime(regime, ctx.backgrounds, ctx.window)
        e = regime_exponent(regime, ctx.grid.complex_dim)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    n = ctx.grid.complex_dim
    first = [1] + [0] * (2 * n - 1)
    profile = _profile(sc.get("profile", [{"amplitude": 1.0, "wave": first}]), ctx)
    f1 = ctx.density(t)
    cal_profiles = [_profile(p, ctx) for p in sc.get("calibration_profiles", [])] or [profile]
    cal_amps = sc.get("calibration_amplitudes", [0.02, 0.08, 0.15])
    pairs = [stability_pair(ctx.backgrounds, f1,
                            perturbed_density(f1, p, a, ctx.backgrounds.omega),
                            t, ctx.window, q, config=ctx.solver)
             for p in cal_profiles for a in cal_amps]
    C = calibrate_stability(pairs, e)
    write_csv(out / "calibration.csv", ["sup_diff", "plus_norm"],
              [[p.sup_diff, p.plus_norm] for p in pairs])
    sweep = stability_sweep(ctx.backgrounds, f1, profile, sc.get("amplitudes", [0.01, 0.05, 0.1]),
                            t, ctx.window, q, regime, C, config=ctx.solver)
    write_csv(out / "stability.csv",
              ["amplitude", "sup_diff", "plus_norm", "exponent", "C", "bound_rhs", "ratio",
               "passed"],
              [[a, r.sup_diff, r.plus_norm, r.exponent, r.C, r.bound_rhs, r.ratio,
                int(r.passed)] for a, r in zip(sweep.amplitudes, sweep.reports)])
    report["audits"] = {"C": C, "slope": sweep.slope, "exponent": e,
                        "max_ratio": max(r.ratio for r in sweep.reports),
                        "passed": sweep.passed}
    return EXIT_OK if sweep.passed else EXIT_AUDIT


def mode_verify(ctx, out: Path, report: dict) -> int:
    v = ctx.cfg["verify"]
    res = run_suite(v["suite"], v.get("samples", 10000), ctx.cfg["seed"])
    write_csv(out / "violations.csv", ["suite", "check", "index", "detail"],
              [[x["suite"], x["check"], x["index"], x["detail"]] for x in res.violations])
    write_csv(out / "summary.csv", ["suite", "samples", "violations"],
              [[res.suite, res.samples, len(res.violations)]])
    report["audits"] = {"suite": res.suite, "samples": res.samples,
                        "violations": len(res.violations), "stats": res.stats,
                        "suite_seconds": res.elapsed}
    return EXIT_OK if res.passed else EXIT_AUDIT


def _de_giorgi_levels(st, U, f, eps, V_t, omega, n_levels, delta):
    """Level masses of U - phi on a grid reaching past the predicted threshold."""
    g = level_density(f, st.c_t, eps)
    top = float((U.values - st.phi.values).max())
    s_values = np.linspace(0.0, 1.25 * top if top > 0 else 1.0, n_levels)
    levels = level_profile(st.phi, U, g, s_values, V_t, omega)
    C = de_giorgi_fit(s_values, np.array([L.mass for L in levels]), delta)
    if levels[0].mass > 0:
        # sample past the predicted threshold so the vanishing claim is actually checked
        d = de_giorgi_threshold(C, delta, levels[0].mass)
        extra = np.linspace(s_values[-1], max(1.5 * d, s_values[-1]), 11)[1:]
        extra = extra[extra > s_values[-1]]
        s_values = np.concatenate([s_values, extra])
        levels += level_profile(st.phi, U, g, extra, V_t, omega)
    mass = np.array([L.mass for L in levels])
    try:
        dg = de_giorgi_verify(s_values, mass, C, delta)
        info = {"passed": dg.passed, "C": dg.C, "threshold": dg.threshold}
    except HypothesisFail as exc:
        info = {"passed": False, "C": C, "pair": exc.pair}
    return levels, info


def mode_audit(ctx, out: Path, report: dict) -> int:
    """Single solve followed by level-set, De Giorgi and gradient audits."""
    aud = ctx.cfg.get("audit", {})
    t = ctx.cfg.get("t", 1.0)
    f = ctx.density(t)
    omega = ctx.backgrounds.omega
    st = newton_solve(None, t, f, ctx.window, ctx.backgrounds, ctx.solver)
    U = _envelopes(ctx, [t])[0].U
    V_t = volume_vt(ctx.backgrounds.chi_tilde, omega, t)
    eps, delta, n_levels = aud.get("eps", 1e-3), aud.get("delta", 1.0 / 6.0), aud.get("levels", 41)
    levels, dg = _de_giorgi_levels(st, U, f, eps, V_t, omega, n_levels, delta)
    # the same audit at eps/10 checks that the regularisation does not matter
    _, dg10 = _de_giorgi_levels(st, U, f, eps / 10, V_t, omega, n_levels, delta)
    write_csv(out / "levels.csv", ["s", "mass", "excess"],
              [[L.s, L.mass, L.excess] for L in levels])
    write_csv(out / "summary.csv", ["t", "c_t", "residual_sup", "margin", "iters"],
              [_state_row(st)])
    gr = gradient_diagnostic(st.phi, aud.get("sigma", 0.5), omega)
    dg_ok = dg["passed"] and dg10["passed"]
    report["audits"] = {
        "degiorgi": dg_ok,
        **{f"degiorgi_{k}": v for k, v in dg.items() if k != "passed"},
        "degiorgi_eps_tenth_passed": dg10["passed"],
        "degiorgi_eps_tenth_C_rel_change": abs(dg10["C"] - dg["C"]) / dg["C"],
        "gradient_lhs": gr.lhs, "gradient_rhs": gr.rhs, "gradient_L": gr.L,
        "gradient": gr.passed,
    }
    return EXIT_OK if dg_ok and gr.passed else EXIT_AUDIT


MODES = {"solve": mode_solve, "path": mode_path, "envelope": mode_envelope,
         "stability": mode_stability, "verify": mode_verify, "audit": mode_audit}


def resolve_out(cfg: dict, out=None) -> Path:
    return Path(out or cfg.get("output") or f"runs/{cfg['mode']}-{canonical_hash(cfg)[:10]}")


def execute(cfg: dict, out: Path | None = None, jobs: int = 1) -> int:
    """Run a validated configuration and write its manifest; returns the exit code."""
    out = resolve_out(cfg, out)
    out.mkdir(parents=True, exist_ok=True)
    set_jobs(jobs)
    report = {"config": cfg, "config_hash": canonical_hash(cfg), "versions": versions(),
              "jobs": jobs, "seed": cfg.get("seed")}
    report["manifest_hash"] = canonical_hash({"config": cfg, "versions": report["versions"]})
    t0 = time.perf_counter()
    try:
        ctx = RunContext(cfg)
        code = MODES[cfg["mode"]](ctx, out, report)
        report["status"] = {EXIT_OK: "ok", EXIT_AUDIT: "audit-failure"}[code]
        if code == EXIT_AUDIT:
            report["reason"] = "one or more audits failed"
    except (ConfigError, NormalizationError) as exc:
        code, report["status"], report["reason"] = EXIT_CONFIG, "config-error", str(exc)
    except DHYMError as exc:
        code, report["status"] = EXIT_SOLVER, "solver-failure"
        report["reason"] = f"{type(exc).__name__}: {exc}"
    finally:
        set_jobs(1)
    report["seconds"] = time.perf_counter() - t0
    report["exit_code"] = code
    report["artifacts"] = {str(p.relative_to(out)): file_sha256(p)
                           for p in sorted(out.rglob("*"))
                           if p.is_file() and p.name not in ("manifest.json", "audits.json")}
    if "audits" in report:
        write_json(out / "audits.json", {"manifest_hash": report["manifest_hash"],
                                         **report["audits"]})
    write_json(out / "manifest.json", report)
    return code


def emit_plot_data(run_dir) -> list[Path]:
    """Write plot-ready two-column CSV series from a finished run directory."""
    run = Path(run_dir)
    written = []
    summary = run / "summary.csv"
    if summary.exists():
        rows = read_csv(summary)
        if rows and "c_t" in rows[0]:
            rows = sorted(rows, key=lambda r: float(r["t"]))
            written.append(write_csv(run / "plot_t_ct.csv", ["t", "c_t"],
                                     [[float(r["t"]), float(r["c_t"])] for r in rows]))
            if "K" in rows[0]:
                written.append(write_csv(run / "plot_t_K.csv", ["t", "K"],
                                         [[float(r["t"]), float(r["K"])] for r in rows]))
    levels = run / "levels.csv"
    if levels.exists():
        rows = read_csv(levels)
        written.append(write_csv(run / "plot_s_mass.csv", ["s", "mass"],
                                 [[float(r["s"]), float(r["mass"])] for r in rows]))
    stab = run / "stability.csv"
    if stab.exists():
        rows = read_csv(stab)
        written.append(write_csv(run / "plot_log_plus_sup.csv",
                                 ["log_plus_norm", "log_sup_diff"],
                                 [[math.log(float(r["plus_norm"])),
                                   math.log(float(r["sup_diff"]))] for r in rows]))
    if not written:
        raise FileNotFoundError(f"no plottable artifacts in {run}")
    return written


def main(argv=None) -> int:
    p = argparse.ArgumentParser(prog="dhym", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="execute a JSON run configuration")
    r.add_argument("--config", required=True)
    r.add_argument("--jobs", type=int, default=1)
    r.add_argument("--out")
    v = sub.add_parser("verify", help="run a randomised verification suite")
    v.add_argument("--suite", required=True, choices=SUITES)
    v.add_argument("--samples", type=int, default=10000)
    v.add_argument("--seed", type=int, required=True)
    v.add_argument("--out")
    pl = sub.add_parser("plot", help="emit plot-ready CSV series for a run")
    pl.add_argument("--run", required=True)
    sub.add_parser("schema", help="print the configuration JSON schema")
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")

    if args.command == "schema":
        print(json.dumps(CONFIG_SCHEMA, indent=2))
        return EXIT_OK
    if args.command == "plot":
        try:
            for path in emit_plot_data(args.run):
                print(path)
        except FileNotFoundError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        return EXIT_OK
    try:
        if args.command == "run":
            cfg = load_config(args.config)
            out, jobs = args.out, args.jobs
        else:
            cfg = {"mode": "verify", "seed": args.seed,
                   "verify": {"suite": args.suite, "samples": args.samples}}
            validate_config(cfg)
            out, jobs = args.out, 1
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = resolve_out(cfg, out)
    code = execute(cfg, out, jobs)
    print(json.dumps({"exit_code": code, "out": str(out)}))
    return code


if __name__ == "__main__":
    sys.exit(main())
