import json
import math

import numpy as np
import pytest

from dhym import cli
from dhym.io import canonical_hash, load_field, read_csv, save_field, write_csv
from dhym.torus import HermitianField, PotentialField, TorusGrid, complex_hessian

HALF_PI = math.pi / 2
COS_X = [{"amplitude": 0.05, "wave": [1, 0, 0, 0, 0, 0], "kind": "cos"}]


def base_cfg(**extra):
    cfg = {
        "mode": "solve", "seed": 0,
        "geometry": {"n": 3, "resolution": 16, "active_axes": [0]},
        "backgrounds": {"omega": {"preset": "identity"},
                        "chi": {"kind": "constant-matrix", "matrix": 1.0},
                        "chi_tilde": {"kind": "constant-matrix", "matrix": 1.0}},
        "window": {"theta0": HALF_PI},
        "t": 0.5,
        "density": {"kind": "manufactured", "modes": COS_X},
    }
    cfg.update(extra)
    return cfg


def run(tmp_path, cfg, name="cfg.json", *args):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    out = tmp_path / (name + ".out")
    code = cli.main(["run", "--config", str(p), "--out", str(out), *args])
    return code, out


# --- field files ---------------------------------------------------------------------

def test_field_round_trip(tmp_path):
    g = TorusGrid.reduced(2, 8, active=(0, 1))
    x, y = g.coords()[:2]
    phi = PotentialField(g, np.cos(x) * np.sin(y))
    save_field(tmp_path / "phi", phi, "test")
    back = load_field(tmp_path / "phi")
    assert np.array_equal(back.values, phi.values) and back.grid.shape == g.shape
    H = HermitianField.identity(g) + complex_hessian(phi)
    save_field(tmp_path / "H", H)
    assert np.array_equal(load_field(tmp_path / "H").entries, H.entries)
    meta = json.loads((tmp_path / "H.json").read_text())
    assert meta["kind"] == "hermitian" and meta["shape"][-1] == 2


def test_field_checksum(tmp_path):
    g = TorusGrid.reduced(2, 4)
    save_field(tmp_path / "z", PotentialField(g, np.arange(float(np.prod(g.shape))).reshape(g.shape)))
    raw = bytearray((tmp_path / "z.bin").read_bytes())
    raw[3] ^= 1
    (tmp_path / "z.bin").write_bytes(bytes(raw))
    with pytest.raises(ValueError):
        load_field(tmp_path / "z")


def test_csv_and_hash(tmp_path):
    write_csv(tmp_path / "a.csv", ["x", "y"], [[0.1, 1], [1 / 3, 2]])
    rows = read_csv(tmp_path / "a.csv")
    assert float(rows[1]["x"]) == 1 / 3
    assert canonical_hash({"a": 1, "b": 2}) == canonical_hash({"b": 2, "a": 1})


# --- configuration -------------------------------------------------------------------

def test_validate_rejects_bad_window():
    cfg = base_cfg(window={"theta0": 2.0, "Theta0": 1.0})
    with pytest.raises(cli.ConfigError):
        cli.validate_config(cfg)
    with pytest.raises(cli.ConfigError):
        cli.validate_config({"mode": "verify", "verify": {"suite": "algebra"}})
    with pytest.raises(cli.ConfigError):
        cli.validate_config(base_cfg(bogus=1))


def test_schema_command(capsys):
    assert cli.main(["schema"]) == 0
    assert "properties" in json.loads(capsys.readouterr().out)


# --- runs and exit codes -------------------------------------------------------------

def test_solve_run(tmp_path):
    code, out = run(tmp_path, base_cfg())
    assert code == 0
    man = json.loads((out / "manifest.json").read_text())
    assert man["exit_code"] == 0 and "fields/phi_t0.bin" in man["artifacts"]
    aud = json.loads((out / "audits.json").read_text())
    assert aud["manifest_hash"] == man["manifest_hash"]
    row = read_csv(out / "summary.csv")[0]
    assert float(row["residual_sup"]) <= 1e-10


def test_config_error_exit(tmp_path):
    code, _ = run(tmp_path, base_cfg(window={"theta0": 2.0, "Theta0": 1.0}))
    assert code == 4


def test_solver_failure_exit(tmp_path):
    code, out = run(tmp_path, base_cfg(solver={"max_newton": 1}))
    assert code == 2
    man = json.loads((out / "manifest.json").read_text())
    assert man["status"] == "solver-failure" and "NoConvergence" in man["reason"]


def test_audit_failure_exit(tmp_path):
    cfg = base_cfg(mode="path", schedule=[1.0, 0.5, 0.25],
                   density={"kind": "manufactured", "t": 1.0, "modes": COS_X},
                   audit={"decreasing_budget": 0.0})
    code, out = run(tmp_path, cfg)
    assert code == 3
    aud = json.loads((out / "audits.json").read_text())
    assert aud["decreasing_limit"] is False and aud["ct_monotone"] is True


def test_path_run_and_plot(tmp_path, capsys):
    cfg = base_cfg(mode="path", schedule=[1.0, 0.5, 0.25],
                   density={"kind": "manufactured", "t": 1.0, "modes": COS_X})
    code, out = run(tmp_path, cfg)
    assert code == 0
    rows = read_csv(out / "summary.csv")
    assert [float(r["t"]) for r in rows] == [1.0, 0.5, 0.25]
    ct = [float(r["c_t"]) for r in rows]
    assert ct[0] > ct[1] > ct[2]  # c_t increases with t
    assert cli.main(["plot", "--run", str(out)]) == 0
    assert read_csv(out / "plot_t_ct.csv")[0]["t"] == "0.25"
    assert cli.main(["plot", "--run", str(tmp_path / "empty")]) == 4


def test_jobs_do_not_change_output(tmp_path):
    cfg = base_cfg(mode="path", schedule=[1.0, 0.5],
                   density={"kind": "manufactured", "t": 1.0, "modes": COS_X})
    c1, o1 = run(tmp_path, cfg, "a.json", "--jobs", "1")
    c8, o8 = run(tmp_path, cfg, "b.json", "--jobs", "8")
    assert c1 == c8 == 0
    assert (o1 / "summary.csv").read_bytes() == (o8 / "summary.csv").read_bytes()
    assert (o1 / "fields/phi_t1.bin").read_bytes() == (o8 / "fields/phi_t1.bin").read_bytes()


def test_verify_command(tmp_path):
    out = tmp_path / "v"
    assert cli.main(["verify", "--suite", "degiorgi", "--samples", "500", "--seed", "1",
                     "--out", str(out)]) == 0
    assert read_csv(out / "summary.csv")[0]["violations"] == "0"
    assert read_csv(out / "violations.csv") == []


def test_envelope_and_audit_modes(tmp_path):
    cfg = base_cfg(mode="envelope", envelope={"betas": [10, 20, 40], "t_values": [0.5, 0.25]})
    code, out = run(tmp_path, cfg, "env.json")
    assert code == 0 and len(read_csv(out / "envelope.csv")) == 6
    cfg = base_cfg(mode="audit", audit={"levels": 21})
    code, out = run(tmp_path, cfg, "aud.json")
    aud = json.loads((out / "audits.json").read_text())
    assert code == 0 and aud["gradient"] is True
    assert len(read_csv(out / "levels.csv")) >= 21
    assert aud["degiorgi"] is True and aud["degiorgi_eps_tenth_passed"] is True
    assert aud["degiorgi_eps_tenth_C_rel_change"] < 0.01
