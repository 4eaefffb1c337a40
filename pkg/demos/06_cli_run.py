"""
Driving the command line runner
===============================

Write a configuration, run it through ``dhym run`` and read back the
summary table and manifest.
"""

import json
import math
import tempfile
from pathlib import Path

from dhym.cli import main
from dhym.io import read_csv

work = Path(tempfile.mkdtemp())
cfg = {
    "mode": "path", "seed": 0,
    "geometry": {"n": 3, "resolution": 16, "active_axes": [0]},
    "window": {"theta0": math.pi / 2},
    "schedule": [1.0, 0.5, 0.25, 0.1],
    "density": {"kind": "manufactured", "t": 1.0,
                "modes": [{"amplitude": 0.05, "wave": [1, 0, 0, 0, 0, 0], "kind": "cos"}]},
}
(work / "path.json").write_text(json.dumps(cfg))
code = main(["run", "--config", str(work / "path.json"), "--out", str(work / "run")])

for row in read_csv(work / "run" / "summary.csv"):
    print(row)
print("audits", json.loads((work / "run" / "audits.json").read_text()))
main(["plot", "--run", str(work / "run")])
