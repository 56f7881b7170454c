"""Golden CLI outputs for the shipped fixtures.

Run ``python3 tests/golden.py`` to regenerate after an intended change.
"""
from __future__ import annotations

import json
from pathlib import Path

from click.testing import CliRunner

from spgeq.cli import main

ROOT = Path(__file__).resolve().parent.parent
FIX = ROOT / "fixtures"
GOLDEN = FIX / "golden"

# name, arguments, expected exit status
CASES = [
    ("ex21_solve", ["solve", "fixtures/ex21.json"], 0),
    ("ex21_analyze", ["analyze", "fixtures/ex21.json", "--format", "csv"], 0),
    ("ex22_solve", ["solve", "fixtures/ex22.json", "--format", "csv"], 0),
    ("ex22_analyze", ["analyze", "fixtures/ex22.json", "--format", "json"], 0),
    ("c1_validate", ["validate", "fixtures/c1.json"], 0),
    ("c1_solve", ["solve", "fixtures/c1.json", "--format", "csv"], 0),
    ("c2_solve", ["solve", "fixtures/c2.json", "--format", "csv"], 0),
    ("c2_analyze", ["analyze", "fixtures/c2.json"], 0),
    ("c2_swap", ["swap", "fixtures/c2.json", "--middle", "k"], 0),
    ("c3_solve", ["solve", "fixtures/c3.json", "--format", "csv"], 0),
    ("shortcut_e_solve", ["solve", "fixtures/shortcut_e.json", "--format", "csv"], 0),
    ("shortcut_e_validate", ["validate", "fixtures/shortcut_e.json"], 0),
    ("f6_two_market", ["two-market", "--network", "fixtures/f6.json", "--format", "csv"], 0),
    ("f6_solve", ["solve", "fixtures/f6.json"], 4),
    ("f7_solve", ["solve", "fixtures/f7.json"], 4),
    ("f7_demo", ["demo", "msspg", "--format", "csv"], 0),
    ("f8_validate", ["validate", "fixtures/f8.json"], 3),
    ("f8_demo", ["demo", "dag", "--format", "csv"], 0),
    ("bridge_validate", ["validate", "fixtures/bridge.json"], 3),
    ("ex21_sweep", ["sweep", "fixtures/ex21.json", "--range", "3:11:2", "--format", "csv"], 0),
]


def run_case(args):
    runner = CliRunner()
    res = runner.invoke(main, args, env={"SPGEQ_FORMAT": None}, catch_exceptions=False)
    return res.exit_code, res.stdout, res.stderr


def regenerate():
    GOLDEN.mkdir(exist_ok=True)
    import os

    os.chdir(ROOT)
    manifest = []
    for name, args, want in CASES:
        code, out, err = run_case(args)
        if code != want:
            raise SystemExit("%s exited %d, expected %d: %s" % (name, code, want, err))
        (GOLDEN / (name + ".out")).write_text(out + err, encoding="utf-8")
        manifest.append({"name": name, "args": args, "exit": want})
    (GOLDEN / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


if __name__ == "__main__":
    regenerate()
