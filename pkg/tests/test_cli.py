import json
import os
from pathlib import Path

import pytest
from click.testing import CliRunner

from golden import CASES, GOLDEN, ROOT, run_case
from spgeq.cli import main


@pytest.fixture(autouse=True)
def _at_root(monkeypatch):
    monkeypatch.chdir(ROOT)


@pytest.mark.parametrize("name, args, code", CASES, ids=[c[0] for c in CASES])
def test_golden(name, args, code):
    got, out, err = run_case(args)
    assert got == code, err
    assert out + err == (GOLDEN / (name + ".out")).read_text(encoding="utf-8")


def test_manifest_lists_every_case():
    manifest = json.loads((GOLDEN / "manifest.json").read_text())
    assert [m["name"] for m in manifest] == [c[0] for c in CASES]


def test_every_fixture_has_a_golden_case():
    used = {a for _, args, _ in CASES for a in args if a.startswith("fixtures/")}
    shipped = {"fixtures/%s" % p.name for p in (ROOT / "fixtures").glob("*.json")}
    assert shipped <= used


def test_csv_rows_for_worked_example():
    _, out, _ = run_case(["solve", "fixtures/c2.json", "--format", "csv"])
    lines = out.splitlines()
    assert "arc,s->j1,5/46,3/2," in lines
    assert any(l.startswith("node,v1,") and ",39/23," in l for l in lines)


def test_deterministic():
    args = ["analyze", "fixtures/c1.json", "--format", "json"]
    assert run_case(args) == run_case(args)


def test_env_sets_default_format():
    res = CliRunner().invoke(main, ["solve", "fixtures/ex21.json"], env={"SPGEQ_FORMAT": "json"})
    assert json.loads(res.stdout)["equilibrium"][0]["quantity"] == "2"


def test_decimal_flag():
    _, out, _ = run_case(["solve", "fixtures/c2.json", "--format", "csv", "--decimal"])
    assert "arc,s->j1,0.108695652174,1.5," in out.splitlines()


def test_two_market_example():
    _, out, _ = run_case(["two-market", "--cost", "7", "--a1", "20", "--b1", "1", "--a2", "12", "--b2", "1", "--decimal"])
    assert "preferred            high" in out
    assert "21.125" in out


def test_two_market_sweep_rows():
    _, out, _ = run_case(
        ["two-market", "--cost", "7", "--a1", "12", "--b1", "1", "--a2", "12", "--b2", "1", "--sweep", "a1=12:22:1/2", "--format", "csv"]
    )
    assert len(out.splitlines()) == 1 + 2 * 21


def test_output_file(tmp_path):
    dest = tmp_path / "out.csv"
    code, out, _ = run_case(["solve", "fixtures/ex21.json", "--format", "csv", "-o", str(dest)])
    assert code == 0 and out == ""
    assert dest.read_text().startswith("kind,id,quantity")


@pytest.mark.parametrize(
    "args, code, needle",
    [
        (["solve", "fixtures/missing.json"], 2, "cannot read"),
        (["swap", "fixtures/c2.json", "--middle", "zz"], 2, "no series composition"),
        (["swap", "fixtures/shortcut_e.json", "--middle", "v"], 2, "shortcut-free"),
        (["sweep", "fixtures/c2.json", "--range", "0:3:1"], 4, "exceed"),
        (["analyze", "fixtures/f8.json"], 3, "series-parallel"),
        (["two-market", "--cost", "7", "--a1", "10", "--b1", "1", "--a2", "12", "--b2", "1"], 4, "a1 >= a2"),
    ],
)
def test_exit_codes(args, code, needle):
    got, _, err = run_case(args)
    assert got == code and needle in err


def test_invalid_document(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"nodes": ["s", "t"], "arcs": [["s", "t"], ["s", "t"]], "source": {"id": "s", "cost": "1"}, "sink": {"id": "t", "demand": "2", "slope": "1"}}')
    got, _, err = run_case(["validate", str(bad)])
    assert got == 2 and "parallel arc" in err


def test_oracle_command():
    got, out, _ = run_case(["oracle", "--count", "20", "--swaps", "5", "--format", "csv"])
    assert got == 0 and "instances,20,0" in out
