"""End-to-end command line behavior and exit codes."""
import json
import subprocess
import sys
from pathlib import Path

import pytest

from conftest import CORPUS, ROOT


def run_cli(*args, cwd=None):
    env = {"PYTHONPATH": str(ROOT / "src"), "PATH": "/usr/bin:/bin"}
    return subprocess.run(
        [sys.executable, "-m", "asp.cli", *args],
        capture_output=True, text=True, cwd=cwd or ROOT, env=env)


def test_check_ok_exit_zero():
    r = run_cli("check", str(CORPUS / "auction.asp"))
    assert r.returncode == 0
    assert json.loads(r.stdout)["status"] == "ok"


def test_check_ghost_leak_exit_one(tmp_path):
    bad = tmp_path / "bad.asp"
    bad.write_text("""
contract C() {
  msg poke;
  ghost var seen: int;
  initial A;
  state A:
  | x??poke when seen > 0 -> A { }
}
""", encoding="utf-8")
    r = run_cli("check", str(bad))
    assert r.returncode == 1
    diag = json.loads(r.stdout.splitlines()[0])
    assert diag["code"] == "GhostLeak"
    assert diag["severity"] == "error"
    assert diag["line"] > 0


def test_missing_file_exit_two():
    r = run_cli("check", "no_such_file.asp")
    assert r.returncode == 2


def test_simulate_golden_trace(tmp_path):
    r = run_cli("simulate", str(CORPUS / "etherstore_attack.asp"),
                "--script", str(CORPUS / "etherstore_attack.aspscript"),
                "--reentrancy-limit", "1")
    assert r.returncode == 0
    rules = [json.loads(line)["rule"] for line in r.stdout.splitlines()]
    assert rules == ["EnvInput", "SyncPush", "Pop", "SyncPush", "SyncPush",
                     "Pop", "LocalTau", "LocalTau", "Pop", "Pop"]


def test_simulate_failed_assert_exit_one(tmp_path):
    script = tmp_path / "bad.aspscript"
    script.write_text("""
new auction = SimpleAuction(bene, 10) by alice
input auction start from alice
assert auction @AuctionClosed
""", encoding="utf-8")
    r = run_cli("simulate", str(CORPUS / "auction.asp"), "--script", str(script))
    assert r.returncode == 1


def test_compile_writes_only_into_out(tmp_path):
    out = tmp_path / "artifacts"
    r = run_cli("compile", str(CORPUS / "auction.asp"),
                "--out", str(out), "--dump-ir")
    assert r.returncode == 0
    payload = json.loads(r.stdout)
    written = {Path(p).name for p in payload["outputs"]}
    assert written == {"SimpleAuction.sol", "ir.json"}
    for p in payload["outputs"]:
        assert Path(p).is_relative_to(out)
    # determinism: byte-identical on a second run
    first = (out / "SimpleAuction.sol").read_bytes()
    assert run_cli("compile", str(CORPUS / "auction.asp"),
                   "--out", str(out)).returncode == 0
    assert (out / "SimpleAuction.sol").read_bytes() == first


def test_prove_valid_exit_zero(tmp_path):
    r = run_cli("prove", str(CORPUS / "auction.asp"),
                "--proof", str(CORPUS / "auction_closed.aspproof"),
                "--bounds", "addr=3,nat=4,timer=4",
                "--out", str(tmp_path), "--smt-out")
    assert r.returncode == 0
    report = json.loads(r.stdout)
    assert report["valid"] is True
    assert {v["status"] for v in report["vcs"]} == {"valid"}
    smt_files = list(tmp_path.glob("*.smt2"))
    assert smt_files and all(f.name.startswith("auction_closed.") for f in smt_files)


def test_prove_invalid_exit_one():
    r = run_cli("prove", str(CORPUS / "vending_machine.asp"),
                "--proof", str(CORPUS / "vending_lockout_original.aspproof"),
                "--bounds", "addr=3,nat=3,timer=3")
    assert r.returncode == 1
    report = json.loads(r.stdout)
    assert report["valid"] is False
    assert "Choose" in report["failed_obligations"]


def test_diff_clean_exit_zero(tmp_path):
    r = run_cli("diff", str(CORPUS / "auction.asp"),
                "--script", str(CORPUS / "auction_happy.aspscript"),
                "--trials", "25", "--out", str(tmp_path))
    assert r.returncode == 0
    payload = json.loads(r.stdout)
    assert payload["divergences"] == 0
    report = json.loads((tmp_path / "diff_report.json").read_text())
    assert report["trials"] == 25
