import csv
import json
import shutil
import subprocess

import pytest
from conftest import random_payload

from neuperm.archive import load_archive, save_archive
from neuperm.cli import main
from neuperm.descriptor import descriptor_to_dict
from neuperm.fixtures import llama32_1b_descriptor, ss_host, toy_mlp, vgg11_descriptor
from neuperm.inference import network_to_dict

MANIFEST_KEYS = {
    "argv", "command", "details", "inputs", "outputs", "seed", "timestamp_utc", "tool",
}


@pytest.fixture(scope="module")
def ws(tmp_path_factory):
    """File-backed workspace: two models plus payload files, written once."""
    root = tmp_path_factory.mktemp("cliws")
    out = {"root": root}
    for name, bundle in (("mlp", toy_mlp()), ("host", ss_host(width=128, layers=3))):
        archive, desc, net = bundle
        save_archive(archive, root / f"{name}.safetensors")
        (root / f"{name}.desc.json").write_text(json.dumps(descriptor_to_dict(desc)))
        (root / f"{name}.net.json").write_text(json.dumps(network_to_dict(net)))
        out[name] = root / f"{name}.safetensors"
        out[f"{name}.desc"] = root / f"{name}.desc.json"
        out[f"{name}.net"] = root / f"{name}.net.json"
    payload = root / "payload16.bin"
    payload.write_bytes(random_payload(77, 16))
    out["payload"] = payload
    big = root / "payload125.bin"
    big.write_bytes(random_payload(78, 125))
    out["big_payload"] = big
    return out


def run(*argv) -> int:
    return main([str(a) for a in argv])


# ------------------------------------------------------------- sanitize

def test_sanitize_neuperm_verify_manifest(ws, tmp_path, capsys):
    out = tmp_path / "clean.safetensors"
    manifest = tmp_path / "run.json"
    rc = run(
        "sanitize", "--input", ws["mlp"], "--output", out,
        "--disrupt", "neuperm", "--descriptor", ws["mlp.desc"],
        "--seed", "31", "--verify", "--net", ws["mlp.net"],
        "--manifest", manifest,
    )
    captured = capsys.readouterr()
    assert rc == 0
    assert captured.out.startswith("sanitize neuperm:1 seed=31 coverage=100.00%")
    assert "verified(max_dev=" in captured.out
    rewritten = load_archive(out)
    assert rewritten.param_count == 450

    doc = json.loads(manifest.read_text())
    assert set(doc) == MANIFEST_KEYS
    assert doc["tool"] == "neuperm" and doc["command"] == "sanitize"
    assert doc["seed"] == 31
    assert doc["details"]["coverage"]["percent"] == 100.0
    assert str(ws["mlp"]) in doc["inputs"] and str(out) in doc["outputs"]


def test_sanitize_unseeded_replay_byte_identical(ws, tmp_path, capsys):
    first = tmp_path / "a.safetensors"
    manifest = tmp_path / "a.json"
    assert run(
        "sanitize", "--input", ws["mlp"], "--output", first,
        "--disrupt", "neuperm", "--descriptor", ws["mlp.desc"],
        "--manifest", manifest,
    ) == 0
    seed = json.loads(manifest.read_text())["seed"]

    replay = tmp_path / "b.safetensors"
    assert run(
        "sanitize", "--input", ws["mlp"], "--output", replay,
        "--disrupt", "neuperm", "--descriptor", ws["mlp.desc"],
        "--seed", str(seed),
    ) == 0
    assert first.read_bytes() == replay.read_bytes()

    fresh = tmp_path / "c.safetensors"
    assert run(
        "sanitize", "--input", ws["mlp"], "--output", fresh,
        "--disrupt", "neuperm", "--descriptor", ws["mlp.desc"],
    ) == 0
    assert fresh.read_bytes() != first.read_bytes()
    capsys.readouterr()


def test_sanitize_none_is_byte_identity(ws, tmp_path, capsys):
    out = tmp_path / "copy.safetensors"
    assert run("sanitize", "--input", ws["mlp"], "--output", out,
               "--disrupt", "none", "--seed", "1") == 0
    assert out.read_bytes() == ws["mlp"].read_bytes()
    capsys.readouterr()


def test_sanitize_verify_failure_exit_2_no_output(ws, tmp_path, capsys):
    out = tmp_path / "never.safetensors"
    rc = run(
        "sanitize", "--input", ws["mlp"], "--output", out,
        "--disrupt", "noise:0.5", "--seed", "3",
        "--verify", "--net", ws["mlp.net"],
    )
    captured = capsys.readouterr()
    assert rc == 2
    assert "outputs diverged" in captured.err
    assert not out.exists()


def test_sanitize_missing_net_sidecar(ws, tmp_path, capsys):
    rc = run(
        "sanitize", "--input", ws["mlp"], "--output", tmp_path / "o.safetensors",
        "--disrupt", "none", "--verify",
    )
    captured = capsys.readouterr()
    assert rc == 1 and "no net sidecar" in captured.err


def test_sanitize_unknown_disruptor_exit_1(ws, tmp_path, capsys):
    out = tmp_path / "never.safetensors"
    rc = run("sanitize", "--input", ws["mlp"], "--output", out, "--disrupt", "bogus:1")
    captured = capsys.readouterr()
    assert rc == 1
    assert "unknown disruptor spec" in captured.err
    assert not out.exists()


def test_sanitize_corrupt_archive_exit_1(ws, tmp_path, capsys):
    junk = tmp_path / "junk.safetensors"
    junk.write_bytes(b"\xff" * 64)
    out = tmp_path / "never.safetensors"
    rc = run("sanitize", "--input", junk, "--output", out, "--disrupt", "none")
    captured = capsys.readouterr()
    assert rc == 1
    assert "error:" in captured.err
    assert not out.exists()


def test_usage_error_exit_1(capsys):
    assert run("sanitize", "--output", "x") == 1
    assert run("frobnicate") == 1
    capsys.readouterr()


# --------------------------------------------------------------- attack

def test_attack_lsb_then_evaluate(ws, tmp_path, capsys):
    carrier = tmp_path / "carrier.safetensors"
    plan = tmp_path / "plan.json"
    rc = run(
        "attack", "--input", ws["mlp"], "--output", carrier,
        "--attack", "lsb:2", "--ecc", "hamming74",
        "--payload", ws["payload"], "--seed", "7", "--plan", plan,
    )
    captured = capsys.readouterr()
    assert rc == 0
    assert "attack lsb:2 ecc=hamming74 seed=7 payload=16B" in captured.out
    doc = json.loads(plan.read_text())
    assert doc["method"] == "lsb" and doc["bits_per_param"] == 2
    assert doc["payload_len"] == 16

    report = tmp_path / "report.csv"
    rc = run(
        "evaluate", "--carrier", carrier, "--plan", plan,
        "--disrupt", "none", "--disrupt", "neuperm:1",
        "--descriptor", ws["mlp.desc"], "--trials", "3",
        "--seed", "5", "--output", report,
    )
    captured = capsys.readouterr()
    assert rc == 0
    assert "evaluate 4 attempts, 1 extractions succeeded" in captured.out
    lines = report.read_text().splitlines()
    assert lines[0] == "method,param,snr_db,extraction_success"
    assert lines[1] == "none,0,,1"
    assert lines[2:] == ["neuperm,1,,0"] * 3


def test_attack_sign_then_evaluate_deterministic_collapse(ws, tmp_path, capsys):
    carrier = tmp_path / "carrier.safetensors"
    plan = tmp_path / "plan.json"
    assert run(
        "attack", "--input", ws["mlp"], "--output", carrier,
        "--attack", "sign", "--payload", ws["payload"],
        "--seed", "9", "--plan", plan,
    ) == 0

    report = tmp_path / "report.csv"
    manifest = tmp_path / "eval.json"
    rc = run(
        "evaluate", "--carrier", carrier, "--plan", plan,
        "--disrupt", "none", "--disrupt", "prune:0.5",
        "--trials", "5", "--seed", "5", "--output", report,
        "--manifest", manifest,
    )
    capsys.readouterr()
    assert rc == 0
    # both disruptors are deterministic: one variant each despite --trials 5
    rows = report.read_text().splitlines()
    assert rows == [
        "method,param,snr_db,extraction_success",
        "none,0,,1",
        "prune,0.5,,0",
    ]
    doc = json.loads(manifest.read_text())
    assert doc["details"]["attempts"] == 2 and doc["details"]["successes"] == 1


def test_attack_ss_then_evaluate(ws, tmp_path, capsys):
    carrier = tmp_path / "carrier.safetensors"
    plan = tmp_path / "plan.json"
    rc = run(
        "attack", "--input", ws["host"], "--output", carrier,
        "--attack", "ss:0.02", "--ecc", "repetition:3",
        "--payload", ws["payload"], "--seed", "13", "--plan", plan,
    )
    capsys.readouterr()
    assert rc == 0
    doc = json.loads(plan.read_text())
    assert doc["method"] == "ss" and doc["ss"]["gamma"] == 0.02

    report = tmp_path / "report.csv"
    rc = run(
        "evaluate", "--carrier", carrier, "--plan", plan,
        "--disrupt", "none", "--disrupt", "noise:0.0001", "--disrupt", "neuperm:1",
        "--descriptor", ws["host.desc"], "--trials", "2",
        "--seed", "6", "--output", report,
    )
    capsys.readouterr()
    assert rc == 0
    with open(report, newline="") as fh:
        rows = list(csv.DictReader(fh))
    by_method = {}
    for r in rows:
        by_method.setdefault(r["method"], []).append(r)
    assert len(by_method["none"]) == 1
    assert len(by_method["noise"]) == 2 and len(by_method["neuperm"]) == 2
    for r in by_method["none"] + by_method["noise"]:
        assert r["extraction_success"] == "1"
        assert float(r["snr_db"]) > 0
    for r in by_method["neuperm"]:
        assert r["extraction_success"] == "0"
        assert float(r["snr_db"]) < 0
    # snr column uses fixed 4-decimal formatting
    assert all("." in r["snr_db"] and len(r["snr_db"].split(".")[1]) == 4 for r in rows)


def test_attack_capacity_exit_3_no_output(ws, tmp_path, capsys):
    out = tmp_path / "never.safetensors"
    rc = run(
        "attack", "--input", ws["mlp"], "--output", out,
        "--attack", "lsb", "--payload", ws["big_payload"], "--seed", "1",
    )
    captured = capsys.readouterr()
    assert rc == 3
    assert "need 1000 positions but host has only 450" in captured.err
    assert not out.exists()


def test_attack_bad_specs_exit_1(ws, tmp_path, capsys):
    out = tmp_path / "never.safetensors"
    for spec in ("warp:3", "ss", "sign:2"):
        rc = run("attack", "--input", ws["mlp"], "--output", out,
                 "--attack", spec, "--payload", ws["payload"], "--seed", "1")
        assert rc == 1, spec
        assert not out.exists()
    rc = run("attack", "--input", ws["mlp"], "--output", out,
             "--attack", "lsb", "--payload", ws["payload"],
             "--ecc", "repetition:2", "--seed", "1")
    assert rc == 1
    capsys.readouterr()


def test_attack_empty_payload_exit_1(ws, tmp_path, capsys):
    empty = tmp_path / "empty.bin"
    empty.write_bytes(b"")
    rc = run("attack", "--input", ws["mlp"], "--output", tmp_path / "o.safetensors",
             "--attack", "lsb", "--payload", empty, "--seed", "1")
    captured = capsys.readouterr()
    assert rc == 1 and "payload file is empty" in captured.err


# ---------------------------------------------------------------- bound

def test_bound_golden_line(capsys):
    assert run("bound", "--d", "0.99", "--L", "1000") == 0
    out = capsys.readouterr().out
    assert out == "success_bound 4.317125e-05 (d=0.99, delta=0, L=1000)\n"


def test_bound_composite_pipeline(capsys):
    rc = run(
        "bound", "--site-sizes", "10,100", "--L-prime", "1000",
        "--L-total", "1200", "--L-np", "900", "--ecc", "repetition:3",
    )
    out = capsys.readouterr().out
    assert rc == 0
    assert out == "success_bound 5.761067e-196 (d=0.1, delta=0.333333, L=700)\n"


def test_bound_simulate(tmp_path, capsys):
    manifest = tmp_path / "bound.json"
    rc = run(
        "bound", "--site-sizes", "2", "--L", "8",
        "--simulate", "2000", "--seed", "11", "--manifest", manifest,
    )
    out = capsys.readouterr().out
    assert rc == 0
    assert "success_bound 3.906250e-03 (d=0.5, delta=0, L=8)" in out
    assert "simulated " in out and "/2000 successes" in out
    doc = json.loads(manifest.read_text())
    assert doc["details"]["trials"] == 2000
    assert 0 <= doc["details"]["successes"] <= 40  # exact rate 2^-8; ~8 expected


def test_bound_inapplicable_exit_4(capsys):
    rc = run("bound", "--d", "0.5", "--delta", "0.6", "--L", "100")
    captured = capsys.readouterr()
    assert rc == 4 and "error:" in captured.err


def test_bound_ineffective_exit_4(capsys):
    rc = run("bound", "--d", "0.5", "--L-prime", "100",
             "--L-total", "1200", "--L-np", "900")
    captured = capsys.readouterr()
    assert rc == 4
    assert "NeuPerm-ineffective" in captured.err


def test_bound_usage_conflicts_exit_1(capsys):
    assert run("bound", "--L", "10") == 1  # neither d nor sizes
    assert run("bound", "--d", "0.5", "--site-sizes", "4", "--L", "10") == 1
    assert run("bound", "--d", "0.5", "--L", "10", "--L-prime", "5") == 1
    assert run("bound", "--d", "0.5", "--L", "10", "--delta", "0.1",
               "--ecc", "repetition:3") == 1
    assert run("bound", "--d", "0.5", "--L", "10", "--simulate", "100") == 1
    capsys.readouterr()


# ------------------------------------------------------- repo consistency

def test_committed_descriptors_in_sync():
    import pathlib

    repo = pathlib.Path(__file__).resolve().parent.parent
    for name, maker in (("vgg11", vgg11_descriptor), ("llama32_1b", llama32_1b_descriptor)):
        committed = json.loads((repo / "descriptors" / f"{name}.json").read_text())
        assert committed == descriptor_to_dict(maker()), name


def test_console_script(tmp_path):
    exe = shutil.which("neuperm")
    assert exe, "console script not installed"
    proc = subprocess.run(
        [exe, "bound", "--d", "0.5", "--L", "10"],
        capture_output=True, text=True, timeout=60,
    )
    assert proc.returncode == 0
    assert proc.stdout == "success_bound 9.765625e-04 (d=0.5, delta=0, L=10)\n"
