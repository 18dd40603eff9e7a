import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from pwabarrier import formats
from pwabarrier.cli import main
from pwabarrier.geometry import box
from pwabarrier.pwa import Cell, PwaDynamics
from pwabarrier.refine import refine_partition
from pwabarrier.systems import square_fixture


def write(path, obj):
    formats.write_json(path, obj)
    return str(path)


@pytest.fixture(scope="module")
def synthesized(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    sysfile = write(root / "square.json", formats.system_to_dict(square_fixture()))
    out = root / "out"
    code = main(["synthesize", sysfile, "--alpha", "1", "--budget-s", "60", "--out", str(out)])
    assert code == 0
    return root, sysfile, out


def run(argv, capsys):
    code = main(argv)
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def test_synthesize_outputs(synthesized, capsys):
    _, _, out = synthesized
    assert (out / "barrier.json").exists() and (out / "system.json").exists()
    doc = json.loads((out / "barrier.json").read_text())
    assert set(doc) == {"alpha", "eps", "cells", "partition_hash"}
    assert doc["alpha"] == 1.0 and len(doc["cells"]) == 4


def test_round_trip_is_byte_identical(synthesized, tmp_path):
    _, _, out = synthesized
    text = (out / "system.json").read_text()
    d = formats.system_from_dict(json.loads(text))
    assert formats.canonical_json(formats.system_to_dict(d)) + "\n" == text
    btext = (out / "barrier.json").read_text()
    b, alpha, eps, digest = formats.barrier_from_dict(json.loads(btext))
    again = formats.canonical_json(formats.barrier_to_dict(b, d, alpha, eps)) + "\n"
    assert again == btext
    assert digest == formats.partition_hash(d)


def test_check_ok(synthesized, capsys):
    _, _, out = synthesized
    code, stdout, stderr = run(["check", str(out / "system.json"), str(out / "barrier.json")], capsys)
    assert code == 0
    assert json.loads(stdout)["ok"] is True
    assert "boundary" in stderr


def test_check_corrupted_q(synthesized, tmp_path, capsys):
    _, _, out = synthesized
    doc = json.loads((out / "barrier.json").read_text())
    doc["cells"][0]["q"] += 0.25
    bad = write(tmp_path / "bad.json", doc)
    code, stdout, _ = run(["check", str(out / "system.json"), bad], capsys)
    assert code == 3
    rep = json.loads(stdout)
    assert not rep["continuity_ok"]
    assert any(v["check"] == "continuity" for v in rep["violations"])


def test_check_hash_mismatch(synthesized, tmp_path, capsys):
    _, sysfile, out = synthesized
    refined = refine_partition(square_fixture(), [0])
    other = write(tmp_path / "refined.json", formats.system_to_dict(refined))
    code, _, stderr = run(["check", other, str(out / "barrier.json")], capsys)
    assert code == 65 and "partition_hash" in stderr


def test_budget_exhausted(tmp_path, capsys):
    sysfile = write(tmp_path / "u.json", formats.system_to_dict(square_fixture(+1.0)))
    code, stdout, _ = run(["synthesize", sysfile, "--alpha", "1", "--budget-s", "1",
                           "--out", str(tmp_path / "o")], capsys)
    assert code == 2
    assert json.loads(stdout)["status"] == "budget_exhausted"
    diag = json.loads((tmp_path / "o" / "diagnostics.json").read_text())
    assert diag["history"] and diag["best_sum_tau_b"] > 1e-8
    assert not (tmp_path / "o" / "barrier.json").exists()


def test_bisect_alpha_paths(synthesized, tmp_path, capsys):
    _, sysfile, _ = synthesized
    code, stdout, _ = run(["bisect-alpha", sysfile, "--interval", "0.001", "0.5",
                           "--probe-budget-s", "30", "--out", str(tmp_path / "b")], capsys)
    assert code == 0
    last = json.loads(stdout.strip().splitlines()[-1])
    assert last["best_alpha"] == 0.5 and last["extend_interval"]
    assert (tmp_path / "b" / "barrier.json").exists()

    unstable = write(tmp_path / "u.json", formats.system_to_dict(square_fixture(+1.0)))
    code, stdout, _ = run(["bisect-alpha", unstable, "--interval", "0.5", "1",
                           "--probe-budget-s", "0.5"], capsys)
    assert code == 4
    assert json.loads(stdout.strip().splitlines()[-1])["status"] == "no_valid_alpha"


def test_simulate_csv(synthesized, capsys):
    _, _, out = synthesized
    code, stdout, _ = run(["simulate", str(out / "system.json"), "--x0", "0.5,0.25", "--T", "1",
                           "--dt", "0.01", "--barrier", str(out / "barrier.json")], capsys)
    assert code == 0
    rows = list(csv.reader(io.StringIO(stdout)))
    assert rows[0] == ["t", "x1", "x2", "h"]
    assert len(rows) == 102
    assert float(rows[-1][1]) == pytest.approx(0.5 * np.exp(-1), abs=1e-8)


def test_simulate_outside_domain(synthesized, capsys):
    _, sysfile, _ = synthesized
    code, _, _ = run(["simulate", sysfile, "--x0", "3,0", "--T", "1"], capsys)
    assert code == 66


def test_simulate_bad_x0(synthesized, capsys):
    _, sysfile, _ = synthesized
    assert run(["simulate", sysfile, "--x0", "1,2,3"], capsys)[0] == 64
    assert run(["simulate", sysfile, "--x0", "a,b"], capsys)[0] == 64


def test_levelset_closed(synthesized, capsys):
    _, _, out = synthesized
    code, stdout, _ = run(["levelset", str(out / "system.json"), str(out / "barrier.json")], capsys)
    assert code == 0
    rows = list(csv.reader(io.StringIO(stdout)))[1:]
    ends = [(round(float(r[1]), 9), round(float(r[2]), 9)) for r in rows]
    ends += [(round(float(r[3]), 9), round(float(r[4]), 9)) for r in rows]
    assert rows and all(ends.count(p) == 2 for p in ends)


def test_levelset_4d(tmp_path, capsys):
    d = PwaDynamics([Cell(0, -np.eye(4), np.zeros(4), region=box([-1] * 4, [1] * 4))])
    sysfile = write(tmp_path / "d4.json", formats.system_to_dict(d))
    code, _, _ = run(["levelset", sysfile, sysfile], capsys)
    assert code == 68


def _net(m, rng):
    return {"W1": rng.normal(size=(m, 2)).tolist(), "b1": rng.normal(scale=0.3, size=m).tolist(),
            "W2": rng.normal(size=(2, m)).tolist(), "b2": [0.0, 0.0],
            "box_lo": [-1.0, -1.0], "box_hi": [1.0, 1.0]}


def test_relu2pwa(tmp_path, rng, capsys):
    netfile = write(tmp_path / "net.json", _net(4, rng))
    out = tmp_path / "pwa.json"
    code, stdout, _ = run(["relu2pwa", netfile, "--out", str(out)], capsys)
    assert code == 0
    d = formats.system_from_dict(json.loads(out.read_text()))
    assert json.loads(stdout)["cells"] == d.n_cells
    assert json.loads(stdout)["partition_hash"] == formats.partition_hash(d)


def test_relu2pwa_too_many_neurons(tmp_path, rng, capsys):
    netfile = write(tmp_path / "net.json", _net(26, rng))
    assert run(["relu2pwa", netfile, "--out", str(tmp_path / "x.json")], capsys)[0] == 67
    assert run(["synthesize", netfile, "--alpha", "1", "--out", str(tmp_path / "o")], capsys)[0] == 67


def test_truncated_json(synthesized, tmp_path, capsys):
    _, sysfile, _ = synthesized
    text = open(sysfile).read()
    cut = tmp_path / "cut.json"
    cut.write_text(text[: len(text) // 2])
    code, _, stderr = run(["export-lp", str(cut), "--alpha", "1"], capsys)
    assert code == 64 and "invalid JSON" in stderr


def test_bad_arguments(synthesized, capsys):
    _, sysfile, _ = synthesized
    assert run(["synthesize", sysfile], capsys)[0] == 64
    assert run(["nonsense"], capsys)[0] == 64
    assert run(["export-lp", sysfile, "--alpha", "1", "--eps", "1,2"], capsys)[0] == 64
    assert run(["export-lp", sysfile, "--alpha", "-1"], capsys)[0] == 64


def test_export_lp(synthesized, tmp_path, capsys):
    _, sysfile, _ = synthesized
    code, stdout, _ = run(["export-lp", sysfile, "--alpha", "1"], capsys)
    assert code == 0
    assert stdout.startswith("\\") and "Subject To" in stdout


def test_module_entry_point(synthesized):
    _, sysfile, _ = synthesized
    proc = subprocess.run([sys.executable, "-m", "pwabarrier", "export-lp", sysfile, "--alpha", "1"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0 and "End" in proc.stdout
