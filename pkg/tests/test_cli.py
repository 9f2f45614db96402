import json
import shutil
import subprocess
import sys

import jsonschema
import pytest

from balancedglass import mixture as mx
from balancedglass.cli import RESULT_SCHEMA, main
from balancedglass.reference import bipartite_sk_free_energy


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def bsk_file(tmp_path):
    path = tmp_path / "bsk.json"
    mx.save_model(mx.bipartite_sk(1.0), path)
    return str(path)


def test_bipartite_branch_point_prints_quarter(capsys):
    code, out, _ = run(capsys, "reference", "bipartite", "--beta", "0.70710678")
    assert code == 0
    assert out.strip() == "0.25"


def test_model_check_zero_model(capsys, tmp_path):
    path = tmp_path / "zero.json"
    path.write_text(json.dumps({"species": ["a", "b"], "lambda": ["1/2", "1/2"], "interactions": {}}))
    code, out, _ = run(capsys, "model", "check", str(path))
    assert code == 0
    assert "H3 (balanced): yes" in out
    assert "all beta_p^2 = 0" in out


def test_model_check_reports_unbalanced(capsys, tmp_path):
    path = tmp_path / "pb.json"
    mx.save_model(mx.pure_bipartite(2, 1, 1.0, lam1="1/2"), path)
    code, out, _ = run(capsys, "model", "check", str(path))
    assert code == 0 and "H3 (balanced): no" in out


def test_injnorm_csv_byte_identical(tmp_path, capsys):
    files = []
    for i in range(2):
        out = tmp_path / f"run{i}.csv"
        assert main(["tensor", "injnorm", "--p", "2", "--d", "20", "--samples", "50", "--seed", "7", "--format", "csv", "--out", str(out)]) == 0
        files.append(out.read_bytes())
    assert files[0] == files[1]
    lines = files[0].decode().splitlines()
    assert lines[0].split(",")[0] == "seed" and lines[0].split(",")[-1] == "stderr"
    assert len(lines) == 51


@pytest.mark.parametrize(
    "argv",
    [
        ["reference", "bipartite", "--beta", "1.3"],
        ["reference", "pure-bound", "--beta", "1.0", "--p", "1", "--q", "2"],
        ["simulate", "ising-exact", "--model", "{bsk}", "--N", "8", "--disorders", "5"],
        ["simulate", "spherical-gse", "--model", "{bsk}", "--N", "10", "--disorders", "2", "--restarts", "2"],
        ["simulate", "covariance", "--model", "{bsk}", "--N", "8", "--pairs", "3", "--disorders", "200"],
        ["simulate", "lipschitz", "--model-a", "{bsk}", "--model-b", "{bsk}", "--N", "6", "--disorders", "4"],
        ["simulate", "concentration", "--model", "{bsk}", "--N", "10", "--disorders", "4", "--restarts", "2"],
        ["parisi", "solve", "--model", "{bsk}", "--ensemble", "spherical", "--k", "1", "--restarts", "1", "--diagonal"],
        ["parisi", "lift-check", "--model", "{bsk}", "--paths", "3", "--max-k", "2"],
        ["tensor", "injnorm", "--p", "3", "--d", "5", "--samples", "3", "--restarts", "4"],
        ["tensor", "correspondence", "--p", "2", "--d", "5", "--samples", "5", "--restarts", "4"],
    ],
)
def test_json_output_matches_schema(capsys, bsk_file, argv):
    argv = [a.format(bsk=bsk_file) for a in argv]
    code, out, err = run(capsys, *argv, "--format", "json", "--seed", "3")
    assert code == 0, err
    doc = json.loads(out)
    jsonschema.validate(doc, RESULT_SCHEMA)
    assert doc["command"] == " ".join(argv[:2])
    assert doc["defaults"]["seed"] == 3


def test_diagonal_solve_recovers_closed_form(capsys, bsk_file):
    code, out, _ = run(capsys, "parisi", "solve", "--model", bsk_file, "--ensemble", "spherical", "--k", "2", "--restarts", "2", "--diagonal")
    assert code == 0
    assert float(out) == pytest.approx(bipartite_sk_free_energy(1.0), abs=1e-6)


def test_exit_codes(capsys, tmp_path):
    code, _, err = run(capsys, "reference", "bipartite", "--beta", "-1")
    assert code == 1
    assert json.loads(err)["error"] == "ValueError"
    code, _, err = run(capsys, "model", "check", str(tmp_path / "missing.json"))
    assert code == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(capsys, "model", "check", str(bad))[0] == 1
    assert run(capsys, "reference", "bipartite", "--beta", "1", "--seed", "-4")[0] == 1
    with pytest.raises(SystemExit) as exc:
        main(["reference", "bipartite", "--beta", "1", "--bogus"])
    assert exc.value.code == 2
    with pytest.raises(SystemExit) as exc:
        main(["nonsense"])
    assert exc.value.code == 2


def test_unbalanced_diagonal_rejected(capsys, tmp_path):
    path = tmp_path / "pb.json"
    mx.save_model(mx.pure_bipartite(2, 1, 1.0, lam1="1/2"), path)
    code, _, err = run(capsys, "parisi", "solve", "--model", str(path), "--ensemble", "spherical", "--k", "1", "--diagonal")
    assert code == 1 and "balanced" in json.loads(err)["message"]


@pytest.mark.skipif(shutil.which("balancedglass") is None, reason="console script not installed")
def test_console_script():
    proc = subprocess.run(["balancedglass", "reference", "bipartite", "--beta", "0.5"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip() == "0.125"


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "balancedglass.cli", "reference", "bipartite", "--beta", "0.5"], capture_output=True, text=True)
    assert proc.returncode == 0 and proc.stdout.strip() == "0.125"
