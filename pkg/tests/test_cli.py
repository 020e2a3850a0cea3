import json
import math
import subprocess
import sys

import pytest

from mixstab.cli import ConfigError, main, parse_pauli_text

SWEEP = """
beta = 0.5
[model]
kind = "ising_chain"
n = 10
[noise]
channel = "flip"
epsilon = [0.0, 0.05]
[tripartition]
center = [4]
radii = [1, 2, 3]
[recovery]
radii = [1, 2, 3]
"""

EXPANSION = """
beta = 0.1
[model]
kind = "ising_chain"
n = 6
[expansion]
b = [1, 2, 3, 4]
a = [0]
observed = [0, 1, 0, 0]
epsilon = 0.002
"""

CLUSTER = """
beta = 0.7
[model]
kind = "cluster_chain"
n = 6
[noise]
channel = "depolarizing"
epsilon = [0.1]
[tripartition]
center = [0]
radii = [1, 2]
"""

PAULI_FILE = """# 4-qubit cluster chain
n 4
q 2
1.0 0:X 1:Z
1.0 0:Z 1:X 2:Z
1.0 1:Z 2:X 3:Z
1.0 2:Z 3:X
"""


def run(tmp_path, command, text, *extra, name="cfg.toml"):
    cfg = tmp_path / name
    cfg.write_text(text)
    out = tmp_path / "out.csv"
    code = main([command, "--config", str(cfg), "--out", str(out), *extra])
    return code, out.read_text() if out.exists() else ""


def rows_of(csv_text):
    lines = [l for l in csv_text.splitlines() if not l.startswith("#")]
    header = lines[0].split(",")
    return [dict(zip(header, l.split(","))) for l in lines[1:]]


def test_cmi_sweep(tmp_path):
    code, out = run(tmp_path, "cmi-sweep", SWEEP)
    assert code == 0
    assert out.startswith("# tool: mixstab")
    assert "# config_sha256:" in out and "nats" in out
    rows = rows_of(out)
    assert len(rows) == 6
    assert all(abs(float(r["cmi"])) < 1e-12 for r in rows if float(r["epsilon"]) == 0)
    noisy = [r for r in rows if float(r["epsilon"]) == 0.05]
    assert all(math.isfinite(float(r["xi"])) and float(r["xi"]) > 0 for r in noisy)
    assert [int(r["d_AC"]) for r in noisy] == [2, 3, 4]


def test_output_is_deterministic(tmp_path):
    _, a = run(tmp_path, "cmi-sweep", SWEEP)
    _, b = run(tmp_path, "cmi-sweep", SWEEP)
    assert a == b


def test_recover(tmp_path):
    code, out = run(tmp_path, "recover", SWEEP)
    assert code == 0
    rows = rows_of(out)
    zero = [r for r in rows if float(r["epsilon"]) == 0]
    assert all(float(r["recovery_error"]) < 1e-15 for r in zero)
    noisy = [float(r["recovery_error"]) for r in rows if float(r["epsilon"]) == 0.05]
    assert noisy[0] > noisy[1] > noisy[2]
    assert all(float(r["recovery_error"]) <= float(r["tv_no_recovery"]) + 1e-15 for r in rows)


def test_expansion(tmp_path):
    code, out = run(tmp_path, "expansion", EXPANSION)
    assert code == 0
    rows = rows_of(out)
    res = [float(r["residual"]) for r in rows]
    assert all(a > b for a, b in zip(res, res[1:]))
    assert all(float(r["abs_f_ac"]) <= float(r["f_ac_bound"]) for r in rows)
    assert float(rows[0]["kp_margin"]) > 0


def test_thresholds_without_config(capsys):
    assert main(["thresholds"]) == 0
    out = capsys.readouterr().out
    assert "eps_c" in out


def test_thresholds_known_row(tmp_path):
    code, out = run(tmp_path, "thresholds", "[thresholds]\ndegree = 1\nbeta = 0.0\nq = 2\ndepth = 1\n")
    assert code == 0
    row = rows_of(out)[0]
    assert float(row["p_min_c"]) == pytest.approx(1 + 2 * math.log(2), rel=1e-11)


def test_stabilizer_check_passes(tmp_path):
    code, out = run(tmp_path, "stabilizer-check", CLUSTER)
    assert code == 0
    assert all(r["pass"] == "true" for r in rows_of(out))


def test_stabilizer_check_reports_failures(tmp_path):
    bad = CLUSTER.replace('"depolarizing"', '"amplitude_damping"')
    code, out = run(tmp_path, "stabilizer-check", bad)
    assert code == 4
    assert any(r["check"] == "stabilizer_mixing" and r["pass"] == "false" for r in rows_of(out))
    hidden = CLUSTER.replace("center = [0]", "center = [2]").replace("radii = [1, 2]", "radii = [1]")
    code, out = run(tmp_path, "stabilizer-check", hidden)
    assert code == 4


def test_pauli_sweep_and_file(tmp_path):
    code, out = run(tmp_path, "cmi-sweep", CLUSTER)
    assert code == 0
    (tmp_path / "model.txt").write_text(PAULI_FILE)
    cfg = CLUSTER.replace('kind = "cluster_chain"\nn = 6', 'kind = "pauli_from_file"\npath = "model.txt"')
    cfg = cfg.replace("radii = [1, 2]", "radii = [1]")
    code, out = run(tmp_path, "stabilizer-check", cfg)
    assert code == 0


def test_classical_from_file(tmp_path):
    (tmp_path / "m.json").write_text(json.dumps({"n": 5, "q": 2, "hyperedges": [[0, 1], [1, 2], [2, 3], [3, 4]], "coupling": 1.0}))
    cfg = SWEEP.replace('kind = "ising_chain"\nn = 10', 'kind = "classical_from_file"\npath = "m.json"').replace("center = [4]", "center = [0]")
    code, out = run(tmp_path, "cmi-sweep", cfg)
    assert code == 0
    terms = [[0.0, 1.0, 1.0, 0.0]] * 4
    (tmp_path / "m2.json").write_text(json.dumps({"n": 5, "hyperedges": [[0, 1], [1, 2], [2, 3], [3, 4]], "terms": terms}))
    code, _ = run(tmp_path, "cmi-sweep", cfg.replace("m.json", "m2.json"))
    assert code == 0


@pytest.mark.parametrize(
    "text",
    [
        "beta = ",
        "beta = 0.5\n[model]\nkind = \"nope\"\n",
        "beta = -1\n[model]\nkind = \"ising_chain\"\nn = 4\n",
        "beta = 0.5\n[model]\nkind = \"ising_chain\"\n",
        "beta = 0.5\nextra = 1\n[model]\nkind = \"ising_chain\"\nn = 4\n",
        "beta = 0.5\n[model]\nkind = \"ising_chain\"\nn = 4\n[noise]\nepsilon = 2.0\n[tripartition]\ncenter = [0]\n",
        "beta = 0.5\n[model]\nkind = \"ising_chain\"\nn = 4\n[noise]\nchannel = \"depolarizing\"\n[tripartition]\ncenter = [0]\n",
    ],
)
def test_invalid_config_exit_2(tmp_path, text):
    code, out = run(tmp_path, "cmi-sweep", text)
    assert code == 2
    assert out == ""


def test_budget_exit_3(tmp_path):
    code, out = run(tmp_path, "cmi-sweep", SWEEP, "--budget-bits", "8")
    assert code == 3
    assert out == ""


def test_missing_config_exit_2(tmp_path):
    assert main(["cmi-sweep", "--config", str(tmp_path / "missing.toml")]) == 2


def test_pauli_text_grammar():
    h = parse_pauli_text("n 2\n-0.5 0:Z 1:Z  # coupling\n2 0:X, 1:X\n")
    assert len(h.terms) == 2 and h.terms[0][0] == -0.5
    with pytest.raises(ConfigError):
        parse_pauli_text("1.0 0:X\n")
    with pytest.raises(ConfigError):
        parse_pauli_text("n 2\nabc 0:X\n")
    with pytest.raises(ConfigError):
        parse_pauli_text("n 1\n1 0:X\n1 0:Z\n")


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "mixstab.cli", "thresholds"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "p_min_c" in proc.stdout
