import csv
import io
import json
import subprocess
import sys

import jsonschema
import pytest

from stablesup import cli


def run(argv):
    out, err = io.StringIO(), io.StringIO()
    code = cli.main(argv, out, err)
    return code, out.getvalue(), err.getvalue()


def manifest_of(err):
    lines = [json.loads(line) for line in err.splitlines() if line.strip()]
    mans = [d["manifest"] for d in lines if "manifest" in d]
    assert len(mans) == 1
    jsonschema.validate(mans[0], cli.load_schema("manifest"))
    return mans[0]


def error_of(err):
    first = json.loads(err.splitlines()[0])
    assert set(first) == {"error", "message"}
    return first["error"]


def check_json(out, schema):
    doc = json.loads(out)
    jsonschema.validate(doc, cli.load_schema(schema))
    return doc


def parse_csv(text):
    assert text.endswith("\r\n")
    # RFC 4180: CRLF line breaks throughout, no bare LF
    assert "\n" not in text.replace("\r\n", "")
    rows = list(csv.reader(io.StringIO(text, newline=""), strict=True))
    head = rows[0]
    assert all(len(r) == len(head) for r in rows)
    return head, rows[1:]


# ---------------------------------------------------------------- documented examples


def test_density_example_json():
    code, out, err = run(["density", "1.4142135623", "0.5", "1.0", "--json"])
    assert code == 0
    doc = check_json(out, "density")
    assert {"value", "method", "est_error", "verdict"} <= set(doc)
    assert doc["verdict"] == "converged"
    assert doc["value"] == pytest.approx(0.3598187798, abs=1e-8)
    assert manifest_of(err)["exit_code"] == 0


def test_density_rational_alpha_exit_2():
    code, out, err = run(["density", "1.5", "0.5", "1.0"])
    assert code == 2 and out == ""
    assert error_of(err) == "RationalAlpha"
    assert manifest_of(err)["exit_code"] == 2


def test_cf_example():
    code, out, err = run(["cf", "3.14159265358979", "--terms", "4"])
    assert code == 0
    doc = check_json(out, "cf")
    assert doc["quotients"] == [3, 7, 15, 1]
    assert doc["convergents"] == [[3, 1], [22, 7], [333, 106], [355, 113]]


# ---------------------------------------------------------------- exit codes


@pytest.mark.parametrize("argv,kind", [
    (["density", "sqrt(2)", "0.9", "1.0"], "AdmissibilityError"),
    (["density", "sqrt(2)", "1-1/sqrt(2)", "1.0"], "DoneyClass"),
    (["diag", "patho", "--levels", "5"], "LevelBudget"),
])
def test_domain_errors_exit_2(argv, kind):
    code, out, err = run(argv)
    assert code == 2 and error_of(err) == kind


def test_convergence_failure_exit_3_keeps_estimate():
    code, out, err = run(["density", "sqrt(2)", "0.5", "1.0", "--qmax", "3", "--json"])
    assert code == 3
    doc = check_json(out, "density")
    assert doc["verdict"] != "converged" and doc["warnings"]
    assert manifest_of(err)["exit_code"] == 3


@pytest.mark.parametrize("argv", [
    [], ["bogus"], ["density", "sqrt(2)", "0.5"], ["density", "sqrt(2)", "0.5", "0"],
    ["density", "sqrt(2)", "0.5", "--", "-1"], ["coeff", "sqrt(2)", "0.5", "--n", "1"],
    ["cf", "pi", "--terms", "x"], ["cf", "import os"], ["mc", "sqrt(2)", "0.5", "--paths", "0"],
    ["table", "sqrt(2)", "0.5", "--xmin", "2", "--xmax", "1"], ["rerun", "/nonexistent.json"],
])
def test_usage_errors_exit_64(argv):
    code, out, err = run(argv)
    assert code == 64
    assert error_of(err) == "UsageError"


def test_console_script_subprocess():
    p = subprocess.run([sys.executable, "-m", "stablesup.cli", "density", "1.5", "0.5", "1.0"],
                       capture_output=True, text=True)
    assert p.returncode == 2
    assert json.loads(p.stderr.splitlines()[0])["error"] == "RationalAlpha"


# ---------------------------------------------------------------- parsing


def test_parse_real():
    x, bits = cli.parse_real("1.25", None)
    assert bits == 53 and x == 1.25
    x, bits = cli.parse_real("sqrt(2)", None)
    assert bits == 256 and abs(float(x) ** 2 - 2) < 1e-15
    x, bits = cli.parse_real("2/pi + e**0.5", 120)
    assert bits == 120
    with pytest.raises(cli.UsageError):
        cli.parse_real("__import__('os')", None)


def test_assume_irrational_admits_decimal():
    code, out, _ = run(["density", "1.4142135623", "0.5", "1.0", "--json"])
    assert code == 0
    code, _, err = run(["density", "1.5", "0.5", "1.0", "--assume-irrational"])
    # the gate is lifted but 2/1.5 still has no usable cutoff
    assert error_of(err) != "RationalAlpha"


def test_precision_env(monkeypatch):
    monkeypatch.setenv("STABLESUP_PRECISION", "100")
    code, out, err = run(["cf", "pi", "--terms", "3"])
    assert code == 0 and manifest_of(err)["precision_bits"] == 100
    code, out, err = run(["cf", "pi", "--terms", "3", "--precision", "300"])
    assert manifest_of(err)["precision_bits"] == 300


# ---------------------------------------------------------------- schemas and formats


@pytest.mark.parametrize("argv,schema", [
    (["coeff", "sqrt(2)", "0.5", "--m", "2", "--n", "3", "--json"], "coeff"),
    (["coeff", "sqrt(2)", "0.5", "--m", "2", "--n", "3", "--which", "b", "--json"], "coeff"),
    (["trace", "sqrt(2)", "0.5", "1.0"], "trace"),
    (["diag", "sec", "phi", "--kmax", "6"], "diag_sec"),
    (["diag", "buslaev", "phi", "--kmax", "6"], "diag_buslaev"),
    (["diag", "patho", "--levels", "3"], "diag_patho"),
    (["diag", "audit", "sqrt(2)", "--kmax", "20"], "diag_audit"),
    (["compare", "sqrt(2)", "0.5", "--paths", "2000", "--steps", "100"], "compare"),
    (["cf", "1.5"], "cf"),
])
def test_json_outputs_validate(argv, schema):
    code, out, err = run(argv)
    assert code == 0
    doc = check_json(out, schema)
    assert isinstance(doc["warnings"], list)
    manifest_of(err)


def test_patho_big_quotient_as_digits():
    _, out, _ = run(["diag", "patho", "--levels", "3"])
    doc = json.loads(out)
    assert int(doc["quotients"][-1]) == 2 ** 1089
    assert doc["q"] == [1, 2, 33] or [int(v) for v in doc["q"]][:3] == [1, 2, 33]


def test_table_csv():
    code, out, _ = run(["table", "sqrt(2)", "0.5", "--xmin", "0.5", "--xmax", "2", "--points", "3"])
    assert code == 0
    head, rows = parse_csv(out)
    assert head == ["x", "p", "method", "est_error", "verdict", "warnings"]
    assert [float(r[0]) for r in rows] == pytest.approx([0.5, 1.0, 2.0])
    assert float(rows[1][1]) == pytest.approx(0.35981877986707, rel=1e-10)


def test_mc_csv_carries_warnings():
    code, out, err = run(["mc", "sqrt(2)", "0.5", "--paths", "1000", "--steps", "100", "--bins", "5"])
    assert code == 0
    head, rows = parse_csv(out)
    assert head[:3] == ["x", "density", "stderr"] and head[-1] == "warnings"
    man = manifest_of(err)
    assert man["seeds"] == [0]
    # tail-mass note appears both inline and in the manifest
    assert any("TailMass" in r[-1] for r in rows)
    assert any("TailMass" in w for w in man["warnings"])


def test_negative_control_flags():
    code, out, _ = run(["compare", "sqrt(2)", "0.5", "--mc-rho", "0.6", "--paths", "200000",
                        "--steps", "200"])
    doc = check_json(out, "compare")
    assert any(r["flagged"] for r in doc["rows"]) and doc["warnings"]


# ---------------------------------------------------------------- manifest and rerun


@pytest.mark.parametrize("argv,name", [
    (["density", "sqrt(2)", "0.5", "1.0", "--json"], "d.json"),
    (["table", "sqrt(3)", "0.45", "--xmin", "0.3", "--xmax", "3", "--points", "4"], "t.csv"),
    (["mc", "sqrt(2)", "0.5", "--paths", "2000", "--steps", "100", "--seed", "11"], "m.csv"),
    (["diag", "sec", "sqrt(2)", "--kmax", "5"], "s.json"),
])
def test_out_sidecar_and_rerun_bit_exact(tmp_path, argv, name):
    target = tmp_path / name
    code, out, err = run(argv + ["--out", str(target)])
    assert code == 0 and out == ""
    first = target.read_bytes()
    side = json.loads((tmp_path / (name + ".manifest.json")).read_text())
    jsonschema.validate(side, cli.load_schema("manifest"))
    assert side == manifest_of(err)
    target.unlink()
    code, _, _ = run(["rerun", str(tmp_path / (name + ".manifest.json"))])
    assert code == 0 and target.read_bytes() == first


def test_threads_do_not_change_mc():
    base = ["mc", "sqrt(2)", "0.5", "--paths", "3000", "--steps", "100", "--seed", "4"]
    _, a, _ = run(base + ["--threads", "1"])
    _, b, _ = run(base + ["--threads", "2"])
    assert a == b
