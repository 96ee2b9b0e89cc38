"""End-to-end tests for the invlag command line.

Each test drives the installed module through a subprocess, the way a
user would, and inspects exit codes plus the text or JSON reports. The
bundled fixture files double as the test corpus; a few deliberately
broken documents are written to tmp_path.
"""

from __future__ import annotations

import json
import os
import subprocess
import sys
from fractions import Fraction
from functools import lru_cache
from importlib import resources

import jsonschema
import pytest

from invlag.exprcore import ExprContext


@lru_cache(maxsize=None)
def run_cli(*args, seed=None):
    env = dict(os.environ)
    env.pop("INVLAG_SEED", None)
    if seed is not None:
        env["INVLAG_SEED"] = str(seed)
    return subprocess.run(
        [sys.executable, "-m", "invlag.cli", *args],
        capture_output=True,
        text=True,
        check=False,
        timeout=120,
        env=env,
    )


def run_json(*args, seed=None):
    result = run_cli(*args, "--format", "json", seed=seed)
    return result, json.loads(result.stdout)


@lru_cache(maxsize=None)
def schema_validator():
    text = (resources.files("invlag") / "report_schema.json").read_text()
    return jsonschema.Draft202012Validator(json.loads(text))


def assert_valid_report(payload):
    errors = list(schema_validator().iter_errors(payload))
    assert not errors, errors[0].message


def test_analyze_prints_drag_geometry_exactly():
    result = run_cli("analyze", "planar_drag")
    assert result.returncode == 0
    assert "Gamma[1,1] = 1/2*omega" in result.stdout
    assert "Gamma[2,2] = -1/2*omega" in result.stdout
    assert "Phi[1,1] = a - 1/4*omega^2" in result.stdout
    assert "Phi[1,2] = b" in result.stdout
    assert "Phi[2,1] = -b" in result.stdout
    assert "(all R entries are zero)" in result.stdout
    assert "(all theta entries are zero)" in result.stdout


def test_analyze_json_free_particle_all_zero():
    result, payload = run_json("analyze", "free2")
    assert result.returncode == 0
    assert_valid_report(payload)
    objects = payload["objects"]
    assert all(v == "0" for row in objects["Gamma"] for v in row)
    assert all(v == "0" for row in objects["Phi"] for v in row)
    assert all(v == "0" for m in objects["R"] for row in m for v in row)
    assert all(v == "0" for m in objects["theta"] for row in m for v in row)


def test_analyze_requires_explicit_mode():
    result = run_cli("analyze", "planar_drag_implicit")
    assert result.returncode == 2
    assert "explicit" in result.stderr


def test_check_dissipative_passes_on_drag_fixture():
    result = run_cli("check", "planar_drag", "--suite", "dissipative")
    assert result.returncode == 0
    assert "verdict: pass" in result.stdout


def test_check_classical_flags_phi_symmetry():
    result, payload = run_json("check", "planar_drag_euclidean",
                               "--suite", "classical")
    assert result.returncode == 1
    assert_valid_report(payload)
    cells = {cell["label"]: cell for cell in payload["report"]["cells"]}
    assert not cells["PhiSym[1,2]"]["passes"]
    assert cells["PhiSym[1,2]"]["residual"] == "2*b"


def test_check_text_and_json_agree_cell_by_cell():
    text = run_cli("check", "coupled3", "--suite", "rayleigh")
    result, payload = run_json("check", "coupled3", "--suite", "rayleigh")
    assert text.returncode == result.returncode == 1
    for cell in payload["report"]["cells"]:
        flag = "pass" if cell["passes"] else "FAIL"
        assert f"{flag}  {cell['label']}" in text.stdout


def test_check_implicit_suite_on_implicit_fixture():
    result = run_cli("check", "planar_drag_implicit", "--suite", "implicit")
    assert result.returncode == 0
    result = run_cli("check", "planar_drag", "--suite", "implicit")
    assert result.returncode == 2


def test_check_requires_candidate_section():
    result = run_cli("check", "chain4_gyro", "--suite", "classical")
    assert result.returncode == 2
    assert "'g'" in result.stderr


def test_check_thm4_verdicts_across_drag_multipliers():
    assert run_cli("check", "planar_drag", "--suite", "thm4").returncode == 0
    assert run_cli("check", "planar_drag_indefinite",
                   "--suite", "thm4").returncode == 1
    assert run_cli("check", "planar_drag_euclidean",
                   "--suite", "thm4").returncode == 1


def test_solve_reports_the_unique_diagonal_multiplier():
    result, payload = run_json("solve", "coupled3")
    assert result.returncode == 0
    assert_valid_report(payload)
    solution = payload["solution"]
    assert solution["dimension"] == 1
    assert solution["nullspace"][0]["g"] == {
        "1,1": "4", "2,2": "1", "3,3": "2*q2"}
    rep = solution["representative"]
    assert rep["det"] == "8*q2"
    assert payload["representative_report"]["passed"]


def test_solve_structural_negative_names_dead_entries():
    result, payload = run_json("solve", "chain4")
    assert result.returncode == 3
    assert_valid_report(payload)
    solution = payload["solution"]
    assert solution["definitive_negative"]
    assert solution["representative"] is None
    forced = set(solution["forced_zero"])
    assert {"g[1,3]", "g[2,3]", "g[3,3]", "g[3,4]"} <= forced


@pytest.mark.parametrize("value", ["1/2", "-1/3", "3/4"])
def test_solve_gyroscopic_negative_survives_instantiation(value):
    result = run_cli("solve", "chain4_gyro", "--instantiate", f"b={value}")
    assert result.returncode == 3


def test_solve_empty_family_is_definitively_negative(tmp_path):
    problem = {
        "n": 2,
        "parameters": ["a", "b", "omega"],
        "f": ["-a*q1 - b*q2 - omega*v1", "b*q1 - a*q2 + omega*v2"],
        "ansatz": {"suite": "thm3", "g": {"entries": {}}, "bound": 1},
    }
    path = tmp_path / "empty.json"
    path.write_text(json.dumps(problem))
    result = run_cli("solve", str(path))
    assert result.returncode == 3


def test_solve_bound_zero_exhausts_inconclusively():
    result, payload = run_json("solve", "planar_drag", "--bound", "0")
    assert result.returncode == 4
    assert_valid_report(payload)
    assert payload["solution"]["exhausted"]
    assert not payload["solution"]["definitive_negative"]


def test_solve_joint_two_form_search(tmp_path):
    problem = {
        "n": 2,
        "parameters": ["a", "b", "omega"],
        "f": ["-a*q1 - b*q2 - omega*v1", "b*q1 - a*q2 + omega*v2"],
        "ansatz": {
            "suite": "gyroscopic",
            "g": {"preset": "constant"},
            "omega": {"entries": {"1,2": ["1", "q1", "q2"]}},
            "bound": 1,
        },
    }
    path = tmp_path / "joint.json"
    path.write_text(json.dumps(problem))
    result, payload = run_json("solve", str(path))
    assert result.returncode == 0
    assert_valid_report(payload)
    assert payload["representative_report"]["passed"]


def test_reconstruct_coupled_certificate_values():
    result, payload = run_json("reconstruct", "coupled3")
    assert result.returncode == 0
    assert_valid_report(payload)
    cert = payload["certificate"]
    assert cert["kind"] == "dissipative"
    ctx = ExprContext(3)
    assert ctx.parse(cert["L"]) == ctx.parse(
        "1/2*(4*v1^2 + v2^2 + 2*q2*v3^2)")
    assert ctx.parse(cert["D"]) == ctx.parse("2*q2*v1^2*v3")
    assert payload["verify"]["passed"]


def test_reconstruct_gyroscopic_route_recovers_two_form():
    result, payload = run_json("reconstruct", "planar_drag",
                               "--suite", "gyroscopic")
    assert result.returncode == 0
    assert_valid_report(payload)
    cert = payload["certificate"]
    assert cert["kind"] == "gyroscopic"
    assert cert["omega"][0][1] == "omega"
    assert cert["D"] is None
    ctx = ExprContext(2, parameters=("a", "b", "omega"))
    assert ctx.parse(cert["L"]) == ctx.parse(
        "v1*v2 - a*q1*q2 - 1/2*b*(q2^2 - q1^2)")


def test_reconstruct_free_particle_is_classical():
    result, payload = run_json("reconstruct", "free2")
    assert result.returncode == 0
    cert = payload["certificate"]
    assert cert["kind"] == "classical"
    assert cert["D"] == "0"
    ctx = ExprContext(2)
    assert ctx.parse(cert["L"]) == ctx.parse("1/2*(v1^2 + v2^2)")


def test_reconstruct_rejects_failing_multiplier(tmp_path):
    problem = {"n": 2, "f": ["0", "0"],
               "g": [["1", "0"], ["0", "q1 + 1"]]}
    path = tmp_path / "badmult.json"
    path.write_text(json.dumps(problem))
    result, payload = run_json("reconstruct", str(path))
    assert result.returncode == 1
    assert_valid_report(payload)
    assert not payload["multiplier_report"]["passed"]
    assert "certificate" not in payload


def test_reconstruct_writes_certificate_file(tmp_path):
    out = tmp_path / "cert.json"
    result = run_cli("reconstruct", "coupled3", "--out", str(out))
    assert result.returncode == 0
    document = json.loads(out.read_text())
    assert document["verified"] is True
    assert document["kind"] == "dissipative"
    assert document["route"] == "dissipative"
    ctx = ExprContext(3)
    assert ctx.parse(document["D"]) == ctx.parse("2*q2*v1^2*v3")


def test_verify_certificates_pass_and_forward_round_trips():
    for fixture in ("planar_drag_indefinite", "planar_drag_euclidean"):
        result, payload = run_json("verify", fixture, "--forward")
        assert result.returncode == 0
        assert_valid_report(payload)
        assert payload["report"]["passed"]
        assert all(cell["passes"] for cell in payload["forward"]["cells"])
    result = run_cli("verify", "planar_drag_gyro")
    assert result.returncode == 0


def test_verify_detects_sign_flip_in_two_form(tmp_path):
    fixture = resources.files("invlag") / "fixtures" / "planar_drag_gyro.json"
    problem = json.loads(fixture.read_text())
    problem["omega"] = [["0", "-omega"], ["omega", "0"]]
    path = tmp_path / "flipped.json"
    path.write_text(json.dumps(problem))
    result, payload = run_json("verify", str(path))
    assert result.returncode == 1
    cells = {cell["label"]: cell for cell in payload["report"]["cells"]}
    ctx = ExprContext(2, parameters=("a", "b", "omega"))
    assert ctx.parse(cells["EL[1]"]["residual"]) == ctx.parse("2*omega*v2")


def test_verify_forward_reports_singular_hessian(tmp_path):
    problem = {"n": 2, "f": ["0", "0"], "L": "q1*v1", "D": "0"}
    path = tmp_path / "flat.json"
    path.write_text(json.dumps(problem))
    result = run_cli("verify", str(path), "--forward")
    assert result.returncode == 2
    assert "Hessian" in result.stderr


def test_verify_demands_disambiguation_when_both_forcings_present(tmp_path):
    fixture = resources.files("invlag") / "fixtures" / "planar_drag_gyro.json"
    problem = json.loads(fixture.read_text())
    problem["D"] = "0"
    path = tmp_path / "both.json"
    path.write_text(json.dumps(problem))
    result = run_cli("verify", str(path))
    assert result.returncode == 2
    assert "--suite" in result.stderr
    result = run_cli("verify", str(path), "--suite", "gyroscopic")
    assert result.returncode == 0


def test_parse_errors_exit_with_usage_code(tmp_path):
    bad_json = tmp_path / "broken.json"
    bad_json.write_text('{"n": 2, "f": ["0" "0"]}')
    result = run_cli("analyze", str(bad_json))
    assert result.returncode == 2
    assert "line 1" in result.stderr

    bad_expr = tmp_path / "badexpr.json"
    bad_expr.write_text(json.dumps({"n": 2, "f": ["v1 +", "0"]}))
    result = run_cli("analyze", str(bad_expr))
    assert result.returncode == 2
    assert "f[1]" in result.stderr

    unknown_field = tmp_path / "extra.json"
    unknown_field.write_text(json.dumps({"n": 1, "f": ["0"], "h": []}))
    result = run_cli("analyze", str(unknown_field))
    assert result.returncode == 2
    assert "unknown fields: h" in result.stderr

    asymmetric = tmp_path / "asym.json"
    asymmetric.write_text(json.dumps(
        {"n": 2, "f": ["0", "0"], "g": [["1", "q1"], ["0", "1"]]}))
    result = run_cli("check", str(asymmetric), "--suite", "classical")
    assert result.returncode == 2

    result = run_cli("analyze", str(tmp_path / "nowhere.json"))
    assert result.returncode == 2
    assert "no such file" in result.stderr

    result = run_cli("verify", "free2", "--instantiate", "zeta=1")
    assert result.returncode == 2
    assert "zeta" in result.stderr

    result = run_cli("check", "free2")
    assert result.returncode == 2  # --suite is mandatory


def test_seed_environment_variable_is_recorded():
    _, payload = run_json("check", "free2", "--suite", "classical", seed=7)
    assert payload["seed"] == 7
    assert payload["numeric_crosscheck"]["consistent"]


def test_file_level_format_option_is_honoured(tmp_path):
    problem = {"n": 1, "f": ["0"], "g": [["1"]],
               "options": {"format": "json"}}
    path = tmp_path / "jsonopt.json"
    path.write_text(json.dumps(problem))
    result = run_cli("check", str(path), "--suite", "classical")
    assert result.returncode == 0
    payload = json.loads(result.stdout)
    assert payload["report"]["passed"]


def test_instantiation_matches_literal_system(tmp_path):
    literal = {
        "n": 2,
        "parameters": [],
        "f": ["-1/2*q1 - 2*q2 - 3*v1", "2*q1 - 1/2*q2 + 3*v2"],
        "ansatz": {"suite": "thm3", "g": {"preset": "constant"}, "bound": 1},
    }
    path = tmp_path / "literal.json"
    path.write_text(json.dumps(literal))
    _, from_literal = run_json("solve", str(path))
    _, from_params = run_json("solve", "planar_drag", "--instantiate",
                              "a=1/2", "--instantiate", "b=2",
                              "--instantiate", "omega=3")
    lit = from_literal["solution"]
    par = from_params["solution"]
    assert lit["dimension"] == par["dimension"]
    assert [vec["g"] for vec in lit["nullspace"]] == \
        [vec["g"] for vec in par["nullspace"]]


def test_fixture_names_resolve_like_paths():
    by_name = run_cli("analyze", "free2")
    by_file = run_cli(
        "analyze", str(resources.files("invlag") / "fixtures" / "free2.json"))
    assert by_name.returncode == by_file.returncode == 0
    tail_name = by_name.stdout.splitlines()[2:]
    tail_file = by_file.stdout.splitlines()[2:]
    assert tail_name == tail_file


def test_rational_instantiation_rejects_garbage():
    result = run_cli("solve", "chain4", "--instantiate", "b=one")
    assert result.returncode == 2
    result = run_cli("solve", "chain4", "--instantiate", "b")
    assert result.returncode == 2


def test_readme_command_table_is_accurate():
    import pathlib
    import re

    readme = pathlib.Path(__file__).resolve().parents[1] / "README.md"
    rows = [line for line in readme.read_text().splitlines()
            if line.startswith("| `invlag ")]
    assert len(rows) >= 20
    for row in rows:
        command = row.split("`")[1]
        verdict = row.rsplit("|", 2)[1]
        match = re.search(r"exit (\d)", verdict)
        expected = int(match.group(1)) if match else 0
        result = run_cli(*command.split()[1:])
        assert result.returncode == expected, (command, result.stderr)
