from __future__ import annotations

import json
from pathlib import Path

import pytest

from cslv.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, main

CORPUS = Path(__file__).resolve().parent.parent / "corpus"


def cli(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def json_objects(text: str) -> list[dict]:
    return [json.loads(line) for line in text.splitlines() if line.strip()]


# ---------------------------------------------------------------------------
# Exit codes
# ---------------------------------------------------------------------------


def test_verify_semaphore_ok(capsys):
    code, out, _ = cli(capsys, "verify", CORPUS / "semaphore.csl", "--format", "json")
    assert code == EXIT_OK
    objs = {o["spec"]: o for o in json_objects(out)}
    assert set(objs) == {"semaphore", "semaphore_once"}
    assert all(o["verdict"] == "valid" for o in objs.values())


def test_verify_race_fails(capsys):
    code, out, _ = cli(capsys, "verify", CORPUS / "race.csl")
    assert code == EXIT_FAIL
    assert "postcondition-violated" in out


def test_verify_plain_program(capsys):
    code, out, _ = cli(capsys, "verify", CORPUS / "counter.csl", "--format", "json")
    assert code == EXIT_OK
    (obj,) = json_objects(out)
    assert obj["verdict"] == "valid"


def test_check_proof_stack_dcsl_names_overlap(capsys):
    code, out, _ = cli(capsys, "check-proof", CORPUS / "stack_par.deriv", "--mode", "dcsl")
    assert code == EXIT_FAIL
    assert "{y, z}" in out


def test_check_proof_stack_csl_accepts(capsys):
    code, _, _ = cli(capsys, "check-proof", CORPUS / "stack_par.deriv")
    assert code == EXIT_OK


def test_parse_empty_file_is_usage_error(tmp_path, capsys):
    empty = tmp_path / "empty.csl"
    empty.write_text("// nothing here\n")
    code, _, err = cli(capsys, "parse", empty)
    assert code == EXIT_USAGE and "empty" in err


def test_parse_error_is_usage_error(tmp_path, capsys):
    bad = tmp_path / "bad.csl"
    bad.write_text("var x\nx := := 1\n")
    code, _, err = cli(capsys, "parse", bad)
    assert code == EXIT_USAGE and "bad.csl:2" in err


def test_missing_file_is_usage_error(tmp_path, capsys):
    code, _, _ = cli(capsys, "parse", tmp_path / "nope.csl")
    assert code == EXIT_USAGE


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["frobnicate"],
        ["props"],
        ["props", "--suite", "prop11"],
        ["verify", str(CORPUS / "semaphore.csl"), "--int-range=3,1"],
        ["verify", str(CORPUS / "semaphore.csl"), "--locations", "0"],
        ["verify", str(CORPUS / "semaphore.csl"), "--jobs", "0"],
    ],
)
def test_usage_errors_exit_2(argv, capsys):
    assert main(argv) == EXIT_USAGE


def test_parse_echoes_canonical_form(capsys):
    code, out, _ = cli(capsys, "parse", CORPUS / "semaphore.csl")
    assert code == EXIT_OK
    assert "spec semaphore" in out
    _, again, _ = cli(capsys, "parse", CORPUS / "semaphore.csl")
    assert again == out


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def test_json_output_is_byte_identical(capsys):
    runs = [cli(capsys, "verify", CORPUS / "stack.csl", "--format", "json")[1] for _ in range(2)]
    assert runs[0] == runs[1]
    proofs = [cli(capsys, "check-proof", CORPUS / "stack_par.deriv", "--mode", "dcsl",
                  "--format", "json")[1] for _ in range(2)]
    assert proofs[0] == proofs[1]


def test_jobs_do_not_change_output(capsys):
    one = cli(capsys, "verify", CORPUS / "semaphore.csl", "--format", "json", "--jobs", "1")[1]
    two = cli(capsys, "verify", CORPUS / "semaphore.csl", "--format", "json", "--jobs", "2")[1]
    assert one == two


def test_jobs_from_environment(monkeypatch, capsys):
    monkeypatch.setenv("CSLV_JOBS", "2")
    code, _, _ = cli(capsys, "verify", CORPUS / "semaphore.csl")
    assert code == EXIT_OK


def test_run_trace_format(capsys):
    code, out, _ = cli(capsys, "run", CORPUS / "counter.csl", "--seed", "3")
    assert code == EXIT_OK
    lines = out.splitlines()
    assert lines[0] == "main:"
    assert lines[1].startswith("0 INIT s{c=0}")
    assert lines[-1] == "STATUS terminated"
    steps = [int(line.split()[0]) for line in lines[1:-1]]
    assert steps == list(range(len(steps)))
    assert "c=2" in lines[-2]


def test_run_is_seed_deterministic(capsys):
    a = cli(capsys, "run", CORPUS / "semaphore.csl", "--seed", "7", "--max-steps", "40")[1]
    b = cli(capsys, "run", CORPUS / "semaphore.csl", "--seed", "7", "--max-steps", "40")[1]
    assert a == b


def test_props_json(capsys):
    code, out, _ = cli(capsys, "props", "--suite", "prop2", "--suite", "prop-frame",
                       "--cases", "10", "--format", "json")
    assert code == EXIT_OK
    objs = json_objects(out)
    assert [o["suite"] for o in objs] == ["prop2", "prop12"]
    assert all(o["ok"] and o["cases"] == 10 for o in objs)


def test_options_after_subcommand_and_negative_range(capsys):
    code, out, _ = cli(capsys, "verify", CORPUS / "race.csl", "--int-range=-1,2", "--format", "json")
    assert code == EXIT_FAIL
    (obj,) = json_objects(out)
    assert obj["bounds"]["int_range"] == [-1, 2]
