import json
import subprocess
import sys

import pytest

from cli_cases import CASES, EXIT, GOLDEN, expand
from longstep.cli import main, parse_k_range


@pytest.mark.parametrize("name", sorted(CASES))
def test_matches_golden(name, tmp_path, capsys):
    out = tmp_path / name
    rc = main(expand(CASES[name], out))
    assert rc == EXIT.get(name, 0)
    assert out.read_bytes() == (GOLDEN / name).read_bytes()


def test_pattern_k2_has_seven_steps(capsys):
    assert main(["pattern", "--k", "2"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert len(data["steps"]) == 7 and data["closed_form"][3] == "7+4*sqrt(2)"
    assert all(isinstance(s, str) for s in data["steps"])


def test_pattern_precision_flag(capsys):
    main(["pattern", "--k", "1", "--precision", "200"])
    assert json.loads(capsys.readouterr().out)["precision_bits"] == 200


def test_pattern_without_closed_form(capsys):
    main(["pattern", "--k", "4"])
    assert "closed_form" not in json.loads(capsys.readouterr().out)


def test_certify_range_writes_one_report_per_k(tmp_path):
    rc = main(["certify", "--k", "1..4", "--out", str(tmp_path), "--jobs", "2"])
    assert rc == 0
    files = sorted(p.name for p in tmp_path.iterdir())
    assert files == [f"report_k{k}.json" for k in range(1, 5)]
    assert all(json.loads((tmp_path / f).read_text())["passed"] for f in files)


def test_certify_zero_psd_tolerance_fails(capsys):
    assert main(["certify", "--k", "1", "--psd-tol", "0"]) == 1
    assert "failed" in capsys.readouterr().err


def test_parallel_and_serial_outputs_agree(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["certify", "--k", "1..2", "--out", str(a) + "/"])
    main(["certify", "--k", "1..2", "--out", str(b) + "/", "--jobs", "2"])
    for name in ("report_k1.json", "report_k2.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes()


@pytest.mark.parametrize(
    "argv",
    [
        ["certify", "--k", "x"],
        ["certify", "--k", "3..1"],
        ["pattern", "--k", "1", "--precision", "32"],
        ["schedule", "--stages", "2", "--eta", "1.5"],
        ["run", "--objective", "nope", "--budget", "3"],
        ["sweep", "--jobs", "0"],
        [],
    ],
)
def test_usage_errors_exit_2(argv, capsys):
    with pytest.raises(SystemExit) as info:
        main(argv)
    assert info.value.code == 2


def test_semantic_usage_errors_exit_2(tmp_path, capsys):
    assert main(["certify", "--k", "1..2", "--out", str(tmp_path / "x.json")]) == 2
    assert main(["schedule", "--stages", "0"]) == 2
    assert main(["adversary", "--steps", "1,a"]) == 2
    assert main(["adversary", "--steps", "1,-2"]) == 2
    assert main(["delta", "--k", "0"]) == 2
    missing = tmp_path / "none.json"
    assert main(["schedule", "--stages", "2", "--delta-override", str(missing)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    assert main(["run", "--objective", "huber", "--budget", "5", "--delta-override", str(bad)]) == 2
    assert "error" in capsys.readouterr().err


def test_conservative_run_is_capped_at_stage_one(capsys):
    assert main(["run", "--objective", "quadratic", "--budget", "50", "--stages", "5"]) == 0
    data = json.loads(capsys.readouterr().out)
    assert data["delta_source"] == "conservative"
    assert [b["k"] for b in data["stage_boundaries"]] == [0]


def test_override_list_accepts_plain_list(tmp_path, capsys):
    f = tmp_path / "d.json"
    f.write_text('["0.05", 0.0015]')
    assert main(["schedule", "--stages", "2", "--delta-override", str(f)]) == 0
    data = json.loads(capsys.readouterr().out)
    assert [s["reps"] for s in data["stages"]] == [20, 167]


def test_version_mentions_policy(capsys):
    with pytest.raises(SystemExit):
        main(["--version"])
    text = capsys.readouterr().out
    assert "128 bits" in text and "2^(-bits/2)" in text


def test_parse_k_range():
    assert parse_k_range("2..4") == [2, 3, 4]
    assert parse_k_range("0") == [0]


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "longstep", "pattern", "--k", "0"], capture_output=True, text=True)
    assert proc.returncode == 0 and json.loads(proc.stdout)["steps"] == ["2.0"]
