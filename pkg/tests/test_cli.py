import json

import pytest

from l1flow.cli import EXIT_FAIL, EXIT_OK, EXIT_USAGE, main
from l1flow.fullgroup import StepElement
from l1flow.verification import SuiteConfig


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def flow_half(tmp_path, capsys):
    path = tmp_path / "half.json"
    assert run(capsys, "build", "const-flow", "--t", "1/2", "--out", path)[0] == EXIT_OK
    return path


def test_build_const_flow(flow_half, capsys):
    doc = json.loads(flow_half.read_text())
    T = StepElement.from_json(doc)
    assert len(T.rules) == 1
    code, out, _ = run(capsys, "compute", "norm", flow_half)
    assert code == EXIT_OK and out.strip() == "1/2 (0.5)"


def test_build_random_step_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for p in (a, b):
        assert run(capsys, "build", "random-step", "--seed", 7, "--out", p)[0] == EXIT_OK
    assert a.read_bytes() == b.read_bytes()


def test_build_thm61_snapshot(tmp_path, capsys):
    path = tmp_path / "s.json"
    assert run(capsys, "build", "thm61", "--levels", 3, "--out", path)[0] == EXIT_OK
    doc = json.loads(path.read_text())
    assert doc["levels"] == 3
    assert StepElement.from_json(doc["S"]).is_valid()
    code, out, _ = run(capsys, "compute", "index", path)
    assert code == EXIT_OK and out.strip() == "0 (0)"


def test_index_of_periodic_element(tmp_path, capsys):
    path = tmp_path / "rot.json"
    run(capsys, "build", "cell-rotation", "--fraction", "1/3", "--out", path)
    assert run(capsys, "compute", "index", path)[1].strip() == "0 (0)"
    code, out, _ = run(capsys, "compute", "periodic", path)
    assert code == EXIT_OK and out.strip() == "periodic"


@pytest.mark.parametrize("argv", [
    ["build", "no-such-kind"],
    ["build", "const-flow"],
    ["build", "const-flow", "--t", "abc"],
    ["build", "monotone-template", "--template", "nope"],
    ["compute", "norm", "/nonexistent.json"],
    ["verify", "no-such-suite"],
])
def test_usage_errors_exit_2(argv, capsys):
    try:
        code = main(argv)
    except SystemExit as exc:  # argparse rejects before dispatch
        code = exc.code
    assert code == EXIT_USAGE
    assert capsys.readouterr().err


def test_malformed_element_file(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(capsys, "compute", "norm", bad)[0] == EXIT_USAGE


def test_export_import_round_trip(tmp_path, capsys):
    src, table, back = tmp_path / "r.json", tmp_path / "r.csv", tmp_path / "back.json"
    run(capsys, "build", "random-step", "--seed", 3, "--moves", 3, "--out", src)
    assert run(capsys, "export", src, "--out", table)[0] == EXIT_OK
    assert run(capsys, "import", table, "--out", back)[0] == EXIT_OK
    T = StepElement.from_json(json.loads(src.read_text()))
    U = StepElement.from_json(json.loads(back.read_text()))
    assert T == U


def test_verify_pass_and_report(tmp_path, capsys):
    report = tmp_path / "rep.json"
    code, out, _ = run(capsys, "verify", "charge", "--seed", 2, "--out", report)
    assert code == EXIT_OK and out.rstrip().endswith("PASS")
    doc = json.loads(report.read_text())
    assert doc["passed"] and doc["config"]["seed"] == 2


def test_verify_failure_exits_1(tmp_path, capsys):
    # an unreachable alternation threshold forces a failed check
    cfg = tmp_path / "c.ini"
    cfg.write_text("[suite]\nlevels = 2\nalternation_samples = 20\nalternation_threshold = 2\n")
    code, out, _ = run(capsys, "verify", "alternation", "--config", cfg)
    assert code == EXIT_FAIL and out.rstrip().endswith("FAIL")


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[suite]\nseed = 5\nlevels = 3\nepsilon = 1/8\n")
    c = SuiteConfig.from_file(cfg, levels=4, seed=None)
    assert (c.seed, c.levels, str(c.epsilon)) == (5, 4, "1/8")


def test_config_errors_exit_2(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[suite]\nbogus = 1\n")
    assert run(capsys, "verify", "charge", "--config", cfg)[0] == EXIT_USAGE
    cfg.write_text("seed = 1\n")
    assert run(capsys, "verify", "charge", "--config", cfg)[0] == EXIT_USAGE
    assert run(capsys, "verify", "charge", "--config", tmp_path / "missing.ini")[0] == EXIT_USAGE


def test_verify_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    for p in (a, b):
        run(capsys, "verify", "charge", "commensurator", "--seed", 1, "--out", p)
    strip = lambda d: [{**s, "elapsed": 0} for s in d["suites"]]
    assert strip(json.loads(a.read_text())) == strip(json.loads(b.read_text()))
