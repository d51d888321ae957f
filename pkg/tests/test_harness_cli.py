import json
import subprocess
import sys
from pathlib import Path

import pytest

from opcalc.cli import main
from opcalc.harness import ConfigError, key_lines, load_config, parse_config, run_suite

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SYMBOLIC = """{
  "battery": "verify-symbolic",
  "name": "small",
  "seeds": [0],
  "nus": [1, 2],
  "max_degree": 3
}
"""


def error_for(text):
    with pytest.raises(ConfigError) as info:
        parse_config(text, "cfg.json")
    return info.value


def test_key_lines():
    lines = key_lines('{\n "a": 1,\n "b": [\n  {"c": 2},\n  {"c": 3}\n ]\n}')
    assert lines[("a",)] == 2
    assert lines[("b", 1)] == 5
    assert lines[("b", 1, "c")] == 5


def test_invalid_json_reports_line():
    err = error_for('{\n "battery": "verify-symbolic",\n "name": "x"\n "seeds": [0]\n}')
    assert err.line == 4 and str(err).startswith("cfg.json:4:")


def test_unknown_key_reports_line():
    err = error_for(SYMBOLIC.replace('"max_degree": 3', '"max_degree": 3,\n  "colour": "red"'))
    assert err.line == 7 and "colour" in str(err)


def test_bad_type_inside_case_reports_line():
    text = """{
  "battery": "hs-apply",
  "name": "x",
  "seeds": [0],
  "cases": [
    {"nu": 1, "d": 3},
    {"nu": 1,
     "d": "four"}
  ]
}"""
    err = error_for(text)
    assert err.line == 8 and err.path == ("cases", 1, "d")


def test_hypothesis_violation_rejected():
    text = """{
  "battery": "bound-sweep",
  "name": "x",
  "seeds": [0],
  "family": {"name": "bracket_power", "s": 0.5},
  "nu": 1, "n": 1,
  "t1": 1.0,
  "t2": 0.5
}"""
    err = error_for(text)
    assert "hypotheses violated" in str(err) and err.line == 7


def test_missing_and_unknown_values():
    assert "missing required key" in str(error_for('{"battery": "verify-symbolic", "name": "x"}'))
    assert "unknown battery" in str(error_for('{"battery": "nope", "name": "x", "seeds": [0]}'))
    assert "unknown family" in str(error_for(
        '{"battery": "aae-probe", "name": "x", "seeds": [0], "nu": 1, "N": 3, "family": {"name": "q"}}'))
    assert "must be >= 1" in str(error_for(SYMBOLIC.replace("[1, 2]", "[0, 2]")))


def test_seed_ranges_and_override():
    cfg = parse_config(SYMBOLIC.replace("[0]", '{"start": 5, "count": 3}'))
    assert cfg.seeds == [5, 6, 7]
    assert parse_config(SYMBOLIC.replace("[0]", "[1, 9]"), seed=20).seeds == [20, 21]


def test_cases_override_top_level():
    cfg = parse_config(SYMBOLIC.replace('"max_degree": 3', '"max_degree": 3,\n"cases": [{}, {"nus": [3]}]'))
    assert [c["nus"] for c in cfg.cases] == [[1, 2], [3]]
    assert all(c["max_degree"] == 3 for c in cfg.cases)


def strip_time(path):
    data = json.loads(Path(path).read_text())
    data.pop("timestamp")
    return json.dumps(data, sort_keys=True)


def test_reports_identical_apart_from_timestamp(tmp_path):
    cfg = parse_config(SYMBOLIC)
    a = run_suite(cfg, tmp_path / "a")
    b = run_suite(cfg, tmp_path / "b")
    assert a.passed and b.passed
    assert strip_time(a.files[0]) == strip_time(b.files[0])


def test_lemma_report_and_csv_identical(tmp_path):
    text = """{"battery": "verify-lemmas", "name": "lem", "seeds": [0, 1],
              "identity": "lemma1", "nus": [1, 2], "dims": [3], "n_max": 2}"""
    a = run_suite(parse_config(text), tmp_path / "a")
    b = run_suite(parse_config(text), tmp_path / "b")
    assert strip_time(a.files[0]) == strip_time(b.files[0])
    for fa, fb in zip(a.files[1:], b.files[1:]):
        assert fa.read_bytes() == fb.read_bytes()


def test_theorem_identity_operator_gives_zero(tmp_path):
    text = """{"battery": "verify-theorem", "name": "thm", "seeds": [0], "nu": 1, "d": 3,
              "ns": [0, 1], "operator": "identity", "quad": {"nodes": 8, "levels": 0}}"""
    res = run_suite(parse_config(text), tmp_path)
    assert res.passed
    for case in res.report["cases"]:
        assert all(r["remainder_norm"] < 1e-12 and r["error"] < 1e-12 for r in case["results"])


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.json")), ids=lambda p: p.stem)
def test_shipped_configs_parse(path):
    cfg = load_config(path)
    assert cfg.name == path.stem


def test_cli_symbolic_and_exit_codes(tmp_path, capsys):
    good = tmp_path / "good.json"
    good.write_text(SYMBOLIC)
    assert main(["verify-symbolic", "--config", str(good), "--out", str(tmp_path / "r")]) == 0
    assert "small: PASS" in capsys.readouterr().out
    assert main(["verify-lemmas", "--config", str(good)]) == 2
    bad = tmp_path / "bad.json"
    bad.write_text(SYMBOLIC.replace('"max_degree": 3', '"max_degree": -3'))
    assert main(["verify-symbolic", "--config", str(bad)]) == 2
    assert "bad.json:6:" in capsys.readouterr().err


def test_cli_failure_exit_code(tmp_path):
    cfg = tmp_path / "strict.json"
    cfg.write_text("""{"battery": "aae-probe", "name": "strict", "seeds": [0], "nu": 1, "N": 3,
                      "tolerance": 0.0, "u0": [0.37]}""")
    assert main(["aae-probe", "--config", str(cfg), "--out", str(tmp_path)]) == 1
    cfg.write_text(cfg.read_text().replace('"N": 3', '"N": 3, "tolerance": -1'))
    assert main(["aae-probe", "--config", str(cfg), "--out", str(tmp_path)]) == 2


def test_cli_seed_flag(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(SYMBOLIC)
    main(["verify-symbolic", "--config", str(cfg), "--seed", "4", "--out", str(tmp_path)])
    assert json.loads((tmp_path / "small.json").read_text())["config"]["seeds"] == [4]


def test_console_script_list_families():
    out = subprocess.run([sys.executable, "-m", "opcalc.cli", "list-families", "--no-check"],
                         capture_output=True, text=True, check=True).stdout
    names = {f["name"] for f in json.loads(out)}
    assert {"bracket_power", "shifted_inverse_bracket"} <= names
