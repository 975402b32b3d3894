import csv
import io
import json

import pytest

from modshadow.cli import RunConfig, UsageError, cli_main, load_config, parse_config_text

ENVELOPE = {"schema_version", "subcommand", "seed", "config_digest"}


def run(argv):
    out, err = io.StringIO(), io.StringIO()
    code = cli_main(argv, stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def records(text):
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def test_empty_config_gives_defaults(tmp_path):
    path = tmp_path / "empty.cfg"
    path.write_text("# nothing here\n\n", encoding="utf-8")
    assert load_config(path) == RunConfig()


def test_flags_override_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("epsilon = 0.1\nseed = 4  # trailing comment\n", encoding="utf-8")
    assert load_config(path).epsilon == 0.1
    assert load_config(path, {"epsilon": 0.2}).epsilon == 0.2
    assert load_config(path, {"epsilon": 0.2}).seed == 4


def test_config_errors_carry_line_numbers():
    with pytest.raises(UsageError, match="line 2: unknown key"):
        parse_config_text("seed = 1\nwidth = 3\n")
    with pytest.raises(UsageError, match="line 1: expected"):
        parse_config_text("seed 1\n")
    with pytest.raises(UsageError, match="bad value for seed"):
        parse_config_text("seed = one\n")


def test_invalid_values_exit_1(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("epsilon = -1\n", encoding="utf-8")
    code, _, err = run(["periodic", "--config", str(path)])
    assert code == 1 and "epsilon" in err
    assert run(["density", "--closure-tol", "0"])[0] == 1


def test_usage_errors_exit_1():
    assert run(["no-such-command"])[0] == 1
    assert run(["spectrum", "--no-such-flag"])[0] == 1
    assert run([])[0] == 1


def test_spectrum():
    code, out, _ = run(["spectrum", "--trace-max", "6"])
    assert code == 0
    rows = list(csv.reader(io.StringIO(out)))
    assert rows[0] == ["trace", "word", "length"]
    assert rows[1][:2] == ["3", "LR"] and float(rows[1][2]) == pytest.approx(1.9248473, abs=1e-7)


def test_verify_lemma():
    code, out, _ = run(["verify-lemma", "--trials", "1000", "--t0", "2", "--lambda-exp", "1"])
    (rec,) = records(out)
    assert code == 0 and ENVELOPE <= rec.keys()
    assert rec["K"] == pytest.approx(2.5819767, abs=1e-7)
    assert rec["max_p"] <= rec["K"]


def test_periodic_record_schema_and_replay(tmp_path):
    out_path, summary = tmp_path / "orbit.jsonl", tmp_path / "orbit.csv"
    code, _, _ = run(["periodic", "--seed", "3", "--out", str(out_path), "--summary", str(summary)])
    assert code == 0
    (rec,) = records(out_path.read_text())
    assert ENVELOPE <= rec.keys()
    assert {"y", "T", "gamma", "closure_residual", "oracle_length", "start_distance"} <= rec.keys()
    assert len(rec["y"]) == 4 and all(isinstance(g, int) for g in rec["gamma"])
    assert rec["closure_residual"] <= 1e-9
    assert summary.read_text().splitlines()[0] == "success,T,word,start_distance"
    assert run(["--replay", str(out_path)])[0] == 0
    # a tampered record fails the replay
    rec["T"] += 1e-6
    out_path.write_text(json.dumps(rec) + "\n")
    assert run(["--replay", str(out_path)])[0] == 2


def test_floats_keep_17_digits(tmp_path):
    out_path = tmp_path / "orbit.jsonl"
    run(["periodic", "--seed", "1", "--out", str(out_path)])
    text = out_path.read_text()
    rec = json.loads(text)
    assert f'"T": {format(rec["T"], ".17g")}' in text


def test_records_are_deterministic():
    a = run(["periodic", "--seed", "5"])[1]
    b = run(["periodic", "--seed", "5"])[1]
    assert a == b
    assert records(a)[0]["config_digest"] != records(run(["periodic", "--seed", "6"])[1])[0]["config_digest"]


def test_density_small(tmp_path):
    summary = tmp_path / "density.csv"
    code, out, _ = run(["density", "--samples", "6", "--im-hi", "2", "--seed", "7", "--summary", str(summary)])
    assert code == 0
    assert len(records(out)) == 6
    row = next(csv.DictReader(io.StringIO(summary.read_text())))
    assert float(row["coverage"]) == 1.0


def test_density_verification_failure_exits_2():
    code, _, _ = run(["density", "--samples", "3", "--t-max", "0.5"])
    assert code == 2


def test_shadow_and_bracket_and_anosov():
    code, out, _ = run(["shadow", "--word", "LLR", "--k-max", "20"])
    (rec,) = records(out)
    assert code == 0
    assert max(rec["forward_residuals"]) <= 0.2 / 3 and max(rec["backward_residuals"]) <= 0.2 / 3
    assert abs(rec["s"]) <= rec["eta"]
    assert run(["bracket", "--trials", "100"])[0] == 0
    code, out, _ = run(["verify-anosov", "--samples", "20"])
    assert code == 0
    assert [r["passed"] for r in records(out)] == [True, True, False]


def test_leaf_density_and_transitivity():
    code, out, _ = run(["leaf-density", "--seed", "2"])
    assert code == 0 and len(records(out)) == 221
    code, out, _ = run(["transitivity", "--pairs", "2", "--seed", "2"])
    assert code == 0
    assert all(r["success"] and r["t"] <= 200 for r in records(out))


def test_bad_word_is_usage_error():
    assert run(["shadow", "--word", "RRR"])[0] == 1
