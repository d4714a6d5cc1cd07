import json
import subprocess
import sys

import numpy as np
import pytest

from valagg.cli import main
from valagg.experiment import ConfigError, parse_config_text, resolve
from valagg.traceio import read_jsonl, read_summary, read_trace_csv


def test_run_reproduces_theta_ten_iterates(tmp_path):
    assert main(["run", "--instance", "counterexample", "--theta", "10", "--x1", "1", "--iters", "4",
                 "--out", str(tmp_path)]) == 0
    t = read_trace_csv(tmp_path / "trace.csv")
    np.testing.assert_array_equal(t.iterates[:, 0], [1, 10, 55, 220])


def test_single_iteration_csv(tmp_path):
    assert main(["run", "--iters", "1", "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "trace.csv").read_text().splitlines()
    assert len(lines) == 2


def test_run_json_fitted_exponent(tmp_path):
    assert main(["run", "--instance", "counterexample", "--theta", "0.5", "--x1", "1", "--iters", "10000",
                 "--emit", "json", "--out", str(tmp_path)]) == 0
    rec = read_summary(tmp_path / "trace.json")
    assert -1.05 <= rec.fitted_exponent <= -0.95
    assert not (tmp_path / "trace.csv").exists()


def test_env_var_sets_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("VAL_AGG_OUT", str(tmp_path / "envout"))
    assert main(["run", "--iters", "3"]) == 0
    assert (tmp_path / "envout" / "trace.csv").exists()


def test_rerun_is_byte_identical(tmp_path):
    args = ["run", "--theta", "0.5", "--m0", "5", "--r", "0.5", "--seed", "3", "--iters", "100"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a/trace.csv").read_bytes() == (tmp_path / "b/trace.csv").read_bytes()
    ja, jb = (json.loads((tmp_path / d / "trace.json").read_text()) for d in "ab")
    ja.pop("wall_time"), jb.pop("wall_time")
    assert ja == jb


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# counterexample\ninstance = counterexample\ntheta = 10\niters = 4\nx1 = 1\n")
    assert main(["run", "--config", str(cfg), "--theta", "0.5", "--out", str(tmp_path / "o")]) == 0
    assert read_summary(tmp_path / "o/trace.json").config["theta"] == 0.5


def test_config_errors_have_line_and_field(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("theta = 0.5\niters = ten\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "line 2" in err and "iters" in err


def test_parse_config_text_errors():
    with pytest.raises(ConfigError, match="line 1"):
        parse_config_text("no equals sign here")
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config_text("\nnonsense = 3")
    with pytest.raises(ConfigError, match="only sweep axes"):
        resolve(parse_config_text("alpha = 1,2"))


@pytest.mark.parametrize("args", [["run", "--iters", "0"], ["run", "--instance", "bogus"],
                                  ["run", "--theta", "0.3,0.6"], ["run", "--transformer", "mixing", "--m0", "3"],
                                  ["sweep"]])
def test_config_error_exit_code(tmp_path, args):
    assert main(args + ["--out", str(tmp_path)]) == 2


def test_unknown_flag_exit_code():
    with pytest.raises(SystemExit) as e:
        main(["run", "--unknown-flag", "1"])
    assert e.value.code == 2


def test_unwritable_output_is_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["run", "--iters", "3", "--out", str(blocker / "sub")]) == 3


def test_theta_sweep(tmp_path):
    assert main(["sweep", "--theta", "0.3,0.6,0.9", "--iters", "10000", "--out", str(tmp_path), "--jobs", "2"]) == 0
    recs = read_jsonl(tmp_path / "sweep.jsonl")
    assert [r.config["theta"] for r in recs] == [0.3, 0.6, 0.9]
    for r, expected in zip(recs, (-1.4, -0.8, -0.2)):
        assert abs(r.fitted_exponent - expected) <= 0.05
    table = (tmp_path / "sweep_table.csv").read_text().splitlines()
    assert table[0].startswith("theta,iters,final_value,fitted_exponent")
    assert len(table) == 4


def test_lambda_sweep_convergent_iff_lambda_above_half(tmp_path):
    assert main(["sweep", "--theta", "1.5", "--transformer", "weighted", "--lambda", "0,1,2", "--iters", "3000",
                 "--out", str(tmp_path)]) == 0
    recs = read_jsonl(tmp_path / "sweep.jsonl")
    signs = [r.fitted_exponent < 0 for r in recs]
    assert signs == [False, True, True]


def test_single_point_sweep_matches_run(tmp_path):
    args = ["--theta", "0.7", "--iters", "200"]
    assert main(["run", *args, "--out", str(tmp_path / "r")]) == 0
    assert main(["sweep", *args, "--out", str(tmp_path / "s")]) == 0
    a = read_summary(tmp_path / "r/trace.json").without_wall_time()
    b = read_jsonl(tmp_path / "s/sweep.jsonl")[0].without_wall_time()
    assert a == b


def test_sweep_cap_checked_before_running(tmp_path):
    assert main(["sweep", "--theta", "0.1,0.2,0.3", "--iters", "5,6", "--cap", "5", "--out", str(tmp_path / "o")]) == 2
    assert not (tmp_path / "o").exists()


def test_verify_filters_by_tag(capsys):
    assert main(["verify", "--only", "thm2"]) == 0
    out = capsys.readouterr().out
    lines = [l for l in out.splitlines() if l.startswith(("PASS", "FAIL"))]
    assert lines and all("thm2" in l for l in lines)


def test_verify_detects_corrupted_theta(capsys):
    assert main(["verify", "--only", "lemma3", "--corrupt-theta", "0.5"]) == 4
    assert "FAIL c4/lemma3" in capsys.readouterr().out


def test_verify_unknown_check():
    assert main(["verify", "--only", "nothing"]) == 2


def test_plot_command(tmp_path):
    assert main(["run", "--theta", "0.5", "--iters", "200", "--out", str(tmp_path)]) == 0
    assert main(["plot", str(tmp_path / "trace.csv"), "--kind", "self_value"]) == 0
    svg = (tmp_path / "trace.svg").read_text()
    assert svg.count("<polyline") == 2


def test_plot_malformed_csv(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("n,x,f_n_xn,F_xn_xn,S_n,step_norm\n1,1,1,1,,1\n2,1,x,1,1,1\n")
    assert main(["plot", str(p)]) == 3
    assert "row 3" in capsys.readouterr().err
    assert not (tmp_path / "bad.svg").exists()


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "valagg", "run", "--iters", "2", "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "trace.csv").exists()
