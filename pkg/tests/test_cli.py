import pytest

from chartbench.cli import EXIT_FAILED, EXIT_INVALID, EXIT_OK, main


def test_list(capsys):
    assert main(["list"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "table1" in out and "fig_dpm_CED" in out


def test_arl_runs(capsys):
    assert main(["arl", "--chart", "ewma", "--lambda", "1", "--limit", "3", "--delta", "0,1",
                 "--reps", "5000"]) == EXIT_OK
    assert "EWMA" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    ["arl", "--chart", "nosuch", "--limit", "3"],
    ["arl", "--chart", "ewma", "--limit", "3"],
    ["arl", "--chart", "ewma", "--lambda", "0.1"],
    ["arl", "--chart", "ewma", "--lambda", "0.1", "--k", "0.5", "--limit", "3"],
    ["arl", "--chart", "cusum", "--k", "0.5", "--al", "4", "--limit", "4"],
    ["arl", "--chart", "rrcusum", "--k", "0.5", "--wl", "3.44", "--al", "4.6", "--limit", "4.0", "--rr", "2of2"],
    ["arl", "--chart", "ewma", "--lambda", "0.1", "--limit", "2.4", "--reps", "10"],
    ["ced", "--chart", "ewma", "--lambda", "0.1", "--limit", "2.4", "--delta", "1"],
    ["calibrate", "--chart", "cusum", "--k", "0.5"],
    ["reproduce", "--experiment", "table99"],
    ["reproduce", "--experiment", "table1", "--delta", ""],
    ["optimize", "--chart", "ewma", "--delta", "1", "--w-range", "1:3"],
])
def test_validation_errors_exit_2(argv):
    assert main(argv) == EXIT_INVALID


def test_computational_failure_exit_3():
    # alarms almost surely before the change point
    argv = ["ced", "--chart", "ewma", "--lambda", "1", "--limit", "0.3", "--delta", "1", "--tau", "60",
            "--reps", "1000"]
    assert main(argv) == EXIT_FAILED


def test_reproduce_is_byte_identical(tmp_path):
    args = ["reproduce", "--experiment", "table3", "--reps", "2000", "--seed", "7"]
    assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
    assert (tmp_path / "a" / "table3.csv").read_bytes() == (tmp_path / "b" / "table3.csv").read_bytes()


def test_json_format(tmp_path):
    assert main(["arl", "--chart", "pm", "--p", "0.35", "--limit", "6.415", "--reps", "2000",
                 "--out", str(tmp_path), "--format", "json"]) == EXIT_OK
    assert (tmp_path / "arl.json").exists() and not (tmp_path / "arl.csv").exists()


def test_threads_from_environment(monkeypatch):
    monkeypatch.setenv("RL_THREADS", "1")
    assert main(["arl", "--chart", "cusum", "--k", "0.5", "--limit", "4", "--reps", "2000"]) == EXIT_OK
