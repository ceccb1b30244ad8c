import pytest

from cutfeec.cli import build_arg_parser, main
from cutfeec.config import ExperimentConfig
from cutfeec.experiments import Report
from cutfeec.model.enums import Command
from cutfeec.util import ConfigError, GeometryError, SolverError, cap_threads


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "disk.cfg"
    path.write_text("[problem]\nk = 2\n[discretization]\nm = 8, 16\n")
    return path


def test_arg_parser():
    args = build_arg_parser().parse_args(["sweep-cut", "--config", "a.cfg", "--m", "16", "--k", "1", "-v"])
    assert args.command == "sweep-cut"
    assert args.m == 16 and args.k == 1 and args.verbose
    assert args.out is None
    with pytest.raises(SystemExit):
        build_arg_parser().parse_args(["plot", "--config", "a.cfg"])
    with pytest.raises(SystemExit):
        build_arg_parser().parse_args(["solve"])


def test_dispatch(mocker, config_file, tmp_path):
    run = mocker.patch("cutfeec.cli.run", return_value=Report(Command.CONVERGE, ExperimentConfig(), ["m"]))
    out = tmp_path / "result.csv"
    assert main(["converge", "--config", str(config_file), "--m", "32", "--out", str(out)]) == 0

    run.assert_called_once()
    command, cfg, path = run.call_args.args
    assert command == Command.CONVERGE
    assert cfg.m_list == (32,)
    assert cfg.k == 2
    assert path == out


def test_stdout_without_out(mocker, config_file, capsys):
    report = Report(Command.NORM_EQUIV, ExperimentConfig(), ["m"])
    report.add(8)
    mocker.patch("cutfeec.cli.run", return_value=report)
    assert main(["norm-equiv", "--config", str(config_file)]) == 0
    assert capsys.readouterr().out == report.dumps()


@pytest.mark.parametrize(
    "error,code",
    [
        (ConfigError("bad"), 2),
        (SolverError("singular"), 3),
        (GeometryError("empty"), 4),
    ],
)
def test_exit_codes(mocker, config_file, error: Exception, code: int):
    mocker.patch("cutfeec.cli.run", side_effect=error)
    assert main(["solve", "--config", str(config_file)]) == code


def test_config_errors(mocker, config_file, tmp_path):
    run = mocker.patch("cutfeec.cli.run")
    assert main(["solve", "--config", str(tmp_path / "missing.cfg")]) == 2
    assert main(["solve", "--config", str(config_file), "--k", "5"]) == 2
    assert main(["solve", "--config", str(config_file), "--m", "2"]) == 2
    run.assert_not_called()


def test_thread_variable(mocker, monkeypatch, config_file):
    run = mocker.patch("cutfeec.cli.run")
    monkeypatch.setenv("CUTFEEC_NUM_THREADS", "many")
    assert main(["solve", "--config", str(config_file)]) == 2
    run.assert_not_called()


def test_cap_threads():
    env = {"CUTFEEC_NUM_THREADS": "2"}
    cap_threads(env)
    assert env["OMP_NUM_THREADS"] == "2"
    assert env["OPENBLAS_NUM_THREADS"] == "2"

    env = {"CUTFEEC_NUM_THREADS": "0"}
    cap_threads(env)
    assert "OMP_NUM_THREADS" not in env
    with pytest.raises(ConfigError):
        cap_threads(env, strict=True)

    env = {}
    cap_threads(env, strict=True)
    assert env == {}
