import pytest

from tpmr.cli import build_parser, main

pytestmark = pytest.mark.usefixtures("clean_env")


def test_levels_succeeds(tmp_path, capsys):
    assert main(["levels", "--out", str(tmp_path)]) == 0

    out = capsys.readouterr().out
    assert "f0 = 2828.000 MHz" in out
    assert f"wrote {tmp_path / 'levels.csv'}" in out


def test_missing_command_is_usage_error():
    assert main([]) == 1


def test_unknown_command_is_usage_error():
    assert main(["bogus"]) == 1


def test_help_exits_cleanly(capsys):
    assert main(["--help"]) == 0
    assert "fig5-spurs" in capsys.readouterr().out


def test_flags_follow_the_command():
    args = build_parser().parse_args(["sweep", "--axis", "pump_freq", "--seed", "3", "-v"])

    assert args.command == "sweep"
    assert args.axis == "pump_freq"
    assert args.seed == 3
    assert args.verbose


def test_missing_config_file(tmp_path):
    assert main(["levels", "--config", str(tmp_path / "absent.conf")]) == 4


def test_bad_config_key(tmp_path):
    config = tmp_path / "run.conf"
    config.write_text("pump.frequency = 5.3\n")

    assert main(["levels", "--config", str(config), "--out", str(tmp_path)]) == 2


def test_zero_workers_is_config_error(tmp_path):
    assert main(["levels", "--jobs", "0", "--out", str(tmp_path)]) == 2


def test_environment_override_is_validated(tmp_path, monkeypatch):
    monkeypatch.setenv("TPMR_PUMP_FREQ", "-1")
    assert main(["levels", "--out", str(tmp_path)]) == 2


def test_fit_missing_spectrum(tmp_path):
    assert main(["fit", str(tmp_path / "absent.csv"), "--out", str(tmp_path)]) == 4


def test_json_format_flag(tmp_path):
    assert main(["synth", "--format", "json", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "synth.json").exists()


def test_force_db_reaches_spur_model(tmp_path, capsys):
    code = main(["fig5-spurs", "--force-db", "0", "--out", str(tmp_path)])

    assert code == 0
    assert "|n|=1: 0.0 dB" in capsys.readouterr().out
