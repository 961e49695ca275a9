from pathlib import Path

import pytest

from tpmr.types import OutputFormat, SweepAxis
from tpmr.errors import ErrorCode
from tpmr.config import (
    RunConfig,
    config_for_command,
    env_name,
    load_config,
    load_scenario,
    parse_config,
    with_cli_overrides,
)

pytestmark = pytest.mark.usefixtures("clean_env")


def test_empty_config_gives_defaults():
    cfg = parse_config("").unwrap()

    assert cfg.nv.f0 == 2828.0
    assert cfg.probe.rabi == 0.0909
    assert cfg.pump.freq == 5.3
    assert cfg.pump.rabi == pytest.approx(1.508, abs=1e-3)
    assert cfg.grid.points().size == 1501
    assert cfg.run.fmt == OutputFormat.CSV
    assert cfg.sweep.axis == SweepAxis.PUMP_POWER
    assert cfg.fit.prominence == 0.0


def test_values_and_comments():
    text = """
    # pump settings
    pump.freq = 4.0   # MHz
    run.format = JSON
    sweep.powers = 1, 2.5, 10
    """
    cfg = parse_config(text).unwrap()

    assert cfg.pump.freq == 4.0
    assert cfg.run.fmt == OutputFormat.JSON
    assert cfg.sweep.powers == (1.0, 2.5, 10.0)


def test_explicit_pump_rabi_wins_over_power():
    cfg = parse_config("pump.power = 10\npump.rabi = 0.5").unwrap()
    assert cfg.pump.rabi == 0.5
    assert cfg.pump_power_mw == 10.0


def test_field_strength_sets_zeeman():
    cfg = parse_config("nv.b0 = 1.5").unwrap()
    assert cfg.nv.zeeman == pytest.approx(1.5 * 28.025)


def test_negative_pump_frequency():
    result = parse_config("pump.freq = -1")

    assert result.is_err()
    error = result.unwrap_err()
    assert error.code == ErrorCode.CONFIG_RANGE_ERROR
    assert error.context["field"] == "pump.freq"


def test_negative_pump_power():
    error = parse_config("pump.power = -5").unwrap_err()
    assert error.code == ErrorCode.CONFIG_RANGE_ERROR
    assert error.context["field"] == "pump.power"


def test_negative_prominence():
    error = parse_config("fit.prominence = -0.001").unwrap_err()
    assert error.code == ErrorCode.CONFIG_RANGE_ERROR
    assert error.context["field"] == "fit.prominence"


def test_spur_level_above_carrier():
    error = parse_config("spurs.table_db = -48, 3").unwrap_err()
    assert error.context["field"] == "spurs.table_db"


def test_unknown_key_reports_line():
    error = parse_config("pump.freq = 5.3\npump.frequency = 5.3").unwrap_err()

    assert error.code == ErrorCode.UNKNOWN_CONFIG_KEY
    assert error.context["line"] == 2


def test_unparsable_value():
    error = parse_config("\nrun.seed = twelve").unwrap_err()

    assert error.code == ErrorCode.CONFIG_PARSE_ERROR
    assert error.context["field"] == "run.seed"
    assert error.context["line"] == 2


def test_line_without_assignment():
    error = parse_config("pump.freq 5.3").unwrap_err()
    assert error.code == ErrorCode.CONFIG_PARSE_ERROR


def test_env_name():
    assert env_name("pump.freq") == "TPMR_PUMP_FREQ"
    assert env_name("nv.t2_star") == "TPMR_NV_T2_STAR"


def test_environment_overrides_file():
    cfg = parse_config("pump.freq = 4.0", env={"TPMR_PUMP_FREQ": "6.0"}).unwrap()
    assert cfg.pump.freq == 6.0


def test_bad_environment_value():
    error = parse_config("", env={"TPMR_PUMP_FREQ": "-1"}).unwrap_err()
    assert error.code == ErrorCode.CONFIG_RANGE_ERROR


def test_cli_overrides_replace_run_settings():
    cfg = with_cli_overrides(RunConfig(), seed=7, out=Path("elsewhere"), fmt=OutputFormat.JSON)

    assert cfg.run.seed == 7
    assert cfg.run.out == Path("elsewhere")
    assert cfg.run.fmt == OutputFormat.JSON
    assert cfg.run.jobs == 1


def test_power_series_scenario():
    cfg = load_scenario("fig3").unwrap()

    assert cfg.sweep.axis == SweepAxis.PUMP_POWER
    assert cfg.sweep.powers == (0.63, 2.00, 10.0, 31.6, 63.0)
    assert cfg.pump.freq == 5.3


def test_frequency_series_scenario():
    cfg = load_scenario("fig4").unwrap()

    assert cfg.sweep.axis == SweepAxis.PUMP_FREQ
    assert cfg.pump_power_mw == 63.0
    assert min(cfg.sweep.freqs) == 3.0
    assert max(cfg.sweep.freqs) == 8.0


def test_scenario_accepts_overrides():
    cfg = load_scenario("fig3", "sweep.powers = 5, 50").unwrap()
    assert cfg.sweep.powers == (5.0, 50.0)


def test_unknown_scenario():
    error = load_scenario("fig9").unwrap_err()
    assert error.code == ErrorCode.UNKNOWN_COMMAND


def test_missing_config_file(tmp_path):
    error = load_config(tmp_path / "absent.conf").unwrap_err()
    assert error.code == ErrorCode.IO_ERROR


def test_command_config_from_file(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text("run.seed = 99\n")

    plain = config_for_command("synth", path).unwrap()
    preset = config_for_command("fig4", path).unwrap()

    assert plain.run.seed == 99
    assert plain.sweep.axis == SweepAxis.PUMP_POWER
    assert preset.run.seed == 99
    assert preset.sweep.axis == SweepAxis.PUMP_FREQ


def test_command_config_missing_file(tmp_path):
    error = config_for_command("fig3", tmp_path / "absent.conf").unwrap_err()
    assert error.code == ErrorCode.IO_ERROR
