import json
from pathlib import Path

import numpy as np
import pytest

from tpmr.types import FitResult, GaussianDip, OutputFormat, Spectrum
from tpmr.errors import ErrorCode
from tpmr.export import (
    format_value,
    read_spectrum,
    render_csv,
    with_format_suffix,
    write_fit,
    write_spectrum,
    write_table,
)


@pytest.fixture
def spectrum() -> Spectrum:
    grid = np.round(np.arange(-1.0, 1.0001, 0.25), 10)
    return Spectrum(
        detuning_grid=grid,
        contrast=-0.017 * np.exp(-grid ** 2),
        meta={"source": "synth", "seed": 42, "pump_freq_mhz": 5.3}
    )


@pytest.fixture
def fit() -> FitResult:
    return FitResult(
        dips=(GaussianDip(center=-2.2, fwhm=0.71, depth=0.017),
              GaussianDip(center=0.0, fwhm=0.71, depth=0.017, center_err=1e-3)),
        baseline=0.0,
        rss=1.5e-6,
        n_peaks=3,
        score=-1234.5,
        converged=True,
        iterations=17
    )


@pytest.mark.parametrize("fmt", list(OutputFormat))
def test_spectrum_survives_write_and_read(tmp_path, spectrum, fmt):
    path = write_spectrum(tmp_path / "spectrum", spectrum, fmt).unwrap()
    loaded = read_spectrum(path).unwrap()

    np.testing.assert_allclose(loaded.detuning_grid, spectrum.detuning_grid, rtol=1e-9)
    np.testing.assert_allclose(loaded.contrast, spectrum.contrast, rtol=1e-9)
    assert loaded.meta == spectrum.meta


def test_identical_inputs_give_identical_bytes(tmp_path, spectrum):
    first = write_spectrum(tmp_path / "a", spectrum).unwrap()
    second = write_spectrum(tmp_path / "b", spectrum).unwrap()
    assert first.read_bytes() == second.read_bytes()


def test_csv_metadata_is_sorted(spectrum):
    text = render_csv(("x",), [(1.0,)], spectrum.meta)
    assert text.splitlines()[:4] == [
        "# pump_freq_mhz=5.3", "# seed=42", "# source=synth", "x"
    ]


def test_number_formatting():
    assert format_value(0.1 + 0.2) == "0.3"
    assert format_value(True) == "true"
    assert format_value(np.float64(2828.0)) == "2828"
    assert format_value(7) == "7"


def test_json_table_layout(tmp_path):
    path = write_table(tmp_path / "levels", ("kind", "freq_mhz"), [("esr", 2825.8)],
                       {"b0_gauss": 0.0}, OutputFormat.JSON).unwrap()

    assert path.name == "levels.json"
    payload = json.loads(path.read_text())
    assert payload == {"meta": {"b0_gauss": 0.0}, "rows": [{"kind": "esr", "freq_mhz": 2825.8}]}


def test_fit_csv_header(tmp_path, fit):
    path = write_fit(tmp_path / "fit", fit, meta={"source": "synth"}).unwrap()
    lines = path.read_text().splitlines()

    assert "# n_peaks=3" in lines
    assert "# source=synth" in lines
    assert "center_mhz,fwhm_mhz,depth,center_err,fwhm_err,depth_err" in lines
    assert lines[-1].startswith("0,0.71,0.017,0.001")


def test_fit_json_carries_every_field(tmp_path, fit):
    path = write_fit(tmp_path / "fit", fit, OutputFormat.JSON).unwrap()
    document = json.loads(path.read_text())

    assert document["iterations"] == 17
    assert document["converged"] is True
    assert len(document["dips"]) == 2
    assert document["dips"][1]["center_err"] == 1e-3


def test_suffix_is_appended_not_replaced():
    assert with_format_suffix(Path("run.v1"), OutputFormat.CSV) == Path("run.v1.csv")
    assert with_format_suffix(Path("run.json"), OutputFormat.JSON) == Path("run.json")


def test_missing_file_is_io_error(tmp_path):
    result = read_spectrum(tmp_path / "absent.csv")

    assert result.is_err()
    assert result.unwrap_err().code == ErrorCode.IO_ERROR


def test_malformed_file_is_io_error(tmp_path):
    path = tmp_path / "broken.csv"
    path.write_text("detuning_mhz,contrast\n0.0,not-a-number\n")

    assert read_spectrum(path).unwrap_err().code == ErrorCode.IO_ERROR


def test_descending_grid_is_rejected(tmp_path):
    path = tmp_path / "reversed.csv"
    path.write_text("detuning_mhz,contrast\n1.0,0.0\n0.0,-0.01\n")

    assert read_spectrum(path).unwrap_err().code == ErrorCode.DEGENERATE_INPUT


def test_write_into_a_file_path_fails(tmp_path, spectrum):
    blocker = tmp_path / "blocker"
    blocker.write_text("")

    result = write_spectrum(blocker / "spectrum", spectrum)

    assert result.unwrap_err().code == ErrorCode.IO_ERROR
