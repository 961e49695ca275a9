"""CSV/JSON readers and writers for spectra, fits and result tables.

CSV files start with sorted `# key=value` metadata lines followed by a header
row. Numbers are written with 10 significant digits and nothing time-dependent
is recorded, so identical inputs give byte-identical files.
"""

import csv
import io
import json
from dataclasses import asdict
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
from numpy.typing import NDArray

from .types import FitResult, MetaValue, OutputFormat, Result, Spectrum
from .errors import TpmrError, ErrorCode, create_error

SPECTRUM_COLUMNS = ("detuning_mhz", "contrast")
DIP_COLUMNS = ("center_mhz", "fwhm_mhz", "depth", "center_err", "fwhm_err", "depth_err")

ParsedSpectrum = tuple[NDArray[np.float64], NDArray[np.float64], dict[str, MetaValue]]


def with_format_suffix(path: Path, fmt: OutputFormat) -> Path:
    suffix = f".{fmt.value}"
    if path.suffix == suffix:
        return path
    return path.with_name(path.name + suffix)


def format_value(value: Any) -> str:
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.10g}"
    return str(value)


def _parse_meta_value(text: str) -> MetaValue:
    for cast in (int, float):
        try:
            return cast(text)  # type: ignore[no-any-return]
        except ValueError:
            continue
    return text


def render_csv(
    columns: Sequence[str],
    rows: Sequence[Sequence[Any]],
    meta: Mapping[str, Any] | None = None
) -> str:
    buffer = io.StringIO()
    for key in sorted(meta or {}):
        buffer.write(f"# {key}={format_value((meta or {})[key])}\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([format_value(v) for v in row])
    return buffer.getvalue()


def render_json(
    columns: Sequence[str],
    rows: Sequence[Sequence[Any]],
    meta: Mapping[str, Any] | None = None
) -> str:
    records = [{c: _json_value(v) for c, v in zip(columns, row)} for row in rows]
    payload = {"meta": {k: _json_value(v) for k, v in (meta or {}).items()}, "rows": records}
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def _json_value(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    return value


def _write_text(path: Path, text: str) -> Result[Path, TpmrError]:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text, encoding="utf-8")
    except OSError as e:
        return Result.err(create_error(
            ErrorCode.IO_ERROR,
            "Failed to write output file",
            path=str(path),
            reason=str(e)
        ))
    return Result.ok(path)


def write_table(
    path: Path,
    columns: Sequence[str],
    rows: Sequence[Sequence[Any]],
    meta: Mapping[str, Any] | None = None,
    fmt: OutputFormat = OutputFormat.CSV
) -> Result[Path, TpmrError]:
    """Write rows under `path` with the suffix of the chosen format."""
    target = with_format_suffix(path, fmt)
    if fmt == OutputFormat.JSON:
        return _write_text(target, render_json(columns, rows, meta))
    return _write_text(target, render_csv(columns, rows, meta))


def write_spectrum(
    path: Path,
    s: Spectrum,
    fmt: OutputFormat = OutputFormat.CSV
) -> Result[Path, TpmrError]:
    rows = list(zip(s.detuning_grid.tolist(), s.contrast.tolist()))
    return write_table(path, SPECTRUM_COLUMNS, rows, s.meta, fmt)


def read_spectrum(path: Path) -> Result[Spectrum, TpmrError]:
    """Read a spectrum written by write_spectrum (CSV or JSON by suffix)."""
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        return Result.err(create_error(
            ErrorCode.IO_ERROR,
            "Failed to read spectrum file",
            path=str(path),
            reason=str(e)
        ))

    try:
        if path.suffix == ".json":
            grid, contrast, meta = _parse_json_spectrum(text)
        else:
            grid, contrast, meta = _parse_csv_spectrum(text)
    except (ValueError, KeyError, TypeError) as e:
        return Result.err(create_error(
            ErrorCode.IO_ERROR,
            "Malformed spectrum file",
            path=str(path),
            reason=str(e)
        ))

    if grid.size == 0 or np.any(np.diff(grid) <= 0) or not np.all(np.isfinite(contrast)):
        return Result.err(create_error(
            ErrorCode.DEGENERATE_INPUT,
            "Spectrum grid must be nonempty and ascending with finite contrast",
            path=str(path),
            points=int(grid.size)
        ))
    return Result.ok(Spectrum(detuning_grid=grid, contrast=contrast, meta=meta))


def _parse_csv_spectrum(text: str) -> ParsedSpectrum:
    meta: dict[str, MetaValue] = {}
    body: list[str] = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, sep, value = line[1:].strip().partition("=")
            if sep:
                meta[key.strip()] = _parse_meta_value(value.strip())
        elif line.strip():
            body.append(line)

    reader = csv.DictReader(body)
    grid: list[float] = []
    contrast: list[float] = []
    for row in reader:
        grid.append(float(row[SPECTRUM_COLUMNS[0]]))
        contrast.append(float(row[SPECTRUM_COLUMNS[1]]))
    return np.array(grid), np.array(contrast), meta


def _parse_json_spectrum(text: str) -> ParsedSpectrum:
    payload = json.loads(text)
    rows = payload["rows"]
    grid = np.array([float(r[SPECTRUM_COLUMNS[0]]) for r in rows])
    contrast = np.array([float(r[SPECTRUM_COLUMNS[1]]) for r in rows])
    return grid, contrast, dict(payload.get("meta", {}))


def fit_to_dict(fit: FitResult) -> dict[str, Any]:
    return asdict(fit)


def write_fit(
    path: Path,
    fit: FitResult,
    fmt: OutputFormat = OutputFormat.CSV,
    meta: Mapping[str, Any] | None = None
) -> Result[Path, TpmrError]:
    """JSON carries every FitResult field; CSV is the per-dip summary."""
    if fmt == OutputFormat.JSON:
        document = fit_to_dict(fit)
        if meta:
            document["meta"] = dict(meta)
        text = json.dumps(document, indent=2, sort_keys=True) + "\n"
        return _write_text(with_format_suffix(path, OutputFormat.JSON), text)

    header: dict[str, Any] = {
        "baseline": fit.baseline,
        "converged": fit.converged,
        "iterations": fit.iterations,
        "n_peaks": fit.n_peaks,
        "rss": fit.rss,
        "score": fit.score,
        **(meta or {}),
    }
    rows = [
        (d.center, d.fwhm, d.depth, d.center_err, d.fwhm_err, d.depth_err) for d in fit.dips
    ]
    return write_table(path, DIP_COLUMNS, rows, header, OutputFormat.CSV)
