"""Static NV ground-state Hamiltonian: levels, selection rules, line positions.

All frequencies are in MHz. Only the ms=0 <-> ms=-1 branch is used for line
positions; the ms=+1 levels exist in the 9-level matrices of `dynamics`.
"""

from typing import Iterable, Sequence

from ..types import NvParams, SpinLabel, TransitionKind, GaussianDip


SPIN_VALUES: tuple[int, int, int] = (1, 0, -1)


def energy_level(p: NvParams, s: SpinLabel) -> float:
    # anisotropic hyperfine and nuclear Zeeman terms are neglected
    return (
        p.d_gs * s.ms ** 2
        + p.zeeman * s.ms
        + p.a_hf * s.ms * s.mi
        + p.q_quad * s.mi ** 2
    )


def esr_line(p: NvParams, mi: int) -> float:
    """|0, mi> <-> |-1, mi> transition frequency."""
    return energy_level(p, SpinLabel(-1, mi)) - energy_level(p, SpinLabel(0, mi))


def esr_frequencies(p: NvParams) -> tuple[float, float, float]:
    f0 = p.d_gs - p.zeeman
    low, mid, high = sorted((f0 - p.a_hf, f0, f0 + p.a_hf))
    return (low, mid, high)


def nmr_lines(p: NvParams) -> tuple[float, float, float, float]:
    f0 = p.d_gs - p.zeeman
    f_plus = f0 + p.a_hf
    f_minus = f0 - p.a_hf
    return (
        f0 - p.q_quad - p.a_hf,
        f0 - p.q_quad + p.a_hf,
        f_plus + p.q_quad - p.a_hf,
        f_minus + p.q_quad + p.a_hf,
    )


def transition_allowed(source: SpinLabel, target: SpinLabel, kind: TransitionKind) -> bool:
    d_ms = abs(source.ms - target.ms)
    d_mi = abs(source.mi - target.mi)
    if kind == TransitionKind.ESR:
        return d_ms == 1 and d_mi == 0
    return d_ms == 0 and d_mi == 1


def tpmr_positions(p: NvParams, f_pump: float) -> tuple[float, ...]:
    lines: list[float] = []
    for carrier in esr_frequencies(p):
        lines.append(carrier - f_pump)
        lines.append(carrier + f_pump)
    return tuple(sorted(lines))


def all_labels() -> tuple[SpinLabel, ...]:
    return tuple(SpinLabel(ms, mi) for ms in SPIN_VALUES for mi in SPIN_VALUES)


def is_valid_label(s: SpinLabel) -> bool:
    return s.ms in SPIN_VALUES and s.mi in SPIN_VALUES


def nmr_coincidences(
    p: NvParams,
    dips: Iterable[GaussianDip],
    reference: float | None = None
) -> list[tuple[float, GaussianDip]]:
    """NMR lines falling inside a dip's FWHM band.

    Dip centers are detunings relative to `reference` (defaults to f0); a line
    coincides when |line - center| < fwhm / 2.
    """
    ref = p.f0 if reference is None else reference
    offsets: Sequence[float] = [line - ref for line in nmr_lines(p)]
    hits: list[tuple[float, GaussianDip]] = []
    for dip in dips:
        for offset in offsets:
            if abs(offset - dip.center) < 0.5 * dip.fwhm:
                hits.append((offset, dip))
    return hits
