"""Gaussian multi-dip fitting, 3-vs-9 model selection, T2* and splitting analysis.

Linewidth means FWHM throughout. The fit parameter vector is
[baseline, c_1, ln w_1, ln d_1, ..., c_n, ln w_n, ln d_n], which keeps widths
and depths positive without bounds.
"""

import logging
import math
from typing import Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import optimize, signal, stats

from .types import FitResult, GaussianDip, NvParams, Regression, Result, Spectrum
from .errors import TpmrError, ErrorCode, create_error
from .core.spin_model import SPIN_VALUES, esr_line, tpmr_positions

logger = logging.getLogger(__name__)

FOUR_LN2 = 4.0 * math.log(2.0)
ALLOWED_PEAKS = (3, 9)
RSS_FLOOR_REL = 1e-6
NOISE_PROMINENCE = 4.0      # x noise floor
DEPTH_PROMINENCE = 0.1      # x deepest dip
DEFAULT_FWHM_GUESS = 0.5
DEFAULT_MAX_ITER = 500


def noise_floor(contrast: NDArray[np.float64]) -> float:
    """Noise std. dev. from the scaled MAD of first differences."""
    if contrast.size < 3:
        return 0.0
    return float(stats.median_abs_deviation(np.diff(contrast), scale="normal")) / math.sqrt(2.0)


def auto_prominence(s: Spectrum) -> float:
    """Larger of 4x the noise floor and a tenth of the deepest dip."""
    if len(s) == 0:
        return 0.0
    depth = float(np.max(np.median(s.contrast) - s.contrast))
    return max(NOISE_PROMINENCE * noise_floor(s.contrast), DEPTH_PROMINENCE * depth)


def detect_peaks(
    s: Spectrum,
    prominence: float | None = None,
    fwhm_guess: float = DEFAULT_FWHM_GUESS
) -> list[float]:
    """Dip centers at least `prominence` below the median baseline.

    Without a prominence (None or 0) the threshold comes from `auto_prominence`.
    """
    if len(s) == 0:
        return []
    threshold = prominence if prominence else auto_prominence(s)
    if not threshold > 0.0:
        return []
    inverted = -(s.contrast - np.median(s.contrast))
    step = s.step if len(s) > 1 else fwhm_guess
    distance = max(1, int(round(fwhm_guess / step)))
    peaks, _ = signal.find_peaks(
        inverted, height=threshold, prominence=threshold, distance=distance
    )
    return sorted(float(s.detuning_grid[i]) for i in peaks)


def _profile(
    theta: NDArray[np.float64],
    x: NDArray[np.float64]
) -> tuple[NDArray[np.float64], NDArray[np.float64], NDArray[np.float64], NDArray[np.float64]]:
    centers = theta[1::3]
    widths = np.exp(theta[2::3])
    depths = np.exp(theta[3::3])
    u = x[:, None] - centers[None, :]
    g = np.exp(-FOUR_LN2 * u ** 2 / widths[None, :] ** 2)
    return u, g, widths, depths


def _model(theta: NDArray[np.float64], x: NDArray[np.float64]) -> NDArray[np.float64]:
    _, g, _, depths = _profile(theta, x)
    return theta[0] - g @ depths


def _jacobian(theta: NDArray[np.float64], x: NDArray[np.float64]) -> NDArray[np.float64]:
    u, g, widths, depths = _profile(theta, x)
    dg = depths[None, :] * g
    jac = np.empty((x.size, theta.size))
    jac[:, 0] = 1.0
    jac[:, 1::3] = -dg * 2.0 * FOUR_LN2 * u / widths[None, :] ** 2
    jac[:, 2::3] = -dg * 2.0 * FOUR_LN2 * u ** 2 / widths[None, :] ** 2
    jac[:, 3::3] = -dg
    return jac


def information_score(rss: float, n: int, n_params: int, scale: float) -> float:
    """n ln(rss/n) + 2 k, with rss floored relative to the data scale."""
    floor = n * (RSS_FLOOR_REL * scale) ** 2
    effective = max(rss, floor, np.finfo(float).tiny)
    return n * math.log(effective / n) + 2.0 * n_params


def _carrier_positions(p: NvParams) -> list[float]:
    return [esr_line(p, mi) - p.f0 for mi in SPIN_VALUES]


def initial_centers(
    s: Spectrum,
    n_peaks: int,
    candidates: Sequence[float],
    p: NvParams,
    fwhm_guess: float = DEFAULT_FWHM_GUESS
) -> list[float]:
    """Three deepest candidates as carriers, padded from predicted lines; for 9 peaks
    the sidebands are placed at carrier +/- pump frequency."""
    depth_at = {c: float(np.interp(c, s.detuning_grid, s.contrast)) for c in candidates}
    chosen = sorted(candidates, key=lambda c: depth_at[c])[:3]
    for c in _carrier_positions(p):
        if len(chosen) >= 3:
            break
        if all(abs(c - other) > fwhm_guess for other in chosen):
            chosen.append(c)

    if n_peaks == 3:
        return sorted(chosen)

    pump_freq = _pump_freq(s)
    if pump_freq is not None:
        return sorted(chosen + [c + sign * pump_freq for c in chosen for sign in (-1, 1)])

    extra = [c for c in sorted(candidates, key=lambda c: depth_at[c]) if c not in chosen]
    centers = chosen + extra[:6]
    for c in chosen:
        for sign in (-1, 1):
            if len(centers) < 9:
                centers.append(c + sign * 2.0 * fwhm_guess)
    return sorted(centers)


def predicted_start(
    s: Spectrum,
    n_peaks: int,
    p: NvParams
) -> tuple[list[float], list[float]] | None:
    """Centers and widths from the spin model: carriers at 1/(pi T2*), sidebands at half."""
    carriers = _carrier_positions(p)
    wide = 1.0 / (math.pi * p.t2_star)
    if n_peaks == 3:
        return carriers, [wide] * 3
    pump_freq = _pump_freq(s)
    if pump_freq is None:
        return None
    sidebands = [f - p.f0 for f in tpmr_positions(p, pump_freq)]
    return carriers + sidebands, [wide] * 3 + [0.5 * wide] * len(sidebands)


def _pump_freq(s: Spectrum) -> float | None:
    value = s.meta.get("pump_freq_mhz")
    if isinstance(value, (int, float)) and value > 0:
        return float(value)
    return None


def _diverged(
    n_peaks: int,
    res: optimize.OptimizeResult | None,
    reason: str
) -> Result[FitResult, TpmrError]:
    logger.warning("%d-peak fit diverged: %s", n_peaks, reason)
    return Result.err(create_error(
        ErrorCode.NON_CONVERGENCE,
        "Fit diverged",
        n_peaks=n_peaks,
        reason=reason,
        iterations=int(res.nfev) if res is not None else 0
    ))


def _jacobian_rank(jac: NDArray[np.float64]) -> int:
    try:
        return int(np.linalg.matrix_rank(jac))
    except np.linalg.LinAlgError:
        return 0


def fit_gaussians(
    s: Spectrum,
    n_peaks: int,
    init: Sequence[float],
    fwhm_guess: float = DEFAULT_FWHM_GUESS,
    max_iter: int = DEFAULT_MAX_ITER,
    widths: Sequence[float] | None = None
) -> Result[FitResult, TpmrError]:
    """Levenberg-Marquardt fit of baseline minus n Gaussian dips.

    `widths`, when given, are the starting FWHMs matching `init`; otherwise
    every dip starts at `fwhm_guess`. A rank-deficient Jacobian at the
    solution is reported through `converged=False` and the message, and the
    best parameters are still returned. A fit that runs off to non-finite
    parameters is a NON_CONVERGENCE error.
    """
    if n_peaks not in ALLOWED_PEAKS:
        return Result.err(create_error(
            ErrorCode.INVALID_PARAMETER,
            "Only 3- and 9-peak models are supported",
            n_peaks=n_peaks
        ))
    if len(init) < n_peaks or (widths is not None and len(widths) != len(init)):
        return Result.err(create_error(
            ErrorCode.INVALID_PARAMETER,
            "Not enough initial centers",
            n_peaks=n_peaks,
            provided=len(init)
        ))

    x = s.detuning_grid
    y = s.contrast
    n_params = 1 + 3 * n_peaks
    if x.size <= n_params:
        return Result.err(create_error(
            ErrorCode.DEGENERATE_INPUT,
            "Spectrum has fewer points than fit parameters",
            points=int(x.size),
            parameters=n_params
        ))

    starts = list(zip(init, widths if widths is not None else [fwhm_guess] * len(init)))
    baseline = float(np.median(y))
    min_depth = 1e-6 * max(float(np.ptp(y)), 1e-12)
    theta0 = [baseline]
    for center, width in sorted(starts)[:n_peaks]:
        local = baseline - float(np.interp(center, x, y))
        theta0.extend([center, math.log(width), math.log(max(local, min_depth))])

    try:
        with np.errstate(over="ignore", under="ignore", invalid="ignore"):
            res = optimize.least_squares(
                lambda th: _model(th, x) - y,
                np.array(theta0),
                jac=lambda th: _jacobian(th, x),
                method="lm",
                xtol=1e-8,
                ftol=1e-15,
                max_nfev=max_iter
            )
    except (ValueError, np.linalg.LinAlgError) as exc:
        return _diverged(n_peaks, None, str(exc))

    theta = res.x
    with np.errstate(over="ignore", under="ignore"):
        fitted_widths = np.exp(theta[2::3])
        fitted_depths = np.exp(theta[3::3])
    if not (
        np.all(np.isfinite(theta)) and np.all(np.isfinite(res.jac))
        and np.all(np.isfinite(res.fun))
        and np.all(np.isfinite(fitted_widths)) and np.all(fitted_widths > 0.0)
        and np.all(np.isfinite(fitted_depths))
    ):
        return _diverged(n_peaks, res, "non-finite parameters or Jacobian")

    residual = res.fun
    rss = float(residual @ residual)
    rank = _jacobian_rank(res.jac)
    converged = bool(res.success) and rank == n_params
    message = str(res.message)
    if rank < n_params:
        message = f"{ErrorCode.RANK_DEFICIENT.name}: Jacobian rank {rank} < {n_params}"
        logger.warning("%d-peak fit: %s", n_peaks, message)
    elif not res.success:
        logger.warning("%d-peak fit did not converge: %s", n_peaks, message)

    errors = _standard_errors(res.jac, rss, x.size, n_params)
    dips = []
    for i in range(n_peaks):
        width = float(fitted_widths[i])
        depth = float(fitted_depths[i])
        dips.append(GaussianDip(
            center=float(theta[1 + 3 * i]),
            fwhm=width,
            depth=depth,
            center_err=float(errors[1 + 3 * i]),
            fwhm_err=float(width * errors[2 + 3 * i]),
            depth_err=float(depth * errors[3 + 3 * i])
        ))

    scale = float(np.max(np.abs(y))) if y.size else 0.0
    return Result.ok(FitResult(
        dips=tuple(sorted(dips, key=lambda d: d.center)),
        baseline=float(theta[0]),
        rss=rss,
        n_peaks=n_peaks,
        score=information_score(rss, int(x.size), n_params, scale),
        converged=converged,
        iterations=int(res.nfev),
        message=message
    ))


def _standard_errors(
    jac: NDArray[np.float64],
    rss: float,
    n: int,
    n_params: int
) -> NDArray[np.float64]:
    dof = max(n - n_params, 1)
    try:
        covariance = np.linalg.pinv(jac.T @ jac) * rss / dof
    except np.linalg.LinAlgError:
        return np.full(n_params, np.nan)
    return np.sqrt(np.clip(np.diag(covariance), 0.0, None))


def _fit_model(
    s: Spectrum,
    n_peaks: int,
    candidates: Sequence[float],
    p: NvParams,
    fwhm_guess: float,
    max_iter: int
) -> FitResult | None:
    """Fit from the detected candidates, then once more from the spin-model lines
    when the first fit fails or does not converge."""
    best: FitResult | None = None
    starts: list[tuple[list[float], list[float] | None]] = [
        (initial_centers(s, n_peaks, candidates, p, fwhm_guess), None)
    ]
    predicted = predicted_start(s, n_peaks, p)
    if predicted is not None:
        starts.append(predicted)

    for init, widths in starts:
        result = fit_gaussians(s, n_peaks, init, fwhm_guess, max_iter, widths)
        if result.is_err():
            logger.warning("%d-peak fit rejected: %s", n_peaks, result.unwrap_err())
            continue
        fit = result.unwrap()
        if fit.converged:
            return fit
        if best is None or fit.score < best.score:
            best = fit
    return best


def select_model(
    s: Spectrum,
    p: NvParams | None = None,
    prominence: float | None = None,
    fwhm_guess: float = DEFAULT_FWHM_GUESS,
    max_iter: int = DEFAULT_MAX_ITER
) -> Result[FitResult, TpmrError]:
    """Fit 3 and 9 dips; the 9-dip model wins only with a strictly lower score.

    Converged fits are compared among themselves; a fit that did not converge
    (or has a rank-deficient Jacobian) is only used when no fit converged.
    """
    params = p if p is not None else NvParams()
    candidates = detect_peaks(s, prominence, fwhm_guess)

    fits: dict[int, FitResult] = {}
    for n_peaks in ALLOWED_PEAKS:
        fit = _fit_model(s, n_peaks, candidates, params, fwhm_guess, max_iter)
        if fit is not None:
            fits[n_peaks] = fit

    if not fits:
        return Result.err(create_error(
            ErrorCode.NON_CONVERGENCE,
            "Neither the 3- nor the 9-peak model could be fitted",
            points=len(s)
        ))

    eligible = {n: fit for n, fit in fits.items() if fit.converged}
    if eligible:
        for n_peaks in sorted(set(fits) - set(eligible)):
            logger.info("%d-peak fit excluded: %s", n_peaks, fits[n_peaks].message)
    pool = eligible or fits

    if 9 in pool and (3 not in pool or pool[9].score < pool[3].score):
        chosen = pool[9]
    else:
        chosen = pool[3]
    if 3 in pool and 9 in pool:
        logger.debug(
            "Model scores: 3 peaks %.2f, 9 peaks %.2f -> %d",
            pool[3].score, pool[9].score, chosen.n_peaks
        )
    return Result.ok(chosen)


def extract_t2star(dip: GaussianDip) -> float:
    """T2* in us as the inverse FWHM in MHz."""
    return 1.0 / dip.fwhm


def t2star_ratio(narrow: GaussianDip, wide: GaussianDip) -> float:
    return extract_t2star(narrow) / extract_t2star(wide)


def splitting_regression(
    points: Sequence[tuple[float, float]]
) -> Result[Regression, TpmrError]:
    """Ordinary least squares of dip offset against pump frequency."""
    if len({round(x, 12) for x, _ in points}) < 2:
        return Result.err(create_error(
            ErrorCode.DEGENERATE_INPUT,
            "Regression needs at least two distinct pump frequencies",
            points=len(points)
        ))

    x = np.array([pt[0] for pt in points], dtype=float)
    y = np.array([pt[1] for pt in points], dtype=float)
    fit = stats.linregress(x, y)
    predicted = fit.intercept + fit.slope * x
    ss_res = float(np.sum((y - predicted) ** 2))
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    if ss_tot == 0.0:
        r2 = 1.0 if ss_res <= 1e-24 else 0.0
    else:
        r2 = 1.0 - ss_res / ss_tot
    return Result.ok(Regression(slope=float(fit.slope), intercept=float(fit.intercept), r2=r2))


def sideband_offsets(
    fit: FitResult,
    pump_freq: float,
    carrier: float = 0.0
) -> Result[tuple[float, float], TpmrError]:
    """(lower, upper) offsets of the sidebands belonging to the carrier nearest `carrier`."""
    if fit.n_peaks < 9:
        return Result.err(create_error(
            ErrorCode.DEGENERATE_INPUT,
            "Sideband offsets need a 9-peak fit",
            n_peaks=fit.n_peaks
        ))

    central = min(fit.dips, key=lambda d: abs(d.center - carrier))
    lower = min(fit.dips, key=lambda d: abs(d.center - (central.center - pump_freq)))
    upper = min(fit.dips, key=lambda d: abs(d.center - (central.center + pump_freq)))
    if lower is central or upper is central:
        return Result.err(create_error(
            ErrorCode.DEGENERATE_INPUT,
            "No distinct sideband found next to the carrier",
            pump_freq=pump_freq
        ))
    return Result.ok((lower.center - central.center, upper.center - central.center))
