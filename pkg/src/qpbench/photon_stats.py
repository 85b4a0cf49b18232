"""
Photon-correlation and spectroscopy analysis.

Histogram convention: bins are centred on ``k * bin_width`` for
``|k| <= K`` with ``K = tau_max / bin_width``. A delay ``dt = t_b - t_a``
goes to ``k = sign(dt) * floor((2|dt| + w) / 2w)`` (round half away from
zero, in integer picoseconds), so swapping the two streams mirrors the
histogram exactly.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import optimize, special

from ._util import max_workers
from .errors import ConfigurationError, DataError, InsufficientDataError, NoPeakError, \
    NumericalError, ParameterError
from .records import PhotonStream, Spectrum

PS_PER_NS = 1000

FIT_BUDGET = 200

EMISSION_BANDS = {
    "perovskite": (480.0, 525.0),
    "siv_zpl": (735.5, 738.5),
    "siv_strained": (727.0, 740.0),
    "graphite": (718.0, 722.0),
}


# ----------------------------------------------------------------------
# Correlation
# ----------------------------------------------------------------------

@dataclass
class G2Histogram:
    """Coincidence histogram of ``t_b - t_a``.

    ``tau`` holds bin centres (ns). Analysis fills ``masked``,
    ``background_per_bin``, ``normalization_area`` and ``normalized``.
    """
    bin_width: float
    tau: np.ndarray
    raw: np.ndarray
    masked: np.ndarray = None
    background_per_bin: float = float("nan")
    normalization_area: float = float("nan")
    normalized: np.ndarray = None

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=float)
        self.raw = np.asarray(self.raw, dtype=np.int64)
        if self.masked is None:
            self.masked = np.zeros(self.raw.size, dtype=bool)
        if self.raw.shape != self.tau.shape:
            raise DataError("tau and raw must have equal length")
        if np.any(self.raw < 0):
            raise DataError("raw counts must be >= 0")

    @property
    def tau_max(self):
        return float(self.tau[-1])


def _check_sorted(t, name):
    bad = np.flatnonzero(np.diff(t) < 0)
    if bad.size:
        i = int(bad[0])
        raise DataError(f"{name} is not sorted: element {i + 1} ({t[i + 1]} ps) precedes "
                        f"element {i} ({t[i]} ps)")


@numba.njit(cache=True, nogil=True)
def _correlate_kernel(a, b, w, K, counts):
    lim = (2 * K + 1) * w  # |2 dt| < lim  <=>  |k| <= K
    nb = b.size
    lo = 0
    for i in range(a.size):
        ta = a[i]
        while lo < nb and 2 * (b[lo] - ta) <= -lim:
            lo += 1
        j = lo
        while j < nb:
            dt = b[j] - ta
            if 2 * dt >= lim:
                break
            if dt >= 0:
                k = (2 * dt + w) // (2 * w)
            else:
                k = -((-2 * dt + w) // (2 * w))
            counts[k + K] += 1
            j += 1


def correlate(stream_a, stream_b, bin_width: float, tau_max: float, shards: int = 1,
              workers=None) -> G2Histogram:
    """Full multi-start/multi-stop coincidence histogram.

    Parameters
    ----------
    stream_a, stream_b : array_like of int
        Sorted timestamps in ps.
    bin_width, tau_max : float
        ns; ``bin_width`` must be a whole number of ps and ``tau_max`` a
        multiple of it.
    shards : int
        Split ``stream_a`` into this many contiguous pieces correlated
        independently (threads); the integer sum is identical for any count.
    """
    a = np.ascontiguousarray(stream_a, dtype=np.int64)
    b = np.ascontiguousarray(stream_b, dtype=np.int64)
    _check_sorted(a, "stream A")
    _check_sorted(b, "stream B")
    if not bin_width > 0 or not tau_max >= 0:
        raise ParameterError("bin_width must be > 0 and tau_max >= 0")
    w = bin_width * PS_PER_NS
    if abs(w - round(w)) > 1e-6:
        raise ParameterError("bin_width must be a whole number of picoseconds")
    w = int(round(w))
    K = tau_max / bin_width
    if abs(K - round(K)) > 1e-9 * max(1.0, K):
        raise ParameterError("tau_max must be a multiple of bin_width")
    K = int(round(K))
    shards = max(1, min(int(shards), max(a.size, 1)))
    if shards == 1:
        counts = np.zeros(2 * K + 1, dtype=np.int64)
        _correlate_kernel(a, b, w, K, counts)
    else:
        pieces = np.array_split(a, shards)
        parts = [np.zeros(2 * K + 1, dtype=np.int64) for _ in pieces]
        with ThreadPoolExecutor(max_workers=max_workers(workers)) as pool:
            list(pool.map(lambda pc: _correlate_kernel(pc[0], b, w, K, pc[1]),
                          zip(pieces, parts)))
        counts = np.sum(parts, axis=0)
    tau = np.arange(-K, K + 1) * bin_width
    return G2Histogram(float(bin_width), tau, counts)


def correlate_stream(stream: PhotonStream, bin_width, tau_max, **kw):
    return correlate(stream.a, stream.b, bin_width, tau_max, **kw)


# ----------------------------------------------------------------------
# Pulsed g2
# ----------------------------------------------------------------------

@dataclass
class PulsedG2Report:
    g2_zero: float
    g2_zero_err: float
    g2_zero_raw: float
    peak_areas: dict
    is_single_emitter: bool
    bunching_amplitudes: dict
    normalization_area: float
    background_per_bin: float
    zero_peak_coverage: float
    histogram: G2Histogram = field(repr=False, default=None)


def analyze_pulsed_g2(hist: G2Histogram, rep_rate: float, peak_window: float | None = None,
                      norm_delay: float = 100.0, dead_time: float = 100.0,
                      bunching_delays=(1.0, 10.0)) -> PulsedG2Report:
    """Pulsed g2 by background-subtracted peak areas normalized at long delay.

    Parameters
    ----------
    rep_rate : float
        MHz.
    peak_window : float, optional
        Half-width (ns) of the integration window around each peak; default
        a quarter of the repetition period.
    norm_delay : float
        us; peaks with ``|tau|`` within 10% of it set the normalization.
    dead_time : float
        ns; bins with ``|tau| < dead_time`` are masked.
    bunching_delays : sequence of float
        us; normalized area of the peak nearest each delay (both signs
        averaged).

    Returns
    -------
    PulsedG2Report
        ``g2_zero`` is clipped at 0 (``g2_zero_raw`` keeps the signed
        value). It uses the unmasked part of the zero-delay window only;
        ``zero_peak_coverage`` is that part's fraction of the window.

    Raises
    ------
    ConfigurationError
        Normalization band (plus one period) outside the histogram.
    InsufficientDataError
        Normalization area not above 3 sigma of its Poisson error, or the
        whole zero-delay window masked.
    """
    if not rep_rate > 0:
        raise ParameterError("rep_rate must be > 0")
    period = 1e3 / rep_rate
    win = period / 4 if peak_window is None else float(peak_window)
    if not 0 < win < period / 2:
        raise ParameterError("peak_window must be in (0, period/2)")
    nd = norm_delay * 1e3
    if nd * 1.1 + period > hist.tau_max:
        raise ConfigurationError(
            f"histogram reaches {hist.tau_max:g} ns; normalization at {nd:g} ns +-10% needs "
            f"{nd * 1.1 + period:g} ns")
    tau = hist.tau
    raw = hist.raw.astype(float)
    masked = np.abs(tau) < dead_time
    k_near = np.rint(tau / period)
    dist = np.abs(tau - k_near * period)
    in_peak = dist <= win
    inter = ~in_peak & ~masked
    if not inter.any():
        raise InsufficientDataError("no unmasked inter-peak bins for the background")
    bg = float(raw[inter].mean())
    net = raw - bg
    use = in_peak & ~masked
    k_max = int(np.floor((hist.tau_max - win) / period))
    ks = np.arange(-k_max, k_max + 1)
    idx = (k_near + k_max).astype(np.int64)
    sel = use & (np.abs(k_near) <= k_max)
    area = np.bincount(idx[sel], weights=net[sel], minlength=ks.size)
    raw_area = np.bincount(idx[sel], weights=raw[sel], minlength=ks.size)
    n_bins = np.bincount(idx[in_peak & (np.abs(k_near) <= k_max)], minlength=ks.size)
    n_used = np.bincount(idx[sel], minlength=ks.size)
    norm_k = np.abs(np.abs(ks) * period - nd) <= 0.1 * nd
    if not norm_k.any():
        raise ConfigurationError("no peak within 10% of norm_delay")
    norm_area = float(area[norm_k].mean())
    norm_sigma = float(np.sqrt(raw_area[norm_k].sum())) / norm_k.sum()
    if not norm_area > 3 * norm_sigma:
        raise InsufficientDataError(
            f"normalization area {norm_area:.4g} is not above 3 sigma ({3 * norm_sigma:.4g})")
    zero = k_max
    coverage = n_used[zero] / n_bins[zero]
    if n_used[zero] == 0:
        raise InsufficientDataError(
            f"the zero-delay window (+-{win:g} ns) lies inside the {dead_time:g} ns mask")
    g0 = float(area[zero] / norm_area)
    g0_err = float(np.sqrt(raw_area[zero] + n_used[zero] ** 2 * bg / inter.sum())
                   / norm_area)
    normalized = np.where(masked, np.nan, np.clip(net, 0, None) / norm_area)
    out = G2Histogram(hist.bin_width, tau, hist.raw, masked, bg, norm_area, normalized)
    areas = {int(k): float(a / norm_area) for k, a in zip(ks, area) if n_used[k + k_max] > 0}
    bunch = {}
    for d in bunching_delays:
        k = max(1, int(round(d * 1e3 / period)))
        vals = [areas[s * k] for s in (-1, 1) if s * k in areas]
        if vals:
            bunch[float(d)] = float(np.mean(vals))
    g0c = max(g0, 0.0)  # subtraction noise can push the raw value below zero
    return PulsedG2Report(g0c, g0_err, g0, areas, g0c < 0.5, bunch, norm_area, bg,
                          float(coverage), out)


# ----------------------------------------------------------------------
# CW g2
# ----------------------------------------------------------------------

@dataclass
class CWG2Fit:
    g2_zero: float
    g2_zero_err: float
    recovery_time: float
    recovery_time_err: float
    fit_rms: float
    plateau: float
    nfev: int

    @property
    def antibunched(self):
        return self.g2_zero < 0.5


class _Trace:
    """Records residual norms of every evaluation for failure reports."""

    def __init__(self, fun):
        self.fun = fun
        self.norms = []

    def __call__(self, p):
        r = self.fun(p)
        self.norms.append(float(np.sqrt(np.mean(r ** 2))))
        return r

    def tail(self, n=5):
        return ", ".join(f"{v:.4g}" for v in self.norms[-n:])


def _solve(fun, x0, bounds, what, x_scale=1.0, jac="2-point"):
    trace = _Trace(fun)
    try:
        res = optimize.least_squares(trace, x0, jac=jac, bounds=bounds, method="trf",
                                     max_nfev=FIT_BUDGET, x_scale=x_scale,
                                     xtol=1e-12, ftol=1e-12, gtol=1e-12)
    except ValueError as exc:
        raise NumericalError(f"{what}: {exc}") from exc
    if res.status <= 0 or not np.all(np.isfinite(res.x)):
        raise NumericalError(f"{what} did not converge in {FIT_BUDGET} evaluations; "
                             f"residual rms trace: {trace.tail()}")
    return res


def _covariance(res):
    J = res.jac
    dof = max(1, res.fun.size - res.x.size)
    s2 = 2 * res.cost / dof
    try:
        return np.linalg.pinv(J.T @ J) * s2
    except np.linalg.LinAlgError:
        return np.full((res.x.size, res.x.size), np.nan)


def analyze_cw_g2(hist: G2Histogram, fit_window: float, plateau_window=None,
                  dead_time: float = 0.0) -> CWG2Fit:
    """Fit ``g2 = 1 - (1 - g0) exp(-|tau|/tau0)`` to a CW histogram.

    The histogram is divided by its mean over ``plateau_window``
    (``(lo, hi)`` in ns of ``|tau|``; default the outer quarter of the
    range). Bins with ``|tau| < dead_time`` are excluded. Poisson weights.
    ``g0`` is bounded to ``[0, 1]``.
    """
    tau = hist.tau
    if plateau_window is None:
        plateau_window = (0.75 * hist.tau_max, hist.tau_max)
    lo, hi = plateau_window
    pl = (np.abs(tau) >= lo) & (np.abs(tau) <= hi)
    if not pl.any() or hist.raw[pl].sum() == 0:
        raise InsufficientDataError("no counts in the plateau window")
    plateau = float(hist.raw[pl].mean())
    g = hist.raw / plateau
    sig = np.sqrt(np.maximum(hist.raw, 1.0)) / plateau
    use = (np.abs(tau) <= fit_window) & (np.abs(tau) >= dead_time)
    if use.sum() < 3:
        raise InsufficientDataError("fewer than 3 bins inside the fit window")
    t, y, s = np.abs(tau[use]), g[use], sig[use]

    def resid(p):
        g0, t0 = p
        return (1 - (1 - g0) * np.exp(-t / t0) - y) / s

    g_init = float(np.clip(y[np.argmin(t)], 0.0, 1.0))
    target = 1 - (1 - g_init) / np.e
    order = np.argsort(t)
    above = order[y[order] >= target]
    t_init = float(t[above[0]]) if above.size else float(fit_window) / 3
    t_init = max(t_init, hist.bin_width)
    res = _solve(resid, [min(g_init, 1 - 1e-6), t_init],
                 ([0.0, 1e-3 * hist.bin_width], [1.0, 1e3 * fit_window]), "CW g2 fit",
                 x_scale=[1.0, t_init])
    cov = _covariance(res)
    model = 1 - (1 - res.x[0]) * np.exp(-t / res.x[1])
    return CWG2Fit(float(res.x[0]), float(np.sqrt(max(cov[0, 0], 0))), float(res.x[1]),
                   float(np.sqrt(max(cov[1, 1], 0))), float(np.sqrt(np.mean((model - y) ** 2))),
                   plateau, int(res.nfev))


# ----------------------------------------------------------------------
# Intensity statistics
# ----------------------------------------------------------------------

def brightest_k_aggregate(measurements, n: int = 10, k: int = 3) -> float:
    """Mean of the ``k`` largest of ``n`` intensity readings."""
    m = np.asarray(measurements, dtype=float)
    if k > n:
        raise ParameterError(f"k = {k} exceeds n = {n}")
    if k < 1:
        raise ParameterError("k must be >= 1")
    if m.size != n:
        raise ParameterError(f"expected {n} measurements, got {m.size}")
    return float(np.mean(np.sort(m)[-k:]))


def intensity_windows(stream: PhotonStream, window: float, n: int | None = None):
    """Count rate (1/s) in consecutive windows of ``window`` seconds, both channels."""
    w = int(round(window * 1e12))
    if w <= 0:
        raise ParameterError("window must be > 0")
    total = stream.duration // w if n is None else int(n)
    if total < 1:
        raise ParameterError("stream shorter than one window")
    idx = stream.timestamp // w
    counts = np.bincount(idx[idx < total], minlength=total)
    return counts / window


# ----------------------------------------------------------------------
# Saturation and spectra
# ----------------------------------------------------------------------

@dataclass
class SaturationFit:
    i_infinity: float
    p_sat: float
    residual_rms: float
    i_infinity_err: float = float("nan")
    p_sat_err: float = float("nan")


SATURATION_NOISE = ("relative", "poisson", "absolute")


def fit_saturation(power, intensity, noise: str = "relative") -> SaturationFit:
    """Least squares on ``I = I_inf P / (P + P_sat)``.

    Starts from ``P_sat`` = median power and ``I_inf`` = max intensity;
    both axes are scaled by those values internally so rescaling the data
    rescales the result exactly.

    Parameters
    ----------
    noise : {"relative", "poisson", "absolute"}
        Residual weighting: divided by the measured intensity (multiplicative
        noise, e.g. blinking-limited readings), by its square root (count
        noise), or unweighted.
    """
    if noise not in SATURATION_NOISE:
        raise ParameterError(f"noise must be one of {SATURATION_NOISE}")
    P = np.asarray(power, dtype=float)
    I = np.asarray(intensity, dtype=float)
    if P.shape != I.shape or P.ndim != 1:
        raise ParameterError("power and intensity must be 1-D arrays of equal length")
    if np.unique(P).size < 3:
        raise ParameterError("need at least 3 distinct powers")
    if np.any(P < 0) or not np.all(np.isfinite(I)):
        raise ParameterError("powers must be >= 0 and intensities finite")
    ps, is_ = float(np.median(P)), float(np.max(I))
    if not (ps > 0 and is_ > 0):
        raise ParameterError("median power and max intensity must be > 0")
    x, y = P / ps, I / is_
    if noise != "absolute" and np.any(I <= 0):
        raise ParameterError(f"{noise} weighting needs intensities > 0")
    wt = {"relative": y, "poisson": np.sqrt(y), "absolute": np.ones_like(y)}[noise]

    def resid(p):
        return (p[0] * x / (x + p[1]) - y) / wt

    # analytic Jacobian: finite differences cap the solution at ~1e-9 relative
    def jac(p):
        return np.column_stack([x / (x + p[1]) / wt, -p[0] * x / (x + p[1]) ** 2 / wt])

    res = _solve(resid, [1.0, 1.0], ([0.0, 1e-9], [np.inf, np.inf]), "saturation fit", jac=jac)
    cov = _covariance(res)
    if not (res.x[0] > 0 and res.x[1] > 0):
        raise NumericalError("saturation fit ended at a non-positive parameter")
    rms = np.sqrt(np.mean((res.x[0] * x / (x + res.x[1]) - y) ** 2))
    return SaturationFit(float(res.x[0] * is_), float(res.x[1] * ps), float(rms * is_),
                         float(np.sqrt(max(cov[0, 0], 0)) * is_),
                         float(np.sqrt(max(cov[1, 1], 0)) * ps))


@dataclass
class PeakFit:
    center: float
    fwhm: float
    amplitude: float  # integrated counts above baseline
    baseline: float   # counts per bin
    model: str
    fit_rms: float
    center_err: float = float("nan")
    fwhm_err: float = float("nan")


def _line_cdf(model, x, c, f):
    if model == "gaussian":
        return special.ndtr((x - c) / (f / (2 * np.sqrt(2 * np.log(2)))))
    return np.arctan(2 * (x - c) / f) / np.pi


def fit_peak(spec: Spectrum, model: str = "gaussian") -> PeakFit:
    """Single line plus constant baseline, integrated over each bin.

    Raises
    ------
    NoPeakError
        If no bin rises above ``median + 3 sqrt(max(median, 1))``.
    """
    if model not in ("gaussian", "lorentzian"):
        raise ParameterError("model must be 'gaussian' or 'lorentzian'")
    if spec.counts.size < 10:
        raise DataError("peak fit needs at least 10 bins")
    y_raw = spec.counts
    med = float(np.median(y_raw))
    i_max = int(np.argmax(y_raw))
    if not y_raw[i_max] > med + 3 * np.sqrt(max(med, 1.0)):
        raise NoPeakError(f"no bin above baseline {med:.4g} + 3 sigma")
    scale = float(y_raw[i_max])
    y = y_raw / scale
    edges = spec.edges()
    lo_e, hi_e = edges[:-1], edges[1:]
    w = spec.wavelength
    base0 = float(np.min(y))
    half = base0 + 0.5 * (y[i_max] - base0)
    left = i_max
    while left > 0 and y[left] > half:
        left -= 1
    right = i_max
    while right < y.size - 1 and y[right] > half:
        right += 1
    bw = float(hi_e[i_max] - lo_e[i_max])
    f0 = max(float(w[right] - w[left]), bw)
    a0 = max(float(np.sum(y - base0)), 1e-12)

    def resid(p):
        a, c, f, b = p
        return a * (_line_cdf(model, hi_e, c, f) - _line_cdf(model, lo_e, c, f)) + b - y

    span = float(edges[-1] - edges[0])
    res = _solve(resid, [a0, float(w[i_max]), f0, base0],
                 ([0.0, float(w[0]), 1e-6 * bw, -np.inf], [np.inf, float(w[-1]), span * 10, np.inf]),
                 "peak fit", x_scale=[a0, bw, f0, 1.0])
    cov = _covariance(res)
    a, c, f, b = res.x
    return PeakFit(float(c), float(f), float(a * scale), float(b * scale), model,
                   float(np.sqrt(np.mean(res.fun ** 2)) * scale),
                   float(np.sqrt(max(cov[1, 1], 0))), float(np.sqrt(max(cov[2, 2], 0))))


def classify_emission(fit) -> str:
    """Label a line by its centre (nm); accepts a PeakFit or a number."""
    c = float(getattr(fit, "center", fit))
    lo, hi = EMISSION_BANDS["perovskite"]
    if lo <= c <= hi:
        return "perovskite"
    lo, hi = EMISSION_BANDS["siv_zpl"]
    if lo <= c <= hi:
        return "siv_zpl"
    lo, hi = EMISSION_BANDS["siv_strained"]
    if lo <= c <= hi:
        return "siv_strained"
    lo, hi = EMISSION_BANDS["graphite"]
    if lo <= c <= hi:
        return "graphite"
    return "unknown"


# ----------------------------------------------------------------------
# Polarization
# ----------------------------------------------------------------------

@dataclass
class PolarizationState:
    S0: float
    S1: float
    S2: float
    S3: float
    degree_of_polarization: float


def stokes(i0, i45, i90, i135, i_rcp, i_lcp) -> PolarizationState:
    """Stokes vector from six analyzer intensities.

    The degree of polarization is clamped to 1; a warning is issued when the
    raw value exceeds it by more than 1e-6 (inconsistent inputs).
    """
    vals = np.array([i0, i45, i90, i135, i_rcp, i_lcp], dtype=float)
    if np.any(vals < 0) or not np.all(np.isfinite(vals)):
        raise DataError("intensities must be finite and >= 0")
    s0 = vals[0] + vals[2]
    if s0 <= 0:
        raise DataError("S0 = i0 + i90 must be > 0")
    s1 = vals[0] - vals[2]
    s2 = vals[1] - vals[3]
    s3 = vals[4] - vals[5]
    dop = float(np.sqrt(s1 ** 2 + s2 ** 2 + s3 ** 2) / s0)
    if dop > 1 + 1e-6:
        warnings.warn(f"degree of polarization {dop:.6g} > 1 clamped; inputs inconsistent",
                      RuntimeWarning, stacklevel=2)
    return PolarizationState(float(s0), float(s1), float(s2), float(s3), min(dop, 1.0))
