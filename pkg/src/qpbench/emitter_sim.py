"""
Monte Carlo single-photon emitter and Hanbury Brown-Twiss detection chain.

Times are integer picoseconds. All randomness comes from
``numpy.random.default_rng(seed)`` so equal seeds give bit-identical output.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import special

from .errors import ParameterError
from .records import PhotonStream, Spectrum

PS_PER_NS = 1000
PS_PER_S = 10 ** 12

# Assumed defaults; the emitters' lifetimes are not reported.
DEFAULT_LIFETIME_NS = 20.0
PEROVSKITE_SATURATION_NW = 80.0
PEROVSKITE_CENTER_NM = 518.0
PEROVSKITE_FWHM_NM = 16.0

MAX_DURATION_S = 1.0e6


class ConfigurationWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Pulsed:
    rep_rate: float  # MHz
    power: float     # nW


@dataclass(frozen=True)
class CW:
    power: float  # nW


@dataclass(frozen=True)
class Blinking:
    mean_on: float   # us
    mean_off: float  # us

    @property
    def on_fraction(self):
        return self.mean_on / (self.mean_on + self.mean_off)


@dataclass(frozen=True)
class LineShape:
    center: float = PEROVSKITE_CENTER_NM
    fwhm: float = PEROVSKITE_FWHM_NM
    shape: str = "gaussian"

    def __post_init__(self):
        if self.shape not in ("gaussian", "lorentzian"):
            raise ParameterError("shape must be 'gaussian' or 'lorentzian'")
        if not self.fwhm > 0:
            raise ParameterError("fwhm must be > 0")

    def cdf(self, wl):
        wl = np.asarray(wl, dtype=float)
        if self.shape == "gaussian":
            sigma = self.fwhm / (2 * np.sqrt(2 * np.log(2)))
            return special.ndtr((wl - self.center) / sigma)
        return 0.5 + np.arctan(2 * (wl - self.center) / self.fwhm) / np.pi


@dataclass(frozen=True)
class EmitterModel:
    """Two-level emitter with optional blinking and residual multiphoton emission.

    ``lifetime`` in ns, ``saturation_power`` in nW. ``excitation`` is
    `Pulsed` or `CW`.
    """
    excitation: Pulsed | CW = field(default_factory=lambda: Pulsed(5.0, PEROVSKITE_SATURATION_NW))
    lifetime: float = DEFAULT_LIFETIME_NS
    saturation_power: float = PEROVSKITE_SATURATION_NW
    blinking: Blinking | None = None
    multiphoton_prob: float = 0.0
    quantum_efficiency: float = 1.0
    spectrum: LineShape = field(default_factory=LineShape)

    def __post_init__(self):
        if not self.lifetime > 0:
            raise ParameterError("lifetime must be > 0")
        if not self.saturation_power > 0:
            raise ParameterError("saturation_power must be > 0")
        for name in ("multiphoton_prob", "quantum_efficiency"):
            if not 0 <= getattr(self, name) <= 1:
                raise ParameterError(f"{name} must be in [0, 1]")
        if self.excitation.power < 0:
            raise ParameterError("excitation power must be >= 0")
        if self.blinking is not None and not (self.blinking.mean_on > 0 and self.blinking.mean_off > 0):
            raise ParameterError("blinking dwell times must be > 0")
        if isinstance(self.excitation, Pulsed):
            if not self.excitation.rep_rate > 0:
                raise ParameterError("rep_rate must be > 0")
            ratio = 1e3 / self.excitation.rep_rate / self.lifetime
            if ratio < 10:
                warnings.warn(f"pulse period is only {ratio:.3g} lifetimes; emission from "
                              "successive pulses overlaps", ConfigurationWarning, stacklevel=2)

    @property
    def saturation_parameter(self):
        return self.excitation.power / self.saturation_power

    @property
    def excitation_probability(self):
        s = self.saturation_parameter
        return s / (1 + s)

    def expected_rate(self):
        """Mean emission rate (1/s) ignoring multiphoton events."""
        on = 1.0 if self.blinking is None else self.blinking.on_fraction
        p = self.excitation_probability * self.quantum_efficiency * on
        if isinstance(self.excitation, Pulsed):
            return self.excitation.rep_rate * 1e6 * p
        return p / (self.lifetime * 1e-9)


@dataclass
class EmissionEvents:
    """Sorted emission times (ps) before detection."""
    times: np.ndarray
    duration: int
    pulse_period: float | None = None  # ps


@dataclass(frozen=True)
class DetectionConfig:
    """HBT detection chain. Times in ns except jitter (ps); background in counts/s per channel."""
    split_ratio: float = 0.5
    detector_dead_time: float = 0.0
    router_dead_time: float = 100.0
    timing_jitter_sigma: float = 0.0
    detection_efficiency: float = 1.0
    background_rate: float = 0.0

    def __post_init__(self):
        for name in ("detector_dead_time", "router_dead_time", "timing_jitter_sigma",
                     "background_rate"):
            if getattr(self, name) < 0:
                raise ParameterError(f"{name} must be >= 0")
        for name in ("split_ratio", "detection_efficiency"):
            if not 0 <= getattr(self, name) <= 1:
                raise ParameterError(f"{name} must be in [0, 1]")


def _telegraph_on(rng, blinking, duration_ps):
    """Switch times of an on/off telegraph started in its stationary state.

    Returns ``(edges, start_on)``; the state flips at each edge.
    """
    on_ps = blinking.mean_on * 1e6
    off_ps = blinking.mean_off * 1e6
    start_on = bool(rng.random() < blinking.on_fraction)
    pair = [on_ps, off_ps] if start_on else [off_ps, on_ps]
    n_pairs = int(duration_ps / (on_ps + off_ps) * 1.05 + 10) + 1
    means = np.tile(pair, n_pairs)  # even length keeps the alternation across chunks
    edges = []
    total = 0.0
    while total <= duration_ps:
        c = total + np.cumsum(rng.exponential(means))
        edges.append(c)
        total = c[-1]
    return np.concatenate(edges), start_on


def _is_on(times, edges, start_on):
    flips = np.searchsorted(edges, times, side="right")
    return (flips % 2 == 0) == start_on


def simulate_emission(model: EmitterModel, duration: float, seed: int) -> EmissionEvents:
    """Emission times over ``duration`` seconds.

    Pulsed: each pulse excites with probability ``s/(1+s)``; the photon
    leaves after an exponential delay with mean ``lifetime``; with
    probability ``multiphoton_prob`` a second photon with an independent
    delay follows. CW: a renewal process whose intervals are the lifetime
    (dead interval) plus an exponential wait of mean ``lifetime/s``, so the
    mean rate is ``s/(1+s)/lifetime``. In both cases emission is suppressed
    while a blinking emitter is off and photons are kept with probability
    ``quantum_efficiency``.
    """
    if not duration > 0:
        raise ParameterError("duration must be > 0")
    if duration > MAX_DURATION_S:
        raise ParameterError(f"duration above {MAX_DURATION_S:g} s")
    rng = np.random.default_rng(seed)
    dur_ps = int(round(duration * PS_PER_S))
    tau_ps = model.lifetime * PS_PER_NS
    q = model.excitation_probability
    period = None
    if q == 0:
        return EmissionEvents(np.zeros(0, dtype=np.int64), dur_ps, None)
    if isinstance(model.excitation, Pulsed):
        period = PS_PER_S / (model.excitation.rep_rate * 1e6)
        n_pulses = int(np.floor(dur_ps / period))
        # excited pulses by geometric skipping (memory ~ number of emissions)
        chunk = int(n_pulses * q * 1.05 + 10 * np.sqrt(n_pulses * q + 1) + 16)
        idx = []
        last = -1
        while last < n_pulses:
            gaps = rng.geometric(q, size=chunk)
            k = last + np.cumsum(gaps)
            idx.append(k)
            last = int(k[-1])
        k = np.concatenate(idx)
        k = k[k < n_pulses]
        base = k * period
    else:
        s = model.saturation_parameter
        mean_gap = tau_ps * (1 + 1 / s)
        chunk = int(dur_ps / mean_gap * 1.05 + 10 * np.sqrt(dur_ps / mean_gap + 1) + 16)
        parts = []
        t = 0.0
        while t <= dur_ps:
            gaps = tau_ps + rng.exponential(tau_ps / s, size=chunk)
            c = t + np.cumsum(gaps)
            parts.append(c)
            t = c[-1]
        base = np.concatenate(parts)
        base = base[base < dur_ps]
        # emission marks the end of each cycle; the excitation preceded it
        base = base - tau_ps

    if model.blinking is not None:
        edges, start_on = _telegraph_on(rng, model.blinking, dur_ps)
        base = base[_is_on(base, edges, start_on)]

    if isinstance(model.excitation, Pulsed):
        first = base + rng.exponential(tau_ps, size=base.size)
    else:
        first = base + tau_ps
    extra_mask = rng.random(base.size) < model.multiphoton_prob
    extra = base[extra_mask] + rng.exponential(tau_ps, size=int(extra_mask.sum()))
    photons = np.concatenate([first, extra])
    photons = photons[rng.random(photons.size) < model.quantum_efficiency]
    photons = np.sort(np.rint(photons).astype(np.int64))
    photons = photons[(photons >= 0) & (photons < dur_ps)]
    return EmissionEvents(photons, dur_ps, period)


@numba.njit(cache=True)
def _dead_time_filter(t, ch, det_dead, router_dead):
    n = t.size
    keep = np.zeros(n, dtype=np.bool_)
    last_ch = np.full(2, -(2 ** 62), dtype=np.int64)
    last_any = -(2 ** 62)
    for i in range(n):
        c = ch[i]
        ti = t[i]
        if ti - last_any < router_dead:
            continue
        if ti <= last_ch[c] or ti - last_ch[c] < det_dead:
            continue
        keep[i] = True
        last_ch[c] = ti
        last_any = ti
    return keep


def apply_detection(events: EmissionEvents, det: DetectionConfig, seed: int) -> PhotonStream:
    """Detected records after loss, beam splitter, jitter, background and dead times.

    Dead times are non-paralyzable: a record is registered only if it comes
    at least ``detector_dead_time`` after the previous registered record on
    its channel and at least ``router_dead_time`` after the previous
    registered record on either channel.
    """
    times = np.asarray(events.times, dtype=np.int64)
    if np.any(np.diff(times) < 0):
        raise ParameterError("emission events must be time-ordered")
    rng = np.random.default_rng(seed)
    kept = times[rng.random(times.size) < det.detection_efficiency]
    ch = np.where(rng.random(kept.size) < det.split_ratio, 0, 1).astype(np.uint8)
    if det.timing_jitter_sigma > 0:
        kept = kept + np.rint(rng.normal(0.0, det.timing_jitter_sigma, kept.size)).astype(np.int64)
    dur = int(events.duration)
    bg_t, bg_c = [], []
    for c in (0, 1):
        n = rng.poisson(det.background_rate * dur / PS_PER_S)
        bg_t.append(rng.integers(0, max(dur, 1), size=n, dtype=np.int64))
        bg_c.append(np.full(n, c, dtype=np.uint8))
    t_all = np.concatenate([kept] + bg_t)
    c_all = np.concatenate([ch] + bg_c)
    inside = (t_all >= 0) & (t_all <= dur)
    t_all, c_all = t_all[inside], c_all[inside]
    order = np.lexsort((c_all, t_all))
    t_all, c_all = t_all[order], c_all[order]
    keep = _dead_time_filter(t_all, c_all, int(round(det.detector_dead_time * PS_PER_NS)),
                             int(round(det.router_dead_time * PS_PER_NS)))
    return PhotonStream(c_all[keep], t_all[keep], dur)


def simulate_stream(model, det, duration, seed):
    """Emission followed by detection; the detection draw uses ``seed + 1``."""
    return apply_detection(simulate_emission(model, duration, seed), det, seed + 1)


def simulate_spectrum(model: EmitterModel, total_counts: int, bins, seed: int) -> Spectrum:
    """Multinomial draw of ``total_counts`` over the bin-integrated line shape.

    ``bins`` are strictly increasing bin centres (nm); counts are
    conditioned on falling inside the grid.
    """
    if total_counts <= 0:
        raise ParameterError("total_counts must be > 0")
    bins = np.asarray(bins, dtype=float)
    spec = Spectrum(bins, np.zeros_like(bins))
    edges = spec.edges()
    line = model.spectrum
    if edges[0] > line.center - 3 * line.fwhm or edges[-1] < line.center + 3 * line.fwhm:
        warnings.warn("wavelength grid does not cover +-3 FWHM around the line centre",
                      ConfigurationWarning, stacklevel=2)
    p = np.diff(line.cdf(edges))
    if p.sum() <= 0:
        raise ParameterError("line shape has no weight on the wavelength grid")
    p = np.clip(p / p.sum(), 0, None)
    rng = np.random.default_rng(seed)
    counts = rng.multinomial(int(total_counts), p / p.sum())
    return Spectrum(bins, counts.astype(float))
