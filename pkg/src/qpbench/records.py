"""Photon-stream and spectrum containers shared by the simulator and the analysis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError

CHANNEL_A = 0
CHANNEL_B = 1


@dataclass
class PhotonStream:
    """Channel-tagged detection times.

    Attributes
    ----------
    channel : ndarray of uint8
        0 (A) or 1 (B).
    timestamp : ndarray of int64
        Picoseconds since the start of the stream, globally non-decreasing and
        strictly increasing within each channel.
    duration : int
        Acquisition length in ps (at least the last timestamp).
    """
    channel: np.ndarray
    timestamp: np.ndarray
    duration: int = 0

    def __post_init__(self):
        self.channel = np.asarray(self.channel, dtype=np.uint8)
        self.timestamp = np.asarray(self.timestamp, dtype=np.int64)
        if self.channel.shape != self.timestamp.shape or self.channel.ndim != 1:
            raise DataError("channel and timestamp must be 1-D arrays of equal length")
        if self.timestamp.size:
            self.duration = int(max(self.duration, self.timestamp[-1]))

    def __len__(self):
        return int(self.timestamp.size)

    def times(self, channel):
        return self.timestamp[self.channel == channel]

    @property
    def a(self):
        return self.times(CHANNEL_A)

    @property
    def b(self):
        return self.times(CHANNEL_B)

    def validate(self):
        """Raise DataError unless the stream is sorted with valid channels."""
        if self.channel.size and self.channel.max() > 1:
            i = int(np.flatnonzero(self.channel > 1)[0])
            raise DataError(f"record {i}: channel {self.channel[i]} not in {{0, 1}}")
        bad = np.flatnonzero(np.diff(self.timestamp) < 0)
        if bad.size:
            raise DataError(f"records {bad[0]} and {bad[0] + 1} are out of time order")
        for ch in (CHANNEL_A, CHANNEL_B):
            t = self.times(ch)
            bad = np.flatnonzero(np.diff(t) <= 0)
            if bad.size:
                raise DataError(f"channel {ch}: timestamps not strictly increasing at "
                                f"{t[bad[0] + 1]} ps")
        if np.any(self.timestamp < 0):
            raise DataError("negative timestamp")
        return self


@dataclass
class Spectrum:
    """Counts per wavelength bin; ``wavelength`` holds strictly increasing bin centres (nm)."""
    wavelength: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        self.wavelength = np.asarray(self.wavelength, dtype=float)
        self.counts = np.asarray(self.counts, dtype=float)
        if self.wavelength.ndim != 1 or self.wavelength.shape != self.counts.shape:
            raise DataError("wavelength and counts must be 1-D arrays of equal length")
        if np.any(np.diff(self.wavelength) <= 0):
            i = int(np.flatnonzero(np.diff(self.wavelength) <= 0)[0])
            raise DataError(f"wavelengths not strictly increasing at row {i + 1}")
        if np.any(self.counts < 0) or not np.all(np.isfinite(self.counts)):
            raise DataError("counts must be finite and >= 0")

    def edges(self):
        """Bin edges halfway between centres; the outer bins are mirrored."""
        w = self.wavelength
        if w.size == 1:
            return np.array([w[0] - 0.5, w[0] + 0.5])
        mid = 0.5 * (w[1:] + w[:-1])
        return np.concatenate([[2 * w[0] - mid[0]], mid, [2 * w[-1] - mid[-1]]])
