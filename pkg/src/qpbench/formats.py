"""
Readers and writers for the on-disk formats.

Binary timestamps
-----------------
``b"QPT1"``, a little-endian u16 format version and a u64 resolution (ps
per tick), followed by packed 9-byte records ``(channel u8, ticks u64)``.

CSV
---
Floats are written as their shortest round-trip representation so every
reader recovers the written values exactly. Optional metadata lines start with ``#`` and carry
``key=value`` pairs.
"""

from __future__ import annotations

import math
import struct

import numpy as np

from .errors import DataError
from .ion_exchange import IndexMap, WaveguideMode2D
from .photon_stats import G2Histogram
from .records import PhotonStream, Spectrum
from .taper import FLAME_WIDTH_MM, PullPlan, TaperProfile

MAGIC = b"QPT1"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sHQ")
RECORD_DTYPE = np.dtype([("channel", "u1"), ("ticks", "<u8")])

SPECTRUM_HEADER = "wavelength_nm,counts"
PROFILE_HEADER = "z_mm,r_um"
PLAN_HEADER = "t_s,left_mm,right_mm,flame_mm,hot_zone_mm"
G2_HEADER = "tau_ns,raw,normalized,masked"
TIMESTAMP_CSV_HEADER = "channel,timestamp_ps"
INTENSITY_HEADER = "r_um,intensity"


def _fmt(v):
    return repr(float(v)) if math.isfinite(v) else ("nan" if math.isnan(v) else
                                                   ("inf" if v > 0 else "-inf"))


def _open_read(path, mode="r"):
    try:
        return open(path, mode)
    except FileNotFoundError:
        raise DataError(f"{path}: no such file") from None
    except OSError as exc:
        raise DataError(f"{path}: {exc.strerror}") from None


# ----------------------------------------------------------------------
# Binary timestamps
# ----------------------------------------------------------------------

def write_timestamps(path, stream: PhotonStream, ps_per_tick: int = 1):
    """Write a sorted stream; timestamps must be whole multiples of ``ps_per_tick``."""
    stream.validate()
    ps_per_tick = int(ps_per_tick)
    if ps_per_tick < 1:
        raise DataError("ps_per_tick must be >= 1")
    ticks, rem = np.divmod(stream.timestamp, ps_per_tick)
    if np.any(rem):
        i = int(np.flatnonzero(rem)[0])
        raise DataError(f"record {i}: {stream.timestamp[i]} ps is not a multiple of "
                        f"{ps_per_tick} ps")
    rec = np.empty(len(stream), dtype=RECORD_DTYPE)
    rec["channel"] = stream.channel
    rec["ticks"] = ticks
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, ps_per_tick))
        fh.write(rec.tobytes())


def read_timestamps(path) -> PhotonStream:
    """Read and validate a timestamp file; times are returned in ps."""
    with _open_read(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise DataError(f"{path}: truncated header")
    magic, version, ps_per_tick = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported format version {version}")
    if ps_per_tick < 1:
        raise DataError(f"{path}: resolution must be >= 1 ps per tick")
    body = memoryview(data)[_HEADER.size:]
    if len(body) % RECORD_DTYPE.itemsize:
        raise DataError(f"{path}: {len(body)} record bytes is not a multiple of "
                        f"{RECORD_DTYPE.itemsize}")
    rec = np.frombuffer(body, dtype=RECORD_DTYPE)
    ticks = rec["ticks"]
    if ticks.size and int(ticks.max()) > np.iinfo(np.int64).max // ps_per_tick:
        raise DataError(f"{path}: timestamps overflow 64-bit picoseconds")
    stream = PhotonStream(rec["channel"].copy(), ticks.astype(np.int64) * ps_per_tick)
    try:
        return stream.validate()
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


def write_timestamps_csv(path, stream: PhotonStream):
    with open(path, "w") as fh:
        fh.write(TIMESTAMP_CSV_HEADER + "\n")
        for c, t in zip(stream.channel.tolist(), stream.timestamp.tolist()):
            fh.write(f"{c},{t}\n")


def read_timestamps_csv(path) -> PhotonStream:
    _, rows = read_table(path, TIMESTAMP_CSV_HEADER, int)
    bad = np.flatnonzero((rows[:, 0] < 0) | (rows[:, 0] > 1))
    if bad.size:
        raise DataError(f"{path}: record {bad[0]}: channel {rows[bad[0], 0]} not in {{0, 1}}")
    stream = PhotonStream(rows[:, 0], rows[:, 1])
    try:
        return stream.validate()
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


# ----------------------------------------------------------------------
# CSV tables
# ----------------------------------------------------------------------

def _parse_meta(line):
    meta = {}
    for tok in line.lstrip("#").split():
        if "=" in tok:
            k, v = tok.split("=", 1)
            meta[k] = v
    return meta


def read_table(path, header, kind=float):
    """Metadata dict and a 2-D array of the rows below a mandatory header."""
    meta = {}
    rows = []
    ncol = len(header.split(","))
    seen_header = False
    with _open_read(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                meta.update(_parse_meta(line))
                continue
            if not seen_header:
                if line.replace(" ", "") != header:
                    raise DataError(f"{path}:{lineno}: expected header '{header}', got '{line}'")
                seen_header = True
                continue
            parts = line.split(",")
            if len(parts) != ncol:
                raise DataError(f"{path}:{lineno}: expected {ncol} columns, got {len(parts)}")
            try:
                rows.append([kind(p) for p in parts])
            except ValueError:
                raise DataError(f"{path}:{lineno}: cannot parse '{line}'") from None
    if not seen_header:
        raise DataError(f"{path}: missing header '{header}'")
    dtype = np.int64 if kind is int else float
    return meta, np.array(rows, dtype=dtype).reshape(-1, ncol)


def write_table(path, header, columns, meta=None):
    with open(path, "w") as fh:
        if meta:
            fh.write("# " + " ".join(f"{k}={_fmt(v)}" for k, v in meta.items()) + "\n")
        fh.write(header + "\n")
        for row in zip(*columns):
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _meta_float(meta, key, path, default=None):
    if key not in meta:
        if default is not None:
            return default
        raise DataError(f"{path}: metadata '{key}' missing")
    try:
        return float(meta[key])
    except ValueError:
        raise DataError(f"{path}: metadata '{key}' = '{meta[key]}' is not a number") from None


def write_spectrum(path, spec: Spectrum):
    write_table(path, SPECTRUM_HEADER, [spec.wavelength, spec.counts])


def read_spectrum(path) -> Spectrum:
    _, rows = read_table(path, SPECTRUM_HEADER)
    try:
        return Spectrum(rows[:, 0], rows[:, 1])
    except DataError as exc:
        raise DataError(f"{path}: {exc}") from None


def write_intensity(path, r, intensity):
    write_table(path, INTENSITY_HEADER, [r, intensity])


def write_profile(path, profile):
    write_table(path, PROFILE_HEADER, [profile.z, profile.r],
                {"initial_radius_um": profile.initial_radius,
                 "waist_length_mm": profile.waist_length})


def read_profile(path):
    meta, rows = read_table(path, PROFILE_HEADER)
    if rows.shape[0] < 2:
        raise DataError(f"{path}: a profile needs at least 2 rows")
    z, r = rows[:, 0], rows[:, 1]
    init = meta.get("initial_radius_um")
    wl = meta.get("waist_length_mm")
    try:
        return TaperProfile.from_samples(
            z, r, None if init is None else _meta_float(meta, "initial_radius_um", path),
            None if wl is None else _meta_float(meta, "waist_length_mm", path))
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def write_plan(path, plan):
    write_table(path, PLAN_HEADER, [plan.t, plan.left, plan.right, plan.flame, plan.hot_zone],
                {"initial_separation_mm": plan.initial_separation,
                 "flame_width_mm": plan.flame_width})


def read_plan(path):
    """Elongation is recovered as stage separation minus the initial separation."""
    meta, rows = read_table(path, PLAN_HEADER)
    if rows.shape[0] < 2:
        raise DataError(f"{path}: a plan needs at least 2 rows")
    t, left, right, flame, hot = rows.T
    sep = right - left
    s0 = _meta_float(meta, "initial_separation_mm", path, default=float(sep[0]))
    fw = _meta_float(meta, "flame_width_mm", path, default=FLAME_WIDTH_MM)
    try:
        return PullPlan(t, sep - s0, hot, left, right, flame, s0, fw)
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def write_index_map(path, index_map):
    _write_grid(path, index_map.n, index_map.x, index_map.y,
                {"n_sub": index_map.n_substrate})


def read_index_map(path):
    meta, n, x, y = _read_grid(path)
    try:
        return IndexMap(n, x, y, _meta_float(meta, "n_sub", path))
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None


def write_mode_field(path, mode):
    _write_grid(path, mode.field, mode.x, mode.y,
                {"n_eff": mode.n_eff, "wavelength_um": mode.wavelength})


def read_mode_field(path):
    meta, f, x, y = _read_grid(path)
    return WaveguideMode2D(_meta_float(meta, "n_eff", path), f,
                           _meta_float(meta, "wavelength_um", path), x, y)


def _write_grid(path, values, x, y, extra):
    meta = {"dx_um": x[1] - x[0], "dy_um": y[1] - y[0], "x0_um": x[0], "y0_um": y[0]}
    meta.update(extra)
    with open(path, "w") as fh:
        fh.write("# " + " ".join(f"{k}={_fmt(v)}" for k, v in meta.items()) + "\n")
        # exact node coordinates; x0 + i dx alone is not bit-exact
        fh.write("# x_um=" + ",".join(_fmt(v) for v in x) + "\n")
        fh.write("# y_um=" + ",".join(_fmt(v) for v in y) + "\n")
        for row in values:
            fh.write(",".join(_fmt(v) for v in row) + "\n")


def _read_grid(path):
    meta = {}
    rows = []
    with _open_read(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                meta.update(_parse_meta(line))
                continue
            try:
                rows.append([float(p) for p in line.split(",")])
            except ValueError:
                raise DataError(f"{path}:{lineno}: cannot parse row") from None
            if len(rows[-1]) != len(rows[0]):
                raise DataError(f"{path}:{lineno}: ragged row ({len(rows[-1])} columns, "
                                f"expected {len(rows[0])})")
    if not rows:
        raise DataError(f"{path}: no grid rows")
    values = np.array(rows)
    dx = _meta_float(meta, "dx_um", path)
    dy = _meta_float(meta, "dy_um", path)
    x0 = _meta_float(meta, "x0_um", path, default=-0.5 * dx * (values.shape[1] - 1))
    y0 = _meta_float(meta, "y0_um", path, default=0.0)
    x = _coords(meta, "x_um", path, values.shape[1], x0, dx)
    y = _coords(meta, "y_um", path, values.shape[0], y0, dy)
    return meta, values, x, y


def _coords(meta, key, path, n, start, step):
    if key not in meta:
        return start + step * np.arange(n)
    try:
        c = np.array([float(v) for v in meta[key].split(",")])
    except ValueError:
        raise DataError(f"{path}: metadata '{key}' is not a number list") from None
    if c.size != n:
        raise DataError(f"{path}: {key} has {c.size} nodes, grid has {n}")
    return c


def write_g2(path, hist):
    norm = hist.normalized if hist.normalized is not None else np.full(hist.raw.size, np.nan)
    with open(path, "w") as fh:
        fh.write(G2_HEADER + "\n")
        for t, r, v, m in zip(hist.tau.tolist(), hist.raw.tolist(), norm.tolist(),
                              hist.masked.tolist()):
            fh.write(f"{_fmt(t)},{r},{_fmt(v)},{int(m)}\n")


def read_g2(path):
    _, rows = read_table(path, G2_HEADER)
    if rows.shape[0] < 1:
        raise DataError(f"{path}: empty histogram")
    tau = rows[:, 0]
    bw = float(tau[1] - tau[0]) if tau.size > 1 else 1.0
    raw = rows[:, 1]
    if np.any(raw != np.round(raw)):
        raise DataError(f"{path}: raw counts must be integers")
    norm = rows[:, 2]
    return G2Histogram(bw, tau, raw.astype(np.int64), rows[:, 3].astype(bool),
                       normalized=None if np.all(np.isnan(norm)) else norm)
