"""
Heat-and-pull taper kinematics.

Model: a hot zone of effective width ``L`` centred between two stages. Glass
inside the hot zone is soft and stretches uniformly; glass outside is rigid
and moves with its stage. Volume is conserved. With ``L`` constant this gives
an exponential transition ``r = r0 exp(-z/L)`` and a uniform waist of length
``L`` and radius ``r0 exp(-x/2L)`` after a total elongation ``x``. A hot zone
wider than the flame is obtained by brushing the flame back and forth.

Units: positions along the fiber in mm, radii in um, time in s.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._util import max_workers
from .errors import ConfigurationError, ParameterError, UnsupportedProfileError
from .fiber_modes import FiberGeometry, silica_index, solve_he11, solve_he12

# Assumed visible single-mode fiber (the pulled fiber is not specified further).
SMF_CLADDING_RADIUS_UM = 62.5
SMF_CORE_RADIUS_UM = 2.0
SMF_NA = 0.11

CORE_TRANSITION_V = 1.0
"""Core V below which the light is treated as guided by the cladding/air boundary."""

FLAME_WIDTH_MM = 0.5


@dataclass(frozen=True)
class FiberSpec:
    """Unpulled fiber: cladding radius, core radius and core NA over silica."""
    clad_radius: float = SMF_CLADDING_RADIUS_UM
    core_radius: float = SMF_CORE_RADIUS_UM
    na: float = SMF_NA

    def indices(self, wavelength):
        n_clad = silica_index(wavelength)
        return float(np.sqrt(n_clad ** 2 + self.na ** 2)), n_clad


@dataclass
class TaperProfile:
    """Radius ``r`` (um) sampled at positions ``z`` (mm) along the fiber."""
    z: np.ndarray
    r: np.ndarray
    waist_radius: float
    waist_length: float
    initial_radius: float

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float)
        self.r = np.asarray(self.r, dtype=float)
        if self.z.ndim != 1 or self.z.shape != self.r.shape or self.z.size < 2:
            raise ParameterError("z and r must be 1-D arrays of equal length >= 2")
        if np.any(np.diff(self.z) <= 0):
            raise ParameterError("z samples must be strictly increasing")
        if np.any(self.r <= 0) or not np.all(np.isfinite(self.r)):
            raise ParameterError("radii must be finite and > 0")
        if not np.isclose(self.r.min(), self.waist_radius, rtol=1e-9, atol=0):
            raise ParameterError(
                f"waist_radius {self.waist_radius} != min(r) = {self.r.min()}")

    @classmethod
    def from_samples(cls, z, r, initial_radius=None, waist_length=None):
        r = np.asarray(r, dtype=float)
        z = np.asarray(z, dtype=float)
        if waist_length is None:
            waist_length = _waist_extent(z, r)
        return cls(z, r, float(r.min()), float(waist_length),
                   float(r.max() if initial_radius is None else initial_radius))

    @property
    def max_relative_jump(self):
        return float(np.max(np.abs(np.diff(self.r)) / np.minimum(self.r[:-1], self.r[1:])))

    def volume(self):
        """Glass volume in mm^3 (trapezoidal rule on pi r^2)."""
        return float(np.trapezoid(np.pi * (self.r * 1e-3) ** 2, self.z))

    def stretched(self, factor):
        """Same radii at positions scaled by ``factor`` about the waist centre."""
        zc = _waist_center(self.z, self.r)
        return TaperProfile(zc + (self.z - zc) * factor, self.r.copy(), self.waist_radius,
                            self.waist_length * factor, self.initial_radius)


def _waist_extent(z, r, rel=1e-3):
    w = np.flatnonzero(r <= r.min() * (1 + rel))
    return float(z[w[-1]] - z[w[0]])


def _waist_center(z, r, rel=1e-9):
    w = np.flatnonzero(r <= r.min() * (1 + rel))
    return 0.5 * (z[w[0]] + z[w[-1]])


# ----------------------------------------------------------------------
# Constant hot zone
# ----------------------------------------------------------------------

def required_elongation(r0, hot_zone, waist_radius):
    """Elongation that brings ``r0`` down to ``waist_radius`` with a constant hot zone."""
    if not 0 < waist_radius < r0:
        raise ParameterError("need 0 < waist_radius < r0")
    return 2.0 * hot_zone * np.log(r0 / waist_radius)


def exponential_profile(r0, hot_zone, elongation, margin=1.0, dz=None):
    """Taper produced by a constant hot zone.

    Parameters
    ----------
    r0 : float
        Unpulled radius [um].
    hot_zone : float
        Effective hot-zone width ``L`` [mm]; also the final waist length.
    elongation : float
        Total elongation ``x`` [mm]. Zero gives a uniform fiber.
    margin : float
        Unpulled fiber kept on each side [mm].
    dz : float, optional
        Sample spacing [mm], default ``L/100``.

    Returns
    -------
    TaperProfile
        Centred on the waist.
    """
    if not (r0 > 0 and hot_zone > 0 and margin > 0):
        raise ParameterError("r0, hot_zone and margin must be > 0")
    if elongation < 0:
        raise ParameterError("elongation must be >= 0")
    L, x = float(hot_zone), float(elongation)
    dz = L / 100 if dz is None else float(dz)
    rw = r0 * np.exp(-x / (2 * L))
    zt = L / 2 + x / 2  # outer end of the transition

    def seg(a, b):
        return np.linspace(a, b, max(2, int(np.ceil((b - a) / dz)) + 1))

    right = [seg(0.0, L / 2)]
    if x > 0:
        right.append(seg(L / 2, zt)[1:])
    right.append(seg(zt, zt + margin)[1:])
    zr = np.concatenate(right)
    rr = np.where(zr <= L / 2, rw, r0 * np.exp(-(zt - np.minimum(zr, zt)) / L))
    if x == 0:
        rr = np.full_like(zr, r0)
    z = np.concatenate([-zr[:0:-1], zr])
    r = np.concatenate([rr[:0:-1], rr])
    r[r.argmin()] = r.min()
    return TaperProfile(z, r, float(r.min()), L, float(r0))


# ----------------------------------------------------------------------
# Pull plans
# ----------------------------------------------------------------------

@dataclass
class PullPlan:
    """Stage and flame trajectory.

    Arrays share the time axis ``t``. ``hot_zone`` is the effective
    (brushed) hot-zone width; ``flame`` is the flame-centre position, which
    sweeps a triangle wave of half-amplitude ``(hot_zone - flame_width)/2``.
    """
    t: np.ndarray
    elongation: np.ndarray
    hot_zone: np.ndarray
    left: np.ndarray
    right: np.ndarray
    flame: np.ndarray
    initial_separation: float
    flame_width: float = FLAME_WIDTH_MM

    def __post_init__(self):
        for name in ("t", "elongation", "hot_zone", "left", "right", "flame"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        n = self.t.size
        if n < 2 or any(getattr(self, k).shape != (n,) for k in
                        ("elongation", "hot_zone", "left", "right", "flame")):
            raise ParameterError("plan arrays must be 1-D, equal length >= 2")
        if np.any(np.diff(self.t) <= 0):
            raise ParameterError("plan times must be strictly increasing")
        if np.any(np.diff(self.elongation) < 0):
            raise ParameterError("elongation must be non-decreasing")
        if np.any(self.hot_zone <= 0):
            raise ParameterError("hot zone must be > 0")
        sep = self.right - self.left
        if not np.allclose(sep, self.initial_separation + self.elongation, rtol=0, atol=1e-9):
            raise ParameterError("stage separation must equal initial separation + elongation")

    @property
    def brushing(self):
        return bool(np.any(self.hot_zone > self.flame_width * (1 + 1e-9)))

    @classmethod
    def from_schedule(cls, t, elongation, hot_zone, flame_width=FLAME_WIDTH_MM,
                      initial_separation=None, margin=1.0, brush_period=2.0):
        """Build stage/flame trajectories from ``x(t)`` and ``L(t)``."""
        t = np.asarray(t, dtype=float)
        x = np.asarray(elongation, dtype=float)
        L = np.asarray(hot_zone, dtype=float)
        s0 = float(L.max() + 2 * margin) if initial_separation is None else float(initial_separation)
        amp = _sweep_amplitude(L, flame_width)
        if np.any(amp > 0):
            # resample so every half sweep carries several points
            n = max(t.size, int(np.ceil((t[-1] - t[0]) / brush_period * 16)) + 1)
            tf = np.linspace(t[0], t[-1], n)
            x = np.interp(tf, t, x)
            L = np.interp(tf, t, L)
            amp = _sweep_amplitude(L, flame_width)
            t = tf
            phase = (t - t[0]) / brush_period
            tri = 2 * np.abs(2 * (phase - np.floor(phase + 0.5))) - 1
            flame = amp * tri
        else:
            flame = np.zeros_like(t)
        return cls(t, x, L, -s0 / 2 - x / 2, s0 / 2 + x / 2, flame, s0, flame_width)


def _sweep_amplitude(L, flame_width):
    # rounding-level excess over the flame width is not brushing
    return np.where(L > flame_width * (1 + 1e-9), (L - flame_width) / 2, 0.0)


def _check_single_waist(r):
    i0 = int(np.argmin(r))
    w = np.flatnonzero(r <= r[i0] * (1 + 1e-9))
    lo, hi = w[0], w[-1]
    if np.any(r[lo:hi + 1] > r[i0] * (1 + 1e-9)):
        raise UnsupportedProfileError("target has more than one waist")
    if np.any(np.diff(r[:lo + 1]) > 0) or np.any(np.diff(r[hi:]) < 0):
        raise UnsupportedProfileError(
            "target must decrease monotonically to a single waist and then increase")
    return lo, hi


def plan_pull(target, hot_zone=FLAME_WIDTH_MM, pull_speed=0.1, margin=1.0, brush_period=2.0,
              symmetry_tol=0.01, growth_tol=0.01):
    """Stage trajectory that produces ``target`` with a symmetric pull.

    Inverts the hot-zone model: with ``u = ln(r0/r)`` and ``zeta(u)`` the
    distance from the outer end of a transition, the effective hot zone obeys
    ``dL/du = 2 (L - dzeta/du)`` with ``L(u_w) = waist_length``, integrated
    backwards from the waist (the stable direction). Elongation follows from
    ``x = 2 zeta - L(0) + L``.

    Parameters
    ----------
    target : TaperProfile
    hot_zone : float
        Flame width [mm]: the narrowest achievable effective hot zone.
    pull_speed : float
        Elongation rate [mm/s].

    Raises
    ------
    UnsupportedProfileError
        Non-monotone or asymmetric target, waist not thinner than the fiber,
        or a hot zone that would have to be narrower than the flame or grow
        during the pull.
    """
    r0 = target.initial_radius
    rw = target.waist_radius
    if not rw < r0:
        raise UnsupportedProfileError(f"target waist {rw} um is not thinner than r0 = {r0} um")
    z, r = target.z, target.r
    lo, hi = _check_single_waist(r)
    zc = 0.5 * (z[lo] + z[hi])
    Lw = float(target.waist_length)
    if Lw <= 0:
        raise UnsupportedProfileError("target waist length must be > 0")

    # right-hand transition, from the waist edge to the first unpulled sample
    zr, rr = z[hi:], r[hi:]
    end = np.flatnonzero(rr >= r0 * (1 - 1e-9))
    if end.size == 0:
        raise UnsupportedProfileError("target never returns to the unpulled radius")
    zr, rr = zr[:end[0] + 1], rr[:end[0] + 1]
    # left side must mirror the right
    zl = zc - (zr - zc)
    if zl.min() < z[0]:
        raise UnsupportedProfileError("target is asymmetric about its waist")
    rl = np.interp(zl, z, r)
    if np.max(np.abs(rl - rr) / rr) > symmetry_tol:
        raise UnsupportedProfileError("target is asymmetric about its waist")

    zeta = (zr[-1] - zr)[::-1]          # distance from the outer end
    u = np.log(r0 / rr)[::-1]           # 0 at the outer end, u_w at the waist
    keep = np.concatenate([[True], np.diff(u) > 0])
    if np.any(np.diff(u)[~keep[1:]] < 0):
        raise UnsupportedProfileError("transition is not monotone")
    zeta, u = zeta[keep], u[keep]
    if zeta[-1] <= 0 or u.size < 2:
        raise UnsupportedProfileError("target has no transition region")

    # exact backward recursion for zeta linear in u on each interval
    slope = np.diff(zeta) / np.diff(u)
    L = np.empty_like(u)
    L[-1] = Lw
    decay = np.exp(-2 * np.diff(u))
    for i in range(u.size - 2, -1, -1):
        L[i] = slope[i] + (L[i + 1] - slope[i]) * decay[i]
    x = 2 * zeta - L[0] + L

    if np.any(L < hot_zone * (1 - 1e-6)):
        raise UnsupportedProfileError(
            f"target needs an effective hot zone of {L.min():.4g} mm, narrower than the "
            f"{hot_zone} mm flame")
    if np.max(L - np.minimum.accumulate(L)) > growth_tol * L.max():
        raise UnsupportedProfileError(
            "target needs a hot zone that grows during the pull, which would reheat "
            "already tapered glass")
    if np.any(np.diff(x) <= 0):
        raise UnsupportedProfileError("target implies a non-increasing elongation")

    return PullPlan.from_schedule(x / pull_speed, x, L, flame_width=hot_zone,
                                  margin=margin, brush_period=brush_period)


# ----------------------------------------------------------------------
# Forward simulation
# ----------------------------------------------------------------------

def _flow(b, dx, L):
    """Exact map of material points for an elongation step ``dx`` at fixed ``L``."""
    h = 0.5 * L
    a = np.abs(b)
    sgn = np.sign(b)
    out = b + sgn * 0.5 * dx
    inside = a < h
    ai = a[inside]
    with np.errstate(divide="ignore"):
        s_exit = L * np.log(h / ai)  # elongation needed to reach the zone edge
    stretched = ai * np.exp(dx / L)
    leaves = dx > s_exit
    ai_new = np.where(leaves, h + 0.5 * (dx - s_exit), stretched)
    out[inside] = sgn[inside] * ai_new
    return out


def _split(b, vol, max_len):
    lengths = np.diff(b)
    k = np.ceil(lengths / max_len).astype(np.int64)
    if np.all(k <= 1):
        return b, vol
    k = np.maximum(k, 1)
    starts = np.repeat(b[:-1], k)
    step = np.repeat(lengths / k, k)
    j = np.arange(k.sum()) - np.repeat(np.cumsum(k) - k, k)
    nb = np.append(starts + j * step, b[-1])
    return nb, np.repeat(vol / k, k)


def simulate_pull(plan, r0, dt=None, element_length=None, cfl=0.05):
    """Simulate the profile left by ``plan`` on a fiber of radius ``r0``.

    The fiber between the stages is discretized into cylindrical elements.
    Each time step moves the element boundaries with the exact flow of the
    hot-zone model at the step's mid-time width, then splits elements that
    grew longer than ``element_length`` (splitting a uniform cylinder is
    exact). Element volumes never change, so glass volume is conserved to
    rounding.

    Parameters
    ----------
    plan : PullPlan
    r0 : float
        Unpulled radius [um].
    dt : float, optional
        Time step [s]. Default: the step that elongates by ``min(L)/400``.
    element_length : float, optional
        Maximum element length [mm], default ``min(L)/100``.
    cfl : float
        Largest allowed elongation per step as a fraction of the hot zone.

    Raises
    ------
    ConfigurationError
        If a step elongates the fiber by more than ``cfl * L``.
    """
    if not r0 > 0:
        raise ParameterError("r0 must be > 0")
    t0, t1 = plan.t[0], plan.t[-1]
    Lmin = plan.hot_zone.min()
    if dt is None:
        rate = np.max(np.diff(plan.elongation) / np.diff(plan.t))
        dt = (t1 - t0) if rate <= 0 else Lmin / 400 / rate
    n = max(1, int(np.ceil((t1 - t0) / dt - 1e-9)))
    tg = np.linspace(t0, t1, n + 1)
    x = np.interp(tg, plan.t, plan.elongation)
    dx = np.diff(x)
    L = np.interp(0.5 * (tg[1:] + tg[:-1]), plan.t, plan.hot_zone)
    bad = np.flatnonzero(dx > cfl * L)
    if bad.size:
        i = bad[0]
        raise ConfigurationError(
            f"time step {dt:.4g} s too coarse: step {i} elongates by {dx[i]:.4g} mm, above "
            f"{cfl} x hot zone ({L[i]:.4g} mm); reduce dt")

    max_len = Lmin / 100 if element_length is None else float(element_length)
    s0 = plan.initial_separation
    b = np.linspace(-s0 / 2, s0 / 2, int(np.ceil(s0 / max_len)) + 1)
    vol = r0 ** 2 * np.diff(b)  # um^2 mm; pi dropped
    for dxi, Li in zip(dx, L):
        if dxi > 0:
            b = _flow(b, dxi, Li)
            b, vol = _split(b, vol, max_len)

    lengths = np.diff(b)
    rad = np.sqrt(vol / lengths)
    zc = 0.5 * (b[1:] + b[:-1])
    z = np.concatenate([[b[0]], zc, [b[-1]]])
    r = np.concatenate([[rad[0]], rad, [rad[-1]]])
    prof = TaperProfile.from_samples(z, r, initial_radius=r0)
    prof.element_volume = float(np.pi * np.sum(vol) * 1e-6)  # mm^3
    return prof


# ----------------------------------------------------------------------
# Adiabaticity
# ----------------------------------------------------------------------

@dataclass
class AdiabaticityReport:
    z: np.ndarray
    radius: np.ndarray
    angle: np.ndarray
    bound: np.ndarray
    margin: np.ndarray
    n_fundamental: np.ndarray
    n_next: np.ndarray
    regime: np.ndarray
    passed: bool
    worst_index: int
    safety_factor: float = 1.0
    wavelength: float = field(default=0.0)

    @property
    def worst_margin(self):
        return float(self.margin[self.worst_index])

    @property
    def worst_z(self):
        return float(self.z[self.worst_index])


NEXT_MODE_OPTIONS = ("proxy", "he12")


def local_indices(radius, wavelength, fiber, initial_radius, n_scan=2000, next_mode="proxy"):
    """Fundamental and next-mode effective indices at local cladding radius ``radius``.

    While the core still guides (core V >= ``CORE_TRANSITION_V``) the
    fundamental is the core mode and the next mode is the lowest cladding
    mode (HE11 of the silica/air cylinder), which tends to the cladding index
    for an unpulled fiber. Below that the silica/air HE11 is the fundamental.
    With ``next_mode="proxy"`` the next mode is then taken at the air index
    (1.0); ``"he12"`` uses the HE12 mode of the silica/air cylinder where it
    is guided, a much stricter bound for thick multimode rods.
    """
    if next_mode not in NEXT_MODE_OPTIONS:
        raise ParameterError(f"next_mode must be one of {NEXT_MODE_OPTIONS}")
    n_core, n_clad = fiber.indices(wavelength)
    scale = radius / initial_radius
    core_r = fiber.core_radius * scale
    clad = FiberGeometry(radius, wavelength, n_clad, 1.0)
    v_core = 2 * np.pi / wavelength * core_r * fiber.na
    if v_core >= CORE_TRANSITION_V:
        core = FiberGeometry(core_r, wavelength, n_core, n_clad)
        return solve_he11(core, n_scan).n_eff, solve_he11(clad, n_scan).n_eff, "core"
    he12 = solve_he12(clad, n_scan) if next_mode == "he12" else None
    return (solve_he11(clad, n_scan).n_eff, 1.0 if he12 is None else he12.n_eff,
            "cladding")


def adiabaticity_check(profile, wavelength, safety_factor=1.0, fiber=None,
                       n_scan=2000, workers=None, next_mode="proxy"):
    """Compare the local taper angle with the length-scale adiabaticity bound.

    At each sample the angle ``|dr/dz|`` is compared with
    ``f r / z_b`` where ``z_b = lambda / (n_fundamental - n_next)`` is the
    beat length to the nearest mode that the taper can couple to.

    Parameters
    ----------
    profile : TaperProfile
    wavelength : float
        Vacuum wavelength [um].
    safety_factor : float
        ``f`` in the bound; 1 is the usual delineation.
    fiber : FiberSpec, optional
        Unpulled fiber; its cladding radius defaults to the profile's.
    next_mode : {"proxy", "he12"}
        Next-mode choice once the core no longer guides, see `local_indices`.
    workers : int, optional
        Threads for the per-radius mode solves, capped by ``QPB_THREADS``.

    Returns
    -------
    AdiabaticityReport
        ``margin = bound / angle`` per sample (inf where the fiber is
        uniform); ``passed`` iff every margin is >= 1.
    """
    if not wavelength > 0:
        raise ParameterError("wavelength must be > 0")
    if not safety_factor > 0:
        raise ParameterError("safety_factor must be > 0")
    fiber = FiberSpec(clad_radius=profile.initial_radius) if fiber is None else fiber
    z_um = profile.z * 1e3
    r = profile.r
    angle = np.abs(np.gradient(r, z_um))

    radii, inverse = np.unique(r, return_inverse=True)

    def solve(rad):
        try:
            return local_indices(rad, wavelength, fiber, profile.initial_radius, n_scan,
                                 next_mode)
        except Exception as exc:  # attach the location of the failure
            where = z_um[np.flatnonzero(r == rad)[0]] * 1e-3
            raise type(exc)(f"mode solve failed at z = {where:.6g} mm (r = {rad:.6g} um): "
                            f"{exc}") from exc

    with ThreadPoolExecutor(max_workers=max_workers(workers)) as pool:
        solved = list(pool.map(solve, radii))
    n1 = np.array([s[0] for s in solved])[inverse]
    n2 = np.array([s[1] for s in solved])[inverse]
    regime = np.array([s[2] for s in solved])[inverse]
    beat = wavelength / (n1 - n2)
    bound = safety_factor * r / beat
    with np.errstate(divide="ignore"):
        margin = np.where(angle > 0, bound / np.where(angle > 0, angle, 1.0), np.inf)
    worst = int(np.argmin(margin))
    return AdiabaticityReport(profile.z, r, angle, bound, margin, n1, n2, regime,
                              bool(np.all(angle <= bound)), worst, safety_factor, wavelength)
