"""
Exact step-index cylinder solver for the fundamental HE11 mode.

Two-layer model (core of radius ``a`` and index ``n_core`` surrounded by an
infinite medium of index ``n_clad``). For a nanofiber the cladding is air and
``n_clad = 1``. All lengths are in micrometres.

The eigenvalue equation and field components follow the exact (vectorial)
treatment of the HE11 mode:

    J0(U)/(U J1(U)) = -(n1^2 + n2^2)/(2 n1^2) K1'(W)/(W K1(W)) + 1/U^2 - R

with ``U = a sqrt(k^2 n1^2 - beta^2)``, ``W = a sqrt(beta^2 - k^2 n2^2)``.
Intensities are azimuthally averaged unless an azimuth is requested; for a
quasi-linearly polarized mode the average equals the (azimuth independent)
intensity of the circularly polarized mode.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import integrate, optimize, special

from .errors import NumericalError, ParameterError

SINGLE_MODE_CUTOFF = 2.405
"""Single-mode cutoff of the normalized frequency, ``V < 2.405``."""

_J11 = 3.8317059702075125  # first zero of J1: first pole of J0/(U J1)
_J12 = 7.015586669815619   # second zero of J1


# ----------------------------------------------------------------------
# Materials
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class Sellmeier:
    """Three-term Sellmeier dispersion ``n^2 = 1 + sum B_i L^2 / (L^2 - C_i)``.

    ``C`` holds the squared resonance wavelengths in um^2.
    """
    name: str
    B: tuple
    C: tuple

    def index(self, wavelength):
        lam2 = np.asarray(wavelength, dtype=float) ** 2
        n2 = 1.0 + sum(b * lam2 / (lam2 - c) for b, c in zip(self.B, self.C))
        return np.sqrt(n2)


@dataclass(frozen=True)
class ConstantIndex:
    """Non-dispersive material, used as an override in tests."""
    n: float
    name: str = "constant"

    def index(self, wavelength):
        return np.full_like(np.asarray(wavelength, dtype=float), self.n)


# Malitson (1965) fused silica, valid 0.21-3.71 um.
SELLMEIER_TABLE = {
    "fused_silica": Sellmeier(
        "fused_silica",
        B=(0.6961663, 0.4079426, 0.8974794),
        C=(0.0684043 ** 2, 0.1162414 ** 2, 9.896161 ** 2),
    ),
}
FUSED_SILICA = SELLMEIER_TABLE["fused_silica"]


def silica_index(wavelength):
    """Refractive index of fused silica at ``wavelength`` (um)."""
    return float(FUSED_SILICA.index(wavelength))


# ----------------------------------------------------------------------
# Types
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class FiberGeometry:
    """Step-index cylinder.

    Parameters
    ----------
    radius : float
        Core radius [um].
    wavelength : float
        Vacuum wavelength [um].
    n_core, n_clad : float
        Core and surrounding refractive indices.
    """
    radius: float
    wavelength: float
    n_core: float
    n_clad: float = 1.0

    def __post_init__(self):
        for name in ("radius", "wavelength", "n_core", "n_clad"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.radius > 0 and np.isfinite(self.radius)):
            raise ParameterError(f"radius must be > 0, got {self.radius}")
        if not (self.wavelength > 0 and np.isfinite(self.wavelength)):
            raise ParameterError(f"wavelength must be > 0, got {self.wavelength}")
        if self.n_clad < 1.0:
            raise ParameterError(f"n_clad must be >= 1, got {self.n_clad}")
        # equality is tolerated here (V = 0); the mode solver needs n_core > n_clad
        if self.n_core < self.n_clad:
            raise ParameterError(
                f"n_core ({self.n_core}) must exceed n_clad ({self.n_clad})")

    @property
    def k(self):
        return 2.0 * np.pi / self.wavelength

    @classmethod
    def silica(cls, radius, wavelength, n_clad=1.0):
        """Silica fiber whose core index follows the Sellmeier model."""
        return cls(radius, wavelength, silica_index(wavelength), n_clad)


@dataclass(frozen=True)
class GuidedMode:
    """Solved HE11 mode.

    ``U``, ``W`` and ``s`` fully determine the field shape; the amplitude is
    fixed so that the intensity integrates to 1 over the cross-section.
    """
    geometry: FiberGeometry
    n_eff: float
    U: float
    W: float
    s: float
    residual: float = field(default=0.0, compare=False)

    @property
    def beta(self):
        return self.geometry.k * self.n_eff

    @cached_property
    def _norm(self):
        a = self.geometry.radius
        inner, _ = integrate.quad(lambda r: _intensity_raw(self, r) * r, 0.0, a,
                                  epsabs=0.0, epsrel=1e-12, limit=200)
        outer, _ = integrate.quad(lambda r: _intensity_raw(self, r) * r, a, np.inf,
                                  epsabs=0.0, epsrel=1e-12, limit=200)
        return 2.0 * np.pi * (inner + outer)

    @cached_property
    def power_fraction_outside(self):
        return power_fraction_outside(self)

    def intensity(self, r, phi=None):
        return intensity_at(self, r, phi)


# ----------------------------------------------------------------------
# V-number
# ----------------------------------------------------------------------

def v_number(geom):
    """Normalized frequency ``V = k a sqrt(n_core^2 - n_clad^2)``."""
    return geom.k * geom.radius * np.sqrt(geom.n_core ** 2 - geom.n_clad ** 2)


def is_single_mode(geom):
    """True iff ``V < 2.405`` (strict: the boundary counts as multimode)."""
    return bool(v_number(geom) < SINGLE_MODE_CUTOFF)


# ----------------------------------------------------------------------
# Characteristic equation
# ----------------------------------------------------------------------

def _uw(geom, n_eff):
    ka = geom.k * geom.radius
    n_eff = np.asarray(n_eff, dtype=float)
    U = ka * np.sqrt(np.maximum(geom.n_core ** 2 - n_eff ** 2, 0.0))
    W = ka * np.sqrt(np.maximum(n_eff ** 2 - geom.n_clad ** 2, 0.0))
    return U, W


def _k1_log_deriv(W):
    """K1'(W) / (W K1(W)), using exponentially scaled Bessel functions."""
    k0 = special.k0e(W)
    k1 = special.k1e(W)
    # K1' = -K0 - K1/W
    return (-k0 - k1 / W) / (W * k1)


def _residual_u(geom, U):
    n1, n2 = geom.n_core, geom.n_clad
    V = v_number(geom)
    U = np.asarray(U, dtype=float)
    W = np.sqrt(np.maximum(V ** 2 - U ** 2, 0.0))
    n_eff = np.sqrt(n1 ** 2 - (U / (geom.k * geom.radius)) ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        lhs = special.j0(U) / (U * special.j1(U))
        kw = _k1_log_deriv(W)
        R = np.sqrt(((n1 ** 2 - n2 ** 2) / (2 * n1 ** 2)) ** 2 * kw ** 2
                    + (n_eff / n1) ** 2 * (1 / W ** 2 + 1 / U ** 2) ** 2)
        f = lhs + (n1 ** 2 + n2 ** 2) / (2 * n1 ** 2) * kw - 1 / U ** 2 + R
        return f * (U * W) ** 2 / V ** 2


def he11_residual(geom, n_eff):
    """Residual of the HE11 eigenvalue equation at ``n_eff`` (vectorized).

    The equation is multiplied through by ``(U W / V)^2`` so that the residual
    stays O(1)-conditioned for weakly bound modes (small ``W``) as well as
    deeply bound ones (small ``U``). Roots are unchanged.
    """
    U, _ = _uw(geom, n_eff)
    return _residual_u(geom, U)


def _bracket(geom, u_min, u_max):
    """n_eff interval corresponding to ``u_min < U < u_max`` (clipped to guidance)."""
    ka = geom.k * geom.radius
    V = v_number(geom)
    u_max = min(u_max, V)
    lo = np.sqrt(max(geom.n_core ** 2 - (u_max / ka) ** 2, geom.n_clad ** 2))
    hi = np.sqrt(geom.n_core ** 2 - (u_min / ka) ** 2)
    return max(lo, geom.n_clad), hi


def _refine_scan(geom, grid, tol):
    # roots are refined in U, which keeps full relative precision when the
    # n_eff bracket is narrow (thick fibers)
    U, _ = _uw(geom, grid)
    f = _residual_u(geom, U)
    finite = np.isfinite(f)
    sign_change = np.flatnonzero(finite[:-1] & finite[1:]
                                 & (np.sign(f[:-1]) != np.sign(f[1:])))
    for i in sign_change[::-1]:  # largest n_eff first; poles give huge residuals
        u_root = optimize.brentq(lambda u: float(_residual_u(geom, u)),
                                 U[i + 1], U[i], xtol=1e-300,
                                 rtol=4 * np.finfo(float).eps, maxiter=500)
        res = float(_residual_u(geom, u_root))
        if abs(res) < tol:
            return u_root, res
    return None


def _solve_branch(geom, u_min, u_max, n_scan, tol, label):
    lo, hi = _bracket(geom, u_min, u_max)
    grid = np.linspace(lo, hi, n_scan + 2)[1:-1]
    found = _refine_scan(geom, grid, tol)
    if found is None:
        # weakly bound modes sit within the first grid cell above the lower edge
        grid = lo + (grid[0] - lo) * np.geomspace(1e-15, 1.0, n_scan)
        found = _refine_scan(geom, grid, tol)
    if found is None:
        raise NumericalError(
            f"no {label} root in n_eff ({lo:.12g}, {hi:.12g}) for {geom}: scanned {n_scan} "
            f"uniform points and {n_scan} points clustered at the lower edge "
            f"without a root of residual < {tol:g}")
    return _make_mode(geom, *found)


def solve_he11(geom, n_scan=2000, tol=1e-10):
    """Solve the fundamental HE11 mode of a step-index cylinder.

    A uniform scan of the characteristic equation over ``n_eff`` brackets the
    root, which is then refined with Brent's method (bisection with inverse
    quadratic interpolation). The scan is restricted to ``U`` below the first
    zero of J1, where the equation has no poles and only HE11 lives.

    Parameters
    ----------
    geom : FiberGeometry
    n_scan : int
        Number of scan points inside the bracket.
    tol : float
        Maximum accepted absolute residual of the eigenvalue equation.

    Returns
    -------
    GuidedMode
    """
    if not geom.n_core > geom.n_clad:
        raise ParameterError("mode solver requires n_core > n_clad")
    return _solve_branch(geom, 0.0, _J11, n_scan, tol, "HE11")


def solve_he12(geom, n_scan=2000, tol=1e-10):
    """Second HE mode of the same azimuthal order, or ``None`` below its cutoff.

    Only used to count whether the next symmetric mode exists and to get its
    effective index; cutoff is ``V = j11 = 3.832``.
    """
    if not geom.n_core > geom.n_clad:
        raise ParameterError("mode solver requires n_core > n_clad")
    if v_number(geom) <= _J11:
        return None
    return _solve_branch(geom, _J11, _J12, n_scan, tol, "HE12")


def _make_mode(geom, U, res):
    ka = geom.k * geom.radius
    W = float(np.sqrt(v_number(geom) ** 2 - U ** 2))
    n_eff = float(np.sqrt(geom.n_core ** 2 - (U / ka) ** 2))
    j1p = 0.5 * (special.j0(U) - special.jv(2, U))
    s = (1 / U ** 2 + 1 / W ** 2) / (j1p / (U * special.j1(U)) + _k1_log_deriv(W))
    return GuidedMode(geom, n_eff, float(U), W, float(s), residual=res)


# ----------------------------------------------------------------------
# Fields
# ----------------------------------------------------------------------

def _fields(mode, r):
    """Complex (E_r, E_phi, E_z, dE_z/dr) of the l = +1 circular HE11 mode, unit amplitude."""
    g = mode.geometry
    a = g.radius
    h = mode.U / a
    q = mode.W / a
    beta, s = mode.beta, mode.s
    r = np.atleast_1d(np.asarray(r, dtype=float))
    inside = r < a
    Er = np.empty(r.shape, complex)
    Ep = np.empty(r.shape, complex)
    Ez = np.empty(r.shape, complex)
    dEz = np.empty(r.shape, complex)

    ri = r[inside]
    hr = h * ri
    J0, J1, J2 = special.j0(hr), special.j1(hr), special.jv(2, hr)
    Er[inside] = 1j * beta / (2 * h) * ((1 - s) * J0 - (1 + s) * J2)
    Ep[inside] = -beta / (2 * h) * ((1 - s) * J0 + (1 + s) * J2)
    Ez[inside] = J1
    dEz[inside] = h * 0.5 * (J0 - J2)

    ro = r[~inside]
    # K_n(q r)/K1(q a) evaluated with scaled functions to avoid underflow
    qr = q * ro
    damp = np.exp(-(qr - mode.W))
    k1a = special.k1e(mode.W)
    K0 = special.k0e(qr) * damp / k1a
    K1 = special.k1e(qr) * damp / k1a
    K2 = special.kve(2, qr) * damp / k1a
    J1a = special.j1(mode.U)
    Er[~inside] = 1j * beta / (2 * q) * J1a * ((1 - s) * K0 + (1 + s) * K2)
    Ep[~inside] = -beta / (2 * q) * J1a * ((1 - s) * K0 - (1 + s) * K2)
    Ez[~inside] = J1a * K1
    dEz[~inside] = -J1a * q * 0.5 * (K0 + K2)
    return Er, Ep, Ez, dEz


def _intensity_raw(mode, r, phi=None):
    Er, Ep, Ez, _ = _fields(mode, r)
    er2, ep2, ez2 = np.abs(Er) ** 2, np.abs(Ep) ** 2, np.abs(Ez) ** 2
    if phi is None:
        out = er2 + ep2 + ez2
    else:
        # quasi-linear polarization; phi measured from the polarization axis
        c2 = np.cos(phi) ** 2
        out = 2.0 * ((er2 + ez2) * c2 + ep2 * (1.0 - c2))
    return out if np.ndim(r) else float(out[0])


def intensity_at(mode, r, phi=None):
    """Relative |E|^2 at radius ``r`` (um).

    By default the azimuthal average is returned. Passing ``phi`` (rad, from
    the polarization axis) gives the quasi-linearly polarized intensity along
    that direction; its azimuthal mean equals the default value.

    Normalized so that the azimuthal average integrates to 1 over the
    cross-section (units of um^-2). The profile is discontinuous at
    ``r = a`` because the normal field component jumps by
    ``(n_core/n_clad)^2``.
    """
    r_arr = np.asarray(r, dtype=float)
    if np.any(r_arr < 0):
        raise ParameterError("radius must be >= 0")
    return _intensity_raw(mode, r, phi) / mode._norm


def poynting_z(mode, r):
    """Axial Poynting flux (arbitrary units), from E and the curl relation for H."""
    g = mode.geometry
    k = g.k
    r = np.atleast_1d(np.asarray(r, dtype=float))
    Er, Ep, Ez, dEz = _fields(mode, r)
    rr = np.maximum(r, 1e-300)
    # H = curl(E) / (i omega mu0) with fields ~ exp(i(beta z + phi)); c = mu0 = 1
    with np.errstate(invalid="ignore"):
        ez_over_r = np.where(r > 0, Ez / rr, mode.U / g.radius / 2)
    Hr = (ez_over_r - mode.beta * Ep) / k
    Hp = (mode.beta * Er + 1j * dEz) / k
    return 0.5 * np.real(Er * np.conj(Hp) - Ep * np.conj(Hr))


def power_fraction_outside(mode):
    """Fraction of the guided power carried outside ``r = a``.

    Radial quadrature of the axial Poynting flux.
    """
    a = mode.geometry.radius
    opts = dict(epsabs=0.0, epsrel=1e-11, limit=400, full_output=1)
    inner = integrate.quad(lambda r: float(poynting_z(mode, r)[0]) * r, 0.0, a, **opts)
    outer = integrate.quad(lambda r: float(poynting_z(mode, r)[0]) * r, a, np.inf, **opts)
    for name, res in (("inner", inner), ("outer", outer)):
        if len(res) > 3:  # quad signalled a convergence problem
            raise NumericalError(f"{name} flux quadrature did not converge: {res[3]}")
    p_in, p_out = inner[0], outer[0]
    frac = p_out / (p_in + p_out)
    if not 0.0 < frac < 1.0:
        raise NumericalError(f"power fraction {frac} outside (0, 1)")
    return float(frac)


def intensity_profile(mode, r_max=None, n=400):
    """Sampled ``(r, intensity)`` arrays, with samples on both sides of ``r = a``."""
    a = mode.geometry.radius
    r_max = 4 * a if r_max is None else r_max
    r = np.linspace(0.0, r_max, n)
    if a < r_max:
        r = np.unique(np.concatenate([r, [a * (1 - 1e-12), a]]))
    return r, intensity_at(mode, r)
