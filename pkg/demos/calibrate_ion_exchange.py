"""Derive the default exchange time for the 2 um-opening channel guide.

Only D*t enters the Fickian model, so D is held at its default and the
exchange time is searched. Four thresholds are located by bisection in
log(t):

* the nominal guide (dn = 0.052, w = 2 um) acquires its first mode;
* the nominal guide acquires a second mode;
* the guide with dn doubled acquires a second mode;
* the guide with the opening doubled acquires a second mode.

The single-mode window runs from the largest of the first, third and
fourth thresholds up to the second. The geometric centre of the window is
the shipped ``CALIBRATED_EXCHANGE_TIME``.

Run: python demos/calibrate_ion_exchange.py
"""

from dataclasses import replace

import numpy as np

from qpbench.ion_exchange import (
    CALIBRATED_EXCHANGE_TIME, DiffusionConfig, count_modes, diffuse,
)

WAVELENGTH = 1.55


def n_modes(t, **overrides):
    cfg = replace(DiffusionConfig(), exchange_time=t, **overrides)
    return count_modes(diffuse(cfg), WAVELENGTH, max_modes=3)


def threshold(pred, lo=50.0, hi=5000.0, iters=10):
    """Smallest t with pred(t) true, assuming pred is monotone in t."""
    assert not pred(lo) and pred(hi)
    for _ in range(iters):
        mid = np.sqrt(lo * hi)
        lo, hi = (lo, mid) if pred(mid) else (mid, hi)
    return np.sqrt(lo * hi)


if __name__ == "__main__":
    base = DiffusionConfig()
    t_first = threshold(lambda t: n_modes(t) >= 1)
    t_second = threshold(lambda t: n_modes(t) >= 2)
    t_dn = threshold(lambda t: n_modes(t, delta_n_max=2 * base.delta_n_max) >= 2)
    t_w = threshold(lambda t: n_modes(t, mask_opening=2 * base.mask_opening) >= 2)
    lo = max(t_first, t_dn, t_w)
    print(f"first mode          t = {t_first:8.1f} min")
    print(f"second mode         t = {t_second:8.1f} min")
    print(f"second mode, 2 dn   t = {t_dn:8.1f} min")
    print(f"second mode, 2 w    t = {t_w:8.1f} min")
    print(f"single-mode window  ({lo:.1f}, {t_second:.1f}) min")
    print(f"geometric centre    {np.sqrt(lo * t_second):.1f} min "
          f"(shipped default {CALIBRATED_EXCHANGE_TIME} min, "
          f"D t = {base.diffusion_coefficient * CALIBRATED_EXCHANGE_TIME:.3g} um^2)")
