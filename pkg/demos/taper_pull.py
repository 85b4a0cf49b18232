"""Pull a 62.5 um cladding down to a 150 nm waist and check the result.

The constant-hot-zone model has a closed form: with a hot zone of length L
and an elongation x the waist radius is r0*exp(-x/(2L)). This script asks
for the elongation that reaches 150 nm with L = 0.5 mm, turns the target
profile into a stage schedule, runs the Lagrangian pull simulation on that
schedule and compares the outcome to the target. It then checks whether the
taper is slow enough for the fundamental mode at 600 nm, and how much it
has to be stretched before it is.

Run: python demos/taper_pull.py
"""

import numpy as np

from qpbench.taper import (
    adiabaticity_check, exponential_profile, plan_pull, required_elongation, simulate_pull,
)

R0, HOT_ZONE, WAIST = 62.5, 0.5, 0.15
WAVELENGTH = 0.6


def main():
    x = required_elongation(R0, HOT_ZONE, WAIST)
    print(f"elongation for a {WAIST * 2e3:.0f} nm diameter waist: {x:.4f} mm")

    target = exponential_profile(R0, HOT_ZONE, x)
    plan = plan_pull(target)
    print(f"schedule: {plan.t.size} points over {plan.t[-1]:.1f} s, "
          f"stages {plan.initial_separation:.2f} -> {plan.right[-1] - plan.left[-1]:.2f} mm apart")

    sim = simulate_pull(plan, R0)
    err = np.max(np.abs(np.interp(target.z, sim.z, sim.r) - target.r) / target.r)
    print(f"simulated waist {sim.waist_radius * 1e3:.2f} nm, worst profile error {err:.2%}")
    print(f"volume drift {sim.volume() / sim.element_volume - 1:.1e}")

    for factor in (1, 10, 100):
        rep = adiabaticity_check(target.stretched(factor), WAVELENGTH)
        print(f"stretch x{factor:<3d} worst margin {rep.worst_margin:8.3f} "
              f"at z = {rep.worst_z:+.3f} mm -> {'pass' if rep.passed else 'fail'}")


if __name__ == "__main__":
    main()
