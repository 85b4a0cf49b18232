import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qpbench.errors import ConfigurationError, NumericalError, ParameterError, UnsupportedProfileError
from qpbench.fiber_modes import FiberGeometry, solve_he12
from qpbench.taper import (
    PullPlan, TaperProfile, adiabaticity_check, exponential_profile, plan_pull,
    required_elongation, simulate_pull,
)

R0, L, RW = 62.5, 0.5, 0.15
X_NANOFIBER = required_elongation(R0, L, RW)

# Frozen from the first run of adiabaticity_check on the 6.03 mm pull at 0.6 um.
NANOFIBER_PULL_WORST_MARGIN = 0.1654583


def linear_target(r0=R0, rw=5.0, Z=10.0, margin=1.0, dz=0.01):
    """Linear transitions of length Z; waist length chosen so a hot zone
    shrinking linearly in elongation produces it exactly."""
    L0 = Z * r0 / (1.5 * (r0 - rw))
    Lw = L0 * rw / r0
    zt = Lw / 2 + Z
    z = np.union1d(np.arange(0, zt + margin + 1e-12, dz), [Lw / 2, zt])
    r = np.where(z <= Lw / 2, rw, np.where(z >= zt, r0, rw + (r0 - rw) * (z - Lw / 2) / Z))
    return TaperProfile.from_samples(np.concatenate([-z[:0:-1], z]),
                                     np.concatenate([r[:0:-1], r]),
                                     initial_radius=r0, waist_length=Lw)


def max_rel_error(target, sim):
    return np.max(np.abs(np.interp(target.z, sim.z, sim.r) - target.r) / target.r)


@pytest.fixture(scope="module")
def nanofiber_pull():
    return simulate_pull(plan_pull(exponential_profile(R0, L, X_NANOFIBER)), R0)


class TestExponentialProfile:
    def test_required_elongation(self):
        assert X_NANOFIBER == pytest.approx(6.032, abs=1e-3)

    def test_no_pull_is_uniform(self):
        p = exponential_profile(R0, L, 0.0)
        assert np.all(p.r == R0)

    def test_waist(self):
        p = exponential_profile(R0, L, X_NANOFIBER)
        assert p.waist_radius == pytest.approx(RW, rel=1e-12)
        assert p.waist_length == L
        w = p.z[p.r <= RW * (1 + 1e-9)]
        assert w.max() - w.min() == pytest.approx(L, abs=1e-9)

    @pytest.mark.parametrize("x", [0.5, 2.0, X_NANOFIBER])
    def test_volume_conserved(self, x):
        m = 1.0
        p = exponential_profile(R0, L, x, margin=m)
        before = np.pi * (R0 * 1e-3) ** 2 * (L + 2 * m)
        assert p.volume() == pytest.approx(before, rel=1e-3)

    def test_transition_shape(self):
        p = exponential_profile(R0, L, 3.0)
        zt = L / 2 + 1.5
        sel = (p.z > L / 2) & (p.z < zt)
        assert np.allclose(p.r[sel], R0 * np.exp(-(zt - p.z[sel]) / L), rtol=1e-12)

    def test_continuous(self):
        assert exponential_profile(R0, L, X_NANOFIBER).max_relative_jump < 0.05

    def test_invalid(self):
        with pytest.raises(ParameterError):
            exponential_profile(-1, L, 1.0)
        with pytest.raises(ParameterError):
            exponential_profile(R0, L, -1.0)


class TestSimulatePull:
    def test_analytic_waist(self, nanofiber_pull):
        assert nanofiber_pull.waist_radius == pytest.approx(RW, rel=0.01)

    def test_volume(self, nanofiber_pull):
        plan = plan_pull(exponential_profile(R0, L, X_NANOFIBER))
        before = np.pi * (R0 * 1e-3) ** 2 * plan.initial_separation
        assert nanofiber_pull.element_volume == pytest.approx(before, rel=1e-12)
        assert nanofiber_pull.volume() == pytest.approx(before, rel=1e-3)

    def test_time_resolution(self):
        plan = plan_pull(exponential_profile(R0, L, 3.0))
        dt = 0.5 / 400 / 0.1
        a = simulate_pull(plan, R0, dt=dt).waist_radius
        b = simulate_pull(plan, R0, dt=dt / 2).waist_radius
        assert abs(a - b) / a < 1e-3

    def test_zero_elongation(self):
        plan = PullPlan.from_schedule([0.0, 10.0], [0.0, 0.0], [L, L])
        p = simulate_pull(plan, R0)
        assert np.allclose(p.r, R0, rtol=1e-12)

    def test_deterministic(self):
        plan = plan_pull(exponential_profile(R0, L, 2.0))
        a, b = simulate_pull(plan, R0), simulate_pull(plan, R0)
        assert np.array_equal(a.r, b.r) and np.array_equal(a.z, b.z)

    def test_coarse_step_rejected(self):
        plan = plan_pull(exponential_profile(R0, L, 2.0))
        with pytest.raises(ConfigurationError, match="reduce dt"):
            simulate_pull(plan, R0, dt=5.0)

    def test_constant_zone_profile_shape(self, nanofiber_pull):
        expected = exponential_profile(R0, L, X_NANOFIBER)
        zc = 0.5 * (nanofiber_pull.z[0] + nanofiber_pull.z[-1])
        sim = TaperProfile.from_samples(nanofiber_pull.z - zc, nanofiber_pull.r, initial_radius=R0)
        assert max_rel_error(expected, sim) < 0.01


class TestPlanPull:
    def test_exponential_target_is_pure_pull(self):
        plan = plan_pull(exponential_profile(R0, L, X_NANOFIBER), hot_zone=L)
        assert np.allclose(plan.hot_zone, L, rtol=1e-9)
        assert not plan.brushing
        assert np.all(plan.flame == 0)
        assert plan.elongation[-1] == pytest.approx(X_NANOFIBER, rel=1e-9)

    def test_plan_invariants(self):
        plan = plan_pull(linear_target())
        assert np.all(np.diff(plan.elongation) >= 0)
        assert np.allclose(plan.right - plan.left, plan.initial_separation + plan.elongation)
        assert np.all(np.abs(plan.flame) <= (plan.hot_zone - plan.flame_width) / 2 + 1e-12)

    def test_linear_target_needs_varying_zone(self):
        plan = plan_pull(linear_target())
        assert plan.brushing
        assert plan.hot_zone.max() / plan.hot_zone.min() > 5
        assert np.all(np.diff(plan.hot_zone) <= 1e-9)

    @pytest.mark.parametrize("target", [
        exponential_profile(R0, L, 3.0), exponential_profile(R0, 1.0, 4.0), linear_target(),
        linear_target(rw=10.0, Z=6.0),
    ])
    def test_round_trip(self, target):
        sim = simulate_pull(plan_pull(target), target.initial_radius)
        zc = 0.5 * (sim.z[0] + sim.z[-1])
        sim = TaperProfile.from_samples(sim.z - zc, sim.r, initial_radius=target.initial_radius)
        assert max_rel_error(target, sim) < 0.01

    def test_waist_not_thinner(self):
        p = TaperProfile(np.linspace(-1, 1, 11), np.full(11, R0), R0, 2.0, R0)
        with pytest.raises(UnsupportedProfileError):
            plan_pull(p)

    def test_two_waists(self):
        z = np.linspace(-3, 3, 601)
        r = R0 - 30 * (np.exp(-((z - 1) / 0.5) ** 2) + np.exp(-((z + 1) / 0.5) ** 2))
        with pytest.raises(UnsupportedProfileError):
            plan_pull(TaperProfile.from_samples(z, r, initial_radius=R0))

    def test_asymmetric(self):
        p = exponential_profile(R0, L, 2.0)
        r = np.where(p.z < 0, np.interp(p.z * 0.8, p.z, p.r), p.r)
        with pytest.raises(UnsupportedProfileError, match="asymmetric"):
            plan_pull(TaperProfile.from_samples(p.z, r, initial_radius=R0, waist_length=L))

    def test_narrower_than_flame(self):
        with pytest.raises(UnsupportedProfileError, match="narrower"):
            plan_pull(exponential_profile(R0, 0.2, 2.0), hot_zone=0.5)


class TestAdiabaticity:
    def test_nanofiber_pull_anchor(self):
        rep = adiabaticity_check(exponential_profile(R0, L, X_NANOFIBER), 0.6)
        assert not rep.passed
        assert rep.worst_margin == pytest.approx(NANOFIBER_PULL_WORST_MARGIN, rel=1e-5)

    def test_stretched_passes(self):
        base = exponential_profile(R0, L, X_NANOFIBER)
        assert adiabaticity_check(base.stretched(10), 0.6).passed
        assert adiabaticity_check(base.stretched(100), 0.6).worst_margin > 10

    def test_step_fails_at_step(self):
        z = np.linspace(-2, 2, 401)
        r = np.where(np.abs(z) < 0.5, 31.25, R0)
        rep = adiabaticity_check(TaperProfile.from_samples(z, r, initial_radius=R0), 0.6)
        assert not rep.passed
        assert abs(abs(rep.worst_z) - 0.5) <= 0.01

    def test_uniform_infinite_margin(self):
        p = TaperProfile(np.linspace(0, 1, 5), np.full(5, R0), R0, 1.0, R0)
        rep = adiabaticity_check(p, 0.6)
        assert rep.passed and np.all(np.isinf(rep.margin))

    def test_regimes(self):
        rep = adiabaticity_check(exponential_profile(R0, L, X_NANOFIBER), 0.6)
        assert rep.regime[0] == "core"
        assert rep.regime[rep.radius.argmin()] == "cladding"
        assert np.all(rep.n_fundamental > rep.n_next)

    def test_he12_is_stricter(self):
        p = exponential_profile(R0, L, 3.0, dz=0.02)
        a = adiabaticity_check(p, 0.6)
        b = adiabaticity_check(p, 0.6, next_mode="he12")
        assert np.all(b.margin <= a.margin * (1 + 1e-12))

    def test_threads_identical(self):
        p = exponential_profile(R0, L, 3.0, dz=0.02)
        a = adiabaticity_check(p, 0.6, workers=1)
        b = adiabaticity_check(p, 0.6, workers=4)
        assert np.array_equal(a.margin, b.margin)

    def test_solver_failure_reports_z(self):
        z = np.linspace(0, 1, 3)
        p = TaperProfile.from_samples(z, np.array([R0, 1e-4, R0]), initial_radius=R0)
        with pytest.raises(NumericalError, match="z = 0.5"):
            adiabaticity_check(p, 0.6)

    def test_invalid(self):
        with pytest.raises(ParameterError):
            adiabaticity_check(exponential_profile(R0, L, 1.0), -0.6)

    @settings(max_examples=8, deadline=None)
    @given(x=st.floats(0.5, 6.0), s=st.floats(1.0, 20.0), f=st.floats(0.2, 5.0))
    def test_stretch_never_breaks_pass(self, x, s, f):
        p = exponential_profile(R0, L, x, dz=0.05)
        a = adiabaticity_check(p, 0.6, safety_factor=f)
        b = adiabaticity_check(p.stretched(s), 0.6, safety_factor=f)
        assert not (a.passed and not b.passed)
        assert b.worst_margin >= a.worst_margin * (1 - 1e-9)


def test_he12_matches_product_form():
    """HE12 of a silica rod against a sign-change scan of the l = 1 product form."""
    from scipy import special
    g = FiberGeometry(0.5, 0.6, 1.458, 1.0)
    V = g.k * g.radius * np.sqrt(g.n_core ** 2 - 1)
    U = np.linspace(3.8317059702075125 + 1e-6, V - 1e-6, 400_000)
    W = np.sqrt(V ** 2 - U ** 2)
    jt = 0.5 * (special.j0(U) - special.jv(2, U)) / (U * special.j1(U))
    kt = -0.5 * (special.k0(W) + special.kn(2, W)) / (W * special.k1(W))
    rr = 1 / g.n_core ** 2
    F = (jt + kt) * (jt + rr * kt) - (1 / U ** 2 + 1 / W ** 2) * (1 / U ** 2 + rr / W ** 2)
    # HE roots sit where the "+" branch vanishes; take the first root away from J1 poles
    ok = np.isfinite(F)
    idx = np.flatnonzero(ok[:-1] & ok[1:] & (np.sign(F[:-1]) != np.sign(F[1:]))
                         & (np.abs(F[:-1]) < 1) & (np.abs(F[1:]) < 1))
    roots = [np.sqrt(g.n_core ** 2 - (U[i] / (g.k * g.radius)) ** 2) for i in idx]
    m = solve_he12(g)
    assert m is not None
    assert min(abs(m.n_eff - n) for n in roots) < 1e-6
    assert solve_he12(FiberGeometry(0.15, 0.6, 1.45)) is None
