"""
``qpb`` command-line interface.

Every command prints a JSON report (top-level ``"schema": 1``) to stdout
and writes any requested data files. Exit codes: 0 success, 1 usage or
parameter error, 2 data error (missing or malformed input), 3 numerical
failure.

Any flag may also be given in an INI file passed with ``--config``: the
section is the command path (``[emit stream]``, ``[g2 pulsed]``, ...) and
keys are flag names with dashes or underscores (``rep-rate-mhz = 5``).
Command-line flags override file values.
"""

from __future__ import annotations

import argparse
import configparser
import difflib
import json
import math
import sys
import warnings

import numpy as np

from . import fiber_modes, formats, ion_exchange, photon_stats, taper
from .emitter_sim import CW, Blinking, DetectionConfig, EmitterModel, LineShape, Pulsed, \
    simulate_spectrum, simulate_stream
from .errors import DataError, NumericalError, ParameterError
from .scenarios import G2_BIN_NS, G2_TAU_MAX_NS, SCENARIOS

SCHEMA_VERSION = 1

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ----------------------------------------------------------------------
# Output helpers
# ----------------------------------------------------------------------

def _round(v, digits):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if not math.isfinite(v):
            return None
        return float(f"{v:.{digits}g}")
    if isinstance(v, dict):
        return {str(k): _round(x, digits) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_round(x, digits) for x in v]
    return v


def _emit(args, payload):
    out = {"schema": SCHEMA_VERSION, "command": args.command_path}
    out.update(payload)
    print(json.dumps(_round(out, args.digits)))
    return EXIT_OK


def _require(args, *names):
    missing = [n for n in names if getattr(args, n) is None]
    if missing:
        flags = ", ".join("--" + n.replace("_", "-") for n in missing)
        raise UsageError(f"{args.command_path}: missing required {flags}")


# ----------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------

def cmd_modes(args):
    _require(args, "radius_um", "wavelength_um")
    if args.silica and args.n_core is not None:
        raise UsageError("modes: --silica and --n-core are mutually exclusive")
    if args.silica:
        geom = fiber_modes.FiberGeometry.silica(args.radius_um, args.wavelength_um, args.n_clad)
    else:
        if args.n_core is None:
            raise UsageError("modes: give --n-core or --silica")
        geom = fiber_modes.FiberGeometry(args.radius_um, args.wavelength_um, args.n_core,
                                         args.n_clad)
    report = [s.strip() for s in args.report.split(",") if s.strip()]
    known = {"v", "single", "neff", "fraction"}
    bad = [s for s in report if s not in known]
    if bad:
        raise UsageError(f"modes: unknown report item(s) {bad}; choose from {sorted(known)}")
    out = {"n_core": geom.n_core, "n_clad": geom.n_clad}
    if "v" in report:
        out["v"] = fiber_modes.v_number(geom)
    if "single" in report:
        out["single_mode"] = fiber_modes.is_single_mode(geom)
    mode = None
    if {"neff", "fraction"} & set(report) or args.profile_out:
        mode = fiber_modes.solve_he11(geom)
    if "neff" in report:
        out["n_eff"] = mode.n_eff
    if "fraction" in report:
        out["power_fraction_outside"] = mode.power_fraction_outside
    if args.profile_out:
        r, inten = fiber_modes.intensity_profile(mode, args.r_max_um)
        formats.write_intensity(args.profile_out, r, inten)
        out["profile_out"] = args.profile_out
    return _emit(args, out)


def _fiber(args):
    return taper.FiberSpec(clad_radius=args.r0_um, core_radius=args.core_radius_um, na=args.na)


def cmd_taper_profile(args):
    _require(args, "output")
    x = args.elongation_mm
    if x is None:
        x = taper.required_elongation(args.r0_um, args.hot_zone_mm, args.waist_um)
    prof = taper.exponential_profile(args.r0_um, args.hot_zone_mm, x, args.margin_mm, args.dz_mm)
    formats.write_profile(args.output, prof)
    return _emit(args, {"elongation_mm": x, "waist_radius_um": prof.waist_radius,
                        "waist_length_mm": prof.waist_length, "volume_mm3": prof.volume(),
                        "samples": int(prof.z.size), "output": args.output})


def cmd_taper_plan(args):
    _require(args, "profile", "output")
    target = formats.read_profile(args.profile)
    plan = taper.plan_pull(target, args.hot_zone_mm, args.pull_speed, args.margin_mm,
                           args.brush_period)
    formats.write_plan(args.output, plan)
    return _emit(args, {"duration_s": plan.t[-1] - plan.t[0],
                        "elongation_mm": plan.elongation[-1],
                        "hot_zone_start_mm": plan.hot_zone[0],
                        "hot_zone_end_mm": plan.hot_zone[-1], "brushing": plan.brushing,
                        "rows": int(plan.t.size), "output": args.output})


def cmd_taper_simulate(args):
    _require(args, "plan", "output")
    plan = formats.read_plan(args.plan)
    prof = taper.simulate_pull(plan, args.r0_um, args.dt_s)
    formats.write_profile(args.output, prof)
    v0 = math.pi * (args.r0_um * 1e-3) ** 2 * plan.initial_separation
    return _emit(args, {"waist_radius_um": prof.waist_radius,
                        "waist_length_mm": prof.waist_length, "volume_mm3": prof.volume(),
                        "initial_volume_mm3": v0, "output": args.output})


def cmd_taper_adiabatic(args):
    _require(args, "profile")
    prof = formats.read_profile(args.profile)
    if args.stretch != 1.0:
        prof = prof.stretched(args.stretch)
    rep = taper.adiabaticity_check(prof, args.wavelength_um, args.safety_factor, _fiber(args),
                                   workers=args.workers, next_mode=args.next_mode)
    out = {"passed": rep.passed, "worst_margin": rep.worst_margin, "worst_z_mm": rep.worst_z,
           "worst_radius_um": float(rep.radius[rep.worst_index]),
           "safety_factor": rep.safety_factor, "wavelength_um": rep.wavelength}
    if args.csv:
        formats.write_table(args.csv, "z_mm,r_um,angle,bound,margin",
                            [rep.z, rep.radius, rep.angle, rep.bound, rep.margin])
        out["csv"] = args.csv
    return _emit(args, out)


def _diffusion_config(args):
    return ion_exchange.DiffusionConfig(
        mask_opening=args.opening_um, diffusion_coefficient=args.diffusion_coefficient,
        exchange_time=args.time_min, grid_dx=args.dx_um, grid_dy=args.dy_um,
        domain_width=args.width_um, domain_depth=args.depth_um, delta_n_max=args.delta_n,
        n_substrate=args.n_sub, n_steps=args.steps)


def cmd_iex_diffuse(args):
    _require(args, "output")
    m = ion_exchange.diffuse(_diffusion_config(args))
    formats.write_index_map(args.output, m)
    return _emit(args, {"n_max": float(m.n.max()), "diffusion_length_um":
                        m.config.diffusion_length, "shape": list(m.n.shape),
                        "output": args.output})


def _modes_from_map(args):
    m = formats.read_index_map(args.map)
    return ion_exchange.solve_modes_2d(m, args.wavelength_um, args.max_modes)


def cmd_iex_modes(args):
    _require(args, "map")
    modes = _modes_from_map(args)
    out = {"count": len(modes), "n_eff": [md.n_eff for md in modes]}
    if args.field_out and modes:
        formats.write_mode_field(args.field_out, modes[0])
        out["field_out"] = args.field_out
    return _emit(args, out)


def cmd_iex_surface(args):
    _require(args, "map")
    modes = _modes_from_map(args)
    if not modes:
        raise DataError(f"{args.map}: no guided mode at {args.wavelength_um} um")
    return _emit(args, {"n_eff": modes[0].n_eff, "depth_um": args.depth_um,
                        "surface_access": ion_exchange.surface_access(modes[0], args.depth_um)})


MODEL_FLAGS = ("rep_rate_mhz", "cw", "power_nw", "lifetime_ns", "saturation_nw", "blink_on_us",
               "blink_off_us", "no_blinking", "multiphoton", "qe")
DET_FLAGS = ("split", "det_dead_ns", "router_dead_ns", "jitter_ps", "efficiency",
             "background_cps")


def _build_emitter(args):
    model, det, duration = SCENARIOS[args.scenario]()
    exc = model.excitation
    power = exc.power if args.power_nw is None else args.power_nw
    if args.cw:
        exc = CW(power)
    else:
        rep = getattr(exc, "rep_rate", 5.0) if args.rep_rate_mhz is None else args.rep_rate_mhz
        exc = Pulsed(rep, power)
    blink = model.blinking
    if args.no_blinking:
        blink = None
    elif args.blink_on_us is not None or args.blink_off_us is not None:
        base = blink or Blinking(1.0, 1.0)
        blink = Blinking(base.mean_on if args.blink_on_us is None else args.blink_on_us,
                         base.mean_off if args.blink_off_us is None else args.blink_off_us)

    def pick(value, default):
        return default if value is None else value
    model = EmitterModel(exc, pick(args.lifetime_ns, model.lifetime),
                         pick(args.saturation_nw, model.saturation_power), blink,
                         pick(args.multiphoton, model.multiphoton_prob),
                         pick(args.qe, model.quantum_efficiency), model.spectrum)
    det = DetectionConfig(pick(args.split, det.split_ratio),
                          pick(args.det_dead_ns, det.detector_dead_time),
                          pick(args.router_dead_ns, det.router_dead_time),
                          pick(args.jitter_ps, det.timing_jitter_sigma),
                          pick(args.efficiency, det.detection_efficiency),
                          pick(args.background_cps, det.background_rate))
    return model, det, pick(args.duration_s, duration)


def cmd_emit_stream(args):
    _require(args, "output")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        model, det, duration = _build_emitter(args)
        stream = simulate_stream(model, det, duration, args.seed)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    formats.write_timestamps(args.output, stream, args.ps_per_tick)
    return _emit(args, {"records": len(stream), "channel_a": int(stream.a.size),
                        "channel_b": int(stream.b.size), "duration_s": duration,
                        "seed": args.seed, "output": args.output})


def cmd_emit_spectrum(args):
    _require(args, "output")
    model = EmitterModel(spectrum=LineShape(args.center_nm, args.fwhm_nm, args.shape))
    bins = np.arange(args.lo_nm, args.hi_nm + args.step_nm / 2, args.step_nm)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        spec = simulate_spectrum(model, args.counts, bins, args.seed)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    formats.write_spectrum(args.output, spec)
    return _emit(args, {"bins": int(bins.size), "counts": int(spec.counts.sum()),
                        "seed": args.seed, "output": args.output})


def _histogram(args):
    stream = formats.read_timestamps(args.input)
    return photon_stats.correlate_stream(stream, args.bin_ns, args.tau_max_ns,
                                         shards=args.shards)


def cmd_g2_pulsed(args):
    _require(args, "input", "rep_rate_mhz")
    hist = _histogram(args)
    rep = photon_stats.analyze_pulsed_g2(hist, args.rep_rate_mhz, args.peak_window_ns,
                                         args.norm_delay_us, args.dead_time_ns)
    if args.csv:
        formats.write_g2(args.csv, rep.histogram)
    peaks = {k: v for k, v in sorted(rep.peak_areas.items()) if abs(k) <= args.peaks}
    return _emit(args, {"g2_zero": rep.g2_zero, "g2_zero_err": rep.g2_zero_err,
                        "g2_zero_raw": rep.g2_zero_raw,
                        "is_single_emitter": rep.is_single_emitter, "peak_areas": peaks,
                        "bunching_amplitudes": rep.bunching_amplitudes,
                        "normalization_area": rep.normalization_area,
                        "background_per_bin": rep.background_per_bin,
                        "zero_peak_coverage": rep.zero_peak_coverage,
                        "masked_bins": int(rep.histogram.masked.sum())})


def cmd_g2_cw(args):
    _require(args, "input", "fit_window_ns")
    hist = _histogram(args)
    plateau = None
    if args.plateau_lo_ns is not None or args.plateau_hi_ns is not None:
        plateau = (0.75 * hist.tau_max if args.plateau_lo_ns is None else args.plateau_lo_ns,
                   hist.tau_max if args.plateau_hi_ns is None else args.plateau_hi_ns)
    fit = photon_stats.analyze_cw_g2(hist, args.fit_window_ns, plateau, args.dead_time_ns)
    if args.csv:
        g = hist.raw / fit.plateau
        formats.write_g2(args.csv, photon_stats.G2Histogram(
            hist.bin_width, hist.tau, hist.raw, np.abs(hist.tau) < args.dead_time_ns,
            normalized=g))
    return _emit(args, {"g2_zero": fit.g2_zero, "g2_zero_err": fit.g2_zero_err,
                        "recovery_time_ns": fit.recovery_time,
                        "recovery_time_err_ns": fit.recovery_time_err, "fit_rms": fit.fit_rms,
                        "plateau": fit.plateau, "antibunched": fit.antibunched})


SATURATION_HEADER = "power_nw,intensity"


def cmd_fit_saturation(args):
    _require(args, "input")
    _, rows = formats.read_table(args.input, SATURATION_HEADER)
    P, I = rows[:, 0], rows[:, 1]
    out = {}
    if args.brightest_k is not None:
        powers = np.unique(P)
        groups = [I[P == p] for p in powers]
        n = groups[0].size
        if any(g.size != n for g in groups):
            raise DataError(f"{args.input}: every power needs the same number of readings")
        I = np.array([photon_stats.brightest_k_aggregate(g, n, args.brightest_k) for g in groups])
        P = powers
        out["readings_per_power"] = n
    fit = photon_stats.fit_saturation(P, I, args.noise)
    out.update({"p_sat_nw": fit.p_sat, "p_sat_err_nw": fit.p_sat_err,
                "i_infinity": fit.i_infinity, "i_infinity_err": fit.i_infinity_err,
                "residual_rms": fit.residual_rms, "points": int(P.size)})
    return _emit(args, out)


def cmd_fit_peak(args):
    _require(args, "input")
    fit = photon_stats.fit_peak(formats.read_spectrum(args.input), args.model)
    return _emit(args, {"center_nm": fit.center, "center_err_nm": fit.center_err,
                        "fwhm_nm": fit.fwhm, "fwhm_err_nm": fit.fwhm_err,
                        "amplitude": fit.amplitude, "baseline": fit.baseline,
                        "model": fit.model, "fit_rms": fit.fit_rms,
                        "label": photon_stats.classify_emission(fit)})


def cmd_classify(args):
    if (args.center_nm is None) == (args.input is None):
        raise UsageError("classify: give exactly one of --center-nm or --input")
    if args.input is not None:
        c = photon_stats.fit_peak(formats.read_spectrum(args.input), args.model).center
    else:
        c = args.center_nm
    return _emit(args, {"center_nm": c, "label": photon_stats.classify_emission(c)})


def cmd_stokes(args):
    _require(args, "i0", "i45", "i90", "i135", "i_rcp", "i_lcp")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        st = photon_stats.stokes(args.i0, args.i45, args.i90, args.i135, args.i_rcp, args.i_lcp)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    return _emit(args, {"S0": st.S0, "S1": st.S1, "S2": st.S2, "S3": st.S3,
                        "degree_of_polarization": st.degree_of_polarization})


def cmd_convert(args):
    _require(args, "input", "output")
    src_csv = args.input.lower().endswith(".csv")
    dst_csv = args.output.lower().endswith(".csv")
    if src_csv == dst_csv:
        raise UsageError("convert: exactly one of --input/--output must end in .csv")
    if src_csv:
        stream = formats.read_timestamps_csv(args.input)
        formats.write_timestamps(args.output, stream, args.ps_per_tick)
    else:
        stream = formats.read_timestamps(args.input)
        formats.write_timestamps_csv(args.output, stream)
    return _emit(args, {"records": len(stream), "output": args.output})


# ----------------------------------------------------------------------
# Parser
# ----------------------------------------------------------------------

def _add(p, *flags, **kw):
    kw.setdefault("default", None)
    p.add_argument(*flags, **kw)


def build_parser():
    root = _Parser(prog="qpb", description="Photonic-platform and quantum-emitter workbench.")
    root.add_argument("--config", help="INI file with flag values; sections name the command "
                                       "path, e.g. [g2 pulsed]")
    root.add_argument("--digits", type=int, default=5,
                      help="significant digits of floats in the JSON report (default 5; "
                           "17 is lossless)")
    sub = root.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("modes", help="HE11 mode of a step-index cylinder")
    _add(p, "--radius-um", type=float, help="core (or nanofiber) radius in um")
    _add(p, "--wavelength-um", type=float, help="vacuum wavelength in um")
    _add(p, "--n-core", type=float, help="core refractive index")
    _add(p, "--silica", action="store_true", default=False,
         help="use the fused-silica dispersion model for the core index")
    _add(p, "--n-clad", type=float, default=1.0, help="surrounding index (default 1.0, air)")
    _add(p, "--report", default="v,single,neff,fraction",
         help="comma list of v, single, neff, fraction (default all)")
    _add(p, "--profile-out", help="write the intensity profile CSV (r_um,intensity)")
    _add(p, "--r-max-um", type=float, help="outer radius of the profile (default 4 a)")
    p.set_defaults(func=cmd_modes)

    tp = sub.add_parser("taper", help="taper profiles, pull plans, pull simulation, "
                                      "adiabaticity").add_subparsers(
        dest="taper_command", metavar="SUBCOMMAND", parser_class=_Parser)

    p = tp.add_parser("profile", help="analytic constant-hot-zone profile to CSV")
    _add(p, "--r0-um", type=float, default=taper.SMF_CLADDING_RADIUS_UM,
         help="unpulled radius in um (default 62.5)")
    _add(p, "--waist-um", type=float, default=0.15, help="target waist radius in um "
                                                         "(default 0.15)")
    _add(p, "--hot-zone-mm", type=float, default=taper.FLAME_WIDTH_MM,
         help="hot-zone width in mm (default 0.5)")
    _add(p, "--elongation-mm", type=float,
         help="elongation in mm (default: the value reaching --waist-um)")
    _add(p, "--margin-mm", type=float, default=1.0, help="unpulled fiber kept on each side")
    _add(p, "--dz-mm", type=float, help="sample spacing in mm (default hot zone / 100)")
    _add(p, "-o", "--output", help="profile CSV to write (z_mm,r_um)")
    p.set_defaults(func=cmd_taper_profile)

    p = tp.add_parser("plan", help="stage and flame trajectory for a target profile")
    _add(p, "--profile", help="target profile CSV")
    _add(p, "--hot-zone-mm", type=float, default=taper.FLAME_WIDTH_MM,
         help="flame width in mm (default 0.5)")
    _add(p, "--pull-speed", type=float, default=0.1, help="elongation rate in mm/s")
    _add(p, "--margin-mm", type=float, default=1.0, help="stage clearance on each side in mm")
    _add(p, "--brush-period", type=float, default=2.0, help="flame sweep period in s")
    _add(p, "-o", "--output", help="plan CSV to write")
    p.set_defaults(func=cmd_taper_plan)

    p = tp.add_parser("simulate", help="profile produced by a pull plan")
    _add(p, "--plan", help="plan CSV")
    _add(p, "--r0-um", type=float, default=taper.SMF_CLADDING_RADIUS_UM,
         help="unpulled radius in um")
    _add(p, "--dt-s", type=float, help="time step in s (default: automatic)")
    _add(p, "-o", "--output", help="profile CSV to write")
    p.set_defaults(func=cmd_taper_simulate)

    p = tp.add_parser("adiabatic", help="local adiabaticity check of a profile")
    _add(p, "--profile", help="profile CSV")
    _add(p, "--wavelength-um", type=float, default=0.6, help="vacuum wavelength in um")
    _add(p, "--safety-factor", type=float, default=1.0, help="factor on the bound (default 1)")
    _add(p, "--stretch", type=float, default=1.0, help="stretch the profile axially first")
    _add(p, "--next-mode", choices=taper.NEXT_MODE_OPTIONS, default="proxy",
         help="mode the fundamental beats against")
    _add(p, "--r0-um", type=float, default=taper.SMF_CLADDING_RADIUS_UM,
         help="cladding radius of the unpulled fiber in um")
    _add(p, "--core-radius-um", type=float, default=taper.SMF_CORE_RADIUS_UM,
         help="core radius of the unpulled fiber in um")
    _add(p, "--na", type=float, default=taper.SMF_NA, help="core numerical aperture")
    _add(p, "--workers", type=int, help="solver threads (capped by QPB_THREADS)")
    _add(p, "--csv", help="write z_mm,r_um,angle,bound,margin per sample")
    p.set_defaults(func=cmd_taper_adiabatic)

    ip = sub.add_parser("iex", help="ion-exchange diffusion and waveguide modes").add_subparsers(
        dest="iex_command", metavar="SUBCOMMAND", parser_class=_Parser)
    p = ip.add_parser("diffuse", help="diffuse through a mask opening; write the index map")
    d = ion_exchange.DiffusionConfig()
    _add(p, "--opening-um", type=float, default=d.mask_opening, help="mask opening in um")
    _add(p, "--delta-n", type=float, default=d.delta_n_max, help="surface index increase")
    _add(p, "--time-min", type=float, default=d.exchange_time, help="exchange time in min")
    _add(p, "--diffusion-coefficient", type=float, default=d.diffusion_coefficient,
         help="um^2/min")
    _add(p, "--dx-um", type=float, default=d.grid_dx, help="lateral grid step in um")
    _add(p, "--dy-um", type=float, default=d.grid_dy, help="depth grid step in um")
    _add(p, "--width-um", type=float, default=d.domain_width, help="domain width in um")
    _add(p, "--depth-um", type=float, default=d.domain_depth, help="domain depth in um")
    _add(p, "--n-sub", type=float, default=d.n_substrate, help="substrate index")
    _add(p, "--steps", type=int, default=d.n_steps, help="implicit time steps")
    _add(p, "-o", "--output", help="index-map CSV to write")
    p.set_defaults(func=cmd_iex_diffuse)
    for name, func, helptext in (("modes", cmd_iex_modes, "guided modes of an index map"),
                                 ("surface", cmd_iex_surface,
                                  "fundamental-mode power within a depth of the surface")):
        p = ip.add_parser(name, help=helptext)
        _add(p, "--map", help="index-map CSV")
        _add(p, "--wavelength-um", type=float, default=1.55, help="vacuum wavelength in um")
        _add(p, "--max-modes", type=int, default=10, help="largest number of modes sought")
        if name == "modes":
            _add(p, "--field-out", help="write the fundamental field (index-map CSV layout)")
        else:
            _add(p, "--depth-um", type=float, default=0.5, help="depth below the surface in um")
        p.set_defaults(func=func)

    ep = sub.add_parser("emit", help="simulate photon streams and spectra").add_subparsers(
        dest="emit_command", metavar="SUBCOMMAND", parser_class=_Parser)
    p = ep.add_parser("stream", help="simulated HBT timestamp file")
    _add(p, "--scenario", choices=sorted(SCENARIOS), default="perovskite",
         help="starting parameter set; other flags override it")
    _add(p, "--seed", type=int, default=0, help="random seed")
    _add(p, "--duration-s", type=float, help="acquisition time in s (default: scenario)")
    _add(p, "--rep-rate-mhz", type=float, help="pulsed repetition rate in MHz")
    _add(p, "--cw", action="store_true", default=False, help="continuous-wave excitation")
    _add(p, "--power-nw", type=float, help="excitation power in nW")
    _add(p, "--lifetime-ns", type=float, help="radiative lifetime in ns")
    _add(p, "--saturation-nw", type=float, help="saturation power in nW")
    _add(p, "--blink-on-us", type=float, help="mean on-state dwell in us")
    _add(p, "--blink-off-us", type=float, help="mean off-state dwell in us")
    _add(p, "--no-blinking", action="store_true", default=False, help="disable blinking")
    _add(p, "--multiphoton", type=float, help="probability of a second photon per excitation")
    _add(p, "--qe", type=float, help="quantum efficiency")
    _add(p, "--split", type=float, help="fraction routed to channel A")
    _add(p, "--det-dead-ns", type=float, help="per-detector dead time in ns")
    _add(p, "--router-dead-ns", type=float, help="cross-channel router dead time in ns")
    _add(p, "--jitter-ps", type=float, help="Gaussian timing jitter sigma in ps")
    _add(p, "--efficiency", type=float, help="detection efficiency")
    _add(p, "--background-cps", type=float, help="background counts/s per channel")
    _add(p, "--ps-per-tick", type=int, default=1, help="file time resolution in ps")
    _add(p, "-o", "--output", help="timestamp file to write")
    p.set_defaults(func=cmd_emit_stream)

    p = ep.add_parser("spectrum", help="simulated spectrum CSV")
    _add(p, "--center-nm", type=float, default=518.0, help="line centre in nm")
    _add(p, "--fwhm-nm", type=float, default=16.0, help="line FWHM in nm")
    _add(p, "--shape", choices=("gaussian", "lorentzian"), default="gaussian",
         help="line shape")
    _add(p, "--counts", type=int, default=100_000, help="total counts")
    _add(p, "--lo-nm", type=float, default=440.0, help="first bin centre in nm")
    _add(p, "--hi-nm", type=float, default=600.0, help="last bin centre in nm")
    _add(p, "--step-nm", type=float, default=1.0, help="bin width in nm")
    _add(p, "--seed", type=int, default=0, help="random seed")
    _add(p, "-o", "--output", help="spectrum CSV to write")
    p.set_defaults(func=cmd_emit_spectrum)

    gp = sub.add_parser("g2", help="correlate a timestamp file and analyze g2").add_subparsers(
        dest="g2_command", metavar="SUBCOMMAND", parser_class=_Parser)
    for name in ("pulsed", "cw"):
        p = gp.add_parser(name, help=f"{name} g2 analysis")
        _add(p, "-i", "--input", help="timestamp file")
        _add(p, "--bin-ns", type=float, default=G2_BIN_NS, help="histogram bin width in ns")
        _add(p, "--tau-max-ns", type=float,
             default=G2_TAU_MAX_NS if name == "pulsed" else 1000.0,
             help="histogram half range in ns")
        _add(p, "--shards", type=int, default=1, help="correlator shards (result identical)")
        _add(p, "--csv", help="write the histogram CSV (tau_ns,raw,normalized,masked)")
        if name == "pulsed":
            _add(p, "--rep-rate-mhz", type=float, help="repetition rate in MHz")
            _add(p, "--peak-window-ns", type=float,
                 help="half-width of each peak window in ns (default period / 4)")
            _add(p, "--norm-delay-us", type=float, default=100.0,
                 help="normalization delay in us")
            _add(p, "--dead-time-ns", type=float, default=100.0,
                 help="mask bins with |tau| below this (ns)")
            _add(p, "--peaks", type=int, default=5, help="report peaks with |k| up to this")
            p.set_defaults(func=cmd_g2_pulsed)
        else:
            _add(p, "--fit-window-ns", type=float, help="fit |tau| up to this (ns)")
            _add(p, "--plateau-lo-ns", type=float, help="plateau window start (ns)")
            _add(p, "--plateau-hi-ns", type=float, help="plateau window end (ns)")
            _add(p, "--dead-time-ns", type=float, default=0.0,
                 help="exclude bins with |tau| below this (ns)")
            p.set_defaults(func=cmd_g2_cw)

    fp = sub.add_parser("fit", help="saturation and spectral peak fits").add_subparsers(
        dest="fit_command", metavar="SUBCOMMAND", parser_class=_Parser)
    p = fp.add_parser("saturation", help="fit I = I_inf P / (P + P_sat)")
    _add(p, "-i", "--input", help=f"CSV with header {SATURATION_HEADER}")
    _add(p, "--noise", choices=photon_stats.SATURATION_NOISE, default="relative",
         help="residual weighting")
    _add(p, "--brightest-k", type=int,
         help="aggregate repeated readings per power by the mean of the k brightest")
    p.set_defaults(func=cmd_fit_saturation)
    p = fp.add_parser("peak", help="single-line fit of a spectrum")
    _add(p, "-i", "--input", help="spectrum CSV (wavelength_nm,counts)")
    _add(p, "--model", choices=("gaussian", "lorentzian"), default="gaussian",
         help="line shape")
    p.set_defaults(func=cmd_fit_peak)

    p = sub.add_parser("classify", help="label an emission line by its centre")
    _add(p, "--center-nm", type=float, help="line centre in nm")
    _add(p, "-i", "--input", help="spectrum CSV to fit instead")
    _add(p, "--model", choices=("gaussian", "lorentzian"), default="gaussian",
         help="line shape for --input")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("stokes", help="Stokes vector and degree of polarization")
    for flag, what in (("--i0", "0 deg"), ("--i45", "45 deg"), ("--i90", "90 deg"),
                       ("--i135", "135 deg"), ("--i-rcp", "right circular"),
                       ("--i-lcp", "left circular")):
        _add(p, flag, type=float, help=f"intensity behind the {what} analyzer")
    p.set_defaults(func=cmd_stokes)

    p = sub.add_parser("convert", help="timestamp file <-> CSV (channel,timestamp_ps)")
    _add(p, "-i", "--input", help="source file (.csv or binary)")
    _add(p, "-o", "--output", help="destination file (.csv or binary)")
    _add(p, "--ps-per-tick", type=int, default=1, help="resolution when writing binary")
    p.set_defaults(func=cmd_convert)
    return root


def _leaf_parser(root, path):
    p = root
    for name in path:
        sp = next(a for a in p._actions if isinstance(a, argparse._SubParsersAction))
        p = sp.choices[name]
    return p


def _command_paths(root, prefix=()):
    subs = [a for a in root._actions if isinstance(a, argparse._SubParsersAction)]
    if not subs:
        yield prefix, root
        return
    for name, p in subs[0].choices.items():
        yield from _command_paths(p, prefix + (name,))


def _apply_config(root, path, config_file, argv):
    cp = configparser.ConfigParser(interpolation=None)
    try:
        with open(config_file) as fh:
            cp.read_file(fh)
    except FileNotFoundError:
        raise DataError(f"{config_file}: no such file") from None
    except configparser.Error as exc:
        raise DataError(f"{config_file}: {exc}") from None
    known = {" ".join(p): leaf for p, leaf in _command_paths(root)}
    values = {}
    for section in cp.sections():
        if section not in known:
            near = difflib.get_close_matches(section, list(known), n=3)
            hint = f"; did you mean {', '.join(near)}?" if near else ""
            raise UsageError(f"{config_file}: unknown section [{section}]{hint}")
        leaf = known[section]
        actions = {a.dest: a for a in leaf._actions if a.dest not in ("help",)}
        for key, raw in cp.items(section):
            dest = key.strip().replace("-", "_")
            if dest not in actions or dest == "func":
                near = difflib.get_close_matches(dest, list(actions), n=3)
                hint = (f"; did you mean {', '.join(n.replace('_', '-') for n in near)}?"
                        if near else "")
                raise UsageError(f"{config_file}: [{section}] unknown key '{key}'{hint}")
            if section != " ".join(path):
                continue
            act = actions[dest]
            try:
                if isinstance(act, argparse._StoreTrueAction):
                    value = cp.getboolean(section, key)
                else:
                    value = act.type(raw) if act.type else raw
                    if act.choices is not None and value not in act.choices:
                        raise ValueError(f"not one of {list(act.choices)}")
            except ValueError as exc:
                raise UsageError(f"{config_file}: [{section}] {key} = {raw!r}: {exc}") from None
            values[dest] = value
    leaf = _leaf_parser(root, path)
    leaf.set_defaults(**values)
    return root.parse_args(argv)


def _command_path(args):
    path = [args.command]
    for attr in ("taper_command", "iex_command", "emit_command", "g2_command", "fit_command"):
        v = getattr(args, attr, None)
        if v is not None:
            path.append(v)
    return tuple(path)


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    root = build_parser()
    try:
        args = root.parse_args(argv)
        if args.command is None:
            root.print_help()
            return EXIT_USAGE
        path = _command_path(args)
        if not hasattr(args, "func"):
            _leaf_parser(root, path).print_help()
            return EXIT_USAGE
        if args.config:
            args = _apply_config(root, path, args.config, argv)
        if args.digits < 1 or args.digits > 17:
            raise UsageError("--digits must be between 1 and 17")
        args.command_path = " ".join(path)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParameterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"data error: {exc.filename}: {exc.strerror}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
