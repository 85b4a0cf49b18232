"""Ready-made emitter/detector configurations for the measured regimes.

Parameters the measurements do not report (lifetimes, efficiencies,
blinking dwell times, multiphoton probability) are assumptions chosen to
fall in the reported regime.
"""

from .emitter_sim import Blinking, DetectionConfig, EmitterModel, LineShape, Pulsed

G2_BIN_NS = 1.0
G2_TAU_MAX_NS = 120_000.0


def ideal_emitter():
    """Blink-free two-level emitter at 5 MHz, about 0.1 detections per pulse."""
    model = EmitterModel(Pulsed(5.0, 80.0), lifetime=5.0)
    det = DetectionConfig(detection_efficiency=0.2, router_dead_time=0.0)
    return model, det, 2.2


def nanofiber_dot_in_rod():
    """Dot-in-rod on a nanofiber at 5 MHz with blinking and a residual biexciton.

    No router dead time, so the zero-delay peak is observed directly.
    """
    model = EmitterModel(Pulsed(5.0, 80.0), lifetime=10.0, blinking=Blinking(5.0, 5.0),
                         multiphoton_prob=0.01, spectrum=LineShape(600.0, 30.0))
    det = DetectionConfig(detection_efficiency=0.05, router_dead_time=0.0,
                          background_rate=100.0, timing_jitter_sigma=50.0)
    return model, det, 4.0


def perovskite():
    """Perovskite nanocrystal at 1 MHz behind a router with a 100 ns dead time."""
    model = EmitterModel(Pulsed(1.0, 80.0), blinking=Blinking(5.0, 5.0), multiphoton_prob=0.02)
    det = DetectionConfig(detection_efficiency=0.3, router_dead_time=100.0,
                          background_rate=200.0, timing_jitter_sigma=50.0)
    return model, det, 10.0


SCENARIOS = {
    "ideal": ideal_emitter,
    "nanofiber": nanofiber_dot_in_rod,
    "perovskite": perovskite,
}
