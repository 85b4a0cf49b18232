import pytest

from qpbench.photon_stats import analyze_pulsed_g2, correlate_stream
from qpbench.scenarios import G2_BIN_NS, G2_TAU_MAX_NS, SCENARIOS
from qpbench.emitter_sim import simulate_stream

SCENARIO_SEED = 7


def run_scenario(name, seed=SCENARIO_SEED):
    model, det, duration = SCENARIOS[name]()
    stream = simulate_stream(model, det, duration, seed)
    hist = correlate_stream(stream, G2_BIN_NS, G2_TAU_MAX_NS)
    report = analyze_pulsed_g2(hist, model.excitation.rep_rate,
                               dead_time=det.router_dead_time)
    return model, det, stream, hist, report


@pytest.fixture(scope="session")
def scenario():
    cache = {}

    def get(name):
        if name not in cache:
            cache[name] = run_scenario(name)
        return cache[name]
    return get


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(mod.VERDICTS):
        terminalreporter.write_line(mod.VERDICTS[num])
