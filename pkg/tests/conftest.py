import numpy as np
import pytest

from vmi.core import AnalysisConfig, MarkerKind
from vmi.dsp import alpha_filter, extract_epochs, filter_epochs
from vmi.synth import generate_session, preset_config


def _filtered_epochs(cfg_synth, which=MarkerKind.CUE_ONSET):
    cfg = AnalysisConfig()
    rec = generate_session(cfg_synth)
    es = extract_epochs(rec, cfg.epoch_window_s, which)
    return filter_epochs(es, alpha_filter(cfg, rec.sample_rate_hz))


@pytest.fixture(scope="session")
def high_imagery_cfg():
    return preset_config("high", "imagery", seed=1)


@pytest.fixture(scope="session")
def high_imagery_epochs(high_imagery_cfg):
    """Alpha-filtered 0.5-4 s epochs of a full High-preset imagery session."""
    return _filtered_epochs(high_imagery_cfg)


@pytest.fixture(scope="session")
def small_imagery_recording():
    return generate_session(preset_config("high", "imagery", seed=3, n_trials_per_class=12))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion."""
    lines = request.config.stash.setdefault(_ACCEPTANCE_KEY, [])

    def report(criterion: str, ok: bool, detail: str) -> bool:
        line = f"{criterion} {'PASS' if ok else 'FAIL'}: {detail}"
        lines.append(line)
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
