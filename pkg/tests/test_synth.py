import numpy as np
import pytest
from scipy.signal import welch

from vmi.core import CLASS_ORDER, AnalysisConfig, MarkerKind, SessionKind, validate_recording
from vmi.dsp import alpha_filter, extract_epochs, filter_epochs
from vmi.synth import (
    SynthConfig,
    bayes_reference_accuracy,
    class_patterns,
    envelope,
    generate_session,
    preset_config,
    trial_order,
)


def test_small_session_valid(small_imagery_recording):
    rec = small_imagery_recording
    assert validate_recording(rec) == []
    assert rec.data.dtype == np.float32
    assert rec.data.shape == (64, 48 * 8000)
    cues = [m for m in rec.markers if m.kind is MarkerKind.CUE_ONSET]
    rests = [m for m in rec.markers if m.kind is MarkerKind.REST_ONSET]
    assert len(cues) == len(rests) == 48
    assert [sum(m.class_label is c for m in cues) for c in CLASS_ORDER] == [12] * 4
    assert all(c.sample_index - r.sample_index == 3000 for r, c in zip(rests, cues))


def test_perception_uses_stimulus_markers():
    rec = generate_session(preset_config("low", "perception", n_trials_per_class=1))
    kinds = {m.kind for m in rec.markers}
    assert kinds == {MarkerKind.REST_ONSET, MarkerKind.STIMULUS_ONSET}
    assert rec.session_kind is SessionKind.PERCEPTION


def test_seed_reproducible():
    cfg = preset_config("high", seed=7, n_trials_per_class=2)
    a, b = generate_session(cfg), generate_session(cfg)
    assert np.array_equal(a.data, b.data) and a.markers == b.markers
    c = generate_session(preset_config("high", seed=8, n_trials_per_class=2))
    assert not np.array_equal(a.data, c.data)


def test_trial_order_balanced():
    order = trial_order(SynthConfig(n_trials_per_class=5, seed=3))
    assert sorted(CLASS_ORDER.index(c) for c in order) == sorted(list(range(4)) * 5)
    assert order != trial_order(SynthConfig(n_trials_per_class=5, seed=4))


def test_envelopes():
    imag = envelope(SynthConfig())
    assert imag[0] == 1.0 and imag[-1] == pytest.approx(2.0, abs=1e-3)
    assert np.all(np.diff(imag) > 0)
    assert np.all(envelope(SynthConfig(session_kind=SessionKind.PERCEPTION)) == 0.5)


def test_patterns_unit_norm_and_distinct():
    p = np.stack(list(class_patterns().values()))
    assert np.allclose(np.linalg.norm(p, axis=1), 1.0)
    cos = p @ p.T
    assert np.all(cos[~np.eye(4, dtype=bool)] < 0.99)


def test_config_rejects():
    with pytest.raises(ValueError):
        SynthConfig(n_trials_per_class=0)
    with pytest.raises(ValueError):
        SynthConfig(gain=1.0)
    with pytest.raises(ValueError):
        SynthConfig(source_amplitude_uv=(1.0, 2.0))


def test_task_spectrum_peaks_in_alpha(small_imagery_recording):
    rec = small_imagery_recording
    es = extract_epochs(rec, (0.5, 4.5), MarkerKind.CUE_ONSET)
    oz = es.data[:, rec.montage.index("Oz"), :]
    f, p = welch(oz, fs=rec.sample_rate_hz, nperseg=1000, axis=-1)
    p = p.mean(axis=0)
    sel = (f >= 2) & (f <= 45)
    assert 8 <= f[sel][np.argmax(p[sel])] <= 13


def test_oz_alpha_grows_within_trial(small_imagery_recording):
    rec = small_imagery_recording
    es = filter_epochs(extract_epochs(rec, (0.0, 4.0), MarkerKind.CUE_ONSET),
                       alpha_filter(AnalysisConfig(), rec.sample_rate_hz))
    oz = rec.montage.index("Oz")
    early = es.crop((0.0, 1.0)).data[:, oz].var(axis=-1)
    late = es.crop((3.0, 4.0)).data[:, oz].var(axis=-1)
    assert np.mean(late > early) >= 0.95


def test_bayes_null_is_chance():
    assert bayes_reference_accuracy(preset_config("null"), n_mc=200) == pytest.approx(0.25, abs=0.02)


def test_bayes_high_separable():
    assert bayes_reference_accuracy(preset_config("high"), n_mc=100) >= 0.95
