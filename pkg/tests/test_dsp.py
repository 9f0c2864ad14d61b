import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import signal

from vmi.core import ContinuousRecording, EpochSet, MarkerEvent, MarkerKind, VisualClass, montage_from_labels
from vmi.dsp import (
    EpochOutOfBounds,
    InvalidBand,
    SignalTooShort,
    apply_zero_phase,
    band_power,
    design_butterworth_bandpass,
    design_notch,
    extract_epochs,
)

FS = 1000.0
ALPHA = design_butterworth_bandpass(3, 8, 13, FS)


def db(h):
    return 20 * np.log10(np.maximum(np.abs(h), 1e-300))


def test_alpha_design_edges_and_centre():
    assert ALPHA.n_sections == 3
    assert db(ALPHA.response([8.0, 13.0])) == pytest.approx([-3.0, -3.0], abs=0.1)
    assert db(ALPHA.response([np.sqrt(8 * 13)]))[0] == pytest.approx(0.0, abs=0.1)
    assert abs(ALPHA.response([0.0])[0]) < 1e-12


def test_alpha_design_matches_scipy():
    ref = signal.butter(3, [8, 13], btype="bandpass", fs=FS, output="sos")
    f = np.linspace(0.5, 100, 400)
    _, h_ref = signal.sosfreqz(ref, worN=f, fs=FS)
    assert np.allclose(ALPHA.response(f), h_ref, atol=1e-10)


@pytest.mark.parametrize("order", range(1, 9))
@pytest.mark.parametrize("band", [(8, 13), (1, 4), (30, 45), (0.5, 200)])
def test_poles_inside_unit_circle(order, band):
    f = design_butterworth_bandpass(order, *band, FS)
    assert f.n_sections == order
    assert f.poles().size == 2 * order
    assert np.all(np.abs(f.poles()) < 1)


@pytest.mark.parametrize("band", [(13, 8), (0, 13), (8, 500), (8, 600)])
def test_invalid_band(band):
    with pytest.raises(InvalidBand):
        design_butterworth_bandpass(3, *band, FS)


def test_notch():
    f = design_notch(60, 30, FS)
    assert db(f.response([60.0]))[0] < -60
    assert db(f.response([10.0]))[0] == pytest.approx(0.0, abs=0.1)
    ref_b, ref_a = signal.iirnotch(60, 30, FS)
    assert np.allclose(f.sos[0], np.r_[ref_b, ref_a])
    with pytest.raises(InvalidBand):
        design_notch(600, 30, FS)


def test_centre_sinusoid_passes_at_unit_gain():
    t = np.arange(int(10 * FS)) / FS
    x = np.sin(2 * np.pi * 10.198 * t)
    y = apply_zero_phase(ALPHA, x)
    core = slice(int(FS), int(9 * FS))
    ratio = np.sqrt(np.mean(y[core] ** 2) / np.mean(x[core] ** 2))
    assert ratio == pytest.approx(1.0, abs=0.01)


def test_sixty_hz_rejected():
    t = np.arange(int(10 * FS)) / FS
    x = np.sin(2 * np.pi * 60 * t)
    y = apply_zero_phase(ALPHA, x)
    core = slice(int(FS), int(9 * FS))
    atten = 20 * np.log10(np.sqrt(np.mean(y[core] ** 2) / np.mean(x[core] ** 2)))
    assert atten <= -60


def test_zero_input_gives_zero():
    assert np.array_equal(apply_zero_phase(ALPHA, np.zeros(500)), np.zeros(500))


def test_matches_scipy_filtfilt(rng):
    x = rng.standard_normal((3, 4, 2000))
    ref = signal.sosfiltfilt(ALPHA.sos, x, axis=-1, padtype="odd", padlen=ALPHA.padlen)
    assert np.allclose(apply_zero_phase(ALPHA, x), ref, atol=1e-12)
    assert np.allclose(apply_zero_phase(ALPHA, np.swapaxes(x, 1, 2), axis=1), np.swapaxes(ref, 1, 2), atol=1e-12)


def test_zero_phase_no_lag(rng):
    x = apply_zero_phase(design_butterworth_bandpass(2, 5, 40, FS), rng.standard_normal(8000))
    y = apply_zero_phase(ALPHA, x)
    xc = signal.correlate(y, x, mode="full")
    assert np.argmax(xc) - (x.size - 1) == 0


@settings(max_examples=20, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.integers(0, 2**31 - 1))
def test_linearity(a, b, seed):
    r = np.random.default_rng(seed)
    x, y = r.standard_normal(600), r.standard_normal(600)
    lhs = apply_zero_phase(ALPHA, a * x + b * y)
    rhs = a * apply_zero_phase(ALPHA, x) + b * apply_zero_phase(ALPHA, y)
    assert np.allclose(lhs, rhs, rtol=1e-9, atol=1e-9 * (abs(a) + abs(b) + 1))


def test_signal_too_short():
    with pytest.raises(SignalTooShort):
        apply_zero_phase(ALPHA, np.ones(ALPHA.padlen))


def _recording(n=20000, markers=((10000, VisualClass.EATING_FOOD),)):
    data = np.tile(np.arange(n, dtype=float), (2, 1))
    events = tuple(MarkerEvent(p, MarkerKind.CUE_ONSET, c) for p, c in markers)
    return ContinuousRecording(montage_from_labels(["Oz", "O1"]), FS, data, events)


def test_extract_epochs_index_arithmetic():
    es = extract_epochs(_recording(), (0.5, 4.0))
    assert es.data.shape == (1, 2, 3500)
    assert es.data[0, 0, 0] == 10500 and es.data[0, 0, -1] == 13999
    assert es.labels == (VisualClass.EATING_FOOD,)
    assert es.channel_labels == ("Oz", "O1")


def test_extract_epochs_out_of_bounds_names_marker():
    rec = _recording(markers=((100, VisualClass.EATING_FOOD), (19000, VisualClass.OPENING_DOOR)))
    with pytest.raises(EpochOutOfBounds) as info:
        extract_epochs(rec, (0.5, 4.0))
    assert "marker 1" in str(info.value)


def test_extract_epochs_ignores_other_marker_kinds():
    rec = _recording()
    assert extract_epochs(rec, (0.5, 4.0), MarkerKind.STIMULUS_ONSET).n_trials == 0


def test_extract_epochs_content_agnostic():
    marks = [(1000, VisualClass.EATING_FOOD), (6000, VisualClass.POURING_WATER), (12000, VisualClass.OPENING_DOOR)]
    a = extract_epochs(_recording(markers=marks), (0.0, 1.0))
    data = np.tile(np.arange(20000, dtype=float), (2, 1))
    shuffled = tuple(MarkerEvent(p, MarkerKind.CUE_ONSET, c) for p, c in [marks[2], marks[0], marks[1]])
    b = extract_epochs(ContinuousRecording(montage_from_labels(["Oz", "O1"]), FS, data, shuffled), (0.0, 1.0))
    assert a == b


def test_full_session_epoch_count(small_imagery_recording):
    es = extract_epochs(small_imagery_recording, (0.5, 4.0))
    assert es.n_trials == 48
    assert {c: es.labels.count(c) for c in set(es.labels)} == {c: 12 for c in VisualClass}


def _epochs(x):
    x = np.asarray(x, dtype=float)
    return EpochSet(x, (VisualClass.EATING_FOOD,) * x.shape[0], (0.0, x.shape[-1] / FS), FS)


def test_band_power_of_centre_sinusoid():
    t = np.arange(int(10 * FS)) / FS
    p = band_power(_epochs(np.sin(2 * np.pi * 10.198 * t)[None, None]), (8, 13))
    assert p[0, 0] == pytest.approx(0.5, rel=0.02)


def test_band_power_of_white_noise(rng):
    # expected: sigma^2 * ENBW / Nyquist, with ENBW of the squared response
    f = np.linspace(0, FS / 2, 200001)
    enbw = np.trapezoid(np.abs(ALPHA.response(f)) ** 4, f)
    p = band_power(_epochs(rng.standard_normal((100, 1, 4000))), (8, 13)).mean()
    assert p == pytest.approx(0.01, rel=0.2)
    # reflection padding adds a little edge energy; long epochs approach the ENBW value
    p_long = band_power(_epochs(rng.standard_normal((20, 1, 40000))), (8, 13)).mean()
    assert p_long == pytest.approx(enbw / (FS / 2), rel=0.05)


def test_band_power_of_zero_epoch():
    assert np.array_equal(band_power(_epochs(np.zeros((2, 3, 1000))), (8, 13)), np.zeros((2, 3)))
