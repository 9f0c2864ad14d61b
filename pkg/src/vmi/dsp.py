"""IIR design, zero-phase filtering, epoching and band power."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy import signal

from .core import (
    ContinuousRecording,
    EpochSet,
    MarkerKind,
    VmiError,
    expected_n_samples,
)


class InvalidBand(VmiError, ValueError):
    pass


class SignalTooShort(VmiError, ValueError):
    pass


class EpochOutOfBounds(VmiError, IndexError):
    pass


class FilterKind(enum.Enum):
    BUTTERWORTH_BANDPASS = "ButterworthBandpass"
    NOTCH = "Notch"


@dataclass(frozen=True, eq=False)
class IirFilter:
    """Cascade of biquads.

    ``sos`` rows are ``(b0, b1, b2, 1, a1, a2)``, the layout scipy uses.
    """

    sos: np.ndarray
    kind: FilterKind
    order: int
    band_hz: tuple[float, ...]
    fs_hz: float

    @property
    def n_sections(self) -> int:
        return self.sos.shape[0]

    @property
    def padlen(self) -> int:
        return 3 * (2 * self.n_sections + 1)

    def poles(self) -> np.ndarray:
        return np.concatenate([np.roots(row[3:]) for row in self.sos])

    def response(self, freqs_hz) -> np.ndarray:
        """Complex frequency response H(e^{jw}) at the given frequencies."""
        z = np.exp(1j * 2 * np.pi * np.asarray(freqs_hz, dtype=float) / self.fs_hz)
        zi = 1.0 / z
        h = np.ones_like(z)
        for b0, b1, b2, a0, a1, a2 in self.sos:
            h *= (b0 + b1 * zi + b2 * zi**2) / (a0 + a1 * zi + a2 * zi**2)
        return h


def _check_band(low_hz, high_hz, fs_hz):
    if not fs_hz > 0:
        raise InvalidBand(f"sampling rate must be positive, got {fs_hz}")
    if not 0 < low_hz < high_hz < fs_hz / 2:
        raise InvalidBand(f"need 0 < low < high < fs/2, got ({low_hz}, {high_hz}) at fs={fs_hz}")


def _pair_poles(poles: np.ndarray, tol: float = 1e-10) -> list[np.ndarray]:
    """Group digital poles into conjugate pairs (or pairs of reals)."""
    upper = sorted((p for p in poles if p.imag > tol), key=lambda p: (abs(p), np.angle(p)))
    reals = sorted(p.real for p in poles if abs(p.imag) <= tol)
    pairs = [np.array([1.0, -2.0 * p.real, abs(p) ** 2]) for p in upper]
    if len(reals) % 2:
        raise AssertionError("odd number of real poles in a bandpass design")
    for r1, r2 in zip(reals[::2], reals[1::2]):
        pairs.append(np.array([1.0, -(r1 + r2), r1 * r2]))
    return pairs


def design_butterworth_bandpass(order: int, low_hz: float, high_hz: float, fs_hz: float) -> IirFilter:
    """Digital Butterworth bandpass from an analog prototype of ``order`` poles.

    Low-pass prototype -> band-pass transform at pre-warped edges -> bilinear
    transform. The result has ``order`` second-order sections, unit gain at the
    band centre and -3 dB at both edges.
    """
    if order < 1:
        raise InvalidBand(f"order must be >= 1, got {order}")
    _check_band(low_hz, high_hz, fs_hz)
    k = 2.0 * fs_hz
    w_lo = k * np.tan(np.pi * low_hz / fs_hz)
    w_hi = k * np.tan(np.pi * high_hz / fs_hz)
    bw = w_hi - w_lo
    w0_sq = w_lo * w_hi

    m = np.arange(order)
    proto = np.exp(1j * np.pi * (2 * m + order + 1) / (2 * order))
    half = proto * bw / 2
    disc = np.sqrt(half**2 - w0_sq + 0j)
    analog = np.concatenate([half + disc, half - disc])
    digital = (k + analog) / (k - analog)

    denominators = _pair_poles(digital)
    sos = np.array([[1.0, 0.0, -1.0, *den] for den in denominators])

    f_center = fs_hz / np.pi * np.arctan(
        np.sqrt(np.tan(np.pi * low_hz / fs_hz) * np.tan(np.pi * high_hz / fs_hz))
    )
    filt = IirFilter(sos, FilterKind.BUTTERWORTH_BANDPASS, order, (low_hz, high_hz), fs_hz)
    gain = 1.0 / abs(filt.response([f_center])[0])
    sos[0, :3] *= gain
    return IirFilter(sos, FilterKind.BUTTERWORTH_BANDPASS, order, (float(low_hz), float(high_hz)), float(fs_hz))


def design_notch(f0_hz: float, q: float, fs_hz: float) -> IirFilter:
    """Second-order notch: zeros on the unit circle at f0, -3 dB width f0/q."""
    if not fs_hz > 0 or not 0 < f0_hz < fs_hz / 2:
        raise InvalidBand(f"need 0 < f0 < fs/2, got f0={f0_hz} at fs={fs_hz}")
    if not q > 0:
        raise InvalidBand(f"q must be positive, got {q}")
    w0 = 2 * np.pi * f0_hz / fs_hz
    beta = np.tan(w0 / q / 2)
    g = 1.0 / (1.0 + beta)
    c = np.cos(w0)
    sos = np.array([[g, -2 * g * c, g, 1.0, -2 * g * c, 2 * g - 1]])
    return IirFilter(sos, FilterKind.NOTCH, 2, (float(f0_hz),), float(fs_hz))


_CHUNK_ROWS = 256


def _odd_extend(x: np.ndarray, n: int) -> np.ndarray:
    left = 2 * x[..., :1] - x[..., n:0:-1]
    right = 2 * x[..., -1:] - x[..., -2:-n - 2:-1]
    return np.concatenate([left, x, right], axis=-1)


def apply_zero_phase(f: IirFilter, x, axis: int = -1) -> np.ndarray:
    """Forward-backward filtering along ``axis`` with odd-reflection padding.

    Net magnitude response is |H|^2 and the phase is zero. Arithmetic is in
    float64; float32 input gives float32 output.
    """
    x = np.asarray(x)
    out_dtype = np.float32 if x.dtype == np.float32 else np.float64
    x = np.moveaxis(x, axis, -1)
    n = f.padlen
    if x.shape[-1] <= n:
        raise SignalTooShort(f"signal of {x.shape[-1]} samples needs more than {n} for edge padding")
    shape = x.shape
    rows = x.reshape(-1, shape[-1])
    out = np.empty(rows.shape, dtype=out_dtype)
    zi = signal.sosfilt_zi(f.sos)[:, None, :]
    # scipy's sosfilt is much faster on C-contiguous 2-D blocks; chunking keeps
    # temporaries small for whole-session inputs
    for lo in range(0, rows.shape[0], _CHUNK_ROWS):
        ext = np.ascontiguousarray(_odd_extend(rows[lo:lo + _CHUNK_ROWS].astype(np.float64), n))
        y, _ = signal.sosfilt(f.sos, ext, axis=-1, zi=zi * ext[None, :, :1])
        y = np.ascontiguousarray(y[:, ::-1])
        y, _ = signal.sosfilt(f.sos, y, axis=-1, zi=zi * y[None, :, :1])
        out[lo:lo + _CHUNK_ROWS] = y[:, ::-1][:, n:-n]
    return np.moveaxis(out.reshape(shape), -1, axis)


def filter_epochs(es: EpochSet, f: IirFilter) -> EpochSet:
    return es.with_data(apply_zero_phase(f, es.data, axis=-1))


def extract_epochs(
    rec: ContinuousRecording,
    window_s: tuple[float, float],
    which: MarkerKind = MarkerKind.CUE_ONSET,
) -> EpochSet:
    """Slice ``[m + t_start*fs, m + t_end*fs)`` around every ``which`` marker."""
    t0, t1 = window_s
    if not t1 > t0:
        raise ValueError("window bounds must be increasing")
    fs = rec.sample_rate_hz
    offset = int(round(t0 * fs))
    n = expected_n_samples(window_s, fs)
    events = sorted(
        ((m.sample_index, i, m) for i, m in enumerate(rec.markers) if m.kind is which),
        key=lambda e: e[0],
    )
    data = np.empty((len(events), rec.data.shape[0], n), dtype=rec.data.dtype)
    labels = []
    for k, (pos, marker_index, marker) in enumerate(events):
        start = pos + offset
        if start < 0 or start + n > rec.n_samples:
            raise EpochOutOfBounds(
                f"marker {marker_index} at sample {pos}: window {window_s} needs samples "
                f"[{start}, {start + n}) but recording has {rec.n_samples}"
            )
        data[k] = rec.data[:, start:start + n]
        labels.append(marker.class_label)
    return EpochSet(data, tuple(labels), (float(t0), float(t1)), fs, tuple(rec.montage.labels))


def band_power(es: EpochSet, band_hz: tuple[float, float], order: int = 3) -> np.ndarray:
    """Variance of each band-passed epoch, shape (n_trials, n_channels), in µV²."""
    f = design_butterworth_bandpass(order, band_hz[0], band_hz[1], es.sample_rate_hz)
    if es.n_samples <= f.padlen:
        raise SignalTooShort(f"epochs of {es.n_samples} samples are too short to filter")
    if es.n_trials == 0:
        return np.zeros((0, es.n_channels))
    return apply_zero_phase(f, es.data, axis=-1).var(axis=-1, dtype=np.float64)


def alpha_filter(cfg, fs_hz: float) -> IirFilter:
    return design_butterworth_bandpass(cfg.filter_order, *cfg.alpha_band_hz, fs_hz)
