"""ERSP time-frequency maps, alpha-band topography and their CSV/SVG exports."""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.fft
from scipy.spatial import cKDTree

from .core import AnalysisConfig, EpochSet, Montage, VmiError, default_montage, montage_from_labels
from .dsp import alpha_filter, apply_zero_phase


class MissingBaseline(VmiError, ValueError):
    pass


class EpochTooShort(VmiError, ValueError):
    pass


class WindowOutOfEpoch(VmiError, ValueError):
    pass


class UnknownChannel(VmiError, KeyError):
    def __init__(self, label: str, valid: tuple[str, ...]):
        self.label = label
        self.valid = tuple(valid)
        super().__init__(f"unknown channel {label!r}; valid labels: {', '.join(self.valid)}")

    def __str__(self):
        return self.args[0]


class TopoMode(enum.Enum):
    RAW_POWER = "RawPower"
    DB_VS_BASELINE = "DbVsBaseline"


@dataclass(frozen=True, eq=False)
class ErspResult:
    values_db: np.ndarray  # (n_freqs, n_times)
    freqs_hz: np.ndarray
    times_s: np.ndarray  # frame centres relative to the locking event
    channel: str
    baseline_source: str = "rest-phase end"
    baseline_ms: float = 500.0

    def __post_init__(self):
        if self.values_db.shape != (self.freqs_hz.size, self.times_s.size):
            raise ValueError("values_db shape must be (n_freqs, n_times)")
        if not np.all(np.isfinite(self.values_db)):
            raise ValueError("ERSP values must be finite")


@dataclass(frozen=True, eq=False)
class TopographyFrame:
    window_ms: tuple[float, float]
    values: np.ndarray  # one per montage channel
    mode: TopoMode
    montage: Montage

    def __post_init__(self):
        if self.values.shape != (self.montage.n_channels,):
            raise ValueError("need exactly one value per montage channel")

    def cluster_mean(self) -> float:
        return float(self.values[self.montage.cluster_indices()].mean())


def _channel_index(es: EpochSet, channel: str) -> int:
    labels = es.channel_labels or tuple(default_montage().labels[: es.n_channels])
    lookup = {lab.lower(): i for i, lab in enumerate(labels)}
    if channel.lower() not in lookup:
        raise UnknownChannel(channel, labels)
    return lookup[channel.lower()]


def _window_samples(window_ms: float, fs: float) -> int:
    return int(round(window_ms / 1000.0 * fs))


def _psd_at(segments: np.ndarray, freqs_hz: np.ndarray, fs: float) -> np.ndarray:
    """One-sided Hann PSD of each demeaned segment (last axis) at the requested frequencies.

    The DFT is zero-padded to one second so integer frequencies fall on
    exact bins.
    """
    w_len = segments.shape[-1]
    win = np.hanning(w_len + 2)[1:-1]  # strictly positive taps
    nfft = max(w_len, int(round(fs)))
    x = segments - segments.mean(axis=-1, keepdims=True)
    spec = scipy.fft.rfft(x * win, n=nfft, axis=-1)
    bins = np.round(freqs_hz * nfft / fs).astype(int)
    return 2.0 * np.abs(spec[..., bins]) ** 2 / (fs * np.sum(win**2))


def ersp_freqs(cfg: AnalysisConfig) -> np.ndarray:
    lo, hi = cfg.ersp_freq_range_hz
    return np.arange(np.ceil(lo), np.floor(hi) + 1, 1.0)


def compute_ersp(
    es: EpochSet,
    channel: str,
    cfg: AnalysisConfig | None = None,
    rest: EpochSet | None = None,
) -> ErspResult:
    """Trial-averaged Hann STFT power in dB relative to the rest baseline.

    The baseline is the last ``cfg.ersp_baseline_ms`` before the locking
    event: taken from ``rest`` (its final samples) when given, otherwise from
    the part of ``es`` at negative times. Output frames span the whole epoch
    with a hop that yields exactly ``cfg.ersp_n_times`` frames.
    """
    cfg = cfg or AnalysisConfig()
    fs = es.sample_rate_hz
    ch = _channel_index(es, channel)
    w_len = _window_samples(cfg.ersp_window_ms, fs)
    b_len = _window_samples(cfg.ersp_baseline_ms, fs)
    if es.n_trials == 0:
        raise EpochTooShort("no trials to analyse")
    if es.n_samples < w_len:
        raise EpochTooShort(f"epoch of {es.n_samples} samples is shorter than the {w_len}-sample window")

    if rest is not None:
        if rest.n_trials != es.n_trials or rest.n_samples < b_len:
            raise MissingBaseline(f"rest segments must match the trials and hold >= {b_len} samples")
        base = rest.data[:, _channel_index(rest, channel), -b_len:]
    else:
        start = int(round((-cfg.ersp_baseline_ms / 1000.0 - es.window_s[0]) * fs))
        if start < 0 or start + b_len > es.n_samples or es.window_s[0] + (start + b_len) / fs > 1e-9:
            raise MissingBaseline(
                f"epoch window {es.window_s} does not contain the {cfg.ersp_baseline_ms:g} ms before the event"
            )
        base = es.data[:, ch, start:start + b_len]

    freqs = ersp_freqs(cfg)
    p_base = _psd_at(np.asarray(base, dtype=float), freqs, fs).mean(axis=0)
    if np.any(p_base <= 0):
        raise MissingBaseline("baseline has zero power at some analysis frequency")

    starts = np.round(np.linspace(0, es.n_samples - w_len, cfg.ersp_n_times)).astype(int)
    x = np.asarray(es.data[:, ch, :], dtype=float)
    frames = np.stack([x[:, s:s + w_len] for s in starts], axis=1)  # (trials, times, w)
    power = _psd_at(frames, freqs, fs).mean(axis=0).T  # (freqs, times)
    power = np.maximum(power, np.finfo(float).tiny)
    times = es.window_s[0] + (starts + (w_len - 1) / 2) / fs
    label = (es.channel_labels[ch] if es.channel_labels else channel)
    return ErspResult(10 * np.log10(power / p_base[:, None]), freqs, times, label,
                      baseline_ms=float(cfg.ersp_baseline_ms))


def alpha_topography(
    es: EpochSet,
    cfg: AnalysisConfig | None = None,
    mode: TopoMode | str = TopoMode.RAW_POWER,
    montage: Montage | None = None,
) -> list[TopographyFrame]:
    """Alpha power per channel in each configured window after the event.

    The whole epoch is band-passed first, so filter transients stay outside
    the windows when the epoch extends beyond them. DbVsBaseline divides by
    the alpha power of the last ``cfg.ersp_baseline_ms`` before the event.
    """
    cfg = cfg or AnalysisConfig()
    mode = TopoMode(mode) if isinstance(mode, str) else mode
    if montage is None:
        montage = montage_from_labels(es.channel_labels) if es.channel_labels else default_montage()
    fs = es.sample_rate_hz
    t0, t1 = es.window_s

    def span(lo_ms, hi_ms):
        a = int(round((lo_ms / 1000.0 - t0) * fs))
        b = a + _window_samples(hi_ms - lo_ms, fs)
        if a < 0 or b > es.n_samples:
            raise WindowOutOfEpoch(f"window ({lo_ms:g}, {hi_ms:g}) ms lies outside epoch {es.window_s} s")
        return a, b

    spans = [span(*w) for w in cfg.topo_windows_ms]
    base_span = span(-cfg.ersp_baseline_ms, 0.0) if mode is TopoMode.DB_VS_BASELINE else None
    filtered = apply_zero_phase(alpha_filter(cfg, fs), es.data, axis=-1)

    def power(a, b):
        return filtered[:, :, a:b].var(axis=-1, dtype=np.float64).mean(axis=0)

    base = power(*base_span) if base_span else None
    frames = []
    for (lo, hi), (a, b) in zip(cfg.topo_windows_ms, spans):
        v = power(a, b)
        if base is not None:
            v = 10 * np.log10(v / base)
        frames.append(TopographyFrame((float(lo), float(hi)), v, mode, montage))
    return frames


HEAD_MASK_RADIUS = 1.2


def scalp_grid(grid_n: int) -> np.ndarray:
    return np.linspace(-HEAD_MASK_RADIUS, HEAD_MASK_RADIUS, grid_n)


def interpolate_scalp(frame: TopographyFrame, grid_n: int = 64, k: int = 8, power: float = 2.0) -> np.ndarray:
    """Inverse-distance interpolation onto a square grid; NaN outside the head mask.

    Rows run from posterior (y = -1.2) to anterior, columns left to right.
    """
    if grid_n < 16:
        raise ValueError("grid_n must be >= 16")
    pos = frame.montage.positions
    axis = scalp_grid(grid_n)
    gx, gy = np.meshgrid(axis, axis)
    cells = np.column_stack([gx.ravel(), gy.ravel()])
    k = min(k, len(pos))
    dist, idx = cKDTree(pos).query(cells, k=k)
    dist, idx = dist.reshape(-1, k), idx.reshape(-1, k)
    vals = np.asarray(frame.values, dtype=float)[idx]
    with np.errstate(divide="ignore"):
        w = 1.0 / dist**power
    exact = dist[:, 0] == 0
    out = np.where(exact, vals[:, 0], np.sum(w * vals, axis=1) / np.where(exact, 1.0, w.sum(axis=1)))
    out[np.hypot(cells[:, 0], cells[:, 1]) > HEAD_MASK_RADIUS] = np.nan
    return out.reshape(grid_n, grid_n)


def _fmt(x: float) -> str:
    return "nan" if np.isnan(x) else f"{x:.6g}"


def ersp_to_csv(result: ErspResult) -> bytes:
    """Bare dB matrix: one row per frequency, one column per frame."""
    return grid_to_csv(result.values_db)


def ersp_axes_to_csv(result: ErspResult) -> bytes:
    """The two axes of the ERSP matrix as ``axis,index,value`` rows."""
    lines = ["axis,index,value"]
    lines += [f"freq_hz,{i},{f:g}" for i, f in enumerate(result.freqs_hz)]
    lines += [f"time_s,{i},{t:.6g}" for i, t in enumerate(result.times_s)]
    return ("\n".join(lines) + "\n").encode()


def topography_to_csv(frame: TopographyFrame) -> bytes:
    unit = "dB" if frame.mode is TopoMode.DB_VS_BASELINE else "uV2"
    lines = [f"channel,x,y,{unit}"]
    for ch, v in zip(frame.montage.channels, frame.values):
        lines.append(f"{ch.label},{ch.position[0]:.6g},{ch.position[1]:.6g},{_fmt(v)}")
    return ("\n".join(lines) + "\n").encode()


def grid_to_csv(grid: np.ndarray) -> bytes:
    return ("\n".join(",".join(_fmt(v) for v in row) for row in grid) + "\n").encode()


def color_ramp(n: int = 256) -> list[str]:
    """Blue -> white -> red in ``n`` steps, as hex strings."""
    out = []
    for i in range(n):
        t = i / (n - 1)
        if t < 0.5:
            s = t / 0.5
            rgb = (s, s, 1.0)
        else:
            s = (1.0 - t) / 0.5
            rgb = (1.0, s, s)
        out.append("#" + "".join(f"{int(round(c * 255)):02x}" for c in rgb))
    return out


_RAMP = color_ramp()


def svg_heatmap(matrix: np.ndarray, vmin: float = -6.0, vmax: float = 6.0, cell: int = 4, title: str = "") -> bytes:
    """Deterministic SVG of a matrix; row 0 is drawn at the bottom, NaN cells are skipped."""
    m = np.asarray(matrix, dtype=float)
    if not vmax > vmin:
        vmax = vmin + 1.0
    rows, cols = m.shape
    width, height = cols * cell, rows * cell
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" shape-rendering="crispEdges">'
    ]
    if title:
        parts.append(f"<title>{title}</title>")
    scaled = np.clip((m - vmin) / (vmax - vmin), 0.0, 1.0)
    for r in range(rows):
        y = (rows - 1 - r) * cell
        for c in range(cols):
            if np.isnan(m[r, c]):
                continue
            color = _RAMP[int(round(scaled[r, c] * (len(_RAMP) - 1)))]
            parts.append(f'<rect x="{c * cell}" y="{y}" width="{cell}" height="{cell}" fill="{color}"/>')
    parts.append("</svg>")
    return ("\n".join(parts) + "\n").encode()


def ersp_to_svg(result: ErspResult) -> bytes:
    return svg_heatmap(result.values_db, -6.0, 6.0, cell=3, title=f"ERSP {result.channel} (dB)")


def topography_to_svg(frame: TopographyFrame, grid_n: int = 64) -> bytes:
    grid = interpolate_scalp(frame, grid_n)
    lo, hi = frame.window_ms
    if frame.mode is TopoMode.DB_VS_BASELINE:
        vmin, vmax = -6.0, 6.0
    else:
        vmin, vmax = 0.0, float(np.nanmax(grid)) if np.any(np.isfinite(grid)) else 1.0
    return svg_heatmap(grid, vmin, vmax, cell=4, title=f"alpha {lo:g}-{hi:g} ms ({frame.mode.value})")
