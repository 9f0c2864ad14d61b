"""Synthetic visual-imagery / perception sessions with planted occipital alpha sources.

Each trial is a rest phase followed by a task phase. A single 10 Hz (± jitter)
alpha oscillator per trial is projected through the mean class pattern during
rest and through the trial's class pattern during the task, where its
amplitude follows the session envelope:

* imagery: linear ramp from 1x to ``gain``x over the task,
* perception: immediate drop to 1/``gain``.

Sensor noise is spatially mixed pink noise plus white noise. A short
class-agnostic auditory evoked response sits at the start of rest and task.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.fft

from .core import (
    CLASS_ORDER,
    ContinuousRecording,
    MarkerEvent,
    MarkerKind,
    Montage,
    SessionKind,
    VisualClass,
    default_montage,
)
from .dsp import apply_zero_phase, design_butterworth_bandpass


class SnrPreset(enum.Enum):
    NULL = "null"
    LOW = "low"
    HIGH = "high"


# alpha source amplitude (µV at unit pattern weight) and evoked-response amplitude
PRESETS: dict[SnrPreset, tuple[float, float]] = {
    SnrPreset.NULL: (0.0, 0.0),
    SnrPreset.LOW: (3.0, 3.0),
    SnrPreset.HIGH: (30.0, 3.0),
}

PATTERN_CENTERS: dict[VisualClass, str] = {
    VisualClass.EATING_FOOD: "PO7",
    VisualClass.OPENING_DOOR: "PO8",
    VisualClass.PICKING_UP_PHONE: "POz",
    VisualClass.POURING_WATER: "Oz",
}
PATTERN_WIDTH = 0.35
SHARED_OCCIPITAL_WEIGHT = 0.6


@dataclass(frozen=True)
class SynthConfig:
    session_kind: SessionKind = SessionKind.IMAGERY
    n_trials_per_class: int = 50
    fs_hz: float = 1000.0
    rest_s: float = 3.0
    cue_s: float = 0.5
    task_s: float = 5.0
    snr_preset: SnrPreset = SnrPreset.HIGH
    # explicit per-class alpha amplitudes override the preset
    source_amplitude_uv: tuple[float, float, float, float] | None = None
    gain: float = 2.0
    alpha_hz: float = 10.0
    alpha_jitter_hz: float = 1.0
    pink_uv: float = 10.0
    white_uv: float = 2.0
    erp_uv: float | None = None
    mixing_seed: int = 0
    seed: int = 0
    montage: Montage = field(default_factory=default_montage)

    def __post_init__(self):
        if self.n_trials_per_class < 1:
            raise ValueError("n_trials_per_class must be >= 1")
        if not self.gain > 1:
            raise ValueError("gain must be > 1")
        if min(self.rest_s, self.task_s) <= 0 or self.cue_s < 0:
            raise ValueError("trial phase durations must be positive")
        if self.source_amplitude_uv is not None and len(self.source_amplitude_uv) != 4:
            raise ValueError("source_amplitude_uv needs one value per class")

    @property
    def amplitudes(self) -> dict[VisualClass, float]:
        if self.source_amplitude_uv is not None:
            return dict(zip(CLASS_ORDER, map(float, self.source_amplitude_uv)))
        amp = PRESETS[self.snr_preset][0]
        return {c: amp for c in CLASS_ORDER}

    @property
    def evoked_uv(self) -> float:
        return PRESETS[self.snr_preset][1] if self.erp_uv is None else self.erp_uv

    @property
    def rest_samples(self) -> int:
        return int(round(self.rest_s * self.fs_hz))

    @property
    def task_samples(self) -> int:
        return int(round(self.task_s * self.fs_hz))

    @property
    def trial_samples(self) -> int:
        return self.rest_samples + self.task_samples


def preset_config(preset: str | SnrPreset, session: str | SessionKind = SessionKind.IMAGERY,
                  seed: int = 0, **overrides) -> SynthConfig:
    preset = SnrPreset(preset.lower()) if isinstance(preset, str) else preset
    if isinstance(session, str):
        session = {s.value.lower(): s for s in SessionKind}[session.lower()]
    return SynthConfig(session_kind=session, snr_preset=preset, seed=seed, **overrides)


def _blob(positions: np.ndarray, center: np.ndarray, width: float) -> np.ndarray:
    d2 = np.sum((positions - center) ** 2, axis=1)
    return np.exp(-d2 / (2 * width**2))


def class_patterns(montage: Montage | None = None) -> dict[VisualClass, np.ndarray]:
    """Unit-norm spatial pattern per class: a focal occipito-parietal blob
    plus a shared occipital component at Oz."""
    montage = montage or default_montage()
    pos = montage.positions
    oz = np.array(montage.channels[montage.index("Oz")].position)
    shared = _blob(pos, oz, PATTERN_WIDTH)
    out = {}
    for cls, label in PATTERN_CENTERS.items():
        center = np.array(montage.channels[montage.index(label)].position)
        p = _blob(pos, center, PATTERN_WIDTH) + SHARED_OCCIPITAL_WEIGHT * shared
        out[cls] = p / np.linalg.norm(p)
    return out


def rest_pattern(montage: Montage | None = None) -> np.ndarray:
    mean = np.mean(list(class_patterns(montage).values()), axis=0)
    return mean / np.linalg.norm(mean)


def evoked_pattern(montage: Montage | None = None) -> np.ndarray:
    montage = montage or default_montage()
    center = np.array(montage.channels[montage.index("FCz")].position)
    p = _blob(montage.positions, center, 0.45)
    return p / np.linalg.norm(p)


def mixing_matrix(n_channels: int, mixing_seed: int) -> np.ndarray:
    """Fixed random sensor mixing of independent pink sources; rows have unit norm."""
    m = np.random.default_rng(mixing_seed).normal(size=(n_channels, n_channels))
    return m / np.linalg.norm(m, axis=1, keepdims=True)


def _pink_weights(n: int, fs: float) -> np.ndarray:
    """rfft amplitude weights for 1/f power above 1 Hz, flat below, no DC."""
    f = np.fft.rfftfreq(n, 1.0 / fs)
    w = 1.0 / np.sqrt(np.maximum(f, 1.0))
    w[0] = 0.0
    return w


def _pink_scale(w: np.ndarray, n: int) -> float:
    # irfft of unit white spectra weighted by w has variance sum_full(w^2) / n
    full = np.sum(w**2) * 2 - w[0] ** 2 - (w[-1] ** 2 if n % 2 == 0 else 0.0)
    return float(np.sqrt(full / n))


def envelope(cfg: SynthConfig, n: int | None = None) -> np.ndarray:
    """Task-phase alpha amplitude envelope (relative to rest)."""
    n = cfg.task_samples if n is None else n
    if cfg.session_kind is SessionKind.IMAGERY:
        return 1.0 + (cfg.gain - 1.0) * np.arange(n) / cfg.task_samples
    return np.full(n, 1.0 / cfg.gain)


def _evoked_waveform(cfg: SynthConfig) -> np.ndarray:
    n = int(round(cfg.cue_s * cfg.fs_hz))
    t = np.arange(n) / cfg.fs_hz
    return np.sin(2 * np.pi * 6.0 * t) * np.exp(-t / 0.12)


class _TrialSimulator:
    def __init__(self, cfg: SynthConfig):
        self.cfg = cfg
        n_ch = cfg.montage.n_channels
        self.patterns = class_patterns(cfg.montage)
        self.rest = rest_pattern(cfg.montage)
        self.evoked_topo = evoked_pattern(cfg.montage)
        self.evoked = _evoked_waveform(cfg)
        self.mixing = mixing_matrix(n_ch, cfg.mixing_seed)
        self.weights = _pink_weights(cfg.trial_samples, cfg.fs_hz)
        self.weights_f32 = self.weights.astype(np.float32)
        self.pink_scale = _pink_scale(self.weights, cfg.trial_samples)
        # fold the pink scaling into the (float32) mixing matrix
        self.mixing_f32 = (cfg.pink_uv / self.pink_scale * self.mixing).astype(np.float32)
        self.white_gain = np.float32(cfg.white_uv)
        self.env = envelope(cfg)

    def noise(self, rng: np.random.Generator) -> np.ndarray:
        cfg, n = self.cfg, self.cfg.trial_samples
        n_ch = self.mixing.shape[0]
        spec = scipy.fft.rfft(rng.standard_normal((n_ch, n), dtype=np.float32), axis=1) * self.weights_f32
        pink = scipy.fft.irfft(spec, n=n, axis=1)
        x = self.mixing_f32 @ pink
        x += self.white_gain * rng.standard_normal((n_ch, n), dtype=np.float32)
        return x

    def trial(self, cls: VisualClass, rng: np.random.Generator) -> np.ndarray:
        cfg = self.cfg
        r, n = cfg.rest_samples, cfg.trial_samples
        freq = cfg.alpha_hz + rng.uniform(-cfg.alpha_jitter_hz, cfg.alpha_jitter_hz)
        phase = rng.uniform(0, 2 * np.pi)
        x = self.noise(rng)
        amp = cfg.amplitudes[cls]
        if amp:
            osc = amp * np.sin(2 * np.pi * freq * np.arange(n) / cfg.fs_hz + phase)
            x[:, :r] += np.outer(self.rest, osc[:r])
            x[:, r:] += np.outer(self.patterns[cls], osc[r:] * self.env)
        if cfg.evoked_uv and self.evoked.size:
            k = min(self.evoked.size, r, n - r)
            burst = cfg.evoked_uv * np.outer(self.evoked_topo, self.evoked[:k])
            x[:, :k] += burst
            x[:, r:r + k] += burst
        return x


def trial_order(cfg: SynthConfig) -> list[VisualClass]:
    labels = [c for c in CLASS_ORDER for _ in range(cfg.n_trials_per_class)]
    perm = np.random.default_rng([cfg.seed, 0xC1A55]).permutation(len(labels))
    return [labels[i] for i in perm]


def generate_session(cfg: SynthConfig | None = None) -> ContinuousRecording:
    """Concatenate seeded trials into a float32 recording with rest/onset markers."""
    cfg = cfg or SynthConfig()
    sim = _TrialSimulator(cfg)
    order = trial_order(cfg)
    n_trial = cfg.trial_samples
    data = np.empty((cfg.montage.n_channels, n_trial * len(order)), dtype=np.float32)
    onset_kind = MarkerKind.CUE_ONSET if cfg.session_kind is SessionKind.IMAGERY else MarkerKind.STIMULUS_ONSET
    children = np.random.SeedSequence([cfg.seed, 0x7E55]).spawn(len(order))
    markers = []
    for k, (cls, seq) in enumerate(zip(order, children)):
        start = k * n_trial
        data[:, start:start + n_trial] = sim.trial(cls, np.random.default_rng(seq))
        markers.append(MarkerEvent(start, MarkerKind.REST_ONSET))
        markers.append(MarkerEvent(start + cfg.rest_samples, onset_kind, cls))
    return ContinuousRecording(cfg.montage, cfg.fs_hz, data, tuple(markers), cfg.session_kind)


def _band_noise_covariance(sim: _TrialSimulator, cfg: SynthConfig, band_filter) -> np.ndarray:
    """In-band sensor noise covariance implied by the generative model."""
    n = cfg.trial_samples
    f = np.fft.rfftfreq(n, 1.0 / cfg.fs_hz)
    h4 = np.abs(band_filter.response(f)) ** 4  # forward-backward filtering
    w2 = sim.weights**2
    pink_frac = np.sum(w2 * h4) / np.sum(w2)
    white_frac = np.mean(h4[1:]) if f.size > 1 else 0.0
    n_ch = sim.mixing.shape[0]
    return (cfg.pink_uv**2 * pink_frac * sim.mixing @ sim.mixing.T
            + cfg.white_uv**2 * white_frac * np.eye(n_ch))


def bayes_reference_accuracy(
    cfg: SynthConfig,
    n_mc: int = 400,
    window_s: tuple[float, float] = (0.5, 4.0),
    band_hz: tuple[float, float] = (8.0, 13.0),
    order: int = 3,
    seed: int = 12345,
) -> float:
    """Monte Carlo accuracy of a classifier that knows the generative model.

    Each simulated trial is alpha-filtered and scored by the Gaussian
    log-likelihood of its spatial covariance under every class's true
    covariance (known noise covariance plus the class's rank-one alpha
    source at its known power), choosing the most likely class.
    """
    sim = _TrialSimulator(cfg)
    filt = design_butterworth_bandpass(order, band_hz[0], band_hz[1], cfg.fs_hz)
    noise_cov = _band_noise_covariance(sim, cfg, filt)
    r = cfg.rest_samples
    a, b = r + int(round(window_s[0] * cfg.fs_hz)), r + int(round(window_s[1] * cfg.fs_hz))
    env_power = np.mean(sim.env[a - r:b - r] ** 2)
    models = []
    for cls in CLASS_ORDER:
        p = sim.patterns[cls]
        sigma = noise_cov + cfg.amplitudes[cls] ** 2 / 2 * env_power * np.outer(p, p)
        _, logdet = np.linalg.slogdet(sigma)
        models.append((logdet, np.linalg.inv(sigma)))

    rng = np.random.default_rng(seed)
    correct = 0
    for i in range(n_mc):
        cls = CLASS_ORDER[i % len(CLASS_ORDER)]
        x = sim.trial(cls, rng)
        xf = apply_zero_phase(filt, x, axis=-1)[:, a:b]
        xf = xf - xf.mean(axis=1, keepdims=True)
        cov = xf @ xf.T / xf.shape[1]
        ll = [-(logdet + np.sum(inv * cov)) for logdet, inv in models]
        correct += CLASS_ORDER[int(np.argmax(ll))] is cls
    return correct / n_mc
