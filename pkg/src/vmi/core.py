"""Shared data model: montage, markers, recordings, epochs and analysis settings."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


class VmiError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(VmiError, ValueError):
    pass


class VisualClass(enum.Enum):
    # Definition order is the tie-breaking order used everywhere.
    EATING_FOOD = "EatingFood"
    OPENING_DOOR = "OpeningDoor"
    PICKING_UP_PHONE = "PickingUpPhone"
    POURING_WATER = "PouringWater"

    @property
    def display_name(self) -> str:
        return _DISPLAY_NAMES[self]


_DISPLAY_NAMES = {
    VisualClass.EATING_FOOD: "Eating food",
    VisualClass.OPENING_DOOR: "Opening door",
    VisualClass.PICKING_UP_PHONE: "Picking up a phone",
    VisualClass.POURING_WATER: "Pouring water",
}

CLASS_ORDER: tuple[VisualClass, ...] = tuple(VisualClass)


class MarkerKind(enum.Enum):
    REST_ONSET = "RestOnset"
    CUE_ONSET = "CueOnset"
    STIMULUS_ONSET = "StimulusOnset"


class SessionKind(enum.Enum):
    PERCEPTION = "Perception"
    IMAGERY = "Imagery"


# (label, polar angle from Cz in degrees, azimuth in degrees counter-clockwise
# from the right pre-auricular point). Generated by scripts/make_montage_table.py.
_TEN_TEN_ANGLES: tuple[tuple[str, float, float], ...] = (
    ("Fp1", 90.00, 108.00), ("Fpz", 90.00, 90.00), ("Fp2", 90.00, 72.00),
    ("AF7", 90.00, 126.00), ("AF5", 81.04, 119.97), ("AF3", 73.86, 111.71),
    ("AF4", 73.86, 68.29), ("AF6", 81.04, 60.03), ("AF8", 90.00, 54.00),
    ("F7", 90.00, 144.00), ("F5", 73.94, 138.68), ("F3", 59.68, 128.77),
    ("F1", 49.09, 112.49), ("Fz", 45.00, 90.00), ("F2", 49.09, 67.51),
    ("F4", 59.68, 51.23), ("F6", 73.94, 41.32), ("F8", 90.00, 36.00),
    ("FT7", 90.00, 162.00), ("FC5", 69.19, 158.84), ("FC3", 49.10, 151.45),
    ("FC1", 31.35, 133.54), ("FCz", 22.50, 90.00), ("FC2", 31.35, 46.46),
    ("FC4", 49.10, 28.55), ("FC6", 69.19, 21.16), ("FT8", 90.00, 18.00),
    ("T7", 90.00, 180.00), ("C5", 67.50, 180.00), ("C3", 45.00, 180.00),
    ("C1", 22.50, 180.00), ("Cz", 0.00, 90.00), ("C2", 22.50, 0.00),
    ("C4", 45.00, 0.00), ("C6", 67.50, 0.00), ("T8", 90.00, 0.00),
    ("TP7", 90.00, 198.00), ("CP5", 69.19, 201.16), ("CP3", 49.10, 208.55),
    ("CP1", 31.35, 226.46), ("CPz", 22.50, 270.00), ("CP2", 31.35, 313.54),
    ("CP4", 49.10, 331.45), ("CP6", 69.19, 338.84), ("TP8", 90.00, 342.00),
    ("P7", 90.00, 216.00), ("P5", 73.94, 221.32), ("P3", 59.68, 231.23),
    ("P1", 49.09, 247.51), ("Pz", 45.00, 270.00), ("P2", 49.09, 292.49),
    ("P4", 59.68, 308.77), ("P6", 73.94, 318.68), ("P8", 90.00, 324.00),
    ("PO7", 90.00, 234.00), ("PO5", 81.04, 240.03), ("PO3", 73.86, 248.29),
    ("POz", 67.50, 270.00), ("PO4", 73.86, 291.71), ("PO6", 81.04, 299.97),
    ("PO8", 90.00, 306.00), ("O1", 90.00, 252.00), ("Oz", 90.00, 270.00),
    ("O2", 90.00, 288.00),
)

DEFAULT_OCCIPITAL_CLUSTER = frozenset({"O1", "Oz", "O2", "PO3", "POz", "PO4", "PO7", "PO8"})


def project_azimuthal_equidistant(theta_deg: float, phi_deg: float) -> tuple[float, float]:
    """Map spherical electrode angles to the flat head disk (equator at radius 1)."""
    r = theta_deg / 90.0
    phi = math.radians(phi_deg)
    x, y = r * math.cos(phi), r * math.sin(phi)
    # snap float noise so that midline electrodes sit exactly on x == 0
    return (round(x, 12) + 0.0, round(y, 12) + 0.0)


@dataclass(frozen=True)
class ChannelInfo:
    label: str
    position: tuple[float, float]
    unit: str = "µV"


@dataclass(frozen=True)
class Montage:
    channels: tuple[ChannelInfo, ...]
    occipital_cluster: frozenset[str] = DEFAULT_OCCIPITAL_CLUSTER

    def __post_init__(self):
        labels = [c.label for c in self.channels]
        if len(set(labels)) != len(labels):
            raise ValueError("channel labels must be unique")
        missing = set(self.occipital_cluster) - set(labels)
        if missing:
            raise ValueError(f"occipital cluster labels not in montage: {sorted(missing)}")

    @property
    def labels(self) -> list[str]:
        return [c.label for c in self.channels]

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    @property
    def positions(self) -> np.ndarray:
        return np.array([c.position for c in self.channels], dtype=float)

    def index(self, label: str) -> int:
        for i, c in enumerate(self.channels):
            if c.label == label:
                return i
        raise KeyError(label)

    def cluster_indices(self) -> list[int]:
        return [i for i, c in enumerate(self.channels) if c.label in self.occipital_cluster]


def default_montage() -> Montage:
    """Standard 64-channel 10-10 layout with the default occipital cluster."""
    channels = tuple(
        ChannelInfo(label, project_azimuthal_equidistant(theta, phi))
        for label, theta, phi in _TEN_TEN_ANGLES
    )
    return Montage(channels)


def montage_from_labels(labels: Sequence[str]) -> Montage:
    """Montage for an arbitrary label list; unknown labels get the origin as position."""
    known = {lab.lower(): (th, ph) for lab, th, ph in _TEN_TEN_ANGLES}
    channels = []
    for label in labels:
        angles = known.get(label.lower())
        pos = project_azimuthal_equidistant(*angles) if angles else (0.0, 0.0)
        channels.append(ChannelInfo(label, pos))
    cluster = frozenset(lab for lab in labels if lab in DEFAULT_OCCIPITAL_CLUSTER)
    return Montage(tuple(channels), cluster)


@dataclass(frozen=True)
class MarkerEvent:
    sample_index: int
    kind: MarkerKind
    class_label: VisualClass | None = None

    def __post_init__(self):
        needs_label = self.kind in (MarkerKind.CUE_ONSET, MarkerKind.STIMULUS_ONSET)
        if needs_label != (self.class_label is not None):
            raise ValueError(f"{self.kind.value} marker: class_label presence is wrong")


def _frozen_array(a, dtype=None) -> np.ndarray:
    # read-only view; avoids duplicating large sessions
    arr = np.asarray(a, dtype=dtype).view()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ContinuousRecording:
    """Multichannel recording in microvolts, channels along rows.

    Construction does not enforce the invariants so that malformed data can be
    inspected; use :func:`validate_recording`.
    """

    montage: Montage
    sample_rate_hz: float
    data: np.ndarray
    markers: tuple[MarkerEvent, ...]
    session_kind: SessionKind = SessionKind.IMAGERY

    def __post_init__(self):
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")
        data = self.data
        if not (isinstance(data, np.ndarray) and data.dtype.kind == "f"):
            data = np.asarray(data, dtype=float)
        object.__setattr__(self, "data", _frozen_array(data))
        object.__setattr__(self, "markers", tuple(self.markers))

    @property
    def n_samples(self) -> int:
        return self.data.shape[1] if self.data.ndim == 2 else 0

    def __eq__(self, other):
        if not isinstance(other, ContinuousRecording):
            return NotImplemented
        return (
            self.montage == other.montage
            and self.sample_rate_hz == other.sample_rate_hz
            and self.markers == other.markers
            and self.session_kind == other.session_kind
            and self.data.shape == other.data.shape
            and np.array_equal(self.data, other.data)
        )


def validate_recording(rec: ContinuousRecording) -> list[str]:
    """Return one message per violated recording invariant (empty when valid)."""
    violations = []
    if rec.data.ndim != 2:
        violations.append(f"data must be 2-D, got {rec.data.ndim}-D")
        return violations
    n_rows, n_samples = rec.data.shape
    if n_rows != rec.montage.n_channels:
        violations.append(
            f"channel-count mismatch: data has {n_rows} rows, montage has {rec.montage.n_channels} channels"
        )
    previous = -1
    for i, m in enumerate(rec.markers):
        if not 0 <= m.sample_index < n_samples:
            violations.append(
                f"marker {i} ({m.kind.value}) at sample {m.sample_index} outside [0, {n_samples})"
            )
        if m.sample_index <= previous:
            violations.append(f"marker {i} at sample {m.sample_index} not strictly after previous marker")
        previous = m.sample_index
    return violations


@dataclass(frozen=True, eq=False)
class EpochSet:
    """Trials x channels x samples, time relative to the locking event."""

    data: np.ndarray
    labels: tuple[VisualClass, ...]
    window_s: tuple[float, float]
    sample_rate_hz: float
    channel_labels: tuple[str, ...] = ()

    def __post_init__(self):
        data = self.data
        if not (isinstance(data, np.ndarray) and data.dtype.kind == "f"):
            data = np.asarray(data, dtype=float)
        if data.ndim != 3:
            raise ValueError(f"epoch data must be 3-D (trials, channels, samples), got {data.ndim}-D")
        t0, t1 = (float(v) for v in self.window_s)
        if not t1 > t0:
            raise ValueError("window_s must be increasing")
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")
        expected = expected_n_samples(self.window_s, self.sample_rate_hz)
        if data.shape[2] != expected:
            raise ValueError(
                f"{data.shape[2]} samples per epoch contradicts window {self.window_s} at "
                f"{self.sample_rate_hz} Hz (expected {expected})"
            )
        labels = tuple(self.labels)
        if len(labels) != data.shape[0]:
            raise ValueError(f"{len(labels)} labels for {data.shape[0]} trials")
        if self.channel_labels and len(self.channel_labels) != data.shape[1]:
            raise ValueError("channel_labels length must match channel axis")
        object.__setattr__(self, "data", _frozen_array(data))
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "window_s", (t0, t1))
        object.__setattr__(self, "channel_labels", tuple(self.channel_labels))

    @property
    def n_trials(self) -> int:
        return self.data.shape[0]

    @property
    def n_channels(self) -> int:
        return self.data.shape[1]

    @property
    def n_samples(self) -> int:
        return self.data.shape[2]

    @property
    def times(self) -> np.ndarray:
        return self.window_s[0] + np.arange(self.n_samples) / self.sample_rate_hz

    def subset(self, idx) -> "EpochSet":
        idx = np.asarray(idx, dtype=int)
        return EpochSet(
            self.data[idx], tuple(self.labels[i] for i in idx), self.window_s,
            self.sample_rate_hz, self.channel_labels,
        )

    def with_data(self, data: np.ndarray) -> "EpochSet":
        return EpochSet(data, self.labels, self.window_s, self.sample_rate_hz, self.channel_labels)

    def crop(self, window_s: tuple[float, float]) -> "EpochSet":
        """Sub-window in the same time frame; bounds must lie inside this epoch."""
        start = int(round((window_s[0] - self.window_s[0]) * self.sample_rate_hz))
        n = expected_n_samples(window_s, self.sample_rate_hz)
        if start < 0 or start + n > self.n_samples:
            raise ValueError(f"window {window_s} outside epoch {self.window_s}")
        return EpochSet(
            self.data[:, :, start:start + n], self.labels, window_s,
            self.sample_rate_hz, self.channel_labels,
        )

    def __eq__(self, other):
        if not isinstance(other, EpochSet):
            return NotImplemented
        return (
            self.labels == other.labels
            and self.window_s == other.window_s
            and self.sample_rate_hz == other.sample_rate_hz
            and self.channel_labels == other.channel_labels
            and np.array_equal(self.data, other.data)
        )


def expected_n_samples(window_s: tuple[float, float], sample_rate_hz: float) -> int:
    return int(round((window_s[1] - window_s[0]) * sample_rate_hz))


@dataclass(frozen=True)
class CvConfig:
    folds: int = 10
    repeats: int = 5
    stratified: bool = True
    seed: int = 0


@dataclass(frozen=True)
class AnalysisConfig:
    alpha_band_hz: tuple[float, float] = (8.0, 13.0)
    filter_order: int = 3
    epoch_window_s: tuple[float, float] = (0.5, 4.0)
    ersp_freq_range_hz: tuple[float, float] = (3.0, 50.0)
    ersp_n_times: int = 200
    ersp_baseline_ms: float = 500.0
    ersp_window_ms: float = 500.0
    topo_windows_ms: tuple[tuple[float, float], ...] = (
        (0.0, 1000.0), (1000.0, 2000.0), (2000.0, 3000.0), (3000.0, 4000.0),
    )
    n_csp_pairs: int = 3
    # "analytic" (Ledoit-Wolf) or a fixed gamma in [0, 1]
    shrinkage: str | float = "analytic"
    standardize_scores: bool = False
    cv: CvConfig = field(default_factory=CvConfig)

    def __post_init__(self):
        for name in ("alpha_band_hz", "epoch_window_s", "ersp_freq_range_hz"):
            lo, hi = getattr(self, name)
            if not hi > lo:
                raise ValueError(f"{name} bounds must be strictly increasing")
        previous_end = None
        for lo, hi in self.topo_windows_ms:
            if not hi > lo or (previous_end is not None and lo < previous_end):
                raise ValueError("topo_windows_ms must be increasing and non-overlapping")
            previous_end = hi
        if self.filter_order < 1:
            raise ValueError("filter_order must be >= 1")
        if self.n_csp_pairs < 1:
            raise ValueError("n_csp_pairs must be >= 1")
        if isinstance(self.shrinkage, str):
            if self.shrinkage != "analytic":
                raise ValueError("shrinkage must be 'analytic' or a number in [0, 1]")
        elif not 0.0 <= float(self.shrinkage) <= 1.0:
            raise ValueError("fixed shrinkage gamma must lie in [0, 1]")
        if self.cv.folds < 2:
            raise ValueError("cv.folds must be >= 2")
        if self.cv.repeats < 1:
            raise ValueError("cv.repeats must be >= 1")
