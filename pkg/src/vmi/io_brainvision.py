"""BrainVision (.vhdr/.vmrk/.eeg) reader and writer, plus epoch exporters."""
from __future__ import annotations

import enum
import io
import json
import math
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .core import (
    ContinuousRecording,
    EpochSet,
    MarkerEvent,
    MarkerKind,
    Montage,
    SessionKind,
    VisualClass,
    VmiError,
    montage_from_labels,
)


class BrainVisionError(VmiError, ValueError):
    pass


class MissingSection(BrainVisionError):
    pass


class MissingKey(BrainVisionError):
    pass


class ChannelCountMismatch(BrainVisionError):
    pass


class UnsupportedFormat(BrainVisionError):
    pass


class MalformedLine(BrainVisionError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class LengthMismatch(BrainVisionError):
    pass


class UnknownMarkerDescription(BrainVisionError):
    pass


class DynamicRangeOverflow(BrainVisionError):
    pass


class BinaryFormat(enum.Enum):
    INT_16 = "INT_16"
    IEEE_FLOAT_32 = "IEEE_FLOAT_32"

    @property
    def dtype(self) -> np.dtype:
        return np.dtype("<i2") if self is BinaryFormat.INT_16 else np.dtype("<f4")


class Orientation(enum.Enum):
    MULTIPLEXED = "MULTIPLEXED"
    VECTORIZED = "VECTORIZED"


@dataclass(frozen=True)
class ChannelEntry:
    label: str
    reference: str
    resolution_uv: float
    unit: str


@dataclass(frozen=True)
class HeaderSpec:
    n_channels: int
    sampling_interval_us: float
    binary_format: BinaryFormat
    orientation: Orientation
    channel_entries: tuple[ChannelEntry, ...]
    data_file: str | None = None
    marker_file: str | None = None
    session_kind: SessionKind | None = None

    @property
    def sample_rate_hz(self) -> float:
        return 1e6 / self.sampling_interval_us


@dataclass(frozen=True)
class RawMarker:
    index: int
    type_str: str
    description: str
    position_sample: int  # 1-based, as in the file
    length_samples: int
    channel: int


DEFAULT_CLASS_MAP: dict[str, VisualClass] = {
    "S  1": VisualClass.EATING_FOOD,
    "S  2": VisualClass.OPENING_DOOR,
    "S  3": VisualClass.PICKING_UP_PHONE,
    "S  4": VisualClass.POURING_WATER,
}
DEFAULT_REST_CODE = "S  9"

HEADER_MAGIC = "Brain Vision Data Exchange Header File Version 1.0"
MARKER_MAGIC = "Brain Vision Data Exchange Marker File, Version 1.0"
MAX_RESOLUTION_UV = 1000.0
_RESOLUTION_LADDER = tuple(
    m * 10.0**e for e in range(-3, 4) for m in (1.0, 2.0, 5.0) if m * 10.0**e <= MAX_RESOLUTION_UV
)


_UTF8_DECLARED = re.compile(rb"^\s*codepage\s*=\s*utf-?8\s*$", re.IGNORECASE | re.MULTILINE)


def _as_text(text: str | bytes) -> str:
    """Decode file bytes: UTF-8 when the file declares it and decodes cleanly, else Latin-1."""
    if isinstance(text, (bytes, bytearray)):
        raw = bytes(text)
        if _UTF8_DECLARED.search(raw):
            try:
                return raw.decode("utf-8")
            except UnicodeDecodeError:
                pass
        return raw.decode("latin-1")
    return text


def _sections(text: str) -> dict[str, list[tuple[int, str, str]]]:
    """Split INI-like text into {section: [(line_no, key, value)]}."""
    sections: dict[str, list[tuple[int, str, str]]] = {}
    current = None
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(";"):
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            sections.setdefault(current, [])
            continue
        if current is None or current == "Comment" or "=" not in line:
            continue
        key, value = line.split("=", 1)
        sections[current].append((line_no, key.strip(), value))
    return sections


def _lookup(section: list[tuple[int, str, str]], name: str, key: str) -> tuple[int, str]:
    for line_no, k, v in section:
        if k.lower() == key.lower():
            return line_no, v.strip()
    raise MissingKey(f"[{name}] {key} is required")


def _require(sections, name):
    if name not in sections:
        raise MissingSection(f"[{name}] section is required")
    return sections[name]


def _unescape(s: str) -> str:
    return s.replace(r"\1", ",")


def _escape(s: str) -> str:
    return s.replace(",", r"\1")


def parse_header(text: str | bytes) -> HeaderSpec:
    """Parse the contents of a ``.vhdr`` file."""
    sections = _sections(_as_text(text))
    common = _require(sections, "Common Infos")

    line_no, value = _lookup(common, "Common Infos", "NumberOfChannels")
    try:
        n_channels = int(value)
    except ValueError:
        raise MalformedLine(line_no, f"NumberOfChannels is not an integer: {value!r}") from None
    if n_channels < 1:
        raise MalformedLine(line_no, f"NumberOfChannels must be positive, got {n_channels}")

    line_no, value = _lookup(common, "Common Infos", "SamplingInterval")
    try:
        interval = float(value)
    except ValueError:
        raise MalformedLine(line_no, f"SamplingInterval is not a number: {value!r}") from None
    if not (math.isfinite(interval) and interval > 0):
        raise MalformedLine(line_no, f"SamplingInterval must be positive, got {value!r}")

    _, data_format = _lookup(common, "Common Infos", "DataFormat")
    if data_format.upper() != "BINARY":
        raise UnsupportedFormat(f"DataFormat={data_format} is not supported (only BINARY)")

    _, orientation = _lookup(common, "Common Infos", "DataOrientation")
    try:
        orientation_enum = Orientation(orientation.upper())
    except ValueError:
        raise UnsupportedFormat(f"DataOrientation={orientation} is not supported") from None

    binary = _require(sections, "Binary Infos")
    _, fmt = _lookup(binary, "Binary Infos", "BinaryFormat")
    try:
        binary_format = BinaryFormat(fmt.upper())
    except ValueError:
        raise UnsupportedFormat(f"BinaryFormat={fmt} is not supported") from None

    ch_section = _require(sections, "Channel Infos")
    numbered: dict[int, tuple[int, str]] = {}
    for line_no, key, value in ch_section:
        m = re.fullmatch(r"Ch(\d+)", key, flags=re.IGNORECASE)
        if m:
            numbered[int(m.group(1))] = (line_no, value)
    if len(numbered) != n_channels or sorted(numbered) != list(range(1, n_channels + 1)):
        raise ChannelCountMismatch(
            f"NumberOfChannels={n_channels} but [Channel Infos] lists {len(numbered)} Ch entries"
        )
    entries = []
    for number in range(1, n_channels + 1):
        line_no, value = numbered[number]
        parts = value.split(",")
        label = _unescape(parts[0].strip())
        reference = _unescape(parts[1].strip()) if len(parts) > 1 else ""
        res_text = parts[2].strip() if len(parts) > 2 else ""
        unit = parts[3].strip() if len(parts) > 3 and parts[3].strip() else "µV"
        try:
            resolution = float(res_text) if res_text else 1.0
        except ValueError:
            raise MalformedLine(line_no, f"channel resolution is not a number: {res_text!r}") from None
        if not math.isfinite(resolution) or (binary_format is BinaryFormat.INT_16 and resolution <= 0):
            raise MalformedLine(line_no, f"invalid channel resolution {res_text!r}")
        if not label:
            raise MalformedLine(line_no, "empty channel name")
        entries.append(ChannelEntry(label, reference, resolution, unit))

    def optional(section, key):
        for _, k, v in sections.get(section, []):
            if k.lower() == key.lower():
                return v.strip()
        return None

    session = optional("Session Infos", "Kind")
    session_kind = None
    if session is not None:
        try:
            session_kind = SessionKind(session)
        except ValueError:
            session_kind = None

    return HeaderSpec(
        n_channels=n_channels,
        sampling_interval_us=interval,
        binary_format=binary_format,
        orientation=orientation_enum,
        channel_entries=tuple(entries),
        data_file=optional("Common Infos", "DataFile"),
        marker_file=optional("Common Infos", "MarkerFile"),
        session_kind=session_kind,
    )


def parse_markers(text: str | bytes) -> list[RawMarker]:
    """One :class:`RawMarker` per ``MkN=`` line of a ``.vmrk`` file, in file order."""
    text = _as_text(text)
    markers: list[RawMarker] = []
    in_markers = False
    seen_section = False
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith(";"):
            continue
        if line.startswith("[") and line.endswith("]"):
            in_markers = line[1:-1].strip() == "Marker Infos"
            seen_section = seen_section or in_markers
            continue
        if not in_markers:
            continue
        key, sep, value = line.partition("=")
        m = re.fullmatch(r"Mk(\d+)", key.strip(), flags=re.IGNORECASE)
        if not sep or not m:
            raise MalformedLine(line_no, f"expected 'Mk<n>=...', got {line[:40]!r}")
        fields = value.split(",")
        if len(fields) < 5:
            raise MalformedLine(line_no, f"marker needs at least 5 fields, got {len(fields)}")
        try:
            position = int(fields[2].strip())
            length = int(fields[3].strip())
            channel = int(fields[4].strip())
        except ValueError:
            raise MalformedLine(line_no, "marker position/length/channel must be integers") from None
        index = int(m.group(1))
        if position < 1:
            raise MalformedLine(line_no, f"marker position must be >= 1, got {position}")
        if markers and index <= markers[-1].index:
            raise MalformedLine(line_no, f"marker number Mk{index} is not increasing")
        markers.append(
            RawMarker(index, _unescape(fields[0]), _unescape(fields[1]), position, length, channel)
        )
    if not seen_section:
        raise MissingSection("[Marker Infos] section is required")
    return markers


def read_recording(
    header: HeaderSpec,
    markers: list[RawMarker],
    binary: bytes,
    montage: Montage | None = None,
    class_map: Mapping[str, VisualClass] | None = None,
    *,
    rest_code: str = DEFAULT_REST_CODE,
    session_kind: SessionKind | None = None,
) -> ContinuousRecording:
    """Assemble a recording from parsed header, markers and raw ``.eeg`` bytes.

    Int16 samples are scaled by each channel's resolution; Float32 samples are
    taken verbatim. Stimulus markers whose description is in ``class_map``
    become CueOnset (imagery) or StimulusOnset (perception) events; ``rest_code``
    marks rest onsets; other marker types are ignored.
    """
    class_map = DEFAULT_CLASS_MAP if class_map is None else class_map
    dtype = header.binary_format.dtype
    frame = header.n_channels * dtype.itemsize
    if len(binary) % frame:
        raise LengthMismatch(
            f"{len(binary)} bytes is not a multiple of {header.n_channels} channels x {dtype.itemsize} bytes"
        )
    flat = np.frombuffer(binary, dtype=dtype)
    n_samples = flat.size // header.n_channels
    if header.orientation is Orientation.MULTIPLEXED:
        data = flat.reshape(n_samples, header.n_channels).T
    else:
        data = flat.reshape(header.n_channels, n_samples)
    if header.binary_format is BinaryFormat.INT_16:
        res = np.array([e.resolution_uv for e in header.channel_entries])
        data = data.astype(float) * res[:, None]
    else:
        data = data.astype(np.float32)

    labels = [e.label for e in header.channel_entries]
    if montage is None:
        montage = montage_from_labels(labels)
    elif montage.n_channels != header.n_channels:
        raise ChannelCountMismatch(
            f"montage has {montage.n_channels} channels, header declares {header.n_channels}"
        )

    session_kind = session_kind or header.session_kind or SessionKind.IMAGERY
    class_kind = MarkerKind.CUE_ONSET if session_kind is SessionKind.IMAGERY else MarkerKind.STIMULUS_ONSET
    events = []
    for raw in markers:
        if raw.type_str != "Stimulus":
            continue
        if raw.description == rest_code:
            events.append(MarkerEvent(raw.position_sample - 1, MarkerKind.REST_ONSET))
        elif raw.description in class_map:
            events.append(MarkerEvent(raw.position_sample - 1, class_kind, class_map[raw.description]))
        else:
            raise UnknownMarkerDescription(
                f"Mk{raw.index}: stimulus description {raw.description!r} is not in the class map"
            )
    return ContinuousRecording(montage, header.sample_rate_hz, data, tuple(events), session_kind)


def _choose_resolution(data: np.ndarray) -> float:
    peak = float(np.max(np.abs(data))) if data.size else 0.0
    if not math.isfinite(peak):
        raise DynamicRangeOverflow("recording contains non-finite samples")
    for res in _RESOLUTION_LADDER:
        if peak / res <= 32767:
            return res
    raise DynamicRangeOverflow(
        f"peak |x| = {peak:g} µV exceeds the Int16 range even at {MAX_RESOLUTION_UV} µV/bit"
    )


def write_recording(
    rec: ContinuousRecording,
    fmt: BinaryFormat = BinaryFormat.IEEE_FLOAT_32,
    *,
    resolution_uv: float | None = None,
    basename: str = "recording",
    class_map: Mapping[str, VisualClass] | None = None,
    rest_code: str = DEFAULT_REST_CODE,
) -> tuple[str, str, bytes]:
    """Serialize to ``(vhdr text, vmrk text, eeg bytes)``, multiplexed layout."""
    class_map = DEFAULT_CLASS_MAP if class_map is None else class_map
    code_for = {cls: code for code, cls in class_map.items()}
    data = rec.data
    if fmt is BinaryFormat.INT_16:
        res = _choose_resolution(data) if resolution_uv is None else float(resolution_uv)
        if not np.all(np.isfinite(data)):
            raise DynamicRangeOverflow("recording contains non-finite samples")
        q = np.round(np.asarray(data, dtype=float) / res)
        if q.size and (q.min() < -32768 or q.max() > 32767):
            raise DynamicRangeOverflow(f"samples exceed the Int16 range at {res:g} µV/bit")
        payload = q.astype("<i2").T.tobytes()
    else:
        res = 1.0
        payload = np.asarray(data, dtype="<f4").T.tobytes()

    interval_us = 1e6 / rec.sample_rate_hz
    lines = [
        HEADER_MAGIC,
        "",
        "[Common Infos]",
        "Codepage=UTF-8",
        f"DataFile={basename}.eeg",
        f"MarkerFile={basename}.vmrk",
        "DataFormat=BINARY",
        "DataOrientation=MULTIPLEXED",
        f"NumberOfChannels={rec.montage.n_channels}",
        f"SamplingInterval={interval_us:.17g}",
        "",
        "[Binary Infos]",
        f"BinaryFormat={fmt.value}",
        "",
        "[Session Infos]",
        f"Kind={rec.session_kind.value}",
        "",
        "[Channel Infos]",
        "; Ch<n>=<name>,<reference>,<resolution in µV>,<unit>",
    ]
    for i, ch in enumerate(rec.montage.channels, start=1):
        lines.append(f"Ch{i}={_escape(ch.label)},,{res:.17g},{ch.unit}")
    header_text = "\n".join(lines) + "\n"

    mk = [
        MARKER_MAGIC,
        "",
        "[Common Infos]",
        "Codepage=UTF-8",
        f"DataFile={basename}.eeg",
        "",
        "[Marker Infos]",
        "; Mk<n>=<type>,<description>,<position (1-based)>,<size>,<channel>",
        "Mk1=New Segment,,1,1,0",
    ]
    for n, m in enumerate(rec.markers, start=2):
        if m.kind is MarkerKind.REST_ONSET:
            desc = rest_code
        else:
            desc = code_for[m.class_label]
        mk.append(f"Mk{n}=Stimulus,{_escape(desc)},{m.sample_index + 1},1,0")
    marker_text = "\n".join(mk) + "\n"
    return header_text, marker_text, payload


def save_recording(
    rec: ContinuousRecording, out_dir: str | os.PathLike, basename: str = "recording",
    fmt: BinaryFormat = BinaryFormat.IEEE_FLOAT_32, **kwargs,
) -> Path:
    """Write the three files into ``out_dir``; returns the ``.vhdr`` path."""
    out = Path(out_dir)
    header, markers, payload = write_recording(rec, fmt, basename=basename, **kwargs)
    vhdr = out / f"{basename}.vhdr"
    vhdr.write_bytes(header.encode("utf-8"))
    (out / f"{basename}.vmrk").write_bytes(markers.encode("utf-8"))
    (out / f"{basename}.eeg").write_bytes(payload)
    return vhdr


def load_recording(vhdr_path: str | os.PathLike, montage: Montage | None = None, **kwargs) -> ContinuousRecording:
    """Read a recording from disk via the file names recorded in its header."""
    vhdr_path = Path(vhdr_path)
    header = parse_header(vhdr_path.read_bytes())
    base = vhdr_path.with_suffix("")
    vmrk = vhdr_path.parent / header.marker_file if header.marker_file else base.with_suffix(".vmrk")
    eeg = vhdr_path.parent / header.data_file if header.data_file else base.with_suffix(".eeg")
    markers = parse_markers(vmrk.read_bytes())
    return read_recording(header, markers, eeg.read_bytes(), montage, **kwargs)


class ExportLayout(enum.Enum):
    LONG_CSV = "long_csv"
    JSON = "json"


def _g6(x: float) -> str:
    return format(float(x), ".6g")


def export_epochs(es: EpochSet, layout: ExportLayout = ExportLayout.LONG_CSV) -> bytes:
    """Deterministic CSV/JSON rendering of an epoch set (6 significant digits)."""
    channels = list(es.channel_labels) or [str(i) for i in range(es.n_channels)]
    if layout is ExportLayout.JSON:
        doc = {
            "window_s": [es.window_s[0], es.window_s[1]],
            "sample_rate_hz": es.sample_rate_hz,
            "channel_labels": list(es.channel_labels),
            "labels": [lab.value for lab in es.labels],
            "shape": list(es.data.shape),
            "data": [[[float(_g6(v)) for v in ch] for ch in trial] for trial in es.data],
        }
        return (json.dumps(doc, separators=(",", ":")) + "\n").encode("utf-8")

    buf = io.StringIO()
    buf.write("trial,label,channel,time_s,uV\n")
    times = [_g6(t) for t in es.times]
    for k in range(es.n_trials):
        label = es.labels[k].value
        for c, ch in enumerate(channels):
            row = es.data[k, c]
            for t, v in zip(times, row):
                buf.write(f"{k},{label},{ch},{t},{_g6(v)}\n")
    return buf.getvalue().encode("utf-8")


def import_epochs_json(payload: bytes | str) -> EpochSet:
    doc = json.loads(payload)
    data = np.array(doc["data"], dtype=float).reshape(doc["shape"])
    return EpochSet(
        data,
        tuple(VisualClass(v) for v in doc["labels"]),
        tuple(doc["window_s"]),
        doc["sample_rate_hz"],
        tuple(doc["channel_labels"]),
    )
