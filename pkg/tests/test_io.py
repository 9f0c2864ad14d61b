import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vmi.core import (
    ContinuousRecording,
    EpochSet,
    MarkerEvent,
    MarkerKind,
    SessionKind,
    VisualClass,
    montage_from_labels,
)
from vmi.io_brainvision import (
    BinaryFormat,
    BrainVisionError,
    ChannelCountMismatch,
    DynamicRangeOverflow,
    ExportLayout,
    LengthMismatch,
    MalformedLine,
    MissingKey,
    MissingSection,
    Orientation,
    UnknownMarkerDescription,
    UnsupportedFormat,
    export_epochs,
    import_epochs_json,
    load_recording,
    parse_header,
    parse_markers,
    read_recording,
    save_recording,
    write_recording,
)


def header_text(n_channels=2, listed=2, fmt="INT_16", orientation="MULTIPLEXED", data_format="BINARY", res="0.5"):
    chans = "\n".join(f"Ch{i}=C{i},,{res},µV" for i in range(1, listed + 1))
    return (
        "Brain Vision Data Exchange Header File Version 1.0\n"
        "[Common Infos]\n"
        f"DataFormat={data_format}\n"
        f"DataOrientation={orientation}\n"
        f"NumberOfChannels={n_channels}\n"
        "SamplingInterval=1000\n"
        "[Binary Infos]\n"
        f"BinaryFormat={fmt}\n"
        "[Channel Infos]\n"
        f"{chans}\n"
    )


MARKERS = (
    "Brain Vision Data Exchange Marker File, Version 1.0\n"
    "[Marker Infos]\n"
    "Mk1=New Segment,,1,1,0\n"
    "Mk2=Stimulus,S  1,5000,1,0\n"
)


# ---------------------------------------------------------------- headers

def test_minimal_header_fields():
    h = parse_header(header_text())
    assert h.n_channels == 2
    assert h.sampling_interval_us == 1000
    assert h.binary_format is BinaryFormat.INT_16
    assert h.orientation is Orientation.MULTIPLEXED
    assert [e.resolution_uv for e in h.channel_entries] == [0.5, 0.5]
    assert h.sample_rate_hz == 1000.0


def test_header_channel_count_mismatch():
    with pytest.raises(ChannelCountMismatch):
        parse_header(header_text(n_channels=3, listed=2))


def test_header_ascii_unsupported():
    with pytest.raises(UnsupportedFormat):
        parse_header(header_text(data_format="ASCII"))


def test_header_missing_section_and_key():
    with pytest.raises(MissingSection):
        parse_header(header_text().replace("[Binary Infos]\nBinaryFormat=INT_16\n", ""))
    with pytest.raises(MissingSection):
        parse_header("NumberOfChannels=1\n")
    with pytest.raises(MissingKey):
        parse_header(header_text().replace("SamplingInterval=1000\n", ""))


def test_header_crlf_and_comments():
    text = header_text().replace("\n", "\r\n").replace("[Binary Infos]", "; a comment\r\n[Binary Infos]")
    assert parse_header(text).n_channels == 2


def test_header_latin1_bytes():
    raw = header_text().encode("latin-1")
    assert parse_header(raw).channel_entries[0].unit == "µV"


def test_header_declared_utf8(rng):
    h, _, _ = write_recording(_small_recording(rng))
    assert "Codepage=UTF-8" in h
    assert parse_header(h.encode("utf-8")).channel_entries[0].unit == "µV"


def test_header_bad_resolution_reports_line():
    with pytest.raises(MalformedLine) as info:
        parse_header(header_text(res="abc"))
    assert info.value.line_no == 10


# ---------------------------------------------------------------- markers

def test_marker_line_fields():
    mk = parse_markers(MARKERS)[1]
    assert (mk.index, mk.type_str, mk.description, mk.position_sample) == (2, "Stimulus", "S  1", 5000)


def test_empty_marker_section():
    assert parse_markers("[Marker Infos]\n") == []


def test_marker_missing_fields():
    with pytest.raises(MalformedLine) as info:
        parse_markers("[Marker Infos]\nMk1=New Segment,,1,1,0\nMk3=Stimulus,S 1\n")
    assert info.value.line_no == 3
    assert "line 3" in str(info.value)


def test_marker_without_section():
    with pytest.raises(MissingSection):
        parse_markers("Mk1=Stimulus,S  1,1,1,0\n")


# ---------------------------------------------------------------- binary

def test_int16_multiplexed_scaling():
    h = parse_header(header_text())
    raw = struct.pack("<4h", 100, -100, 200, -200)  # sample-major
    rec = read_recording(h, [], raw)
    assert np.array_equal(rec.data, [[50.0, 100.0], [-50.0, -100.0]])


def test_float32_vectorized_verbatim():
    h = parse_header(header_text(fmt="IEEE_FLOAT_32", orientation="VECTORIZED"))
    raw = np.array([1.5, 2.5, -3.0, 4.0], dtype="<f4").tobytes()  # channel-major
    rec = read_recording(h, [], raw)
    assert np.array_equal(rec.data, [[1.5, 2.5], [-3.0, 4.0]])


def test_length_mismatch():
    with pytest.raises(LengthMismatch):
        read_recording(parse_header(header_text()), [], b"\x00" * 7)


def test_unknown_stimulus_code():
    h = parse_header(header_text())
    markers = parse_markers("[Marker Infos]\nMk1=Stimulus,S 77,1,1,0\n")
    with pytest.raises(UnknownMarkerDescription):
        read_recording(h, markers, b"\x00" * 4)


def test_markers_become_cue_events():
    h = parse_header(header_text())
    markers = parse_markers(MARKERS)
    rec = read_recording(h, markers, b"\x00" * 4 * 6000)
    assert rec.markers == (MarkerEvent(4999, MarkerKind.CUE_ONSET, VisualClass.EATING_FOOD),)
    per = read_recording(h, markers, b"\x00" * 4 * 6000, session_kind=SessionKind.PERCEPTION)
    assert per.markers[0].kind is MarkerKind.STIMULUS_ONSET


def _small_recording(rng, n=500, scale=100.0, kind=SessionKind.IMAGERY):
    montage = montage_from_labels(["O1", "Oz", "O2"])
    data = (scale * rng.standard_normal((3, n))).astype(np.float32)
    onset = MarkerKind.CUE_ONSET if kind is SessionKind.IMAGERY else MarkerKind.STIMULUS_ONSET
    markers = (
        MarkerEvent(0, MarkerKind.REST_ONSET),
        MarkerEvent(120, onset, VisualClass.OPENING_DOOR),
        MarkerEvent(300, MarkerKind.REST_ONSET),
        MarkerEvent(420, onset, VisualClass.POURING_WATER),
    )
    return ContinuousRecording(montage, 1000.0, data, markers, kind)


def _roundtrip(rec, fmt, **kw):
    h, m, b = write_recording(rec, fmt, **kw)
    return read_recording(parse_header(h), parse_markers(m), b)


@pytest.mark.parametrize("kind", list(SessionKind))
def test_float32_roundtrip_exact(rng, kind):
    rec = _small_recording(rng, kind=kind)
    assert _roundtrip(rec, BinaryFormat.IEEE_FLOAT_32) == rec


def test_int16_roundtrip_within_half_step(rng):
    montage = montage_from_labels(["Oz"])
    data = rng.uniform(-3276.8, 3276.7, size=(1, 5000))
    rec = ContinuousRecording(montage, 1000.0, data, ())
    back = _roundtrip(rec, BinaryFormat.INT_16, resolution_uv=0.1)
    assert np.max(np.abs(back.data - data)) <= 0.05 + 1e-9


def test_int16_automatic_resolution(rng):
    rec = _small_recording(rng, scale=5000.0)
    back = _roundtrip(rec, BinaryFormat.INT_16)
    h = parse_header(write_recording(rec, BinaryFormat.INT_16)[0])
    res = h.channel_entries[0].resolution_uv
    assert np.max(np.abs(back.data - rec.data)) <= res / 2 + 1e-6
    assert back.markers == rec.markers


def test_int16_overflow():
    rec = ContinuousRecording(montage_from_labels(["Oz"]), 1000.0, np.array([[1e9, 0.0]]), ())
    with pytest.raises(DynamicRangeOverflow):
        write_recording(rec, BinaryFormat.INT_16)


def test_marker_positions_are_one_based(rng):
    rec = _small_recording(rng)
    _, vmrk, _ = write_recording(rec)
    assert "Mk3=Stimulus,S  2,121,1,0" in vmrk
    assert [m.sample_index for m in _roundtrip(rec, BinaryFormat.IEEE_FLOAT_32).markers] == [0, 120, 300, 420]


def test_writer_uses_lf_only(rng):
    h, m, _ = write_recording(_small_recording(rng))
    assert "\r" not in h and "\r" not in m


def test_save_and_load(tmp_path, rng):
    rec = _small_recording(rng)
    vhdr = save_recording(rec, tmp_path, "sub01")
    assert sorted(p.name for p in tmp_path.iterdir()) == ["sub01.eeg", "sub01.vhdr", "sub01.vmrk"]
    assert load_recording(vhdr) == rec


def test_load_missing_marker_file(tmp_path, rng):
    vhdr = save_recording(_small_recording(rng), tmp_path, "sub01")
    (tmp_path / "sub01.vmrk").unlink()
    with pytest.raises(FileNotFoundError) as info:
        load_recording(vhdr)
    assert "sub01.vmrk" in str(info.value)


# ---------------------------------------------------------------- exports

def _epochs(n_trials=1, n_ch=1, n=2):
    data = np.arange(n_trials * n_ch * n, dtype=float).reshape(n_trials, n_ch, n)
    labels = (VisualClass.EATING_FOOD,) * n_trials
    return EpochSet(data, labels, (0.0, n / 1000.0), 1000.0, tuple(f"C{i}" for i in range(n_ch)))


def test_export_csv_rows():
    lines = export_epochs(_epochs()).decode().splitlines()
    assert lines[0] == "trial,label,channel,time_s,uV"
    assert lines[1:] == ["0,EatingFood,C0,0,0", "0,EatingFood,C0,0.001,1"]


def test_export_empty_csv_is_header_only():
    es = EpochSet(np.zeros((0, 1, 2)), (), (0.0, 0.002), 1000.0, ("C0",))
    assert export_epochs(es).decode() == "trial,label,channel,time_s,uV\n"


def test_export_json_roundtrip():
    es = _epochs(2, 3, 4)
    payload = export_epochs(es, ExportLayout.JSON)
    assert json.loads(payload)["shape"] == [2, 3, 4]
    assert import_epochs_json(payload) == es


def test_export_deterministic():
    es = _epochs(2, 2, 5)
    assert export_epochs(es) == export_epochs(es)


# ---------------------------------------------------------------- totality

_header_lines = st.sampled_from([
    "[Common Infos]", "[Binary Infos]", "[Channel Infos]", "[Marker Infos]", "[Comment]",
    "NumberOfChannels=2", "NumberOfChannels=-1", "NumberOfChannels=x", "SamplingInterval=1000",
    "SamplingInterval=0", "SamplingInterval=nan", "DataFormat=BINARY", "DataOrientation=MULTIPLEXED",
    "DataOrientation=SIDEWAYS", "BinaryFormat=INT_16", "BinaryFormat=IEEE_FLOAT_32", "BinaryFormat=UINT_8",
    "Ch1=Oz,,0.5,µV", "Ch2=O1,,abc", "Ch2=,,1", "Ch99=A", "Mk1=Stimulus,S  1,1,1,0", "Mk1=Stimulus,S 1",
    "Mk0=x,y,0,1,0", "Mk2=a,b,c,d,e", "=", "; comment", "",
])


@settings(max_examples=300, deadline=None)
@given(st.lists(_header_lines, max_size=25), st.binary(max_size=64))
def test_parsers_total_on_structured_noise(lines, junk):
    text = "\n".join(lines).encode("utf-8") + junk
    for parse in (parse_header, parse_markers):
        try:
            parse(text)
        except BrainVisionError:
            pass


@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=512))
def test_parsers_total_on_bytes(raw):
    for parse in (parse_header, parse_markers):
        try:
            parse(raw)
        except BrainVisionError:
            pass


@settings(max_examples=25, deadline=None)
@given(
    st.integers(1, 4), st.integers(1, 40),
    st.lists(st.integers(0, 39), max_size=6, unique=True),
    st.sampled_from(list(SessionKind)),
)
def test_float32_roundtrip_property(n_ch, n, positions, kind):
    rng = np.random.default_rng(n_ch * 100 + n)
    labels = ["O1", "Oz", "O2", "POz"][:n_ch]
    onset = MarkerKind.CUE_ONSET if kind is SessionKind.IMAGERY else MarkerKind.STIMULUS_ONSET
    markers = tuple(
        MarkerEvent(p, onset, list(VisualClass)[p % 4]) if p % 2 else MarkerEvent(p, MarkerKind.REST_ONSET)
        for p in sorted(q for q in positions if q < n)
    )
    rec = ContinuousRecording(
        montage_from_labels(labels), 500.0, rng.standard_normal((n_ch, n)).astype(np.float32), markers, kind
    )
    assert _roundtrip(rec, BinaryFormat.IEEE_FLOAT_32) == rec
