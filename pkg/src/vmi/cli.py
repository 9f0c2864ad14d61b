"""Command-line entry point: synth, eval, ersp, topo and convert."""
from __future__ import annotations

import argparse
import dataclasses
import datetime as _dt
import hashlib
import json
import os
import sys
from pathlib import Path

from . import __version__
from .classify import TableLayout, cross_validate, render_report
from .core import CLASS_ORDER, AnalysisConfig, CvConfig, MarkerKind, SessionKind, VmiError
from .dsp import alpha_filter, extract_epochs, filter_epochs
from .io_brainvision import BinaryFormat, ExportLayout, export_epochs, load_recording, save_recording
from .synth import SynthConfig, SnrPreset, generate_session
from .timefreq import (
    TopoMode,
    UnknownChannel,
    alpha_topography,
    compute_ersp,
    ersp_axes_to_csv,
    ersp_to_csv,
    ersp_to_svg,
    topography_to_csv,
    topography_to_svg,
)

MANIFEST_NAME = "manifest.json"
ERSP_EPOCH_S = (-0.5, 4.0)
# topography epochs carry 0.5 s of margin on both sides for the filter edges
TOPO_EPOCH_S = (-1.0, 4.5)


class IoError(VmiError, OSError):
    pass


class ConfigError(VmiError, ValueError):
    pass


# ---------------------------------------------------------------- config file

_SYNTH_KEYS = {
    "n_trials_per_class", "fs_hz", "rest_s", "cue_s", "task_s", "source_amplitude_uv", "gain",
    "alpha_hz", "alpha_jitter_hz", "pink_uv", "white_uv", "erp_uv", "mixing_seed",
}


def read_config_file(path: str | os.PathLike) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment; later keys win."""
    out: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise IoError(f"cannot read config {path}: {e.strerror or e}") from None
    for no, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{no}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if not key:
            raise ConfigError(f"{path}:{no}: empty key")
        out[key] = value
    return out


def _parse_value(key: str, raw: str, default):
    try:
        if key == "topo_windows_ms":
            pairs = [p.split(":") for p in raw.split(",")]
            return tuple((float(a), float(b)) for a, b in pairs)
        if key == "shrinkage":
            return raw if raw == "analytic" else float(raw)
        if isinstance(default, bool):
            if raw.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return raw.lower() in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, tuple) or key == "source_amplitude_uv":
            return tuple(float(v) for v in raw.split(","))
        if raw.lower() == "none":
            return None
        return float(raw)
    except ValueError:
        raise ConfigError(f"invalid value for {key}: {raw!r}") from None


def resolve_configs(values: dict[str, str]) -> tuple[AnalysisConfig, dict, int | None]:
    """Split flat keys into an AnalysisConfig, SynthConfig overrides and a seed."""
    analysis, cv, synth, seed = {}, {}, {}, None
    a_defaults = {f.name: f.default for f in dataclasses.fields(AnalysisConfig)}
    cv_defaults = {f.name: f.default for f in dataclasses.fields(CvConfig)}
    s_defaults = {f.name: f.default for f in dataclasses.fields(SynthConfig)}
    for key, raw in values.items():
        head, _, rest = key.partition(".")
        if key == "seed":
            seed = _parse_value(key, raw, 0)
        elif head == "cv" and rest in cv_defaults:
            cv[rest] = _parse_value(rest, raw, cv_defaults[rest])
        elif head == "synth" and rest in _SYNTH_KEYS:
            synth[rest] = _parse_value(rest, raw, s_defaults[rest])
        elif key in a_defaults and key != "cv":
            analysis[key] = _parse_value(key, raw, a_defaults[key])
        else:
            raise ConfigError(f"unknown config key {key!r}")
    try:
        cfg = AnalysisConfig(**analysis, cv=CvConfig(**cv))
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None
    return cfg, synth, seed


def _jsonable(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _jsonable(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (set, frozenset)):
        return sorted(_jsonable(v) for v in obj)
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if hasattr(obj, "value") and not isinstance(obj, (int, float, str)):
        return obj.value
    return obj


def config_digest(resolved: dict) -> str:
    blob = json.dumps(_jsonable(resolved), sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


# ---------------------------------------------------------------- helpers

def _out_dir(path: str) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".vmi-write-test"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as e:
        raise IoError(f"output directory {out} is not writable: {e.strerror or e}") from None
    return out


def _find_header(data: str) -> Path:
    p = Path(data)
    if p.is_dir():
        headers = sorted(p.glob("*.vhdr"))
        if len(headers) != 1:
            raise IoError(f"expected exactly one .vhdr file in {p}, found {len(headers)}")
        return headers[0]
    if not p.exists():
        raise IoError(f"no such file or directory: {p}")
    return p


def _load(data: str):
    vhdr = _find_header(data)
    try:
        rec = load_recording(vhdr)
    except FileNotFoundError as e:
        raise IoError(f"missing file: {e.filename}") from None
    inputs = sorted(q for q in vhdr.parent.glob(vhdr.stem + ".*") if q.suffix in (".vhdr", ".vmrk", ".eeg"))
    return rec, vhdr, {q.name: _sha256(q) for q in inputs}


def _onset_kind(rec) -> MarkerKind:
    return MarkerKind.CUE_ONSET if rec.session_kind is SessionKind.IMAGERY else MarkerKind.STIMULUS_ONSET


def _write(out: Path, name: str, payload: bytes | str, written: dict[str, str]) -> None:
    data = payload.encode("utf-8") if isinstance(payload, str) else payload
    (out / name).write_bytes(data)
    written[name] = hashlib.sha256(data).hexdigest()


def _write_manifest(out: Path, argv, resolved, inputs, outputs, seed, started) -> None:
    manifest = {
        "tool_version": __version__,
        "command_line": list(argv),
        "config": _jsonable(resolved),
        "config_digest": config_digest(resolved),
        "input_digests": inputs,
        "output_digests": outputs,
        "seed": seed,
        "timestamps": {"started": started, "finished": _now()},
    }
    (out / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


# ---------------------------------------------------------------- commands

def cmd_synth(args, cfg, synth_overrides, seed, argv, started):
    out = _out_dir(args.out)
    overrides = dict(synth_overrides)
    if args.trials_per_class is not None:
        overrides["n_trials_per_class"] = args.trials_per_class
    session = {s.value.lower(): s for s in SessionKind}[args.session]
    scfg = SynthConfig(session_kind=session, snr_preset=SnrPreset(args.preset), seed=seed, **overrides)
    rec = generate_session(scfg)
    fmt = BinaryFormat.INT_16 if args.format == "int16" else BinaryFormat.IEEE_FLOAT_32
    vhdr = save_recording(rec, out, args.basename, fmt)
    outputs = {p.name: _sha256(p) for p in sorted(out.glob(vhdr.stem + ".*")) if p.name != MANIFEST_NAME}
    resolved = {"synth": scfg, "format": fmt.value}
    _write_manifest(out, argv, resolved, {}, outputs, seed, started)
    print(f"wrote {vhdr}", file=sys.stderr)


def cmd_eval(args, cfg, synth_overrides, seed, argv, started):
    out = _out_dir(args.out)
    cfg = dataclasses.replace(cfg, cv=dataclasses.replace(cfg.cv, seed=seed))
    rec, vhdr, inputs = _load(args.data)
    es = extract_epochs(rec, cfg.epoch_window_s, _onset_kind(rec))
    session = rec.session_kind
    del rec
    es = filter_epochs(es, alpha_filter(cfg, es.sample_rate_hz))
    subject = args.subject or vhdr.stem
    written: dict[str, str] = {}
    if args.mode == "4class":
        report = cross_validate(es, cfg)
        default_task = "Visual motion imagery" if session is SessionKind.IMAGERY else "Visual perception"
        task = args.task or default_task
        payload = {"mode": "4class", "subject": subject, "reports": {task: report.to_dict()}}
        table = render_report({task: {subject: report}}, TableLayout.TABLE_I)
    else:
        reports = {c: cross_validate(es, cfg, c) for c in CLASS_ORDER}
        payload = {"mode": "ovr", "subject": subject,
                   "reports": {c.value: r.to_dict() for c, r in reports.items()}}
        table = render_report({c: {subject: r} for c, r in reports.items()}, TableLayout.TABLE_II)
    doc = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    _write(out, "report.json", doc, written)
    _write(out, "report.txt", table, written)
    if args.json:
        Path(args.json).write_text(doc, encoding="utf-8")
    _write_manifest(out, argv, {"analysis": cfg, "mode": args.mode}, inputs, written, seed, started)
    sys.stderr.write(table)


def cmd_ersp(args, cfg, synth_overrides, seed, argv, started):
    out = _out_dir(args.out)
    rec, _, inputs = _load(args.data)
    # fail on a bad label before epoching the whole session
    labels = rec.montage.labels
    if args.channel.lower() not in {lab.lower() for lab in labels}:
        raise UnknownChannel(args.channel, tuple(labels))
    es = extract_epochs(rec, ERSP_EPOCH_S, _onset_kind(rec))
    result = compute_ersp(es, args.channel, cfg)
    written: dict[str, str] = {}
    _write(out, f"ersp_{result.channel}.csv", ersp_to_csv(result), written)
    _write(out, f"ersp_{result.channel}_axes.csv", ersp_axes_to_csv(result), written)
    _write(out, f"ersp_{result.channel}.svg", ersp_to_svg(result), written)
    _write_manifest(out, argv, {"analysis": cfg, "channel": result.channel}, inputs, written, seed, started)


def cmd_topo(args, cfg, synth_overrides, seed, argv, started):
    out = _out_dir(args.out)
    rec, _, inputs = _load(args.data)
    es = extract_epochs(rec, TOPO_EPOCH_S, _onset_kind(rec))
    del rec
    mode = {m.value.lower(): m for m in TopoMode}[args.mode.lower()]
    written: dict[str, str] = {}
    for frame in alpha_topography(es, cfg, mode):
        stem = f"topo_{int(frame.window_ms[0]):04d}-{int(frame.window_ms[1]):04d}ms"
        _write(out, stem + ".csv", topography_to_csv(frame), written)
        _write(out, stem + ".svg", topography_to_svg(frame), written)
    _write_manifest(out, argv, {"analysis": cfg, "mode": mode.value}, inputs, written, seed, started)


def cmd_convert(args, cfg, synth_overrides, seed, argv, started):
    out = _out_dir(args.out)
    rec, vhdr, inputs = _load(args.data)
    window = tuple(float(v) for v in args.window.split(",")) if args.window else cfg.epoch_window_s
    if len(window) != 2:
        raise ConfigError("--window needs two comma-separated seconds")
    es = extract_epochs(rec, window, _onset_kind(rec))
    layout = ExportLayout(args.layout)
    name = f"{vhdr.stem}_epochs.{'json' if layout is ExportLayout.JSON else 'csv'}"
    written: dict[str, str] = {}
    _write(out, name, export_epochs(es, layout), written)
    _write_manifest(out, argv, {"window_s": window, "layout": layout.value}, inputs, written, seed, started)


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vmi", description="Offline EEG decoding for visual motion imagery.")
    p.add_argument("--version", action="version", version=f"vmi {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="flat key = value config file")
        sp.add_argument("--seed", type=int, help="overrides config 'seed' and $VMI_SEED")
        sp.add_argument("--out", required=True, help="output directory")

    sp = sub.add_parser("synth", help="write a synthetic BrainVision recording")
    common(sp)
    sp.add_argument("--preset", choices=[s.value for s in SnrPreset], default="high")
    sp.add_argument("--session", choices=["imagery", "perception"], default="imagery")
    sp.add_argument("--trials-per-class", type=int)
    sp.add_argument("--format", choices=["float32", "int16"], default="float32")
    sp.add_argument("--basename", default="recording")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("eval", help="cross-validated CSP+RLDA accuracy")
    common(sp)
    sp.add_argument("--data", required=True, help="recording directory or .vhdr file")
    sp.add_argument("--mode", choices=["4class", "ovr"], default="4class")
    sp.add_argument("--json", help="extra copy of the JSON report")
    sp.add_argument("--subject", help="column name in the table (default: file stem)")
    sp.add_argument("--task", help="row name for 4class mode")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("ersp", help="ERSP map of one channel")
    common(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--channel", default="Oz")
    sp.set_defaults(func=cmd_ersp)

    sp = sub.add_parser("topo", help="alpha topography in four windows")
    common(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--mode", choices=[m.value for m in TopoMode], default=TopoMode.DB_VS_BASELINE.value)
    sp.set_defaults(func=cmd_topo)

    sp = sub.add_parser("convert", help="export epochs to CSV or JSON")
    common(sp)
    sp.add_argument("--data", required=True)
    sp.add_argument("--window", help="epoch window in seconds, e.g. 0.5,4.0")
    sp.add_argument("--layout", choices=[lay.value for lay in ExportLayout], default=ExportLayout.LONG_CSV.value)
    sp.set_defaults(func=cmd_convert)
    return p


def _resolve_seed(flag, from_file) -> int:
    if flag is not None:
        return flag
    if from_file is not None:
        return from_file
    env = os.environ.get("VMI_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"VMI_SEED must be an integer, got {env!r}") from None
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    started = _now()
    try:
        values = read_config_file(args.config) if args.config else {}
        cfg, synth_overrides, file_seed = resolve_configs(values)
        seed = _resolve_seed(args.seed, file_seed)
        args.func(args, cfg, synth_overrides, seed, ["vmi", *argv], started)
    except (VmiError, OSError, ValueError) as e:
        module = type(e).__module__.rsplit(".", 1)[-1]
        print(f"vmi {args.command}: [{module}] {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
