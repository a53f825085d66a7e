"""Binary capture files and the third-party import adapter.

Layout (all little-endian)::

    magic            4 bytes  b"RFDS"
    version          u16      1
    num_subcarriers  u32
    subcarrier_sp    f64      Hz
    carrier_freq     f64      Hz
    frame_interval   f64      s
    frame_count      u32
    label_count      u32
    frames           frame_count x (timestamp f64, N x (re f32, im f32))
    labels           label_count x (time f64, range f64, velocity f64, state u8)

Samples are stored as float32, so a synthetic capture loses precision on
the first write; after that write -> read -> write is byte-identical.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .core import CsiCapture, Label, PresenceState, SensingConfig, preset
from .kv import parse_bool, parse_kv

MAGIC = b"RFDS"
VERSION = 1
_HEADER = struct.Struct("<4sHIdddII")

LABEL_DTYPE = np.dtype([("time", "<f8"), ("range", "<f8"), ("velocity", "<f8"), ("state", "u1")])


class CaptureFormatError(ValueError):
    """Unreadable capture file; ``field`` names the offending header field or section."""

    def __init__(self, field: str, message: str):
        self.field = field
        super().__init__(f"{field}: {message}")


def _frame_dtype(n: int) -> np.dtype:
    return np.dtype([("timestamp", "<f8"), ("samples", "<f4", (2 * n,))])


def encode_capture(capture: CsiCapture) -> bytes:
    cfg = capture.config
    n = cfg.num_subcarriers
    header = _HEADER.pack(MAGIC, VERSION, n, cfg.subcarrier_spacing, cfg.carrier_frequency,
                          cfg.frame_interval, len(capture), len(capture.labels))
    frames = np.empty(len(capture), dtype=_frame_dtype(n))
    frames["timestamp"] = capture.timestamps
    pairs = frames["samples"].reshape(len(capture), n, 2)
    pairs[..., 0] = capture.data.real
    pairs[..., 1] = capture.data.imag
    labels = np.array([tuple(lab[:3]) + (int(lab.state),) for lab in capture.labels],
                      dtype=LABEL_DTYPE)
    return header + frames.tobytes() + labels.tobytes()


def decode_capture(blob: bytes, base: SensingConfig | None = None) -> CsiCapture:
    if len(blob) < _HEADER.size:
        if blob[:4] != MAGIC[:len(blob[:4])]:
            raise CaptureFormatError("magic", f"expected {MAGIC!r}")
        raise CaptureFormatError("header", f"file is {len(blob)} bytes, header needs {_HEADER.size}")
    magic, version, n, df, fc, period, n_frames, n_labels = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise CaptureFormatError("magic", f"expected {MAGIC!r}, found {magic!r}")
    if version != VERSION:
        raise CaptureFormatError("version", f"unsupported version {version}")
    if n < 2:
        raise CaptureFormatError("num_subcarriers", f"invalid value {n}")
    for name, value in (("subcarrier_spacing", df), ("carrier_frequency", fc),
                        ("frame_interval", period)):
        if not np.isfinite(value) or value <= 0:
            raise CaptureFormatError(name, f"invalid value {value}")
    fdt = _frame_dtype(n)
    need = _HEADER.size + n_frames * fdt.itemsize + n_labels * LABEL_DTYPE.itemsize
    frames_end = _HEADER.size + n_frames * fdt.itemsize
    if len(blob) < frames_end:
        raise CaptureFormatError("frame_count", f"header promises {n_frames} frames, file is truncated")
    if len(blob) != need:
        raise CaptureFormatError("label_count",
                                 f"expected {need} bytes for {n_labels} labels, found {len(blob)}")
    frames = np.frombuffer(blob, dtype=fdt, count=n_frames, offset=_HEADER.size)
    labels = np.frombuffer(blob, dtype=LABEL_DTYPE, count=n_labels, offset=frames_end)
    pairs = frames["samples"].reshape(n_frames, n, 2)
    data = np.empty((n_frames, n), dtype=np.complex64)
    data.real = pairs[..., 0]
    data.imag = pairs[..., 1]
    config = (base or preset("detection")).replace(
        num_subcarriers=n, subcarrier_spacing=df, carrier_frequency=fc, frame_interval=period)
    try:
        states = [PresenceState(int(s)) for s in labels["state"]]
    except ValueError as exc:
        raise CaptureFormatError("labels", str(exc)) from None
    return CsiCapture(
        config,
        frames["timestamp"].copy(),
        data,
        tuple(Label(float(t), float(r), float(v), s)
              for (t, r, v, _), s in zip(labels, states)),
    )


def write_capture(path, capture: CsiCapture) -> None:
    Path(path).write_bytes(encode_capture(capture))


def read_capture(path, base: SensingConfig | None = None) -> CsiCapture:
    return decode_capture(Path(path).read_bytes(), base)


# -- import adapter ----------------------------------------------------------

MAPPING_KEYS = {
    "format", "delimiter", "skip_rows", "time_column", "first_sample_column", "sample_layout",
    "num_subcarriers", "subcarrier_spacing", "carrier_frequency", "frame_interval",
    "conjugate",
}


def convert_capture(source, mapping_path, base: SensingConfig | None = None) -> CsiCapture:
    """Build a capture from a third-party dump described by a mapping file.

    Supported sources are delimited text (one frame per row) and ``.npy``
    arrays of shape ``(frames, subcarriers)``. See ``docs/mapping_example.txt``.
    """
    sections = parse_kv(Path(mapping_path).read_text(encoding="utf-8"))
    items = {k: v for k, (v, _) in sections[0].items.items()}
    unknown = set(items) - MAPPING_KEYS
    if unknown:
        raise ValueError(f"unknown mapping keys: {sorted(unknown)}")
    base = base or preset("detection")
    overrides = {k: items[k] for k in ("num_subcarriers", "subcarrier_spacing",
                                       "carrier_frequency", "frame_interval") if k in items}
    config = base.with_overrides(overrides)
    fmt = items.get("format", "csv")
    timestamps = None
    if fmt == "npy":
        data = np.load(source)
        if data.ndim != 2:
            raise ValueError("npy source must be a 2-D array")
    elif fmt == "csv":
        delimiter = items.get("delimiter", ",")
        delimiter = "\t" if delimiter == "tab" else delimiter
        table = np.loadtxt(source, delimiter=delimiter, skiprows=int(items.get("skip_rows", 0)),
                           dtype=str, ndmin=2)
        first = int(items.get("first_sample_column", 0))
        layout = items.get("sample_layout", "interleaved")
        cells = table[:, first:]
        if layout == "interleaved":
            vals = cells.astype(float)
            data = vals[:, 0::2] + 1j * vals[:, 1::2]
        elif layout == "amp_phase":
            vals = cells.astype(float)
            data = vals[:, 0::2] * np.exp(1j * vals[:, 1::2])
        elif layout == "complex":
            data = np.array([[complex(c.replace(" ", "")) for c in row] for row in cells])
        else:
            raise ValueError(f"unknown sample_layout {layout!r}")
        if "time_column" in items:
            timestamps = table[:, int(items["time_column"])].astype(float)
    else:
        raise ValueError(f"unknown source format {fmt!r}")
    if parse_bool(items.get("conjugate", "false")):
        data = np.conj(data)
    if "num_subcarriers" not in items:
        config = config.replace(num_subcarriers=data.shape[1])
    if timestamps is None:
        timestamps = np.arange(data.shape[0]) * config.frame_interval
    else:
        timestamps = timestamps - timestamps[0]
    return CsiCapture(config, timestamps, data)
