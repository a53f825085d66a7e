"""Shared domain types, sensing configuration and derived radar quantities."""
from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .kv import KVSyntaxError, format_kv, parse_bool, parse_float_list, parse_kv

# The resolution figures reported for the 160 MHz setup (0.94 m) use c = 3e8.
SPEED_OF_LIGHT = 3.0e8

DB_FLOOR = 1e-30  # added to |X|^2 before 10*log10


class ConfigError(ValueError):
    pass


class CaptureError(ValueError):
    pass


class PresenceState(enum.IntEnum):
    ABSENT = 0
    PRESENT = 1
    APPROACHING = 2
    LEAVING = 3

    @property
    def transitional(self) -> bool:
        return self in (PresenceState.APPROACHING, PresenceState.LEAVING)

    @property
    def label(self) -> str:
        return self.name.lower()

    @property
    def three_class_label(self) -> str:
        """Label in the combined approaching/leaving vocabulary."""
        return "approaching_leaving" if self.transitional else self.label

    @classmethod
    def parse(cls, text: str) -> "PresenceState":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown presence state {text!r}") from None


class SensingMode(enum.Enum):
    IDLE = "idle"
    DETECTION = "detection"


@dataclass(frozen=True)
class SensingConfig:
    """Sensing and detection parameters. All quantities in SI units.

    ``gate_ranges`` fixes the number of range gates. ``fir_cutoff`` is in
    cycles per frame, so the same coefficients reject a ten times wider
    Doppler band at the detection frame rate than at the idle rate.
    """

    num_subcarriers: int = 2048
    subcarrier_spacing: float = 78125.0
    carrier_frequency: float = 5.8e9
    frame_interval: float = 0.01
    doppler_frames: int = 32
    gate_ranges: tuple[float, ...] = tuple(k * 0.9375 for k in range(9))
    snr_window: int = 20
    detection_window: int = 3
    snr_threshold: float = 12.0
    majority_window: int = 3
    clip_margin: float = 3.0
    fir_taps: int = 64
    fir_cutoff: float = 0.01
    phase_history: int = 8
    phase_quantum: float = math.pi / 64
    upsample_factor: int = 16
    zone_near_max: float = 2.0
    zone_approach_max: float = 5.0
    idle_to_detection_hits: int = 1
    detection_to_idle_misses: int = 10
    # Not fixed by the method; exposed so they can be tuned per deployment.
    doppler_hop: int = 8
    range_window: str = "rect"
    doppler_window: str = "rect"

    def __post_init__(self):
        object.__setattr__(self, "gate_ranges", tuple(float(r) for r in self.gate_ranges))
        _validate(self)

    @property
    def num_range_gates(self) -> int:
        return len(self.gate_ranges)

    @property
    def frame_rate(self) -> float:
        return 1.0 / self.frame_interval

    @property
    def bandwidth(self) -> float:
        return self.num_subcarriers * self.subcarrier_spacing

    def replace(self, **changes) -> "SensingConfig":
        return dataclasses.replace(self, **changes)

    def to_text(self) -> str:
        return format_kv({f.name: getattr(self, f.name) for f in dataclasses.fields(self)})

    @classmethod
    def from_text(cls, text: str, base: "SensingConfig | None" = None) -> "SensingConfig":
        sections = parse_kv(text)
        if len(sections) > 1:
            raise KVSyntaxError(sections[1].lineno, "sections are not allowed in config files")
        items = {k: v for k, (v, _) in sections[0].items.items()}
        try:
            return (base or cls()).with_overrides(items)
        except ConfigError as exc:
            key = getattr(exc, "key", None)
            if key is not None:
                raise KVSyntaxError(sections[0].line_of(key), str(exc)) from None
            raise

    @classmethod
    def load(cls, path, base: "SensingConfig | None" = None) -> "SensingConfig":
        return cls.from_text(Path(path).read_text(encoding="utf-8"), base)

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    def with_overrides(self, items: dict[str, str]) -> "SensingConfig":
        """Apply string-valued overrides (config file or ``--set key=value``)."""
        types = {f.name: f.type for f in dataclasses.fields(self)}
        changes = {}
        gate_count = None
        for key, text in items.items():
            try:
                if key == "num_range_gates":
                    gate_count = int(text)
                    continue
                if key not in types:
                    raise ConfigError(f"unknown config key {key!r}")
                kind = types[key]
                if key == "gate_ranges":
                    changes[key] = tuple(parse_float_list(text))
                elif kind == "int":
                    changes[key] = int(text)
                elif kind == "float":
                    changes[key] = float(text)
                elif kind == "bool":
                    changes[key] = parse_bool(text)
                else:
                    changes[key] = text.strip()
            except ValueError as exc:
                err = exc if isinstance(exc, ConfigError) else ConfigError(f"{key}: {exc}")
                err.key = key
                raise err from None
        out = self.replace(**changes)
        if gate_count is not None:
            if "gate_ranges" in changes:
                if gate_count != out.num_range_gates:
                    err = ConfigError("num_range_gates disagrees with gate_ranges")
                    err.key = "num_range_gates"
                    raise err
            else:
                out = out.with_uniform_gates(gate_count)
        return out

    def with_uniform_gates(self, count: int, pitch: float | None = None) -> "SensingConfig":
        step = range_resolution(self) if pitch is None else pitch
        return self.replace(gate_ranges=tuple(k * step for k in range(count)))


def _validate(cfg: SensingConfig) -> None:
    def need(ok, key, msg):
        if not ok:
            err = ConfigError(f"{key}: {msg}")
            err.key = key
            raise err

    need(cfg.num_subcarriers >= 2, "num_subcarriers", "must be >= 2")
    need(cfg.doppler_frames >= 2, "doppler_frames", "must be >= 2")
    need(len(cfg.gate_ranges) >= 1, "gate_ranges", "need at least one gate")
    need(all(r >= 0 for r in cfg.gate_ranges), "gate_ranges", "ranges must be >= 0")
    need(all(b > a for a, b in zip(cfg.gate_ranges, cfg.gate_ranges[1:])),
         "gate_ranges", "ranges must be strictly increasing")
    need(cfg.frame_interval > 0, "frame_interval", "must be > 0")
    need(cfg.subcarrier_spacing > 0, "subcarrier_spacing", "must be > 0")
    need(cfg.carrier_frequency > 0, "carrier_frequency", "must be > 0")
    need(cfg.upsample_factor >= 1, "upsample_factor", "must be >= 1")
    need(cfg.phase_quantum > 0, "phase_quantum", "must be > 0")
    need(cfg.phase_history >= 1, "phase_history", "must be >= 1")
    need(cfg.detection_window >= 1, "detection_window", "must be >= 1")
    need(cfg.snr_window >= cfg.detection_window, "snr_window", "must be >= detection_window")
    need(cfg.majority_window >= 1 and cfg.majority_window % 2 == 1,
         "majority_window", "must be odd")
    need(cfg.zone_near_max < cfg.zone_approach_max, "zone_near_max",
         "must be below zone_approach_max")
    need(cfg.fir_taps >= 1, "fir_taps", "must be >= 1")
    need(0 < cfg.fir_cutoff < 0.5, "fir_cutoff", "must lie in (0, 0.5)")
    need(cfg.clip_margin >= 0, "clip_margin", "must be >= 0")
    need(cfg.doppler_hop >= 1, "doppler_hop", "must be >= 1")
    need(cfg.idle_to_detection_hits >= 1, "idle_to_detection_hits", "must be >= 1")
    need(cfg.detection_to_idle_misses >= 1, "detection_to_idle_misses", "must be >= 1")
    for key in ("range_window", "doppler_window"):
        need(getattr(cfg, key) in ("rect", "hann"), key, "must be 'rect' or 'hann'")


PRESETS = {
    "idle": SensingConfig(frame_interval=0.1),
    "detection": SensingConfig(frame_interval=0.01),
}


def preset(name: str) -> SensingConfig:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r} (expected one of {sorted(PRESETS)})") from None


# -- derived quantities -------------------------------------------------------

def range_resolution(config: SensingConfig) -> float:
    return SPEED_OF_LIGHT / (2 * config.num_subcarriers * config.subcarrier_spacing)


def velocity_resolution(config: SensingConfig) -> float:
    return SPEED_OF_LIGHT / (
        2 * config.doppler_frames * config.carrier_frequency * config.frame_interval)


def max_unambiguous_velocity(config: SensingConfig) -> float:
    return SPEED_OF_LIGHT / (4 * config.carrier_frequency * config.frame_interval)


def doppler_shift_of_velocity(v, config: SensingConfig):
    """Monostatic Doppler shift in Hz for radial velocity ``v`` (range rate, m/s)."""
    return 2 * v * config.carrier_frequency / SPEED_OF_LIGHT


def velocity_of_doppler_shift(f_d, config: SensingConfig):
    return f_d * SPEED_OF_LIGHT / (2 * config.carrier_frequency)


def doppler_velocity_axis(config: SensingConfig) -> np.ndarray:
    """Velocity of each centred Doppler bin (zero Doppler at index M//2)."""
    m = config.doppler_frames
    freqs = np.fft.fftshift(np.fft.fftfreq(m, d=config.frame_interval))
    return velocity_of_doppler_shift(freqs, config)


def to_db(power) -> np.ndarray:
    return 10.0 * np.log10(np.asarray(power, dtype=float) + DB_FLOOR)


# -- frames and captures ------------------------------------------------------

class CsiFrame(NamedTuple):
    timestamp: float
    samples: np.ndarray


class Label(NamedTuple):
    time: float
    range: float
    velocity: float
    state: PresenceState


@dataclass(frozen=True, eq=False)
class CsiCapture:
    """Time-ordered CSI matrix ``data[m, n]`` plus sampling metadata.

    ``data`` is stored as one read-only 2-D array; ``frames`` gives the
    per-frame view.
    """

    config: SensingConfig
    timestamps: np.ndarray
    data: np.ndarray
    labels: tuple[Label, ...] = field(default=())

    def __post_init__(self):
        ts = np.array(self.timestamps, dtype=float)
        data = np.array(self.data, dtype=np.result_type(self.data, np.complex64))
        if data.ndim != 2:
            raise CaptureError("data must be a 2-D (frames x subcarriers) array")
        if data.shape[1] != self.config.num_subcarriers:
            raise CaptureError(
                f"frames have {data.shape[1]} samples, config expects {self.config.num_subcarriers}")
        if ts.shape != (data.shape[0],):
            raise CaptureError("one timestamp per frame required")
        if ts.size and ts[0] < 0:
            raise CaptureError("timestamps must be non-negative")
        if ts.size > 1:
            steps = np.diff(ts)
            if np.any(np.abs(steps - self.config.frame_interval) > 0.01 * self.config.frame_interval):
                raise CaptureError("frame spacing deviates from frame_interval by more than 1%")
        ts.setflags(write=False)
        data.setflags(write=False)
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "labels", tuple(Label(*lab) for lab in self.labels))

    def __len__(self) -> int:
        return self.data.shape[0]

    @property
    def frames(self) -> Sequence[CsiFrame]:
        return [CsiFrame(float(t), row) for t, row in zip(self.timestamps, self.data)]

    @property
    def duration(self) -> float:
        return len(self) * self.config.frame_interval

    def with_data(self, data: np.ndarray) -> "CsiCapture":
        return CsiCapture(self.config, self.timestamps, data, self.labels)

    def decimate(self, factor: int, config: SensingConfig | None = None) -> "CsiCapture":
        """Keep every ``factor``-th frame (and the labels of kept frames)."""
        cfg = config or self.config.replace(frame_interval=self.config.frame_interval * factor)
        labels = self.labels[::factor] if len(self.labels) == len(self) else self.labels
        return CsiCapture(cfg, self.timestamps[::factor], self.data[::factor], labels)

    @classmethod
    def from_frames(cls, config, frames: Sequence[CsiFrame], labels=()) -> "CsiCapture":
        ts = [f.timestamp for f in frames]
        data = np.stack([np.asarray(f.samples) for f in frames]) if frames else \
            np.zeros((0, config.num_subcarriers), dtype=complex)
        return cls(config, ts, data, labels)
