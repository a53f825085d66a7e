"""Synthetic CSI generation from declarative scenes.

Each target contributes ``a * exp(j*doppler_phase(m)) * exp(-j*2*pi*n*df*tau(m))``
to frame ``m`` and subcarrier ``n``. The Doppler phase is the time integral
of ``2*pi*f_D``, i.e. ``4*pi*f_c*(R(t) - R(0))/c``, which equals
``2*pi*T*m*f_D`` for a constant velocity and stays continuous when the
velocity changes at a waypoint.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    SPEED_OF_LIGHT,
    CsiCapture,
    Label,
    PresenceState,
    SensingConfig,
)
from .kv import KVSyntaxError, format_kv, parse_float_list, parse_kv

BREATH_AMPLITUDE = 0.005  # m
BREATH_RATE = 0.25  # Hz

_CHUNK = 512  # frames per synthesis block


class SceneError(ValueError):
    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}" if lineno else message)


@dataclass(frozen=True)
class TargetTrack:
    waypoints: tuple[tuple[float, float], ...]
    amplitude: float = 1.0
    micro_motion: tuple[float, float] | None = None  # (amplitude m, rate Hz)

    def __post_init__(self):
        wps = tuple((float(t), float(r)) for t, r in self.waypoints)
        if not wps:
            raise SceneError("target needs at least one waypoint")
        times = [t for t, _ in wps]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise SceneError("waypoint times must be strictly increasing")
        if any(r < 0 for _, r in wps):
            raise SceneError("waypoint ranges must be >= 0")
        if self.micro_motion is not None:
            amp, rate = (float(x) for x in self.micro_motion)
            if amp < 0 or rate < 0:
                raise SceneError("micro-motion amplitude and rate must be >= 0")
            object.__setattr__(self, "micro_motion", (amp, rate))
        object.__setattr__(self, "waypoints", wps)

    @classmethod
    def static(cls, range_m, amplitude=1.0, micro_motion=None, until=1e6):
        return cls(((0.0, range_m), (until, range_m)), amplitude, micro_motion)

    @classmethod
    def constant_velocity(cls, start_range, velocity, duration, amplitude=1.0):
        return cls(((0.0, start_range), (duration, start_range + velocity * duration)), amplitude)

    def covers(self, t0: float, t1: float) -> bool:
        if len(self.waypoints) == 1:
            return False
        return self.waypoints[0][0] <= t0 and self.waypoints[-1][0] >= t1

    def base_range(self, t) -> np.ndarray:
        times, ranges = np.array(self.waypoints).T
        return np.interp(t, times, ranges)

    def velocity(self, t) -> np.ndarray:
        """Segment slope (range rate); right-continuous at waypoints."""
        times, ranges = np.array(self.waypoints).T
        slopes = np.diff(ranges) / np.diff(times)
        idx = np.clip(np.searchsorted(times, t, side="right") - 1, 0, len(slopes) - 1)
        return slopes[idx]

    def range(self, t) -> np.ndarray:
        r = self.base_range(t)
        if self.micro_motion is not None:
            amp, rate = self.micro_motion
            r = r + amp * np.sin(2 * np.pi * rate * np.asarray(t))
        return r


@dataclass(frozen=True)
class SceneSpec:
    targets: tuple[TargetTrack, ...] = ()
    si_amplitude: float = 0.0
    noise_power: float = 0.0
    delay_offset_samples: float = 0.0
    delay_drift: float = 0.0  # capture timing drift, samples per second
    phase_walk_std: float = 0.0
    # Slow random-walk phase of the self-interference path only (rad per
    # sqrt(second)); models coupling drift. 0 keeps the SI strictly static.
    si_phase_drift: float = 0.0
    # Round-trip range of the self-interference path (m); coupling inside
    # the device sits a little off the zero-delay bin.
    si_range: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        if self.noise_power < 0:
            raise SceneError("noise_power must be >= 0")
        if self.si_amplitude < 0:
            raise SceneError("si_amplitude must be >= 0")
        if self.si_range < 0:
            raise SceneError("si_range must be >= 0")
        if self.phase_walk_std < 0 or self.si_phase_drift < 0:
            raise SceneError("impairment standard deviations must be >= 0")

    # -- text form ---------------------------------------------------------

    def to_text(self) -> str:
        head = {
            "si_amplitude": float(self.si_amplitude),
            "noise_power": float(self.noise_power),
            "delay_offset_samples": float(self.delay_offset_samples),
            "delay_drift": float(self.delay_drift),
            "phase_walk_std": float(self.phase_walk_std),
            "si_phase_drift": float(self.si_phase_drift),
            "si_range": float(self.si_range),
        }
        parts = [format_kv(head)]
        for tgt in self.targets:
            items = {
                "amplitude": float(tgt.amplitude),
                "waypoints": ", ".join(f"{t!r}:{r!r}" for t, r in tgt.waypoints),
            }
            if tgt.micro_motion is not None:
                items["micro_motion"] = list(tgt.micro_motion)
            parts.append(format_kv(items, section="target"))
        return "\n".join(parts)

    @classmethod
    def from_text(cls, text: str) -> "SceneSpec":
        try:
            sections = parse_kv(text)
        except KVSyntaxError as exc:
            raise SceneError(str(exc).split(": ", 1)[1], exc.lineno) from None
        head, blocks = sections[0], sections[1:]
        known = {"si_amplitude", "noise_power", "delay_offset_samples", "delay_drift",
                 "phase_walk_std",
                 "si_phase_drift", "si_range"}
        kwargs = {}
        for key, (value, lineno) in head.items.items():
            if key not in known:
                raise SceneError(f"unknown scene key {key!r}", lineno)
            kwargs[key] = _float(value, lineno)
        targets = []
        for block in blocks:
            if block.name != "target":
                raise SceneError(f"unknown section [{block.name}]", block.lineno)
            targets.append(_parse_target(block))
        try:
            return cls(tuple(targets), **kwargs)
        except SceneError as exc:
            raise SceneError(str(exc), head.lineno) from None

    @classmethod
    def load(cls, path) -> "SceneSpec":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")


def _float(text, lineno):
    try:
        return float(text)
    except ValueError:
        raise SceneError(f"expected a number, got {text!r}", lineno) from None


def _parse_target(block) -> TargetTrack:
    allowed = {"amplitude", "waypoints", "micro_motion"}
    for key, (_, lineno) in block.items.items():
        if key not in allowed:
            raise SceneError(f"unknown target key {key!r}", lineno)
    if "waypoints" not in block.items:
        raise SceneError("target block without waypoints", block.lineno)
    text, lineno = block.items["waypoints"]
    waypoints = []
    for item in text.split(","):
        if not item.strip():
            continue
        if ":" not in item:
            raise SceneError(f"waypoint {item.strip()!r} is not 'time:range'", lineno)
        t, r = item.split(":", 1)
        waypoints.append((_float(t, lineno), _float(r, lineno)))
    amplitude = _float(block.get("amplitude", "1.0"), block.line_of("amplitude"))
    micro = None
    if "micro_motion" in block.items:
        mtext, mline = block.items["micro_motion"]
        try:
            micro = tuple(parse_float_list(mtext))
        except ValueError:
            raise SceneError(f"bad micro_motion {mtext!r}", mline) from None
        if len(micro) != 2:
            raise SceneError("micro_motion needs 'amplitude, rate'", mline)
    try:
        return TargetTrack(tuple(waypoints), amplitude, micro)
    except SceneError as exc:
        raise SceneError(str(exc), lineno) from None


# -- ground truth ------------------------------------------------------------

def zone_state(range_m: float, velocity: float, config: SensingConfig,
               previous: PresenceState | None = None,
               hold_below: float = 0.0) -> PresenceState:
    """Presence state of a reflector at ``range_m`` moving at ``velocity``.

    The near zone is closed at ``zone_near_max`` and the approach zone at
    ``zone_approach_max``. Inside the approach zone negative range rate
    means approaching; speeds up to ``hold_below`` keep the previous
    transitional label (approaching if there is none).
    """
    if not math.isfinite(range_m) or range_m > config.zone_approach_max:
        return PresenceState.ABSENT
    if range_m <= config.zone_near_max:
        return PresenceState.PRESENT
    if abs(velocity) <= hold_below:
        return previous if previous is not None and previous.transitional \
            else PresenceState.APPROACHING
    return PresenceState.APPROACHING if velocity < 0 else PresenceState.LEAVING


def trajectory_labels(scene: SceneSpec, config: SensingConfig, times) -> tuple[Label, ...]:
    """Per-frame truth for the nearest target (NaN range when the scene is empty)."""
    times = np.asarray(times, dtype=float)
    if not scene.targets:
        return tuple(Label(float(t), math.nan, 0.0, PresenceState.ABSENT) for t in times)
    ranges = np.stack([tgt.base_range(times) for tgt in scene.targets])
    vels = np.stack([tgt.velocity(times) for tgt in scene.targets])
    nearest = np.argmin(ranges, axis=0)
    cols = np.arange(times.size)
    r_near, v_near = ranges[nearest, cols], vels[nearest, cols]
    labels = []
    previous = None
    for t, r, v in zip(times, r_near, v_near):
        state = zone_state(float(r), float(v), config, previous)
        if state.transitional:
            previous = state
        labels.append(Label(float(t), float(r), float(v), state))
    return tuple(labels)


# -- synthesis ---------------------------------------------------------------

def generate_capture(scene: SceneSpec, config: SensingConfig, duration: float,
                     seed: int = 0) -> CsiCapture:
    """Synthesize a capture of ``duration`` seconds. Deterministic in ``seed``."""
    num_frames = int(round(duration / config.frame_interval))
    if num_frames < config.doppler_frames:
        raise SceneError(
            f"duration {duration} s gives {num_frames} frames, fewer than doppler_frames")
    times = np.arange(num_frames) * config.frame_interval
    for idx, tgt in enumerate(scene.targets):
        if not tgt.covers(0.0, times[-1]):
            raise SceneError(f"target {idx} waypoints do not cover 0..{times[-1]:.3f} s")

    noise_rng, walk_rng, drift_rng = (
        np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3))
    n = np.arange(config.num_subcarriers)
    data = np.zeros((num_frames, config.num_subcarriers), dtype=complex)
    for tgt in scene.targets:
        r = tgt.range(times)
        tau = 2 * r / SPEED_OF_LIGHT
        doppler_phase = 4 * np.pi * config.carrier_frequency * (r - r[0]) / SPEED_OF_LIGHT
        for lo in range(0, num_frames, _CHUNK):
            hi = min(lo + _CHUNK, num_frames)
            ramp = np.exp(-2j * np.pi * config.subcarrier_spacing * np.outer(tau[lo:hi], n))
            data[lo:hi] += tgt.amplitude * np.exp(1j * doppler_phase[lo:hi])[:, None] * ramp
    if scene.si_amplitude > 0:
        si = np.full(num_frames, scene.si_amplitude, dtype=complex)
        if scene.si_phase_drift > 0:
            steps = drift_rng.normal(0.0, scene.si_phase_drift * math.sqrt(config.frame_interval),
                                     num_frames)
            steps[0] = 0.0
            si = si * np.exp(1j * np.cumsum(steps))
        si_ramp = np.exp(-2j * np.pi * config.subcarrier_spacing * n
                         * 2 * scene.si_range / SPEED_OF_LIGHT)
        data += si[:, None] * si_ramp[None, :]
    if scene.noise_power > 0:
        scale = math.sqrt(scene.noise_power / 2)
        data += scale * (noise_rng.standard_normal(data.shape)
                         + 1j * noise_rng.standard_normal(data.shape))
    capture = CsiCapture(config, times, data, trajectory_labels(scene, config, times))
    if scene.delay_offset_samples or scene.delay_drift or scene.phase_walk_std:
        capture = apply_impairments(capture, scene.delay_offset_samples,
                                    scene.phase_walk_std, walk_rng, scene.delay_drift)
    return capture


def apply_impairments(capture: CsiCapture, delay_offset_samples: float = 0.0,
                      phase_walk_std: float = 0.0, seed=0,
                      delay_drift: float = 0.0) -> CsiCapture:
    """Apply a capture delay offset (plus linear drift) and a cumulative phase walk.

    Frame ``m`` is delayed by ``delay_offset_samples + delay_drift * t_m``
    samples, i.e. multiplied by the ramp ``exp(-j*2*pi*n*d/N)`` across
    subcarriers. ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    n_sub = capture.config.num_subcarriers
    data = np.array(capture.data, dtype=complex)
    if delay_offset_samples or delay_drift:
        delays = delay_offset_samples + delay_drift * (capture.timestamps - capture.timestamps[0])
        n = np.arange(n_sub)
        for lo in range(0, len(capture), _CHUNK):
            hi = lo + _CHUNK
            data[lo:hi] *= np.exp(-2j * np.pi * np.outer(delays[lo:hi], n) / n_sub)
    if phase_walk_std:
        rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
        walk = np.cumsum(rng.normal(0.0, phase_walk_std, len(capture)))
        data *= np.exp(1j * walk)[:, None]
    return capture.with_data(data)


def builtin_scene(name: str) -> SceneSpec:
    """One of the scene files shipped with the package (``approach_leave``, ...)."""
    from importlib import resources

    path = resources.files("wifi_hpd") / "scenes" / f"{name}.txt"
    if not path.is_file():
        raise SceneError(f"no built-in scene {name!r}")
    return SceneSpec.from_text(path.read_text(encoding="utf-8"))
