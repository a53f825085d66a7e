"""Presence decisions: noise floor, SNR, gate selection, zones, voting and rate control."""
from __future__ import annotations

import csv
import io
import math
import warnings
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import (
    CsiCapture,
    PresenceState,
    SensingConfig,
    SensingMode,
    doppler_velocity_axis,
    preset,
    to_db,
    velocity_resolution,
)
from .rfds import ChainWindow, OpCounter, RfdsChain, TimeDopplerMap
from .synth import zone_state

IDLE_DECIMATION = 10
GUARD_GATES = 1  # neighbours of a detection kept out of the noise history
RELEASE_FRACTION = 0.5  # a held gate rejoins the noise history below this share of T_SNR


class StreamError(ValueError):
    pass


# -- SNR -----------------------------------------------------------------------

def noise_floor(history: Sequence[float], clip_margin: float) -> float:
    """Clipped mean of per-window peak powers (dB).

    Values above ``mean + clip_margin`` are clipped to that bound before the
    final mean, which limits how much a strong transient can lift the floor.
    """
    values = np.asarray(history, dtype=float)
    if values.size == 0:
        raise ValueError("empty power history")
    raw = values.mean()
    return float(np.minimum(values, raw + clip_margin).mean())


@dataclass(frozen=True)
class WindowSnr:
    snr: np.ndarray  # per gate, dB
    peak_power: np.ndarray  # peak of the W_det-averaged spectrum, dB
    peak_bin: np.ndarray  # index of that peak
    averaged: np.ndarray  # (gates, M) linear power
    window_peak: np.ndarray  # peak of the newest spectrum per gate, dB


def window_snr(maps: Sequence[TimeDopplerMap], histories: Sequence[Sequence[float]],
               config: SensingConfig) -> WindowSnr:
    """Per-gate SNR of the W_det-averaged spectrum against each gate's noise floor.

    A gate with an empty history reports 0 dB. Histories shorter than M_W
    use their plain running mean (cold start).
    """
    w_det = config.detection_window
    averaged = np.array([np.mean(10 ** (tdm.spectra[-w_det:] / 10), axis=0) for tdm in maps])
    peak_bin = np.argmax(averaged, axis=1)
    peak_power = to_db(averaged[np.arange(len(maps)), peak_bin])
    window_peak = np.array([tdm.rows[-1].max() for tdm in maps])
    snr = np.zeros(len(maps))
    for i, hist in enumerate(histories):
        if len(hist) >= config.snr_window:
            snr[i] = peak_power[i] - noise_floor(list(hist)[-config.snr_window:], config.clip_margin)
        elif len(hist):
            snr[i] = peak_power[i] - float(np.mean(hist))
    return WindowSnr(snr, peak_power, peak_bin, averaged, window_peak)


def select_gate(snr: Sequence[float]) -> int:
    """Index of the highest SNR; ties go to the nearer (lower) gate."""
    return int(np.argmax(np.asarray(snr, dtype=float)))


def interpolate_range(m_minus: float | None, m_0: float, m_plus: float | None,
                      center: float, pitch: float) -> float:
    """Parabolic-vertex refinement of the winning gate's range.

    Without both neighbours (edge gate) the gate centre is returned.
    """
    if m_minus is None or m_plus is None:
        return float(center)
    curvature = m_minus - 2 * m_0 + m_plus
    if curvature == 0:
        return float(center)
    p = (m_minus - m_plus) / (2 * curvature)
    p = min(0.5, max(-0.5, p))
    return float(max(0.0, center + p * pitch))


def classify(snr: float, range_m: float, velocity: float, config: SensingConfig,
             previous: PresenceState | None = None) -> PresenceState:
    """Zone and SNR rule. ``previous`` is the last transitional label, held for slow targets."""
    if not snr > config.snr_threshold:
        return PresenceState.ABSENT
    return zone_state(abs(range_m), velocity, config, previous,
                      hold_below=velocity_resolution(config))


def majority_vote(buffer: Sequence[PresenceState], size: int | None = None) -> PresenceState:
    """Modal state of the buffer (padded at the front with ABSENT up to ``size``).

    Approaching and leaving count as one transitional class; a winning
    transitional class resolves to its most recent member. Ties between
    classes go to the class seen most recently.
    """
    states = list(buffer)
    if size is not None and len(states) < size:
        states = [PresenceState.ABSENT] * (size - len(states)) + states
    if not states:
        return PresenceState.ABSENT

    def cls(s):
        return "transitional" if s.transitional else s.name

    counts: dict[str, int] = {}
    for s in states:
        counts[cls(s)] = counts.get(cls(s), 0) + 1
    best = max(counts.values())
    tied = {c for c, n in counts.items() if n == best}
    for s in reversed(states):
        if cls(s) in tied:
            return s
    raise AssertionError("unreachable")


# -- detector state and rate controller ------------------------------------------

@dataclass
class DetectorState:
    config: SensingConfig
    histories: list = field(default_factory=list)
    votes: deque = field(default_factory=deque)
    consecutive_miss: int = 0
    consecutive_hit: int = 0
    mode: SensingMode = SensingMode.DETECTION
    last_transitional: PresenceState | None = None
    held: np.ndarray | None = None  # gates whose history is frozen by a detection

    def __post_init__(self):
        cfg = self.config
        if not self.histories:
            self.histories = [deque(maxlen=cfg.snr_window) for _ in range(cfg.num_range_gates)]
        if self.held is None:
            self.held = np.zeros(cfg.num_range_gates, dtype=bool)
        self.votes = deque(self.votes, maxlen=cfg.majority_window)

    @property
    def warm(self) -> bool:
        return all(len(h) >= self.config.snr_window for h in self.histories)


def guard_mask(hot: np.ndarray, guard: int = GUARD_GATES) -> np.ndarray:
    """``hot`` dilated by ``guard`` gates on each side."""
    hot = np.asarray(hot, dtype=bool)
    out = hot.copy()
    for k in range(1, guard + 1):
        out[k:] |= hot[:-k]
        out[:-k] |= hot[k:]
    return out


def reseed_hot_gates(state: DetectorState) -> list[int]:
    """Replace the cold-start history of gates that held a target during bootstrap.

    After MTI the per-gate noise is statistically identical across gates,
    so a gate whose floor sits more than ``snr_threshold`` above the
    cross-gate median learned a target, not noise. Its history, and that of
    its guard neighbours, is replaced by the median gate's history. Returns
    the reseeded gate indices.
    """
    cfg = state.config
    floors = np.array([noise_floor(list(h), cfg.clip_margin) for h in state.histories])
    ref = int(np.argsort(floors, kind="stable")[(len(floors) - 1) // 2])
    hot = [i for i in np.flatnonzero(guard_mask(floors - floors[ref] > cfg.snr_threshold))
           if i != ref]
    for i in hot:
        state.histories[i] = deque(state.histories[ref], maxlen=cfg.snr_window)
    return hot


def mode_step(state: DetectorState, decision: PresenceState, motion: bool = False,
              can_idle: bool = True) -> SensingMode:
    """Advance the Idle/Detection controller by one decision and return the new mode.

    Detection drops to Idle after ``detection_to_idle_misses`` consecutive
    ABSENT decisions; Idle returns to Detection after
    ``idle_to_detection_hits`` consecutive non-ABSENT decisions. ``motion``
    (an above-threshold gate outside the presence zones) counts as a
    detection for both counters. ``can_idle=False`` postpones the drop to
    Idle until allowed.
    """
    cfg = state.config
    negative = decision == PresenceState.ABSENT and not motion
    if state.mode == SensingMode.DETECTION:
        state.consecutive_miss = state.consecutive_miss + 1 if negative else 0
        if state.consecutive_miss >= cfg.detection_to_idle_misses and can_idle:
            state.mode = SensingMode.IDLE
            state.consecutive_miss = 0
            state.consecutive_hit = 0
    else:
        state.consecutive_hit = 0 if negative else state.consecutive_hit + 1
        if state.consecutive_hit >= cfg.idle_to_detection_hits:
            state.mode = SensingMode.DETECTION
            state.consecutive_hit = 0
            state.consecutive_miss = 0
    return state.mode


# -- decisions -------------------------------------------------------------------

@dataclass(frozen=True)
class GateDetection:
    time: float
    gate_index: int
    snr: float
    range: float
    velocity: float
    power: float


@dataclass(frozen=True)
class TimelineRow:
    time: float
    mode: SensingMode
    state: PresenceState
    range: float
    velocity: float
    snr: float


@dataclass
class PresenceTimeline:
    rows: list[TimelineRow] = field(default_factory=list)
    ready_time: float | None = None  # first epoch with a full noise history
    counter: OpCounter = field(default_factory=OpCounter)
    detections: list[GateDetection] = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def states_at(self, times: Iterable[float]) -> list[PresenceState]:
        """Decision in force at each time (ABSENT before the first row)."""
        row_times = np.array([r.time for r in self.rows])
        idx = np.searchsorted(row_times, np.asarray(list(times)), side="right") - 1
        return [self.rows[i].state if i >= 0 else PresenceState.ABSENT for i in idx]

    def to_csv(self, three_state: bool = False) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\n")
        out.writerow(["time_s", "mode", "state", "range_m", "velocity_mps", "snr_db"])
        for r in self.rows:
            state = r.state.three_class_label if three_state else r.state.label
            out.writerow([f"{r.time:.4f}", r.mode.value, state, f"{r.range:.4f}",
                          f"{r.velocity:.4f}", f"{r.snr:.3f}"])
        return buf.getvalue()

    def write_csv(self, path, three_state: bool = False) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv(three_state))


class PresenceDetector:
    """Turns RF-DS windows into voted presence decisions and drives the mode controller."""

    def __init__(self, config: SensingConfig):
        self.config = config
        self.state = DetectorState(config)

    def detect(self, window: ChainWindow, config: SensingConfig) -> tuple[GateDetection, WindowSnr]:
        ws = window_snr(window.maps, self.state.histories, self.config)
        best = select_gate(ws.snr)
        b = ws.peak_bin[best]
        mags = np.sqrt(ws.averaged[:, b])
        gates = config.gate_ranges
        pitch = gates[1] - gates[0] if len(gates) > 1 else 0.0
        if 0 < best < len(gates) - 1:
            pitch = (gates[best + 1] - gates[best - 1]) / 2
            r_hat = interpolate_range(mags[best - 1], mags[best], mags[best + 1], gates[best], pitch)
        else:
            r_hat = interpolate_range(None, mags[best], None, gates[best], pitch)
        velocity = float(doppler_velocity_axis(config)[b])
        det = GateDetection(window.time, best, float(ws.snr[best]), r_hat, velocity,
                            float(ws.peak_power[best]))
        return det, ws

    def step(self, window: ChainWindow, config: SensingConfig, can_idle: bool = True):
        """One decision epoch. Returns ``(row, detection)``."""
        st = self.state
        warm = st.warm
        mode = st.mode
        det, ws = self.detect(window, config)
        threshold = self.config.snr_threshold
        raw = classify(det.snr, det.range, det.velocity, config, st.last_transitional) \
            if warm else PresenceState.ABSENT
        if raw.transitional:
            st.last_transitional = raw
        if warm:
            st.held = (ws.snr > threshold) | (st.held & (ws.snr >= threshold * RELEASE_FRACTION))
        guarded = guard_mask(st.held)
        for i, hist in enumerate(st.histories):
            # Gates holding a target, and their neighbours, keep their pre-detection floor.
            if not guarded[i]:
                hist.append(float(ws.window_peak[i]))
        if not warm and st.warm:
            reseed_hot_gates(st)
        st.votes.append(raw)
        voted = majority_vote(st.votes, self.config.majority_window)
        if warm:
            mode_step(st, voted, motion=det.snr > threshold, can_idle=can_idle)
        row = TimelineRow(window.time, mode, voted, det.range, det.velocity, det.snr)
        return row, det


def stream_configs(capture_config: SensingConfig, idle: SensingConfig | None = None,
                   detection: SensingConfig | None = None):
    """Detection/idle configs matching a capture's radio parameters."""
    radio = dict(num_subcarriers=capture_config.num_subcarriers,
                 subcarrier_spacing=capture_config.subcarrier_spacing,
                 carrier_frequency=capture_config.carrier_frequency)
    det = (detection or preset("detection")).replace(**radio)
    idle = (idle.replace(**radio) if idle is not None
            else det.replace(frame_interval=det.frame_interval * IDLE_DECIMATION))
    return idle, det


def process_stream(capture: CsiCapture, idle_config: SensingConfig | None = None,
                   detection_config: SensingConfig | None = None, *, clutter: str = "mti",
                   sync: bool = True, reference_symbol=None,
                   freeze_delay: bool = False) -> PresenceTimeline:
    """Run sync, RF-DS and presence detection over a detection-rate capture.

    An idle-rate chain consumes every ``idle/detection`` frame-interval
    ratio-th frame for the whole capture, since those frames are captured in
    both modes. The detection-rate chain only consumes frames while in
    Detection mode and restarts (filter and sync state cleared) on every
    Idle -> Detection switch; until it has produced ``W_det`` windows the
    idle chain keeps supplying the decisions. The noise-floor history,
    votes and mode counters are shared across both chains.
    """
    idle_cfg, det_cfg = stream_configs(capture.config, idle_config, detection_config)
    if not math.isclose(capture.config.frame_interval, det_cfg.frame_interval, rel_tol=0.01):
        warnings.warn(
            f"capture frame interval {capture.config.frame_interval} s does not match the "
            f"detection preset ({det_cfg.frame_interval} s); treating the capture rate as the "
            "detection rate", stacklevel=2)
        det_cfg = det_cfg.replace(frame_interval=capture.config.frame_interval)
        if idle_config is None:
            idle_cfg = det_cfg.replace(frame_interval=det_cfg.frame_interval * IDLE_DECIMATION)
    decimation = max(1, int(round(idle_cfg.frame_interval / det_cfg.frame_interval)))
    chain_warmup = det_cfg.fir_taps - 1 + det_cfg.doppler_frames
    if len(capture) < chain_warmup:
        raise StreamError(f"capture has {len(capture)} frames; at least {chain_warmup} needed "
                          "before the first Doppler window")

    counter = OpCounter()

    def new_chain(cfg):
        return RfdsChain(cfg, clutter=clutter, sync=sync, counter=counter,
                         reference_symbol=reference_symbol, freeze_delay=freeze_delay)

    detector = PresenceDetector(det_cfg)
    idle_chain = new_chain(idle_cfg)
    det_chain = new_chain(det_cfg)
    timeline = PresenceTimeline(counter=counter)
    for m, (t, row) in enumerate(zip(capture.timestamps, capture.data)):
        t = float(t)
        w_idle = idle_chain.push(row, t) if m % decimation == 0 else None
        w_det = None
        if detector.state.mode == SensingMode.DETECTION:
            w_det = det_chain.push(row, t)
        use_det = (detector.state.mode == SensingMode.DETECTION
                   and det_chain.windows >= det_cfg.detection_window)
        if use_det:
            window, cfg = w_det, det_cfg
        else:
            window, cfg = w_idle, idle_cfg
        if window is None:
            continue
        before = detector.state.mode
        was_warm = detector.state.warm
        out, det = detector.step(window, cfg, can_idle=idle_chain.windows >= idle_cfg.detection_window)
        if was_warm and timeline.ready_time is None:
            timeline.ready_time = out.time
        timeline.rows.append(out)
        timeline.detections.append(det)
        if before == SensingMode.IDLE and detector.state.mode == SensingMode.DETECTION:
            det_chain = new_chain(det_cfg)
    return timeline
