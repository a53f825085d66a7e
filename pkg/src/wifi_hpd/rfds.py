"""Range-filtered Doppler spectrum processing.

Per range gate: matched-filter extraction of a slow-time series from the
CSI frames, MTI high-pass filtering of that series, then a short Doppler
FFT over the latest ``M`` filtered samples. Successive spectra of one gate
stack into a time-Doppler map.
"""
from __future__ import annotations

import csv
import threading
from collections import Counter, deque
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .core import (
    SPEED_OF_LIGHT,
    CsiCapture,
    SensingConfig,
    doppler_velocity_axis,
    to_db,
)
from .sync import Synchronizer


class OpCounter:
    """Thread-safe tally of complex multiplies per processing stage."""

    def __init__(self):
        self._counts = Counter()
        self._lock = threading.Lock()

    def add(self, stage: str, count: int) -> None:
        with self._lock:
            self._counts[stage] += int(count)

    def merge(self, other: "OpCounter") -> None:
        for stage, count in other.snapshot().items():
            self.add(stage, count)

    def snapshot(self) -> dict[str, int]:
        with self._lock:
            return dict(self._counts)

    def __getitem__(self, stage: str) -> int:
        with self._lock:
            return self._counts[stage]

    @property
    def total(self) -> int:
        with self._lock:
            return sum(self._counts.values())


def fft_multiplies(n: int) -> int:
    """Radix-2 model: (n/2)*log2(n) complex multiplies."""
    return int(round(n / 2 * np.log2(n))) if n > 1 else 0


def window(name: str, length: int) -> np.ndarray:
    if name == "rect":
        return np.ones(length)
    if name == "hann":
        return np.hanning(length)
    raise ValueError(f"unknown window {name!r}")


# -- MTI filter --------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MtiFilter:
    coefficients: np.ndarray
    cutoff: float

    @property
    def taps(self) -> int:
        return self.coefficients.size


def design_mti(taps: int, cutoff: float) -> MtiFilter:
    """High-pass FIR by spectral inversion of a Hann-windowed-sinc low-pass.

    Spectral inversion needs an integer centre tap, so for an even ``taps``
    the inversion is done on ``taps - 1`` coefficients and a trailing zero
    tap keeps the requested length (and the per-frame multiply count).
    """
    if taps < 2:
        raise ValueError("taps must be >= 2")
    if not 0 < cutoff < 0.5:
        raise ValueError("cutoff must lie in (0, 0.5) cycles/frame")
    length = taps if taps % 2 else taps - 1
    k = np.arange(length) - (length - 1) / 2
    lowpass = 2 * cutoff * np.sinc(2 * cutoff * k) * np.hanning(length + 2)[1:-1]
    lowpass /= lowpass.sum()
    highpass = -lowpass
    highpass[(length - 1) // 2] += 1.0
    coeffs = np.zeros(taps)
    coeffs[:length] = highpass
    coeffs[(length - 1) // 2] -= coeffs.sum()  # exact DC null after rounding
    coeffs.setflags(write=False)
    return MtiFilter(coeffs, float(cutoff))


def frequency_response(mti: MtiFilter, omega) -> np.ndarray:
    """``H(w) = sum_k b_k exp(-j*w*k)`` for normalized angular frequency ``w`` (rad/frame)."""
    omega = np.asarray(omega, dtype=float)
    k = np.arange(mti.taps)
    return np.exp(-1j * np.multiply.outer(omega, k)) @ mti.coefficients


# -- gate extraction -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GateSeries:
    gate_index: int
    gate_range: float
    samples: np.ndarray
    warmup: int = 0  # leading samples not yet valid (filter transient)

    @property
    def valid(self) -> np.ndarray:
        return self.samples[self.warmup:]


def gate_steering(config: SensingConfig, ranges: Sequence[float] | None = None,
                  window_name: str | None = None) -> np.ndarray:
    """Matched-filter weights, shape (N, gates).

    Column ``i`` is ``w(n) * exp(+j*2*pi*n*df*2*R_i/c)``, the conjugate of
    the per-subcarrier phase a reflector at ``R_i`` imprints, so that its
    contributions add in phase. For grid ranges ``k*c/(2*N*df)`` this is
    ``N`` times bin ``k`` of the inverse DFT.
    """
    ranges = config.gate_ranges if ranges is None else ranges
    n = np.arange(config.num_subcarriers)
    w = window(window_name or config.range_window, config.num_subcarriers)
    phase = 2 * np.pi * config.subcarrier_spacing * np.outer(n, 2 * np.asarray(ranges)) / SPEED_OF_LIGHT
    return np.exp(1j * phase) * w[:, None]


def extract_gates(data: np.ndarray, config: SensingConfig, ranges=None,
                  window_name: str | None = None, counter: OpCounter | None = None) -> np.ndarray:
    """Slow-time series for every gate, shape (frames, gates)."""
    steer = gate_steering(config, ranges, window_name)
    data = np.atleast_2d(data)
    if counter is not None:
        counter.add("gate_extraction", data.shape[0] * steer.shape[0] * steer.shape[1])
    return data @ steer


def extract_gate(frames, gate_range: float, config: SensingConfig, window_name: str | None = None,
                 gate_index: int = 0, counter: OpCounter | None = None) -> GateSeries:
    """Phase-compensated summation across subcarriers for one gate."""
    data = frames.data if isinstance(frames, CsiCapture) else np.stack(
        [np.asarray(getattr(f, "samples", f)) for f in frames])
    s = extract_gates(data, config, [gate_range], window_name, counter)[:, 0]
    return GateSeries(gate_index, float(gate_range), s)


# -- clutter suppression -------------------------------------------------------

def apply_mti(series: GateSeries, mti: MtiFilter, counter: OpCounter | None = None) -> GateSeries:
    """Direct-form FIR per gate; the first ``taps - 1`` outputs are warm-up."""
    x = series.samples
    y = np.convolve(x, mti.coefficients)[: x.size]
    if counter is not None:
        counter.add("mti", x.size * mti.taps)
    return replace(series, samples=y, warmup=series.warmup + mti.taps - 1)


def dc_removal(frames, block: int) -> np.ndarray:
    """Subtract the per-subcarrier slow-time mean of each ``block``-frame block.

    A trailing partial block has its own mean removed.
    """
    data = frames.data if isinstance(frames, CsiCapture) else np.asarray(frames)
    if data.shape[0] < block:
        raise ValueError(f"need at least {block} frames, got {data.shape[0]}")
    out = np.array(data, dtype=complex)
    for lo in range(0, out.shape[0], block):
        seg = out[lo:lo + block]
        seg -= seg.mean(axis=0, keepdims=True)
    return out


# -- Doppler -------------------------------------------------------------------

def doppler_power(x: np.ndarray, window_name: str = "rect") -> np.ndarray:
    """Centred linear power spectrum ``|FFT(x*w)|^2 / M`` along axis 0.

    The ``1/M`` scaling makes the bin powers sum to the windowed slow-time
    energy.
    """
    m = x.shape[0]
    w = window(window_name, m)
    xw = x * (w if x.ndim == 1 else w[:, None])
    spec = np.fft.fftshift(np.fft.fft(xw, axis=0), axes=0)
    return np.abs(spec) ** 2 / m


def doppler_spectrum(series: GateSeries | np.ndarray, m: int, window_name: str = "rect",
                     counter: OpCounter | None = None) -> np.ndarray:
    """Power spectrum in dB of the latest ``m`` valid samples; zero Doppler at bin ``m//2``."""
    x = series.valid if isinstance(series, GateSeries) else np.asarray(series)
    if x.size < m:
        raise ValueError(f"need {m} valid samples, have {x.size}")
    if counter is not None:
        counter.add("doppler", fft_multiplies(m))
    return to_db(doppler_power(x[-m:], window_name))


@dataclass(frozen=True, eq=False)
class TimeDopplerMap:
    gate_index: int
    velocity_axis: np.ndarray
    capacity: int
    times: tuple[float, ...] = ()
    rows: tuple[np.ndarray, ...] = ()

    @classmethod
    def empty(cls, gate_index: int, config: SensingConfig, capacity: int | None = None):
        return cls(gate_index, doppler_velocity_axis(config), capacity or config.snr_window)

    @property
    def spectra(self) -> np.ndarray:
        return np.array(self.rows) if self.rows else np.empty((0, self.velocity_axis.size))

    def __len__(self):
        return len(self.rows)


def update_time_doppler(tdm: TimeDopplerMap, spectrum: np.ndarray, time: float) -> TimeDopplerMap:
    """Append one spectrum (dB), evicting the oldest row beyond capacity."""
    spectrum = np.asarray(spectrum, dtype=float)
    if spectrum.shape != tdm.velocity_axis.shape:
        raise ValueError(f"spectrum has {spectrum.size} bins, map expects {tdm.velocity_axis.size}")
    rows = (tdm.rows + (spectrum,))[-tdm.capacity:]
    times = (tdm.times + (float(time),))[-tdm.capacity:]
    return replace(tdm, rows=rows, times=times)


def write_time_doppler_csv(path, tdm: TimeDopplerMap) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["t_w", "velocity_mps", "power_db"])
        for t, row in zip(tdm.times, tdm.rows):
            for v, p in zip(tdm.velocity_axis, row):
                out.writerow([f"{t:.6f}", f"{v:.6f}", f"{p:.4f}"])


# -- streaming chain -------------------------------------------------------------

@dataclass
class ChainWindow:
    time: float
    power: np.ndarray  # (gates, M) linear, centred
    maps: list[TimeDopplerMap]

    @property
    def power_db(self) -> np.ndarray:
        return to_db(self.power)


@dataclass
class RfdsChain:
    """Frame-by-frame RF-DS front end for all gates of one configuration.

    ``clutter`` selects ``"mti"`` (FIR per gate), ``"dc"`` (mean of each
    Doppler window removed, which equals per-subcarrier DC removal over
    that window because gate extraction is linear) or ``"none"``.
    """

    config: SensingConfig
    clutter: str = "mti"
    sync: bool = True
    counter: OpCounter = field(default_factory=OpCounter)
    reference_symbol: np.ndarray | None = None
    freeze_delay: bool = False

    def __post_init__(self):
        if self.clutter not in ("mti", "dc", "none"):
            raise ValueError(f"unknown clutter mode {self.clutter!r}")
        cfg = self.config
        self.mti = design_mti(cfg.fir_taps, cfg.fir_cutoff)
        self._steer = gate_steering(cfg)
        self._synchronizer = (Synchronizer(cfg, self.reference_symbol, self.freeze_delay)
                              if self.sync else None)
        taps = self.mti.taps if self.clutter == "mti" else 1
        self._fir_state = np.zeros((taps, cfg.num_range_gates), dtype=complex)
        self._coeffs = self.mti.coefficients[::-1][:, None]
        self._consumed = 0
        self._buffer: deque = deque(maxlen=cfg.doppler_frames)
        self._since_last = 0
        self._dwin = window(cfg.doppler_window, cfg.doppler_frames)
        self.maps = [TimeDopplerMap.empty(i, cfg) for i in range(cfg.num_range_gates)]
        self.windows = 0

    @property
    def warmup_frames(self) -> int:
        return (self.mti.taps - 1 if self.clutter == "mti" else 0) + self.config.doppler_frames

    def push(self, samples: np.ndarray, timestamp: float) -> ChainWindow | None:
        cfg = self.config
        if self._synchronizer is not None:
            samples = self._synchronizer(samples)
        gates = samples @ self._steer
        self.counter.add("gate_extraction", self._steer.size)
        self._consumed += 1
        if self.clutter == "mti":
            self._fir_state = np.roll(self._fir_state, -1, axis=0)
            self._fir_state[-1] = gates
            self.counter.add("mti", self._fir_state.size)
            if self._consumed < self.mti.taps:
                return None
            gates = (self._fir_state * self._coeffs).sum(axis=0)
        self._buffer.append((timestamp, gates))
        self._since_last += 1
        if len(self._buffer) < cfg.doppler_frames or (
                self.windows and self._since_last < cfg.doppler_hop):
            return None
        self._since_last = 0
        block = np.array([g for _, g in self._buffer])
        if self.clutter == "dc":
            block = block - block.mean(axis=0, keepdims=True)
        spec = np.fft.fftshift(np.fft.fft(block * self._dwin[:, None], axis=0), axes=0)
        self.counter.add("doppler", cfg.num_range_gates * fft_multiplies(cfg.doppler_frames))
        power = (np.abs(spec) ** 2 / cfg.doppler_frames).T
        db = to_db(power)
        self.maps = [update_time_doppler(tdm, row, timestamp) for tdm, row in zip(self.maps, db)]
        self.windows += 1
        return ChainWindow(timestamp, power, self.maps)

    def run(self, capture: CsiCapture) -> list[ChainWindow]:
        out = []
        for t, row in zip(capture.timestamps, capture.data):
            win = self.push(row, float(t))
            if win is not None:
                out.append(win)
        return out
