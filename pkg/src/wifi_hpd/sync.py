"""Delay and phase alignment of raw CSI frames."""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np

from .core import CsiCapture, CsiFrame, SensingConfig


class SyncError(ValueError):
    pass


def wrap_phase(x):
    """Wrap to (-pi, pi]."""
    y = np.mod(np.asarray(x, dtype=float) + np.pi, 2 * np.pi) - np.pi
    y = np.where(y <= -np.pi, y + 2 * np.pi, y)
    return float(y) if np.ndim(y) == 0 else y


def round_half_away(x: float) -> float:
    return math.copysign(math.floor(abs(x) + 0.5), x)


@dataclass(frozen=True)
class SyncState:
    reference_symbol: np.ndarray
    history_length: int = 8
    phase_history: tuple[float, ...] = ()
    freeze_delay: bool = False
    frozen_lag: float | None = None

    @classmethod
    def for_config(cls, config: SensingConfig, reference_symbol=None, freeze_delay=False):
        ref = (np.ones(config.num_subcarriers, dtype=complex) if reference_symbol is None
               else np.asarray(reference_symbol, dtype=complex))
        if ref.shape != (config.num_subcarriers,):
            raise SyncError("reference symbol length must equal num_subcarriers")
        return cls(ref, config.phase_history, (), freeze_delay)

    @property
    def reference_phase(self) -> float | None:
        """Circular mean of the stored frame phases (None before the first frame)."""
        if not self.phase_history:
            return None
        return wrap_phase(np.angle(np.mean(np.exp(1j * np.array(self.phase_history)))))


def _samples(frame):
    return np.asarray(frame.samples if isinstance(frame, CsiFrame) else frame)


def _correlation_spectrum(samples, reference):
    return samples * np.conj(reference)


def coarse_delay(frame, state: SyncState) -> int:
    """Integer lag maximizing the circular cross-correlation with the reference.

    Lags are taken in ``[-N/2, N/2)``. Exact ties go to the smaller
    ``|lag|``, then to the positive lag.
    """
    y = _correlation_spectrum(_samples(frame), state.reference_symbol)
    corr = np.abs(np.fft.ifft(y))
    peak = corr.max()
    if peak == 0:
        raise SyncError("all-zero frame has no correlation peak")
    n = corr.size
    lags = np.arange(n)
    lags = np.where(lags < (n + 1) // 2, lags, lags - n)
    tied = lags[corr >= peak * (1 - 1e-12)]
    return int(sorted(tied, key=lambda l: (abs(l), -l))[0])


def _fine_grid(y: np.ndarray, l_coarse: int, upsample: int) -> tuple[np.ndarray, np.ndarray]:
    """Band-limited correlation at lags ``l_coarse + j/U`` for j in [-U/2, U/2).

    These are exactly the samples a U-times zero-padded inverse transform
    would produce around ``l_coarse``; only the needed ones are evaluated.
    """
    n = y.size
    offsets, steer = _fine_steering(n, upsample)
    shifted = y * np.exp(2j * np.pi * np.arange(n) * l_coarse / n)
    return offsets, np.abs(steer @ shifted) / n


@lru_cache(maxsize=8)
def _fine_steering(n: int, upsample: int):
    offsets = np.arange(-(upsample // 2), upsample - upsample // 2) / upsample
    steer = np.exp(2j * np.pi * np.outer(offsets, np.arange(n)) / n)
    steer.setflags(write=False)
    return offsets, steer


def fine_delay(frame, l_coarse: int, upsample: int, state: SyncState | None = None) -> float:
    """Fractional lag in [-0.5, 0.5) on a 1/U grid around ``l_coarse``."""
    samples = _samples(frame)
    ref = np.ones_like(samples) if state is None else state.reference_symbol
    y = _correlation_spectrum(samples, ref)
    if not np.any(y):
        raise SyncError("all-zero frame has no correlation peak")
    if upsample <= 1:
        return 0.0
    offsets, corr = _fine_grid(y, l_coarse, upsample)
    best = corr.max()
    tied = offsets[corr >= best * (1 - 1e-12)]
    return float(sorted(tied, key=lambda o: (abs(o), -o))[0])


def correct_delay(samples, lag: float) -> np.ndarray:
    samples = np.asarray(samples)
    n = samples.size
    return samples * np.exp(2j * np.pi * np.arange(n) * lag / n)


def frame_mean_phase(frame) -> float:
    mean = np.mean(_samples(frame))
    if mean == 0:
        raise SyncError("frame has zero mean; phase undefined")
    return wrap_phase(np.angle(mean))


def phase_fix(frame, state: SyncState, delta: float):
    """Quantized common-phase correction against the rolling H-frame reference.

    Returns ``(corrected_frame, new_state)``. The first frame passes through
    unchanged and seeds the history.
    """
    samples = _samples(frame)
    theta = frame_mean_phase(samples)
    ref = state.reference_phase
    if ref is None:
        fix = 0.0
    else:
        fix = round_half_away(wrap_phase(ref - theta) / delta) * delta
    corrected = samples * np.exp(1j * fix) if fix else samples
    history = deque(state.phase_history, maxlen=state.history_length)
    history.append(wrap_phase(theta + fix))
    new_state = replace(state, phase_history=tuple(history))
    if isinstance(frame, CsiFrame):
        return CsiFrame(frame.timestamp, corrected), new_state
    return corrected, new_state


def synchronize_frame(frame, state: SyncState, config: SensingConfig):
    """Delay alignment then phase fix for one frame. Returns ``(frame, state, lag)``."""
    samples = _samples(frame)
    if state.freeze_delay and state.frozen_lag is not None:
        lag = state.frozen_lag
    else:
        l_coarse = coarse_delay(samples, state)
        lag = l_coarse + fine_delay(samples, l_coarse, config.upsample_factor, state)
        if state.freeze_delay:
            state = replace(state, frozen_lag=lag)
    aligned = correct_delay(samples, lag) if lag else samples
    fixed, state = phase_fix(aligned, state, config.phase_quantum)
    if isinstance(frame, CsiFrame):
        fixed = CsiFrame(frame.timestamp, fixed)
    return fixed, state, lag


class Synchronizer:
    """Streaming wrapper holding one :class:`SyncState`."""

    def __init__(self, config: SensingConfig, reference_symbol=None, freeze_delay=False):
        self.config = config
        self.state = SyncState.for_config(config, reference_symbol, freeze_delay)
        self.lags: list[float] = []

    def __call__(self, samples: np.ndarray) -> np.ndarray:
        out, self.state, lag = synchronize_frame(samples, self.state, self.config)
        self.lags.append(lag)
        return out


def sync_capture(capture: CsiCapture, reference_symbol=None, freeze_delay=False) -> CsiCapture:
    sync = Synchronizer(capture.config, reference_symbol, freeze_delay)
    data = np.stack([sync(row) for row in capture.data]) if len(capture) else capture.data
    return capture.with_data(data)
