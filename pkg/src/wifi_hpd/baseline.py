"""Full 2-D FFT range-Doppler map processing, used as oracle and comparison baseline."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .core import CsiCapture, SensingConfig, doppler_velocity_axis, range_resolution, to_db
from .rfds import OpCounter, design_mti, doppler_power, fft_multiplies


@dataclass(frozen=True, eq=False)
class RangeDopplerMap:
    power_db: np.ndarray  # (range bins, Doppler bins)
    range_axis: np.ndarray
    velocity_axis: np.ndarray

    def __post_init__(self):
        if self.power_db.shape != (self.range_axis.size, self.velocity_axis.size):
            raise ValueError("axes do not match the power grid")


def range_profiles(data: np.ndarray) -> np.ndarray:
    """``N * IDFT`` over subcarriers: bin ``k`` holds the echo at range ``k * dr``."""
    n = data.shape[-1]
    return np.fft.ifft(data, axis=-1) * n


def compute_rdm(frames, config: SensingConfig, clutter: str = "dc",
                counter: OpCounter | None = None) -> RangeDopplerMap:
    """Range-Doppler map of one block.

    ``clutter="dc"`` (default) subtracts the block mean per subcarrier,
    ``"none"`` leaves the data untouched and ``"mti"`` runs the MTI filter
    along slow time in every range bin, which needs ``M + taps - 1`` frames.
    Total linear grid power equals ``N`` times the (clutter-filtered) input
    energy.
    """
    data = frames.data if isinstance(frames, CsiCapture) else np.stack(
        [np.asarray(getattr(f, "samples", f)) for f in frames])
    m = config.doppler_frames
    mti = design_mti(config.fir_taps, config.fir_cutoff) if clutter == "mti" else None
    need = m + (mti.taps - 1 if mti is not None else 0)
    if data.shape[0] != need:
        raise ValueError(f"compute_rdm needs exactly {need} frames, got {data.shape[0]}")
    profiles = range_profiles(data)
    if clutter == "dc":
        profiles = profiles - profiles.mean(axis=0, keepdims=True)
    elif mti is not None:
        # "valid" convolution along slow time, all range bins at once
        taps = np.lib.stride_tricks.sliding_window_view(profiles, mti.taps, axis=0)
        profiles = taps @ mti.coefficients[::-1]
        if counter is not None:
            counter.add("mti", m * mti.taps * data.shape[1])
    elif clutter != "none":
        raise ValueError(f"unknown clutter mode {clutter!r}")
    if counter is not None:
        n = data.shape[1]
        counter.add("range_fft", m * fft_multiplies(n))
        counter.add("doppler", n * fft_multiplies(m))
    power = doppler_power(profiles, config.doppler_window).T
    n = data.shape[1]
    return RangeDopplerMap(to_db(power), np.arange(n) * range_resolution(config),
                           doppler_velocity_axis(config))


def rdm_peak(rdm: RangeDopplerMap, exclude_zero_doppler: bool = False,
             max_range: float | None = None) -> tuple[float, float, float]:
    """(range, velocity, power dB) of the strongest cell.

    Ties go to the smaller range, then the smaller ``|velocity|``.
    """
    grid = np.array(rdm.power_db, dtype=float)
    if exclude_zero_doppler:
        grid[:, np.argmin(np.abs(rdm.velocity_axis))] = -np.inf
    if max_range is not None:
        grid[rdm.range_axis > max_range, :] = -np.inf
    best = grid.max()
    rows, cols = np.nonzero(grid >= best - 1e-12 * max(1.0, abs(best)))
    order = sorted(zip(rows, cols), key=lambda rc: (rdm.range_axis[rc[0]],
                                                    abs(rdm.velocity_axis[rc[1]])))
    r, c = order[0]
    return float(rdm.range_axis[r]), float(rdm.velocity_axis[c]), float(rdm.power_db[r, c])


@dataclass(frozen=True)
class RdmOpModel:
    """Closed-form complex-multiply counts for full range-Doppler processing."""

    doppler_per_block: int  # N * (M/2) log2 M
    range_per_block: int  # M * (N/2) log2 N
    mti_per_frame: int  # N * M_fir when the clutter filter runs on every range bin

    @property
    def per_block(self) -> int:
        return self.doppler_per_block + self.range_per_block

    def total(self, blocks: int, frames: int = 0) -> int:
        return blocks * self.per_block + frames * self.mti_per_frame


def count_ops_rdm(config: SensingConfig, mti: bool = False) -> RdmOpModel:
    n, m = config.num_subcarriers, config.doppler_frames
    return RdmOpModel(n * fft_multiplies(m), m * fft_multiplies(n),
                      n * config.fir_taps if mti else 0)


def rfds_ops_per_frame(config: SensingConfig) -> dict[str, float]:
    """Closed-form RF-DS cost per frame (Doppler FFT amortized over the hop)."""
    g = config.num_range_gates
    return {
        "gate_extraction": config.num_subcarriers * g,
        "mti": config.fir_taps * g,
        "doppler": g * fft_multiplies(config.doppler_frames) / config.doppler_hop,
    }


def write_rdm_csv(path, rdm: RangeDopplerMap, max_range: float | None = None) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["range_m", "velocity_mps", "power_db"])
        for r, row in zip(rdm.range_axis, rdm.power_db):
            if max_range is not None and r > max_range:
                continue
            for v, p in zip(rdm.velocity_axis, row):
                out.writerow([f"{r:.6f}", f"{v:.6f}", f"{p:.4f}"])


class RdmChain:
    """Streaming full-RDM reference: MTI on every subcarrier per frame, 2-D FFT per hop.

    Emits one map per ``doppler_hop`` frames once ``M`` filtered frames are
    buffered, matching the RF-DS output cadence so op counts compare like
    for like.
    """

    def __init__(self, config: SensingConfig, counter: OpCounter | None = None):
        self.config = config
        self.counter = counter if counter is not None else OpCounter()
        self.mti = design_mti(config.fir_taps, config.fir_cutoff)
        self._raw: list[np.ndarray] = []
        self._filtered: list[np.ndarray] = []
        self._since_last = 0
        self.maps = 0

    def push(self, samples: np.ndarray) -> RangeDopplerMap | None:
        cfg = self.config
        taps = self.mti.taps
        self._raw = (self._raw + [np.asarray(samples)])[-taps:]
        self.counter.add("mti", cfg.num_subcarriers * taps)
        if len(self._raw) < taps:
            return None
        block = np.stack(self._raw)
        self._filtered = (self._filtered + [self.mti.coefficients[::-1] @ block])[
            -cfg.doppler_frames:]
        self._since_last += 1
        if len(self._filtered) < cfg.doppler_frames or (
                self.maps and self._since_last < cfg.doppler_hop):
            return None
        self._since_last = 0
        self.maps += 1
        return compute_rdm(np.stack(self._filtered), cfg, clutter="none", counter=self.counter)
