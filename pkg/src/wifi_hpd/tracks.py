"""Paired RF-DS / range-Doppler-map tracks for the comparison command."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .baseline import compute_rdm
from .core import CsiCapture, SensingConfig
from .hpd import PresenceDetector, interpolate_range, stream_configs
from .rfds import RfdsChain
from .sync import sync_capture


@dataclass(frozen=True)
class TrackPoint:
    time: float
    range: float
    velocity: float
    snr: float
    low_snr: bool


def rfds_track(capture: CsiCapture, config: SensingConfig | None = None) -> list[TrackPoint]:
    """Winning-gate track at the detection rate (no mode switching)."""
    _, cfg = stream_configs(capture.config, detection=config)
    cfg = cfg.replace(frame_interval=capture.config.frame_interval)
    detector = PresenceDetector(cfg)
    out = []
    for window in RfdsChain(cfg).run(capture):
        _, det = detector.step(window, cfg)
        out.append(TrackPoint(det.time, det.range, det.velocity, det.snr,
                              not det.snr > cfg.snr_threshold))
    return out


def rdm_track(capture: CsiCapture, times, config: SensingConfig | None = None) -> list[TrackPoint]:
    """Strongest moving cell of an MTI-filtered range-Doppler map ending at each time.

    The search covers the zero-to-last-gate span and skips zero Doppler.
    SNR is the peak over the median cell of the searched region; range is
    refined with the same three-point interpolation as the RF-DS track.
    """
    _, cfg = stream_configs(capture.config, detection=config)
    cfg = cfg.replace(frame_interval=capture.config.frame_interval)
    synced = sync_capture(capture)
    span = cfg.doppler_frames + cfg.fir_taps - 1
    index = {round(float(t), 9): i for i, t in enumerate(capture.timestamps)}
    max_range = cfg.gate_ranges[-1]
    out = []
    for t in times:
        end = index[round(float(t), 9)] + 1
        if end < span:
            continue
        rdm = compute_rdm(synced.data[end - span:end], cfg, clutter="mti")
        rows = np.flatnonzero(rdm.range_axis <= max_range + 1e-9)
        grid = 10 ** (rdm.power_db[rows] / 10)
        grid[:, np.argmin(np.abs(rdm.velocity_axis))] = 0.0
        r, c = np.unravel_index(np.argmax(grid), grid.shape)
        snr = 10 * math.log10(grid[r, c] / max(np.median(grid[grid > 0]), 1e-300))
        mags = np.sqrt(grid[:, c])
        pitch = rdm.range_axis[1] - rdm.range_axis[0]
        if 0 < r < len(rows) - 1:
            rng = interpolate_range(mags[r - 1], mags[r], mags[r + 1], rdm.range_axis[r], pitch)
        else:
            rng = float(rdm.range_axis[r])
        out.append(TrackPoint(float(t), rng, float(rdm.velocity_axis[c]), snr,
                              not snr > cfg.snr_threshold))
    return out


def truth_track(capture: CsiCapture, times) -> list[TrackPoint]:
    by_time = {round(lab.time, 9): lab for lab in capture.labels}
    out = []
    for t in times:
        lab = by_time.get(round(float(t), 9))
        if lab is not None:
            out.append(TrackPoint(float(t), lab.range, lab.velocity, math.inf, False))
    return out


def rms_range_error(track: list[TrackPoint], truth: list[TrackPoint]) -> float | None:
    """RMS over points that are not low-SNR and have a finite true range; None if none."""
    ref = {p.time: p.range for p in truth}
    err = [p.range - ref[p.time] for p in track
           if not p.low_snr and p.time in ref and math.isfinite(ref[p.time])]
    return float(np.sqrt(np.mean(np.square(err)))) if err else None


def write_track_csv(path, track: list[TrackPoint]) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh, lineterminator="\n")
        out.writerow(["time_s", "range_m", "velocity_mps", "snr_db", "low_snr"])
        for p in track:
            out.writerow([f"{p.time:.4f}", f"{p.range:.4f}", f"{p.velocity:.4f}",
                          f"{p.snr:.3f}", int(p.low_snr)])
