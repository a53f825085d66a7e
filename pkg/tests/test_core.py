import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from wifi_hpd.core import (CaptureError, ConfigError, CsiCapture, CsiFrame, PresenceState,
                           SensingConfig, doppler_shift_of_velocity, doppler_velocity_axis,
                           max_unambiguous_velocity, preset, range_resolution,
                           velocity_resolution, velocity_of_doppler_shift)
from wifi_hpd.kv import KVSyntaxError

C = 3.0e8
REPORTED_RANGE_RESOLUTION = 0.94  # published figure for the 160 MHz setup, two decimals


def test_range_resolution_at_160_mhz():
    cfg = preset("detection")
    assert cfg.bandwidth == 160e6
    assert range_resolution(cfg) == 0.9375
    assert round(range_resolution(cfg), 2) == REPORTED_RANGE_RESOLUTION


def test_range_resolution_at_80_mhz():
    cfg = SensingConfig(num_subcarriers=1024)
    assert range_resolution(cfg) == pytest.approx(C / (2 * 80e6), rel=1e-15)
    assert range_resolution(cfg) == 1.875


def test_range_resolution_halves_when_bandwidth_doubles():
    a = SensingConfig(num_subcarriers=512)
    b = SensingConfig(num_subcarriers=1024)
    assert range_resolution(b) == range_resolution(a) / 2


def test_velocity_resolution_examples():
    det, idle = preset("detection"), preset("idle")
    assert velocity_resolution(det) == pytest.approx(C / (2 * 32 * 5.8e9 * 0.01), rel=1e-12)
    assert round(velocity_resolution(det), 4) == 0.0808
    assert round(velocity_resolution(idle), 5) == 0.00808
    assert velocity_resolution(det.replace(frame_interval=0.02)) == pytest.approx(
        velocity_resolution(det) / 2, rel=1e-15)


def test_max_unambiguous_velocity_examples():
    det, idle = preset("detection"), preset("idle")
    assert round(max_unambiguous_velocity(det), 3) == 1.293
    assert round(max_unambiguous_velocity(idle), 4) == 0.1293
    assert max_unambiguous_velocity(det.replace(frame_interval=0.02)) == pytest.approx(
        max_unambiguous_velocity(det) / 2, rel=1e-15)


def test_doppler_shift_examples():
    cfg = preset("detection")
    assert doppler_shift_of_velocity(0.0, cfg) == 0.0
    assert doppler_shift_of_velocity(1.0, cfg) == pytest.approx(2 * 5.8e9 / C, rel=1e-15)
    assert round(doppler_shift_of_velocity(1.0, cfg), 2) == 38.67


configs = st.builds(
    SensingConfig,
    num_subcarriers=st.integers(2, 4096),
    subcarrier_spacing=st.floats(1e3, 1e7),
    carrier_frequency=st.floats(1e9, 7e10),
    frame_interval=st.floats(1e-4, 1.0),
    doppler_frames=st.integers(2, 256),
)


@given(configs)
def test_resolutions_positive_and_related(cfg):
    assert range_resolution(cfg) > 0
    assert velocity_resolution(cfg) > 0
    assert max_unambiguous_velocity(cfg) > 0
    assert max_unambiguous_velocity(cfg) == pytest.approx(
        velocity_resolution(cfg) * cfg.doppler_frames / 2, rel=1e-12)


@given(configs, st.floats(-50, 50))
def test_velocity_doppler_round_trip(cfg, v):
    back = velocity_of_doppler_shift(doppler_shift_of_velocity(v, cfg), cfg)
    assert back == pytest.approx(v, rel=1e-12, abs=1e-15)


def test_velocity_axis_symmetric_and_centred():
    cfg = preset("detection")
    axis = doppler_velocity_axis(cfg)
    m = cfg.doppler_frames
    assert axis[m // 2] == 0.0
    assert axis[0] == pytest.approx(-max_unambiguous_velocity(cfg))
    assert np.allclose(axis[1:], -axis[1:][::-1])
    assert np.allclose(np.diff(axis), velocity_resolution(cfg))


def test_presets_follow_the_two_rates():
    idle, det = preset("idle"), preset("detection")
    assert idle.frame_interval == 0.1 and det.frame_interval == 0.01
    for cfg in (idle, det):
        assert (cfg.doppler_frames, cfg.num_range_gates, cfg.snr_window,
                cfg.detection_window, cfg.snr_threshold, cfg.majority_window,
                cfg.fir_taps) == (32, 9, 20, 3, 12.0, 3, 64)
        assert cfg.gate_ranges[-1] == 7.5
    with pytest.raises(ConfigError):
        preset("turbo")


@given(configs, st.floats(-100, 100), st.sampled_from(["rect", "hann"]))
def test_config_text_round_trip_is_exact(cfg, threshold, win):
    cfg = cfg.replace(snr_threshold=threshold, range_window=win)
    assert SensingConfig.from_text(cfg.to_text()) == cfg


@pytest.mark.parametrize("changes", [
    dict(num_subcarriers=1), dict(doppler_frames=1), dict(gate_ranges=()),
    dict(gate_ranges=(0.0, 0.0)), dict(gate_ranges=(-1.0, 0.0)), dict(frame_interval=0.0),
    dict(upsample_factor=0), dict(phase_quantum=0.0), dict(majority_window=2),
    dict(snr_window=2, detection_window=3), dict(zone_near_max=5.0),
    dict(fir_cutoff=0.5), dict(range_window="kaiser"),
])
def test_invalid_configs_rejected(changes):
    with pytest.raises(ConfigError):
        SensingConfig(**changes)


def test_config_file_errors_name_the_line():
    with pytest.raises(KVSyntaxError) as info:
        SensingConfig.from_text("snr_threshold = 10\nbogus_key = 1\n")
    assert info.value.lineno == 2
    with pytest.raises(KVSyntaxError) as info:
        SensingConfig.from_text("\nmajority_window = 4\n")
    assert info.value.lineno == 2


def test_num_range_gates_override_builds_uniform_gates():
    cfg = SensingConfig.from_text("num_range_gates = 4\n")
    assert cfg.gate_ranges == (0.0, 0.9375, 1.875, 2.8125)


def test_capture_validation(small_config):
    n = small_config.num_subcarriers
    ts = np.arange(5) * 0.01
    CsiCapture(small_config, ts, np.zeros((5, n)))
    with pytest.raises(CaptureError):
        CsiCapture(small_config, ts, np.zeros((5, n + 1)))
    with pytest.raises(CaptureError):
        CsiCapture(small_config, ts * 1.05, np.zeros((5, n)))
    with pytest.raises(CaptureError):
        CsiCapture(small_config, ts - 1.0, np.zeros((5, n)))
    jitter = ts + np.array([0, 5e-5, 0, -5e-5, 0])
    CsiCapture(small_config, jitter, np.zeros((5, n)))


def test_capture_is_read_only_and_frames_view(small_config):
    n = small_config.num_subcarriers
    cap = CsiCapture.from_frames(small_config, [CsiFrame(0.01 * k, np.full(n, k)) for k in range(3)])
    assert len(cap) == 3 and cap.frames[2].samples[0] == 2
    with pytest.raises(ValueError):
        cap.data[0, 0] = 1


def test_presence_state_vocabulary():
    assert PresenceState.parse("leaving") is PresenceState.LEAVING
    assert PresenceState.APPROACHING.three_class_label == "approaching_leaving"
    assert PresenceState.PRESENT.three_class_label == "present"
    with pytest.raises(ValueError):
        PresenceState.parse("lurking")
    assert math.isclose(float(PresenceState.ABSENT), 0.0)
