import numpy as np
import pytest
from hypothesis import given, strategies as st

from wifi_hpd.core import PresenceState, preset
from wifi_hpd.synth import (SceneError, SceneSpec, TargetTrack, apply_impairments,
                            builtin_scene, generate_capture, zone_state)

C = 3.0e8


def test_empty_scene_without_noise_is_all_zero(small_config):
    cap = generate_capture(SceneSpec(), small_config, 0.5, seed=1)
    assert len(cap) == 50
    assert not np.any(cap.data)
    assert all(lab.state == PresenceState.ABSENT for lab in cap.labels)


def test_static_target_matches_model(small_config):
    r = 2.3
    cap = generate_capture(SceneSpec((TargetTrack.static(r),)), small_config, 0.4)
    n = np.arange(small_config.num_subcarriers)
    expected = np.exp(-2j * np.pi * n * small_config.subcarrier_spacing * 2 * r / C)
    assert np.allclose(cap.data, expected[None, :], atol=1e-6)


@pytest.mark.parametrize("v", [-0.6, 0.35])
def test_constant_velocity_phase_advance(small_config, v):
    cfg = small_config
    cap = generate_capture(SceneSpec((TargetTrack.constant_velocity(3.0, v, 2.0),)), cfg, 0.64)
    x = cap.data[:, 0]
    step = np.angle(x[1:] * np.conj(x[:-1]))
    expected = 2 * np.pi * cfg.frame_interval * 2 * v * cfg.carrier_frequency / C
    assert np.allclose(step, np.angle(np.exp(1j * expected)), atol=1e-6)
    # slow-time DFT oracle: zero-padded transform peaks at the Doppler frequency
    spec = np.abs(np.fft.fft(x, 1 << 16))
    f_peak = np.fft.fftfreq(1 << 16, d=cfg.frame_interval)[np.argmax(spec)]
    assert f_peak == pytest.approx(2 * v * cfg.carrier_frequency / C, abs=0.01)


def test_impairment_identity(small_config, rng):
    cap = generate_capture(SceneSpec((TargetTrack.static(1.0),), noise_power=1.0), small_config, 0.4)
    assert np.array_equal(apply_impairments(cap, 0.0, 0.0).data, cap.data)


def test_integer_delay_phase_ramp(small_config):
    cap = generate_capture(SceneSpec(si_amplitude=1.0), small_config, 0.4)
    out = apply_impairments(cap, 4.0)
    n = np.arange(small_config.num_subcarriers)
    assert np.angle(out.data[0, 0]) == pytest.approx(0.0, abs=1e-7)
    assert np.allclose(out.data[0], np.exp(-2j * np.pi * n * 4 / n.size), atol=1e-6)


def test_superposition(small_config):
    a = (TargetTrack.static(1.2, 0.7, (0.005, 0.25)),)
    b = (TargetTrack.constant_velocity(5.0, -0.4, 1.0, 0.3),)
    ca = generate_capture(SceneSpec(a), small_config, 0.5)
    cb = generate_capture(SceneSpec(b), small_config, 0.5)
    cab = generate_capture(SceneSpec(a + b), small_config, 0.5)
    assert np.allclose(cab.data, ca.data + cb.data, atol=1e-6)


def test_noise_power_matches_within_five_percent(small_config):
    cap = generate_capture(SceneSpec(noise_power=4.0), small_config, 20.0, seed=9)
    assert cap.data.size >= 1e5
    assert np.mean(np.abs(cap.data) ** 2) == pytest.approx(4.0, rel=0.05)


def test_labels_follow_trajectory_exactly(small_config):
    tgt = TargetTrack(((0.0, 0.5), (1.0, 3.0), (2.0, 6.0)))
    cap = generate_capture(SceneSpec((tgt,)), small_config, 2.0)
    t = cap.timestamps
    assert [lab.range for lab in cap.labels] == list(np.interp(t, [0, 1, 2], [0.5, 3.0, 6.0]))
    assert cap.labels[-1].state == PresenceState.ABSENT
    assert cap.labels[0].state == PresenceState.PRESENT
    assert cap.labels[120].state == PresenceState.LEAVING


def test_deterministic_for_seed(small_config):
    scene = SceneSpec((TargetTrack.static(2.0),), si_amplitude=3.0, noise_power=0.5,
                      phase_walk_std=0.05, delay_offset_samples=1.5)
    a = generate_capture(scene, small_config, 0.5, seed=4)
    b = generate_capture(scene, small_config, 0.5, seed=4)
    c = generate_capture(scene, small_config, 0.5, seed=5)
    assert np.array_equal(a.data, b.data)
    assert not np.array_equal(a.data, c.data)


def test_waypoints_must_cover_duration(small_config):
    short = TargetTrack(((0.0, 1.0), (0.2, 1.0)))
    with pytest.raises(SceneError):
        generate_capture(SceneSpec((short,)), small_config, 0.5)
    with pytest.raises(SceneError):
        generate_capture(SceneSpec(), small_config, 0.1)  # fewer than M frames


def test_track_validation():
    with pytest.raises(SceneError):
        TargetTrack(((1.0, 1.0), (1.0, 2.0)))
    with pytest.raises(SceneError):
        TargetTrack(((0.0, -1.0), (1.0, 2.0)))
    with pytest.raises(SceneError):
        TargetTrack.static(1.0, micro_motion=(-0.1, 0.2))


def test_scene_text_round_trip():
    scene = SceneSpec((TargetTrack(((0.0, 0.5), (3.0, 4.25)), 0.5, (0.005, 0.25)),
                       TargetTrack.static(2.0)), si_amplitude=100.0, noise_power=2.5,
                      delay_offset_samples=3.25, phase_walk_std=0.1, si_range=0.2)
    assert SceneSpec.from_text(scene.to_text()) == scene


@pytest.mark.parametrize("text, line", [
    ("noise_power = 1\nbogus = 2\n", 2),
    ("[target]\namplitude = 1\n", 1),
    ("[target]\nwaypoints = 0:1, 5\n", 2),
    ("[target]\nwaypoints = 0:1, 1:x\n", 2),
    ("noise_power = 1\n[box]\n", 2),
    ("[target]\nwaypoints = 0:1, 1:2\nmicro_motion = 0.1\n", 3),
])
def test_scene_errors_are_line_anchored(text, line):
    with pytest.raises(SceneError) as info:
        SceneSpec.from_text(text)
    assert info.value.lineno == line


def test_builtin_scenes_load():
    al = builtin_scene("approach_leave")
    assert len(al.targets) == 1
    ranges = [r for _, r in al.targets[0].waypoints]
    assert min(ranges) == 0.5 and max(ranges) == 8.0
    assert builtin_scene("empty_room").targets == ()
    with pytest.raises(SceneError):
        builtin_scene("nope")


def test_zone_boundaries_are_closed():
    cfg = preset("detection")
    assert zone_state(2.0, 0.5, cfg) == PresenceState.PRESENT
    assert zone_state(5.0, 0.5, cfg) == PresenceState.LEAVING
    assert zone_state(5.0001, 0.5, cfg) == PresenceState.ABSENT
    assert zone_state(3.0, -0.5, cfg) == PresenceState.APPROACHING
    assert zone_state(3.0, 0.0, cfg, PresenceState.LEAVING) == PresenceState.LEAVING


@given(st.floats(0, 10), st.floats(-2, 2))
def test_zone_state_total(r, v):
    assert zone_state(r, v, preset("detection")) in set(PresenceState)
