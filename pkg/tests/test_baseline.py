import numpy as np
import pytest
from hypothesis import given, strategies as st

from wifi_hpd.baseline import (RangeDopplerMap, RdmChain, compute_rdm, count_ops_rdm, rdm_peak,
                               write_rdm_csv)
from wifi_hpd.core import DB_FLOOR, SensingConfig, preset, range_resolution, to_db
from wifi_hpd.rfds import OpCounter, doppler_power, extract_gate
from wifi_hpd.synth import SceneSpec, TargetTrack, generate_capture

CFG = SensingConfig(num_subcarriers=64, subcarrier_spacing=2.5e6)


def test_static_grid_target_peaks_at_zero_doppler():
    cap = generate_capture(SceneSpec((TargetTrack.static(4 * 0.9375),)), CFG, 0.32)
    rdm = compute_rdm(cap, CFG, clutter="none")
    r, c = np.unravel_index(np.argmax(rdm.power_db), rdm.power_db.shape)
    assert (r, c) == (4, 16)


def test_moving_target_on_both_grids():
    # v = 2 bins of velocity resolution, range on the bin grid at the block centre
    dv = 3e8 / (2 * 32 * CFG.carrier_frequency * CFG.frame_interval)
    v = 2 * dv
    start = 5 * 0.9375 - v * 0.155
    cap = generate_capture(SceneSpec((TargetTrack.constant_velocity(start, v, 1.0),)), CFG, 0.32)
    rdm = compute_rdm(cap, CFG, clutter="none")
    r, c = np.unravel_index(np.argmax(rdm.power_db), rdm.power_db.shape)
    assert r == 5
    assert c == 16 + 2
    rng_, vel, _ = rdm_peak(rdm)
    assert abs(rng_ - 5 * 0.9375) <= range_resolution(CFG)
    assert abs(vel - v) <= dv


def test_all_zero_input_gives_floor():
    rdm = compute_rdm(np.zeros((32, 64)), CFG)
    assert np.all(rdm.power_db == to_db(0.0))
    r, v, p = rdm_peak(rdm, exclude_zero_doppler=True)
    assert r == 0.0 and p == pytest.approx(10 * np.log10(DB_FLOOR))


def test_peak_tie_prefers_nearer_range():
    grid = np.zeros((4, 5))
    grid[1, 3] = grid[3, 1] = 5.0
    rdm = RangeDopplerMap(grid, np.arange(4.0), np.linspace(-2, 2, 5))
    assert rdm_peak(rdm)[:2] == (1.0, 1.0)
    grid[1, 2] = 9.0
    assert rdm_peak(rdm)[:2] == (1.0, 0.0)
    assert rdm_peak(rdm, exclude_zero_doppler=True)[:2] == (1.0, 1.0)
    assert rdm_peak(rdm, max_range=0.5)[0] == 0.0


def test_frame_count_must_match():
    with pytest.raises(ValueError):
        compute_rdm(np.zeros((31, 64)), CFG)
    with pytest.raises(ValueError):
        compute_rdm(np.zeros((32, 64)), CFG, clutter="mti")
    compute_rdm(np.zeros((32 + 63, 64)), CFG, clutter="mti")


def test_axes_pitch():
    rdm = compute_rdm(np.ones((32, 64)), CFG)
    assert np.allclose(np.diff(rdm.range_axis), range_resolution(CFG))
    with pytest.raises(ValueError):
        RangeDopplerMap(np.zeros((2, 3)), np.arange(3.0), np.arange(3.0))


@given(st.integers(0, 2**31))
def test_gate_slices_equal_rdm_rows(seed):
    rng = np.random.default_rng(seed)
    data = rng.standard_normal((32, 64)) + 1j * rng.standard_normal((32, 64))
    rdm = compute_rdm(data, CFG, clutter="none")
    for k, r in enumerate(CFG.gate_ranges):
        spec = doppler_power(extract_gate(data, r, CFG).samples)
        row = 10 ** (rdm.power_db[k] / 10) - DB_FLOOR
        assert np.max(np.abs(row - spec) / np.max(spec)) <= 1e-9


@given(st.integers(0, 2**31))
def test_grid_power_is_n_times_energy(seed):
    rng = np.random.default_rng(seed)
    data = rng.standard_normal((32, 64)) + 1j * rng.standard_normal((32, 64))
    power = 10 ** (compute_rdm(data, CFG, clutter="none").power_db / 10)
    assert power.sum() == pytest.approx(64 * np.sum(np.abs(data) ** 2), rel=1e-9)


def test_op_model_closed_form():
    model = count_ops_rdm(preset("detection"))
    assert model.doppler_per_block == 2048 * 16 * 5
    assert model.range_per_block == 32 * 1024 * 11
    assert model.per_block == 163840 + 360448
    doubled = count_ops_rdm(preset("detection").replace(doppler_frames=64))
    assert doubled.per_block == 2048 * 32 * 6 + 64 * 1024 * 11
    assert count_ops_rdm(preset("detection"), mti=True).mti_per_frame == 2048 * 64


def test_streaming_chain_matches_block_mti(rng):
    data = rng.standard_normal((140, 64)) + 1j * rng.standard_normal((140, 64))
    counter = OpCounter()
    chain = RdmChain(CFG, counter)
    maps = [m for m in (chain.push(row) for row in data) if m is not None]
    assert len(maps) == chain.maps == 1 + (140 - 63 - 32) // CFG.doppler_hop
    end = 63 + 32 + (len(maps) - 1) * CFG.doppler_hop
    ref = compute_rdm(data[end - 95:end], CFG, clutter="mti")
    assert np.allclose(maps[-1].power_db, ref.power_db, atol=1e-8)
    assert counter["mti"] == 140 * 64 * 64


def test_rdm_csv(tmp_path):
    rdm = compute_rdm(np.ones((32, 64)), CFG)
    write_rdm_csv(tmp_path / "r.csv", rdm, max_range=2.0)
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "range_m,velocity_mps,power_db"
    assert len(lines) == 1 + 3 * 32
