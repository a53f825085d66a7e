"""Op-count and wall-time comparison of RF-DS against full range-Doppler maps."""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass

import numpy as np

from .baseline import RdmChain
from .core import SensingConfig, preset
from .kv import parse_kv
from .rfds import OpCounter, RfdsChain

DEFAULT_FRAMES = 6000  # one minute at the detection rate
TUPLE_KEYS = ("num_subcarriers", "doppler_frames", "num_range_gates", "fir_taps")


@dataclass(frozen=True)
class BenchRow:
    n: int
    m: int
    gates: int
    fir_taps: int
    frames: int
    rfds_ops: int
    rfds_mti_ops: int
    rdm_ops: int
    rdm_ops_no_mti: int
    rfds_seconds: float
    rdm_seconds: float

    @property
    def ratio(self) -> float:
        return self.rdm_ops / self.rfds_ops

    @property
    def ratio_no_mti(self) -> float:
        return self.rdm_ops_no_mti / (self.rfds_ops - self.rfds_mti_ops)


def tuple_config(n: int, m: int, gates: int, fir_taps: int,
                 base: SensingConfig | None = None) -> SensingConfig:
    base = base or preset("detection")
    cfg = base.replace(num_subcarriers=n, doppler_frames=m, fir_taps=fir_taps,
                       doppler_hop=max(1, m // 4))
    return cfg.with_uniform_gates(gates)


def load_sweep(path) -> list[tuple[int, int, int, int]]:
    """Sweep file: one ``[tuple]`` section per configuration with the four size keys."""
    with open(path, encoding="utf-8") as fh:
        sections = parse_kv(fh.read())
    out = []
    for sec in sections:
        if not sec.items:
            continue
        missing = [k for k in TUPLE_KEYS if k not in sec.items]
        if missing:
            raise ValueError(f"line {sec.lineno}: tuple is missing {', '.join(missing)}")
        out.append(tuple(int(sec.items[k][0]) for k in TUPLE_KEYS))
    return out


def bench_tuple(n: int, m: int, gates: int, fir_taps: int, frames: int | None = None,
                seed: int = 0, base: SensingConfig | None = None) -> BenchRow:
    """Stream the same random frames through both pipelines and count multiplies."""
    cfg = tuple_config(n, m, gates, fir_taps, base)
    frames = frames or DEFAULT_FRAMES
    rng = np.random.default_rng(seed)
    data = rng.standard_normal((frames, n)) + 1j * rng.standard_normal((frames, n))

    rf_counter = OpCounter()
    chain = RfdsChain(cfg, clutter="mti", sync=False, counter=rf_counter)
    start = time.perf_counter()
    for row in data:
        chain.push(row, 0.0)
    rf_time = time.perf_counter() - start

    rdm_counter = OpCounter()
    rdm = RdmChain(cfg, rdm_counter)
    start = time.perf_counter()
    for row in data:
        rdm.push(row)
    rdm_time = time.perf_counter() - start
    if rdm.maps != chain.windows:
        raise AssertionError("pipelines produced different numbers of outputs")
    rdm_ops = rdm_counter.total
    return BenchRow(n, m, gates, fir_taps, frames, rf_counter.total, rf_counter["mti"],
                    rdm_ops, rdm_ops - rdm_counter["mti"], rf_time, rdm_time)


def format_bench(rows: list[BenchRow], timing: bool = True) -> str:
    buf = io.StringIO()
    out = csv.writer(buf, lineterminator="\n")
    head = ["n", "m", "range_gates", "fir_taps", "frames", "rfds_ops", "rdm_ops",
            "ratio", "rdm_ops_no_mti", "ratio_no_mti"]
    if timing:
        head += ["rfds_seconds", "rdm_seconds"]
    out.writerow(head)
    for r in rows:
        line = [r.n, r.m, r.gates, r.fir_taps, r.frames, r.rfds_ops, r.rdm_ops,
                f"{r.ratio:.3f}", r.rdm_ops_no_mti, f"{r.ratio_no_mti:.3f}"]
        if timing:
            line += [f"{r.rfds_seconds:.4f}", f"{r.rdm_seconds:.4f}"]
        out.writerow(line)
    return buf.getvalue()
