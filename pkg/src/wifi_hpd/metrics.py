"""Scoring a presence timeline against ground-truth labels."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import Label, PresenceState
from .kv import format_kv
from .hpd import PresenceTimeline

STATES = tuple(PresenceState)


def _three(state: PresenceState) -> int:
    return 2 if state.transitional else int(state)


@dataclass
class RunReport:
    frames_scored: int = 0
    frame_accuracy: float = math.nan  # %
    three_class_accuracy: float = math.nan  # %
    state_accuracy: dict = field(default_factory=dict)  # label -> %
    confusion: np.ndarray = field(default_factory=lambda: np.zeros((4, 4), dtype=int))
    latencies: list = field(default_factory=list)  # s, inf when never reached
    ops_rfds: int = 0
    ops_rdm: int = 0
    runtime: float = 0.0

    @property
    def mean_latency(self) -> float:
        return float(np.mean(self.latencies)) if self.latencies else math.nan

    @property
    def max_latency(self) -> float:
        return float(np.max(self.latencies)) if self.latencies else math.nan

    def as_items(self) -> dict:
        items = {
            "frames_scored": self.frames_scored,
            "frame_accuracy_pct": round(self.frame_accuracy, 4),
            "three_class_accuracy_pct": round(self.three_class_accuracy, 4),
            "mean_latency_s": round(self.mean_latency, 4),
            "max_latency_s": round(self.max_latency, 4),
            "transitions": len(self.latencies),
        }
        for name, acc in self.state_accuracy.items():
            items[f"accuracy_{name}_pct"] = round(acc, 4)
        for i, truth in enumerate(STATES):
            for j, pred in enumerate(STATES):
                items[f"confusion_{truth.label}_{pred.label}"] = int(
                    self.confusion[i, j])
        if self.ops_rfds:
            items["ops_rfds"] = self.ops_rfds
        if self.ops_rdm:
            items["ops_rdm"] = self.ops_rdm
        items["runtime_s"] = round(self.runtime, 3)
        return items

    def to_text(self) -> str:
        return format_kv(self.as_items())

    def summary(self) -> str:
        lines = [f"frames scored      {self.frames_scored}",
                 f"frame accuracy     {self.frame_accuracy:.2f} %",
                 f"3-class accuracy   {self.three_class_accuracy:.2f} %"]
        for name, acc in self.state_accuracy.items():
            lines.append(f"  {name:<12}     {acc:.2f} %")
        lines.append(f"latency mean/max   {self.mean_latency:.3f} / {self.max_latency:.3f} s "
                     f"over {len(self.latencies)} transitions")
        return "\n".join(lines)


def transition_latencies(timeline: PresenceTimeline, labels) -> list[float]:
    """Delay from each labelled state change to the first voted row showing the new state.

    The search ends at the next labelled change; a transition never
    reported in that span counts as ``inf``. Changes before the detector
    was ready are skipped.
    """
    start = timeline.ready_time if timeline.ready_time is not None else math.inf
    times = np.array([r.time for r in timeline.rows])
    out = []
    changes = [k for k in range(1, len(labels)) if labels[k].state != labels[k - 1].state]
    for pos, k in enumerate(changes):
        t0 = labels[k].time
        if t0 < start:
            continue
        t_end = labels[changes[pos + 1]].time if pos + 1 < len(changes) else math.inf
        hit = math.inf
        for i in np.flatnonzero((times >= t0) & (times < t_end)):
            if timeline.rows[i].state == labels[k].state:
                hit = times[i] - t0
                break
        out.append(float(hit))
    return out


def evaluate(timeline: PresenceTimeline, labels: tuple[Label, ...] | list[Label]) -> RunReport:
    """Frame-level scoring from the detector's ready time onwards."""
    report = RunReport(ops_rfds=timeline.counter.total)
    if not labels or timeline.ready_time is None:
        return report
    scored = [lab for lab in labels if lab.time >= timeline.ready_time]
    predicted = timeline.states_at([lab.time for lab in scored])
    for lab, pred in zip(scored, predicted):
        report.confusion[int(lab.state), int(pred)] += 1
    report.frames_scored = len(scored)
    if scored:
        truth = [lab.state for lab in scored]
        hits = sum(t == p for t, p in zip(truth, predicted))
        report.frame_accuracy = 100.0 * hits / len(scored)
        report.three_class_accuracy = 100.0 * sum(
            _three(t) == _three(p) for t, p in zip(truth, predicted)) / len(scored)
        for s in STATES:
            row = report.confusion[int(s)]
            if row.sum():
                report.state_accuracy[s.label] = 100.0 * row[int(s)] / row.sum()
    report.latencies = transition_latencies(timeline, labels)
    return report
