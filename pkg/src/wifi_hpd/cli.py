"""Command-line front end: ``wifi-hpd synth|process|compare|bench|convert``."""
from __future__ import annotations

import argparse
import os
import sys
import time
import warnings
from pathlib import Path

from . import __version__
from .bench import DEFAULT_FRAMES, bench_tuple, format_bench, load_sweep
from .capture_io import CaptureFormatError, convert_capture, read_capture, write_capture
from .core import CaptureError, ConfigError, SensingConfig, preset
from .hpd import StreamError, process_stream
from .kv import KVSyntaxError, format_kv
from .metrics import evaluate
from .synth import SceneError, SceneSpec, generate_capture
from .tracks import rdm_track, rfds_track, rms_range_error, truth_track, write_track_csv

CONFIG_ENV = "WIFI_HPD_CONFIG"

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2

DATA_ERRORS = (CaptureFormatError, CaptureError, ConfigError, KVSyntaxError, SceneError,
               StreamError, OSError, ValueError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(p: argparse.ArgumentParser, out_help: str, default_preset: str = "detection"):
    p.add_argument("--config", help=f"config file (default: ${CONFIG_ENV} if set)")
    p.add_argument("--preset", choices=("idle", "detection"), default=default_preset)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help=out_help)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config value (repeatable)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wifi-hpd", description="Wi-Fi CSI human presence detection")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", help="synthesize a capture from a scene file")
    p.add_argument("scene")
    p.add_argument("--duration", type=float, required=True, help="seconds")
    _common(p, "capture file to write (required)")

    p = sub.add_parser("process", help="run presence detection over a capture")
    p.add_argument("capture")
    p.add_argument("--report", help="write the run report as key = value lines")
    p.add_argument("--clutter", choices=("mti", "dc", "none"), default="mti")
    p.add_argument("--three-state", action="store_true",
                   help="merge approaching and leaving in the timeline")
    _common(p, "timeline CSV to write")

    p = sub.add_parser("compare", help="RF-DS vs range-Doppler-map tracks")
    p.add_argument("capture")
    _common(p, "output directory (required)")

    p = sub.add_parser("bench", help="op counts and wall time for RF-DS vs full RDM")
    p.add_argument("sweep", help="sweep file of [tuple] sections")
    p.add_argument("--frames", type=int, default=DEFAULT_FRAMES)
    p.add_argument("--no-timing", action="store_true",
                   help="omit wall-time columns so the table is reproducible")
    _common(p, "CSV table to write (default: stdout)")

    p = sub.add_parser("convert", help="import a third-party CSI dump")
    p.add_argument("source")
    p.add_argument("--mapping", required=True, help="mapping file (see docs/mapping_example.txt)")
    _common(p, "capture file to write (required)")
    return parser


def load_config(args) -> SensingConfig:
    base = preset(args.preset)
    path = args.config or os.environ.get(CONFIG_ENV)
    cfg = SensingConfig.load(path, base) if path else base
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise UsageError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    return cfg.with_overrides(overrides) if overrides else cfg


def _need_out(args):
    if not args.out:
        raise UsageError(f"{args.command}: --out is required")
    return Path(args.out)


def cmd_synth(args) -> int:
    out = _need_out(args)
    cfg = load_config(args)
    scene = SceneSpec.load(args.scene)
    capture = generate_capture(scene, cfg, args.duration, args.seed)
    write_capture(out, capture)
    print(f"targets {len(scene.targets)}  frames {len(capture)}  "
          f"frame_interval {cfg.frame_interval} s  noise_power {scene.noise_power}  "
          f"si_amplitude {scene.si_amplitude}  labels {len(capture.labels)}")
    return EXIT_OK


def cmd_process(args) -> int:
    cfg = load_config(args)
    capture = read_capture(args.capture, cfg)
    start = time.perf_counter()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        timeline = process_stream(capture, detection_config=cfg, clutter=args.clutter)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    elapsed = time.perf_counter() - start
    if args.out:
        timeline.write_csv(args.out, three_state=args.three_state)
    report = evaluate(timeline, capture.labels)
    report.runtime = elapsed
    print(f"epochs {len(timeline)}  ready at {timeline.ready_time} s  "
          f"RF-DS ops {timeline.counter.total}")
    if capture.labels:
        print(report.summary())
    if args.report:
        items = report.as_items()
        items.pop("runtime_s")  # keeps the report file reproducible
        Path(args.report).write_text(format_kv(items), encoding="utf-8")
    return EXIT_OK


def cmd_compare(args) -> int:
    out = _need_out(args)
    cfg = load_config(args)
    capture = read_capture(args.capture, cfg)
    out.mkdir(parents=True, exist_ok=True)
    rf = rfds_track(capture, cfg)
    times = [p.time for p in rf]
    rdm = rdm_track(capture, times, cfg)
    truth = truth_track(capture, times)
    write_track_csv(out / "rfds_track.csv", rf)
    write_track_csv(out / "rdm_track.csv", rdm)
    write_track_csv(out / "truth_track.csv", truth)
    for name, track in (("rfds", rf), ("rdm", rdm)):
        rms = rms_range_error(track, truth)
        low = sum(p.low_snr for p in track)
        shown = "n/a" if rms is None else f"{rms:.3f} m"
        print(f"{name:5s} points {len(track):5d}  low-SNR {low:5d}  RMS range error {shown}")
    return EXIT_OK


def cmd_bench(args) -> int:
    base = load_config(args)
    rows = [bench_tuple(*t, frames=args.frames, seed=args.seed, base=base)
            for t in load_sweep(args.sweep)]
    table = format_bench(rows, timing=not args.no_timing)
    if args.out:
        Path(args.out).write_text(table, encoding="utf-8")
    sys.stdout.write(table)
    return EXIT_OK


def cmd_convert(args) -> int:
    out = _need_out(args)
    capture = convert_capture(args.source, args.mapping, load_config(args))
    write_capture(out, capture)
    print(f"frames {len(capture)}  subcarriers {capture.config.num_subcarriers}")
    return EXIT_OK


COMMANDS = {"synth": cmd_synth, "process": cmd_process, "compare": cmd_compare,
            "bench": cmd_bench, "convert": cmd_convert}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"wifi-hpd: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DATA_ERRORS as exc:
        print(f"wifi-hpd: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
