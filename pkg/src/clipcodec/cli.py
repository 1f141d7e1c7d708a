"""Command-line surface.

Exit codes: 0 success, 2 usage/configuration error, 3 data error
(unreadable files, malformed streams), 4 numeric failure (divergence,
non-finite values).
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import metrics, presets, video as videomod
from .backbone import config_from_text, config_to_text
from .bitstream import BitstreamReader, dump_header_text
from .errors import (BitstreamError, CodecError, ConfigError, DataError,
                     NumericError)
from .manifest import RunManifest, build_manifest
from .pipeline import TrainConfig, decode_gom, decode_video, encode_video, \
    partition
from .warmstart import EpsilonSchedule, fit_schedule

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _write_atomic(path: Path, data: bytes) -> None:
    """Write via a temp file + rename: failures leave no partial output."""
    fd, tmp = tempfile.mkstemp(dir=path.parent or Path("."),
                               prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _add_synth(sub):
    p = sub.add_parser("synth", help="generate a synthetic raw RGB video")
    p.add_argument("out", type=Path)
    p.add_argument("--kind", choices=videomod.SYNTH_KINDS, default="static")
    p.add_argument("--width", type=int, default=32)
    p.add_argument("--height", type=int, default=32)
    p.add_argument("--frames", type=int, default=60)
    p.add_argument("--velocity", type=float, default=0.0,
                   help="pan/translation speed in pixels per frame")
    p.add_argument("--seed", type=int, default=0)


def _cmd_synth(args) -> int:
    vid = videomod.synth_video(args.kind, args.width, args.height,
                               args.frames, velocity=args.velocity,
                               seed=args.seed)
    _write_atomic(args.out, vid.to_bytes())
    print(f"wrote {args.out} ({vid.frame_count} frames, "
          f"{len(vid.to_bytes())} bytes)")
    return EXIT_OK


def _add_encode(sub):
    p = sub.add_parser("encode", help="fit and compress a raw RGB video")
    p.add_argument("input", type=Path, nargs="?",
                   help="raw planar RGB8 file (omit with --from-manifest)")
    p.add_argument("--out", type=Path, required=True,
                   help="output bitstream path")
    p.add_argument("--from-manifest", type=Path,
                   help="re-run a previous encode exactly")
    p.add_argument("--width", type=int, default=32)
    p.add_argument("--height", type=int, default=32)
    p.add_argument("--gop", "-p", type=int, default=10,
                   help="frames per clip, or use --gop-preset")
    p.add_argument("--gop-preset", choices=sorted(presets.GOP_PRESETS))
    p.add_argument("--gom", "-m", type=int, default=3,
                   help="clips per model group")
    p.add_argument("--tier", choices=("tiny", "small", "medium"),
                   default="tiny", help="desk-scale backbone size")
    p.add_argument("--backbone-config", type=Path,
                   help="explicit backbone config file (overrides --tier)")
    p.add_argument("--lambda", dest="lam", type=float, default=1e6,
                   help="distortion weight in the training loss")
    p.add_argument("--lambda-preset", choices=sorted(presets.LAMBDA_PRESETS),
                   help="named full-scale distortion weight")
    p.add_argument("--epochs-i", type=int, default=60)
    p.add_argument("--epochs-p", type=int, default=40)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--warmup-frac", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel workers; parallelism is across model "
                        "groups only")
    p.add_argument("--precision", choices=("f32", "f64"), default="f32")
    p.add_argument("--csv", type=Path, help="append the summary row here")
    p.add_argument("--log", type=Path, help="write per-epoch JSONL records")
    p.add_argument("--emit-manifest", type=Path,
                   help="manifest path (default: <out>.manifest.json)")
    p.add_argument("--sequence", default=None,
                   help="label for the CSV row (default: input stem)")


def _cmd_encode(args) -> int:
    if args.from_manifest:
        manifest = RunManifest.load(args.from_manifest)
        input_path = Path(manifest.input_path)
        config = manifest.backbone()
        cfg = manifest.train_config()
        width, height = manifest.width, manifest.height
        gop_size, gom_size = manifest.gop_size, manifest.gom_size
        jobs = manifest.jobs
    else:
        if args.input is None:
            raise ConfigError("encode needs an input file or --from-manifest")
        input_path = args.input
        width, height = args.width, args.height
        gop_size = (presets.GOP_PRESETS[args.gop_preset]
                    if args.gop_preset else args.gop)
        gom_size = args.gom
        lam = (presets.LAMBDA_PRESETS[args.lambda_preset]
               if args.lambda_preset else args.lam)
        if args.backbone_config:
            config = config_from_text(args.backbone_config.read_text())
        else:
            config = presets.nerv_lite_preset(width, height, args.tier,
                                              precision=args.precision)
        cfg = TrainConfig(epochs_i=args.epochs_i, epochs_p=args.epochs_p,
                          lr_i=args.lr, lr_p=args.lr, lam=lam,
                          warmup_frac=args.warmup_frac, seed=args.seed,
                          schedule=presets.DEFAULT_SCHEDULE)
        jobs = args.jobs

    if not input_path.exists():
        raise DataError(f"input file {input_path} does not exist")
    vid = videomod.load_raw(input_path, width, height)
    plan = partition(vid.frame_count, gop_size, gom_size)
    result = encode_video(vid, plan, config, cfg, jobs=jobs,
                          log_path=args.log)
    _write_atomic(args.out, result.data)

    manifest = build_manifest(input_path, width, height, vid.frame_count,
                              gop_size, gom_size, config, cfg, jobs=jobs)
    manifest_path = args.emit_manifest or args.out.with_suffix(
        args.out.suffix + ".manifest.json")
    manifest.save(manifest_path)

    sequence = args.sequence or input_path.stem
    if args.csv:
        metrics.append_rd_row(args.csv, sequence, gop_size, gom_size,
                              cfg.lam, result.bpp, result.psnr_mean,
                              result.wall_seconds)
    print(f"encoded {sequence}: {len(result.data)} bytes, "
          f"bpp={result.bpp:.6f}, psnr={result.psnr_mean:.3f} dB "
          f"(RGB, 8-bit), {result.wall_seconds:.1f}s")
    for log in result.per_model:
        print(f"  model {log.index} [{log.role}] eps={log.epsilon:.4f} "
              f"payload={log.payload_bits} bits "
              f"est={log.estimate_bits:.0f} bits")
    return EXIT_OK


def _add_decode(sub):
    p = sub.add_parser("decode", help="reconstruct raw video from a "
                                      "bitstream")
    p.add_argument("bitstream", type=Path)
    p.add_argument("out", type=Path, nargs="?")
    p.add_argument("--gom", type=int, default=None,
                   help="decode only this model group's frame range")
    p.add_argument("--dump-header", action="store_true",
                   help="print the parsed header and exit")


def _cmd_decode(args) -> int:
    if not args.bitstream.exists():
        raise DataError(f"bitstream {args.bitstream} does not exist")
    if args.dump_header:
        with args.bitstream.open("rb") as fh:
            reader = BitstreamReader(fh)
            print(dump_header_text(reader.header))
        return EXIT_OK
    if args.out is None:
        raise ConfigError("decode needs an output path (or --dump-header)")
    if args.gom is not None:
        with args.bitstream.open("rb") as fh:
            reader = BitstreamReader(fh)
            fragment, (start, end) = decode_gom(reader, args.gom)
        _write_atomic(args.out, fragment.to_bytes())
        print(f"decoded group {args.gom}: frames [{start}, {end}) -> "
              f"{args.out}")
        return EXIT_OK
    data = args.bitstream.read_bytes()
    vid = decode_video(data)
    _write_atomic(args.out, vid.to_bytes())
    print(f"decoded {vid.frame_count} frames -> {args.out}")
    return EXIT_OK


def _add_eval(sub):
    p = sub.add_parser("eval", help="PSNR between two raw videos")
    p.add_argument("reference", type=Path)
    p.add_argument("test", type=Path)
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--per-frame", action="store_true")


def _cmd_eval(args) -> int:
    ref = videomod.load_raw(args.reference, args.width, args.height)
    test = videomod.load_raw(args.test, args.width, args.height)
    result = metrics.psnr(ref, test)
    if args.per_frame:
        for i, value in enumerate(result.capped()):
            print(f"frame {i}: {value:.6f} dB")
    print(f"mean psnr: {result.mean:.6f} dB (RGB, 8-bit)")
    return EXIT_OK


def _add_bdrate(sub):
    p = sub.add_parser("bdrate", help="average rate difference between two "
                                      "rate-quality curves")
    p.add_argument("anchor", type=Path, help="CSV with bpp and psnr columns")
    p.add_argument("test", type=Path)


def _cmd_bdrate(args) -> int:
    anchor = metrics.read_rd_curve(args.anchor)
    test = metrics.read_rd_curve(args.test)
    value = metrics.bd_rate(anchor, test)
    print(f"bd-rate: {value:+.4f}% (negative = test saves bits)")
    return EXIT_OK


def _add_fit_epsilon(sub):
    p = sub.add_parser("fit-epsilon",
                       help="fit the blend schedule to (mse, epsilon) "
                            "calibration points")
    p.add_argument("points", type=Path,
                   help="CSV with mse and epsilon columns")
    p.add_argument("--out", type=Path, required=True,
                   help="write the fitted schedule as JSON")
    p.add_argument("--unconstrained", action="store_true",
                   help="do not pin epsilon(0) = 0")


def _cmd_fit_epsilon(args) -> int:
    points = []
    with args.points.open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{args.points}: empty CSV")
        cols = {c.strip().lower() for c in reader.fieldnames}
        if "mse" not in cols or "epsilon" not in cols:
            raise DataError(f"{args.points}: need 'mse' and 'epsilon' "
                            f"columns")
        for row in reader:
            row = {k.strip().lower(): v for k, v in row.items()}
            points.append((float(row["mse"]), float(row["epsilon"])))
    schedule, residual = fit_schedule(points,
                                      constrain=not args.unconstrained)
    payload = (f'{{\n  "a": {schedule.a!r},\n  "b": {schedule.b!r},\n'
               f'  "c": {schedule.c!r},\n  "degenerate": '
               f'{"true" if schedule.degenerate else "false"},\n'
               f'  "fit_residual": {residual!r}\n}}\n')
    _write_atomic(args.out, payload.encode())
    flag = " (degenerate: constant epsilon)" if schedule.degenerate else ""
    print(f"fitted schedule: a={schedule.a:.8g} b={schedule.b:.8g} "
          f"c={schedule.c:.8g}, residual={residual:.3e}{flag}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clipcodec",
        description="Clip-wise neural video codec: one small implicit "
                    "model per clip, coded against its predecessor.")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_synth(sub)
    _add_encode(sub)
    _add_decode(sub)
    _add_eval(sub)
    _add_bdrate(sub)
    _add_fit_epsilon(sub)
    return parser


_HANDLERS = {
    "synth": _cmd_synth,
    "encode": _cmd_encode,
    "decode": _cmd_decode,
    "eval": _cmd_eval,
    "bdrate": _cmd_bdrate,
    "fit-epsilon": _cmd_fit_epsilon,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (BitstreamError, DataError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except CodecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
