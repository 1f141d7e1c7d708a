"""CLI workflows and exit-code contract."""

import csv
import math
import subprocess
import sys

import numpy as np
import pytest

from clipcodec import detmath
from clipcodec.cli import main
from clipcodec.metrics import psnr
from clipcodec.video import load_raw

COMMON = ["--width", "16", "--height", "16"]
ENCODE_FAST = ["-p", "4", "-m", "2", "--epochs-i", "4", "--epochs-p", "3",
               "--seed", "7"]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli")
    assert main(["synth", str(path / "in.rgb"), "--kind", "moving-blob",
                 "--velocity", "1", "--frames", "8", "--seed", "5",
                 *COMMON]) == 0
    assert main(["encode", str(path / "in.rgb"), "--out",
                 str(path / "out.bits"), "--csv", str(path / "rd.csv"),
                 *COMMON, *ENCODE_FAST]) == 0
    return path


def test_synth_expected_size(tmp_path):
    out = tmp_path / "v.rgb"
    assert main(["synth", str(out), "--kind", "static", "--width", "32",
                 "--height", "32", "--frames", "60"]) == 0
    assert out.stat().st_size == 184320  # 3 * 32 * 32 * 60


def test_encode_decode_eval_closure(workdir):
    assert main(["decode", str(workdir / "out.bits"),
                 str(workdir / "dec.rgb")]) == 0
    ref = load_raw(workdir / "in.rgb", 16, 16)
    dec = load_raw(workdir / "dec.rgb", 16, 16)
    with open(workdir / "rd.csv", newline="") as fh:
        row = list(csv.DictReader(fh))[0]
    assert float(row["psnr_db"]) == pytest.approx(psnr(ref, dec).mean,
                                                  abs=1e-6)
    assert float(row["bpp"]) == pytest.approx(
        (workdir / "out.bits").stat().st_size * 8 / (8 * 16 * 16), abs=1e-9)


def test_decode_single_gom_matches_full(workdir):
    assert main(["decode", str(workdir / "out.bits"),
                 str(workdir / "frag.rgb"), "--gom", "1"]) == 0
    full = load_raw(workdir / "dec.rgb", 16, 16)
    frag = load_raw(workdir / "frag.rgb", 16, 16)
    assert np.array_equal(frag.frames, full.frames[4:8])


def test_dump_header_mode(workdir, capsys):
    assert main(["decode", str(workdir / "out.bits"),
                 "--dump-header"]) == 0
    out = capsys.readouterr().out
    assert "gop_size=4" in out and "role=P" in out


def test_manifest_rerun_is_byte_identical(workdir):
    manifest = workdir / "out.bits.manifest.json"
    assert manifest.exists()
    assert main(["encode", "--from-manifest", str(manifest), "--out",
                 str(workdir / "again.bits")]) == 0
    assert (workdir / "again.bits").read_bytes() == \
        (workdir / "out.bits").read_bytes()


def test_missing_input_exits_3_without_partial_output(tmp_path):
    out = tmp_path / "never.bits"
    code = main(["encode", str(tmp_path / "absent.rgb"), "--out", str(out),
                 *COMMON, *ENCODE_FAST])
    assert code == 3
    assert not out.exists()


def test_corrupted_stream_exits_3(workdir, tmp_path, capsys):
    blob = bytearray((workdir / "out.bits").read_bytes())
    blob[-10] ^= 0x40  # payload byte
    bad = tmp_path / "bad.bits"
    bad.write_bytes(bytes(blob))
    code = main(["decode", str(bad), str(tmp_path / "x.rgb")])
    assert code == 3
    err = capsys.readouterr().err
    assert "offset" in err


def test_usage_error_exit_code():
    with pytest.raises(SystemExit) as excinfo:
        main(["decode"])  # missing positional
    assert excinfo.value.code == 2


def test_bad_gom_index_exits_2(workdir):
    assert main(["decode", str(workdir / "out.bits"),
                 str(workdir / "y.rgb"), "--gom", "99"]) == 2


def test_eval_command(workdir, capsys):
    assert main(["eval", str(workdir / "in.rgb"), str(workdir / "in.rgb"),
                 *COMMON]) == 0
    assert "100.0" in capsys.readouterr().out  # capped PSNR


def test_bdrate_command(tmp_path, capsys):
    for name, scale in (("a.csv", 1.0), ("b.csv", 0.5)):
        with open(tmp_path / name, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bpp", "psnr"])
            for bpp, quality in ((0.1, 30), (0.2, 33), (0.4, 36), (0.8, 39)):
                writer.writerow([bpp * scale, quality])
    assert main(["bdrate", str(tmp_path / "a.csv"),
                 str(tmp_path / "b.csv")]) == 0
    assert "-50.0" in capsys.readouterr().out


def test_fit_epsilon_command(tmp_path, capsys):
    points = tmp_path / "points.csv"
    with open(points, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["mse", "epsilon"])
        for mse in (0.02, 0.1, 0.5, 1.1, 2.5):
            writer.writerow([mse, 1.0 - float(detmath.exp(-0.8 * mse))])
    out = tmp_path / "sched.json"
    assert main(["fit-epsilon", str(points), "--out", str(out)]) == 0
    import json
    sched = json.loads(out.read_text())
    assert sched["b"] == pytest.approx(0.8, abs=1e-6)


def test_cli_entrypoint_via_subprocess(tmp_path):
    """The installed console script behaves like main()."""
    out = tmp_path / "tiny.rgb"
    proc = subprocess.run(
        [sys.executable, "-m", "clipcodec.cli", "synth", str(out),
         "--width", "8", "--height", "8", "--frames", "2"],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert out.stat().st_size == 3 * 8 * 8 * 2
