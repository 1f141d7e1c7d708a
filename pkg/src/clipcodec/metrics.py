"""Quality and rate metrics: PSNR and rate-curve comparison.

PSNR is computed in RGB over 8-bit samples (MAX = 255); reports state
this so the numbers are not confused with luma-only PSNR.  Rate curves
are compared by interpolating log-rate against quality with a natural
cubic spline and integrating the gap over the overlapping quality range.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import DataError
from .video import RawVideo

PSNR_CAP_DB = 100.0  # stands in for infinity in CSV output


@dataclass(frozen=True)
class PsnrResult:
    per_frame: np.ndarray  # dB, +inf where frames match exactly
    mean: float            # mean of per-frame values capped at PSNR_CAP_DB

    def capped(self) -> np.ndarray:
        return np.minimum(self.per_frame, PSNR_CAP_DB)


def psnr(ref: RawVideo, test: RawVideo) -> PsnrResult:
    """Per-frame and mean PSNR between two equally-sized videos."""
    if (ref.width, ref.height, ref.frame_count) != \
            (test.width, test.height, test.frame_count):
        raise DataError(
            f"dimension mismatch: {ref.width}x{ref.height}x{ref.frame_count}"
            f" vs {test.width}x{test.height}x{test.frame_count}")
    diff = ref.frames.astype(np.float64) - test.frames.astype(np.float64)
    mse = np.mean(diff * diff, axis=(1, 2, 3))
    with np.errstate(divide="ignore"):
        per_frame = 10.0 * np.log10(255.0 * 255.0 / mse)
    mean = float(np.mean(np.minimum(per_frame, PSNR_CAP_DB)))
    return PsnrResult(per_frame=per_frame, mean=mean)


@dataclass(frozen=True)
class RDPoint:
    bpp: float
    quality: float  # PSNR dB

    def __post_init__(self):
        if self.bpp <= 0:
            raise DataError(f"bpp must be positive, got {self.bpp}")


def _curve_arrays(points: list[RDPoint], label: str):
    if len(points) < 4:
        raise DataError(f"{label}: need at least 4 rate points, got "
                        f"{len(points)}")
    quality = np.asarray([p.quality for p in points], dtype=np.float64)
    rate = np.asarray([p.bpp for p in points], dtype=np.float64)
    order = np.argsort(quality)
    quality, rate = quality[order], rate[order]
    if np.any(np.diff(quality) <= 0):
        raise DataError(f"{label}: quality values must be distinct")
    return quality, np.log(rate)


def bd_rate(anchor: list[RDPoint], test: list[RDPoint]) -> float:
    """Average rate difference of ``test`` vs ``anchor`` at equal quality,
    in percent; negative means the test curve spends fewer bits."""
    q_a, lr_a = _curve_arrays(anchor, "anchor")
    q_t, lr_t = _curve_arrays(test, "test")
    lo = max(q_a.min(), q_t.min())
    hi = min(q_a.max(), q_t.max())
    if hi <= lo:
        raise DataError(f"no quality overlap: [{q_a.min():.3f}, "
                        f"{q_a.max():.3f}] vs [{q_t.min():.3f}, "
                        f"{q_t.max():.3f}]")
    spline_a = CubicSpline(q_a, lr_a, bc_type="natural")
    spline_t = CubicSpline(q_t, lr_t, bc_type="natural")
    int_a = spline_a.integrate(lo, hi)
    int_t = spline_t.integrate(lo, hi)
    avg_log_diff = (int_t - int_a) / (hi - lo)
    return (math.exp(avg_log_diff) - 1.0) * 100.0


RD_CSV_FIELDS = ("sequence", "gop_size", "gom_size", "lambda", "bpp",
                 "psnr_db", "wall_seconds")


def append_rd_row(path, sequence: str, gop_size: int, gom_size: int,
                  lam: float, bpp: float, psnr_db: float,
                  wall_seconds: float) -> None:
    """Append one encode summary row, writing the header on first use."""
    path = Path(path)
    fresh = not path.exists() or path.stat().st_size == 0
    with path.open("a", newline="") as fh:
        writer = csv.writer(fh)
        if fresh:
            writer.writerow(RD_CSV_FIELDS)
        writer.writerow([sequence, gop_size, gom_size, f"{lam:g}",
                         f"{bpp:.8f}", f"{min(psnr_db, PSNR_CAP_DB):.6f}",
                         f"{wall_seconds:.3f}"])


def read_rd_curve(path) -> list[RDPoint]:
    """Read (bpp, psnr) points from a CSV with named columns."""
    points = []
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty CSV")
        cols = {name.strip().lower() for name in reader.fieldnames}
        if "bpp" not in cols:
            raise DataError(f"{path}: no 'bpp' column")
        quality_col = "psnr_db" if "psnr_db" in cols else "psnr"
        if quality_col not in cols:
            raise DataError(f"{path}: no 'psnr_db' or 'psnr' column")
        for row in reader:
            row = {k.strip().lower(): v for k, v in row.items()}
            points.append(RDPoint(bpp=float(row["bpp"]),
                                  quality=float(row[quality_col])))
    if not points:
        raise DataError(f"{path}: no rate points")
    return points
