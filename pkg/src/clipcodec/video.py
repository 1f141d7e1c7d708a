"""Raw planar RGB video: file I/O and deterministic synthetic sequences.

The on-disk format is headerless planar RGB8: per frame, the full red
plane, then green, then blue, row-major; frames concatenated.  Dimensions
travel out of band (CLI flags).  Internally frames live in a (T, 3, H, W)
uint8 array; training code views them normalized to [0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import detmath
from .errors import DataError
from .seeds import make_rng

SYNTH_KINDS = ("static", "moving-blob", "moving-rect", "noise-texture-pan")


@dataclass
class RawVideo:
    width: int
    height: int
    frames: np.ndarray  # (T, 3, H, W) uint8

    def __post_init__(self):
        expect = (len(self.frames), 3, self.height, self.width)
        if self.frames.shape != expect or self.frames.dtype != np.uint8:
            raise DataError(f"frame buffer {self.frames.shape} "
                            f"{self.frames.dtype} != {expect} uint8")

    @property
    def frame_count(self) -> int:
        return len(self.frames)

    @property
    def pixel_count(self) -> int:
        return self.frame_count * self.height * self.width

    def normalized(self, dtype=np.float32) -> np.ndarray:
        """Frames as (T, 3, H, W) reals in [0, 1]."""
        return self.frames.astype(dtype) / np.dtype(dtype).type(255.0)

    def to_bytes(self) -> bytes:
        return self.frames.tobytes()


def denormalize(frames: np.ndarray) -> np.ndarray:
    """[0, 1] reals back to uint8: round half away, clamp to [0, 255]."""
    scaled = detmath.round_half_away(frames.astype(np.float64) * 255.0)
    return np.clip(scaled, 0.0, 255.0).astype(np.uint8)


def from_normalized(frames: np.ndarray, width: int, height: int) -> RawVideo:
    return RawVideo(width=width, height=height, frames=denormalize(frames))


def load_raw(path, width: int, height: int) -> RawVideo:
    """Read planar RGB8; the frame count is inferred from the file size."""
    raw = Path(path).read_bytes()
    frame_bytes = 3 * width * height
    if frame_bytes <= 0:
        raise DataError(f"bad dimensions {width}x{height}")
    if len(raw) == 0 or len(raw) % frame_bytes != 0:
        raise DataError(f"{path}: size {len(raw)} not a positive multiple of "
                        f"{frame_bytes} (3*{width}*{height})")
    frames = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3, height, width)
    return RawVideo(width=width, height=height, frames=frames.copy())


def save_raw(video: RawVideo, path) -> None:
    Path(path).write_bytes(video.to_bytes())


def _grid(width: int, height: int):
    ys = np.arange(height, dtype=np.float64)[:, None]
    xs = np.arange(width, dtype=np.float64)[None, :]
    return xs, ys


def _periodic_background(xs: np.ndarray, ys: np.ndarray, width: int,
                         height: int, coeff: np.ndarray) -> np.ndarray:
    """Smooth texture, periodic in x, evaluated at (possibly shifted) xs.

    Horizontal frequencies are integer multiples of 2*pi/width, so shifting
    xs by the frame velocity translates the whole texture exactly.
    """
    two_pi = 2.0 * math.pi
    planes = []
    for c in range(3):
        a1, a2, p1, p2 = coeff[c]
        plane = (0.5
                 + 0.18 * a1 * detmath.sin(two_pi * xs / width
                                           + two_pi * ys / height + p1)
                 + 0.12 * a2 * detmath.sin(2.0 * two_pi * xs / width
                                           - two_pi * ys / height + p2))
        planes.append(plane)
    return np.stack(planes)


def _wrap_delta(pos: np.ndarray, center: float, span: int) -> np.ndarray:
    """Signed distance on a periodic axis, in [-span/2, span/2)."""
    return (pos - center + span / 2.0) % span - span / 2.0


def synth_video(kind: str, width: int, height: int, frame_count: int,
                velocity: float = 0.0, seed: int = 0) -> RawVideo:
    """Deterministic synthetic sequences for desk-scale experiments.

    Moving kinds translate the whole frame on a periodic canvas at
    ``velocity`` pixels per frame: frame t is frame 0 shifted by t*v, so
    an integer velocity makes frame t+1 an exact roll of frame t.
    """
    if kind not in SYNTH_KINDS:
        raise DataError(f"unknown synthetic kind {kind!r} "
                        f"(have {', '.join(SYNTH_KINDS)})")
    if width < 1 or height < 1 or frame_count < 1:
        raise DataError("synthetic video needs positive dimensions")
    rng = make_rng(seed)
    coeff = np.stack([np.concatenate([rng.uniform(0.5, 1.0, 2),
                                      rng.uniform(0.0, 2.0 * math.pi, 2)])
                      for _ in range(3)])
    color = rng.uniform(0.6, 1.0, size=3)
    xs, ys = _grid(width, height)
    frames = np.empty((frame_count, 3, height, width), dtype=np.uint8)

    if kind == "noise-texture-pan":
        texture = rng.uniform(0.0, 1.0, size=(3, height, width))
        for t in range(frame_count):
            shift = int(detmath.round_half_away(velocity * t))
            frames[t] = denormalize(np.roll(texture, shift, axis=2))
        return RawVideo(width=width, height=height, frames=frames)

    if kind == "static":
        velocity = 0.0
    cx0 = width * 0.5
    cy0 = height * 0.5
    radius = 0.16 * min(width, height)
    half_w = max(width // 8, 1)
    half_h = max(height // 8, 1)
    for t in range(frame_count):
        shift = velocity * t
        bg = _periodic_background(xs - shift, ys, width, height, coeff)
        if kind == "static":
            art = bg
        else:
            cx = (cx0 + shift) % width
            dx = _wrap_delta(xs, cx, width)
            dy = _wrap_delta(ys, cy0, height)
            if kind == "moving-blob":
                bump = detmath.exp(-(dx * dx + dy * dy)
                                   / (2.0 * radius * radius))
                art = bg + 0.8 * color[:, None, None] * bump[None]
            else:  # moving-rect
                inside = ((np.abs(dx) <= half_w)
                          & (np.abs(dy) <= half_h)).astype(np.float64)
                art = bg + 0.7 * color[:, None, None] * inside[None]
        frames[t] = denormalize(np.clip(art, 0.0, 1.0))
        if kind == "static" and t == 0:
            frames[1:] = frames[0]
            break
    return RawVideo(width=width, height=height, frames=frames)
