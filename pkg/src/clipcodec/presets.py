"""Named configurations: backbone tiers, clip-length presets, loss weights.

Desk-scale tiers keep a full encode under ten minutes on a laptop.  The
full-scale entries mirror the published operating points this codec's
design targets (clip lengths 6/30/120, model sizes 0.3-9 MB, the two
loss-weight families, and their epoch/learning-rate schedules); they are
honored as named configs but the test suite never trains them.
"""

from __future__ import annotations

import math

from .backbone import BackboneConfig, UpsampleStage, param_layout
from .errors import ConfigError
from .warmstart import EpsilonSchedule

# Clip-length presets (frames per clip).
GOP_PRESETS = {
    "gop-small": 6,
    "gop-medium": 30,
    "gop-large": 120,
}

# Distortion weights: "quality" suits grid-heavy backbones, "rate" compact
# ones.
LAMBDA_PRESETS = {
    "quality": 5.0,
    "rate": 0.5,
}

# Full-scale training schedules per clip-length preset (not used in tests).
FULL_SCALE_EPOCHS_I = {"gop-small": 3000, "gop-medium": 1500,
                       "gop-large": 1500}
FULL_SCALE_EPOCHS_P = {"gop-small": 2000, "gop-medium": 2000,
                       "gop-large": 1000}
FULL_SCALE_LR = {"gop-small": 5e-3, "gop-medium": 5e-3, "gop-large": 2e-3}
FULL_SCALE_LR_COMPACT = {"gop-small": 2e-3, "gop-medium": 2e-3,
                         "gop-large": 1e-3}

# Default blend schedule; b calibrated by scripts/calibrate_epsilon.py on
# the bundled synthetic set (see that script for the procedure).
DEFAULT_EPSILON_B = 60.0
DEFAULT_SCHEDULE = EpsilonSchedule(a=1.0, b=DEFAULT_EPSILON_B, c=0.0)

# Desk-scale channel ladders per tier, indexed by stage count.
_TIER_CHANNELS = {
    "tiny": (12, (12, 10, 8)),
    "small": (24, (24, 16, 12)),
    "medium": (48, (48, 32, 24)),
}
_TIER_STEM = {"tiny": 32, "small": 64, "medium": 96}


def _stage_chain(height: int, width: int) -> tuple[int, int, list[int]]:
    """Factor the frame size into a base map and a chain of 2x stages."""
    if height != width:
        raise ConfigError(f"preset builder expects square frames, got "
                          f"{width}x{height}")
    size = height
    scales = []
    while size > 4 and size % 2 == 0:
        scales.append(2)
        size //= 2
    if not scales:
        raise ConfigError(f"frame size {height} too small for the preset "
                          f"builder; write a config file instead")
    return size, size, scales


def nerv_lite_preset(width: int, height: int, tier: str = "tiny",
                     precision: str = "f32") -> BackboneConfig:
    """Desk-scale backbone sized for the given square frame."""
    if tier not in _TIER_CHANNELS:
        raise ConfigError(f"unknown tier {tier!r} "
                          f"(have {', '.join(_TIER_CHANNELS)})")
    base_h, base_w, scales = _stage_chain(height, width)
    base_channels, ladder = _TIER_CHANNELS[tier]
    stages = []
    for i, scale in enumerate(scales):
        channels = ladder[min(i, len(ladder) - 1)]
        stages.append(UpsampleStage(scale, channels))
    return BackboneConfig(
        kind="nerv-lite", pe_frequencies=8, stem_width=_TIER_STEM[tier],
        base_channels=base_channels, base_height=base_h, base_width=base_w,
        stages=tuple(stages), frame_height=height, frame_width=width,
        activation="gelu", upsample="nearest", precision=precision)


# Full-scale model-size ladder (MB of float32 parameters) at 1920x1080.
MODEL_SIZE_PRESETS_MB = (0.3, 0.45, 0.6, 0.9, 1.8, 2.7, 3.0, 4.5, 6.0, 9.0)


def full_scale_config(size_mb: float, width: int = 1920,
                      height: int = 1080) -> BackboneConfig:
    """A backbone whose parameter count approximates ``size_mb`` megabytes.

    Channel widths scale with sqrt(size); layout only -- training these is
    out of desk-scale scope.
    """
    if size_mb <= 0:
        raise ConfigError("model size must be positive")
    # base 15x? 1080 = 15 * 72; use a 15x27-ish base with three 2x stages
    # and one 3x: 15*2*2*2*3 = 360? Keep it simple: 1080 = 135 * 8.
    base_h, base_w = height // 8, width // 8
    scale = math.sqrt(size_mb / 0.3)
    stem = max(16, int(round(24 * scale)))
    chans = [max(8, int(round(c * scale))) for c in (24, 16, 12)]
    config = BackboneConfig(
        kind="nerv-lite", pe_frequencies=8, stem_width=stem,
        base_channels=chans[0], base_height=base_h, base_width=base_w,
        stages=(UpsampleStage(2, chans[0]), UpsampleStage(2, chans[1]),
                UpsampleStage(2, chans[2])),
        frame_height=height, frame_width=width)
    return config


def preset_param_bytes(config: BackboneConfig) -> int:
    itemsize = 4 if config.precision == "f32" else 8
    return itemsize * sum(spec.count for spec in param_layout(config))
