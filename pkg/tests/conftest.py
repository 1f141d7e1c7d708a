"""Shared fixtures: tiny backbones and a finite-difference oracle."""

from __future__ import annotations

import numpy as np
import pytest

from clipcodec.backbone import BackboneConfig, UpsampleStage


def fd_gradient(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar f() w.r.t. the array x.

    Mutates x in place around each element; f must re-run the forward
    pass from the current x contents.
    """
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def rel_error(analytic: np.ndarray, numeric: np.ndarray,
              floor: float = 1e-6) -> float:
    scale = np.maximum(np.abs(numeric), np.abs(analytic))
    return float(np.max(np.abs(analytic - numeric)
                        / np.maximum(scale, floor)))


@pytest.fixture
def tiny_nerv() -> BackboneConfig:
    """~2.6k parameters, 16x16 frames, fast enough for direct gradchecks."""
    return BackboneConfig(
        kind="nerv-lite", pe_frequencies=4, stem_width=12, base_channels=6,
        base_height=4, base_width=4,
        stages=(UpsampleStage(2, 6), UpsampleStage(2, 5)),
        frame_height=16, frame_width=16, activation="gelu",
        upsample="nearest", precision="f64")


@pytest.fixture
def tiny_subpel() -> BackboneConfig:
    return BackboneConfig(
        kind="nerv-lite", pe_frequencies=4, stem_width=10, base_channels=6,
        base_height=4, base_width=4,
        stages=(UpsampleStage(2, 5), UpsampleStage(2, 4)),
        frame_height=16, frame_width=16, activation="sin",
        upsample="subpel", precision="f64")


@pytest.fixture
def tiny_mlp() -> BackboneConfig:
    return BackboneConfig(
        kind="coord-mlp", pe_frequencies=3, hidden=(14, 12),
        frame_height=12, frame_width=12, activation="gelu",
        precision="f64")
