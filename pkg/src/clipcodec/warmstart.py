"""Warm-starting a clip model from its predecessor.

A new clip's model is initialized as a convex blend of a fresh seeded
random draw and the previous clip's trained parameters.  The blend
fraction ``epsilon`` grows with the mean-squared gap between the two
clips: near-identical clips reuse the predecessor almost verbatim, while
dissimilar clips fall back toward a random start.  The mapping is

    epsilon(mse) = 1 - a * exp(-b * mse + c),        a > 0, b > 0,

clamped into [0, 1].  Under the default constraint ``a * exp(c) = 1`` the
schedule passes through epsilon(0) = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from . import detmath
from .errors import ConfigError, DataError, LayoutError
from .params import ParamVector
from .tensor import Tensor


@dataclass(frozen=True)
class EpsilonSchedule:
    a: float = 1.0
    b: float = 40.0
    c: float = 0.0
    degenerate: bool = False  # set by fits over constant-epsilon data

    def __post_init__(self):
        if self.a <= 0:
            raise ConfigError(f"schedule needs a > 0, got a={self.a}")
        if self.b <= 0 and not self.degenerate:
            raise ConfigError(f"schedule needs b > 0, got b={self.b}")
        if self.b < 0:
            raise ConfigError(f"schedule needs b >= 0, got b={self.b}")


@dataclass(frozen=True)
class GopGap:
    """Mean-squared error between position-aligned frames of two clips."""

    mse: float
    pairs: int

    def __post_init__(self):
        if self.mse < 0:
            raise DataError(f"negative gap mse {self.mse}")


def gop_gap_mse(prev_frames: np.ndarray, cur_frames: np.ndarray) -> GopGap:
    """Average per-pixel squared difference over aligned frame pairs.

    Clips of unequal length are truncated to the shorter one.  Frames are
    expected normalized to [0, 1].
    """
    if len(prev_frames) == 0 or len(cur_frames) == 0:
        raise DataError("cannot measure the gap of an empty clip")
    if prev_frames.shape[1:] != cur_frames.shape[1:]:
        raise DataError(f"frame resolution mismatch: "
                        f"{prev_frames.shape[1:]} vs {cur_frames.shape[1:]}")
    pairs = min(len(prev_frames), len(cur_frames))
    diff = (prev_frames[:pairs].astype(np.float64)
            - cur_frames[:pairs].astype(np.float64))
    return GopGap(float(np.mean(diff * diff)), pairs)


def epsilon_for(gap: GopGap, schedule: EpsilonSchedule) -> float:
    """Blend fraction for a measured clip gap, clamped into [0, 1]."""
    raw = 1.0 - schedule.a * float(detmath.exp(-schedule.b * gap.mse
                                               + schedule.c))
    return min(max(raw, 0.0), 1.0)


def interpolate_init(rand_params: ParamVector, trained_prev: ParamVector,
                     epsilon: float) -> ParamVector:
    """Elementwise convex combination eps*random + (1-eps)*trained."""
    if not 0.0 <= epsilon <= 1.0:
        raise ConfigError(f"epsilon {epsilon} outside [0, 1]")
    rand_params.check_same_layout(trained_prev)
    dtype = trained_prev.dtype
    eps = dtype.type(epsilon)
    one_minus = dtype.type(1.0) - eps
    segments = []
    for name in rand_params.names:
        data = (rand_params[name].data * eps
                + trained_prev[name].data * one_minus)
        segments.append((name, Tensor(data)))
    return ParamVector(segments)


def _eval_raw(mse: np.ndarray, a: float, b: float, c: float) -> np.ndarray:
    return 1.0 - a * np.asarray(detmath.exp(-b * mse + c))


def fit_schedule(points: list[tuple[float, float]],
                 constrain: bool = True) -> tuple[EpsilonSchedule, float]:
    """Least-squares fit of the schedule to (gap mse, best epsilon) pairs.

    With ``constrain`` the fit enforces a*exp(c) = 1 (so epsilon(0) = 0)
    and reduces to a one-dimensional problem over b.  Returns the schedule
    and the residual norm.  All-equal epsilon values yield a constant
    schedule flagged ``degenerate``.
    """
    if len(points) < 3:
        raise DataError(f"need at least 3 calibration points, got "
                        f"{len(points)}")
    mse = np.asarray([p[0] for p in points], dtype=np.float64)
    eps = np.asarray([p[1] for p in points], dtype=np.float64)
    if len(np.unique(mse)) != len(mse):
        raise DataError("calibration mse values must be distinct")
    if np.any(mse < 0) or np.any((eps < 0) | (eps > 1)):
        raise DataError("calibration points outside their valid ranges")

    if np.allclose(eps, eps[0], atol=1e-12):
        # constant target: epsilon == eps0 for every mse
        amp = max(1.0 - float(eps[0]), 1e-12)
        sched = EpsilonSchedule(a=amp, b=0.0, c=0.0, degenerate=True)
        resid = float(np.linalg.norm(_eval_raw(mse, amp, 0.0, 0.0) - eps))
        return sched, resid

    span = float(np.ptp(mse))
    b0 = 1.0 / span if span > 0 else 1.0

    tols = dict(xtol=2.5e-16, ftol=2.5e-16, gtol=1e-15)
    if constrain:
        def resid_fn(x):
            return _eval_raw(mse, 1.0, x[0], 0.0) - eps

        sol = least_squares(resid_fn, x0=[b0], bounds=([1e-12], [np.inf]),
                            **tols)
        sched = EpsilonSchedule(a=1.0, b=float(sol.x[0]), c=0.0)
    else:
        # a and c are jointly identifiable only through a*exp(c); fit the
        # product as `a` and report c = 0.
        def resid_fn(x):
            return _eval_raw(mse, x[0], x[1], 0.0) - eps

        sol = least_squares(resid_fn, x0=[1.0, b0],
                            bounds=([1e-12, 1e-12], [np.inf, np.inf]),
                            **tols)
        sched = EpsilonSchedule(a=float(sol.x[0]), b=float(sol.x[1]), c=0.0)
    return sched, float(np.linalg.norm(sol.fun))
