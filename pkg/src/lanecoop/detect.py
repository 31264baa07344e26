"""Lane-change start/end detection on lateral position traces.

Starting at the lateral-speed peak, the search walks outward in both directions
until the speed settles below a threshold, then checks that the enclosed
segment actually crosses a lane line and moves in the direction of the net
lateral displacement. Rejected peaks are masked and the next-largest peak is
tried.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from lanecoop import DT, LANE_WIDTH
from lanecoop.errors import ConfigError
from lanecoop.numeric import lognormal_cdf, lognormal_fit, savgol_filter


@dataclass(frozen=True)
class DetectConfig:
    delta: float = 0.05
    lane_width: float = LANE_WIDTH
    max_rejected_peaks: int = 5
    dt: float = DT

    def __post_init__(self):
        if self.delta <= 0 or self.lane_width <= 0:
            raise ConfigError("delta and lane_width must be positive")
        if self.max_rejected_peaks < 1:
            raise ConfigError("max_rejected_peaks must be >= 1")


@dataclass(frozen=True)
class LcEvent:
    start_idx: int
    end_idx: int
    peak_idx: int
    direction: str = "right"
    dt: float = DT

    @property
    def duration(self) -> float:
        return (self.end_idx - self.start_idx) * self.dt

    def to_dict(self) -> dict:
        return {"start_idx": self.start_idx, "end_idx": self.end_idx, "peak_idx": self.peak_idx,
                "direction": self.direction, "duration_s": round(self.duration, 10)}


def lateral_speed(y_lat, dt: float = DT) -> np.ndarray:
    y = np.asarray(y_lat, dtype=float)
    if len(y) < 2:
        raise ConfigError("need at least two lateral samples")
    return np.diff(y) / dt


def _sgn(x: float) -> int:
    return 1 if x >= 0 else -1  # zero counts as positive


def spans_lane_line(lo: float, hi: float, lane_width: float) -> bool:
    """True when some multiple of ``lane_width`` lies in ``[lo, hi]`` (either order)."""
    if lo > hi:
        lo, hi = hi, lo
    return math.ceil(lo / lane_width - 1e-12) <= math.floor(hi / lane_width + 1e-12)


def search_boundary(v, y, start_idx: int, delta: float, direction, lane_width: float = LANE_WIDTH):
    """Walk from ``start_idx`` until the lateral speed has settled.

    Returns ``(idx, crossed)``. A step qualifies when ``|v| <= delta`` and the
    speed has either just dropped below ``delta`` or shows a slope sign flip.
    ``crossed`` tells whether the walked segment, including the interval of
    the starting sample, spans a lane line. Exhausting the trace returns the
    end index and ``False``.
    """
    step = {"left": -1, "right": 1, -1: -1, 1: 1}.get(direction)
    if step is None:
        raise ConfigError(f"direction must be 'left' or 'right', got {direction!r}")
    n_v = len(v)
    t = start_idx
    # y-range covered so far, seeded with the interval belonging to v[start_idx]
    lo = min(y[start_idx], y[start_idx + 1])
    hi = max(y[start_idx], y[start_idx + 1])
    while (step == -1 and t >= 1) or (step == 1 and t < n_v - 1):
        lo = min(lo, y[t])
        hi = max(hi, y[t])
        settled = abs(v[t]) <= delta
        flipped = 1 <= t <= n_v - 2 and _sgn(v[t + 1] - v[t]) != _sgn(v[t] - v[t - 1])
        just_dropped = 0 <= t - step < n_v and abs(v[t - step]) > delta
        if settled and (flipped or just_dropped):
            return t, spans_lane_line(lo, hi, lane_width)
        t += step
    return (0 if step == -1 else n_v - 1), False


def detect_events(y_lat, config: DetectConfig = DetectConfig()) -> LcEvent | None:
    """Detect the single lane change in a smoothed lateral trace, or ``None``."""
    y = np.asarray(y_lat, dtype=float)
    if len(y) < 4:
        return None
    v = lateral_speed(y, config.dt)
    net = np.sign(y[-1] - y[0])
    available = np.ones(len(v), dtype=bool)
    rejected = 0
    while rejected < config.max_rejected_peaks and available.any():
        speed = np.where(available, np.abs(v), -1.0)
        peak = int(np.argmax(speed))
        if speed[peak] <= 0:
            return None
        left, _ = search_boundary(v, y, peak, config.delta, "left", config.lane_width)
        right, _ = search_boundary(v, y, peak, config.delta, "right", config.lane_width)
        segment = y[left:right + 2]
        if (np.sign(v[peak]) == net and left < right
                and spans_lane_line(segment.min(), segment.max(), config.lane_width)
                and abs(y[right] - y[left]) >= 0.5 * config.lane_width):
            return LcEvent(left, right, peak, "right" if y[right] > y[left] else "left", config.dt)
        available[left:right + 1] = False
        rejected += 1
    return None


def duration_stats(events) -> tuple[float, float, np.ndarray]:
    """Log-normal fit of event durations and the sorted empirical-minus-fitted CDF."""
    durations = np.sort([e.duration if isinstance(e, LcEvent) else float(e) for e in events])
    mu, sigma = lognormal_fit(durations)
    empirical = (np.arange(len(durations)) + 0.5) / len(durations)
    return mu, sigma, empirical - lognormal_cdf(durations, mu, sigma)


def detect_two_pass(y_base, config: DetectConfig = DetectConfig(), coarse_window: int = 51):
    """Detect on a coarse Savitzky-Golay smoothing, then re-smooth with a window
    as long as the detected manoeuvre and detect again.

    ``y_base`` is the lateral trace after the rolling median. A fixed window is
    either too short for slow lane changes (noise stops the search early) or
    too long for fast ones (the knees get blurred); matching the window to the
    manoeuvre length keeps the boundary bias small across 3-8 s durations.
    """
    y = np.asarray(y_base, dtype=float)
    n = len(y)
    window = min(coarse_window, n if n % 2 else n - 1)
    if window < 5:
        return detect_events(y, config)
    event = detect_events(savgol_filter(y, window, 3), config)
    if event is None:
        return None
    frames = event.end_idx - event.start_idx
    refine = min(max(11, frames | 1), n if n % 2 else n - 1)
    refined = detect_events(savgol_filter(y, refine, 3), config)
    return refined if refined is not None else event
