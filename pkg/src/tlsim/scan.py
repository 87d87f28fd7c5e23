"""Scan engine: raster plans, the acquisition timeline, and timing oracles.

A plan rasters a rectangular region line by line along the fast axis.
Stage timing is dominated by line count (mechanical turnaround per line);
the galvo-equivalent timing model exists purely for comparison against a
deflection-based acquisition of the same plan.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict
from enum import Enum

import numpy as np

from .errors import ConfigurationError, StageFaultError
from .instrument import Instrument, Scene, measure_positions

DEFAULT_REFOCUS_TIME_S = 2.0


class FastAxis(Enum):
    VERTICAL = "vertical"
    HORIZONTAL = "horizontal"


@dataclass(frozen=True)
class ScanPlan:
    region_um: tuple[float, float, float, float]  # x0, y0, x1, y1
    pixel_pitch_um: float
    stage_speed_um_s: float
    samples_per_pixel: int = 1
    fast_axis: FastAxis = FastAxis.VERTICAL
    serpentine: bool = False
    turnaround_time_s: float = 0.2
    refocus_every_n_lines: int | None = None
    motion_blur: bool = False

    def __post_init__(self):
        x0, y0, x1, y1 = self.region_um
        if not (x1 > x0 and y1 > y0):
            raise ConfigurationError("scan region must be a nonempty rectangle")
        if self.pixel_pitch_um <= 0:
            raise ConfigurationError("pixel pitch must be positive")
        if self.stage_speed_um_s <= 0:
            raise ConfigurationError("stage speed must be positive")
        if self.samples_per_pixel < 1:
            raise ConfigurationError("samples_per_pixel must be >= 1")
        if self.turnaround_time_s < 0:
            raise ConfigurationError("turnaround time must be >= 0")
        if self.refocus_every_n_lines is not None and self.refocus_every_n_lines < 1:
            raise ConfigurationError("refocus_every_n_lines must be >= 1")

    def pixel_counts(self) -> tuple[int, int]:
        """(nx, ny) pixels: ceil(extent / pitch) per axis."""
        x0, y0, x1, y1 = self.region_um
        nx = math.ceil((x1 - x0) / self.pixel_pitch_um - 1e-9)
        ny = math.ceil((y1 - y0) / self.pixel_pitch_um - 1e-9)
        return nx, ny

    def line_counts(self) -> tuple[int, int]:
        """(n_fast, n_slow) pixel counts along the fast and slow axes."""
        nx, ny = self.pixel_counts()
        return (ny, nx) if self.fast_axis is FastAxis.VERTICAL else (nx, ny)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fast_axis"] = self.fast_axis.value
        d["region_um"] = list(self.region_um)
        return d


@dataclass
class ResponseMap:
    """Current map over a scanned region.

    values[iy, ix] in amperes; iy = 0 is the bottom row (y up).  Pixel
    centers sit at origin + (index + 0.5) * pitch.
    """

    values: np.ndarray
    origin_um: tuple[float, float]
    pixel_pitch_um: float
    line_timestamps_s: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def x_centers(self) -> np.ndarray:
        return self.origin_um[0] + (np.arange(self.values.shape[1]) + 0.5) * self.pixel_pitch_um

    def y_centers(self) -> np.ndarray:
        return self.origin_um[1] + (np.arange(self.values.shape[0]) + 0.5) * self.pixel_pitch_um

    def extent_um(self) -> tuple[float, float, float, float]:
        ny, nx = self.values.shape
        x0, y0 = self.origin_um
        return (x0, y0, x0 + nx * self.pixel_pitch_um, y0 + ny * self.pixel_pitch_um)

    def same_geometry(self, other: "ResponseMap") -> bool:
        return (self.values.shape == other.values.shape
                and np.isclose(self.pixel_pitch_um, other.pixel_pitch_um)
                and np.allclose(self.origin_um, other.origin_um))


def _refocus_counts(n_slow: int, every: int | None) -> np.ndarray:
    """Number of refocus events completed before each line starts."""
    lines = np.arange(n_slow)
    if not every:
        return np.zeros(n_slow, dtype=int)
    return lines // every


def stage_scan_time(plan: ScanPlan, refocus_time_s: float | None = None) -> float:
    """Wall-clock estimate for a stage raster of the plan.

    Each line costs its sweep (n_fast pixels at pitch/speed each) plus one
    mechanical turnaround; scheduled refocus stops add on top.
    """
    n_fast, n_slow = plan.line_counts()
    dwell = plan.pixel_pitch_um / plan.stage_speed_um_s
    line_time = n_fast * dwell
    if refocus_time_s is None:
        refocus_time_s = DEFAULT_REFOCUS_TIME_S
    n_ref = 0
    if plan.refocus_every_n_lines:
        n_ref = (n_slow - 1) // plan.refocus_every_n_lines
    return n_slow * (line_time + plan.turnaround_time_s) + n_ref * refocus_time_s


def galvo_scan_time(plan: ScanPlan, dwell_per_pixel_s: float,
                    line_overhead_s: float = 0.0) -> float:
    """Timing model for a deflection-based (galvo) acquisition of the same
    plan: per-pixel dwell plus a small per-line overhead, no mechanical
    turnaround."""
    if dwell_per_pixel_s < 0 or line_overhead_s < 0:
        raise ConfigurationError("galvo timing parameters must be >= 0")
    n_fast, n_slow = plan.line_counts()
    return n_fast * n_slow * dwell_per_pixel_s + n_slow * line_overhead_s


@dataclass(frozen=True)
class SpeedupReport:
    stage_time_s: float
    galvo_time_s: float
    factor: float


def speedup_report(plan: ScanPlan, galvo_dwell_s: float,
                   galvo_line_overhead_s: float = 0.0,
                   refocus_time_s: float | None = None) -> SpeedupReport:
    ts = stage_scan_time(plan, refocus_time_s=refocus_time_s)
    tg = galvo_scan_time(plan, galvo_dwell_s, galvo_line_overhead_s)
    if tg <= 0:
        raise ConfigurationError("galvo time must be positive for a speedup ratio")
    return SpeedupReport(stage_time_s=ts, galvo_time_s=tg, factor=ts / tg)


def _build_timeline(plan: ScanPlan, refocus_time_s: float):
    """Visit-order pixel indices, commanded positions and timestamps.

    Returns (ix, iy, pos, t, t_since_refocus, line_start, refocus_lines).
    """
    x0, y0, _, _ = plan.region_um
    nx, ny = plan.pixel_counts()
    n_fast, n_slow = plan.line_counts()
    pitch = plan.pixel_pitch_um
    dwell = pitch / plan.stage_speed_um_s
    line_time = n_fast * dwell

    every = plan.refocus_every_n_lines
    n_ref_before = _refocus_counts(n_slow, every)
    lines = np.arange(n_slow)
    line_start = lines * (line_time + plan.turnaround_time_s) \
        + n_ref_before * refocus_time_s
    if every:
        focus_line = (lines // every) * every
        focus_epoch = line_start[focus_line]
        refocus_lines = [int(l) for l in lines if l > 0 and l % every == 0]
    else:
        focus_epoch = np.zeros(n_slow)
        refocus_lines = []

    visit = np.arange(n_fast)
    fast_idx = np.empty((n_slow, n_fast), dtype=int)
    fast_idx[:] = visit
    if plan.serpentine:
        fast_idx[1::2] = visit[::-1]

    slow_idx = np.repeat(lines, n_fast)
    fast_idx = fast_idx.reshape(-1)
    t = np.repeat(line_start, n_fast) + np.tile((visit + 0.5) * dwell, n_slow)
    tsr = t - np.repeat(focus_epoch, n_fast)

    if plan.fast_axis is FastAxis.VERTICAL:
        ix, iy = slow_idx, fast_idx
    else:
        ix, iy = fast_idx, slow_idx
    xs = x0 + (ix + 0.5) * pitch
    ys = y0 + (iy + 0.5) * pitch
    pos = np.column_stack([xs, ys])
    return ix, iy, pos, t, tsr, line_start, refocus_lines, line_time


def execute_scan(scene: Scene, instrument: Instrument, plan: ScanPlan,
                 rng: np.random.Generator) -> ResponseMap:
    """Raster the plan over the scene and return the response map.

    The plan is validated against the instrument before any measurement
    (planning errors never leave partial work).  Noise is drawn in
    acquisition order from rng, so equal seeds give bit-identical maps.
    """
    stage = instrument.stage
    if plan.pixel_pitch_um < stage.step_resolution_um:
        raise ConfigurationError(
            f"pixel pitch {plan.pixel_pitch_um} um below stage step "
            f"resolution {stage.step_resolution_um} um")
    if plan.stage_speed_um_s > stage.max_speed_um_s:
        raise ConfigurationError("plan speed exceeds stage maximum")
    x0, y0, x1, y1 = plan.region_um
    tx0, ty0, tx1, ty1 = stage.travel_limits_um
    if not (tx0 <= x0 and ty0 <= y0 and x1 <= tx1 and y1 <= ty1):
        raise StageFaultError("scan region outside stage travel limits")

    ix, iy, pos, t, tsr, _, refocus_lines, line_time = _build_timeline(
        plan, stage.refocus_time_s)
    n_fast, n_slow = plan.line_counts()

    if plan.motion_blur and plan.samples_per_pixel > 1:
        # spread the samples of each pixel along the fast sweep direction
        s = plan.samples_per_pixel
        frac = (np.arange(s) + 0.5) / s - 0.5
        step = frac * plan.pixel_pitch_um
        pos2 = np.repeat(pos, s, axis=0)
        axis = 1 if plan.fast_axis is FastAxis.VERTICAL else 0
        pos2[:, axis] += np.tile(step, len(pos))
        t2 = np.repeat(t, s)
        tsr2 = np.repeat(tsr, s)
        readings, sat = measure_positions(
            scene, instrument, pos2, t2, rng, n_samples=1,
            t_since_refocus_s=tsr2)
        readings = readings.reshape(-1, s).mean(axis=1)
        sat = sat.reshape(-1, s).any(axis=1)
    else:
        readings, sat = measure_positions(
            scene, instrument, pos, t, rng,
            n_samples=plan.samples_per_pixel, t_since_refocus_s=tsr)

    nx, ny = plan.pixel_counts()
    values = np.zeros((ny, nx))
    values[iy, ix] = readings

    duration = stage_scan_time(plan, refocus_time_s=stage.refocus_time_s)
    n_ref_before = _refocus_counts(n_slow, plan.refocus_every_n_lines)
    line_end = (np.arange(n_slow) + 1) * (line_time + plan.turnaround_time_s) \
        + n_ref_before * stage.refocus_time_s

    meta = {
        "plan": plan.to_dict(),
        "duration_s": duration,
        "saturated_pixels": int(sat.sum()),
        "refocus_lines": refocus_lines,
        "samples_per_pixel": plan.samples_per_pixel,
    }
    return ResponseMap(
        values=values,
        origin_um=(x0, y0),
        pixel_pitch_um=plan.pixel_pitch_um,
        line_timestamps_s=line_end,
        metadata=meta,
    )
