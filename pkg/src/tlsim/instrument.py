"""Acquisition chain: positioning stage, current preamplifier, digitizer.

One pixel measurement runs the full signal path: command the stage (step
quantization, drift), stimulate (spot possibly blurred by accumulated
heating since the last refocus), convert current to voltage (offset
cancellation, output clamp), digitize (range clip, uniform quantization),
and average samples back into an offset-corrected current reading.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import optics
from .device import DeviceElectrical, MemoryArray
from .errors import ConfigurationError, StageFaultError
from .optics import SpotProfile


@dataclass(frozen=True)
class StageModel:
    step_resolution_um: float = 0.05
    max_speed_um_s: float = 2000.0
    drift_velocity_um_s: tuple[float, float] = (0.0, 0.0)
    thermal_blur_um_per_min: float = 0.0
    travel_limits_um: tuple[float, float, float, float] = (-1e4, -1e4, 1e4, 1e4)
    refocus_time_s: float = 2.0

    def __post_init__(self):
        if self.step_resolution_um <= 0:
            raise ConfigurationError("step resolution must be positive")
        x0, y0, x1, y1 = self.travel_limits_um
        if not (x0 < x1 and y0 < y1):
            raise ConfigurationError("travel limits must be a nonempty rectangle")


@dataclass(frozen=True)
class PreampModel:
    sensitivity_a_per_v: float
    input_offset_a: float = 0.0
    bias_voltage_v: float = 0.0
    output_limit_v: float = 5.0
    input_noise_rms_a: float = 0.0

    def __post_init__(self):
        if self.sensitivity_a_per_v <= 0:
            raise ConfigurationError("preamp sensitivity must be positive")
        if self.output_limit_v <= 0:
            raise ConfigurationError("output limit must be positive")


@dataclass(frozen=True)
class DigitizerModel:
    sample_rate_hz: float = 10_000.0
    bits: int = 16
    input_range_v: float = 5.0

    def __post_init__(self):
        if not (1 <= self.bits <= 32):
            raise ConfigurationError("digitizer bits out of range")
        if self.input_range_v <= 0:
            raise ConfigurationError("digitizer input range must be positive")

    @property
    def step_v(self) -> float:
        return 2.0 * self.input_range_v / (1 << self.bits)


@dataclass(frozen=True)
class Instrument:
    stage: StageModel
    preamp: PreampModel
    digitizer: DigitizerModel


@dataclass(frozen=True)
class Scene:
    """Everything the beam can interact with."""

    memory: MemoryArray
    spot: SpotProfile
    electrical: DeviceElectrical


@dataclass(frozen=True)
class FocusState:
    last_refocus_t_s: float = 0.0


def refocus(state: FocusState, t_s: float) -> FocusState:
    """Reset the thermal-blur clock at time t (the objective is re-focused
    on the current surface)."""
    return FocusState(last_refocus_t_s=t_s)


def total_noise_rms_a(electrical: DeviceElectrical, preamp: PreampModel) -> float:
    """Per-sample current noise: device mode noise, any injected
    countermeasure noise, and preamp input noise, independent sources."""
    return float(np.sqrt(electrical.mode_noise_rms_a ** 2
                         + electrical.injected_noise_rms_a ** 2
                         + preamp.input_noise_rms_a ** 2))


def effective_sigma_um(spot: SpotProfile, stage: StageModel,
                       t_since_refocus_s) -> np.ndarray | float:
    """Spot sigma inflated by heating drift since the last refocus."""
    t = np.asarray(t_since_refocus_s, dtype=float)
    sig = spot.gaussian_sigma_um + stage.thermal_blur_um_per_min * t / 60.0
    return float(sig) if sig.ndim == 0 else sig


def measure_positions(scene: Scene, instrument: Instrument, commanded,
                      t_s, rng: np.random.Generator, n_samples: int = 1,
                      t_since_refocus_s=None):
    """Measure a batch of pixels in acquisition order.

    commanded is (N, 2) in um, t_s is (N,) seconds.  Noise is drawn
    per-sample in visit order from rng, so batched acquisition and a
    pixel-by-pixel loop over the same generator produce identical values.
    Returns (readings_a (N,), saturated (N,) bool).
    """
    if n_samples < 1:
        raise ConfigurationError("need at least one sample per pixel")
    commanded = np.asarray(commanded, dtype=float).reshape(-1, 2)
    t = np.asarray(t_s, dtype=float).reshape(-1)
    if len(t) != len(commanded):
        raise ConfigurationError("positions and timestamps must align")
    stage, preamp, dig = instrument.stage, instrument.preamp, instrument.digitizer

    x0, y0, x1, y1 = stage.travel_limits_um
    if (commanded[:, 0] < x0).any() or (commanded[:, 0] > x1).any() \
            or (commanded[:, 1] < y0).any() or (commanded[:, 1] > y1).any():
        raise StageFaultError("commanded position outside travel limits")

    step = stage.step_resolution_um
    actual = np.round(commanded / step) * step
    drift = np.asarray(stage.drift_velocity_um_s, dtype=float)
    actual = actual + drift[None, :] * t[:, None]

    tsr = t if t_since_refocus_s is None else \
        np.asarray(t_since_refocus_s, dtype=float).reshape(-1)
    sigma = effective_sigma_um(scene.spot, stage, tsr)

    di = optics.delta_current(scene.memory, scene.spot, actual, sigma_um=sigma)
    current = scene.electrical.baseline_current_a + np.atleast_1d(di)

    noise = total_noise_rms_a(scene.electrical, preamp)
    samples = current[:, None] + rng.normal(0.0, 1.0, (len(current), n_samples)) * noise

    volts = (samples - preamp.input_offset_a) / preamp.sensitivity_a_per_v
    lim = min(preamp.output_limit_v, dig.input_range_v)
    saturated = (np.abs(volts) > lim).any(axis=1)
    volts = np.clip(volts, -lim, lim)

    q = dig.step_v
    volts = np.round(volts / q) * q

    readings = volts.mean(axis=1) * preamp.sensitivity_a_per_v
    return readings, saturated


def measure_pixel(scene: Scene, instrument: Instrument, commanded_pos,
                  t_s: float, rng: np.random.Generator, n_samples: int = 1,
                  t_since_refocus_s: float | None = None):
    """Single-pixel measurement; returns (current reading A, saturated).

    The reading is the sample-averaged, quantized preamp output mapped
    back to amperes, i.e. already input-offset corrected.
    """
    tsr = None if t_since_refocus_s is None else [t_since_refocus_s]
    readings, sat = measure_positions(
        scene, instrument, [commanded_pos], [t_s], rng,
        n_samples=n_samples, t_since_refocus_s=tsr)
    return float(readings[0]), bool(sat[0])
