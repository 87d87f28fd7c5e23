"""Signal chain: stage quantization and drift, preamp clamp, digitizer.

The single-pixel oracle below re-evaluates the documented chain step by
step (round position, add drift, Gaussian response, volts, clamp,
quantize, back to amperes) without going through measure_positions.
"""

import dataclasses

import numpy as np
import pytest

from tlsim import (
    CellGeometry,
    DeviceElectrical,
    DigitizerModel,
    Instrument,
    MemoryArray,
    NoiseMode,
    Polarity,
    PreampModel,
    Scene,
    StageModel,
    delta_current,
    effective_sigma_um,
    measure_pixel,
    measure_positions,
    total_noise_rms_a,
)
from tlsim.errors import ConfigurationError, StageFaultError
from tlsim.instrument import FocusState, refocus
from tlsim.optics import SpotProfile


def make_scene(noise_rms=0.0, baseline=1e-9, peak=5e-10):
    geom = CellGeometry.with_corner_sites(3.2, 2.8)
    mem = MemoryArray(rows=3, cols=3, geometry=geom, polarity=Polarity.TL_BR)
    spot = SpotProfile(fwhm_diameter_um=1.0, gaussian_sigma_um=0.4247,
                       peak_delta_current_a=peak)
    elec = DeviceElectrical(baseline_current_a=baseline,
                            baseline_noise_rms_a=noise_rms,
                            lowpower_noise_rms_a=noise_rms)
    return Scene(memory=mem, spot=spot, electrical=elec)


def make_instrument(**stage_kw):
    return Instrument(
        stage=StageModel(**stage_kw),
        preamp=PreampModel(sensitivity_a_per_v=2e-9),
        digitizer=DigitizerModel(),
    )


def oracle_reading(scene, inst, pos, t=0.0, tsr=None):
    stage, pre, dig = inst.stage, inst.preamp, inst.digitizer
    step = stage.step_resolution_um
    actual = np.round(np.asarray(pos, dtype=float) / step) * step
    actual = actual + np.asarray(stage.drift_velocity_um_s) * t
    tsr = t if tsr is None else tsr
    sigma = scene.spot.gaussian_sigma_um + stage.thermal_blur_um_per_min * tsr / 60.0
    i = scene.electrical.baseline_current_a + delta_current(
        scene.memory, scene.spot, actual, sigma_um=sigma)
    v = (i - pre.input_offset_a) / pre.sensitivity_a_per_v
    lim = min(pre.output_limit_v, dig.input_range_v)
    v = np.clip(v, -lim, lim)
    v = np.round(v / dig.step_v) * dig.step_v
    return v * pre.sensitivity_a_per_v


# -- digitizer arithmetic -------------------------------------------------------


def test_digitizer_step_oracle():
    dig = DigitizerModel(bits=16, input_range_v=5.0)
    assert dig.step_v == 10.0 / 65536
    # a 1 nA current step through a 1 nA/V preamp spans 1 V of output;
    # one code is under 153 uV, i.e. below 0.16% of that step
    assert dig.step_v <= 153e-6
    assert dig.step_v / 1.0 <= 0.0016


def test_digitizer_validation():
    with pytest.raises(ConfigurationError):
        DigitizerModel(bits=0)
    with pytest.raises(ConfigurationError):
        DigitizerModel(bits=33)
    with pytest.raises(ConfigurationError):
        DigitizerModel(input_range_v=0.0)


# -- single-pixel chain -----------------------------------------------------------


def test_zero_noise_reading_matches_chain_oracle():
    scene = make_scene()
    inst = make_instrument()
    rng = np.random.default_rng(0)
    pts = np.random.default_rng(1).uniform(0, 9.0, (100, 2))
    got, sat = measure_positions(scene, inst, pts, np.zeros(100), rng)
    want = oracle_reading(scene, inst, pts)
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-18)
    assert not sat.any()


def test_quantization_error_within_half_code():
    scene = make_scene()
    inst = make_instrument()
    rng = np.random.default_rng(2)
    pts = rng.uniform(0, 9.0, (200, 2))
    got, _ = measure_positions(scene, inst, pts, np.zeros(200),
                               np.random.default_rng(0))
    # unquantized truth, same position rounding
    step = inst.stage.step_resolution_um
    actual = np.round(pts / step) * step
    truth = scene.electrical.baseline_current_a + delta_current(
        scene.memory, scene.spot, actual)
    lsb_a = inst.digitizer.step_v * inst.preamp.sensitivity_a_per_v
    assert np.max(np.abs(got - truth)) <= 0.5 * lsb_a + 1e-24


def test_commanded_position_snaps_to_stage_step():
    scene = make_scene()
    inst = make_instrument(step_resolution_um=0.05)
    r1, _ = measure_pixel(scene, inst, (0.337, 0.512), 0.0,
                          np.random.default_rng(0))
    r2, _ = measure_pixel(scene, inst, (0.35, 0.50), 0.0,
                          np.random.default_rng(0))
    assert r1 == r2
    assert r1 == pytest.approx(float(oracle_reading(scene, inst, [(0.35, 0.50)])[0]))


def test_drift_shifts_the_sampled_position():
    scene = make_scene()
    inst = make_instrument(drift_velocity_um_s=(0.02, -0.01))
    rng = np.random.default_rng(0)
    t = 40.0
    got, _ = measure_pixel(scene, inst, (4.0, 3.0), t, rng)
    want = oracle_reading(scene, inst, [(4.0, 3.0)], t=t)[0]
    assert got == pytest.approx(float(want))
    # and the drifted reading differs from the undrifted one
    still, _ = measure_pixel(scene, inst, (4.0, 3.0), 0.0,
                             np.random.default_rng(0))
    assert got != still


def test_thermal_blur_inflates_sigma_until_refocus():
    stage = StageModel(thermal_blur_um_per_min=0.6)
    spot = SpotProfile(fwhm_diameter_um=1.0, gaussian_sigma_um=0.4,
                       peak_delta_current_a=1e-9)
    assert effective_sigma_um(spot, stage, 0.0) == pytest.approx(0.4)
    assert effective_sigma_um(spot, stage, 120.0) == pytest.approx(0.4 + 1.2)
    np.testing.assert_allclose(effective_sigma_um(spot, stage, [0.0, 60.0]),
                               [0.4, 1.0])
    st = FocusState(last_refocus_t_s=0.0)
    st2 = refocus(st, 300.0)
    assert st2.last_refocus_t_s == 300.0


def test_saturation_clamps_and_flags():
    # huge response drives the preamp output past its limit
    scene = make_scene(peak=5e-7)
    inst = make_instrument()
    lim_a = inst.preamp.output_limit_v * inst.preamp.sensitivity_a_per_v
    site = scene.memory.sensitive_sites(1, 1)[0][0]
    got, sat = measure_pixel(scene, inst, tuple(site), 0.0,
                             np.random.default_rng(0))
    assert sat
    assert got == pytest.approx(lim_a)
    # far from any site the baseline alone stays in range
    got_bg, sat_bg = measure_pixel(scene, inst, (-40.0, -40.0), 0.0,
                                   np.random.default_rng(0))
    assert not sat_bg
    assert got_bg < lim_a


def test_travel_limits_raise_stage_fault():
    scene = make_scene()
    inst = make_instrument(travel_limits_um=(0.0, 0.0, 10.0, 10.0))
    with pytest.raises(StageFaultError):
        measure_pixel(scene, inst, (11.0, 5.0), 0.0, np.random.default_rng(0))
    with pytest.raises(StageFaultError):
        measure_positions(scene, inst, [(5.0, 5.0), (5.0, -0.1)],
                          [0.0, 1.0], np.random.default_rng(0))


# -- noise ---------------------------------------------------------------------------


def test_total_noise_adds_in_quadrature():
    elec = DeviceElectrical(baseline_current_a=1e-9,
                            baseline_noise_rms_a=4e-9,
                            lowpower_noise_rms_a=3e-9,
                            injected_noise_rms_a=4e-9)
    pre = PreampModel(sensitivity_a_per_v=1e-9, input_noise_rms_a=12e-9)
    # sqrt(3^2 + 4^2 + 12^2) = 13 in low-power mode
    assert total_noise_rms_a(elec, pre) == pytest.approx(13e-9)
    active = dataclasses.replace(elec, mode=NoiseMode.ACTIVE)
    assert total_noise_rms_a(active, pre) == pytest.approx(
        np.sqrt(16 + 16 + 144) * 1e-9)


def test_batch_equals_pixel_loop_on_shared_generator():
    scene = make_scene(noise_rms=3e-11)
    inst = make_instrument()
    pts = np.random.default_rng(3).uniform(0, 9.0, (64, 2))
    t = np.linspace(0, 6.3, 64)
    batch, _ = measure_positions(scene, inst, pts, t, np.random.default_rng(7),
                                 n_samples=4)
    rng = np.random.default_rng(7)
    loop = np.array([measure_pixel(scene, inst, tuple(p), float(tt), rng,
                                   n_samples=4)[0]
                     for p, tt in zip(pts, t)])
    np.testing.assert_array_equal(batch, loop)


def test_sample_averaging_shrinks_noise():
    scene = make_scene(noise_rms=5e-11)
    inst = make_instrument()
    rng = np.random.default_rng(11)
    reps = 3000
    pos = np.tile([(-40.0, -40.0)], (reps, 1))  # background only
    r1, _ = measure_positions(scene, inst, pos, np.zeros(reps), rng, n_samples=1)
    r16, _ = measure_positions(scene, inst, pos, np.zeros(reps), rng, n_samples=16)
    ratio = r1.std() / r16.std()
    assert ratio == pytest.approx(4.0, rel=0.10)


def test_measure_validation():
    scene = make_scene()
    inst = make_instrument()
    with pytest.raises(ConfigurationError):
        measure_positions(scene, inst, [(1.0, 1.0)], [0.0],
                          np.random.default_rng(0), n_samples=0)
    with pytest.raises(ConfigurationError):
        measure_positions(scene, inst, [(1.0, 1.0)], [0.0, 1.0],
                          np.random.default_rng(0))


def test_model_validation():
    with pytest.raises(ConfigurationError):
        StageModel(step_resolution_um=0.0)
    with pytest.raises(ConfigurationError):
        StageModel(travel_limits_um=(0.0, 0.0, 0.0, 10.0))
    with pytest.raises(ConfigurationError):
        PreampModel(sensitivity_a_per_v=0.0)
    with pytest.raises(ConfigurationError):
        PreampModel(sensitivity_a_per_v=1e-9, output_limit_v=0.0)
