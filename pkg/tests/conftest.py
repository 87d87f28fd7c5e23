"""Shared fixtures: scenario objects and a few cached scans.

Scans are session-scoped because several test modules read the same maps.
Every simulation here is deterministic (fixed scenario seed), so sharing
them cannot couple tests through hidden state.
"""

import dataclasses

import pytest

import tlsim


@pytest.fixture(scope="session")
def bbram_key():
    return tlsim.load_scenario("bbram_key")


@pytest.fixture(scope="session")
def bbram_key_target(bbram_key):
    return tlsim.simulate(bbram_key, "bbram_full", "key")


@pytest.fixture(scope="session")
def bbram_key_reference(bbram_key):
    return tlsim.simulate(bbram_key, "bbram_full", "reference", run=1)


@pytest.fixture(scope="session")
def bbram_key_grid(bbram_key, bbram_key_target):
    return tlsim.fit_grid(bbram_key_target, bbram_key.base_memory.geometry)


@pytest.fixture(scope="session")
def sram_single():
    return tlsim.load_scenario("sram_single_bit")


@pytest.fixture(scope="session")
def bbram_search():
    return tlsim.load_scenario("bbram_search")


@pytest.fixture(scope="session")
def bbram_single():
    return tlsim.load_scenario("bbram_single_bit")


def quiet_scene(scn, state=None):
    """Scene with every stochastic current term removed (device mode noise,
    injected noise); spot and geometry stay untouched."""
    sc = scn.scene(state)
    elec = dataclasses.replace(
        sc.electrical, baseline_noise_rms_a=0.0, lowpower_noise_rms_a=0.0,
        injected_noise_rms_a=0.0)
    return dataclasses.replace(sc, electrical=elec)


def quiet_instrument(scn):
    """Instrument with preamp noise, drift, and thermal blur zeroed;
    quantization and stage step stay physical."""
    pre = dataclasses.replace(scn.instrument.preamp, input_noise_rms_a=0.0)
    stage = dataclasses.replace(
        scn.instrument.stage, drift_velocity_um_s=(0.0, 0.0),
        thermal_blur_um_per_min=0.0)
    return tlsim.Instrument(stage=stage, preamp=pre,
                            digitizer=scn.instrument.digitizer)
