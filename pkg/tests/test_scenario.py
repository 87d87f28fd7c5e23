"""Built-in scenarios: frozen presets, state machinery, determinism.

The packaged JSON files are compared byte-for-byte against the builder
output so the two cannot drift apart silently.
"""

import numpy as np
import pytest

import tlsim
from tlsim import NoiseMode, builtin_scenario_names, load_scenario, simulate
from tlsim.device import decode_key
from tlsim.errors import ConfigurationError
from tlsim.scenario import COUNTERMEASURE_NOISE_A, export_builtin

TRUE_KEY_HEX = ("0xf20c28551d626c97c75932351b5dcebf"
                "4de340562ca7f54ae34f42c2d9ae4b7e")

BUILTINS = [
    "bbram_key",
    "bbram_search",
    "bbram_single_bit",
    "sram_overview",
    "sram_single_bit",
]


def test_builtin_names_frozen():
    assert builtin_scenario_names() == BUILTINS


def test_packaged_json_matches_builders(tmp_path):
    from tlsim.scenario import PLAN_PRESETS, _builtin_dir
    paths = export_builtin(tmp_path)
    scenario_names = sorted(p.name for p in paths if p.parent == tmp_path)
    assert scenario_names == [n + ".json" for n in BUILTINS]
    plan_names = sorted(p.name for p in paths if p.parent != tmp_path)
    assert plan_names == sorted(n + ".json" for n in PLAN_PRESETS)
    for p in paths:
        packaged = (_builtin_dir() / p.relative_to(tmp_path)).read_bytes()
        assert p.read_bytes() == packaged, f"{p.name} drifted from its builder"


def test_load_by_path_equals_load_by_name(tmp_path):
    paths = export_builtin(tmp_path)
    by_path = load_scenario(paths[-1])
    by_name = load_scenario(by_path.name)
    assert by_path.raw == by_name.raw


def test_unknown_scenario_and_plan_and_state():
    with pytest.raises(ConfigurationError):
        load_scenario("no_such_scenario")
    scn = load_scenario("bbram_key")
    with pytest.raises(ConfigurationError):
        scn.plan("no_such_plan")
    with pytest.raises(ConfigurationError):
        scn.state("no_such_state")


# -- frozen presets ---------------------------------------------------------------


def test_bbram_full_plan_preset():
    scn = load_scenario("bbram_key")
    plan = scn.plan("bbram_full")
    assert plan.region_um == (428.0, 753.0, 534.4, 792.2)
    assert plan.pixel_pitch_um == 0.25
    assert plan.stage_speed_um_s == 50.0
    assert plan.samples_per_pixel == 8
    # plan window covers the whole array with margin
    x0, y0, x1, y1 = scn.base_memory.bounding_box()
    px0, py0, px1, py1 = plan.region_um
    assert px0 < x0 and py0 < y0 and px1 > x1 and py1 > y1


def test_msp430_overview_plan_preset():
    scn = load_scenario("sram_overview")
    plan = scn.plan("msp430_overview")
    assert plan.pixel_pitch_um == 0.5
    assert plan.stage_speed_um_s == 34.0


def test_galvo_dwell_calibration():
    # dwell values are derived from the full-array deflection-scan targets
    # (72 s over 66882 px, 288 s over 167076 px)
    bbram = load_scenario("bbram_key")
    nx, ny = bbram.plan("bbram_full").pixel_counts()
    assert bbram.galvo_dwell_s * nx * ny == pytest.approx(72.0, rel=1e-9)
    msp = load_scenario("sram_overview")
    nx, ny = msp.plan("msp430_overview").pixel_counts()
    assert msp.galvo_dwell_s * nx * ny == pytest.approx(288.0, rel=1e-9)


def test_device_polarity_presets(sram_single, bbram_key):
    assert sram_single.base_memory.polarity.one_diagonal == ("bl", "tr")
    assert bbram_key.base_memory.polarity.one_diagonal == ("tl", "br")
    assert bbram_key.base_memory.rows == 9
    assert bbram_key.base_memory.cols == 32


# -- state machinery -----------------------------------------------------------------


def test_key_state_loads_key_and_metadata(bbram_key):
    mem = bbram_key.memory_for("key")
    assert decode_key(mem.bits, bbram_key.mapping) == int(TRUE_KEY_HEX, 16)
    assert bbram_key.true_key("key") == int(TRUE_KEY_HEX, 16)
    # metadata row is populated (top row of the array)
    assert mem.bits[8, :].sum() > 0
    ref = bbram_key.memory_for("reference")
    assert decode_key(ref.bits, bbram_key.mapping) == 0
    assert bbram_key.true_key("reference") == 0


def test_noisy_states_inject_countermeasure_noise(bbram_key):
    assert COUNTERMEASURE_NOISE_A == 6e-9
    quiet = bbram_key.electrical_for("key")
    noisy = bbram_key.electrical_for("key_noisy")
    assert quiet.injected_noise_rms_a == 0.0
    assert noisy.injected_noise_rms_a == COUNTERMEASURE_NOISE_A
    assert noisy.baseline_current_a == quiet.baseline_current_a


def test_word_states_share_pattern_but_differ_in_mode(sram_single):
    lpm4 = sram_single.memory_for("word_lpm4")
    active = sram_single.memory_for("word_active")
    np.testing.assert_array_equal(lpm4.bits, active.bits)
    # pattern block sits at rows 8..16, cols 8..16 and is roughly half ones
    block = lpm4.bits[8:16, 8:16]
    assert 0.25 < block.mean() < 0.75
    assert lpm4.bits.sum() == block.sum()
    assert sram_single.electrical_for("word_lpm4").mode is NoiseMode.LOW_POWER
    assert sram_single.electrical_for("word_active").mode is NoiseMode.ACTIVE
    # active mode raises the noise floor
    assert sram_single.electrical_for("word_active").mode_noise_rms_a > \
        sram_single.electrical_for("word_lpm4").mode_noise_rms_a


def test_single_bit_states_differ_in_one_cell(sram_single, bbram_single):
    for scn, (r, c) in ((sram_single, (32, 16)), (bbram_single, (4, 16))):
        on = scn.memory_for("bit_on").bits.astype(int)
        off = scn.memory_for("bit_off").bits.astype(int)
        diff = on - off
        assert diff[r, c] == 1
        assert np.abs(diff).sum() == 1


def test_unpowered_state_disables_the_array(bbram_search):
    on = bbram_search.memory_for("powered")
    off = bbram_search.memory_for("unpowered")
    assert len(on.site_field()[0]) > 0
    assert len(off.site_field()[0]) == 0
    np.testing.assert_array_equal(on.bits, off.bits)
    # the always-on structure is present in both states
    assert len(on.distractors) == 1
    assert on.distractors == off.distractors


# -- determinism ------------------------------------------------------------------------


def test_rng_streams_are_deterministic_and_distinct(bbram_key):
    a = bbram_key.rng_for("bbram_full", "key", run=0).normal(size=8)
    b = bbram_key.rng_for("bbram_full", "key", run=0).normal(size=8)
    np.testing.assert_array_equal(a, b)
    c = bbram_key.rng_for("bbram_full", "key", run=1).normal(size=8)
    d = bbram_key.rng_for("bbram_full", "reference", run=0).normal(size=8)
    e = bbram_key.rng_for("bbram_localization", "key", run=0).normal(size=8)
    assert (a != c).any() and (a != d).any() and (a != e).any()
    f = bbram_key.rng_for("bbram_full", "key", run=0, seed=77).normal(size=8)
    assert (a != f).any()


def test_simulate_is_bit_reproducible(bbram_single):
    m1 = simulate(bbram_single, "bbram_single_bit", "bit_on")
    m2 = simulate(bbram_single, "bbram_single_bit", "bit_on")
    assert m1.values.tobytes() == m2.values.tobytes()
    m3 = simulate(bbram_single, "bbram_single_bit", "bit_on", run=1)
    assert m1.values.tobytes() != m3.values.tobytes()
    m4 = simulate(bbram_single, "bbram_single_bit", "bit_on", seed=123)
    assert m1.values.tobytes() != m4.values.tobytes()


def test_simulate_uses_default_state(bbram_single):
    m1 = simulate(bbram_single, "bbram_single_bit")
    m2 = simulate(bbram_single, "bbram_single_bit", "bit_on")
    assert m1.values.tobytes() == m2.values.tobytes()
