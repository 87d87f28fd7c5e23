"""Scenario configuration: device + optics + instrument + plans + states.

A scenario file is a self-describing JSON document; re-running it with
the same seed reproduces byte-identical outputs.  Builtin scenarios cover
the standard workflows (overview imaging, single-bit difference, die-level
search, single-cell window, full key readout); they are constructed
programmatically here and shipped as packaged JSON (a test pins the files
to the builders).

A "state" is one acquisition configuration of the device: stored bits
(fill / key / pattern / individual cells), powered or not, noise mode,
and any injected countermeasure noise.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from . import optics as optics_mod
from .device import (DEFAULT_METADATA_WORD, BitMapping, CellGeometry,
                     DeviceElectrical, Distractor, MemoryArray, NoiseMode,
                     Polarity, load_key, parse_key)
from .errors import ConfigurationError
from .instrument import DigitizerModel, Instrument, PreampModel, Scene, StageModel
from .optics import OpticsConfig, SpotProfile, spot_from_optics
from .scan import FastAxis, ResponseMap, ScanPlan, execute_scan

SCENARIO_FORMAT = "tlsim-scenario-v1"
PLAN_FORMAT = "tlsim-plan-v1"

# ---------------------------------------------------------------------------
# plan presets


def _plan_dict(region, pitch, speed, samples=4, fast_axis="vertical",
               serpentine=False, turnaround=0.2, refocus=None) -> dict:
    return {
        "format": PLAN_FORMAT,
        "region_um": list(region),
        "pixel_pitch_um": pitch,
        "stage_speed_um_s": speed,
        "samples_per_pixel": samples,
        "fast_axis": fast_axis,
        "serpentine": serpentine,
        "turnaround_time_s": turnaround,
        "refocus_every_n_lines": refocus,
    }


# MSP430-class SRAM: 64 rows x 128 cols of 2.5 x 1.9 um cells in four
# 32-column blocks separated by one cell width; array spans
# x [0, 327.5] um, y [0, 121.6] um.
_MSP430_CELL = (2.5, 1.9)
_MSP430_ROWS, _MSP430_COLS = 64, 128
_MSP430_BLOCKS = [[32, 2.5], [64, 2.5], [96, 2.5]]

# BBRAM-class key memory: 9 rows x 32 cols of 3.2 x 2.8 um cells, top row
# metadata; array spans x [430, 532.4] um, y [760, 785.2] um.
_BBRAM_CELL = (3.2, 2.8)
_BBRAM_ROWS, _BBRAM_COLS = 9, 32
_BBRAM_ORIGIN = (430.0, 760.0)

PLAN_PRESETS: dict[str, dict] = {
    # full-array overview at the speed that lands the observed wall time
    "msp430_overview": _plan_dict(
        region=(-2.0, -2.0, 329.5, 123.6), pitch=0.5, speed=34.0),
    # small window around cell (row 32, col 16), with margin so the edge
    # cells stay fully inside even under a percent of pitch-fit error
    "msp430_single_bit": _plan_dict(
        region=(34.0, 56.0, 48.6, 67.6), pitch=0.1, speed=30.0),
    # 8x8-cell word region, rows 8..16 x cols 8..16
    "msp430_word": _plan_dict(
        region=(19.0, 14.2, 41.0, 31.4), pitch=0.25, speed=50.0),
    # coarse sweep over the configuration area
    "bbram_localization": _plan_dict(
        region=(0.0, 0.0, 1500.0, 1540.0), pitch=5.0, speed=2000.0),
    # full key array with margins; extra averaging is free because the
    # digitizer supplies 50 samples within each 5 ms dwell
    "bbram_full": _plan_dict(
        region=(428.0, 753.0, 534.4, 792.2), pitch=0.25, speed=50.0,
        samples=8),
    # small window around cell (row 4, col 16), margins as above
    "bbram_single_bit": _plan_dict(
        region=(476.8, 767.0, 489.2, 778.4), pitch=0.05, speed=50.0),
}


def plan_from_dict(d: dict) -> ScanPlan:
    if d.get("format", PLAN_FORMAT) != PLAN_FORMAT:
        raise ConfigurationError(f"unknown plan format {d.get('format')!r}")
    return ScanPlan(
        region_um=tuple(d["region_um"]),
        pixel_pitch_um=d["pixel_pitch_um"],
        stage_speed_um_s=d["stage_speed_um_s"],
        samples_per_pixel=d.get("samples_per_pixel", 1),
        fast_axis=FastAxis(d.get("fast_axis", "vertical")),
        serpentine=d.get("serpentine", False),
        turnaround_time_s=d.get("turnaround_time_s", 0.2),
        refocus_every_n_lines=d.get("refocus_every_n_lines"),
        motion_blur=d.get("motion_blur", False),
    )


def _galvo_dwell_for(plan_name: str, total_s: float) -> float:
    """Per-pixel dwell that makes the deflection-based model hit the
    observed total for this plan (line overhead 0)."""
    plan = plan_from_dict(PLAN_PRESETS[plan_name])
    n_fast, n_slow = plan.line_counts()
    return total_s / (n_fast * n_slow)


# ---------------------------------------------------------------------------
# builtin scenario builders


def _msp430_device(electrical_mode="low_power") -> dict:
    return {
        "rows": _MSP430_ROWS, "cols": _MSP430_COLS,
        "cell": {"width_um": _MSP430_CELL[0], "height_um": _MSP430_CELL[1],
                 "site_inset_frac": 0.30},
        "polarity": "BL_TR",
        "origin_um": [0.0, 0.0],
        "block_boundaries": _MSP430_BLOCKS,
        "sensitivity_sigma": 0.15,
        "distractors": [],
        "mapping": None,
        "electrical": {
            "baseline_current_a": 500e-9,
            "baseline_noise_rms_a": 50e-9,
            "lowpower_noise_rms_a": 200e-12,
            "mode": electrical_mode,
            "injected_noise_rms_a": 0.0,
        },
    }


def _bbram_device() -> dict:
    return {
        "rows": _BBRAM_ROWS, "cols": _BBRAM_COLS,
        "cell": {"width_um": _BBRAM_CELL[0], "height_um": _BBRAM_CELL[1],
                 "site_inset_frac": 0.30},
        "polarity": "TL_BR",
        "origin_um": list(_BBRAM_ORIGIN),
        "block_boundaries": [],
        "sensitivity_sigma": 0.15,
        "distractors": [
            {"x_um": 900.0, "y_um": 700.0, "width_um": 60.0,
             "height_um": 100.0, "amplitude": 1.0},
        ],
        "mapping": "bbram_default",
        "electrical": {
            "baseline_current_a": 1e-9,
            "baseline_noise_rms_a": 50e-12,
            "lowpower_noise_rms_a": 50e-12,
            "mode": "low_power",
            "injected_noise_rms_a": 0.0,
        },
    }


def _msp430_optics() -> dict:
    return {
        "wavelength_nm": 1424.0,
        "numerical_aperture": 0.65,
        "magnification": 50.0,
        "laser_current_ma": 600.0,
        "power_table_ma_mw": [[500.0, 26.0], [600.0, 43.0]],
        "silicon_thickness_um": 350.0,
        "thickness_correction_um": 350.0,
        "sil_factor": 1.0,
    }


def _bbram_optics() -> dict:
    d = _msp430_optics()
    d["laser_current_ma"] = 500.0
    d["silicon_thickness_um"] = 750.0
    d["thickness_correction_um"] = 750.0
    return d


def _msp430_instrument(drift=(0.0, 0.0), blur=0.0) -> dict:
    return {
        "stage": {
            "step_resolution_um": 0.05,
            "max_speed_um_s": 2500.0,
            "drift_velocity_um_s": list(drift),
            "thermal_blur_um_per_min": blur,
            "travel_limits_um": [-100.0, -100.0, 600.0, 400.0],
            "refocus_time_s": 2.0,
        },
        "preamp": {
            "sensitivity_a_per_v": 1e-9,
            "input_offset_a": 500e-9,
            "bias_voltage_v": 2.1,
            "output_limit_v": 5.0,
            "input_noise_rms_a": 20e-12,
        },
        "digitizer": {"sample_rate_hz": 10000.0, "bits": 16, "input_range_v": 5.0},
    }


def _bbram_instrument() -> dict:
    d = _msp430_instrument()
    d["stage"]["travel_limits_um"] = [-100.0, -100.0, 1700.0, 1700.0]
    d["preamp"] = {
        "sensitivity_a_per_v": 2e-9,
        "input_offset_a": 0.0,
        "bias_voltage_v": 3.0,
        "output_limit_v": 5.0,
        "input_noise_rms_a": 20e-12,
    }
    return d


# Countermeasure knob: battery-line noise injection strong enough to push
# differential key recovery to chance and quadrant recovery well past a
# 25% bit error rate (documented default).
COUNTERMEASURE_NOISE_A = 6e-9

DEMO_KEY_HEX = "f20c28551d626c97c75932351b5dcebf4de340562ca7f54ae34f42c2d9ae4b7e"
ZERO_KEY_HEX = "0" * 64
LOCALIZATION_KEY_HEX = "6b5e9a03d4c2f18877e6a94b0d3c5f21198a7b6c5d4e3f2a0b1c2d3e4f5a6b7c"

# Observed wall times the galvo dwell is calibrated against, per scenario.
GALVO_REFERENCE_S = {"bbram_full": 72.0, "msp430_overview": 288.0}


def _scenario_dict(name, description, seed, device, optics, instrument,
                   galvo_plan, states, default_state, plan_names) -> dict:
    galvo = {"dwell_per_pixel_s": _galvo_dwell_for(
        galvo_plan, GALVO_REFERENCE_S[galvo_plan]), "line_overhead_s": 0.0}
    return {
        "format": SCENARIO_FORMAT,
        "name": name,
        "description": description,
        "seed": seed,
        "device": device,
        "optics": optics,
        "instrument": instrument,
        "galvo": galvo,
        "states": states,
        "default_state": default_state,
        "plans": {p: PLAN_PRESETS[p] for p in plan_names},
    }


def build_sram_overview() -> dict:
    # full-array overview with stage drift and heating blur left on, so
    # the right half of the long scan grows visibly blurry
    sigma0 = optics_mod.spot_from_optics(OpticsConfig(
        wavelength_nm=1424.0, numerical_aperture=0.65,
        delivered_power_mw=43.0)).gaussian_sigma_um
    blur = sigma0 / 25.0  # sigma doubles 25 minutes in
    return _scenario_dict(
        name="sram_overview",
        description="Full SRAM overview scan: zeroized array with a block of "
                    "resident data, drift and heating blur enabled.",
        seed=1404,
        device=_msp430_device(),
        optics=_msp430_optics(),
        instrument=_msp430_instrument(drift=(0.005, 0.0), blur=round(blur, 6)),
        galvo_plan="msp430_overview",
        states={
            "zeroized": {
                "fill": 0,
                "pattern": {"rows": [0, 28], "cols": [4, 34],
                            "density": 0.4, "bits_seed": 11},
            },
        },
        default_state="zeroized",
        plan_names=["msp430_overview"],
    )


def build_sram_single_bit() -> dict:
    word_pattern = {"rows": [8, 16], "cols": [8, 16],
                    "density": 0.5, "bits_seed": 77}
    return _scenario_dict(
        name="sram_single_bit",
        description="Single-cell SRAM experiments: one toggled bit for "
                    "difference imaging, plus an 8x8-cell word region in "
                    "low-power and active modes.",
        seed=1406,
        device=_msp430_device(),
        optics=_msp430_optics(),
        instrument=_msp430_instrument(),
        galvo_plan="msp430_overview",
        states={
            "bit_on": {"fill": 0, "set_bits": [[32, 16, 1]]},
            "bit_off": {"fill": 0},
            "word_lpm4": {"fill": 0, "pattern": word_pattern},
            "word_active": {"fill": 0, "pattern": word_pattern, "mode": "active"},
        },
        default_state="bit_on",
        plan_names=["msp430_single_bit", "msp430_word"],
    )


def build_bbram_search() -> dict:
    return _scenario_dict(
        name="bbram_search",
        description="Coarse sweep over the configuration area with the key "
                    "memory powered vs unpowered; an always-sensitive "
                    "structure sits to the right of it.",
        seed=1407,
        device=_bbram_device(),
        optics=_bbram_optics(),
        instrument=_bbram_instrument(),
        galvo_plan="bbram_full",
        states={
            "powered": {"key_hex": LOCALIZATION_KEY_HEX},
            "unpowered": {"key_hex": LOCALIZATION_KEY_HEX, "enabled": False},
        },
        default_state="powered",
        plan_names=["bbram_localization", "bbram_full"],
    )


def build_bbram_single_bit() -> dict:
    return _scenario_dict(
        name="bbram_single_bit",
        description="High-resolution window on one key cell, toggled on/off.",
        seed=1409,
        device=_bbram_device(),
        optics=_bbram_optics(),
        instrument=_bbram_instrument(),
        galvo_plan="bbram_full",
        states={
            "bit_on": {"fill": 0, "set_bits": [[4, 16, 1]]},
            "bit_off": {"fill": 0},
        },
        default_state="bit_on",
        plan_names=["bbram_single_bit"],
    )


def build_bbram_key() -> dict:
    return _scenario_dict(
        name="bbram_key",
        description="Key readout: signed 256-bit key vs all-zeroes reference, "
                    "with countermeasure-noise variants of both states.",
        seed=1410,
        device=_bbram_device(),
        optics=_bbram_optics(),
        instrument=_bbram_instrument(),
        galvo_plan="bbram_full",
        states={
            "key": {"key_hex": DEMO_KEY_HEX},
            "reference": {"key_hex": ZERO_KEY_HEX},
            "key_noisy": {"key_hex": DEMO_KEY_HEX,
                          "injected_noise_rms_a": COUNTERMEASURE_NOISE_A},
            "reference_noisy": {"key_hex": ZERO_KEY_HEX,
                                "injected_noise_rms_a": COUNTERMEASURE_NOISE_A},
        },
        default_state="key",
        plan_names=["bbram_full", "bbram_localization"],
    )


BUILTIN_BUILDERS = {
    "sram_overview": build_sram_overview,
    "sram_single_bit": build_sram_single_bit,
    "bbram_search": build_bbram_search,
    "bbram_single_bit": build_bbram_single_bit,
    "bbram_key": build_bbram_key,
}


# ---------------------------------------------------------------------------
# scenario objects


def _crc(s: str) -> int:
    return zlib.crc32(s.encode("utf-8"))


@dataclass
class Scenario:
    name: str
    description: str
    seed: int
    raw: dict
    base_memory: MemoryArray
    base_electrical: DeviceElectrical
    optics: OpticsConfig
    spot: SpotProfile
    instrument: Instrument
    mapping: BitMapping | None
    states: dict[str, dict]
    default_state: str
    plans: dict[str, ScanPlan]
    galvo_dwell_s: float
    galvo_line_overhead_s: float

    def plan(self, name: str) -> ScanPlan:
        if name not in self.plans:
            raise ConfigurationError(
                f"scenario {self.name!r} has no plan {name!r}; "
                f"available: {sorted(self.plans)}")
        return self.plans[name]

    def state(self, name: str | None = None) -> str:
        if name is None:
            return self.default_state
        if name not in self.states:
            raise ConfigurationError(
                f"scenario {self.name!r} has no state {name!r}; "
                f"available: {sorted(self.states)}")
        return name

    def memory_for(self, state_name: str | None = None) -> MemoryArray:
        st = self.states[self.state(state_name)]
        base = self.base_memory
        bits = np.full((base.rows, base.cols), st.get("fill", 0), dtype=np.uint8)
        if "pattern" in st:
            p = st["pattern"]
            prng = np.random.default_rng(
                np.random.SeedSequence([self.seed, _crc("pattern"),
                                        p["bits_seed"]]))
            r0, r1 = p["rows"]
            c0, c1 = p["cols"]
            block = (prng.random((r1 - r0, c1 - c0)) < p["density"])
            bits[r0:r1, c0:c1] = block.astype(np.uint8)
        mem = MemoryArray(
            rows=base.rows, cols=base.cols, geometry=base.geometry,
            polarity=base.polarity, origin_um=base.origin_um,
            block_boundaries=base.block_boundaries, bits=bits,
            sensitivity_variation=base.sensitivity_variation,
            distractors=base.distractors,
            enabled=st.get("enabled", True),
        )
        if "key_hex" in st:
            if self.mapping is None:
                raise ConfigurationError(
                    f"state of {self.name!r} loads a key but the scenario "
                    "has no bit mapping")
            word = st.get("metadata_word")
            word = DEFAULT_METADATA_WORD if word is None else int(str(word), 0)
            mem = load_key(mem, st["key_hex"], self.mapping, metadata_word=word)
        for r, c, v in st.get("set_bits", []):
            b = np.array(mem.bits)
            b[r, c] = v
            mem = mem.with_bits(b)
        return mem

    def electrical_for(self, state_name: str | None = None) -> DeviceElectrical:
        st = self.states[self.state(state_name)]
        e = self.base_electrical
        if "mode" in st:
            e = replace(e, mode=NoiseMode(st["mode"]))
        if "injected_noise_rms_a" in st:
            e = replace(e, injected_noise_rms_a=st["injected_noise_rms_a"])
        return e

    def scene(self, state_name: str | None = None) -> Scene:
        return Scene(
            memory=self.memory_for(state_name),
            spot=self.spot,
            electrical=self.electrical_for(state_name),
        )

    def true_key(self, state_name: str | None = None) -> int | None:
        st = self.states[self.state(state_name)]
        return parse_key(st["key_hex"]) if "key_hex" in st else None

    def rng_for(self, plan_name: str, state_name: str | None = None,
                run: int = 0, seed: int | None = None) -> np.random.Generator:
        """Deterministic per-acquisition stream: scenario seed (or an
        override) mixed with the plan/state identity and a run index."""
        base = self.seed if seed is None else seed
        ss = np.random.SeedSequence(
            [base, _crc(plan_name), _crc(self.state(state_name)), run])
        return np.random.default_rng(ss)

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        if d.get("format") != SCENARIO_FORMAT:
            raise ConfigurationError(f"unknown scenario format {d.get('format')!r}")
        dev = d["device"]
        cell = dev["cell"]
        geometry = CellGeometry.with_corner_sites(
            cell["width_um"], cell["height_um"],
            inset_frac=cell.get("site_inset_frac", 0.30))
        seed = d["seed"]
        srng = np.random.default_rng(
            np.random.SeedSequence([seed, _crc("sensitivity")]))
        sens = srng.lognormal(mean=0.0, sigma=dev.get("sensitivity_sigma", 0.0),
                              size=(dev["rows"], dev["cols"]))
        memory = MemoryArray(
            rows=dev["rows"], cols=dev["cols"], geometry=geometry,
            polarity=Polarity(dev["polarity"]),
            origin_um=tuple(dev["origin_um"]),
            block_boundaries=tuple((int(c), float(o))
                                   for c, o in dev.get("block_boundaries", [])),
            sensitivity_variation=sens,
            distractors=tuple(Distractor(**dd) for dd in dev.get("distractors", [])),
        )
        el = dev["electrical"]
        electrical = DeviceElectrical(
            baseline_current_a=el["baseline_current_a"],
            baseline_noise_rms_a=el["baseline_noise_rms_a"],
            lowpower_noise_rms_a=el["lowpower_noise_rms_a"],
            mode=NoiseMode(el.get("mode", "low_power")),
            injected_noise_rms_a=el.get("injected_noise_rms_a", 0.0),
        )

        op = dict(d["optics"])
        table = tuple(tuple(p) for p in op.pop("power_table_ma_mw",
                                               optics_mod.DEFAULT_POWER_TABLE))
        power = op.pop("delivered_power_mw", None)
        if power is None:
            if op.get("laser_current_ma") is None:
                raise ConfigurationError(
                    "optics needs delivered_power_mw or laser_current_ma")
            power = optics_mod.power_from_current(op["laser_current_ma"], table)
        optics = OpticsConfig(delivered_power_mw=power, **op)

        ins = d["instrument"]
        st = dict(ins["stage"])
        st["drift_velocity_um_s"] = tuple(st.get("drift_velocity_um_s", (0, 0)))
        st["travel_limits_um"] = tuple(st["travel_limits_um"])
        instrument = Instrument(
            stage=StageModel(**st),
            preamp=PreampModel(**ins["preamp"]),
            digitizer=DigitizerModel(**ins["digitizer"]),
        )

        mapping = None
        if dev.get("mapping") == "bbram_default":
            mapping = BitMapping.bbram_default(rows=dev["rows"], cols=dev["cols"])
        elif isinstance(dev.get("mapping"), list):
            mapping = BitMapping(
                tuple(tuple(e) for e in dev["mapping"]),
                metadata_row=dev.get("metadata_row"))
        elif dev.get("mapping") is not None:
            raise ConfigurationError(f"unknown mapping kind {dev['mapping']!r}")

        plans = {}
        for pname, pd in d.get("plans", {}).items():
            if isinstance(pd, str):
                pd = load_plan_preset(pd)
            plans[pname] = plan_from_dict(pd)

        galvo = d.get("galvo", {})
        return cls(
            name=d["name"], description=d.get("description", ""), seed=seed,
            raw=d, base_memory=memory, base_electrical=electrical,
            optics=optics, spot=spot_from_optics(optics),
            instrument=instrument, mapping=mapping,
            states=d["states"], default_state=d["default_state"], plans=plans,
            galvo_dwell_s=galvo.get("dwell_per_pixel_s", 0.0),
            galvo_line_overhead_s=galvo.get("line_overhead_s", 0.0),
        )


def simulate(scn: Scenario, plan_name: str, state_name: str | None = None,
             seed: int | None = None, run: int = 0) -> ResponseMap:
    """Run one acquisition of a scenario plan/state; deterministic for a
    given (seed, plan, state, run)."""
    state_name = scn.state(state_name)
    plan = scn.plan(plan_name)
    rng = scn.rng_for(plan_name, state_name, run=run, seed=seed)
    m = execute_scan(scn.scene(state_name), scn.instrument, plan, rng)
    m.metadata.update({
        "scenario": scn.name,
        "state": state_name,
        "plan_name": plan_name,
        "seed": scn.seed if seed is None else seed,
        "run": run,
        "label": f"{scn.name}/{plan_name}/{state_name}",
    })
    return m


# ---------------------------------------------------------------------------
# loading / exporting


def _builtin_dir():
    return resources.files("tlsim") / "scenarios"


def builtin_scenario_names() -> list[str]:
    return sorted(BUILTIN_BUILDERS)


def load_plan_preset(name: str) -> dict:
    path = _builtin_dir() / "plans" / f"{name}.json"
    if not path.is_file():
        raise ConfigurationError(f"no plan preset named {name!r}")
    return json.loads(path.read_text())


def load_scenario(name_or_path) -> Scenario:
    """Load a scenario by builtin name or from a JSON file path."""
    p = Path(str(name_or_path))
    if p.suffix == ".json" or p.is_file():
        if not p.is_file():
            raise ConfigurationError(f"scenario file {p} not found")
        try:
            d = json.loads(p.read_text())
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"scenario file {p}: invalid JSON ({e})")
        return Scenario.from_dict(d)
    name = str(name_or_path)
    path = _builtin_dir() / f"{name}.json"
    if path.is_file():
        return Scenario.from_dict(json.loads(path.read_text()))
    if name in BUILTIN_BUILDERS:
        return Scenario.from_dict(BUILTIN_BUILDERS[name]())
    raise ConfigurationError(
        f"unknown scenario {name!r}; builtin: {builtin_scenario_names()}")


def export_builtin(out_dir) -> list[Path]:
    """Write the builtin scenario and plan preset JSON files (used to
    generate the packaged data; tests pin files == builders)."""
    out = Path(out_dir)
    (out / "plans").mkdir(parents=True, exist_ok=True)
    written = []
    for name, plan in PLAN_PRESETS.items():
        p = out / "plans" / f"{name}.json"
        p.write_text(json.dumps(plan, indent=2, sort_keys=True) + "\n")
        written.append(p)
    for name, builder in BUILTIN_BUILDERS.items():
        p = out / f"{name}.json"
        p.write_text(json.dumps(builder(), indent=2, sort_keys=True) + "\n")
        written.append(p)
    return written
