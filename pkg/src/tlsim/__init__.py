"""Simulated thermal-stimulation scanning workbench.

Models a scanning setup that reads static memory cells through the silicon
backside: a sub-bandgap laser locally heats the die, powered cells answer
with a current change on their supply line whose sign and position inside
the cell follow the stored bit.  The package covers the full chain
(device, optics, instrument, scan execution, map files) plus the analysis
side (difference imaging, localization, grid fitting, bit classification,
key recovery) and a CLI.
"""

from .analysis import (Box, BitDecision, CellGrid, ExtractionReport,
                       GrayscaleMap, classify_bit_differential,
                       classify_bit_quadrant, encode_grayscale, extract_key,
                       extract_sram_word, fit_grid, gradient_energy,
                       localize_candidates, noise_rms_mad, subtract_maps)
from .device import (CORNERS, KEY_BITS, BitMapping, CellGeometry,
                     DeviceElectrical, Distractor, MemoryArray, NoiseMode,
                     Polarity, decode_key, key_hex, load_key, parse_key)
from .errors import (ConfigurationError, GeometryError, GridFitError,
                     StageFaultError, WorkbenchError)
from .instrument import (DigitizerModel, FocusState, Instrument, PreampModel,
                         Scene, StageModel, effective_sigma_um,
                         measure_pixel, measure_positions, total_noise_rms_a)
from .mapfile import load_map, save_map
from .optics import (FWHM_TO_SIGMA, MIN_WAVELENGTH_NM, FeasibilityResult,
                     OpticsConfig, SpotProfile, delta_current, feasibility,
                     power_from_current, spot_from_optics)
from .scan import (FastAxis, ResponseMap, ScanPlan, SpeedupReport,
                   execute_scan, galvo_scan_time, speedup_report,
                   stage_scan_time)
from .scenario import (Scenario, builtin_scenario_names, load_scenario,
                       simulate)

__version__ = "0.1.0"

__all__ = [
    "Box", "BitDecision", "CellGrid", "ExtractionReport", "GrayscaleMap",
    "classify_bit_differential", "classify_bit_quadrant", "encode_grayscale",
    "extract_key", "extract_sram_word", "fit_grid", "gradient_energy",
    "localize_candidates", "noise_rms_mad", "subtract_maps",
    "CORNERS", "KEY_BITS", "BitMapping", "CellGeometry", "DeviceElectrical",
    "Distractor", "MemoryArray", "NoiseMode", "Polarity", "decode_key",
    "key_hex", "load_key", "parse_key",
    "ConfigurationError", "GeometryError", "GridFitError", "StageFaultError",
    "WorkbenchError",
    "DigitizerModel", "FocusState", "Instrument", "PreampModel", "Scene",
    "StageModel", "effective_sigma_um", "measure_pixel", "measure_positions",
    "total_noise_rms_a",
    "load_map", "save_map",
    "FWHM_TO_SIGMA", "MIN_WAVELENGTH_NM", "FeasibilityResult", "OpticsConfig",
    "SpotProfile", "delta_current", "feasibility", "power_from_current",
    "spot_from_optics",
    "FastAxis", "ResponseMap", "ScanPlan", "SpeedupReport", "execute_scan",
    "galvo_scan_time", "speedup_report", "stage_scan_time",
    "Scenario", "builtin_scenario_names", "load_scenario", "simulate",
    "__version__",
]
