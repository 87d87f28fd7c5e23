"""Beam optics and the thermal response model.

The stimulation spot is a Gaussian whose FWHM follows lambda/(NA*sil)
scaling, calibrated so a 1424 nm beam through a 0.65 NA objective without
a SIL gives a 1.0 um spot.  Local heating of a sensitive contact raises
the device current by an amount linear in delivered power, falling off as
a Gaussian of the spot sigma with distance from the site.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from scipy.special import erf

from .device import MemoryArray
from .errors import ConfigurationError

# Below ~1100 nm silicon photogenerates carriers, which can flip the cell
# under test; the whole point of the technique is staying sub-bandgap.
MIN_WAVELENGTH_NM = 1100.0

FWHM_TO_SIGMA = 2.0 * np.sqrt(2.0 * np.log(2.0))

# FWHM = SPOT_COEFF * wavelength / (NA * sil_factor); calibration point is
# (1424 nm, NA 0.65, no SIL) -> 1.0 um.
SPOT_COEFF = 1.0 * 0.65 / 1.424  # um FWHM per (wavelength_um / NA)

# Peak current increase per mW of delivered power; anchored to ~1 nA at
# the 43 mW operating point of the SRAM experiments.
DEFAULT_DELTA_PER_MW_A = 1.0e-9 / 43.0

# Spot sigma growth (um) per um of silicon-thickness correction mismatch.
DEFAULT_DEFOCUS_GAIN = 2.0e-3

# Measured laser-diode operating points: (drive current mA, delivered mW).
DEFAULT_POWER_TABLE = ((500.0, 26.0), (600.0, 43.0))

# Contributions beyond this many sigma are dropped (exactly zero).
KERNEL_CUTOFF_SIGMA = 5.0

# Typical effective-NA gain of a backside solid immersion lens.
SIL_FACTOR_TYPICAL = 4.3


@dataclass(frozen=True)
class OpticsConfig:
    wavelength_nm: float
    numerical_aperture: float
    delivered_power_mw: float
    magnification: float = 50.0
    laser_current_ma: float | None = None
    silicon_thickness_um: float = 0.0
    thickness_correction_um: float = 0.0
    sil_factor: float = 1.0
    delta_per_mw_a: float = DEFAULT_DELTA_PER_MW_A
    defocus_gain: float = DEFAULT_DEFOCUS_GAIN

    def __post_init__(self):
        if self.wavelength_nm <= MIN_WAVELENGTH_NM:
            raise ConfigurationError(
                f"wavelength {self.wavelength_nm} nm is not sub-bandgap "
                f"(needs > {MIN_WAVELENGTH_NM:.0f} nm); carriers would be "
                "photogenerated and could flip the cell under test"
            )
        if not (0.0 < self.numerical_aperture < 1.0):
            raise ConfigurationError("numerical aperture must be in (0, 1)")
        if self.sil_factor < 1.0:
            raise ConfigurationError("sil_factor must be >= 1")
        if self.delivered_power_mw < 0:
            raise ConfigurationError("delivered power must be >= 0")


@dataclass(frozen=True)
class SpotProfile:
    """Effective stimulation spot at the device plane."""

    fwhm_diameter_um: float
    gaussian_sigma_um: float
    peak_delta_current_a: float

    def __post_init__(self):
        if self.fwhm_diameter_um <= 0 or self.gaussian_sigma_um <= 0:
            raise ConfigurationError("spot dimensions must be positive")


def power_from_current(current_ma: float,
                       table=DEFAULT_POWER_TABLE) -> float:
    """Delivered power (mW) at a laser drive current, interpolated
    linearly through the measured operating points.  Extrapolation beyond
    the table warns but proceeds."""
    pts = sorted(table)
    cur = np.array([p[0] for p in pts])
    mw = np.array([p[1] for p in pts])
    if not (cur[0] <= current_ma <= cur[-1]):
        warnings.warn(
            f"laser current {current_ma} mA outside the calibrated range "
            f"[{cur[0]}, {cur[-1]}] mA; extrapolating", stacklevel=2)
        # np.interp clamps; extrapolate from the end slope instead
        if len(pts) >= 2:
            if current_ma < cur[0]:
                slope = (mw[1] - mw[0]) / (cur[1] - cur[0])
                return float(mw[0] + slope * (current_ma - cur[0]))
            slope = (mw[-1] - mw[-2]) / (cur[-1] - cur[-2])
            return float(mw[-1] + slope * (current_ma - cur[-1]))
    return float(np.interp(current_ma, cur, mw))


def spot_from_optics(cfg: OpticsConfig) -> SpotProfile:
    """Diffraction-scaled spot, broadened by any silicon-thickness
    correction mismatch (defocus adds to sigma in quadrature)."""
    wavelength_um = cfg.wavelength_nm / 1000.0
    fwhm0 = SPOT_COEFF * wavelength_um / (cfg.numerical_aperture * cfg.sil_factor)
    sigma0 = fwhm0 / FWHM_TO_SIGMA
    mismatch = abs(cfg.silicon_thickness_um - cfg.thickness_correction_um)
    sigma = float(np.hypot(sigma0, cfg.defocus_gain * mismatch))
    return SpotProfile(
        fwhm_diameter_um=sigma * FWHM_TO_SIGMA,
        gaussian_sigma_um=sigma,
        peak_delta_current_a=cfg.delta_per_mw_a * cfg.delivered_power_mw,
    )


def _rect_response(px: np.ndarray, py: np.ndarray, sigma: np.ndarray,
                   rect) -> np.ndarray:
    """Overlap of a unit-integral Gaussian spot with a rectangle: the
    response of an extended, uniformly sensitive structure (1.0 deep
    inside, 0 far away)."""
    s = np.sqrt(2.0) * sigma
    gx = 0.5 * (erf((rect.x_um + rect.width_um - px) / s) - erf((rect.x_um - px) / s))
    gy = 0.5 * (erf((rect.y_um + rect.height_um - py) / s) - erf((rect.y_um - py) / s))
    return gx * gy


def delta_current(model: MemoryArray, spot: SpotProfile, pos,
                  sigma_um=None) -> float | np.ndarray:
    """Stimulation-induced current increase (A) at spot position(s).

    pos may be a single (x, y) pair or an (N, 2) array.  sigma_um
    overrides the spot sigma (scalar or per-position), which is how the
    instrument layers in thermal blur.  Contributions farther than
    KERNEL_CUTOFF_SIGMA sigmas are exactly zero.  Reading is
    non-destructive: the model is not modified.
    """
    pos = np.asarray(pos, dtype=float)
    single = pos.ndim == 1
    pts = pos.reshape(-1, 2)
    n = len(pts)
    if sigma_um is None:
        sigma = np.full(n, spot.gaussian_sigma_um)
    else:
        sigma = np.broadcast_to(np.asarray(sigma_um, dtype=float), (n,)).astype(float)
    if (sigma <= 0).any():
        raise ConfigurationError("spot sigma must be positive")

    out = np.zeros(n)
    sites, scales = model.site_field()
    if len(sites) and n:
        radius = KERNEL_CUTOFF_SIGMA * float(sigma.max())
        pairs = cKDTree(pts).sparse_distance_matrix(
            cKDTree(sites), max_distance=radius, output_type="coo_matrix")
        if pairs.nnz:
            keep = pairs.data < KERNEL_CUTOFF_SIGMA * sigma[pairs.row]
            r = pairs.row[keep]
            d = pairs.data[keep]
            amp = scales[pairs.col[keep]]
            np.add.at(out, r, amp * np.exp(-(d * d) / (2.0 * sigma[r] ** 2)))
    for rect in model.distractors:
        out += rect.amplitude * _rect_response(pts[:, 0], pts[:, 1], sigma, rect)
    out *= spot.peak_delta_current_a
    return float(out[0]) if single else out


@dataclass(frozen=True)
class FeasibilityResult:
    feasible: bool
    margin: float
    required_min_um: float
    spot_fwhm_um: float
    deconvolution: bool

    def __str__(self):
        verdict = "feasible" if self.feasible else "NOT feasible"
        extra = " (with deconvolution)" if self.deconvolution else ""
        return (f"{verdict}{extra}: spot FWHM {self.spot_fwhm_um:.3g} um needs "
                f"cells >= {self.required_min_um:.3g} um, margin x{self.margin:.2f}")


def feasibility(cell_min_dimension_um: float, spot: SpotProfile,
                deconvolution: bool = False) -> FeasibilityResult:
    """Can individual cells of the given minimum dimension be resolved?

    The rule of thumb is cells no smaller than two spot FWHMs;
    deconvolution of a well-characterized spot halves that.
    """
    if cell_min_dimension_um <= 0:
        raise ConfigurationError("cell dimension must be positive")
    required = 2.0 * spot.fwhm_diameter_um
    if deconvolution:
        required /= 2.0
    return FeasibilityResult(
        feasible=cell_min_dimension_um >= required,
        margin=cell_min_dimension_um / required,
        required_min_um=required,
        spot_fwhm_um=spot.fwhm_diameter_um,
        deconvolution=deconvolution,
    )
