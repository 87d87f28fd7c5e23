"""Spot size vs cell size, for every optics option we have.

Prints the laser power table, the spot numbers with and without the
solid immersion lens, and the resolving-power verdict for both target
devices.  Saves a profile figure to demos/out/.
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from tlsim import OpticsConfig, feasibility, spot_from_optics
from tlsim.optics import SIL_FACTOR_TYPICAL, power_from_current

OUT = os.path.join(os.path.dirname(__file__), "out")

DEVICES = [
    ("MSP430 SRAM cell", 1.9),
    ("BBRAM key cell", 2.8),
]


def main():
    os.makedirs(OUT, exist_ok=True)

    for ma in (500, 550, 600):
        print(f"laser drive {ma} mA -> {power_from_current(ma):.1f} mW delivered")

    air = spot_from_optics(OpticsConfig(wavelength_nm=1424.0,
                                        numerical_aperture=0.65,
                                        delivered_power_mw=43.0))
    sil = spot_from_optics(OpticsConfig(wavelength_nm=1424.0,
                                        numerical_aperture=0.65,
                                        delivered_power_mw=43.0,
                                        sil_factor=SIL_FACTOR_TYPICAL))
    print(f"\nair objective: FWHM {air.fwhm_diameter_um:.3f} um, "
          f"peak {air.peak_delta_current_a * 1e9:.1f} nA")
    print(f"with SIL x{SIL_FACTOR_TYPICAL}: FWHM {sil.fwhm_diameter_um:.3f} um")

    for name, cell in DEVICES:
        print(f"\n{name} ({cell} um minimum dimension):")
        for label, spot in (("air", air), ("SIL", sil)):
            for deconv in (False, True):
                res = feasibility(cell, spot, deconvolution=deconv)
                extra = " + deconvolution" if deconv else ""
                print(f"  {label}{extra:<17} {res}")

    # profile plot: both spots against the two cell widths
    x = np.linspace(-3, 3, 601)
    fig, ax = plt.subplots(figsize=(7, 4))
    for label, spot, color in (("air objective", air, "tab:blue"),
                               ("SIL", sil, "tab:red")):
        prof = np.exp(-x**2 / (2 * spot.gaussian_sigma_um**2))
        ax.plot(x, prof, color=color,
                label=f"{label}, FWHM {spot.fwhm_diameter_um:.2f} um")
    for name, cell in DEVICES:
        ax.axvspan(-cell / 2, cell / 2, alpha=0.08, color="gray")
        ax.text(cell / 2, 1.02, f" {name.split()[0]} {cell} um",
                fontsize=8, rotation=0)
    ax.set_xlabel("position (um)")
    ax.set_ylabel("normalized stimulation")
    ax.legend(loc="upper right", fontsize=8)
    ax.set_title("stimulation spot vs cell footprint")
    path = os.path.join(OUT, "spot_vs_cells.png")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    print(f"\nwrote {path}")


if __name__ == "__main__":
    main()
