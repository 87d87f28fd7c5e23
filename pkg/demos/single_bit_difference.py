"""One toggled bit, imaged as an on/off difference.

Runs the single-cell window scan for both device types with the target
bit set and cleared, subtracts the two maps, and shows where the signed
lobes land.  The positive pair sits on the 1-diagonal of the cell and
the negative pair on the 0-diagonal; which diagonal is which differs
between the two devices.
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from tlsim import load_scenario, simulate, subtract_maps

OUT = os.path.join(os.path.dirname(__file__), "out")

CASES = [
    ("sram_single_bit", "msp430_single_bit", "MSP430"),
    ("bbram_single_bit", "bbram_single_bit", "BBRAM"),
]


def main():
    os.makedirs(OUT, exist_ok=True)
    for scn_name, plan_name, label in CASES:
        scn = load_scenario(scn_name)
        on = simulate(scn, plan_name, "bit_on")
        off = simulate(scn, plan_name, "bit_off", run=1)
        diff = subtract_maps(on, off)
        pol = scn.base_memory.polarity
        print(f"{label}: 1-diagonal {pol.one_diagonal}, "
              f"difference spans [{diff.values.min() * 1e9:+.2f}, "
              f"{diff.values.max() * 1e9:+.2f}] nA")

        x0, y0, x1, y1 = scn.plan(plan_name).region_um
        extent = (x0, x1, y0, y1)
        fig, axes = plt.subplots(1, 3, figsize=(12, 3.6), sharey=True)
        for ax, m, title in ((axes[0], on, "bit = 1"),
                             (axes[1], off, "bit = 0")):
            ax.imshow(m.values * 1e9, origin="lower", extent=extent,
                      cmap="gray")
            ax.set_title(f"{label}, {title}")
            ax.set_xlabel("x (um)")
        lim = float(np.abs(diff.values).max()) * 1e9
        im = axes[2].imshow(diff.values * 1e9, origin="lower", extent=extent,
                            cmap="RdBu_r", vmin=-lim, vmax=lim)
        axes[2].set_title("on - off")
        axes[2].set_xlabel("x (um)")
        axes[0].set_ylabel("y (um)")
        fig.colorbar(im, ax=axes[2], label="nA")
        path = os.path.join(OUT, f"single_bit_{label.lower()}.png")
        fig.savefig(path, dpi=150, bbox_inches="tight")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
