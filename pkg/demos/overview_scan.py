"""Full-array SRAM overview scan.

Simulates the coarse 0.5 um raster over the whole MSP430 array in its
zeroized state and renders the current map.  The 43-minute stage scan
accumulates visible drift along the slow axis and loses focus sharpness
between refocus stops; both effects are part of the instrument model.
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from tlsim import load_scenario, simulate, stage_scan_time

OUT = os.path.join(os.path.dirname(__file__), "out")


def main():
    os.makedirs(OUT, exist_ok=True)
    scn = load_scenario("sram_overview")
    plan = scn.plan("msp430_overview")
    t = stage_scan_time(plan, refocus_time_s=scn.instrument.stage.refocus_time_s)
    print(f"simulating {plan.pixel_counts()[0]} x {plan.pixel_counts()[1]} px, "
          f"stage time {t / 60:.1f} min")

    m = simulate(scn, "msp430_overview", "zeroized")

    x0, y0, x1, y1 = plan.region_um
    fig, ax = plt.subplots(figsize=(9, 4))
    im = ax.imshow(m.values * 1e9, origin="lower", extent=(x0, x1, y0, y1),
                   cmap="gray", aspect="equal")
    fig.colorbar(im, ax=ax, label="delta current (nA)")
    ax.set_xlabel("x (um)")
    ax.set_ylabel("y (um)")
    ax.set_title(f"SRAM overview, {plan.pixel_pitch_um} um pitch, "
                 f"{t / 60:.0f} min stage raster")
    path = os.path.join(OUT, "sram_overview.png")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    print(f"wrote {path}")
    print("note: at this pitch the map is for orientation; bit readout "
          "needs a 0.25 um or finer raster over a smaller window")


if __name__ == "__main__":
    main()
