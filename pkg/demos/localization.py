"""Finding the key array on a 1.5 mm die.

Coarse 5 um raster of the whole die, once with the battery connected
and once without.  Everything that stays sensitive in both scans (the
always-on structure near the die center) cancels in the difference;
the one region that appears only when powered is the battery-backed
key array.
"""

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import matplotlib.patches as mpatches

from tlsim import Box, load_scenario, localize_candidates, simulate

OUT = os.path.join(os.path.dirname(__file__), "out")


def main():
    os.makedirs(OUT, exist_ok=True)
    scn = load_scenario("bbram_search")
    on = simulate(scn, "bbram_localization", "powered")
    off = simulate(scn, "bbram_localization", "unpowered", run=1)
    boxes = localize_candidates(on, off)
    truth = Box(*scn.base_memory.bounding_box())
    print(f"{len(boxes)} candidate region(s)")
    for i, b in enumerate(boxes):
        print(f"  #{i}: x [{b.x0:.0f}, {b.x1:.0f}] um, "
              f"y [{b.y0:.0f}, {b.y1:.0f}] um, IoU vs truth {b.iou(truth):.2f}")

    x0, y0, x1, y1 = scn.plan("bbram_localization").region_um
    extent = (x0, x1, y0, y1)
    fig, axes = plt.subplots(1, 2, figsize=(11, 5), sharey=True)
    axes[0].imshow(on.values * 1e9, origin="lower", extent=extent, cmap="gray")
    axes[0].set_title("battery connected")
    axes[1].imshow((on.values - off.values) * 1e9, origin="lower",
                   extent=extent, cmap="gray")
    axes[1].set_title("difference, candidates boxed")
    for b in boxes:
        axes[1].add_patch(mpatches.Rectangle(
            (b.x0, b.y0), b.x1 - b.x0, b.y1 - b.y0,
            fill=False, edgecolor="red", linewidth=1.5))
    for ax in axes:
        ax.set_xlabel("x (um)")
    axes[0].set_ylabel("y (um)")
    path = os.path.join(OUT, "localization.png")
    fig.savefig(path, dpi=150, bbox_inches="tight")
    print(f"wrote {path}")


if __name__ == "__main__":
    main()
