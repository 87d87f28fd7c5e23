"""Command-line front end.

Subcommands mirror the library workflow: simulate scans, difference maps,
localize sensitive regions, extract key/SRAM contents, and check optical
feasibility and scan timing.  All outputs are deterministic for a given
scenario seed; no wall-clock timestamps are embedded.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .analysis import (Box, CellGrid, GrayscaleMap, encode_grayscale,
                       extract_key, extract_sram_word, fit_grid,
                       localize_candidates, noise_rms_mad, subtract_maps)
from .device import Polarity, key_hex
from .errors import (ConfigurationError, GeometryError, GridFitError,
                     WorkbenchError)
from .mapfile import load_map, save_map
from .optics import feasibility, spot_from_optics
from .scan import galvo_scan_time, speedup_report, stage_scan_time
from .scenario import builtin_scenario_names, load_scenario, simulate

EXIT_CODES = {ConfigurationError: 2, GeometryError: 3, GridFitError: 4}


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _map_image(m, upscale: int | None = None):
    """Grayscale map as an RGB PIL image, top row first."""
    from PIL import Image

    g = encode_grayscale(m).values
    arr = np.round(g[::-1] * 255.0).astype(np.uint8)
    img = Image.fromarray(arr, mode="L").convert("RGB")
    if upscale is None:
        upscale = max(1, 512 // max(img.width, img.height))
    if upscale > 1:
        img = img.resize((img.width * upscale, img.height * upscale),
                         Image.NEAREST)
    return img, upscale


def _to_px(m, x_um, y_um, upscale):
    """Map coordinates (um) to image pixel coordinates (top-left origin)."""
    ny = m.values.shape[0]
    ix = (x_um - m.origin_um[0]) / m.pixel_pitch_um
    iy = (y_um - m.origin_um[1]) / m.pixel_pitch_um
    return ix * upscale, (ny - iy) * upscale


def cmd_scan(args) -> int:
    scn = load_scenario(args.scenario)
    state = scn.state(args.state)
    m = simulate(scn, args.plan, state, seed=args.seed, run=args.run)
    plan = scn.plan(args.plan)
    rep = speedup_report(plan, scn.galvo_dwell_s,
                         galvo_line_overhead_s=scn.galvo_line_overhead_s,
                         refocus_time_s=scn.instrument.stage.refocus_time_s)
    ny, nx = m.values.shape
    print(f"scenario {scn.name}  plan {args.plan}  state {state}")
    print(f"map {ny} x {nx} px, pitch {plan.pixel_pitch_um:g} um")
    print(f"stage time  {rep.stage_time_s:9.1f} s ({rep.stage_time_s / 60:.1f} min)")
    print(f"galvo time  {rep.galvo_time_s:9.1f} s")
    print(f"speedup     {rep.factor:9.1f}x")
    print(f"saturated pixels: {m.metadata['saturated_pixels']}")
    base = _out_dir(args) / f"{scn.name}_{args.plan}_{state}"
    pgm, sidecar = save_map(m, base)
    print(f"wrote {pgm} (+ {sidecar.name})")
    return 0


def cmd_diff(args) -> int:
    a = load_map(args.map_a)
    b = load_map(args.map_b)
    d = subtract_maps(a, b)
    sigma = noise_rms_mad(d.values)
    print(f"difference map {d.values.shape[0]} x {d.values.shape[1]} px")
    print(f"value range [{d.values.min():+.3e}, {d.values.max():+.3e}] A")
    print(f"background noise (MAD): {sigma:.3e} A")
    base = _out_dir(args) / args.name
    pgm, sidecar = save_map(d, base)
    print(f"wrote {pgm} (+ {sidecar.name})")
    return 0


def cmd_localize(args) -> int:
    scn = load_scenario(args.scenario)
    state_on = scn.state(args.state)
    state_off = args.reference_state
    if state_off is None:
        raise ConfigurationError(
            "localize needs --reference-state (the scan with the target "
            "unpowered or cleared)")
    on = simulate(scn, args.plan, state_on, seed=args.seed, run=args.run)
    off = simulate(scn, args.plan, scn.state(state_off), seed=args.seed,
                   run=args.run + 1)
    boxes = localize_candidates(on, off, threshold_sigma=args.threshold)
    if not boxes:
        print("no candidate regions above threshold")
    for i, bx in enumerate(boxes, 1):
        print(f"box {i}: x [{bx.x0:.1f}, {bx.x1:.1f}] um, "
              f"y [{bx.y0:.1f}, {bx.y1:.1f}] um, weight {bx.weight:.3e}")

    from PIL import ImageDraw

    img, up = _map_image(on)
    draw = ImageDraw.Draw(img)
    for bx in boxes:
        x0, y0 = _to_px(on, bx.x0, bx.y1, up)
        x1, y1 = _to_px(on, bx.x1, bx.y0, up)
        draw.rectangle([x0, y0, x1, y1], outline=(255, 64, 64), width=2)
    out = _out_dir(args) / f"{scn.name}_{args.plan}_localization.png"
    img.save(out)
    print(f"wrote {out}")
    payload = {"scenario": scn.name, "plan": args.plan,
               "states": [state_on, state_off],
               "threshold_sigma": args.threshold,
               "boxes": [{"x0_um": bx.x0, "y0_um": bx.y0, "x1_um": bx.x1,
                          "y1_um": bx.y1, "weight_a": bx.weight}
                         for bx in boxes]}
    jpath = out.with_suffix(".json")
    jpath.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(f"wrote {jpath}")
    return 0


def _draw_grid(img, draw, m, grid: CellGrid, upscale, flagged=()):
    x_lines = [grid.origin_um[0] + k * grid.pitch_x_um
               for k in range(grid.cols + 1)]
    y_lines = [grid.origin_um[1] + k * grid.pitch_y_um
               for k in range(grid.rows + 1)]
    for x in x_lines:
        x0, y0 = _to_px(m, x, y_lines[-1], upscale)
        x1, y1 = _to_px(m, x, y_lines[0], upscale)
        draw.line([x0, y0, x1, y1], fill=(64, 220, 64), width=1)
    for y in y_lines:
        x0, y0 = _to_px(m, x_lines[0], y, upscale)
        x1, y1 = _to_px(m, x_lines[-1], y, upscale)
        draw.line([x0, y0, x1, y1], fill=(64, 220, 64), width=1)
    for r, c in flagged:
        rx0, ry0, rx1, ry1 = grid.cell_rect(r, c)
        x0, y0 = _to_px(m, rx0, ry1, upscale)
        x1, y1 = _to_px(m, rx1, ry0, upscale)
        draw.rectangle([x0, y0, x1, y1], outline=(255, 64, 64), width=1)


def cmd_extract_key(args) -> int:
    scn = load_scenario(args.scenario)
    if scn.mapping is None:
        raise ConfigurationError(
            f"scenario {scn.name!r} has no key bit mapping")
    state = scn.state(args.state)
    target = simulate(scn, args.plan, state, seed=args.seed, run=args.run)
    reference = None
    if args.classifier == "differential":
        ref_state = args.reference_state or "reference"
        reference = simulate(scn, args.plan, scn.state(ref_state),
                             seed=args.seed, run=args.run + 1)
    grid_map = target
    if args.grid_state is not None:
        grid_map = simulate(scn, args.plan, scn.state(args.grid_state),
                            seed=args.seed, run=args.run + 2)
    grid = fit_grid(grid_map, scn.base_memory.geometry)
    report = extract_key(
        target, grid, scn.mapping, classifier=args.classifier,
        polarity=scn.base_memory.polarity, reference=reference,
        threshold=args.threshold)
    print(report.summary())

    from PIL import ImageDraw

    img, up = _map_image(target)
    draw = ImageDraw.Draw(img)
    low = set(report.low_confidence_bits)
    flagged = [(r, c) for r, c, k in report.cells if k in low]
    _draw_grid(img, draw, target, grid, up, flagged=flagged)
    base = _out_dir(args) / f"{scn.name}_{args.plan}_{state}"
    png = Path(f"{base}_grid.png")
    img.save(png)
    rpath = Path(f"{base}_report.json")
    report.save(rpath)
    print(f"wrote {rpath}")
    print(f"wrote {png}")
    return 0


def cmd_extract_sram(args) -> int:
    scn = load_scenario(args.scenario)
    state = scn.state(args.state)
    m = simulate(scn, args.plan, state, seed=args.seed, run=args.run)
    grid = fit_grid(m, scn.base_memory.geometry)
    if args.cells is not None:
        r0, r1, c0, c1 = args.cells
    else:
        r0, r1, c0, c1 = 0, grid.rows, 0, grid.cols
    bits, conf = extract_sram_word(m, grid, (r0, r1, c0, c1),
                                   polarity=scn.base_memory.polarity)
    print(f"scenario {scn.name}  plan {args.plan}  state {state}")
    print(f"grid {grid.rows} x {grid.cols} cells, "
          f"pitch {grid.pitch_x_um:.3f} x {grid.pitch_y_um:.3f} um")
    print(f"cells rows [{r0}, {r1}) cols [{c0}, {c1}), top row first:")
    for r in range(bits.shape[0] - 1, -1, -1):
        print("  " + "".join(str(int(v)) for v in bits[r]))
    print(f"mean confidence {conf.mean():.1f}")
    payload = {"scenario": scn.name, "plan": args.plan, "state": state,
               "cell_range": [r0, r1, c0, c1],
               "grid": grid.to_dict(),
               "bits": bits.astype(int).tolist(),
               "confidences": np.round(conf, 4).tolist()}
    out = _out_dir(args) / f"{scn.name}_{args.plan}_{state}_bits.json"
    out.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(f"wrote {out}")
    return 0


def cmd_feasibility(args) -> int:
    from dataclasses import replace

    from .optics import SIL_FACTOR_TYPICAL

    scn = load_scenario(args.scenario)
    geom = scn.base_memory.geometry
    cell_min = args.cell_dimension
    if cell_min is None:
        cell_min = min(geom.width_um, geom.height_um)
    sil = args.sil_factor if args.sil_factor is not None else SIL_FACTOR_TYPICAL
    print(f"scenario {scn.name}")
    print(f"cell min dimension {cell_min:.3f} um")
    print(f"{'configuration':<22} {'spot FWHM':>10} {'required':>10}  verdict")
    rows = [
        ("air objective", 1.0, False),
        ("air + deconvolution", 1.0, True),
        (f"SIL x{sil:g}", sil, False),
        (f"SIL x{sil:g} + deconv", sil, True),
    ]
    for label, factor, deconv in rows:
        spot = spot_from_optics(replace(scn.optics, sil_factor=factor))
        res = feasibility(cell_min, spot, deconvolution=deconv)
        verdict = "feasible" if res.feasible else "NOT feasible"
        print(f"{label:<22} {spot.fwhm_diameter_um:>7.3f} um "
              f"{res.required_min_um:>7.3f} um  {verdict} x{res.margin:.2f}")
    return 0


def cmd_timing(args) -> int:
    scn = load_scenario(args.scenario)
    plan = scn.plan(args.plan)
    n_fast, n_slow = plan.line_counts()
    stage = stage_scan_time(plan, refocus_time_s=scn.instrument.stage.refocus_time_s)
    galvo = galvo_scan_time(plan, scn.galvo_dwell_s,
                            line_overhead_s=scn.galvo_line_overhead_s)
    print(f"scenario {scn.name}  plan {args.plan}")
    print(f"pixels      {n_fast} x {n_slow}")
    print(f"stage scan  {stage:9.1f} s ({stage / 60:.1f} min)")
    print(f"galvo scan  {galvo:9.1f} s ({galvo / 60:.1f} min)")
    print(f"speedup     {stage / galvo:9.1f}x")
    return 0


def _add_common(p, plan=True):
    p.add_argument("--scenario", required=True,
                   help="builtin scenario name or path to a scenario JSON "
                        f"(builtin: {', '.join(builtin_scenario_names())})")
    if plan:
        p.add_argument("--plan", required=True, help="scan plan name")
        p.add_argument("--state", default=None,
                       help="device state (default: scenario default)")
        p.add_argument("--seed", type=int, default=None,
                       help="override the scenario seed")
        p.add_argument("--run", type=int, default=0,
                       help="run index for repeated acquisitions")
        p.add_argument("--out", default=".", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="tlsim",
        description="Simulated thermal-stimulation scanning workbench")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scan", help="acquire one response map")
    _add_common(p)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("diff", help="subtract two saved maps")
    p.add_argument("map_a", help="map file (.pgm/.json/base path)")
    p.add_argument("map_b", help="map file to subtract")
    p.add_argument("--name", default="diff", help="output base name")
    p.add_argument("--out", default=".", help="output directory")
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("localize",
                       help="find sensitive regions from an on/off pair")
    _add_common(p)
    p.add_argument("--reference-state", default=None,
                   help="state for the reference (off) acquisition")
    p.add_argument("--threshold", type=float, default=5.0,
                   help="detection threshold in noise sigmas")
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("extract-key", help="recover the stored key")
    _add_common(p)
    p.add_argument("--classifier", choices=("quadrant", "differential"),
                   default="quadrant")
    p.add_argument("--reference-state", default=None,
                   help="reference state for the differential classifier "
                        "(default: 'reference')")
    p.add_argument("--threshold", type=float, default=3.0,
                   help="differential energy threshold")
    p.add_argument("--grid-state", default=None,
                   help="fit the cell grid on a scan of this state instead "
                        "of the target scan (recon on a quiet device when "
                        "the target map is too noisy to carry the lattice)")
    p.set_defaults(func=cmd_extract_key)

    p = sub.add_parser("extract-sram", help="read bits from an SRAM scan")
    _add_common(p)
    p.add_argument("--cells", type=int, nargs=4, default=None,
                   metavar=("R0", "R1", "C0", "C1"),
                   help="half-open cell range (default: whole fitted grid)")
    p.set_defaults(func=cmd_extract_sram)

    p = sub.add_parser("feasibility", help="check spot size against the cell")
    _add_common(p, plan=False)
    p.add_argument("--sil-factor", type=float, default=None,
                   help="solid-immersion factor for the SIL rows "
                        "(default 4.3)")
    p.add_argument("--cell-dimension", type=float, default=None,
                   help="override the smallest cell dimension (um)")
    p.set_defaults(func=cmd_feasibility)

    p = sub.add_parser("timing", help="stage vs deflection scan timing")
    p.add_argument("--scenario", required=True)
    p.add_argument("--plan", required=True)
    p.set_defaults(func=cmd_timing)

    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except WorkbenchError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CODES.get(type(e), 1)


if __name__ == "__main__":
    sys.exit(main())
