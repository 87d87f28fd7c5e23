"""Attack-side analysis: map rendering, differencing, localization, grid
fitting, per-cell bit classification, and key assembly.

Everything here consumes ResponseMaps; nothing reaches back into the
simulation.  The two bit classifiers are heuristics native to this
workbench and reports label them as such.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .device import KEY_BITS, BitMapping, CellGeometry, MemoryArray, Polarity, key_hex
from .errors import ConfigurationError, GeometryError, GridFitError
from .scan import ResponseMap

# -- basic map operations ---------------------------------------------------


def noise_rms_mad(values: np.ndarray) -> float:
    """Robust per-pixel noise estimate (median absolute deviation scaled
    to Gaussian sigma); insensitive to sparse signal regions."""
    v = np.asarray(values, dtype=float).ravel()
    med = np.median(v)
    return float(1.4826 * np.median(np.abs(v - med)))


def gradient_energy(values: np.ndarray) -> float:
    """Sharpness metric: mean squared intensity gradient."""
    gy, gx = np.gradient(np.asarray(values, dtype=float))
    return float(np.mean(gx * gx + gy * gy))


@dataclass
class GrayscaleMap:
    """Unit-interval rendering of a response map with its linear mapping
    parameters, so absolute currents stay recoverable."""

    values: np.ndarray
    min_current_a: float
    max_current_a: float
    origin_um: tuple[float, float]
    pixel_pitch_um: float
    clip_percentiles: tuple[float, float]


def encode_grayscale(m: ResponseMap,
                     clip_percentiles: tuple[float, float] = (1.0, 99.0)) -> GrayscaleMap:
    """Percentile-clipped linear mapping of currents onto [0, 1].

    A constant map encodes to all 0.5 rather than dividing by zero.
    """
    lo_p, hi_p = clip_percentiles
    if not (0.0 <= lo_p < hi_p <= 100.0):
        raise ConfigurationError("clip percentiles must satisfy 0 <= lo < hi <= 100")
    v = m.values
    lo = float(np.percentile(v, lo_p))
    hi = float(np.percentile(v, hi_p))
    if hi > lo:
        out = np.clip((v - lo) / (hi - lo), 0.0, 1.0)
    else:
        out = np.full(v.shape, 0.5)
    return GrayscaleMap(
        values=out, min_current_a=lo, max_current_a=hi,
        origin_um=m.origin_um, pixel_pitch_um=m.pixel_pitch_um,
        clip_percentiles=(lo_p, hi_p),
    )


def subtract_maps(a: ResponseMap, b: ResponseMap) -> ResponseMap:
    """Signed pixel-wise difference a - b.

    Both maps must share origin, pitch, and shape exactly; there is no
    implicit resampling.
    """
    if not a.same_geometry(b):
        raise GeometryError(
            f"map geometries differ: {a.shape}@{a.origin_um}/{a.pixel_pitch_um} vs "
            f"{b.shape}@{b.origin_um}/{b.pixel_pitch_um}")
    meta = {
        "difference": True,
        "minuend": a.metadata.get("label"),
        "subtrahend": b.metadata.get("label"),
    }
    return ResponseMap(
        values=a.values - b.values,
        origin_um=a.origin_um,
        pixel_pitch_um=a.pixel_pitch_um,
        line_timestamps_s=np.array(a.line_timestamps_s),
        metadata=meta,
    )


# -- localization -------------------------------------------------------------


@dataclass(frozen=True)
class Box:
    """Axis-aligned region in um with an integrated-difference weight."""

    x0: float
    y0: float
    x1: float
    y1: float
    weight: float = 0.0

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)

    def iou(self, other: "Box") -> float:
        ix0 = max(self.x0, other.x0)
        iy0 = max(self.y0, other.y0)
        ix1 = min(self.x1, other.x1)
        iy1 = min(self.y1, other.y1)
        if ix1 <= ix0 or iy1 <= iy0:
            return 0.0
        inter = (ix1 - ix0) * (iy1 - iy0)
        area_a = (self.x1 - self.x0) * (self.y1 - self.y0)
        area_b = (other.x1 - other.x0) * (other.y1 - other.y0)
        return inter / (area_a + area_b - inter)


def localize_candidates(on: ResponseMap, off: ResponseMap,
                        threshold_sigma: float = 5.0,
                        merge_radius_px: int = 3,
                        min_pixels: int = 3) -> list[Box]:
    """Candidate regions that respond in the on-state but not the off-state.

    Thresholds |on - off| at threshold_sigma times the difference noise
    (MAD estimate), merges nearby hits morphologically, and drops
    components with fewer than min_pixels raw hits.  Structures that are
    sensitive in both states cancel in the difference and never appear.
    Boxes are sorted by integrated |difference|, strongest first.
    """
    diff = subtract_maps(on, off)
    d = diff.values
    sigma = noise_rms_mad(d)
    if sigma <= 0:
        # noiseless difference: any nonzero pixel is a hit
        mask = np.abs(d) > 0
    else:
        mask = np.abs(d) > threshold_sigma * sigma
    if not mask.any():
        return []

    merged = ndimage.binary_dilation(
        mask, structure=np.ones((3, 3), dtype=bool), iterations=merge_radius_px)
    labels, n = ndimage.label(merged, structure=np.ones((3, 3), dtype=bool))

    pitch = on.pixel_pitch_um
    ox, oy = on.origin_um
    boxes = []
    for lab in range(1, n + 1):
        hits = mask & (labels == lab)
        count = int(hits.sum())
        if count < min_pixels:
            continue
        iy, ix = np.nonzero(hits)
        boxes.append(Box(
            x0=ox + ix.min() * pitch,
            y0=oy + iy.min() * pitch,
            x1=ox + (ix.max() + 1) * pitch,
            y1=oy + (iy.max() + 1) * pitch,
            weight=float(np.abs(d[hits]).sum()),
        ))
    boxes.sort(key=lambda b: -b.weight)
    return boxes


# -- cell grid ----------------------------------------------------------------


@dataclass(frozen=True)
class CellGrid:
    """Regular cell lattice overlaid on a map region."""

    origin_um: tuple[float, float]
    pitch_x_um: float
    pitch_y_um: float
    rows: int
    cols: int
    block_boundaries: tuple[tuple[int, float], ...] = ()

    def __post_init__(self):
        if self.pitch_x_um <= 0 or self.pitch_y_um <= 0:
            raise ConfigurationError("grid pitches must be positive")
        if self.rows < 1 or self.cols < 1:
            raise ConfigurationError("grid must contain at least one cell")

    def cell_rect(self, r: int, c: int) -> tuple[float, float, float, float]:
        if not (0 <= r < self.rows and 0 <= c < self.cols):
            raise IndexError(f"cell ({r}, {c}) outside {self.rows}x{self.cols} grid")
        x = self.origin_um[0] + c * self.pitch_x_um
        for col, off in self.block_boundaries:
            if c >= col:
                x += off
        y = self.origin_um[1] + r * self.pitch_y_um
        return (x, y, x + self.pitch_x_um, y + self.pitch_y_um)

    @classmethod
    def from_memory(cls, model: MemoryArray) -> "CellGrid":
        return cls(
            origin_um=model.origin_um,
            pitch_x_um=model.geometry.width_um,
            pitch_y_um=model.geometry.height_um,
            rows=model.rows, cols=model.cols,
            block_boundaries=model.block_boundaries,
        )

    def to_dict(self) -> dict:
        return {
            "origin_um": list(self.origin_um),
            "pitch_x_um": self.pitch_x_um,
            "pitch_y_um": self.pitch_y_um,
            "rows": self.rows,
            "cols": self.cols,
            "block_boundaries": [list(b) for b in self.block_boundaries],
        }


def _rect_slices(m: ResponseMap, rect) -> tuple[slice, slice]:
    x0, y0, x1, y1 = rect
    pitch = m.pixel_pitch_um
    ix0 = int(round((x0 - m.origin_um[0]) / pitch))
    ix1 = int(round((x1 - m.origin_um[0]) / pitch))
    iy0 = int(round((y0 - m.origin_um[1]) / pitch))
    iy1 = int(round((y1 - m.origin_um[1]) / pitch))
    ny, nx = m.values.shape
    if ix0 < 0 or iy0 < 0 or ix1 > nx or iy1 > ny or ix1 <= ix0 or iy1 <= iy0:
        raise GeometryError(f"rect {rect} not fully inside map extent {m.extent_um()}")
    return slice(iy0, iy1), slice(ix0, ix1)


def cell_patch(m: ResponseMap, grid: CellGrid, r: int, c: int) -> np.ndarray:
    """Pixel patch covering one full cell; GeometryError if the cell is
    not entirely inside the map."""
    sy, sx = _rect_slices(m, grid.cell_rect(r, c))
    return m.values[sy, sx]


# -- grid fitting -------------------------------------------------------------


def _parabolic_peak(y: np.ndarray, i: int) -> float:
    """Sub-sample peak position by 3-point parabola around index i."""
    if i <= 0 or i >= len(y) - 1:
        return float(i)
    denom = y[i - 1] - 2.0 * y[i] + y[i + 1]
    if denom >= 0:
        return float(i)
    return float(i + 0.5 * (y[i - 1] - y[i + 1]) / denom)


# A lattice line must carry at least this multiple of the map's total
# power; white noise sits near 1.0 at every frequency.
LINE_POWER_MIN = 2.5


def _line_power(data: np.ndarray, freqs: np.ndarray) -> np.ndarray:
    """Summed per-column power of `data` at each frequency (cycles/sample
    along axis 0)."""
    phases = np.exp(-2j * np.pi * np.outer(freqs, np.arange(data.shape[0])))
    return np.sum(np.abs(phases @ data) ** 2, axis=1)


def _spectral_pitch(data: np.ndarray, lag_hint: float, search_frac: float,
                    axis_name: str) -> float:
    """Pitch (in samples along axis 0 of `data`) from the power-spectrum
    line nearest 1/lag_hint.

    Lag-domain peak picking is biased here: the lattice autocorrelation
    rides on a broad envelope and the per-cell site doublet smears the
    comb to nearly the period width.  A spectral line has neither
    problem, and white noise gives expected power equal to the map energy
    at every frequency, which makes the detection threshold principled.
    The second-harmonic line is folded in when it fits below Nyquist; on
    short arrays it is the sharper of the two.
    """
    n = data.shape[0]
    lo_lag = lag_hint * (1.0 - search_frac)
    hi_lag = lag_hint * (1.0 + search_frac)
    if hi_lag >= n - 2:
        raise GridFitError(
            f"{axis_name}: map too small to search for pitch near "
            f"{lag_hint:.1f} px")
    energy = float(np.sum(data * data))
    if energy <= 0:
        raise GridFitError("map has no variance; nothing to fit")
    freqs = np.linspace(1.0 / hi_lag, 1.0 / lo_lag, 241)
    power = _line_power(data, freqs)
    fundamental = power.copy()
    if 2.0 / lo_lag < 0.5:
        power += _line_power(data, 2.0 * freqs)
    j = int(np.argmax(power))
    if not np.isfinite(power[j]) or fundamental[j] <= LINE_POWER_MIN * energy:
        raise GridFitError(
            f"{axis_name}: no lattice line near lag {lag_hint:.1f} px "
            f"(power {fundamental[j] / energy:.2f}x map energy, "
            f"need > {LINE_POWER_MIN:.1f}x)")
    f = freqs[0] + _parabolic_peak(power, j) * (freqs[1] - freqs[0])
    return 1.0 / f


def _phase_by_site_contrast(v: np.ndarray, wp: float, hp: float,
                            sites_px: dict[str, tuple[float, float]],
                            box_frac: float = 0.15) -> tuple[float, float]:
    """Pick the lattice phase (x, y in pixel units, within one pitch) that
    maximizes summed per-cell diagonal contrast |(bl+tr) - (tl+br)| read
    through narrow boxes centered on the expected contact-site positions.

    Two traps rule out simpler criteria.  Template matching against the
    folded profile fails because the profile's minimum moves from the
    cell boundary to mid-cell once the spot blurs neighbouring lobes into
    each other.  Wide corner regions fail because on a uniform bit
    pattern a half-pitch shift swaps the diagonals with consistent sign
    and scores just as well.  Narrow boxes matched to the known site
    offsets break both: any half-pitch shift moves the true sites off the
    boxes, and the criterion never depends on the fold profile's shape.
    """
    ny, nx = v.shape
    bw = max(1, int(round(box_frac * wp)))
    bh = max(1, int(round(box_frac * hp)))
    s = np.zeros((ny + 1, nx + 1))
    s[1:, 1:] = np.cumsum(np.cumsum(v, axis=0), axis=1)

    def box_means(r0: np.ndarray, c0: np.ndarray) -> np.ndarray:
        r1, c1 = r0 + bh, c0 + bw
        return (s[r1, c1] - s[r0, c1] - s[r1, c0] + s[r0, c0]) / (bh * bw)

    # box top-left offsets within the cell, one per site
    site_box = {name: (cy - bh / 2.0, cx - bw / 2.0)
                for name, (cx, cy) in sites_px.items()}
    n_ox = max(1, int(round(wp)))
    n_oy = max(1, int(round(hp)))
    scores = np.full((n_oy, n_ox), -np.inf)
    for oy in range(n_oy):
        lows = np.arange(oy, ny - hp + 1e-9, hp)
        if lows.size == 0:
            continue
        for ox in range(n_ox):
            lefts = np.arange(ox, nx - wp + 1e-9, wp)
            if lefts.size == 0:
                continue
            means = {}
            for name, (dy, dx) in site_box.items():
                r0 = np.repeat(np.round(lows + dy).astype(int), lefts.size)
                c0 = np.tile(np.round(lefts + dx).astype(int), lows.size)
                means[name] = box_means(r0, c0)
            contrast = (means["bl"] + means["tr"]) - (means["tl"] + means["br"])
            scores[oy, ox] = np.abs(contrast).mean()
    oy, ox = np.unravel_index(int(np.argmax(scores)), scores.shape)
    if not np.isfinite(scores[oy, ox]):
        raise GridFitError("map too small to align a cell grid")

    def refine(line: np.ndarray, k: int, period: int) -> float:
        y3 = np.array([line[(k - 1) % period], line[k], line[(k + 1) % period]])
        if not np.all(np.isfinite(y3)):
            return float(k)
        denom = y3[0] - 2.0 * y3[1] + y3[2]
        frac = 0.0 if denom >= 0 else 0.5 * (y3[0] - y3[2]) / denom
        return k + float(np.clip(frac, -0.5, 0.5))

    return (refine(scores[oy, :], ox, n_ox), refine(scores[:, ox], oy, n_oy))


def fit_grid(m: ResponseMap, hint: CellGeometry,
             search_frac: float = 0.10) -> CellGrid:
    """Recover the cell lattice from a map showing at least 3x3 cells.

    Pitch comes from the power-spectrum line nearest the hint (fundamental
    plus second harmonic), phase from maximizing per-cell corner contrast
    over all pixel offsets, and the grid extent from the bounding range of
    occupied cells.  Raises GridFitError when no usable lattice line
    exists or too few cells are visible.
    """
    v = m.values - np.median(m.values)
    ny, nx = v.shape
    pitch_px = m.pixel_pitch_um

    pitches = {}
    for axis, (data, hint_um) in {
        "x": (v.T, hint.width_um),
        "y": (v, hint.height_um),
    }.items():
        lag = _spectral_pitch(data, hint_um / pitch_px, search_frac, axis)
        pitches[axis] = lag * pitch_px
    px_um, py_um = pitches["x"], pitches["y"]

    wp, hp = px_um / pitch_px, py_um / pitch_px
    sites_px = {name: (off_x / hint.width_um * wp, off_y / hint.height_um * hp)
                for name, (off_x, off_y) in hint.site_offsets.items()}
    ox_px, oy_px = _phase_by_site_contrast(v, wp, hp, sites_px)
    ex0, ey0, ex1, ey1 = m.extent_um()
    sx = ex0 + ox_px * pitch_px
    sy = ey0 + oy_px * pitch_px

    # enumerate cells fully inside the map and keep the occupied range
    ox = sx + px_um * np.ceil((ex0 - sx) / px_um - 1e-9)
    oy = sy + py_um * np.ceil((ey0 - sy) / py_um - 1e-9)
    n_cols = int(np.floor((ex1 - ox) / px_um + 1e-9))
    n_rows = int(np.floor((ey1 - oy) / py_um + 1e-9))
    if n_cols < 3 or n_rows < 3:
        raise GridFitError(
            f"map holds only {n_rows}x{n_cols} full cells; need at least 3x3")

    cell_e = np.zeros((n_rows, n_cols))
    av = np.abs(v)
    for r in range(n_rows):
        iy0 = int(round((oy + r * py_um - ey0) / pitch_px))
        iy1 = int(round((oy + (r + 1) * py_um - ey0) / pitch_px))
        for c in range(n_cols):
            ix0 = int(round((ox + c * px_um - ex0) / pitch_px))
            ix1 = int(round((ox + (c + 1) * px_um - ex0) / pitch_px))
            cell_e[r, c] = av[iy0:iy1, ix0:ix1].mean()
    lo = float(np.percentile(cell_e, 10))
    top = float(np.percentile(cell_e, 90))
    if top <= 0:
        raise GridFitError("no occupied cells stand out from background")
    if lo >= 0.5 * top:
        # no dim decile: the window sits wholly on the array
        occupied = np.ones(cell_e.shape, dtype=bool)
    else:
        occupied = cell_e > lo + 0.25 * (top - lo)
    if occupied.sum() < 9:
        raise GridFitError(f"only {int(occupied.sum())} occupied cells; need >= 3x3")
    rr, cc = np.nonzero(occupied)
    r0, r1 = int(rr.min()), int(rr.max())
    c0, c1 = int(cc.min()), int(cc.max())
    return CellGrid(
        origin_um=(float(ox + c0 * px_um), float(oy + r0 * py_um)),
        pitch_x_um=float(px_um), pitch_y_um=float(py_um),
        rows=r1 - r0 + 1, cols=c1 - c0 + 1,
    )


# -- bit classifiers ----------------------------------------------------------


@dataclass(frozen=True)
class BitDecision:
    bit: int
    confidence: float
    score: float  # classifier-specific statistic (signed score or energy)


def _corner_regions(patch: np.ndarray, corner_frac: float):
    ny, nx = patch.shape
    if ny < 3 or nx < 3:
        raise GeometryError(f"patch {patch.shape} too small for corner regions")
    ky = max(1, int(round(corner_frac * ny)))
    kx = max(1, int(round(corner_frac * nx)))
    return {
        "tl": patch[ny - ky:, :kx],
        "tr": patch[ny - ky:, nx - kx:],
        "bl": patch[:ky, :kx],
        "br": patch[:ky, nx - kx:],
    }


def classify_bit_quadrant(patch: np.ndarray, polarity: Polarity,
                          noise_rms: float | None = None,
                          corner_frac: float = 0.3) -> BitDecision:
    """Classify one cell from its raw response patch.

    Score is the mean of the polarity's 1-diagonal corner regions minus
    the mean of the 0-diagonal regions; positive means a stored 1.
    Confidence is the score in units of its own noise.
    """
    patch = np.asarray(patch, dtype=float)
    regions = _corner_regions(patch, corner_frac)
    one = np.concatenate([regions[c].ravel() for c in polarity.one_diagonal])
    zero = np.concatenate([regions[c].ravel() for c in polarity.zero_diagonal])
    score = float(one.mean() - zero.mean())
    if noise_rms is None:
        noise_rms = noise_rms_mad(patch)
    sigma_score = noise_rms * np.sqrt(1.0 / len(one) + 1.0 / len(zero)) \
        if noise_rms > 0 else 0.0
    confidence = abs(score) / sigma_score if sigma_score > 0 else np.inf
    return BitDecision(bit=int(score > 0), confidence=float(confidence), score=score)


def classify_bit_differential(patch: np.ndarray, threshold: float = 3.0,
                              noise_rms: float | None = None) -> BitDecision:
    """Classify one cell from its signed difference patch.

    Energy is the patch standard deviation in noise units; a changed cell
    carries signal lobes, an unchanged cell is pure noise (energy ~ 1).
    Confidence is the margin between energy and the decision threshold.
    """
    if threshold <= 1.0:
        raise ConfigurationError("differential threshold must exceed the "
                                 "pure-noise energy of 1")
    patch = np.asarray(patch, dtype=float)
    if patch.size < 4:
        raise GeometryError(f"patch {patch.shape} too small to estimate energy")
    if noise_rms is None:
        noise_rms = noise_rms_mad(patch)
    if noise_rms <= 0:
        energy = np.inf if patch.std() > 0 else 0.0
    else:
        energy = float(patch.std() / noise_rms)
    confidence = abs(energy - threshold) / threshold
    return BitDecision(bit=int(energy > threshold), confidence=float(confidence),
                       score=float(energy))


# -- extraction ---------------------------------------------------------------

CLASSIFIER_NOTE = "bit classifiers are heuristics native to this workbench"

DEFAULT_DIFF_THRESHOLD = 3.0
DEFAULT_QUADRANT_FLOOR = 3.0
DEFAULT_DIFF_FLOOR = 0.25
DEFAULT_ATTACK_SNR_FLOOR = 3.0


@dataclass
class ExtractionReport:
    classifier: str
    key_hex: str
    bits: np.ndarray                   # (KEY_BITS,) values indexed by bit
    confidences: np.ndarray            # (KEY_BITS,)
    cells: list[tuple[int, int, int]]  # (row, col, bit_index)
    low_confidence_bits: list[int]
    confidence_floor: float
    threshold: float | None
    attack_snr: float | None
    noise_rms_a: float
    grid: CellGrid
    metadata_bits: list[int] | None = None
    metadata_word_hex: str | None = None
    notes: str = CLASSIFIER_NOTE

    @property
    def key_int(self) -> int:
        return int(self.key_hex, 16)

    def to_dict(self) -> dict:
        table = [
            {"bit": int(k), "row": int(r), "col": int(c),
             "value": int(self.bits[k]),
             "confidence": float(self.confidences[k]),
             "flagged": bool(k in self.low_confidence_bits)}
            for r, c, k in sorted(self.cells, key=lambda t: -t[2])
        ]
        return {
            "classifier": self.classifier,
            "key_hex": self.key_hex,
            "bit_table": table,
            "low_confidence_bits": sorted(int(k) for k in self.low_confidence_bits),
            "confidence_floor": self.confidence_floor,
            "threshold": self.threshold,
            "attack_snr": self.attack_snr,
            "noise_rms_a": self.noise_rms_a,
            "grid": self.grid.to_dict(),
            "metadata_bits": self.metadata_bits,
            "metadata_word_hex": self.metadata_word_hex,
            "notes": self.notes,
        }

    def save(self, path) -> Path:
        path = Path(path)
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
            f.write("\n")
        return path

    def summary(self) -> str:
        flagged = len(self.low_confidence_bits)
        lines = [
            f"classifier: {self.classifier}",
            f"key: {self.key_hex}",
            f"low-confidence bits: {flagged}/{KEY_BITS}"
            + (" [UNRELIABLE]" if flagged > KEY_BITS // 4 else ""),
        ]
        if self.attack_snr is not None:
            lines.append(f"attack SNR: {self.attack_snr:.2f}")
        if self.metadata_word_hex is not None:
            lines.append(f"metadata word: {self.metadata_word_hex}")
        return "\n".join(lines)


def _median_quadrant_snr(raw: ResponseMap, grid: CellGrid,
                         cells, polarity: Polarity, noise_rms: float) -> float:
    """Median per-cell quadrant confidence on a raw map: how visible the
    site pattern is at all, independent of stored values."""
    confs = []
    for r, c, _ in cells:
        patch = cell_patch(raw, grid, r, c)
        d = classify_bit_quadrant(patch, polarity, noise_rms=noise_rms)
        confs.append(d.confidence)
    return float(np.median(confs))


def extract_key(target: ResponseMap, grid: CellGrid, mapping: BitMapping,
                classifier: str = "quadrant", *,
                polarity: Polarity | None = None,
                reference: ResponseMap | None = None,
                threshold: float = DEFAULT_DIFF_THRESHOLD,
                noise_rms: float | None = None,
                confidence_floor: float | None = None,
                attack_snr_floor: float = DEFAULT_ATTACK_SNR_FLOOR) -> ExtractionReport:
    """Recover the key from a scan through the physical-to-logical mapping.

    classifier "quadrant" reads the raw target map directly (polarity
    required).  classifier "differential" reads target - reference; when
    the reference is supplied the raw target map is also used to estimate
    how visible the cell sites are (attack SNR), which scales the
    per-cell confidences: heavy injected noise makes every difference
    patch look like pure noise, indistinguishable per-cell from a true
    zero, so reliability must come from the raw map.

    Low-confidence cells are flagged in the report, never silently
    dropped; the key is always assembled from the per-cell decisions.
    """
    cells = list(mapping.items())
    if classifier == "quadrant":
        if polarity is None:
            raise ConfigurationError("quadrant classifier needs the device polarity")
        work = target
        raw = target
        floor = DEFAULT_QUADRANT_FLOOR if confidence_floor is None else confidence_floor
    elif classifier == "differential":
        if reference is not None:
            work = subtract_maps(target, reference)
            raw = target
        else:
            work = target  # caller already passed a signed difference map
            raw = None
        floor = DEFAULT_DIFF_FLOOR if confidence_floor is None else confidence_floor
    else:
        raise ConfigurationError(f"unknown classifier {classifier!r}")

    sigma_w = noise_rms_mad(work.values) if noise_rms is None else noise_rms

    attack_snr = None
    operability = 1.0
    if classifier == "differential" and raw is not None and polarity is not None:
        sigma_raw = noise_rms_mad(raw.values)
        attack_snr = _median_quadrant_snr(raw, grid, cells, polarity, sigma_raw)
        operability = min(1.0, attack_snr / attack_snr_floor)

    bits = np.zeros(KEY_BITS, dtype=np.uint8)
    confs = np.zeros(KEY_BITS)
    for r, c, k in cells:
        patch = cell_patch(work, grid, r, c)
        if classifier == "quadrant":
            d = classify_bit_quadrant(patch, polarity, noise_rms=sigma_w)
            confs[k] = d.confidence
        else:
            d = classify_bit_differential(patch, threshold=threshold,
                                          noise_rms=sigma_w)
            confs[k] = d.confidence * operability
        bits[k] = d.bit

    if classifier == "quadrant" and attack_snr is None:
        attack_snr = float(np.median(confs))

    key = 0
    for k in range(KEY_BITS):
        if bits[k]:
            key |= 1 << k
    low = [int(k) for k in range(KEY_BITS) if confs[k] < floor]

    metadata_bits = None
    metadata_word_hex = None
    if mapping.metadata_row is not None and raw is not None and polarity is not None:
        mr = mapping.metadata_row
        sigma_raw = noise_rms_mad(raw.values)
        metadata_bits = []
        for c in range(grid.cols):
            patch = cell_patch(raw, grid, mr, c)
            d = classify_bit_quadrant(patch, polarity, noise_rms=sigma_raw)
            metadata_bits.append(int(d.bit))
        word = 0
        for b in metadata_bits:
            word = (word << 1) | b
        metadata_word_hex = f"0x{word:0{max(1, (grid.cols + 3) // 4)}x}"

    return ExtractionReport(
        classifier=classifier,
        key_hex=key_hex(key),
        bits=bits,
        confidences=confs,
        cells=cells,
        low_confidence_bits=low,
        confidence_floor=floor,
        threshold=threshold if classifier == "differential" else None,
        attack_snr=attack_snr,
        noise_rms_a=float(sigma_w),
        grid=grid,
        metadata_bits=metadata_bits,
        metadata_word_hex=metadata_word_hex,
    )


def extract_sram_word(m: ResponseMap, grid: CellGrid, cell_range,
                      polarity: Polarity = Polarity.BL_TR,
                      noise_rms: float | None = None):
    """Classify a rectangular cell range of a raw map; returns
    (bits, confidences) arrays of shape (rows, cols) for the range.

    cell_range is (row0, row1, col0, col1), half-open.
    """
    r0, r1, c0, c1 = cell_range
    if not (0 <= r0 < r1 <= grid.rows and 0 <= c0 < c1 <= grid.cols):
        raise ConfigurationError(f"cell range {cell_range} outside grid")
    sigma = noise_rms_mad(m.values) if noise_rms is None else noise_rms
    bits = np.zeros((r1 - r0, c1 - c0), dtype=np.uint8)
    confs = np.zeros_like(bits, dtype=float)
    for r in range(r0, r1):
        for c in range(c0, c1):
            d = classify_bit_quadrant(cell_patch(m, grid, r, c), polarity,
                                      noise_rms=sigma)
            bits[r - r0, c - c0] = d.bit
            confs[r - r0, c - c0] = d.confidence
    return bits, confs
