"""Memory-under-test model.

A memory array is a regular grid of cells; each cell is a pair of
cross-coupled inverters, and the stored value selects which diagonal pair
of transistor contacts responds to local heating.  The model captures just
enough layout for scan simulation: cell geometry, contact sites, block
offsets, stored bits, and per-cell sensitivity spread.

Lengths are in micrometers throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigurationError

CORNERS = ("tl", "tr", "bl", "br")

KEY_BITS = 256

# Default content of the metadata row (decoded separately from the key).
DEFAULT_METADATA_WORD = 0xC3A5963C


class Polarity(Enum):
    """Which diagonal pair of contact sites is sensitive for a stored 1.

    The complementary diagonal is the 0-state pair, so the two states are
    always disjoint site sets.
    """

    TL_BR = "TL_BR"
    BL_TR = "BL_TR"

    @property
    def one_diagonal(self) -> tuple[str, str]:
        return ("tl", "br") if self is Polarity.TL_BR else ("bl", "tr")

    @property
    def zero_diagonal(self) -> tuple[str, str]:
        return ("bl", "tr") if self is Polarity.TL_BR else ("tl", "br")


@dataclass(frozen=True)
class CellGeometry:
    """Cell footprint and the four contact-site offsets within it.

    Site offsets are keyed by corner name ("tl", "tr", "bl", "br") and are
    relative to the cell origin (lower-left corner, y up).
    """

    width_um: float
    height_um: float
    site_offsets: dict[str, tuple[float, float]]

    def __post_init__(self):
        if self.width_um <= 0 or self.height_um <= 0:
            raise ConfigurationError("cell dimensions must be positive")
        if set(self.site_offsets) != set(CORNERS):
            raise ConfigurationError(f"site_offsets must have keys {CORNERS}")
        for name, (ox, oy) in self.site_offsets.items():
            if not (0.0 <= ox <= self.width_um and 0.0 <= oy <= self.height_um):
                raise ConfigurationError(
                    f"site {name!r} offset ({ox}, {oy}) outside cell rectangle"
                )

    @classmethod
    def with_corner_sites(cls, width_um: float, height_um: float,
                          inset_frac: float = 0.30) -> "CellGeometry":
        """Place the four sites at the cell corners, inset by a fraction
        of the cell dimensions.

        The inset keeps each cell's contacts well separated from its
        neighbours' (an inset below ~25% moves a contact closer to the
        adjacent cell's contact than to its own cell center, which smears
        cells together at realistic spot sizes).
        """
        fx = inset_frac * width_um
        fy = inset_frac * height_um
        return cls(width_um, height_um, {
            "tl": (fx, height_um - fy),
            "tr": (width_um - fx, height_um - fy),
            "bl": (fx, fy),
            "br": (width_um - fx, fy),
        })


@dataclass(frozen=True)
class Distractor:
    """Always-sensitive rectangular structure unrelated to the memory.

    amplitude is a dimensionless scale on the spot's peak current, so
    distractor response stays linear in delivered laser power.
    """

    x_um: float
    y_um: float
    width_um: float
    height_um: float
    amplitude: float = 1.0


class NoiseMode(Enum):
    ACTIVE = "active"
    LOW_POWER = "low_power"


@dataclass(frozen=True)
class DeviceElectrical:
    """Static electrical behaviour of the device under test."""

    baseline_current_a: float
    baseline_noise_rms_a: float
    lowpower_noise_rms_a: float
    mode: NoiseMode = NoiseMode.LOW_POWER
    injected_noise_rms_a: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.lowpower_noise_rms_a <= self.baseline_noise_rms_a):
            raise ConfigurationError(
                "low-power noise must satisfy 0 <= lowpower <= baseline noise"
            )
        if self.injected_noise_rms_a < 0:
            raise ConfigurationError("injected noise must be >= 0")

    @property
    def mode_noise_rms_a(self) -> float:
        if self.mode is NoiseMode.ACTIVE:
            return self.baseline_noise_rms_a
        return self.lowpower_noise_rms_a


@dataclass(frozen=True)
class BitMapping:
    """Table from physical (row, col) to logical key-bit index.

    Covers exactly KEY_BITS positions, injectively; metadata rows are not
    part of the table and are decoded separately.
    """

    table: tuple[tuple[int, int, int], ...]  # (row, col, bit_index)
    metadata_row: int | None = None

    def __post_init__(self):
        if len(self.table) != KEY_BITS:
            raise ConfigurationError(
                f"mapping must cover exactly {KEY_BITS} positions, got {len(self.table)}"
            )
        cells = [(r, c) for r, c, _ in self.table]
        bits = [k for _, _, k in self.table]
        if len(set(cells)) != len(cells):
            raise ConfigurationError("mapping collision: duplicate cell position")
        if sorted(bits) != list(range(KEY_BITS)):
            raise ConfigurationError("mapping must hit every bit index exactly once")
        if self.metadata_row is not None and any(r == self.metadata_row for r, _, _ in self.table):
            raise ConfigurationError("mapping overlaps the metadata row")

    def items(self):
        return iter(self.table)

    @classmethod
    def bbram_default(cls, rows: int = 9, cols: int = 32) -> "BitMapping":
        """Row-major key layout: metadata in the top row, key bits in the
        remaining rows, most significant bit at the top-left of the key
        region, decreasing left-to-right then top-to-bottom."""
        key_rows = rows - 1
        if key_rows * cols != KEY_BITS:
            raise ConfigurationError(
                f"default mapping needs {KEY_BITS} key cells, got {key_rows}x{cols}"
            )
        table = []
        for r in range(key_rows):
            for c in range(cols):
                k = KEY_BITS - 1 - ((key_rows - 1 - r) * cols + c)
                table.append((r, c, k))
        return cls(tuple(table), metadata_row=rows - 1)


@dataclass
class MemoryArray:
    """Cell grid with stored bits and per-cell sensitivity spread.

    block_boundaries is a list of (column, extra_offset_um) pairs: every
    cell with col >= column is shifted right by extra_offset_um (gaps
    between sub-array blocks).  Treated as immutable after construction;
    state changes go through load_key()/with_bits().
    """

    rows: int
    cols: int
    geometry: CellGeometry
    polarity: Polarity
    origin_um: tuple[float, float] = (0.0, 0.0)
    block_boundaries: tuple[tuple[int, float], ...] = ()
    bits: np.ndarray | None = None
    sensitivity_variation: np.ndarray | None = None
    distractors: tuple[Distractor, ...] = ()
    enabled: bool = True

    def __post_init__(self):
        if self.rows <= 0 or self.cols <= 0:
            raise ConfigurationError("array must have positive rows and cols")
        if self.bits is None:
            self.bits = np.zeros((self.rows, self.cols), dtype=np.uint8)
        self.bits = np.asarray(self.bits, dtype=np.uint8)
        if self.bits.shape != (self.rows, self.cols):
            raise ConfigurationError("bits shape must be (rows, cols)")
        if not np.isin(self.bits, (0, 1)).all():
            raise ConfigurationError("bits must be 0 or 1")
        if self.sensitivity_variation is None:
            self.sensitivity_variation = np.ones((self.rows, self.cols))
        self.sensitivity_variation = np.asarray(self.sensitivity_variation, dtype=float)
        if self.sensitivity_variation.shape != (self.rows, self.cols):
            raise ConfigurationError("sensitivity_variation shape must be (rows, cols)")
        if not (self.sensitivity_variation > 0).all():
            raise ConfigurationError("sensitivity_variation must be strictly positive")
        for col, off in self.block_boundaries:
            if not (0 < col < self.cols):
                raise ConfigurationError(f"block boundary column {col} outside (0, cols)")
            if off < 0:
                raise ConfigurationError("block offsets must be >= 0")
        self._site_cache = None

    # -- geometry ---------------------------------------------------------

    def column_x(self) -> np.ndarray:
        """x origin of every column, including accumulated block offsets."""
        x = np.arange(self.cols) * self.geometry.width_um
        for col, off in self.block_boundaries:
            x[col:] += off
        return x + self.origin_um[0]

    def cell_position(self, r: int, c: int) -> tuple[float, float]:
        """Origin (lower-left corner) of cell (r, c)."""
        if not (0 <= r < self.rows and 0 <= c < self.cols):
            raise IndexError(f"cell ({r}, {c}) outside {self.rows}x{self.cols} array")
        x = self.origin_um[0] + c * self.geometry.width_um
        for col, off in self.block_boundaries:
            if c >= col:
                x += off
        y = self.origin_um[1] + r * self.geometry.height_um
        return (x, y)

    def bounding_box(self) -> tuple[float, float, float, float]:
        x1, y1 = self.cell_position(self.rows - 1, self.cols - 1)
        return (self.origin_um[0], self.origin_um[1],
                x1 + self.geometry.width_um, y1 + self.geometry.height_um)

    # -- sensitive sites --------------------------------------------------

    def sensitive_sites(self, r: int, c: int) -> tuple[np.ndarray, float]:
        """Positions (2, 2 array) and amplitude scale of the two sites
        that respond for the currently stored value of cell (r, c)."""
        cx, cy = self.cell_position(r, c)
        diag = (self.polarity.one_diagonal if self.bits[r, c]
                else self.polarity.zero_diagonal)
        pos = np.array([
            (cx + self.geometry.site_offsets[name][0],
             cy + self.geometry.site_offsets[name][1])
            for name in diag
        ])
        return pos, float(self.sensitivity_variation[r, c])

    def site_field(self) -> tuple[np.ndarray, np.ndarray]:
        """All sensitive-site positions (M, 2) and their amplitude scales
        (M,) for the current contents.  Cached; empty when disabled."""
        if self._site_cache is not None:
            return self._site_cache
        if not self.enabled:
            empty = (np.zeros((0, 2)), np.zeros(0))
            self._site_cache = empty
            return empty
        colx = self.column_x()
        rowy = self.origin_um[1] + np.arange(self.rows) * self.geometry.height_um
        ones = self.bits.astype(bool)
        xs, ys, scales = [], [], []
        for corner in CORNERS:
            ox, oy = self.geometry.site_offsets[corner]
            if corner in self.polarity.one_diagonal:
                active = ones
            else:
                active = ~ones
            rr, cc = np.nonzero(active)
            xs.append(colx[cc] + ox)
            ys.append(rowy[rr] + oy)
            scales.append(self.sensitivity_variation[rr, cc])
        sites = np.column_stack([np.concatenate(xs), np.concatenate(ys)])
        field = (sites, np.concatenate(scales))
        self._site_cache = field
        return field

    # -- content ----------------------------------------------------------

    def with_bits(self, bits: np.ndarray) -> "MemoryArray":
        """Copy of this array with different stored bits."""
        return MemoryArray(
            rows=self.rows, cols=self.cols, geometry=self.geometry,
            polarity=self.polarity, origin_um=self.origin_um,
            block_boundaries=self.block_boundaries, bits=np.array(bits),
            sensitivity_variation=self.sensitivity_variation,
            distractors=self.distractors, enabled=self.enabled,
        )


def parse_key(key: int | str) -> int:
    """Accept an int or a hex string (with or without 0x)."""
    if isinstance(key, str):
        key = int(key, 16)
    if not (0 <= key < (1 << KEY_BITS)):
        raise ConfigurationError(f"key must fit in {KEY_BITS} bits")
    return key


def load_key(model: MemoryArray, key: int | str, mapping: BitMapping,
             metadata_word: int | None = DEFAULT_METADATA_WORD) -> MemoryArray:
    """New array with the key written through the mapping.

    The metadata row (if the mapping names one) is filled from
    metadata_word, most significant bit at column 0.  Cells not covered by
    either are left untouched.
    """
    key = parse_key(key)
    bits = np.array(model.bits)
    for r, c, k in mapping.items():
        if not (0 <= r < model.rows and 0 <= c < model.cols):
            raise ConfigurationError(f"mapping position ({r}, {c}) outside array")
        bits[r, c] = (key >> k) & 1
    if mapping.metadata_row is not None and metadata_word is not None:
        mr = mapping.metadata_row
        if not (0 <= mr < model.rows):
            raise ConfigurationError(f"metadata row {mr} outside array")
        for c in range(model.cols):
            bits[mr, c] = (metadata_word >> (model.cols - 1 - c)) & 1
    return model.with_bits(bits)


def decode_key(bits: np.ndarray, mapping: BitMapping) -> int:
    """Inverse of load_key for the key region."""
    bits = np.asarray(bits)
    key = 0
    for r, c, k in mapping.items():
        if bits[r, c]:
            key |= 1 << k
    return key


def key_hex(key: int) -> str:
    return f"0x{key:064x}"
