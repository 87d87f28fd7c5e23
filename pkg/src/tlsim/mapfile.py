"""Map file format: 16-bit portable graymap plus a JSON sidecar.

The .pgm holds the raster (P5, maxval 65535, big-endian, top row first so
ordinary viewers show y up); the .json sidecar holds everything needed to
reconstruct currents losslessly at 16-bit precision: geometry, the raw
current min/max of the linear code mapping, plan echo, seeds, timestamps.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .scan import ResponseMap

FORMAT_TAG = "tlsim-map-v1"
MAXVAL = 65535


def _encode_u16(values: np.ndarray) -> tuple[np.ndarray, float, float]:
    vmin = float(values.min())
    vmax = float(values.max())
    if vmax > vmin:
        codes = np.round((values - vmin) / (vmax - vmin) * MAXVAL)
    else:
        codes = np.zeros_like(values)
    return codes.astype(">u2"), vmin, vmax


def _decode_u16(codes: np.ndarray, vmin: float, vmax: float) -> np.ndarray:
    if vmax > vmin:
        return vmin + codes.astype(float) / MAXVAL * (vmax - vmin)
    return np.full(codes.shape, vmin)


def save_map(m: ResponseMap, base_path) -> tuple[Path, Path]:
    """Write <base>.pgm and <base>.json; returns both paths."""
    base = Path(base_path)
    if base.suffix in (".pgm", ".json"):
        base = base.with_suffix("")
    pgm_path = base.with_suffix(".pgm")
    json_path = base.with_suffix(".json")

    codes, vmin, vmax = _encode_u16(m.values)
    ny, nx = m.values.shape
    header = f"P5\n{nx} {ny}\n{MAXVAL}\n".encode("ascii")
    pgm_path.parent.mkdir(parents=True, exist_ok=True)
    with open(pgm_path, "wb") as f:
        f.write(header)
        f.write(codes[::-1, :].tobytes())  # top row first

    sidecar = {
        "format": FORMAT_TAG,
        "shape": [ny, nx],
        "origin_um": list(m.origin_um),
        "pixel_pitch_um": m.pixel_pitch_um,
        "current_min_a": vmin,
        "current_max_a": vmax,
        "line_timestamps_s": [float(t) for t in m.line_timestamps_s],
        "metadata": m.metadata,
    }
    with open(json_path, "w") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
        f.write("\n")
    return pgm_path, json_path


def _read_pgm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    # header: magic, width, height, maxval as whitespace-separated tokens
    # (comment lines starting with # allowed), then binary samples
    tokens = []
    i = 0
    while len(tokens) < 4:
        if i >= len(data):
            raise ConfigurationError(f"{path}: truncated PGM header")
        ch = data[i:i + 1]
        if ch == b"#":
            while i < len(data) and data[i:i + 1] != b"\n":
                i += 1
        elif ch.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j:j + 1].isspace():
                j += 1
            tokens.append(data[i:j])
            i = j
    i += 1  # single whitespace after maxval
    magic, w, h, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic != b"P5":
        raise ConfigurationError(f"{path}: not a binary PGM (P5)")
    if maxval != MAXVAL:
        raise ConfigurationError(f"{path}: expected 16-bit maxval {MAXVAL}")
    raw = data[i:i + w * h * 2]
    if len(raw) != w * h * 2:
        raise ConfigurationError(f"{path}: truncated PGM payload")
    return np.frombuffer(raw, dtype=">u2").reshape(h, w)


def load_map(path) -> ResponseMap:
    """Load a map written by save_map; accepts the .pgm, .json, or base
    path.  Currents are reconstructed within one quantization step."""
    base = Path(path)
    if base.suffix in (".pgm", ".json"):
        base = base.with_suffix("")
    pgm_path = base.with_suffix(".pgm")
    json_path = base.with_suffix(".json")
    if not pgm_path.exists() or not json_path.exists():
        raise ConfigurationError(f"map files {pgm_path} / {json_path} not found")

    with open(json_path) as f:
        sidecar = json.load(f)
    if sidecar.get("format") != FORMAT_TAG:
        raise ConfigurationError(f"{json_path}: unknown sidecar format")

    codes = _read_pgm(pgm_path)[::-1, :]  # back to bottom row first
    ny, nx = sidecar["shape"]
    if codes.shape != (ny, nx):
        raise ConfigurationError(f"{pgm_path}: raster shape does not match sidecar")
    values = _decode_u16(codes, sidecar["current_min_a"], sidecar["current_max_a"])
    return ResponseMap(
        values=values,
        origin_um=tuple(sidecar["origin_um"]),
        pixel_pitch_um=sidecar["pixel_pitch_um"],
        line_timestamps_s=np.array(sidecar["line_timestamps_s"]),
        metadata=sidecar.get("metadata", {}),
    )
