"""Map persistence: 16-bit PGM raster plus JSON sidecar."""

import json

import numpy as np
import pytest

from tlsim import load_map, save_map
from tlsim.errors import ConfigurationError
from tlsim.mapfile import FORMAT_TAG, MAXVAL
from tlsim.scan import ResponseMap


def mk_map(values, origin=(3.0, 7.0), pitch=0.25, meta=None):
    values = np.asarray(values, dtype=float)
    return ResponseMap(
        values=values,
        origin_um=origin,
        pixel_pitch_um=pitch,
        line_timestamps_s=np.linspace(1.0, 2.0, values.shape[1]),
        metadata=meta or {"label": "t"},
    )


def test_round_trip_within_one_code_step(tmp_path):
    rng = np.random.default_rng(7)
    m = mk_map(1e-9 + 2e-10 * rng.random((23, 31)))
    save_map(m, tmp_path / "m")
    back = load_map(tmp_path / "m")
    step = (m.values.max() - m.values.min()) / MAXVAL
    assert np.max(np.abs(back.values - m.values)) <= step
    assert back.origin_um == m.origin_um
    assert back.pixel_pitch_um == m.pixel_pitch_um
    np.testing.assert_allclose(back.line_timestamps_s, m.line_timestamps_s)
    assert back.metadata == m.metadata


def test_extremes_survive_exactly(tmp_path):
    m = mk_map([[1e-9, 2e-9], [3e-9, 4e-9]])
    save_map(m, tmp_path / "m")
    back = load_map(tmp_path / "m")
    assert back.values.min() == pytest.approx(1e-9, rel=1e-12)
    assert back.values.max() == pytest.approx(4e-9, rel=1e-12)


def test_write_is_byte_deterministic(tmp_path):
    rng = np.random.default_rng(8)
    m = mk_map(rng.random((9, 9)))
    p1, j1 = save_map(m, tmp_path / "a")
    p2, j2 = save_map(m, tmp_path / "b")
    assert p1.read_bytes() == p2.read_bytes()
    assert j1.read_bytes() == j2.read_bytes()


def test_pgm_layout_top_row_first(tmp_path):
    v = np.zeros((3, 2))
    v[2, 0] = 5e-9  # top-left in map coordinates (y up)
    pgm, _ = save_map(mk_map(v), tmp_path / "m")
    data = pgm.read_bytes()
    header = f"P5\n2 3\n{MAXVAL}\n".encode()
    assert data.startswith(header)
    raster = np.frombuffer(data[len(header):], dtype=">u2").reshape(3, 2)
    assert raster[0, 0] == MAXVAL
    assert raster[2, 1] == 0


def test_sidecar_fields(tmp_path):
    m = mk_map(np.ones((2, 2)))
    _, j = save_map(m, tmp_path / "m")
    d = json.loads(j.read_text())
    assert d["format"] == FORMAT_TAG
    assert d["shape"] == [2, 2]
    assert d["origin_um"] == [3.0, 7.0]
    assert d["pixel_pitch_um"] == 0.25
    assert set(d) >= {"current_min_a", "current_max_a", "line_timestamps_s",
                      "metadata"}


def test_constant_map_round_trips(tmp_path):
    m = mk_map(np.full((4, 4), 2.5e-9))
    save_map(m, tmp_path / "m")
    back = load_map(tmp_path / "m")
    np.testing.assert_allclose(back.values, 2.5e-9)


def test_accepts_pgm_json_or_base_path(tmp_path):
    m = mk_map(np.arange(6.0).reshape(2, 3))
    pgm, js = save_map(m, tmp_path / "m")
    for p in (pgm, js, tmp_path / "m"):
        np.testing.assert_allclose(load_map(p).values, load_map(pgm).values)
    # save also tolerates an extension on the base path
    save_map(m, tmp_path / "n.pgm")
    assert (tmp_path / "n.json").exists()


def test_load_errors(tmp_path):
    with pytest.raises(ConfigurationError):
        load_map(tmp_path / "missing")

    m = mk_map(np.arange(6.0).reshape(2, 3))
    pgm, js = save_map(m, tmp_path / "m")

    bad_magic = tmp_path / "bad1"
    bad_magic.with_suffix(".json").write_bytes(js.read_bytes())
    bad_magic.with_suffix(".pgm").write_bytes(b"P2\n" + pgm.read_bytes()[3:])
    with pytest.raises(ConfigurationError):
        load_map(bad_magic)

    trunc = tmp_path / "bad2"
    trunc.with_suffix(".json").write_bytes(js.read_bytes())
    trunc.with_suffix(".pgm").write_bytes(pgm.read_bytes()[:-4])
    with pytest.raises(ConfigurationError):
        load_map(trunc)

    wrong_tag = tmp_path / "bad3"
    d = json.loads(js.read_text())
    d["format"] = "something-else"
    wrong_tag.with_suffix(".json").write_text(json.dumps(d))
    wrong_tag.with_suffix(".pgm").write_bytes(pgm.read_bytes())
    with pytest.raises(ConfigurationError):
        load_map(wrong_tag)

    mismatch = tmp_path / "bad4"
    d = json.loads(js.read_text())
    d["shape"] = [3, 3]
    mismatch.with_suffix(".json").write_text(json.dumps(d))
    mismatch.with_suffix(".pgm").write_bytes(pgm.read_bytes())
    with pytest.raises(ConfigurationError):
        load_map(mismatch)


def test_pgm_comment_lines_are_skipped(tmp_path):
    m = mk_map(np.arange(6.0).reshape(2, 3))
    pgm, _ = save_map(m, tmp_path / "m")
    data = pgm.read_bytes()
    header_end = data.index(b"65535\n") + 6
    commented = b"P5\n# a viewer comment\n3 2\n65535\n" + data[header_end:]
    pgm.write_bytes(commented)
    np.testing.assert_allclose(load_map(tmp_path / "m").values, m.values,
                               atol=(5.0 / MAXVAL))
