import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from qdrop import io
from qdrop.grid import ComplexField, make_grid
from qdrop.spectral import FieldSeries

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


def _field(nx=5, ny=4, seed=0):
    g = make_grid([-1.5, 2.25, -3.0, 1.0 / 3.0], nx, ny)
    rng = np.random.default_rng(seed)
    return ComplexField(g, rng.normal(size=(nx, ny)) + 1j * rng.normal(size=(nx, ny)))


def test_cf2d_round_trip_bit_identical(tmp_path):
    f = _field()
    io.write_cf2d(f, tmp_path / "a.cf2d")
    back = io.read_cf2d(tmp_path / "a.cf2d")
    assert back.grid == f.grid
    assert back.values.tobytes() == f.values.tobytes()


def test_cf2d_layout(tmp_path):
    g = make_grid([0, 1, 0, 1], 2, 3)
    vals = np.arange(6.0).reshape(2, 3) + 1j * np.arange(6.0, 12.0).reshape(2, 3)
    io.write_cf2d(ComplexField(g, vals), tmp_path / "b.cf2d")
    raw = (tmp_path / "b.cf2d").read_bytes()
    lines = raw.split(b"\n", 2)
    assert lines[0] == b"CF2D 1"
    assert lines[1] == b"grid 0.0 1.0 0.0 1.0 2 3"
    payload = np.frombuffer(lines[2], dtype="<f8")
    # (re, im) pairs, row-major over (ix, iy)
    assert payload[:4].tolist() == [0.0, 6.0, 1.0, 7.0]


def test_cf2d_errors(tmp_path):
    f = _field()
    p = tmp_path / "c.cf2d"
    io.write_cf2d(f, p)
    raw = p.read_bytes()
    p.write_bytes(raw[:-16])
    with pytest.raises(io.FieldFormatError):
        io.read_cf2d(p)
    # header grid that disagrees with the payload length
    p.write_bytes(raw.replace(b" 5 4\n", b" 5 5\n", 1))
    with pytest.raises(io.FieldFormatError):
        io.read_cf2d(p)
    p.write_bytes(b"CF2D 2\n" + raw.split(b"\n", 1)[1])
    with pytest.raises(io.FieldFormatError):
        io.read_cf2d(p)
    p.write_bytes(b"CF2D 1\ngrid a b c d 1 1\n")
    with pytest.raises(io.FieldFormatError):
        io.read_cf2d(p)
    p.write_bytes(b"nothing")
    with pytest.raises(io.FieldFormatError):
        io.read_cf2d(p)


@settings(max_examples=30, deadline=None)
@given(hnp.arrays(np.float64, (3, 4), elements=finite),
       hnp.arrays(np.float64, (3, 4), elements=finite))
def test_csv_round_trip_exact(tmp_path_factory, re, im):
    g = make_grid([-math.pi, math.e, 0.1, 0.7], 3, 4)
    f = ComplexField(g, re + 1j * im)
    p = tmp_path_factory.mktemp("csv") / "f.csv"
    io.write_csv(f, p)
    back = io.read_csv(p)
    assert np.max(np.abs(back.values - f.values), initial=0) == 0
    assert back.grid == g


def test_csv_errors(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("x,y,re,im\n0,0,1,1\n")
    with pytest.raises(io.FieldFormatError):
        io.read_csv(p)
    io.write_csv(_field(), p)
    lines = p.read_text().splitlines()
    p.write_text("\n".join(lines[:-1]) + "\n")
    with pytest.raises(io.FieldFormatError):
        io.read_csv(p)


def test_export_import_dispatch(tmp_path):
    f = _field(seed=2)
    for name, fmt in (("a.cf2d", None), ("a.csv", None), ("a.bin", "cf2d"), ("b.txt", "csv")):
        out = io.export_field(f, tmp_path / name, fmt)
        assert np.array_equal(io.import_field(out).values, f.values)
    with pytest.raises(ValueError):
        io.export_field(f, tmp_path / "x", "png")


def test_series_round_trip(tmp_path):
    fs = [_field(seed=k) for k in range(3)]
    ser = FieldSeries([0.0, 1.25, 2.5], fs, dt=1e-3, meta={"source": "test"})
    manifest = io.export_field(ser, tmp_path / "series")
    back = io.import_field(manifest)
    assert back.times == ser.times and back.dt == 1e-3 and back.meta == {"source": "test"}
    for a, b in zip(back.fields, fs):
        assert a.values.tobytes() == b.values.tobytes()
    with pytest.raises(ValueError):
        io.export_field(ser, tmp_path / "s2", "csv")


def test_heatmap_constant_zero_and_size(tmp_path):
    g = make_grid([0, 1, 0, 1], 7, 3)
    io.emit_heatmap(ComplexField(g, np.full((7, 3), 2 - 1j)), tmp_path / "c.ppm")
    img = io.read_ppm(tmp_path / "c.ppm")
    assert img.shape == (3, 7) and img.size == 7 * 3
    assert np.all(img == 255)
    io.emit_heatmap(ComplexField(g, np.zeros((7, 3))), tmp_path / "z.ppm")
    assert np.all(io.read_ppm(tmp_path / "z.ppm") == 0)


def test_heatmap_orientation_and_scale(tmp_path):
    g = make_grid([0, 1, 0, 1], 3, 2)
    v = np.zeros((3, 2))
    v[2, 1] = 4.0   # x max, y max -> top right
    v[0, 0] = 2.0   # x min, y min -> bottom left, half gray
    io.emit_heatmap(ComplexField(g, v), tmp_path / "o.ppm")
    img = io.read_ppm(tmp_path / "o.ppm")
    assert img[0, 2] == 255 and img[1, 0] == 128 and img.sum() == 255 + 128
    with pytest.raises(ValueError):
        io.emit_heatmap(np.zeros(4), tmp_path / "bad.ppm")


def test_json_nan_and_numpy(tmp_path):
    obj = {"b": np.float64(1.5), "a": [float("nan"), np.int64(3)], "c": np.arange(2)}
    p = io.write_json(obj, tmp_path / "r.json")
    assert io.read_json(p) == {"a": [None, 3], "b": 1.5, "c": [0, 1]}
    # keys sorted for stable text
    text = io.dumps_json({"z": 1, "a": 2})
    assert text.index('"a"') < text.index('"z"')
