"""Field files (CF2D v1, CSV), series manifests, PPM heatmaps and JSON reports.

CF2D v1 layout::

    CF2D 1
    grid x_min x_max y_min y_max nx ny
    <nx*ny little-endian float64 pairs (re, im), row-major over (ix, iy)>
"""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .grid import ComplexField, Grid2D
from .spectral import FieldSeries

MAGIC = b"CF2D 1"


class FieldFormatError(ValueError):
    pass


def _grid_line(g: Grid2D) -> str:
    return "grid " + " ".join(repr(float(v)) for v in g.bounds) + f" {g.nx} {g.ny}"


def write_cf2d(field: ComplexField, path) -> None:
    g = field.grid
    payload = np.empty((g.nx, g.ny, 2), dtype="<f8")
    payload[..., 0] = field.values.real
    payload[..., 1] = field.values.imag
    with open(path, "wb") as fh:
        fh.write(MAGIC + b"\n")
        fh.write(_grid_line(g).encode() + b"\n")
        fh.write(payload.tobytes())


def read_cf2d(path) -> ComplexField:
    raw = Path(path).read_bytes()
    try:
        n1 = raw.index(b"\n")
        n2 = raw.index(b"\n", n1 + 1)
    except ValueError:
        raise FieldFormatError(f"{path}: missing CF2D header lines") from None
    if raw[:n1] != MAGIC:
        raise FieldFormatError(f"{path}: not a CF2D v1 file")
    parts = raw[n1 + 1:n2].decode().split()
    if len(parts) != 7 or parts[0] != "grid":
        raise FieldFormatError(f"{path}: malformed grid line")
    try:
        x0, x1, y0, y1 = (float(p) for p in parts[1:5])
        nx, ny = int(parts[5]), int(parts[6])
        g = Grid2D(x0, x1, y0, y1, nx, ny)
    except ValueError as e:
        raise FieldFormatError(f"{path}: bad grid header ({e})") from None
    payload = raw[n2 + 1:]
    if len(payload) != 16 * nx * ny:
        raise FieldFormatError(
            f"{path}: payload has {len(payload)} bytes, grid needs {16 * nx * ny}")
    a = np.frombuffer(payload, dtype="<f8").reshape(nx, ny, 2).astype(np.float64)
    return ComplexField(g, a[..., 0] + 1j * a[..., 1])


def write_csv(field: ComplexField, path) -> None:
    """Columns x, y, re, im; 17 significant digits so float64 values round-trip."""
    g = field.grid
    X, Y = g.mesh()
    with open(path, "w", newline="") as fh:
        fh.write(f"# {_grid_line(g)}\n")
        w = csv.writer(fh)
        w.writerow(["x", "y", "re", "im"])
        for x, y, v in zip(X.ravel(), Y.ravel(), field.values.ravel()):
            w.writerow([f"{x:.17g}", f"{y:.17g}", f"{v.real:.17g}", f"{v.imag:.17g}"])


def read_csv(path) -> ComplexField:
    with open(path, newline="") as fh:
        first = fh.readline()
        if not first.startswith("# grid "):
            raise FieldFormatError(f"{path}: missing grid comment line")
        parts = first[2:].split()
        try:
            g = Grid2D(*(float(p) for p in parts[1:5]), int(parts[5]), int(parts[6]))
        except (ValueError, IndexError) as e:
            raise FieldFormatError(f"{path}: bad grid header ({e})") from None
        rows = list(csv.DictReader(fh))
    if len(rows) != g.nx * g.ny:
        raise FieldFormatError(f"{path}: {len(rows)} rows for a {g.nx}x{g.ny} grid")
    vals = np.array([float(r["re"]) + 1j * float(r["im"]) for r in rows])
    return ComplexField(g, vals.reshape(g.shape))


def export_field(field, path, fmt: str | None = None) -> Path:
    """Write a field (CF2D or CSV) or a series (directory of CF2D files plus manifest).

    For a series ``path`` is the directory; the returned path is its manifest.
    """
    path = Path(path)
    if isinstance(field, FieldSeries):
        if fmt not in (None, "cf2d"):
            raise ValueError("series are written as CF2D snapshots only")
        return write_series(field, path)
    fmt = fmt or ("csv" if path.suffix == ".csv" else "cf2d")
    if fmt == "cf2d":
        write_cf2d(field, path)
    elif fmt == "csv":
        write_csv(field, path)
    else:
        raise ValueError(f"unknown field format {fmt!r}")
    return path


def import_field(path):
    """Read a CF2D or CSV field, or a series from its JSON manifest."""
    path = Path(path)
    if path.suffix == ".json":
        return read_series(path)
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC))
    if head == MAGIC:
        return read_cf2d(path)
    return read_csv(path)


# -- series -----------------------------------------------------------------

def write_series(series: FieldSeries, directory, stem: str = "psi") -> Path:
    """One CF2D file per snapshot plus ``<stem>.json`` with times, dt and grid."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    files = []
    for k, f in enumerate(series.fields):
        name = f"{stem}_{k:03d}.cf2d"
        write_cf2d(f, d / name)
        files.append(name)
    g = series.grid
    manifest = {"times": [float(t) for t in series.times], "dt": series.dt,
                "grid": {"bounds": list(g.bounds), "nx": g.nx, "ny": g.ny},
                "files": files, "meta": series.meta}
    out = d / f"{stem}.json"
    out.write_text(json.dumps(manifest, indent=2, default=_json_default))
    return out


def read_series(manifest_path) -> FieldSeries:
    p = Path(manifest_path)
    m = json.loads(p.read_text())
    fields = [read_cf2d(p.parent / name) for name in m["files"]]
    if len(fields) != len(m["times"]):
        raise FieldFormatError("manifest times and files differ in length")
    return FieldSeries(m["times"], fields, m.get("dt"), m.get("meta", {}))


# -- images -----------------------------------------------------------------

def emit_heatmap(field, path) -> Path:
    """Binary grayscale PPM of ``|f|`` scaled linearly from 0 to max|f|.

    Rows of the image run from y_max (top) to y_min. A zero field is black.
    """
    a = np.abs(field.values if isinstance(field, ComplexField) else np.asarray(field))
    if a.ndim != 2:
        raise ValueError("heatmap needs a 2D field")
    peak = a.max()
    level = np.zeros(a.shape, dtype=np.uint8) if peak == 0 else \
        np.clip(np.rint(255.0 * a / peak), 0, 255).astype(np.uint8)
    img = level.T[::-1]  # (ny, nx), top row = largest y
    h, w = img.shape
    rgb = np.repeat(img[..., None], 3, axis=2)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode())
        fh.write(rgb.tobytes())
    return Path(path)


def read_ppm(path) -> np.ndarray:
    """Return the (h, w) gray levels of a P6 file written by :func:`emit_heatmap`."""
    raw = Path(path).read_bytes()
    head = raw.split(b"\n", 3)
    if head[0] != b"P6":
        raise FieldFormatError("not a binary PPM")
    w, h = (int(v) for v in head[1].split())
    data = np.frombuffer(head[3], dtype=np.uint8)
    if data.size != 3 * w * h:
        raise FieldFormatError("truncated PPM payload")
    return data.reshape(h, w, 3)[..., 0]


# -- JSON -------------------------------------------------------------------

def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (tuple, set)):
        return list(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _clean(o):
    # NaN/inf are not JSON; write them as null
    if isinstance(o, float) and not math.isfinite(o):
        return None
    if isinstance(o, dict):
        return {str(k): _clean(v) for k, v in o.items()}
    if isinstance(o, (list, tuple)):
        return [_clean(v) for v in o]
    if isinstance(o, np.generic):
        return _clean(o.item())
    return o


def dumps_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, sort_keys=True, default=_json_default)


def write_json(obj, path) -> Path:
    Path(path).write_text(dumps_json(obj) + "\n")
    return Path(path)


def read_json(path):
    return json.loads(Path(path).read_text())
