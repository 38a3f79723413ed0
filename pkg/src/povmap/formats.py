"""Readers and writers for every on-disk format used by the pipeline.

Tables are tab-delimited text with a header line. Floats are written with
six decimals. Rasters use the ESRI ASCII grid layout; AOI polygons use a
one-ring-per-line text format (``lon lat lon lat ...``).
"""
from __future__ import annotations

import io
import math
import re
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import InputError

DELIM = "\t"
FLOAT_FMT = "{:.6f}"


def _read_text(stream) -> str:
    if isinstance(stream, str):
        return stream
    if isinstance(stream, bytes):
        return stream.decode("utf-8")
    return stream.read()


# -- rasters --------------------------------------------------------------

@dataclass(eq=False)
class AsciiGridRaster:
    """Georeferenced grid; ``values[0]`` is the northernmost row.

    ``xll``/``yll`` always hold the lower-left *corner*; ``center_registered``
    only records which header form the source file used.
    """

    ncols: int
    nrows: int
    xll: float
    yll: float
    cellsize: float
    nodata: float
    values: np.ndarray
    center_registered: bool = field(default=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(self.nrows, self.ncols)
        if self.ncols < 1 or self.nrows < 1:
            raise InputError("ncols and nrows must be >= 1")
        if not self.cellsize > 0:
            raise InputError("cellsize must be positive")

    def __eq__(self, other):
        if not isinstance(other, AsciiGridRaster):
            return NotImplemented
        return (
            (self.ncols, self.nrows, self.xll, self.yll, self.cellsize)
            == (other.ncols, other.nrows, other.xll, other.yll, other.cellsize)
            and _same_float(self.nodata, other.nodata)
            and np.array_equal(self.values, other.values, equal_nan=True)
        )

    def masked(self):
        """Copy of ``values`` with nodata cells set to zero."""
        out = self.values.copy()
        out[self.values == self.nodata] = 0.0
        out[np.isnan(out)] = 0.0
        return out


def _same_float(a, b):
    return a == b or (math.isnan(a) and math.isnan(b))


_GRID_KEYS = {"ncols", "nrows", "xllcorner", "yllcorner", "xllcenter", "yllcenter",
              "cellsize", "nodata_value"}


def _is_number(tok):
    try:
        float(tok)
    except ValueError:
        return False
    return True


def parse_ascii_grid(stream) -> AsciiGridRaster:
    lines = _read_text(stream).splitlines()
    header = {}
    i = 0
    while i < len(lines):
        parts = lines[i].split()
        if not parts:
            i += 1
            continue
        if _is_number(parts[0]):
            break
        key = parts[0].lower()
        if key not in _GRID_KEYS:
            raise InputError(f"unknown header key {parts[0]!r}", i + 1)
        if len(parts) != 2 or not _is_number(parts[1]):
            raise InputError(f"header {parts[0]!r} needs one numeric value", i + 1)
        header[key] = (float(parts[1]), i + 1)
        i += 1
    data_start = i + 1

    for key in ("ncols", "nrows", "cellsize"):
        if key not in header:
            raise InputError(f"missing header key {key!r}", data_start)
    for axis in ("x", "y"):
        if f"{axis}llcorner" not in header and f"{axis}llcenter" not in header:
            raise InputError(f"missing header key '{axis}llcorner'", data_start)

    def as_int(key):
        val, line = header[key]
        if val != int(val) or val < 1:
            raise InputError(f"{key} must be a positive integer", line)
        return int(val)

    ncols, nrows = as_int("ncols"), as_int("nrows")
    cellsize = header["cellsize"][0]
    if not cellsize > 0:
        raise InputError("cellsize must be positive", header["cellsize"][1])
    centered = "xllcenter" in header
    if centered:
        xll = header["xllcenter"][0] - cellsize / 2
    else:
        xll = header["xllcorner"][0]
    if "yllcenter" in header:
        yll = header["yllcenter"][0] - cellsize / 2
    else:
        yll = header["yllcorner"][0]
    nodata = header.get("nodata_value", (-9999.0, None))[0]

    rows = []
    for lineno in range(i, len(lines)):
        parts = lines[lineno].split()
        if not parts:
            continue
        if len(parts) != ncols:
            raise InputError(f"expected {ncols} values, found {len(parts)}", lineno + 1)
        try:
            rows.append([float(t) for t in parts])
        except ValueError:
            bad = next(t for t in parts if not _is_number(t))
            raise InputError(f"non-numeric token {bad!r}", lineno + 1) from None
    if len(rows) != nrows:
        raise InputError(f"expected {nrows} data rows, found {len(rows)}", len(lines))
    return AsciiGridRaster(ncols, nrows, xll, yll, cellsize, nodata,
                           np.array(rows, dtype=np.float64), center_registered=centered)


def write_ascii_grid(raster: AsciiGridRaster) -> str:
    out = io.StringIO()
    out.write(f"ncols {raster.ncols}\n")
    out.write(f"nrows {raster.nrows}\n")
    out.write(f"xllcorner {raster.xll!r}\n")
    out.write(f"yllcorner {raster.yll!r}\n")
    out.write(f"cellsize {raster.cellsize!r}\n")
    out.write(f"NODATA_value {float(raster.nodata)!r}\n")
    for row in raster.values:
        out.write(" ".join(repr(float(v)) for v in row))
        out.write("\n")
    return out.getvalue()


# -- polygons -------------------------------------------------------------

@dataclass
class PolygonSet:
    polygons: list  # each an (m, 2) float array of lon, lat; implicitly closed

    def __len__(self):
        return len(self.polygons)

    def __eq__(self, other):
        if not isinstance(other, PolygonSet):
            return NotImplemented
        return len(self) == len(other) and all(
            np.array_equal(a, b) for a, b in zip(self.polygons, other.polygons))


_SPLIT = re.compile(r"[\s,]+")


def parse_polygons(stream) -> PolygonSet:
    polygons = []
    for lineno, line in enumerate(_read_text(stream).splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        toks = [t for t in _SPLIT.split(line) if t]
        if len(toks) % 2:
            raise InputError(f"odd coordinate count ({len(toks)})", lineno)
        try:
            coords = np.array([float(t) for t in toks]).reshape(-1, 2)
        except ValueError:
            raise InputError("non-numeric coordinate", lineno) from None
        if not np.isfinite(coords).all():
            raise InputError("non-finite coordinate", lineno)
        if len(coords) > 1 and np.array_equal(coords[0], coords[-1]):
            coords = coords[:-1]
        if len(np.unique(coords, axis=0)) < 3:
            raise InputError("ring needs at least 3 distinct vertices", lineno)
        polygons.append(coords)
    return PolygonSet(polygons)


def write_polygons(polys: PolygonSet) -> str:
    return "".join(
        " ".join(f"{x!r} {y!r}" for x, y in ring.tolist()) + "\n" for ring in polys.polygons)


# -- generic tables -------------------------------------------------------

def _fmt(value, kind):
    if kind is float:
        return FLOAT_FMT.format(float(value))
    if kind is int:
        return str(int(value))
    return str(value)


def write_table(rows, column_schema) -> str:
    """Serialize ``rows`` with a header built from ``column_schema``.

    ``column_schema`` is a sequence of ``(name, type)`` pairs where type is
    ``int``, ``float`` or ``str``. Rows may be sequences or mappings.
    """
    names = [name for name, _ in column_schema]
    out = io.StringIO()
    out.write(DELIM.join(names) + "\n")
    for row in rows:
        if isinstance(row, dict):
            vals = [row[n] for n in names]
        else:
            vals = list(row)
            if len(vals) != len(names):
                raise InputError(f"row has {len(vals)} fields, schema has {len(names)}")
        out.write(DELIM.join(_fmt(v, kind) for v, (_, kind) in zip(vals, column_schema)))
        out.write("\n")
    return out.getvalue()


def _convert(tok, kind, lineno, name):
    try:
        if kind is int:
            val = float(tok)
            if val != int(val):
                raise ValueError
            return int(val)
        if kind is float:
            return float(tok)
    except ValueError:
        raise InputError(f"column {name!r}: cannot parse {tok!r} as {kind.__name__}",
                         lineno) from None
    return tok


def read_table(stream, column_schema=None):
    """Parse a tab-delimited table into ``(header, rows)``.

    With a schema, the named columns must be present and are converted to
    their declared types; rows come back as dicts. Without one, every
    value is kept as text.
    """
    lines = _read_text(stream).splitlines()
    while lines and not lines[0].strip():
        lines.pop(0)
    if not lines:
        raise InputError("missing header", 1)
    header = lines[0].split(DELIM)
    kinds = {}
    if column_schema is not None:
        kinds = dict(column_schema)
        missing = [n for n in kinds if n not in header]
        if missing:
            raise InputError(f"header lacks columns {missing}", 1)
    rows = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        toks = line.split(DELIM)
        if len(toks) != len(header):
            raise InputError(f"expected {len(header)} fields, found {len(toks)}", lineno)
        rows.append({name: _convert(tok, kinds.get(name, str), lineno, name)
                     for name, tok in zip(header, toks)})
    return header, rows


# -- annotation and detection tables --------------------------------------

class BoundingBox(NamedTuple):
    tlx: float
    tly: float
    brx: float
    bry: float

    @property
    def valid(self):
        return self.brx > self.tlx and self.bry > self.tly

    @property
    def area(self):
        return (self.brx - self.tlx) * (self.bry - self.tly)


class AnnotationRow(NamedTuple):
    image_id: str
    box: BoundingBox
    class_name: str


@dataclass
class RawAnnotationTable:
    rows: list
    dims: dict = field(default_factory=dict)  # image_id -> (width, height)

    def __len__(self):
        return len(self.rows)

    def by_image(self):
        grouped = {}
        for row in self.rows:
            grouped.setdefault(row.image_id, []).append(row)
        return grouped


ANNOTATION_SCHEMA = [("image_id", str), ("tlx", int), ("tly", int), ("brx", int),
                     ("bry", int), ("class_name", str)]
DIMS_SCHEMA = [("image_id", str), ("width", int), ("height", int)]


def parse_annotations(stream, dims_stream=None) -> RawAnnotationTable:
    _, rows = read_table(stream, ANNOTATION_SCHEMA)
    table = RawAnnotationTable([
        AnnotationRow(r["image_id"], BoundingBox(r["tlx"], r["tly"], r["brx"], r["bry"]),
                      r["class_name"])
        for r in rows
    ])
    if dims_stream is not None:
        table.dims = parse_image_dims(dims_stream)
    return table


def parse_image_dims(stream) -> dict:
    _, rows = read_table(stream, DIMS_SCHEMA)
    return {r["image_id"]: (r["width"], r["height"]) for r in rows}


def write_annotations(table: RawAnnotationTable) -> str:
    return write_table(
        [(r.image_id, *r.box, r.class_name) for r in table.rows], ANNOTATION_SCHEMA)


class Detection(NamedTuple):
    image_id: str
    class_index: int
    box: BoundingBox
    confidence: float = 1.0


DETECTION_SCHEMA = [("image_id", str), ("class_index", int), ("tlx", float), ("tly", float),
                    ("brx", float), ("bry", float), ("confidence", float)]
GROUND_TRUTH_SCHEMA = DETECTION_SCHEMA[:6]


def parse_detections(stream, ground_truth=False):
    """Read a detection table; ``ground_truth=True`` makes ``confidence`` optional."""
    schema = GROUND_TRUTH_SCHEMA if ground_truth else DETECTION_SCHEMA
    header, rows = read_table(stream, schema)
    has_conf = "confidence" in header
    out = []
    for lineno, r in enumerate(rows, start=2):
        conf = _convert(r["confidence"], float, lineno, "confidence") if has_conf else 1.0
        if not 0.0 <= conf <= 1.0:
            raise InputError(f"confidence {conf} outside [0, 1]", lineno)
        box = BoundingBox(r["tlx"], r["tly"], r["brx"], r["bry"])
        if not box.valid:
            raise InputError("degenerate detection box", lineno)
        out.append(Detection(r["image_id"], r["class_index"], box, conf))
    return out


def write_detections(dets) -> str:
    return write_table([(d.image_id, d.class_index, *d.box, d.confidence) for d in dets],
                       DETECTION_SCHEMA)
