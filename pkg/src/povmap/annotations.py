"""Annotation cleanup, parent-class grouping, YOLO-style boxes and the
quadrant-weighted chip sampler used to counter class imbalance."""
from __future__ import annotations

import warnings
from collections import Counter
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from .errors import InputError
from .formats import AnnotationRow, BoundingBox, FLOAT_FMT

PARENT_CLASSES = (
    "Fixed-Wing Aircraft",
    "Passenger Vehicle",
    "Truck",
    "Railway Vehicle",
    "Maritime Vessel",
    "Engineering Vehicle",
    "Building",
    "Helipad",
    "Vehicle Lot",
    "Construction Site",
)
TRUCK = PARENT_CLASSES.index("Truck")
REJECT_NAME = "None"

_XVIEW_CHILDREN = {
    "Fixed-Wing Aircraft": ["Small Aircraft", "Cargo Plane"],
    "Passenger Vehicle": ["Small Car", "Bus"],
    "Truck": ["Pickup Truck", "Utility Truck", "Cargo Truck", "Truck w/Box", "Truck Tractor",
              "Trailer", "Truck w/Flatbed", "Truck w/Liquid"],
    "Railway Vehicle": ["Passenger Car", "Cargo Car", "Flat Car", "Tank Car", "Locomotive"],
    # "Motorboat" is the upstream xView spelling of the same class
    "Maritime Vessel": ["Motoboat", "Motorboat", "Sailboat", "Tugboat", "Barge",
                        "Fishing Vessel", "Ferry", "Yacht", "Container Ship", "Oil Tanker"],
    "Engineering Vehicle": ["Tower Crane", "Container Crane", "Reach Stacker",
                            "Straddle Carrier", "Mobile Crane", "Dump Truck", "Haul Truck",
                            "Scraper/Tractor", "Front Loader", "Excavator", "Cement Mixer",
                            "Ground Grader", "Crane Truck"],
    "Building": ["Hut/Tent", "Shed", "Aircraft Hangar", "Damaged Building", "Facility"],
}
_XVIEW_REJECTED = ["Pylon", "Shipping Container", "Shipping Container Lot", "Storage Tank",
                   "Tower Structure", "Helicopter"]


@dataclass
class ClassMap:
    mapping: dict  # child name -> parent index
    reject: set = field(default_factory=set)

    def __post_init__(self):
        for idx, name in enumerate(PARENT_CLASSES):
            self.mapping.setdefault(name, idx)
        clash = self.reject & set(self.mapping)
        if clash:
            raise InputError(f"classes both mapped and rejected: {sorted(clash)}")

    def knows(self, name):
        return name in self.mapping or name in self.reject

    @classmethod
    def xview(cls):
        mapping = {child: PARENT_CLASSES.index(parent)
                   for parent, children in _XVIEW_CHILDREN.items() for child in children}
        return cls(mapping, set(_XVIEW_REJECTED))


def parse_class_map(stream) -> ClassMap:
    """Read ``child<TAB>parent`` lines; parent ``None`` marks a rejected class."""
    text = stream if isinstance(stream, str) else stream.read()
    mapping, reject = {}, set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise InputError("expected 'child<TAB>parent'", lineno)
        child, parent = parts[0].strip(), parts[1].strip()
        if parent == REJECT_NAME:
            reject.add(child)
        elif parent in PARENT_CLASSES:
            mapping[child] = PARENT_CLASSES.index(parent)
        else:
            raise InputError(f"unknown parent class {parent!r}", lineno)
    return ClassMap(mapping, reject)


def write_class_map(cmap: ClassMap) -> str:
    lines = [f"{child}\t{PARENT_CLASSES[idx]}" for child, idx in cmap.mapping.items()]
    lines += [f"{child}\t{REJECT_NAME}" for child in sorted(cmap.reject)]
    return "\n".join(lines) + "\n"


def group_class(child_name: str, class_map: ClassMap) -> Optional[int]:
    """Parent index for ``child_name``, or None when the class is rejected."""
    if child_name in class_map.reject:
        return None
    try:
        return class_map.mapping[child_name]
    except KeyError:
        raise InputError(f"unknown class {child_name!r}") from None


# -- validation -----------------------------------------------------------

@dataclass
class ImageValidation:
    image_id: str
    kept: list       # AnnotationRow, reject-set classes already filtered out
    removed: list    # incorrect annotations
    rejected: list   # valid annotations of reject-set classes
    dropped: bool

    @property
    def n_incorrect(self):
        return len(self.removed)


def is_incorrect(row: AnnotationRow, width, height, class_map: ClassMap) -> bool:
    b = row.box
    if not b.valid:
        return True
    if b.tlx < 0 or b.tly < 0 or b.brx > width or b.bry > height:
        return True
    return not class_map.knows(row.class_name)


def validate_image(rows, dims, class_map: ClassMap, image_id=None) -> ImageValidation:
    """Apply the one-strike rule to one image's annotations.

    A single incorrect annotation is removed and the image kept; two or more
    drop the whole image.
    """
    width, height = dims
    rows = list(rows)
    if image_id is None:
        image_id = rows[0].image_id if rows else ""
    bad = [r for r in rows if is_incorrect(r, width, height, class_map)]
    if len(bad) >= 2:
        return ImageValidation(image_id, [], bad, [], True)
    good = [r for r in rows if not is_incorrect(r, width, height, class_map)]
    kept = [r for r in good if r.class_name not in class_map.reject]
    rejected = [r for r in good if r.class_name in class_map.reject]
    return ImageValidation(image_id, kept, bad, rejected, False)


def prepare_dataset(table, class_map: ClassMap):
    """Validate every image; return ``{image_id: ImageValidation}`` sorted by id.

    Images with a dimension entry but no annotations are kept as empty.
    """
    grouped = table.by_image()
    missing = sorted(set(grouped) - set(table.dims))
    if missing:
        raise InputError(f"no image dimensions for: {', '.join(missing[:10])}")
    out = {}
    for image_id in sorted(set(grouped) | set(table.dims)):
        out[image_id] = validate_image(grouped.get(image_id, []), table.dims[image_id],
                                       class_map, image_id)
    return out


def grouped_objects(validation: ImageValidation, class_map: ClassMap):
    """``(parent_index, box)`` pairs for the kept annotations."""
    return [(group_class(r.class_name, class_map), r.box) for r in validation.kept]


# -- normalized boxes -----------------------------------------------------

class NormalizedBox(NamedTuple):
    class_index: int
    cx: float
    cy: float
    w: float
    h: float

    def to_line(self):
        return f"{self.class_index} " + " ".join(
            FLOAT_FMT.format(v) for v in (self.cx, self.cy, self.w, self.h))


def to_normalized(box: BoundingBox, img_w, img_h, class_index=0) -> NormalizedBox:
    if img_w <= 0 or img_h <= 0:
        raise InputError("image dimensions must be positive")
    tlx, tly, brx, bry = box
    return NormalizedBox(class_index, (tlx + brx) / (2 * img_w), (tly + bry) / (2 * img_h),
                         (brx - tlx) / img_w, (bry - tly) / img_h)


def denormalize(nb: NormalizedBox, img_w, img_h, integer=True) -> BoundingBox:
    half_w, half_h = nb.w * img_w / 2, nb.h * img_h / 2
    cx, cy = nb.cx * img_w, nb.cy * img_h
    vals = (cx - half_w, cy - half_h, cx + half_w, cy + half_h)
    if integer:
        vals = tuple(int(round(v)) for v in vals)
    return BoundingBox(*vals)


def parse_normalized(stream):
    text = stream if isinstance(stream, str) else stream.read()
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        if len(parts) != 5:
            raise InputError("expected 'class cx cy w h'", lineno)
        try:
            out.append(NormalizedBox(int(parts[0]), *map(float, parts[1:])))
        except ValueError:
            raise InputError("non-numeric field", lineno) from None
    return out


def write_normalized(boxes) -> str:
    return "".join(b.to_line() + "\n" for b in boxes)


# -- class weights --------------------------------------------------------

def class_weights(labels, classes=None) -> dict:
    """Integer weight per class: ``ceil(max_count / count)``.

    ``labels`` is either an iterable of class labels or a mapping of label to
    instance count. Classes listed in ``classes`` but never seen get weight 0
    with a warning.
    """
    counts = Counter(labels) if not isinstance(labels, Mapping) else Counter(dict(labels))
    counts = Counter({c: n for c, n in counts.items() if n > 0})
    if not counts:
        raise InputError("cannot weight an empty dataset")
    top = max(counts.values())
    weights = {c: -(-top // n) for c, n in counts.items()}
    if classes is not None:
        absent = [c for c in classes if c not in counts]
        if absent:
            warnings.warn(f"classes without instances get weight 0: {absent}", stacklevel=2)
        weights = {c: weights.get(c, 0) for c in classes}
    return weights


# -- quadrant table -------------------------------------------------------

GRID = 4

QUADRANT_SCHEMA = [
    ("orig_filename", str), ("row_i", int), ("col_j", int), ("toleft_x", int),
    ("toleft_y", int), ("orig_width", int), ("orig_height", int), ("quad_width", int),
    ("quad_height", int), ("sum_w", int), ("prob", float), ("prob_from", float),
    ("prob_to", float),
]


@dataclass
class QuadrantRecord:
    orig_filename: str
    row_i: int
    col_j: int
    toleft_x: int
    toleft_y: int
    orig_width: int
    orig_height: int
    quad_width: int
    quad_height: int
    sum_w: int
    prob: float
    prob_from: float
    prob_to: float

    @property
    def region(self):
        """Pixel extent ``(x0, y0, x1, y1)``; the last row/column absorbs the remainder."""
        x1 = self.orig_width if self.row_i == GRID - 1 else self.toleft_x + self.quad_width
        y1 = self.orig_height if self.col_j == GRID - 1 else self.toleft_y + self.quad_height
        return (self.toleft_x, self.toleft_y, x1, y1)

    def as_row(self):
        return [getattr(self, name) for name, _ in QUADRANT_SCHEMA]


def _quad_index(coord, size):
    if size == 0:
        return GRID - 1
    return min(int(coord // size), GRID - 1)


def quadrant_sums(objects, weights, img_w, img_h):
    """Sum of class weights per quadrant, shape (4, 4) indexed [row_i, col_j].

    ``row_i`` follows the x axis and ``col_j`` the y axis. Each object lands
    in the quadrant holding its box center.
    """
    qw, qh = img_w // GRID, img_h // GRID
    sums = np.zeros((GRID, GRID), dtype=np.int64)
    for cls, box in objects:
        cx = (box.tlx + box.brx) / 2
        cy = (box.tly + box.bry) / 2
        sums[_quad_index(cx, qw), _quad_index(cy, qh)] += int(weights[cls])
    return sums


def quadrant_table_from_sums(sum_w, img_w, img_h, orig_filename=""):
    """Build the 16 records from per-quadrant weight sums in (row_i, col_j) order."""
    if img_w <= 0 or img_h <= 0:
        raise InputError("image must have positive width and height")
    sum_w = np.asarray(sum_w, dtype=np.int64).reshape(-1)
    if sum_w.size != GRID * GRID:
        raise InputError(f"expected {GRID * GRID} quadrant sums, got {sum_w.size}")
    if np.any(sum_w < 0):
        raise InputError("quadrant weight sums must be non-negative")
    qw, qh = img_w // GRID, img_h // GRID
    total = int(sum_w.sum())
    cum = np.concatenate([[0], np.cumsum(sum_w)])
    records = []
    for idx in range(GRID * GRID):
        i, j = divmod(idx, GRID)
        if total:
            prob = sum_w[idx] / total
            lo, hi = cum[idx] / total, cum[idx + 1] / total
        else:
            prob = lo = hi = 0.0
        records.append(QuadrantRecord(orig_filename, i, j, i * qw, j * qh, img_w, img_h,
                                      qw, qh, int(sum_w[idx]), float(prob), float(lo),
                                      float(hi)))
    return records


def quadrant_table(objects, weights, img_w, img_h, orig_filename=""):
    if img_w <= 0 or img_h <= 0:
        raise InputError("image must have positive width and height")
    sums = quadrant_sums(objects, weights, img_w, img_h)
    return quadrant_table_from_sums(sums.ravel(), img_w, img_h, orig_filename)


def sample_quadrant(table, u):
    """Index of the quadrant whose [prob_from, prob_to) interval holds ``u``.

    ``u`` may be a scalar or an array of draws in [0, 1).
    """
    if not any(r.sum_w for r in table):
        raise InputError("cannot sample from a table with zero total weight")
    edges = np.array([r.prob_to for r in table])
    u_arr = np.asarray(u, dtype=float)
    if np.any((u_arr < 0) | (u_arr >= 1)):
        raise InputError("draws must lie in [0, 1)")
    idx = np.searchsorted(edges, u_arr, side="right")
    if np.ndim(u) == 0:
        return int(idx)
    return idx


# -- chip sampling --------------------------------------------------------

@dataclass
class Chip:
    origin_x: int
    origin_y: int
    size: int
    boxes: list  # NormalizedBox relative to the chip
    quadrant: Optional[int] = None


def clip_objects(objects, origin_x, origin_y, chip_size, retention=0.25):
    """Translate boxes into chip coordinates and clip them.

    A box survives when its clipped area is positive and at least
    ``retention`` times its original area.
    """
    x1, y1 = origin_x + chip_size, origin_y + chip_size
    out = []
    for cls, box in objects:
        ix0, iy0 = max(box.tlx, origin_x), max(box.tly, origin_y)
        ix1, iy1 = min(box.brx, x1), min(box.bry, y1)
        if ix1 <= ix0 or iy1 <= iy0:
            continue
        if (ix1 - ix0) * (iy1 - iy0) < retention * box.area:
            continue
        local = BoundingBox(ix0 - origin_x, iy0 - origin_y, ix1 - origin_x, iy1 - origin_y)
        out.append(to_normalized(local, chip_size, chip_size, cls))
    return out


def sample_chip(img_w, img_h, region, chip_size, rng, objects=(), retention=0.25,
                quadrant=None) -> Chip:
    """Draw one chip whose center falls in ``region`` = (x0, y0, x1, y1).

    The center is drawn uniformly over integer pixels of the region, then
    the chip is shifted as needed to lie fully inside the image.
    """
    if chip_size > min(img_w, img_h):
        raise InputError(f"chip of {chip_size}px does not fit a {img_w}x{img_h} image")
    x0, y0, x1, y1 = region
    cx = int(rng.integers(x0, max(x1, x0 + 1)))
    cy = int(rng.integers(y0, max(y1, y0 + 1)))
    ox = min(max(cx - chip_size // 2, 0), img_w - chip_size)
    oy = min(max(cy - chip_size // 2, 0), img_h - chip_size)
    return Chip(ox, oy, chip_size, clip_objects(objects, ox, oy, chip_size, retention),
                quadrant)


def sample_image_chips(table, objects, n_chips, chip_size, rng, retention=0.25):
    """Pick quadrants by weight, then a chip inside each picked quadrant."""
    if n_chips == 0 or not any(r.sum_w for r in table):
        return []
    img_w, img_h = table[0].orig_width, table[0].orig_height
    picks = sample_quadrant(table, rng.random(n_chips))
    return [sample_chip(img_w, img_h, table[q].region, chip_size, rng, objects, retention,
                        quadrant=int(q))
            for q in picks]
