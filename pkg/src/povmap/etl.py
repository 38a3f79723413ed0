"""Province-level ETL: detection counts, truck-relative features, the
ensemble design table and the fixed holdout split."""
from __future__ import annotations

import math
import re
import warnings
from collections import Counter
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .annotations import PARENT_CLASSES, TRUCK
from .errors import InputError
from .formats import read_table, write_table

N_CLASSES = len(PARENT_CLASSES)


class ZeroTruckWarning(UserWarning):
    """Truck count was zero, so counts were left absolute."""


class MissingTilesWarning(UserWarning):
    """A province had no sampled tiles."""


def _slug(name):
    return re.sub(r"[^a-z0-9]+", "_", name.lower()).strip("_")


CLASS_SLUGS = tuple(_slug(n) for n in PARENT_CLASSES)


# -- provinces ------------------------------------------------------------

class ProvinceRecord(NamedTuple):
    geocode: str
    name: str
    poverty_rate: float
    population: float


PROVINCE_SCHEMA = [("geocode", str), ("name", str), ("poverty_rate", float),
                   ("population", float)]


def parse_provinces(stream):
    _, rows = read_table(stream, PROVINCE_SCHEMA)
    out = {}
    for lineno, r in enumerate(rows, start=2):
        if r["geocode"] in out:
            raise InputError(f"duplicate geocode {r['geocode']!r}", lineno)
        if not 0.0 <= r["poverty_rate"] <= 1.0:
            raise InputError(f"poverty_rate {r['poverty_rate']} outside [0, 1]", lineno)
        if r["population"] < 0:
            raise InputError("negative population", lineno)
        out[r["geocode"]] = ProvinceRecord(r["geocode"], r["name"], r["poverty_rate"],
                                           r["population"])
    return out


def write_provinces(provinces) -> str:
    return write_table([tuple(p) for p in provinces], PROVINCE_SCHEMA)


def parse_image_map(stream):
    """``image_id -> (geocode, population)``; population defaults to 0."""
    header, rows = read_table(stream, [("image_id", str), ("geocode", str)])
    has_pop = "population" in header
    out = {}
    for lineno, r in enumerate(rows, start=2):
        pop = 0.0
        if has_pop:
            try:
                pop = float(r["population"])
            except ValueError:
                raise InputError("population must be numeric", lineno) from None
        if r["image_id"] in out:
            raise InputError(f"image {r['image_id']!r} mapped twice", lineno)
        out[r["image_id"]] = (r["geocode"], pop)
    return out


# -- counts ---------------------------------------------------------------

def aggregate_counts(dets, image_map, conf_threshold=0.5):
    """Per-province, per-class counts of detections at or above ``conf_threshold``.

    ``image_map`` maps image id to geocode (or to a ``(geocode, ...)`` tuple).
    Every geocode in the map appears in the result, sorted.
    """
    def geocode_of(v):
        return v[0] if isinstance(v, tuple) else v

    unmapped = sorted({d.image_id for d in dets} - set(image_map))
    if unmapped:
        raise InputError(f"detections reference unmapped images: {', '.join(unmapped[:20])}")
    counts = {g: np.zeros(N_CLASSES, dtype=np.int64)
              for g in sorted({geocode_of(v) for v in image_map.values()})}
    for d in dets:
        if d.confidence >= conf_threshold:
            if not 0 <= d.class_index < N_CLASSES:
                raise InputError(f"class index {d.class_index} outside 0..{N_CLASSES - 1}")
            counts[geocode_of(image_map[d.image_id])][d.class_index] += 1
    return counts


def relativize(counts):
    """Divide every class count by the truck count.

    With zero trucks the counts are returned as floats unchanged and a
    ``ZeroTruckWarning`` is issued.
    """
    counts = np.asarray(counts, dtype=float)
    if np.any(counts < 0):
        raise InputError("counts must be non-negative")
    trucks = counts[TRUCK]
    if trucks == 0:
        warnings.warn("zero trucks: keeping absolute counts", ZeroTruckWarning, stacklevel=2)
        return counts.copy()
    return counts / trucks


@dataclass
class DetectorFeatureRow:
    geocode: str
    rel_counts: np.ndarray
    n_samples: int
    pop_sampled: float
    pop_province: float
    flagged: bool = False

    def values(self):
        return [*self.rel_counts.tolist(), self.n_samples, self.pop_sampled, self.pop_province]


DETECTOR_COLUMNS = [f"rel_{s}" for s in CLASS_SLUGS] + ["n_samples", "pop_sampled",
                                                       "pop_province"]


def detector_features(geocode, rel_counts, tile_populations, pop_province):
    tile_populations = list(tile_populations)
    row = DetectorFeatureRow(geocode, np.asarray(rel_counts, dtype=float),
                             len(tile_populations), float(sum(tile_populations)),
                             float(pop_province), flagged=not tile_populations)
    if row.flagged:
        warnings.warn(f"province {geocode} has no sampled tiles", MissingTilesWarning,
                      stacklevel=2)
    return row


def build_detector_table(dets, image_map, provinces, conf_threshold=0.5):
    """Detector feature rows for every province in ``provinces``, sorted by geocode.

    Returns ``(rows, counts, notes)``; notes are human-readable warnings.
    """
    counts = aggregate_counts(dets, image_map, conf_threshold)
    tiles = {}
    for geocode, pop in image_map.values():
        tiles.setdefault(geocode, []).append(pop)
    rows, notes = [], []
    for geocode in sorted(provinces):
        c = counts.get(geocode, np.zeros(N_CLASSES, dtype=np.int64))
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            rel = relativize(c)
            rows.append(detector_features(geocode, rel, tiles.get(geocode, []),
                                          provinces[geocode].population))
        notes += [f"{geocode}: {w.message}" for w in caught]
    return rows, counts, notes


# -- feature tables and the ensemble --------------------------------------

@dataclass
class FeatureTable:
    name: str
    columns: list
    data: dict  # geocode -> float array

    @property
    def width(self):
        return len(self.columns)


def parse_feature_table(stream, name):
    header, rows = read_table(stream, [("geocode", str)])
    cols = [h for h in header if h != "geocode"]
    data = {}
    for lineno, r in enumerate(rows, start=2):
        if r["geocode"] in data:
            raise InputError(f"duplicate geocode {r['geocode']!r} in {name}", lineno)
        try:
            vec = np.array([float(r[c]) for c in cols])
        except ValueError:
            raise InputError(f"non-numeric feature in {name}", lineno) from None
        if not np.isfinite(vec).all():
            raise InputError(f"non-finite feature in {name}", lineno)
        data[r["geocode"]] = vec
    return FeatureTable(name, cols, data)


def detector_table(rows, name="det"):
    return FeatureTable(name, list(DETECTOR_COLUMNS),
                        {r.geocode: np.array(r.values(), dtype=float) for r in rows})


def write_feature_table(table: FeatureTable) -> str:
    schema = [("geocode", str)] + [(c, float) for c in table.columns]
    return write_table([[g, *table.data[g]] for g in sorted(table.data)], schema)


class EnsembleRow(NamedTuple):
    geocode: str
    features: np.ndarray
    poverty_rate: float


def concat_features(tables, provinces, permissive=False):
    """Join feature tables and province targets on geocode.

    Returns ``(rows, column_names)`` with rows sorted by geocode. Key sets
    must agree exactly unless ``permissive`` is set, in which case the inner
    join is used and a warning lists the dropped geocodes.
    """
    if not tables:
        raise InputError("need at least one feature table")
    keysets = [set(t.data) for t in tables] + [set(provinces)]
    common = set.intersection(*keysets)
    odd = sorted(set.union(*keysets) - common)
    if odd:
        msg = f"geocodes not present in every table: {', '.join(odd[:20])}"
        if not permissive:
            raise InputError(msg)
        warnings.warn(msg, stacklevel=2)
    names = [f"{t.name}.{c}" for t in tables for c in t.columns]
    rows = [EnsembleRow(g, np.concatenate([t.data[g] for t in tables]),
                        provinces[g].poverty_rate)
            for g in sorted(common)]
    return rows, names


def write_ensemble(rows, names) -> str:
    schema = [("geocode", str)] + [(n, float) for n in names] + [("poverty_rate", float)]
    return write_table([[r.geocode, *r.features, r.poverty_rate] for r in rows], schema)


def parse_ensemble(stream):
    """Return ``(geocodes, X, y, feature_names)`` from an ensemble table."""
    header, rows = read_table(stream, [("geocode", str), ("poverty_rate", float)])
    names = [h for h in header if h not in ("geocode", "poverty_rate")]
    try:
        X = np.array([[float(r[n]) for n in names] for r in rows], dtype=float)
    except ValueError:
        raise InputError("non-numeric ensemble feature") from None
    X = X.reshape(len(rows), len(names))
    y = np.array([r["poverty_rate"] for r in rows], dtype=float)
    return [r["geocode"] for r in rows], X, y, names


# -- splits and coverage --------------------------------------------------

def round_half_up(x):
    return int(math.floor(x + 0.5))


def split_provinces(geocodes, test_fraction=0.2, seed=0):
    """Seeded holdout split; returns sorted ``(train, test)`` geocode lists.

    ``seed`` may be an int or a ``numpy.random.SeedSequence``.
    """
    if not 0 < test_fraction < 1:
        raise InputError("test_fraction must be in (0, 1)")
    geocodes = list(geocodes)
    codes = sorted(set(geocodes))
    if len(codes) != len(geocodes):
        raise InputError("duplicate geocodes")
    if len(codes) < 5:
        raise InputError("need at least 5 geocodes to split")
    n_test = round_half_up(test_fraction * len(codes))
    perm = np.random.default_rng(seed).permutation(len(codes))
    test = sorted(codes[i] for i in perm[:n_test])
    train = sorted(codes[i] for i in perm[n_test:])
    return train, test


SPLIT_SCHEMA = [("geocode", str), ("split", str)]


def write_split(train, test) -> str:
    rows = sorted([(g, "train") for g in train] + [(g, "test") for g in test])
    return write_table(rows, SPLIT_SCHEMA)


def parse_split(stream):
    _, rows = read_table(stream, SPLIT_SCHEMA)
    out = {}
    for lineno, r in enumerate(rows, start=2):
        if r["split"] not in ("train", "test"):
            raise InputError(f"split must be train or test, got {r['split']!r}", lineno)
        out[r["geocode"]] = r["split"]
    return out


def check_class_coverage(labels, min_instances=10, classes=range(N_CLASSES)):
    """Classes with fewer than ``min_instances`` holdout instances.

    ``labels`` is an iterable of parent class indices. Returns a dict of
    deficient class -> count; an empty dict means the holdout passes.
    """
    counts = Counter(labels)
    return {c: counts.get(c, 0) for c in classes if counts.get(c, 0) < min_instances}
