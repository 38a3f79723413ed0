"""Seeded synthetic inputs for every subcommand.

Nothing here touches real imagery or survey data; it exists so the whole
pipeline can be exercised end to end with known ground truth.
"""
from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .annotations import ClassMap, write_class_map
from .config import stage_rng
from .etl import FeatureTable, ProvinceRecord, write_feature_table, write_provinces
from .formats import (AnnotationRow, AsciiGridRaster, BoundingBox, Detection, PolygonSet,
                      RawAnnotationTable, write_annotations, write_ascii_grid,
                      write_detections, write_polygons, write_table)


@dataclass
class PovertyDataset:
    provinces: dict          # geocode -> ProvinceRecord
    tables: list             # FeatureTable per upstream model
    noiseless: np.ndarray    # linear signal before noise, ordered by geocode
    noise_sd: float


def poverty_dataset(n=180, widths=(8, 5), seed=0, noise_frac=0.02) -> PovertyDataset:
    """Provinces whose poverty rate is linear in the model features plus noise.

    The signal is rescaled into [0.1, 0.6]; the noise standard deviation is
    ``noise_frac`` times that range.
    """
    rng = stage_rng(seed, "poverty")
    geocodes = [f"PH{i:04d}" for i in range(n)]
    tables, blocks = [], []
    for t, width in enumerate(widths):
        scale = rng.uniform(0.5, 20.0, size=width)
        shift = rng.uniform(-5.0, 5.0, size=width)
        block = rng.normal(size=(n, width)) * scale + shift
        blocks.append(block)
        tables.append(FeatureTable(f"cnn{t}", [f"f{j}" for j in range(width)],
                                   {g: block[i] for i, g in enumerate(geocodes)}))
    X = np.hstack(blocks)
    beta = rng.normal(size=X.shape[1]) / X.std(axis=0)
    lin = X @ beta
    signal = 0.1 + 0.5 * (lin - lin.min()) / (lin.max() - lin.min())
    noise_sd = noise_frac * float(signal.max() - signal.min())
    rate = np.clip(signal + rng.normal(0.0, noise_sd, size=n), 0.0, 1.0)
    pops = rng.integers(50_000, 3_000_000, size=n)
    provinces = {g: ProvinceRecord(g, f"Province {i}", float(rate[i]), float(pops[i]))
                 for i, g in enumerate(geocodes)}
    return PovertyDataset(provinces, tables, signal, noise_sd)


def rasters(seed=0, nrows=24, ncols=30):
    """A nightlight raster plus a 5x finer population raster over the same extent."""
    rng = stage_rng(seed, "rasters")
    cs = 15 / 3600
    xll, yll = 121.0, 14.0
    yy, xx = np.mgrid[0:nrows, 0:ncols]
    light = rng.gamma(1.5, 0.4, size=(nrows, ncols))
    for cy, cx, amp in ((6, 8, 40.0), (16, 20, 120.0)):
        light += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / 8.0)
    light = np.round(light, 4)
    light[0, 0] = -9999.0
    vnl = AsciiGridRaster(ncols, nrows, xll, yll, cs, -9999.0, light)
    f = 5
    pop = rng.poisson(0.6, size=(nrows * f, ncols * f)).astype(float)
    pop[: f * 4, : f * 4] = 0.0  # empty corner
    worldpop = AsciiGridRaster(ncols * f, nrows * f, xll, yll, cs / f, -9999.0, pop)
    return vnl, worldpop


def aois(vnl: AsciiGridRaster):
    x0, y0, cs = vnl.xll, vnl.yll, vnl.cellsize
    w, h = vnl.ncols * cs, vnl.nrows * cs
    return PolygonSet([
        np.array([[x0 + 0.05 * w, y0 + 0.5 * h], [x0 + 0.6 * w, y0 + 0.55 * h],
                  [x0 + 0.5 * w, y0 + 0.95 * h], [x0 + 0.1 * w, y0 + 0.9 * h]]),
        np.array([[x0 + 0.55 * w, y0 + 0.05 * h], [x0 + 0.95 * w, y0 + 0.1 * h],
                  [x0 + 0.9 * w, y0 + 0.5 * h]]),
    ])


# class frequencies loosely imitating xView's skew
_CHILD_POOL = [
    ("Small Car", 60), ("Building", 50), ("Bus", 6), ("Pickup Truck", 8), ("Cargo Truck", 5),
    ("Hut/Tent", 10), ("Motoboat", 4), ("Excavator", 2), ("Cargo Plane", 1),
    ("Locomotive", 1), ("Helipad", 1), ("Vehicle Lot", 3), ("Construction Site", 2),
    ("Pylon", 2), ("Storage Tank", 2),
]


def annotation_table(seed=0, n_images=12, width=1200, height=900):
    rng = stage_rng(seed, "annotations")
    names = [n for n, _ in _CHILD_POOL]
    p = np.array([w for _, w in _CHILD_POOL], dtype=float)
    p /= p.sum()
    rows, dims = [], {}
    for k in range(n_images):
        image_id = f"img{k:03d}.jpg"
        dims[image_id] = (width, height)
        # objects cluster in a couple of hot spots so quadrants differ
        hot = rng.uniform([0, 0], [width, height], size=(2, 2))
        for _ in range(int(rng.integers(15, 60))):
            cx, cy = hot[rng.integers(2)] + rng.normal(0, 120, size=2)
            bw, bh = rng.integers(8, 80, size=2)
            tlx = int(np.clip(cx - bw / 2, 0, width - bw))
            tly = int(np.clip(cy - bh / 2, 0, height - bh))
            rows.append(AnnotationRow(image_id, BoundingBox(tlx, tly, tlx + int(bw), tly + int(bh)),
                                      names[rng.choice(len(names), p=p)]))
        n_bad = k % 4 - 1  # -1, 0, 1, 2 -> no bad, no bad, one bad, two bad
        for b in range(max(n_bad, 0)):
            rows.append(AnnotationRow(image_id, BoundingBox(50 + b, 50, 40, 90), "Small Car"))
    return RawAnnotationTable(rows, dims)


def detections_for(gts, seed=0, label="detections"):
    """Noisy detections of ground-truth boxes plus a few false positives."""
    rng = stage_rng(seed, label)
    dets = []
    for g in gts:
        if rng.random() < 0.15:
            continue
        jitter = rng.normal(0, 3, size=4)
        b = g.box
        box = BoundingBox(*(float(round(v + j, 1)) for v, j in zip(b, jitter)))
        if not box.valid:
            box = b
        cls = g.class_index if rng.random() > 0.1 else int(rng.integers(10))
        dets.append(Detection(g.image_id, cls, box, float(round(rng.uniform(0.3, 1.0), 4))))
    images = sorted({g.image_id for g in gts})
    for _ in range(len(gts) // 10):
        x, y = rng.uniform(0, 900, size=2)
        dets.append(Detection(images[int(rng.integers(len(images)))], int(rng.integers(10)),
                              BoundingBox(round(x, 1), round(y, 1), round(x + 30, 1),
                                          round(y + 20, 1)),
                              float(round(rng.uniform(0.05, 0.6), 4))))
    return dets


def ground_truth(seed=0, n_images=8):
    rng = stage_rng(seed, "ground-truth")
    out = []
    for k in range(n_images):
        for _ in range(int(rng.integers(5, 15))):
            x, y = rng.uniform(0, 900, size=2)
            w, h = rng.uniform(10, 60, size=2)
            out.append(Detection(f"gt{k:02d}", int(rng.integers(10)),
                                 BoundingBox(round(x, 1), round(y, 1), round(x + w, 1),
                                             round(y + h, 1))))
    return out


def province_detections(provinces, seed=0, images_per_province=3):
    """Detections over inference images mapped to provinces, plus the image map rows."""
    rng = stage_rng(seed, "province-detections")
    dets, image_rows = [], []
    for g in sorted(provinces):
        for k in range(images_per_province):
            image_id = f"{g}_{k}"
            image_rows.append((image_id, g, float(rng.integers(2, 400))))
            lam = rng.uniform(0.5, 8.0, size=10)
            if rng.random() < 0.03:
                lam[2] = 0.0  # occasional truckless image
            for cls, count in enumerate(rng.poisson(lam)):
                for _ in range(count):
                    x, y = rng.uniform(0, 400, size=2)
                    dets.append(Detection(image_id, cls,
                                          BoundingBox(round(x, 1), round(y, 1),
                                                      round(x + 12, 1), round(y + 12, 1)),
                                          float(round(rng.uniform(0.2, 1.0), 4))))
    return dets, image_rows


def write_workspace(directory, seed=0, n_provinces=180):
    """Write a complete synthetic input set plus ``pipeline.conf``; return file paths."""
    os.makedirs(directory, exist_ok=True)
    paths = {}

    def put(name, text):
        path = os.path.join(directory, name)
        with open(path, "w", newline="") as fh:
            fh.write(text)
        paths[name] = path
        return path

    vnl, worldpop = rasters(seed)
    put("vnl.asc", write_ascii_grid(vnl))
    put("worldpop.asc", write_ascii_grid(worldpop))
    put("aoi.txt", "# synthetic areas of interest\n" + write_polygons(aois(vnl)))

    table = annotation_table(seed)
    put("annotations.tsv", write_annotations(table))
    put("image_dims.tsv", write_table(
        [(k, w, h) for k, (w, h) in sorted(table.dims.items())],
        [("image_id", str), ("width", int), ("height", int)]))
    put("class_map.tsv", write_class_map(ClassMap.xview()))
    put("test_images.txt", "".join(f"{k}\n" for k in sorted(table.dims)[::3]))

    gts = ground_truth(seed)
    put("ground_truth.tsv", write_detections(gts))
    put("eval_detections.tsv", write_detections(detections_for(gts, seed)))

    data = poverty_dataset(n_provinces, seed=seed)
    put("provinces.tsv", write_provinces(data.provinces[g] for g in sorted(data.provinces)))
    for t in data.tables:
        put(f"{t.name}.tsv", write_feature_table(t))
    dets, image_rows = province_detections(data.provinces, seed)
    put("detections.tsv", write_detections(dets))
    put("image_map.tsv", write_table(image_rows, [("image_id", str), ("geocode", str),
                                                 ("population", float)]))
    put("pipeline.conf", "\n".join([
        "# synthetic pipeline configuration",
        f"vnl = {paths['vnl.asc']}",
        f"worldpop = {paths['worldpop.asc']}",
        f"aoi = {paths['aoi.txt']}",
        f"annotations = {paths['annotations.tsv']}",
        f"image_dims = {paths['image_dims.tsv']}",
        f"class_map = {paths['class_map.tsv']}",
        f"ground_truth = {paths['ground_truth.tsv']}",
        f"detections = {paths['detections.tsv']}",
        f"image_map = {paths['image_map.tsv']}",
        f"provinces = {paths['provinces.tsv']}",
        "chip_size = 256",
        "chips_per_image = 3",
        f"seed = {seed}",
        "",
    ]))
    return paths



if __name__ == "__main__":
    import argparse

    ap = argparse.ArgumentParser(description="Write a synthetic input workspace.")
    ap.add_argument("directory")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--provinces", type=int, default=180)
    a = ap.parse_args()
    for name, path in sorted(write_workspace(a.directory, a.seed, a.provinces).items()):
        print(f"{name}\t{path}")
