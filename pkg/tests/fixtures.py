"""Shared reference data for the tests."""
from povmap.formats import BoundingBox, Detection

# -- published quadrant table for a 4763x3064 scene -------------------------

QUAD_IMAGE = ("311.jpg", 4763, 3064)

# row_i, col_j, toleft_x, toleft_y, sum_w, prob, prob_from, prob_to
QUAD_ROWS = [
    (0, 0, 0, 0, 15, 0.00070788, 0, 0.00070788),
    (0, 1, 0, 766, 0, 0, 0.00070788, 0.00070788),
    (0, 2, 0, 1532, 2058, 0.09712128, 0.00070788, 0.09782916),
    (0, 3, 0, 2298, 655, 0.030910807, 0.09782916, 0.12873997),
    (1, 0, 1190, 0, 0, 0, 0.12873997, 0.12873997),
    (1, 1, 1190, 766, 0, 0, 0.12873997, 0.12873997),
    (1, 2, 1190, 1532, 2632, 0.12420953, 0.12873997, 0.2529495),
    (1, 3, 1190, 2298, 2220, 0.1047664, 0.2529495, 0.3577159),
    (2, 0, 2380, 0, 0, 0, 0.3577159, 0.3577159),
    (2, 1, 2380, 766, 1117, 0.052713543, 0.3577159, 0.41042945),
    (2, 2, 2380, 1532, 3048, 0.14384143, 0.41042945, 0.55427086),
    (2, 3, 2380, 2298, 3187, 0.15040113, 0.55427086, 0.704672),
    (3, 0, 3570, 0, 0, 0, 0.704672, 0.704672),
    (3, 1, 3570, 766, 4106, 0.19377065, 0.704672, 0.8984426),
    (3, 2, 3570, 1532, 1040, 0.049079753, 0.8984426, 0.9475224),
    (3, 3, 3570, 2298, 1112, 0.052477583, 0.9475224, 1),
]
QUAD_SUM_W = [r[4] for r in QUAD_ROWS]
QUAD_W, QUAD_H = 1190, 766


# -- detections over two provinces, scored at two confidence cutoffs --------
# P1 has images i1, i2; P2 has i3. Classes: 1 passenger vehicle, 2 truck,
# 6 building.
IMAGE_MAP = {"i1": ("P1", 120.0), "i2": ("P1", 80.0), "i3": ("P2", 50.0)}
_BOX = BoundingBox(0, 0, 10, 10)
DETECTIONS = [
    Detection("i1", 2, _BOX, 0.90),
    Detection("i1", 1, _BOX, 0.55),
    Detection("i1", 1, _BOX, 0.45),
    Detection("i2", 2, _BOX, 0.40),
    Detection("i2", 6, _BOX, 0.70),
    Detection("i3", 1, _BOX, 0.42),
    Detection("i3", 6, _BOX, 0.30),
]
# direct filtering by hand: class -> count
COUNTS_AT = {
    0.4: {"P1": {1: 2, 2: 2, 6: 1}, "P2": {1: 1}},
    0.5: {"P1": {1: 1, 2: 1, 6: 1}, "P2": {}},
}
