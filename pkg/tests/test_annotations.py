import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from povmap import annotations as ann
from povmap.errors import InputError
from povmap.formats import AnnotationRow, BoundingBox, RawAnnotationTable
import fixtures as ref

XVIEW = ann.ClassMap.xview()


def row(box, cls="Small Car", image="img"):
    return AnnotationRow(image, BoundingBox(*box), cls)


class TestValidation:
    DIMS = (100, 80)

    def test_clean_image_kept(self):
        v = ann.validate_image([row((0, 0, 10, 10)), row((5, 5, 20, 20), "Bus")], self.DIMS, XVIEW)
        assert not v.dropped and len(v.kept) == 2 and v.removed == []

    def test_single_incorrect_removed(self):
        rows = [row((0, 0, 10, 10)), row((30, 30, 20, 40)), row((5, 5, 20, 20), "Bus")]
        v = ann.validate_image(rows, self.DIMS, XVIEW)
        assert not v.dropped
        assert v.kept == [rows[0], rows[2]] and v.removed == [rows[1]]

    @pytest.mark.parametrize("bad", [
        (0, 0, 0, 10),          # zero width
        (10, 10, 5, 20),        # inverted
        (-1, 0, 10, 10),        # left of image
        (90, 70, 101, 80),      # right of image
        (0, 0, 10, 81),         # below image
    ])
    def test_geometry_rules(self, bad):
        assert ann.is_incorrect(row(bad), *self.DIMS, XVIEW)

    def test_unknown_class_is_incorrect(self):
        assert ann.is_incorrect(row((0, 0, 1, 1), "Spaceship"), *self.DIMS, XVIEW)

    def test_box_touching_border_is_fine(self):
        assert not ann.is_incorrect(row((0, 0, 100, 80)), *self.DIMS, XVIEW)

    def test_two_incorrect_drops_image(self):
        rows = [row((0, 0, 10, 10)), row((30, 30, 20, 40)), row((0, 0, 5, 5), "Spaceship")]
        v = ann.validate_image(rows, self.DIMS, XVIEW)
        assert v.dropped and v.kept == [] and len(v.removed) == 2

    def test_reject_class_filtered_not_counted(self):
        rows = [row((0, 0, 10, 10), "Pylon"), row((0, 0, 10, 10)), row((-5, 0, 10, 10))]
        v = ann.validate_image(rows, self.DIMS, XVIEW)
        assert not v.dropped
        assert [r.class_name for r in v.kept] == ["Small Car"]
        assert [r.class_name for r in v.rejected] == ["Pylon"]

    def test_prepare_dataset(self):
        t = RawAnnotationTable(
            [row((0, 0, 5, 5), image="a"), row((0, 0, 5, 500), image="b"),
             row((0, 0, 5, 500), image="b"), row((0, 0, 5, 5), image="c")],
            {"a": (10, 10), "b": (10, 10), "c": (10, 10), "d": (10, 10)})
        out = ann.prepare_dataset(t, XVIEW)
        assert list(out) == ["a", "b", "c", "d"]
        assert out["b"].dropped and not out["d"].dropped and out["d"].kept == []

    def test_prepare_dataset_missing_dims(self):
        with pytest.raises(InputError):
            ann.prepare_dataset(RawAnnotationTable([row((0, 0, 1, 1))], {}), XVIEW)


class TestClassMap:
    SPOT = {
        "Small Aircraft": "Fixed-Wing Aircraft", "Cargo Plane": "Fixed-Wing Aircraft",
        "Bus": "Passenger Vehicle", "Small Car": "Passenger Vehicle",
        "Pickup Truck": "Truck", "Truck w/Liquid": "Truck", "Trailer": "Truck",
        "Locomotive": "Railway Vehicle", "Tank Car": "Railway Vehicle",
        "Motoboat": "Maritime Vessel", "Oil Tanker": "Maritime Vessel",
        "Crane Truck": "Engineering Vehicle", "Dump Truck": "Engineering Vehicle",
        "Hut/Tent": "Building", "Aircraft Hangar": "Building",
    }
    REJECTED = ["Pylon", "Storage Tank", "Helicopter", "Shipping Container Lot"]

    def test_spot_checks(self):
        for child, parent in self.SPOT.items():
            assert ann.group_class(child, XVIEW) == ann.PARENT_CLASSES.index(parent), child

    def test_reject_set(self):
        for child in self.REJECTED:
            assert ann.group_class(child, XVIEW) is None

    def test_unknown_class(self):
        with pytest.raises(InputError):
            ann.group_class("Spaceship", XVIEW)

    def test_parents_map_to_themselves(self):
        assert [ann.group_class(p, XVIEW) for p in ann.PARENT_CLASSES] == list(range(10))
        assert ann.TRUCK == 2

    def test_file_round_trip(self):
        back = ann.parse_class_map(ann.write_class_map(XVIEW))
        assert back.mapping == XVIEW.mapping and back.reject == XVIEW.reject

    def test_bad_parent(self):
        with pytest.raises(InputError) as exc:
            ann.parse_class_map("Bus\tPassenger Vehicle\nGadget\tWidgets\n")
        assert exc.value.line == 2


class TestNormalized:
    def test_known_values(self):
        nb = ann.to_normalized(BoundingBox(10, 20, 30, 60), 100, 200, 4)
        assert nb == (4, 0.2, 0.2, 0.2, 0.2)
        assert nb.to_line() == "4 0.200000 0.200000 0.200000 0.200000"

    def test_full_image(self):
        assert ann.to_normalized(BoundingBox(0, 0, 64, 32), 64, 32) == (0, 0.5, 0.5, 1.0, 1.0)

    @settings(max_examples=100, deadline=None)
    @given(st.integers(1, 5000), st.integers(1, 5000), st.data())
    def test_round_trip(self, w, h, data):
        x0 = data.draw(st.integers(0, w - 1))
        y0 = data.draw(st.integers(0, h - 1))
        x1 = data.draw(st.integers(x0 + 1, w))
        y1 = data.draw(st.integers(y0 + 1, h))
        box = BoundingBox(x0, y0, x1, y1)
        nb = ann.to_normalized(box, w, h, 3)
        assert all(0 <= v <= 1 for v in nb[1:])
        assert ann.denormalize(nb, w, h) == box

    def test_text_round_trip(self):
        boxes = [ann.NormalizedBox(1, 0.5, 0.25, 0.125, 0.0625)]
        assert ann.parse_normalized(ann.write_normalized(boxes)) == boxes


class TestClassWeights:
    def test_ceil_ratio(self):
        assert ann.class_weights({"a": 100, "b": 10}) == {"a": 1, "b": 10}
        assert ann.class_weights({"a": 100, "b": 7}) == {"a": 1, "b": 15}

    def test_from_labels(self):
        assert ann.class_weights([0, 0, 0, 1]) == {0: 1, 1: 3}

    def test_absent_class_warns(self):
        with pytest.warns(UserWarning):
            w = ann.class_weights({0: 5}, classes=[0, 1])
        assert w == {0: 1, 1: 0}

    def test_empty(self):
        with pytest.raises(InputError):
            ann.class_weights({})

    @settings(max_examples=50, deadline=None)
    @given(st.dictionaries(st.integers(0, 9), st.integers(1, 10_000), min_size=1))
    def test_monotone(self, counts):
        w = ann.class_weights(counts)
        by_count = sorted(counts, key=counts.get)
        assert all(w[a] >= w[b] for a, b in zip(by_count, by_count[1:]))
        assert w[by_count[-1]] == 1


class TestQuadrants:
    def table(self):
        name, w, h = ref.QUAD_IMAGE
        return ann.quadrant_table_from_sums(ref.QUAD_SUM_W, w, h, name)

    def test_geometry(self):
        t = self.table()
        assert {(r.quad_width, r.quad_height) for r in t} == {(ref.QUAD_W, ref.QUAD_H)}
        assert [(r.row_i, r.col_j, r.toleft_x, r.toleft_y) for r in t] == \
            [x[:4] for x in ref.QUAD_ROWS]
        assert (t[15].toleft_x, t[15].toleft_y) == (3570, 2298)

    def test_probabilities(self):
        t = self.table()
        assert t[0].prob == pytest.approx(0.00070788, abs=1e-6)
        assert (t[10].prob_from, t[10].prob_to) == pytest.approx((0.41042945, 0.55427086),
                                                                 abs=1e-6)
        for r, x in zip(t, ref.QUAD_ROWS):
            assert (r.prob, r.prob_from, r.prob_to) == pytest.approx(x[5:], abs=1e-6)
        assert t[-1].prob_to == 1.0

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.integers(0, 10_000), min_size=16, max_size=16).filter(any),
           st.integers(4, 9000), st.integers(4, 9000))
    def test_interval_invariants(self, sums, w, h):
        t = ann.quadrant_table_from_sums(sums, w, h)
        assert t[0].prob_from == 0.0 and t[-1].prob_to == 1.0
        assert all(a.prob_to == b.prob_from for a, b in zip(t, t[1:]))
        assert all(abs(r.prob_to - r.prob_from - r.prob) <= 1e-9 for r in t)
        assert abs(sum(r.prob for r in t) - 1.0) <= 1e-9

    def test_single_occupied_quadrant(self):
        objects = [(0, BoundingBox(10, 10, 20, 20)), (3, BoundingBox(5, 30, 9, 40))]
        t = ann.quadrant_table(objects, {0: 1, 3: 7}, 400, 400)
        assert [r.prob for r in t] == [1.0] + [0.0] * 15

    def test_last_quadrant_absorbs_remainder(self):
        t = self.table()
        assert t[15].region == (3570, 2298, 4763, 3064)
        assert t[5].region == (1190, 766, 2380, 1532)

    def test_sample_quadrant(self):
        t = self.table()
        assert ann.sample_quadrant(t, 0.0) == 0
        assert ann.sample_quadrant(t, 0.5) == 10
        assert ann.sample_quadrant(t, 0.99) == 15
        # boundary value belongs to the next non-empty interval
        assert ann.sample_quadrant(t, t[0].prob_to) == 2

    def test_zero_weight_never_sampled(self):
        t = self.table()
        picks = ann.sample_quadrant(t, np.random.default_rng(0).random(20_000))
        assert not set(picks.tolist()) & {i for i, x in enumerate(ref.QUAD_ROWS) if x[4] == 0}

    def test_all_zero_table(self):
        t = ann.quadrant_table_from_sums([0] * 16, 100, 100)
        assert all(r.prob == 0 for r in t)
        with pytest.raises(InputError):
            ann.sample_quadrant(t, 0.3)

    def test_quadrant_from_objects(self):
        objects = [(0, BoundingBox(0, 0, 10, 10)), (1, BoundingBox(90, 90, 100, 100)),
                   (1, BoundingBox(70, 10, 80, 20))]
        t = ann.quadrant_table(objects, {0: 1, 1: 4}, 100, 100)
        sums = {(r.row_i, r.col_j): r.sum_w for r in t if r.sum_w}
        # row_i follows x, col_j follows y
        assert sums == {(0, 0): 1, (3, 3): 4, (3, 0): 4}

    def test_bad_dims(self):
        with pytest.raises(InputError):
            ann.quadrant_table([], {}, 0, 10)


class TestChips:
    def test_whole_image_chip(self):
        rng = np.random.default_rng(0)
        objs = [(5, BoundingBox(8, 8, 24, 40))]
        chip = ann.sample_chip(64, 64, (0, 0, 64, 64), 64, rng, objs)
        assert (chip.origin_x, chip.origin_y) == (0, 0)
        assert chip.boxes == [ann.to_normalized(BoundingBox(8, 8, 24, 40), 64, 64, 5)]

    def test_box_outside_chip_dropped(self):
        assert ann.clip_objects([(0, BoundingBox(50, 50, 60, 60))], 0, 0, 32) == []

    def test_half_area_box_kept_and_clipped(self):
        (nb,) = ann.clip_objects([(2, BoundingBox(24, 0, 40, 16))], 0, 0, 32)
        assert ann.denormalize(nb, 32, 32) == BoundingBox(24, 0, 32, 16)

    def test_small_retention_dropped(self):
        assert ann.clip_objects([(2, BoundingBox(30, 0, 40, 10))], 0, 0, 32) == []

    def test_chip_inside_image_and_center_in_region(self):
        rng = np.random.default_rng(1)
        for _ in range(200):
            c = ann.sample_chip(300, 200, (225, 150, 300, 200), 64, rng)
            assert 0 <= c.origin_x <= 300 - 64 and 0 <= c.origin_y <= 200 - 64

    def test_chip_too_large(self):
        with pytest.raises(InputError):
            ann.sample_chip(100, 50, (0, 0, 100, 50), 64, np.random.default_rng(0))

    def test_seeded_chips_repeat(self):
        name, w, h = ref.QUAD_IMAGE
        t = ann.quadrant_table_from_sums(ref.QUAD_SUM_W, w, h, name)
        a = ann.sample_image_chips(t, [], 8, 416, np.random.default_rng(5))
        b = ann.sample_image_chips(t, [], 8, 416, np.random.default_rng(5))
        assert a == b and len(a) == 8
