import warnings

import numpy as np
import pytest

from povmap import etl
from povmap.errors import InputError
import fixtures


def dense(d):
    v = np.zeros(etl.N_CLASSES, dtype=np.int64)
    for c, n in d.items():
        v[c] = n
    return v


class TestCounts:
    @pytest.mark.parametrize("thr", [0.4, 0.5])
    def test_direct_filtering(self, thr):
        got = etl.aggregate_counts(fixtures.DETECTIONS, fixtures.IMAGE_MAP, thr)
        assert sorted(got) == ["P1", "P2"]
        for g, want in fixtures.COUNTS_AT[thr].items():
            assert got[g].tolist() == dense(want).tolist()

    def test_thresholds_differ(self):
        a = etl.aggregate_counts(fixtures.DETECTIONS, fixtures.IMAGE_MAP, 0.4)
        b = etl.aggregate_counts(fixtures.DETECTIONS, fixtures.IMAGE_MAP, 0.5)
        assert a["P1"].sum() == 5 and b["P1"].sum() == 3

    def test_permutation_invariant(self):
        a = etl.aggregate_counts(fixtures.DETECTIONS, fixtures.IMAGE_MAP, 0.4)
        b = etl.aggregate_counts(fixtures.DETECTIONS[::-1], fixtures.IMAGE_MAP, 0.4)
        assert {g: v.tolist() for g, v in a.items()} == {g: v.tolist() for g, v in b.items()}

    def test_unmapped_image(self):
        d = fixtures.DETECTIONS[0]._replace(image_id="nowhere")
        with pytest.raises(InputError):
            etl.aggregate_counts([d], fixtures.IMAGE_MAP)

    def test_image_map_parse(self):
        m = etl.parse_image_map("image_id\tgeocode\tpopulation\na\tP1\t12.5\nb\tP2\t0\n")
        assert m == {"a": ("P1", 12.5), "b": ("P2", 0.0)}
        with pytest.raises(InputError):
            etl.parse_image_map("image_id\tgeocode\na\tP1\na\tP2\n")


class TestRelativize:
    def test_hand_arithmetic(self):
        rel = etl.relativize(dense({1: 6, 2: 4, 6: 1}))
        assert rel[1] == 1.5 and rel[2] == 1.0 and rel[6] == 0.25 and rel[0] == 0.0

    def test_zero_trucks_fallback(self):
        c = dense({1: 3})
        with pytest.warns(etl.ZeroTruckWarning):
            rel = etl.relativize(c)
        assert rel.tolist() == c.astype(float).tolist()

    def test_all_zero(self):
        with pytest.warns(etl.ZeroTruckWarning):
            assert etl.relativize(dense({})).tolist() == [0.0] * 10

    def test_truck_and_building(self):
        rel = etl.relativize(dense({2: 4, 6: 8}))
        assert (rel[6], rel[2]) == (2.0, 1.0)

    def test_scale_invariant(self):
        c = dense({0: 3, 1: 7, 2: 5, 9: 2})
        assert np.allclose(etl.relativize(c), etl.relativize(4 * c), rtol=0, atol=1e-15)

    def test_negative(self):
        with pytest.raises(InputError):
            etl.relativize(-dense({2: 1}))


class TestDetectorFeatures:
    def test_row(self):
        row = etl.detector_features("P1", np.arange(10) / 10, [120.0, 80.0], 1e6)
        assert len(row.values()) == 13 == len(etl.DETECTOR_COLUMNS)
        assert (row.n_samples, row.pop_sampled, row.pop_province) == (2, 200.0, 1e6)
        assert not row.flagged

    def test_no_tiles_flagged(self):
        with pytest.warns(etl.MissingTilesWarning):
            row = etl.detector_features("P9", np.zeros(10), [], 5.0)
        assert row.flagged and row.n_samples == 0

    def test_build_table_notes(self):
        provinces = {g: etl.ProvinceRecord(g, g, 0.2, 1000.0) for g in ("P1", "P2", "P3")}
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            rows, counts, notes = etl.build_detector_table(fixtures.DETECTIONS,
                                                           fixtures.IMAGE_MAP, provinces, 0.5)
        assert [r.geocode for r in rows] == ["P1", "P2", "P3"]
        assert rows[0].rel_counts[1] == 1.0
        assert any(n.startswith("P2:") for n in notes)
        assert any(n.startswith("P3:") and "tiles" in n for n in notes)


def table(name, width, codes, seed=0):
    rng = np.random.default_rng(seed)
    return etl.FeatureTable(name, [f"f{i}" for i in range(width)],
                            {g: rng.normal(size=width) for g in codes})


PROVS = {g: etl.ProvinceRecord(g, g, 0.1 * i, 100.0) for i, g in enumerate("ABCDE")}


class TestEnsemble:
    def test_width(self):
        rows, names = etl.concat_features([table("cnn", 4, "ABCDE"), table("det", 13, "EDCBA")],
                                          PROVS)
        assert len(names) == 17 and all(r.features.shape == (17,) for r in rows)
        assert [r.geocode for r in rows] == list("ABCDE")
        assert names[0] == "cnn.f0" and names[-1] == "det.f12"

    def test_mismatch_strict(self):
        with pytest.raises(InputError) as exc:
            etl.concat_features([table("a", 2, "ABCDE"), table("b", 2, "ABCD")], PROVS)
        assert "E" in str(exc.value)

    def test_mismatch_permissive(self):
        with pytest.warns(UserWarning):
            rows, _ = etl.concat_features([table("a", 2, "ABCDE"), table("b", 2, "ABCD")], PROVS,
                                          permissive=True)
        assert [r.geocode for r in rows] == list("ABCD")

    def test_round_trip(self):
        rows, names = etl.concat_features([table("a", 3, "ABCDE")], PROVS)
        codes, X, y, back = etl.parse_ensemble(etl.write_ensemble(rows, names))
        assert codes == list("ABCDE") and back == names
        assert np.allclose(X, [r.features for r in rows], atol=5e-7)
        assert np.allclose(y, [p.poverty_rate for p in PROVS.values()])

    def test_feature_table_round_trip(self):
        t = table("x", 3, "ABC")
        back = etl.parse_feature_table(etl.write_feature_table(t), "x")
        assert back.columns == t.columns
        assert all(np.allclose(back.data[g], t.data[g], atol=5e-7) for g in "ABC")

    def test_provinces_validation(self):
        bad = "geocode\tname\tpoverty_rate\tpopulation\nP1\tx\t1.5\t10\n"
        with pytest.raises(InputError):
            etl.parse_provinces(bad)


class TestSplit:
    CODES = [f"PH{i:03d}" for i in range(180)]

    def test_sizes(self):
        train, test = etl.split_provinces(self.CODES, 0.2, seed=7)
        assert (len(train), len(test)) == (144, 36)
        assert not set(train) & set(test)

    def test_minimum(self):
        assert [len(p) for p in etl.split_provinces(list("ABCDE"), 0.2, 1)] == [4, 1]
        with pytest.raises(InputError):
            etl.split_provinces(list("ABCD"), 0.2, 1)

    def test_round_half_up(self):
        assert [etl.round_half_up(x) for x in (0.5, 1.5, 2.5, 2.4)] == [1, 2, 3, 2]

    def test_seeded_and_order_free(self):
        a = etl.split_provinces(self.CODES, 0.2, seed=7)
        b = etl.split_provinces(reversed(self.CODES), 0.2, seed=7)
        assert a == b
        assert etl.split_provinces(self.CODES, 0.2, seed=8) != a

    def test_round_trip(self):
        train, test = etl.split_provinces(self.CODES, 0.2, seed=7)
        parsed = etl.parse_split(etl.write_split(train, test))
        assert sorted(g for g, s in parsed.items() if s == "test") == test

    def test_duplicates(self):
        with pytest.raises(InputError):
            etl.split_provinces(["A", "A", "B", "C", "D", "E"])


def test_class_coverage():
    labels = [0] * 10 + [1] * 9 + [2] * 30
    assert etl.check_class_coverage(labels, 10, classes=range(3)) == {1: 9}
    assert etl.check_class_coverage(labels, 9, classes=range(3)) == {}
