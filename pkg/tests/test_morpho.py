"""Morphology features, subset predicates, snapshots and comparison stats.

Perimeter is checked against a brute-force neighbor scan, PCA against a
direct eigen-decomposition, and the Welch test against scipy.stats.
"""

import numpy as np
import pytest
import scipy.stats

from mitoviz import morpho as MO
from mitoviz.imgproc import PixelSet
from mitoviz.mito import DETECTED, MitoObject
from mitoviz.structure import StructureLabelRaster


def obj_from_mask(mask, oid=1, connected=True):
    mask = np.asarray(mask, bool)
    return MitoObject.build(oid, PixelSet.from_mask(mask), mask.shape[1],
                            DETECTED, require_connected=connected)


def blank_labels(h, w, code=0):
    return StructureLabelRaster(np.full((h, w), code, np.uint8))


def oracle_crack_edges(mask):
    """Count pixel edges between the object and everything else."""
    mask = np.asarray(mask, bool)
    h, w = mask.shape
    edges = 0
    for y in range(h):
        for x in range(w):
            if not mask[y, x]:
                continue
            for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                ny, nx = y + dy, x + dx
                if not (0 <= ny < h and 0 <= nx < w) or not mask[ny, nx]:
                    edges += 1
    return edges


def random_blob(rng, h=24, w=24):
    mask = np.zeros((h, w), bool)
    y, x = int(rng.integers(h)), int(rng.integers(w))
    mask[y, x] = True
    for _ in range(int(rng.integers(10, 80))):
        dy, dx = rng.integers(-1, 2), rng.integers(-1, 2)
        y = int(np.clip(y + dy, 0, h - 1))
        x = int(np.clip(x + dx, 0, w - 1))
        mask[y, x] = True
    return mask


# --- compute_features ------------------------------------------------------

def test_single_pixel_features():
    mask = np.zeros((5, 5), bool)
    mask[2, 3] = True
    fv = MO.compute_features(obj_from_mask(mask), blank_labels(5, 5), 0.21)
    assert fv.area == pytest.approx(0.0441, abs=1e-12)
    assert fv.eccentricity == 0.0
    assert fv.length == 0.0
    assert fv.circularity == 1.0
    assert fv.structure == 0


def test_bar_features():
    mask = np.zeros((5, 14), bool)
    mask[2, 2:12] = True
    fv = MO.compute_features(obj_from_mask(mask), blank_labels(5, 14), 0.21)
    assert fv.length == 9 * 0.21
    assert fv.length == pytest.approx(1.89, abs=1e-12)
    # 22 crack edges scaled by pi/4
    expect = min(1.0, 4 * np.pi * 10 / (22 * np.pi / 4) ** 2)
    assert fv.circularity == pytest.approx(expect, abs=1e-12)
    # unit-square pixel moments: lam2/lam1 = (1/12) / (99/12 + 1/12)
    assert fv.eccentricity == pytest.approx(np.sqrt(0.99), abs=1e-12)


def test_disc_is_round():
    yy, xx = np.mgrid[0:33, 0:33]
    mask = (yy - 16) ** 2 + (xx - 16) ** 2 < 15 ** 2
    fv = MO.compute_features(obj_from_mask(mask), blank_labels(33, 33), 0.21)
    assert 0.85 <= fv.circularity <= 1.0
    assert fv.eccentricity < 0.1


def test_circularity_tracks_crack_edge_oracle():
    rng = np.random.default_rng(7)
    for _ in range(15):
        mask = random_blob(rng)
        obj = obj_from_mask(mask, connected=False)
        fv = MO.compute_features(obj, blank_labels(*mask.shape), 1.0)
        n = mask.sum()
        perim = oracle_crack_edges(mask) * np.pi / 4
        assert fv.circularity == pytest.approx(
            min(1.0, 4 * np.pi * n / perim ** 2), abs=1e-12)
        assert fv.area == pytest.approx(float(n), abs=1e-9)


def test_feature_ranges_hold_on_random_blobs():
    rng = np.random.default_rng(11)
    for _ in range(25):
        mask = random_blob(rng)
        fv = MO.compute_features(obj_from_mask(mask, connected=False),
                                 blank_labels(*mask.shape), 0.21)
        assert fv.area > 0
        assert 0 < fv.circularity <= 1
        assert 0 <= fv.eccentricity < 1
        assert fv.length >= 0


def test_structure_majority_and_ties():
    mask = np.zeros((4, 8), bool)
    mask[1, 1:7] = True
    arr = np.zeros((4, 8), np.uint8)
    arr[1, 1:4] = 1
    arr[1, 4:7] = 2
    fv = MO.compute_features(obj_from_mask(mask),
                             StructureLabelRaster(arr), 0.21)
    assert fv.structure == 1   # 3 vs 3 tie breaks low

    arr[1, 1:4] = 2
    fv = MO.compute_features(obj_from_mask(mask),
                             StructureLabelRaster(arr), 0.21)
    assert fv.structure == 2

    arr[:] = 0
    arr[1, 6] = 3   # background majority still yields the labeled class
    fv = MO.compute_features(obj_from_mask(mask),
                             StructureLabelRaster(arr), 0.21)
    assert fv.structure == 3


def test_compute_features_validation():
    mask = np.zeros((4, 4), bool)
    mask[1, 1] = True
    obj = obj_from_mask(mask)
    with pytest.raises(ValueError):
        MO.compute_features(obj, blank_labels(4, 4), 0.0)
    with pytest.raises(ValueError):
        MO.compute_features(obj, blank_labels(1, 1), 0.21)


# --- density -----------------------------------------------------------------

def test_density_simple_ratio():
    arr = np.zeros((10, 10), np.uint8)
    arr[0:10, 0:10] = 1   # 100 px dendrite
    mask = np.zeros((10, 10), bool)
    mask[4, 0:10] = True  # 10 px object
    assert MO.density([obj_from_mask(mask)],
                      StructureLabelRaster(arr)) == 0.1


def test_density_empty_subset():
    assert MO.density([], blank_labels(4, 4)) == 0.0


def test_density_spans_two_classes():
    arr = np.zeros((20, 20), np.uint8)
    arr.ravel()[:300] = 1
    arr.ravel()[300:400] = 2
    m1 = np.zeros((20, 20), bool)
    m1.ravel()[:30] = True       # 30 px in dendrite
    m2 = np.zeros((20, 20), bool)
    m2.ravel()[300:310] = True   # 10 px in axon
    val = MO.density([obj_from_mask(m1, 1), obj_from_mask(m2, 2)],
                     StructureLabelRaster(arr))
    assert val == 40 / 400


def test_density_zero_area_errors():
    mask = np.zeros((4, 4), bool)
    mask[1, 1] = True
    with pytest.raises(ValueError):
        MO.density([obj_from_mask(mask)], blank_labels(4, 4), classes={3})


# --- range filters -----------------------------------------------------------

def fv(area=1.0, circ=0.5, ecc=0.5, length=1.0, structure=0):
    return MO.FeatureVector(area, circ, ecc, length, structure)


def test_no_constraints_keeps_everything():
    feats = {i: fv(length=float(i + 1)) for i in range(5)}
    sub = MO.filter_by_ranges(feats, {})
    assert sub.members == (0, 1, 2, 3, 4)


def test_strict_lower_bound():
    feats = {1: fv(length=0.3), 2: fv(length=0.5), 3: fv(length=0.8)}
    sub = MO.filter_by_ranges(
        feats, [MO.FeatureRange("length", lo=0.5, strict_lo=True)])
    assert sub.members == (3,)


def test_closed_bounds_include_boundary():
    feats = {1: fv(length=0.3), 2: fv(length=0.5), 3: fv(length=0.8)}
    sub = MO.filter_by_ranges(feats, {"length": (0.5, 0.8)})
    assert sub.members == (2, 3)


def test_structure_partition():
    feats = {i: fv(structure=i % 3) for i in range(9)}
    sub = MO.filter_by_ranges(feats, {"structure": {1}})
    assert sub.members == (1, 4, 7)


def test_conjunction_equals_intersection():
    rng = np.random.default_rng(3)
    feats = {i: fv(area=float(rng.random() * 5 + 0.1),
                   length=float(rng.random() * 3))
             for i in range(40)}
    r1 = MO.FeatureRange("area", lo=1.0, hi=4.0)
    r2 = MO.FeatureRange("length", lo=0.5, strict_lo=True)
    both = MO.filter_by_ranges(feats, [r1, r2]).members
    a = set(MO.filter_by_ranges(feats, [r1]).members)
    b = set(MO.filter_by_ranges(feats, [r2]).members)
    assert set(both) == a & b


def test_predicate_tree_json_roundtrip():
    tree = MO.Combine("and", (
        MO.FeatureRange("length", lo=0.5, strict_lo=True),
        MO.Combine("or", (MO.StructureIn(frozenset({1, 2})),
                          MO.ImageRegion(PixelSet(np.array([3, 7, 9]))))),
        MO.ProjectionRegion("pair", ("length", "area"),
                            ("rect", 0.0, 0.0, 2.0, 2.0)),
    ))
    sub = MO.Subset(4, "long ones", (1, 2), tree)
    back = MO.subset_from_json(MO.subset_to_json(sub))
    assert back == sub


def test_combine_validation():
    with pytest.raises(ValueError):
        MO.Combine("xor", ())
    with pytest.raises(ValueError):
        MO.Combine("not", (MO.FeatureRange("area"),
                           MO.FeatureRange("length")))
    with pytest.raises(ValueError):
        MO.FeatureRange("volume")


def test_not_combinator():
    feats = {1: fv(length=0.3), 2: fv(length=0.9)}
    tree = MO.Combine("not", (MO.FeatureRange("length", lo=0.5),))
    assert MO.evaluate(tree, feats) == frozenset({1})


# --- projection ---------------------------------------------------------------

def test_feature_pair_is_verbatim():
    feats = {7: fv(area=2.0, length=0.4), 9: fv(area=3.0, length=1.1)}
    coords = MO.project(feats, "pair", ("length", "area"))
    assert coords[7] == (0.4, 2.0)
    assert coords[9] == (1.1, 3.0)


def test_collinear_features_zero_second_axis():
    feats = {i: fv(area=0.5 + i, circ=0.1 + 0.05 * i, ecc=0.1 + 0.05 * i,
                   length=float(2 * i))
             for i in range(6)}
    coords = MO.project(feats, "pca")
    assert all(xy[1] == 0.0 for xy in coords.values())


def test_pca_matches_eigen_oracle():
    rng = np.random.default_rng(5)
    feats = {i: fv(area=float(rng.random() * 4 + 0.2),
                   circ=float(rng.random() * 0.9 + 0.05),
                   ecc=float(rng.random() * 0.9),
                   length=float(rng.random() * 3))
             for i in range(5)}
    coords = MO.project(feats, "pca")
    got = np.array([coords[i] for i in sorted(feats)])

    x = np.array([feats[i].numeric() for i in sorted(feats)])
    z = (x - x.mean(0)) / x.std(0)
    lam, vec = np.linalg.eigh(np.cov(z.T, ddof=1))
    expect = z @ vec[:, np.argsort(lam)[::-1][:2]]
    for col in range(2):
        diff = min(np.abs(got[:, col] - expect[:, col]).max(),
                   np.abs(got[:, col] + expect[:, col]).max())
        assert diff < 1e-8


def test_pca_order_invariant_and_variance_preserving():
    rng = np.random.default_rng(8)
    items = [(i, fv(area=float(rng.random() * 4 + 0.2),
                    circ=float(rng.random() * 0.9 + 0.05),
                    ecc=float(rng.random() * 0.9),
                    length=float(rng.random() * 3)))
             for i in range(12)]
    coords = MO.project(dict(items), "pca")
    shuffled = MO.project(dict(reversed(items)), "pca")
    assert coords == shuffled

    x = np.array([f.numeric() for _, f in items])
    z = (x - x.mean(0)) / x.std(0)
    lam = np.linalg.eigvalsh(np.cov(z.T, ddof=1))
    pts = np.array([coords[i] for i, _ in items])
    total = pts[:, 0].var(ddof=1) + pts[:, 1].var(ddof=1)
    assert total == pytest.approx(lam[-1] + lam[-2], abs=1e-8)


def test_pca_needs_two_objects():
    with pytest.raises(ValueError):
        MO.project({1: fv()}, "pca")
    with pytest.raises(ValueError):
        MO.project({1: fv(), 2: fv()}, "umap")


# --- region selections ------------------------------------------------------------

def test_rect_selection_inclusive():
    coords = {1: (0.0, 0.0), 2: (1.0, 1.0), 3: (2.0, 0.5)}
    sub = MO.select_in_projection(coords, ("rect", 0.0, 0.0, 1.0, 1.0))
    assert sub.members == (1, 2)    # boundary points included
    empty = MO.select_in_projection(coords, ("rect", 5.0, 5.0, 6.0, 6.0))
    assert empty.members == ()


def test_half_plane_on_feature_pair():
    feats = {i: fv(length=l)
             for i, l in enumerate((0.2, 0.4, 0.6, 0.8, 1.0))}
    coords = MO.project(feats, "pair", ("length", "area"))
    sub = MO.select_in_projection(coords, ("rect", -1e9, -1e9, 0.5, 1e9),
                                  method="pair", params=("length", "area"))
    assert sub.members == (0, 1)


def test_polygon_selection_with_boundary():
    tri = ("polygon", ((0.0, 0.0), (4.0, 0.0), (0.0, 4.0)))
    coords = {1: (1.0, 1.0),    # interior
              2: (2.0, 2.0),    # on the hypotenuse
              3: (0.0, 0.0),    # vertex
              4: (3.0, 3.0)}    # outside
    sub = MO.select_in_projection(coords, tri)
    assert sub.members == (1, 2, 3)


def test_select_in_image():
    m1 = np.zeros((6, 6), bool)
    m1[1, 1] = True
    m2 = np.zeros((6, 6), bool)
    m2[4, 4:6] = True
    objects = {1: obj_from_mask(m1, 1), 2: obj_from_mask(m2, 2)}

    full = MO.select_in_image(objects, PixelSet(np.arange(36)))
    assert full.members == (1, 2)
    nothing = MO.select_in_image(objects, PixelSet(np.array([0, 35])))
    assert nothing.members == ()
    brush = np.zeros((6, 6), bool)
    brush[4, 5] = True
    assert MO.select_in_image(objects,
                              PixelSet.from_mask(brush)).members == (2,)


# --- snapshots --------------------------------------------------------------------

def snapshot_fixture():
    arr = np.zeros((8, 8), np.uint8)
    arr[:, :4] = 1
    labels = StructureLabelRaster(arr)
    masks = []
    for k in range(3):
        m = np.zeros((8, 8), bool)
        m[2 * k, 0:2 + k] = True
        masks.append(m)
    objects = {i + 1: obj_from_mask(m, i + 1) for i, m in enumerate(masks)}
    feats = {i: MO.compute_features(o, labels, 0.21)
             for i, o in objects.items()}
    return objects, feats, labels


def test_snapshot_empty_subset():
    objects, feats, labels = snapshot_fixture()
    sub = MO.Subset(1, "none", (), MO.FeatureRange("area", lo=1e9))
    snap = MO.record_snapshot(sub, objects, feats, labels, created_at=0.0)
    assert snap.count == 0 and snap.density == 0.0
    assert snap.mean_area is None and snap.mean_length is None


def test_snapshot_singleton_means():
    objects, feats, labels = snapshot_fixture()
    sub = MO.Subset(1, "one", (2,), MO.FeatureRange("area"))
    snap = MO.record_snapshot(sub, objects, feats, labels, created_at=0.0)
    assert snap.count == 1
    assert snap.mean_area == feats[2].area
    assert snap.mean_length == feats[2].length
    assert snap.mean_eccentricity == feats[2].eccentricity
    assert snap.mean_circularity == feats[2].circularity


def test_snapshot_mean_arithmetic():
    feats = {i: fv(length=float(i)) for i in (1, 2, 3)}
    objects, _, labels = snapshot_fixture()
    sub = MO.Subset(1, "", (1, 2, 3), MO.FeatureRange("area"))
    snap = MO.record_snapshot(sub, objects, feats, labels, created_at=0.0)
    assert snap.mean_length == 2.0


def test_snapshot_statistics_recomputable_bit_exactly():
    objects, feats, labels = snapshot_fixture()
    sub = MO.filter_by_ranges(feats, {})
    a = MO.record_snapshot(sub, objects, feats, labels, created_at=5.0)
    b = MO.record_snapshot(sub, objects, feats, labels, created_at=5.0)
    assert a == b
    table = np.array([feats[i].numeric() for i in a.members])
    assert a.mean_area == table.mean(axis=0)[0]


def test_csv_export_deterministic_and_parseable():
    objects, feats, labels = snapshot_fixture()
    sub = MO.filter_by_ranges(feats, {})
    snap = MO.record_snapshot(sub, objects, feats, labels,
                              comment="axon, apical", group="g1",
                              image="img_01", snapshot_id=3, created_at=0.0)
    empty = MO.record_snapshot(
        MO.Subset(4, "", (), MO.FeatureRange("area", lo=1e9)),
        objects, feats, labels, created_at=0.0)
    text = MO.snapshots_to_csv([snap, empty])
    assert text.splitlines()[0] == MO.CSV_HEADER
    assert text == MO.snapshots_to_csv([snap, empty])

    import csv as csvmod
    import io as iomod
    rows = list(csvmod.reader(iomod.StringIO(text)))
    assert rows[1][1] == "axon, apical"
    assert rows[1][4] == "3"
    assert float(rows[1][6]) == snap.mean_area
    assert rows[2][6] == ""


# --- comparison statistics ------------------------------------------------------------

def test_identical_samples_compare_trivially():
    a = [fv(length=float(k)) for k in (1, 2, 3)]
    out = MO.compare(a, list(a))
    for name in MO.FEATURE_NAMES:
        assert out[name]["difference"] == 0.0
        assert out[name]["t"] == 0.0
        assert out[name]["p"] == 1.0


def test_welch_matches_scipy():
    a = np.array([1.0, 2.0, 3.0])
    b = np.array([1.1, 2.1, 3.1])
    t, p = MO.welch_t_test(a, b)
    ref = scipy.stats.ttest_ind(a, b, equal_var=False)
    assert t == pytest.approx(ref.statistic, abs=1e-12)
    assert p == pytest.approx(ref.pvalue, abs=1e-6)

    rng = np.random.default_rng(19)
    for _ in range(20):
        a = rng.normal(rng.random() * 3, rng.random() + 0.1,
                       int(rng.integers(2, 30)))
        b = rng.normal(rng.random() * 3, rng.random() + 0.1,
                       int(rng.integers(2, 30)))
        t, p = MO.welch_t_test(a, b)
        ref = scipy.stats.ttest_ind(a, b, equal_var=False)
        assert t == pytest.approx(ref.statistic, rel=1e-10)
        assert p == pytest.approx(ref.pvalue, abs=1e-6)


def test_welch_degenerate_variance():
    assert MO.welch_t_test([2.0, 2.0], [2.0, 2.0]) == (0.0, 1.0)
    t, p = MO.welch_t_test([2.0, 2.0], [3.0, 3.0])
    assert t == -np.inf and p == 0.0
    with pytest.raises(ValueError):
        MO.welch_t_test([1.0], [1.0, 2.0])


def test_percent_difference_formula():
    assert MO.percent_difference(3.65, 1.28) == pytest.approx(64.93, abs=0.01)
    assert MO.percent_difference(2.0, 3.0) == -50.0
    with pytest.raises(ValueError):
        MO.percent_difference(0.0, 1.0)


def test_accuracy_formula():
    assert MO.accuracy(2.5, 2.5) == 100.0
    assert MO.accuracy(1.28, 2.17) == pytest.approx(30.47, abs=0.01)
    assert MO.accuracy(3.65, 3.89) == pytest.approx(93.42, abs=0.01)
    assert MO.accuracy(1.0, 3.0) == -100.0
    with pytest.raises(ValueError):
        MO.accuracy(0.0, 1.0)


def test_tubular_vs_punctate_lengths_separate():
    labels = blank_labels(40, 40)
    tubes, dots = [], []
    for k in range(6):
        m = np.zeros((40, 40), bool)
        m[3 * k + 1, 2:13 + k] = True
        tubes.append(MO.compute_features(obj_from_mask(m), labels, 0.21))
        m = np.zeros((40, 40), bool)
        m[3 * k + 2, 30:32] = True
        m[3 * k + 3, 30:32] = True
        dots.append(MO.compute_features(obj_from_mask(m), labels, 0.21))
    t, p = MO.welch_t_test([f.length for f in tubes],
                           [f.length for f in dots])
    assert np.mean([f.length for f in tubes]) > np.mean(
        [f.length for f in dots])
    assert p < 0.01
