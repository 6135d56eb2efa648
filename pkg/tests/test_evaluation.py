import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mia.classes import CLASS_NAMES
from mia.evaluation import (BUILTIN_MAPPINGS, KITTI360, NUSCENES, ClassMapping, EvalError,
                            aggregate_split, binarize, eval_window_slices, format_table,
                            masked_iou, remap_classes, write_report)
from oracles import iou_by_hand

# expected zero-shot mappings, source -> (NuScenes, KITTI360-BEV)
EXPECTED_MAPPING = {
    "Road": ("Drivable", "Road"),
    "Crossing": ("Crossing", None),
    "Sidewalk": ("Walkway", "Sidewalk"),
    "Building": (None, "Building"),
    "Parking": ("Carpark", None),
    "Terrain": (None, "Terrain"),
}


def rand_planes(rng, k=6, a=224, p=0.3):
    return rng.random((k, a, a)) < p


# ---- binarize


def test_threshold_is_inclusive():
    assert binarize(np.array([0.5]))[0]
    assert not binarize(np.array([0.49]))[0]
    assert not binarize(np.zeros((3, 4))).any()
    assert binarize(np.array([0.7]), threshold=0.7)[0]


@pytest.mark.parametrize("bad", [-0.1, 1.01, float("nan")])
def test_out_of_range_probabilities(bad):
    with pytest.raises(EvalError):
        binarize(np.array([0.2, bad]))


# ---- mapping


def test_builtin_mappings_match_expected_table():
    for src, (nus, kitti) in EXPECTED_MAPPING.items():
        assert NUSCENES.target_of(src) == nus
        assert KITTI360.target_of(src) == kitti
    assert set(NUSCENES.sources) == set(CLASS_NAMES) == set(KITTI360.sources)


def test_nuscenes_remap():
    rng = np.random.default_rng(0)
    planes = rand_planes(rng, a=8)
    out, names = remap_classes(planes, CLASS_NAMES, NUSCENES)
    assert set(names) == {"Drivable", "Crossing", "Walkway", "Carpark"}
    for n, plane in zip(names, out):
        src = next(s for s, (t, _) in EXPECTED_MAPPING.items() if t == n)
        assert np.array_equal(plane, planes[CLASS_NAMES.index(src)])


def test_identity_remap_is_bit_identical():
    planes = rand_planes(np.random.default_rng(1), a=16)
    out, names = remap_classes(planes, CLASS_NAMES, BUILTIN_MAPPINGS["identity"])
    assert names == list(CLASS_NAMES) and np.array_equal(out, planes)


@pytest.mark.parametrize("mapping", [NUSCENES, KITTI360])
def test_inverse_mapping_restores_mapped_planes(mapping):
    planes = rand_planes(np.random.default_rng(2), a=16)
    out, names = remap_classes(planes, CLASS_NAMES, mapping)
    back, back_names = remap_classes(out, names, mapping.inverse())
    for n, plane in zip(back_names, back):
        assert np.array_equal(plane, planes[CLASS_NAMES.index(n)])
    assert set(back_names) == {s for s, t in mapping.pairs if t is not None}


def test_mapping_errors():
    with pytest.raises(EvalError):
        ClassMapping("bad", (("Road", "X"), ("Sidewalk", "X")))
    with pytest.raises(EvalError):
        remap_classes(np.zeros((1, 4, 4), bool), ["Lanes"], NUSCENES)
    with pytest.raises(EvalError):
        remap_classes(np.zeros((2, 4, 4), bool), ["Road"], NUSCENES)
    m = ClassMapping.from_dict(NUSCENES.to_dict())
    assert m == NUSCENES


# ---- IoU


def test_eval_window_is_forward_100_px():
    rs, cs = eval_window_slices(224, 0.5)
    assert (rs.start, rs.stop, cs.start, cs.stop) == (12, 112, 62, 162)
    assert eval_window_slices(100, 0.5) == (slice(0, 100), slice(0, 100))
    with pytest.raises(EvalError):
        eval_window_slices(64, 0.5)


def test_identical_prediction_scores_one():
    gt = rand_planes(np.random.default_rng(3))
    rep = masked_iou(gt, gt, None, CLASS_NAMES)
    assert all(v == 1.0 for v in rep.iou().values())
    assert rep.macro() == 1.0 and rep.avg_rs() == 1.0


def test_disjoint_scores_zero():
    gt = np.zeros((6, 224, 224), bool)
    pred = np.zeros_like(gt)
    gt[0, 20:40, 70:90] = True
    pred[0, 60:80, 70:90] = True
    assert masked_iou(pred, gt, None, CLASS_NAMES).iou()["Road"] == 0.0


def test_equal_false_positive_halves_iou():
    gt = np.zeros((6, 224, 224), bool)
    gt[2, 20:40, 70:90] = True
    pred = gt.copy()
    pred[2, 50:70, 70:90] = True
    assert masked_iou(pred, gt, None, CLASS_NAMES).iou()["Sidewalk"] == 0.5


def test_only_window_and_visible_pixels_count():
    gt = np.zeros((6, 224, 224), bool)
    pred = np.zeros_like(gt)
    pred[0, 150:200, :] = True  # behind the ego: outside the window
    gt[0, 20:30, 70:80] = True
    pred[0, 20:30, 70:80] = True
    assert masked_iou(pred, gt, None, CLASS_NAMES).iou()["Road"] == 1.0
    mask = np.ones((224, 224), bool)
    mask[20:30, 70:80] = False
    assert masked_iou(pred, gt, mask, CLASS_NAMES).iou()["Road"] is None


def test_matches_pixel_loop_oracle():
    rng = np.random.default_rng(4)
    pred, gt = rand_planes(rng), rand_planes(rng)
    mask = rng.random((224, 224)) < 0.6
    rep = masked_iou(pred, gt, mask, CLASS_NAMES)
    rs, cs = eval_window_slices(224, 0.5)
    for k in range(6):
        i, u = iou_by_hand(pred[k, rs, cs], gt[k, rs, cs], mask[rs, cs])
        assert (rep.intersection[k], rep.union[k]) == (i, u)


def test_absent_class_is_excluded_but_missed_class_is_zero():
    gt = np.zeros((6, 224, 224), bool)
    pred = np.zeros_like(gt)
    gt[0, 20:40, 70:90] = pred[0, 20:40, 70:90] = True
    gt[4, 20:40, 100:120] = True  # building missed entirely
    rep = masked_iou(pred, gt, None, CLASS_NAMES)
    ious = rep.iou()
    assert ious["Building"] == 0.0 and ious["Terrain"] is None
    assert rep.macro() == pytest.approx(0.5)


def test_resolution_and_shape_errors():
    gt = np.zeros((6, 224, 224), bool)
    with pytest.raises(EvalError):
        masked_iou(gt, gt, None, CLASS_NAMES, rho=1.0)
    with pytest.raises(EvalError):
        masked_iou(gt[:, :100], gt, None, CLASS_NAMES)
    with pytest.raises(EvalError):
        masked_iou(gt, gt, np.ones((10, 10)), CLASS_NAMES)


@settings(max_examples=30)
@given(st.integers(0, 2**16))
def test_iou_symmetric_bounded_and_mask_local(seed):
    rng = np.random.default_rng(seed)
    a, b = rand_planes(rng, a=100), rand_planes(rng, a=100)
    mask = rng.random((100, 100)) < 0.7
    ab = masked_iou(a, b, mask, CLASS_NAMES).iou()
    ba = masked_iou(b, a, mask, CLASS_NAMES).iou()
    assert ab == ba
    assert all(v is None or 0 <= v <= 1 for v in ab.values())
    empty = masked_iou(a, b, np.zeros((100, 100), bool), CLASS_NAMES)
    assert all(v is None for v in empty.iou().values())
    # shrinking the mask only removes the dropped pixels' contribution
    shrink = mask & (rng.random((100, 100)) < 0.5)
    full = masked_iou(a, b, mask, CLASS_NAMES)
    part = masked_iou(a, b, shrink, CLASS_NAMES)
    gone = masked_iou(a, b, mask & ~shrink, CLASS_NAMES)
    assert np.array_equal(part.intersection + gone.intersection, full.intersection)
    assert np.array_equal(part.union + gone.union, full.union)


# ---- aggregation and reports


def test_aggregation_sums_counts():
    gt = np.zeros((6, 224, 224), bool)
    one = masked_iou(gt, gt, None, CLASS_NAMES)
    assert aggregate_split([one]).to_dict() == one.to_dict()
    x = masked_iou(gt, gt, None, CLASS_NAMES)
    x.intersection[0], x.union[0] = 1, 2
    y = masked_iou(gt, gt, None, CLASS_NAMES)
    y.intersection[0], y.union[0] = 1, 2
    z = masked_iou(gt, gt, None, CLASS_NAMES)
    z.intersection[0], z.union[0] = 0, 100
    assert aggregate_split([x, y]).iou()["Road"] == 0.5
    assert aggregate_split([x, z]).iou()["Road"] == pytest.approx(1 / 102)
    with pytest.raises(EvalError):
        aggregate_split([])


def test_report_file_and_table(tmp_path):
    rng = np.random.default_rng(6)
    reps = []
    for _ in range(3):
        gt = rand_planes(rng)
        pred = gt ^ (rng.random(gt.shape) < 0.1)
        planes, names = remap_classes(pred, CLASS_NAMES, NUSCENES)
        gplanes, _ = remap_classes(gt, CLASS_NAMES, NUSCENES)
        reps.append(masked_iou(planes, gplanes, None, names,
                               road_sidewalk=("Drivable", "Walkway")))
    agg = aggregate_split(reps)
    write_report(agg, tmp_path / "report.json")
    import json

    doc = json.loads((tmp_path / "report.json").read_text())
    assert set(doc) == {"classes", "macro", "avg_rs", "image_count"}
    assert doc["image_count"] == 3
    assert set(doc["classes"]) == {"Drivable", "Crossing", "Walkway", "Carpark"}
    for c, v in doc["classes"].items():
        assert v["iou"] == pytest.approx(v["intersection"] / v["union"])
    assert doc["avg_rs"] == pytest.approx((doc["classes"]["Drivable"]["iou"] +
                                           doc["classes"]["Walkway"]["iou"]) / 2)
    table = format_table(agg, "fixture").splitlines()
    assert [h.strip() for h in table[0].split("|")[-2:]] == ["Avg{R,S}", "Macro"]
    assert table[2].split("|")[-1].strip() == f"{100 * doc['macro']:.2f}"
