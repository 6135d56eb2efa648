import json
import math
from collections import Counter, defaultdict

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mia.dataset import (FIELD_NAMES, SPLITS, ManifestError, ManifestRecord, SplitError,
                         coverage_km2, dumps_manifest, loads_manifest, read_manifest,
                         split_geographic, write_manifest)
from oracles import lens_union_area, monte_carlo_union_area

E0, N0 = 584_000.0, 4_477_000.0


def skewed_points(n=10_000, seed=0):
    """Clustered poses: a few dense downtown cells and a long sparse tail."""
    rng = np.random.default_rng(seed)
    hubs = rng.uniform(0, 20_000, (25, 2))
    weights = rng.pareto(1.5, 25) + 0.1
    weights /= weights.sum()
    which = rng.choice(25, n, p=weights)
    pts = hubs[which] + rng.normal(0, 900, (n, 2))
    return [(E0 + x, N0 + y, 17) for x, y in pts]


def audit(points, assignment):
    by_cell = defaultdict(set)
    per_split = Counter()
    for e, n, z in points:
        cell = (int(z), math.floor(e / assignment.cell_m), math.floor(n / assignment.cell_m))
        split = assignment.cells[cell]
        by_cell[cell].add(split)
        per_split[split] += 1
    return by_cell, per_split


def test_skewed_distribution_hits_ratios_and_stays_disjoint():
    pts = skewed_points()
    a = split_geographic(pts)
    by_cell, per_split = audit(pts, a)
    assert len(by_cell) >= 50
    assert all(len(s) == 1 for s in by_cell.values())
    assert set(a.cells.values()) == set(SPLITS)
    for split, target in zip(SPLITS, (0.8, 0.1, 0.1)):
        assert per_split[split] / len(pts) == pytest.approx(target, abs=0.02)


def test_equal_cells_split_exactly():
    pts = [(E0 + 500 * i + 250, N0 + 250, 17) for i in range(100) for _ in range(7)]
    a = split_geographic(pts)
    assert Counter(a.cells.values()) == {"train": 80, "val": 10, "test": 10}


def test_single_cell_cannot_be_split():
    with pytest.raises(SplitError):
        split_geographic([(E0 + 1, N0 + 1, 17), (E0 + 2, N0 + 3, 17)])
    with pytest.raises(SplitError):
        split_geographic([(E0, N0, 17)] * 3, ratios=(0.5, 0.5, 0.5))


def test_split_is_seed_deterministic():
    pts = skewed_points(2000, seed=3)
    assert split_geographic(pts, seed=4).cells == split_geographic(pts, seed=4).cells


def test_zones_never_share_cells():
    pts = [(E0 + 10, N0 + 10, 17), (E0 + 10, N0 + 10, 18), (E0 + 900, N0, 17)]
    a = split_geographic(pts, ratios=(0.34, 0.33, 0.33))
    assert len(a.cells) == 3


# ---- coverage


def test_single_pose_is_one_disk():
    assert coverage_km2([(E0, N0)]) == pytest.approx(math.pi * 112**2 / 1e6, rel=0.005)
    assert coverage_km2([(E0, N0)]) == pytest.approx(0.03941, rel=0.005)


def test_far_apart_poses_double():
    assert coverage_km2([(E0, N0), (E0 + 300, N0)]) == pytest.approx(
        2 * math.pi * 112**2 / 1e6, rel=0.005)


def test_overlapping_poses_match_lens_formula():
    got = coverage_km2([(E0, N0), (E0 + 100, N0)])
    assert got == pytest.approx(lens_union_area(112, 100) / 1e6, rel=0.005)
    assert got == pytest.approx(
        monte_carlo_union_area([(0, 0), (100, 0)], 112) / 1e6, rel=0.01)


def test_many_poses_match_monte_carlo():
    rng = np.random.default_rng(2)
    pts = rng.uniform(0, 600, (12, 2))
    got = coverage_km2(pts + [E0, N0])
    assert got == pytest.approx(monte_carlo_union_area(pts, 112, n=1_000_000) / 1e6, rel=0.01)


def test_coverage_edge_cases():
    assert coverage_km2([]) == 0.0
    with pytest.raises(ValueError):
        coverage_km2([(0, 0)], radius_m=0)


@settings(max_examples=25)
@given(st.lists(st.tuples(st.floats(0, 800), st.floats(0, 800)), min_size=1, max_size=6),
       st.tuples(st.floats(-200, 1000), st.floats(-200, 1000)))
def test_adding_a_pose_never_shrinks_coverage(pts, extra):
    base = [(E0 + x, N0 + y) for x, y in pts]
    assert coverage_km2(base + [(E0 + extra[0], N0 + extra[1])]) >= coverage_km2(base)


# ---- manifest


def record(i, split="train", **kw):
    base = dict(id=f"img{i:04d}", sequence_id="s1", lat=40.44 + i * 1e-5, lon=-80.0,
                utm_easting=E0 + i, utm_northing=N0, utm_zone=17, utm_hemisphere="N",
                heading=12.5, captured_at=1_600_000_000_000 + i, camera_model="gopromax",
                camera_type="fisheye", focal=0.5, image_width=2048, image_height=1536,
                split=split, fpv_path=f"pgh/fpv/img{i:04d}.png",
                bev_path=f"pgh/bev/img{i:04d}_bev.png", mask_path=f"pgh/mask/img{i:04d}_vis.png")
    base.update(kw)
    return ManifestRecord(**base)


def test_round_trip_is_bit_identical(tmp_path):
    recs = [record(i, SPLITS[i % 3]) for i in (5, 1, 3)] + [record(9, focal=None, lat=1 / 3)]
    path = tmp_path / "manifest.jsonl"
    write_manifest(path, recs)
    back = read_manifest(path)
    assert [r.id for r in back] == sorted(r.id for r in recs)
    assert back == sorted(recs, key=lambda r: r.id)
    assert dumps_manifest(back) == path.read_text()
    assert list(json.loads(path.read_text().splitlines()[1])) == list(FIELD_NAMES)


def test_empty_manifest_round_trip():
    assert loads_manifest(dumps_manifest([])) == []


def test_duplicate_ids_rejected():
    text = dumps_manifest([record(1)])
    dup = text + text.splitlines()[1] + "\n"
    with pytest.raises(ManifestError, match="duplicate"):
        loads_manifest(dup)
    with pytest.raises(ManifestError):
        dumps_manifest([record(1), record(1)])


def test_version_mismatch_rejected():
    text = dumps_manifest([record(1)])
    header = json.loads(text.splitlines()[0])
    header["version"] = 99
    bad = json.dumps(header) + "\n" + text.split("\n", 1)[1]
    with pytest.raises(ManifestError, match="version"):
        loads_manifest(bad)
    with pytest.raises(ManifestError):
        loads_manifest("")
    with pytest.raises(ManifestError):
        dumps_manifest([record(1, split="holdout")])


def test_fixture_manifest_round_trips(tmp_path):
    from mia.cli import main

    out = tmp_path / "data"
    assert main(["curate", "--fixtures", "mini-city", "--output-root", str(out),
                 "--workers", "2"]) == 0
    [path] = list(out.glob("*/manifest.jsonl"))
    text = path.read_text()
    assert dumps_manifest(loads_manifest(text)) == text
