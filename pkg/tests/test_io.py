import json
import math

import numpy as np
import pytest
from PIL import Image

from oracles import point_in_rect
from roitrack import io
from roitrack.geometry import Roi
from roitrack.synthbench import MotionBounds, generate_scenario, textured_image
from roitrack.tracker import Trajectory


def traj_of(boxes, ids=(1,)):
    return Trajectory(tuple(ids), np.asarray(boxes, float))


# -- frames ------------------------------------------------------------------


def test_frame_directory_order_and_round_trip(tmp_path, rng):
    frames = [rng.integers(0, 256, (36, 48, 3), dtype=np.uint8) for _ in range(50)]
    io.write_frames(frames, tmp_path / "f")
    src = io.read_frames(tmp_path / "f")
    assert len(src) == 50 and src.shape == (36, 48, 3)
    for a, b in zip(frames, src):
        np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(src[-1], frames[-1])


def test_grayscale_pgm_round_trip(tmp_path, noise256):
    io.write_frames([noise256, noise256[::-1]], tmp_path, suffix=".pgm")
    src = io.read_frames(tmp_path)
    assert src.channels == 1
    np.testing.assert_array_equal(src[1], noise256[::-1])


def test_mixed_dimensions_named(tmp_path):
    Image.fromarray(np.zeros((360, 480), np.uint8)).save(tmp_path / "a_000.png")
    Image.fromarray(np.zeros((480, 640), np.uint8)).save(tmp_path / "a_001.png")
    with pytest.raises(io.DataError, match="a_000.png.*a_001.png"):
        io.read_frames(tmp_path)


def test_empty_directory(tmp_path):
    with pytest.raises(io.DataError, match="no PNG"):
        io.read_frames(tmp_path)


def test_unreadable_file_named(tmp_path):
    (tmp_path / "frame_000000.png").write_bytes(b"not an image")
    with pytest.raises(io.DataError, match="frame_000000.png"):
        io.read_frames(tmp_path)


def test_expected_dimensions(tmp_path):
    io.write_frames([np.zeros((10, 12), np.uint8)], tmp_path)
    with pytest.raises(io.DataError, match="expected"):
        io.read_frames(tmp_path, expect=(12, 10))


def test_raw_stream_round_trip(tmp_path, rng):
    frames = [rng.integers(0, 256, (20, 30, 3), dtype=np.uint8) for _ in range(7)]
    p = io.write_raw(frames, tmp_path / "seq.raw")
    meta = json.loads((tmp_path / "seq.raw.json").read_text())
    assert (meta["width"], meta["height"], meta["channels"], meta["frames"]) == (30, 20, 3, 7)
    src = io.read_frames(p)
    assert len(src) == 7
    for a, b in zip(frames, src):
        np.testing.assert_array_equal(a, b)


def test_raw_stream_size_check(tmp_path):
    p = io.write_raw([np.zeros((4, 4), np.uint8)] * 2, tmp_path / "s.raw")
    p.write_bytes(b"\0" * 5)
    with pytest.raises(io.DataError, match="bytes"):
        io.read_frames(p)


# -- CSV ---------------------------------------------------------------------


def test_write_tracks_single_row(tmp_path):
    p = tmp_path / "t.csv"
    io.write_tracks(traj_of([[[10, 20, 30, 40]]]), p)
    assert p.read_text() == "frame,id,x,y,w,h\n0,1,10.000,20.000,30.000,40.000\n"


def test_write_tracks_lost_row(tmp_path):
    boxes = [[[1, 2, 3, 4]]] * 5 + [[[np.nan] * 4]]
    p = tmp_path / "t.csv"
    io.write_tracks(traj_of(boxes), p)
    assert p.read_text().splitlines()[-1] == "5,1,nan,nan,nan,nan"


def test_tracks_sorted_by_frame_then_id(tmp_path):
    p = tmp_path / "t.csv"
    io.write_tracks(traj_of(np.ones((2, 3, 4)), ids=(9, 2, 5)), p)
    keys = [tuple(map(int, line.split(",")[:2])) for line in p.read_text().splitlines()[1:]]
    assert keys == sorted(keys) and len(keys) == 6


def test_read_tracks_rejects_missing_row(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("frame,id,x,y,w,h\n0,1,1,1,1,1\n0,2,1,1,1,1\n1,1,1,1,1,1\n")
    with pytest.raises(io.DataError, match="missing"):
        io.read_tracks(p)


def test_rois_round_trip_and_validation(tmp_path):
    rois = [Roi(1, 10, 20, 30, 40), Roi(4, 0, 0, 5, 5)]
    p = tmp_path / "r.csv"
    io.write_rois(rois, p)
    assert io.read_rois(p) == rois
    p.write_text("id,x,y,w,h\n1,0,0,5,5\n1,3,3,5,5\n")
    with pytest.raises(io.DataError, match="duplicate"):
        io.read_rois(p)
    p.write_text("id,x,y,w,h\n1,0,0,5.5,5\n")
    with pytest.raises(io.DataError, match="integers"):
        io.read_rois(p)
    p.write_text("x,y\n")
    with pytest.raises(io.DataError, match="header"):
        io.read_rois(p)


def test_truth_round_trip_exact(tmp_path):
    sc = generate_scenario(textured_image(seed=2, width=160, height=120),
                           MotionBounds(n_frames=6, n_rois=3, max_rotation_deg=5), seed=4)
    p = tmp_path / "truth.csv"
    io.write_truth(sc.truth, p)
    back = io.read_truth(p)
    assert p.read_text().startswith("frame,id,x0,y0,x1,y1,x2,y2,x3,y3\n")
    assert back.ids == sc.truth.ids
    for qa, qb in zip(sc.truth.quads, back.quads):
        assert qa == qb


def test_csv_uses_newline_only(tmp_path):
    p = tmp_path / "t.csv"
    io.write_tracks(traj_of([[[1, 2, 3, 4]]] * 3), p)
    assert b"\r" not in p.read_bytes()


# -- intensity ---------------------------------------------------------------


def test_intensity_constant():
    recs = io.extract_intensity([np.full((50, 60), 100, np.uint8)], traj_of([[[3.3, 4.7, 20, 11]]]))
    assert recs[0].mean == (100.0,)


def test_intensity_half_split():
    f = np.zeros((40, 40), np.uint8)
    f[:, 20:] = 200
    recs = io.extract_intensity([f], traj_of([[[10, 5, 20, 10]]]))
    assert recs[0].mean == (100.0,)


def test_intensity_lost_is_nan():
    recs = io.extract_intensity([np.zeros((10, 10), np.uint8)] * 2, traj_of([[[1, 1, 3, 3]], [[np.nan] * 4]]))
    assert not math.isnan(recs[0].mean[0]) and math.isnan(recs[1].mean[0])


def test_intensity_matches_bruteforce(rng):
    f = rng.integers(0, 256, (60, 80, 3), dtype=np.uint8)
    for _ in range(50):
        box = (rng.uniform(-10, 70), rng.uniform(-10, 50), rng.uniform(1, 30), rng.uniform(1, 30))
        vals = [f[j, i].astype(float) for j in range(60) for i in range(80)
                if point_in_rect(i + 0.5, j + 0.5, *box)]
        rec = io.extract_intensity([f], traj_of([[box]]))[0]
        if not vals:
            assert all(math.isnan(m) for m in rec.mean)
            continue
        expected = np.sum(vals, axis=0) / len(vals)
        assert rec.mean == pytest.approx(tuple(expected), abs=1e-9)


def test_intensity_count_mismatch():
    with pytest.raises(io.DataError, match="count"):
        io.extract_intensity([np.zeros((5, 5))], traj_of([[[0, 0, 2, 2]]] * 2))


def test_intensity_csv_headers(tmp_path):
    p = tmp_path / "i.csv"
    io.write_intensity([io.IntensityRecord(0, 1, (1.0, 2.0, 3.0))], p)
    assert p.read_text().splitlines()[0] == "frame,id,mean_c0,mean_c1,mean_c2"
    io.write_intensity([io.IntensityRecord(0, 1, (math.nan,))], p)
    assert p.read_text().splitlines() == ["frame,id,mean", "0,1,nan"]


# -- overlay -----------------------------------------------------------------


def reference_outline(x, y, w, h, width, height, t=2):
    mask = np.zeros((height, width), bool)
    for j in range(height):
        for i in range(width):
            if point_in_rect(i + 0.5, j + 0.5, x, y, w, h):
                inner = point_in_rect(i + 0.5, j + 0.5, x + t, y + t, w - 2 * t, h - 2 * t)
                mask[j, i] = not inner
    return mask


def test_overlay_outline_pixels_only():
    frame = np.zeros((60, 60, 3), np.uint8)
    out = io.draw_rois(frame, [Roi(1, 10, 10, 20, 20)], labels=False)
    diff = (out != frame).any(axis=2)
    np.testing.assert_array_equal(diff, reference_outline(10, 10, 20, 20, 60, 60))
    assert tuple(out[10, 10]) == io.roi_color(1)


def test_overlay_label_outside_outline():
    frame = np.zeros((60, 60, 3), np.uint8)
    r = Roi(7, 10, 10, 20, 20)
    diff = (io.draw_rois(frame, [r]) != frame).any(axis=2)
    label = io.label_mask("7", *io.label_origin(r, 60), 60, 60)
    assert label.any() and not (label & reference_outline(10, 10, 20, 20, 60, 60)).any()
    np.testing.assert_array_equal(diff & ~label, reference_outline(10, 10, 20, 20, 60, 60))


def test_overlay_lost_not_drawn_and_deterministic(tmp_path):
    frames = [np.full((30, 40), 50, np.uint8)] * 2
    traj = traj_of([[[5, 5, 10, 10]], [[np.nan] * 4]])
    paths = io.render_overlay(frames, traj, tmp_path / "a")
    io.render_overlay(frames, traj, tmp_path / "b")
    second = np.asarray(Image.open(paths[1]))
    assert (second == 50).all()
    for name in ("overlay_000000.png", "overlay_000001.png"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_palette_cycles():
    assert io.roi_color(3) == io.roi_color(3 + len(io.PALETTE))


def test_prefetching_iteration_matches_inline(tmp_path, rng, monkeypatch):
    frames = [rng.integers(0, 256, (12, 16), dtype=np.uint8) for _ in range(9)]
    io.write_frames(frames, tmp_path)
    monkeypatch.setattr(io, "_usable_cpus", lambda: 4)
    for a, b in zip(frames, io.read_frames(tmp_path)):
        np.testing.assert_array_equal(a, b)
