import json

import numpy as np
import pytest
from PIL import Image

from roitrack import io
from roitrack.cli import main
from roitrack.synthbench import textured_image


@pytest.fixture(scope="module")
def source_png(tmp_path_factory):
    p = tmp_path_factory.mktemp("src") / "source.png"
    Image.fromarray(textured_image(seed=6, width=160, height=120)).save(p)
    return p


def synth(out, source, *extra):
    args = ["synth", "--source", str(source), "--out", str(out), "--seed", "3", "--frames", "6", "--rois", "4"]
    return main(args + list(extra))


def test_zero_motion_pipeline(tmp_path, source_png):
    d = tmp_path / "sc"
    still = ["--shear", "0", "--scale-min", "1", "--scale-max", "1", "--step", "0"]
    assert synth(d, source_png, *still) == 0
    assert len(list((d / "frames").glob("*.png"))) == 6
    tracks, metrics = tmp_path / "tracks.csv", tmp_path / "metrics.csv"
    assert main(["track", "--frames", str(d / "frames"), "--rois", str(d / "rois.csv"),
                 "--method", "median", "--out", str(tracks)]) == 0
    assert main(["eval", "--tracks", str(tracks), "--truth", str(d / "truth.csv"), "--out", str(metrics)]) == 0
    summary = json.loads(io.summary_path(metrics).read_text())
    assert summary["jaccard_q25"] == summary["jaccard_mean"] == 1.0
    rows = metrics.read_text().splitlines()
    assert rows[0] == "frame,id,jaccard" and len(rows) == 1 + 6 * 4
    assert all(r.endswith(",1.000000") for r in rows[1:])


def test_track_with_intensity_and_overlay(tmp_path, source_png):
    d = tmp_path / "sc"
    assert synth(d, source_png) == 0
    data = tmp_path / "data"
    io.write_frames([np.full((120, 160), 77, np.uint8)] * 6, data)
    out = tmp_path / "tracks.csv"
    rc = main(["track", "--frames", str(d / "frames"), "--rois", str(d / "rois.csv"), "--method", "affine",
               "--out", str(out), "--data-frames", str(data), "--intensity", str(tmp_path / "i.csv"),
               "--overlay", str(tmp_path / "ov"), "--seedless"])
    assert rc == 0
    lines = (tmp_path / "i.csv").read_text().splitlines()
    assert lines[0] == "frame,id,mean"
    assert {ln.split(",")[2] for ln in lines[1:]} <= {"77.000000", "nan"}
    assert len(list((tmp_path / "ov").glob("overlay_*.png"))) == 6
    timing = json.loads(io.timing_path(out).read_text())
    assert timing["steps"] == 5


def test_extract_command(tmp_path, source_png):
    d = tmp_path / "sc"
    assert synth(d, source_png) == 0
    tracks = tmp_path / "t.csv"
    assert main(["track", "--frames", str(d / "frames"), "--rois", str(d / "rois.csv"), "--out", str(tracks)]) == 0
    assert main(["extract", "--frames", str(d / "frames"), "--tracks", str(tracks), "--out", str(tmp_path / "x.csv")]) == 0
    assert (tmp_path / "x.csv").read_text().startswith("frame,id,mean_c0,mean_c1,mean_c2\n")


def test_roi_outside_frame_is_data_error(tmp_path, source_png, capsys):
    io.write_frames([textured_image(width=160, height=120)] * 2, tmp_path / "f")
    rois = tmp_path / "r.csv"
    rois.write_text("id,x,y,w,h\n3,10,10,20,20\n42,150,10,20,20\n")
    rc = main(["track", "--frames", str(tmp_path / "f"), "--rois", str(rois), "--out", str(tmp_path / "t.csv")])
    assert rc == 2
    assert "ROI 42" in capsys.readouterr().err
    assert not (tmp_path / "t.csv").exists()


def test_missing_input_is_data_error(tmp_path, capsys):
    rc = main(["track", "--frames", str(tmp_path / "nope"), "--rois", "r.csv", "--out", str(tmp_path / "t.csv")])
    assert rc == 2
    assert "nope" in capsys.readouterr().err


@pytest.mark.parametrize(
    "argv",
    [
        ["track", "--bogus"],
        ["frobnicate"],
        [],
        ["synth", "--source", "x.png", "--out", "o", "--seed", "1", "--rotation-max", "7"],
        ["track", "--frames", "f", "--rois", "r", "--out", "o", "--data-frames", "d"],
    ],
)
def test_usage_errors(argv, capsys):
    assert main(argv) == 1
    err = capsys.readouterr().err
    assert "usage" in err or "requires" in err


def test_synth_is_deterministic(tmp_path, source_png):
    assert synth(tmp_path / "a", source_png, "--reflections", "10") == 0
    assert synth(tmp_path / "b", source_png, "--reflections", "10") == 0
    for name in ("truth.csv", "rois.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    for fa in sorted((tmp_path / "a" / "frames").iterdir()):
        assert fa.read_bytes() == (tmp_path / "b" / "frames" / fa.name).read_bytes()


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "track" in capsys.readouterr().out
