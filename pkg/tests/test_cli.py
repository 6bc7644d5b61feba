import json

import numpy as np
import pytest

from greenseg.classifier import load_model
from greenseg.cli import main
from greenseg.core_io import read_feature_file, read_labels, read_room_file, write_room_file
from greenseg.extractor import StandardizationParams
from greenseg.synthetic import make_rooms


@pytest.fixture(scope="module")
def rooms_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("rooms")
    rooms = make_rooms(6, seed=2, density=50)
    for i, room in enumerate(rooms):
        area = root / f"Area_{i // 2 + 1}"
        area.mkdir(exist_ok=True)
        write_room_file(room, area / f"{room.unit_id}.txt")
    return root


def run(*argv):
    assert main([str(a) for a in argv]) == 0


def test_room_pipeline_via_cli(rooms_dir, tmp_path, capsys):
    units, attrs, feats = tmp_path / "units", tmp_path / "attrs", tmp_path / "feats"
    run("preprocess", "--style", "room", "--grid", 0.2, "--test-area", 3, "--seed", 1, "--in", rooms_dir, "--out", units)
    manifest = json.loads((units / "manifest.json").read_text())
    assert len(manifest["units"]["train"]) == 4 and len(manifest["units"]["test"]) == 2

    run("stats", "--in", units)
    out = capsys.readouterr().out
    assert "room.train.unit_count=4" in out and "room.test.unit_count=2" in out

    run("attributes", "--in", units, "--out", attrs, "--k-local", 16)
    a = read_feature_file(next((attrs / "train").glob("*.feat")))
    assert a.shape[1] == 21

    params = tmp_path / "params.txt"
    run("extract", "--in", attrs, "--out", feats, "--precision", "f16", "--seed", 3, "--params", params)
    assert StandardizationParams.load(params).parameter_count == 8
    f = read_feature_file(next((feats / "test").glob("*.feat")))
    assert f.shape[1] == 205 and f.dtype == np.float16

    # a second run loads the stored statistics and reproduces the features
    feats2 = tmp_path / "feats2"
    run("extract", "--in", attrs, "--out", feats2, "--precision", "f16", "--seed", 3, "--params", params)
    for p in (feats / "test").glob("*.feat"):
        assert p.read_bytes() == (feats2 / "test" / p.name).read_bytes()

    model = tmp_path / "model.gsip"
    run("train", "--features", feats, "--out", model, "--trees", 26, "--max-depth", 6, "--seed", 0, "--allow-absent-classes")
    assert len(load_model(model).trees) == 26

    preds = tmp_path / "preds"
    run("predict", "--model", model, "--features", feats, "--out", preds)
    assert len(list(preds.glob("*.labels"))) == 2

    report, js = tmp_path / "report.txt", tmp_path / "report.json"
    run("eval", "--pred", preds, "--truth", feats, "--report", report, "--json", js)
    payload = json.loads(js.read_text())
    assert 0 <= payload["miou"] <= 1 and payload["oa"] > 0.5
    assert "mIoU" in report.read_text()

    unit_file = next((units / "test").glob("*.txt"))
    colored = tmp_path / "colored.txt"
    run("visualize", "--in", unit_file, "--out", colored, "--labels", preds / f"{unit_file.stem}.labels", "--drop-class", "ceiling")
    pred_labels = read_labels(preds / f"{unit_file.stem}.labels")
    back = read_room_file(colored)
    assert len(back) == int((pred_labels != 0).sum())


def test_block_and_view_styles(rooms_dir, tmp_path, capsys):
    run("preprocess", "--style", "block", "--points-per-unit", 64, "--test-area", 1, "--in", rooms_dir, "--out", tmp_path / "b")
    run("stats", "--in", tmp_path / "b")
    out = capsys.readouterr().out
    assert "block.train.min_size=64" in out and "block.train.max_size=64" in out
    run(
        "preprocess", "--style", "view", "--unit-size", 100, "--train-units", 5, "--test-units", 2,
        "--grid", 0.2, "--test-area", 2, "--in", rooms_dir, "--out", tmp_path / "v",
    )  # fmt: skip
    run("stats", "--in", tmp_path / "v")
    out = capsys.readouterr().out
    assert "view.train.unit_count=5" in out and "view.train.total_points=500" in out
    assert "view.test.unit_count=2" in out


def test_crossval_cli(rooms_dir, tmp_path, capsys):
    js = tmp_path / "cv.json"
    run("crossval", "--data", rooms_dir, "--folds", 2, "--grid", 0.25, "--trees", 13, "--json", js)
    payload = json.loads(js.read_text())
    assert len(payload["folds"]) == 2
    assert "mean: mIoU" in capsys.readouterr().out


def test_convert_cli(tmp_path):
    ann = tmp_path / "s3dis" / "Area_1" / "hallway_1" / "Annotations"
    ann.mkdir(parents=True)
    (ann / "floor_1.txt").write_text("0 0 0 1 2 3\n")
    run("convert", "--s3dis-root", tmp_path / "s3dis", "--out", tmp_path / "rooms")
    assert read_room_file(tmp_path / "rooms" / "Area_1" / "hallway_1.txt").labels.tolist() == [1]


def test_cli_error_exit_code(tmp_path, capsys):
    (tmp_path / "x.feat").write_bytes(b"nope")
    assert main(["predict", "--model", str(tmp_path / "x.feat"), "--features", str(tmp_path), "--out", str(tmp_path / "o")]) == 1
    assert "error" in capsys.readouterr().err
