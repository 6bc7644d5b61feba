import os

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from greenseg.core_io import (
    CLASS_NAMES,
    PointCloud,
    UnitSet,
    convert_s3dis,
    load_rooms_by_area,
    parse_room_lines,
    read_feature_file,
    read_room_file,
    s3dis_label,
    write_feature_file,
    write_room_file,
)
from greenseg.errors import ArgumentError, EmptyInputError, FormatError, ParseError, StateError


def _cloud(n=4, attrs=None):
    rng = np.random.default_rng(0)
    return PointCloud(rng.random((n, 3)), rng.integers(0, 256, (n, 3)), attributes=attrs)


def test_class_table_order():
    assert CLASS_NAMES == (
        "ceiling", "floor", "wall", "beam", "column", "window", "door",
        "table", "chair", "sofa", "bookcase", "board", "clutter",
    )  # fmt: skip


def test_single_line_maps_fields(tmp_path):
    f = tmp_path / "room.txt"
    f.write_text("1.0 2.0 3.0 255 0 0 2\n")
    cloud = read_room_file(f)
    assert len(cloud) == 1
    np.testing.assert_array_equal(cloud.positions[0], [1, 2, 3])
    np.testing.assert_array_equal(cloud.colors[0], [255, 0, 0])
    assert cloud.labels[0] == 2 and CLASS_NAMES[2] == "wall"
    assert cloud.unit_id == "room"


def test_order_preserved(tmp_path):
    f = tmp_path / "r.txt"
    f.write_text("0 0 0 1 2 3\n\n5 5 5 4 5 6\n-1 2.5 3 7 8 9\n")
    cloud = read_room_file(f)
    assert len(cloud) == 3
    assert cloud.labels is None
    np.testing.assert_array_equal(cloud.positions[:, 0], [0, 5, -1])
    np.testing.assert_array_equal(cloud.colors[2], [7, 8, 9])


@pytest.mark.parametrize(
    "text, line_no",
    [
        ("0 0 0 1 2 3 1\n0 0 0 1 2 3\n", 2),  # mixed 6/7 fields
        ("0 0 0 1 2\n", 1),
        ("0 0 0 1 2 3\n0 x 0 1 2 3\n", 2),
        ("0 0 0 1 2 3\n0 0 0 256 2 3\n", 2),
        ("0 0 0 1 2 3 13\n", 1),
        ("0 0 0 1 2 3 1.5\n", 1),
    ],
)
def test_malformed_lines_name_line(text, line_no):
    with pytest.raises(ParseError) as err:
        parse_room_lines(text.splitlines())
    assert err.value.line_no == line_no
    assert f"line {line_no}" in str(err.value)


def test_empty_file(tmp_path):
    f = tmp_path / "e.txt"
    f.write_text("\n  \n")
    with pytest.raises(EmptyInputError):
        read_room_file(f)


def test_room_file_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    cloud = PointCloud(rng.normal(size=(20, 3)), rng.integers(0, 256, (20, 3)), rng.integers(0, 13, 20), unit_id="a")
    write_room_file(cloud, tmp_path / "a.txt")
    back = read_room_file(tmp_path / "a.txt")
    np.testing.assert_array_equal(back.positions, cloud.positions)
    np.testing.assert_array_equal(back.colors, cloud.colors)
    np.testing.assert_array_equal(back.labels, cloud.labels)


def test_point_cloud_invariants():
    with pytest.raises(ArgumentError):
        PointCloud(np.zeros((3, 3)), np.zeros((2, 3)))
    with pytest.raises(ArgumentError):
        PointCloud(np.zeros((2, 3)), np.zeros((2, 3)), labels=[0, 13])
    with pytest.raises(StateError):
        PointCloud(np.zeros((2, 3)), np.zeros((2, 3)), attributes=np.array([[1.0], [np.inf]]))
    with pytest.raises(EmptyInputError):
        PointCloud(np.zeros((0, 3)), np.zeros((0, 3)))
    c = _cloud()
    with pytest.raises(ValueError):
        c.positions[0, 0] = 5.0


def test_unitset_size_invariants():
    block = PointCloud(np.zeros((4096, 3)), np.zeros((4096, 3)))
    UnitSet([block], "block")
    with pytest.raises(StateError):
        UnitSet([_cloud(10)], "block")
    with pytest.raises(StateError):
        UnitSet([block], "view")
    UnitSet([_cloud(10), _cloud(7)], "room")


def test_feature_file_size_f32(tmp_path):
    path = tmp_path / "x.feat"
    write_feature_file(_cloud(2, np.arange(6, dtype=float).reshape(2, 3)), "f32", path)
    assert os.path.getsize(path) == 8 + 4 + 4 + 4 + 1 + 24
    blob = path.read_bytes()
    assert blob[:8] == b"GSIPFEAT"
    assert int.from_bytes(blob[8:12], "little") == 1
    assert int.from_bytes(blob[12:16], "little") == 2
    assert int.from_bytes(blob[16:20], "little") == 3
    assert blob[20] == 0


def test_feature_file_f16_rounds(tmp_path):
    vals = np.array([[1.0000001, 0.1, 3.14159], [-2.5, 1e-3, 100.7]])
    write_feature_file(vals, "f16", tmp_path / "h.feat")
    back = read_feature_file(tmp_path / "h.feat")
    assert back.dtype == np.float16
    np.testing.assert_array_equal(back, vals.astype(np.float16))


def test_feature_file_errors(tmp_path):
    with pytest.raises(StateError):
        write_feature_file(_cloud(), "f32", tmp_path / "a.feat")
    with pytest.raises(StateError):
        write_feature_file(np.array([[np.nan, 1.0]]), "f32", tmp_path / "a.feat")
    good = tmp_path / "g.feat"
    write_feature_file(np.ones((3, 2)), "f32", good)
    blob = good.read_bytes()
    (tmp_path / "t.feat").write_bytes(blob[:-3])
    with pytest.raises(FormatError):
        read_feature_file(tmp_path / "t.feat")
    (tmp_path / "m.feat").write_bytes(b"GSIPFEAX" + blob[8:])
    with pytest.raises(FormatError):
        read_feature_file(tmp_path / "m.feat")
    bad_dtype = bytearray(blob)
    bad_dtype[20] = 7
    (tmp_path / "d.feat").write_bytes(bytes(bad_dtype))
    with pytest.raises(FormatError):
        read_feature_file(tmp_path / "d.feat")
    bad_version = bytearray(blob)
    bad_version[8] = 2
    (tmp_path / "v.feat").write_bytes(bytes(bad_version))
    with pytest.raises(FormatError):
        read_feature_file(tmp_path / "v.feat")


finite32 = st.floats(-1e6, 1e6, allow_nan=False, width=32)


@given(
    hnp.arrays(np.float64, hnp.array_shapes(min_dims=2, max_dims=2, max_side=12), elements=finite32),
    st.sampled_from(["f32", "f16"]),
)
def test_feature_round_trip_property(tmp_path_factory, matrix, precision):
    path = tmp_path_factory.mktemp("feat") / "p.feat"
    if precision == "f16":
        matrix = np.clip(matrix, -6e4, 6e4)
    write_feature_file(matrix, precision, path)
    back = read_feature_file(path)
    assert back.shape == matrix.shape
    expected = matrix.astype(np.float32 if precision == "f32" else np.float16)
    assert back.tobytes() == expected.tobytes()


def test_s3dis_conversion(tmp_path):
    ann = tmp_path / "raw" / "Area_2" / "office_1" / "Annotations"
    ann.mkdir(parents=True)
    (ann / "chair_1.txt").write_text("0 0 0 10 20 30\n1 1 1 10 20 30\n")
    (ann / "stairs_1.txt").write_text("2 2 2 1 1 1\n")
    (ann / "wall_3.txt").write_text("3 3 3 200 200 200\n")
    written = convert_s3dis(tmp_path / "raw", tmp_path / "rooms")
    assert [p.name for p in written] == ["office_1.txt"]
    cloud = read_room_file(written[0])
    np.testing.assert_array_equal(cloud.labels, [8, 8, 12, 2])
    assert s3dis_label("ceiling_12.txt") == 0
    areas = load_rooms_by_area(tmp_path / "rooms")
    assert list(areas) == [2] and areas[2][0].unit_id == "Area_2_office_1"
