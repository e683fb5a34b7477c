import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from itofcs.geometry import (
    PointCloud,
    backproject,
    dihedral_angle,
    fit_plane,
    project,
    radial_to_axial,
    read_ply,
    write_csv,
    write_ply,
)
from itofcs.metrics import DepthMap
from itofcs.scenes import corner_faces, corner_scene, default_intrinsics
from itofcs.sensing import CameraIntrinsics, corrected_range

INTR = default_intrinsics(32, 24)


def test_radial_to_axial_examples():
    assert radial_to_axial(700.0, 0.0, 0.0) == 700.0
    assert radial_to_axial(500.0 * math.sqrt(2), 1.0, 0.0) == pytest.approx(500.0)
    assert radial_to_axial(300.0, 2.0, 2.0) == pytest.approx(100.0)
    with pytest.raises(ValueError):
        radial_to_axial(0.0, 0.0, 0.0)


@settings(max_examples=100, deadline=None)
@given(st.floats(1, 5000), st.floats(-2, 2), st.floats(-2, 2))
def test_radial_axial_round_trip(d, x, y):
    assert radial_to_axial(corrected_range(d, x, y), x, y) == pytest.approx(d, rel=1e-12)


def test_backproject_center_and_corner():
    intr = CameraIntrinsics(10, 10, 1, 1, 3, 3)
    d = DepthMap(np.full((3, 3), 100.0))
    cloud = backproject(d, intr)
    assert len(cloud) == 9
    pts = {tuple(px): p for px, p in zip(cloud.pixels.tolist(), cloud.points)}
    assert np.allclose(pts[(1, 1)], [0, 0, 100])
    assert np.allclose(pts[(0, 0)], [-10, -10, 100])
    assert np.allclose(pts[(2, 1)], [10, 0, 100])


def test_backproject_skips_invalid_and_checks_size():
    v = np.full((24, 32), 500.0)
    v[0, 0] = np.nan
    assert len(backproject(DepthMap(v), INTR)) == 24 * 32 - 1
    with pytest.raises(ValueError):
        backproject(DepthMap(np.ones((3, 3))), INTR)


def test_projection_round_trip():
    rng = np.random.default_rng(0)
    d = rng.uniform(300, 1300, (24, 32))
    cloud = backproject(DepthMap(d), INTR)
    uv = project(cloud.points, INTR)
    assert np.max(np.abs(uv - cloud.pixels)) <= 1e-6


def test_fit_plane_exact():
    rng = np.random.default_rng(1)
    xy = rng.uniform(-100, 100, (50, 2))
    pts = np.column_stack([xy, 500 + 0.5 * xy[:, 0]])
    n, off, rms = fit_plane(pts)
    expect = np.array([-0.5, 0, 1]) / math.sqrt(1.25)
    assert abs(abs(n @ expect) - 1) <= 1e-12
    assert rms <= 1e-9


def test_dihedral_examples():
    assert dihedral_angle(np.array([0, 0, 1.0]), np.array([0, 1.0, 0])) == pytest.approx(90.0)
    assert dihedral_angle(np.array([0, 0, 1.0]), np.array([0, 0, -2.0])) == pytest.approx(0.0)
    assert dihedral_angle(np.array([1.0, 0, 0]), np.array([1.0, 1.0, 0])) == pytest.approx(45.0)


def test_corner_truth_is_right_angle():
    scene = corner_scene(INTR)
    cloud = backproject(DepthMap(scene.depths[..., 0]), INTR)
    upper, lower = corner_faces(scene, INTR)
    normals = []
    for face in (upper, lower):
        sel = face[cloud.pixels[:, 1], cloud.pixels[:, 0]]
        n, _, rms = fit_plane(cloud.points[sel])
        assert rms <= 1e-9
        normals.append(n)
    assert abs(dihedral_angle(*normals) - 90.0) <= 0.1


def test_point_cloud_rejects_behind_camera():
    with pytest.raises(ValueError):
        PointCloud(np.array([[0, 0, -1.0]]))


def test_ply_and_csv_export(tmp_path):
    cloud = backproject(DepthMap(np.full((24, 32), 650.25)), INTR)
    write_ply(cloud, tmp_path / "c.ply")
    text = (tmp_path / "c.ply").read_text().splitlines()
    assert text[:3] == ["ply", "format ascii 1.0", f"element vertex {len(cloud)}"]
    assert "property float z" in text and "end_header" in text
    back = read_ply(tmp_path / "c.ply")
    assert np.array_equal(back.astype(np.float32), cloud.points.astype(np.float32))
    write_csv(cloud, tmp_path / "c.csv")
    rows = (tmp_path / "c.csv").read_text().splitlines()
    assert rows[0] == "u,v,x,y,z" and len(rows) == len(cloud) + 1
    write_csv(PointCloud(cloud.points), tmp_path / "n.csv")
    assert (tmp_path / "n.csv").read_text().startswith("x,y,z\n")
