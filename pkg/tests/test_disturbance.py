import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from asv_empc import disturbance as dist
from asv_empc.disturbance import DisturbanceSpec, GridField, GridFormatError, load_grid, sample, write_grid


def _write(path, rows, header="x,y,taux,tauy"):
    path.write_text(header + "\n" + "\n".join(",".join(str(v) for v in r) for r in rows) + "\n")
    return path


def test_constant_grid_file(tmp_path):
    f = _write(tmp_path / "g.csv", [(0, 0, 0.05, 0.05), (0, 1, 0.05, 0.05), (1, 0, 0.05, 0.05), (1, 1, 0.05, 0.05)])
    g = load_grid(f)
    for x, y in [(0.3, 0.7), (0, 0), (1, 1), (5, -3)]:
        assert g.interpolate(x, y) == pytest.approx((0.05, 0.05))


def test_decreasing_x_rejected(tmp_path):
    f = _write(tmp_path / "g.csv", [(1, 0, 0, 0), (1, 1, 0, 0), (0, 0, 0, 0), (0, 1, 0, 0)])
    with pytest.raises(GridFormatError, match="non-monotone axis"):
        load_grid(f)


def test_decreasing_y_rejected(tmp_path):
    f = _write(tmp_path / "g.csv", [(0, 1, 0, 0), (0, 0, 0, 0), (1, 1, 0, 0), (1, 0, 0, 0)])
    with pytest.raises(GridFormatError, match="non-monotone axis"):
        load_grid(f)


def test_malformed_row_reports_line(tmp_path):
    f = _write(tmp_path / "g.csv", [(0, 0, 0, 0), (0, 1, "abc", 0), (1, 0, 0, 0), (1, 1, 0, 0)])
    with pytest.raises(GridFormatError, match=r"g\.csv:3:"):
        load_grid(f)


def test_wrong_column_count_reports_line(tmp_path):
    f = _write(tmp_path / "g.csv", [(0, 0, 0, 0), (0, 1, 0)])
    with pytest.raises(GridFormatError, match=r":3: expected 4 columns"):
        load_grid(f)


def test_bad_header(tmp_path):
    f = _write(tmp_path / "g.csv", [(0, 0, 0, 0)], header="x,y,u,v")
    with pytest.raises(GridFormatError, match="header"):
        load_grid(f)


def test_dimension_mismatch(tmp_path):
    f = _write(tmp_path / "g.csv", [(0, 0, 0, 0), (0, 1, 0, 0), (1, 0, 0, 0)])
    with pytest.raises(GridFormatError, match="dimension mismatch"):
        load_grid(f)
    with pytest.raises(GridFormatError, match="dimension mismatch"):
        GridField([0, 1], [0, 1], np.zeros((2, 3)), np.zeros((2, 2)))


def test_field_validation():
    with pytest.raises(GridFormatError):
        GridField([0], [0, 1], np.zeros((1, 2)), np.zeros((1, 2)))
    with pytest.raises(GridFormatError):
        GridField([0, 1], [0, 1], np.full((2, 2), np.nan), np.zeros((2, 2)))


def test_interior_knot_exact():
    xs, ys = np.array([0.0, 1.0, 3.0]), np.array([-1.0, 0.5, 2.0])
    taux = np.arange(9.0).reshape(3, 3) * 0.01
    tauy = -taux
    g = GridField(xs, ys, taux, tauy)
    assert g.interpolate(1.0, 0.5) == (taux[1, 1], tauy[1, 1])


def test_cell_centre_half():
    # corners 0 at x = 0, 1 at x = 1
    g = GridField([0, 1], [0, 1], np.array([[0.0, 0.0], [1.0, 1.0]]), np.array([[0.0, 1.0], [0.0, 1.0]]))
    assert g.interpolate(0.5, 0.5) == (0.5, 0.5)


def test_clamps_outside_box():
    g = dist.synthetic_grid()
    assert g.interpolate(-100.0, 3.0) == g.interpolate(g.xs[0], 3.0)
    assert g.interpolate(7.0, 1e6) == g.interpolate(7.0, g.ys[-1])


def test_write_load_round_trip(tmp_path, rng):
    g = GridField(np.array([0.0, 2.0, 5.0]), np.array([1.0, 4.0]), rng.normal(size=(3, 2)), rng.normal(size=(3, 2)))
    write_grid(g, tmp_path / "g.csv")
    back = load_grid(tmp_path / "g.csv")
    for a in ("xs", "ys", "taux", "tauy"):
        np.testing.assert_array_equal(getattr(back, a), getattr(g, a))


def test_packaged_grid_loads():
    g = load_grid(dist.default_grid_path())
    assert g.xs.size >= 2 and g.ys.size >= 2
    assert np.all(np.hypot(g.taux, g.tauy) < 0.2)


def _bilinear_oracle(xs, ys, A, x, y):
    i = np.clip(np.searchsorted(xs, x) - 1, 0, len(xs) - 2)
    j = np.clip(np.searchsorted(ys, y) - 1, 0, len(ys) - 2)
    x0, x1, y0, y1 = xs[i], xs[i + 1], ys[j], ys[j + 1]
    q = np.array([[A[i, j], A[i, j + 1]], [A[i + 1, j], A[i + 1, j + 1]]])
    wx = np.array([x1 - x, x - x0]) / (x1 - x0)
    wy = np.array([y1 - y, y - y0]) / (y1 - y0)
    return wx @ q @ wy


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**31), nx=st.integers(2, 6), ny=st.integers(2, 6))
def test_random_grids_match_oracle(seed, nx, ny):
    r = np.random.default_rng(seed)
    xs = np.cumsum(r.uniform(0.5, 3.0, nx))
    ys = np.cumsum(r.uniform(0.5, 3.0, ny))
    A, B = r.normal(size=(nx, ny)), r.normal(size=(nx, ny))
    g = GridField(xs, ys, A, B)
    for _ in range(10):
        x, y = r.uniform(xs[0], xs[-1]), r.uniform(ys[0], ys[-1])
        tx, ty = g.interpolate(x, y)
        assert tx == pytest.approx(_bilinear_oracle(xs, ys, A, x, y), abs=1e-12)
        assert ty == pytest.approx(_bilinear_oracle(xs, ys, B, x, y), abs=1e-12)
    # linear along a grid line
    x = xs[0]
    ya, yb = ys[0], ys[1]
    mid = g.interpolate(x, 0.5 * (ya + yb))[0]
    assert mid == pytest.approx(0.5 * (A[0, 0] + A[0, 1]), abs=1e-12)


def test_continuous_across_cell_boundary():
    g = dist.synthetic_grid()
    xb = g.xs[3]
    below = g.interpolate(np.nextafter(xb, -np.inf), 7.3)
    above = g.interpolate(np.nextafter(xb, np.inf), 7.3)
    assert abs(below[0] - above[0]) < 1e-9 and abs(below[1] - above[1]) < 1e-9


def test_sample_kinds():
    assert sample(DisturbanceSpec(), (0, 0), 0.3) == (0.0, 0.0, 0.0)
    assert sample(DisturbanceSpec("constant_body", (0.015, 0.015)), (3, 4), 1.0) == (0.015, 0.015, 0.0)
    w = sample(DisturbanceSpec("constant_inertial", (0.0, 0.0799)), (0, 0), 0.0)
    assert w == pytest.approx((0.0, 0.0799, 0.0))
    # heading north: an eastward push is felt from starboard (negative sway)
    w = sample(DisturbanceSpec("constant_inertial", (0.1, 0.0)), (0, 0), math.pi / 2)
    assert w == pytest.approx((0.0, -0.1, 0.0), abs=1e-15)


def test_grid_sample_rotates():
    g = dist.synthetic_grid()
    spec = DisturbanceSpec("grid", grid=g)
    fx, fy = g.interpolate(4.0, 6.0)
    w = sample(spec, (4.0, 6.0), 0.7)
    assert dist.body_to_inertial(w.Fu, w.Fv, 0.7) == pytest.approx((fx, fy), abs=1e-15)
    assert w.Mr == 0.0


@settings(max_examples=200, deadline=None)
@given(fx=st.floats(-1, 1), fy=st.floats(-1, 1), psi=st.floats(-10, 10))
def test_rotation_round_trip(fx, fy, psi):
    back = dist.body_to_inertial(*dist.inertial_to_body(fx, fy, psi), psi)
    assert back == pytest.approx((fx, fy), abs=1e-12)


def test_conditions():
    assert dist.condition(1) == DisturbanceSpec("constant_body", (0.0, 0.0))
    assert dist.condition(2).values == (0.015, 0.015)
    c3 = dist.condition(3)
    assert c3.kind == "constant_inertial" and c3.values == (-0.0003, 0.0799)
    assert dist.condition(4).values == (-0.0987, 0.0868)
    assert dist.condition(5).kind == "grid"
    with pytest.raises(ValueError):
        dist.condition(6)


def test_spec_validation():
    with pytest.raises(ValueError):
        DisturbanceSpec("wind")
    with pytest.raises(ValueError):
        DisturbanceSpec("grid")


def test_spec_from_dict(tmp_path):
    assert dist.spec_from_dict({"kind": "none"}) == DisturbanceSpec()
    assert dist.spec_from_dict({"condition": 3}).values == (-0.0003, 0.0799)
    write_grid(dist.synthetic_grid(), tmp_path / "my.csv")
    spec = dist.spec_from_dict({"kind": "grid", "grid": "my.csv"}, tmp_path)
    assert spec.kind == "grid" and spec.grid.xs.size == 9
