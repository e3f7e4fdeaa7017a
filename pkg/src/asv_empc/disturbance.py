"""Environmental disturbance forces: constant body/inertial vectors and gridded fields.

Grid files are CSV with header ``x,y,taux,tauy`` and one row per knot in
row-major order (x outer, y inner). Inertial vectors are rotated into the
body frame before they enter the dynamics; the yaw moment is always zero.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .vessel import BodyWrench

KINDS = ("none", "constant_body", "constant_inertial", "grid")


class GridFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GridField:
    xs: np.ndarray
    ys: np.ndarray
    taux: np.ndarray
    tauy: np.ndarray

    def __post_init__(self):
        for name in ("xs", "ys", "taux", "tauy"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        for name, knots in (("x", self.xs), ("y", self.ys)):
            if knots.ndim != 1 or knots.size < 2:
                raise GridFormatError(f"{name} axis needs at least 2 knots")
            if np.any(np.diff(knots) <= 0):
                raise GridFormatError(f"non-monotone axis: {name} knots must be strictly increasing")
        shape = (self.xs.size, self.ys.size)
        if self.taux.shape != shape or self.tauy.shape != shape:
            raise GridFormatError(f"dimension mismatch: expected value arrays of shape {shape}")
        if not (np.all(np.isfinite(self.taux)) and np.all(np.isfinite(self.tauy))):
            raise GridFormatError("grid values must be finite")

    def interpolate(self, x: float, y: float) -> tuple[float, float]:
        """Bilinear interpolation of (taux, tauy); queries outside the box clamp to the boundary."""
        i, tx = _locate(self.xs, x)
        j, ty = _locate(self.ys, y)
        w00 = (1 - tx) * (1 - ty)
        w10 = tx * (1 - ty)
        w01 = (1 - tx) * ty
        w11 = tx * ty

        def blend(a):
            return float(w00 * a[i, j] + w10 * a[i + 1, j] + w01 * a[i, j + 1] + w11 * a[i + 1, j + 1])

        return blend(self.taux), blend(self.tauy)


def _locate(knots: np.ndarray, q: float) -> tuple[int, float]:
    q = min(max(q, knots[0]), knots[-1])
    i = int(np.searchsorted(knots, q, side="right")) - 1
    i = min(max(i, 0), knots.size - 2)
    t = (q - knots[i]) / (knots[i + 1] - knots[i])
    return i, t


def load_grid(path) -> GridField:
    path = Path(path)
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["x", "y", "taux", "tauy"]:
            raise GridFormatError(f"{path}:1: expected header 'x,y,taux,tauy'")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise GridFormatError(f"{path}:{lineno}: expected 4 columns, got {len(row)}")
            try:
                rows.append([float(c) for c in row])
            except ValueError:
                raise GridFormatError(f"{path}:{lineno}: malformed number in {row!r}") from None
    if not rows:
        raise GridFormatError(f"{path}: no data rows")
    data = np.array(rows)

    # x outer, y inner: x changes only when the y cycle restarts
    xs = []
    for x in data[:, 0]:
        if not xs or x != xs[-1]:
            xs.append(x)
    n_y = len(data) // len(xs)
    if n_y * len(xs) != len(data):
        raise GridFormatError(f"{path}: dimension mismatch, {len(data)} rows for {len(xs)} x knots")
    ys = data[:n_y, 1]
    for k, (x, y, _, _) in enumerate(data):
        if x != xs[k // n_y] or y != ys[k % n_y]:
            raise GridFormatError(f"{path}:{k + 2}: knot ({x}, {y}) breaks the row-major x/y layout")
    xs = np.array(xs)
    if np.any(np.diff(xs) <= 0):
        raise GridFormatError(f"{path}: non-monotone axis: x knots must be strictly increasing")
    if np.any(np.diff(ys) <= 0):
        raise GridFormatError(f"{path}: non-monotone axis: y knots must be strictly increasing")
    return GridField(xs, ys, data[:, 2].reshape(len(xs), n_y), data[:, 3].reshape(len(xs), n_y))


def write_grid(field: GridField, path) -> None:
    with open(Path(path), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y", "taux", "tauy"])
        for i, x in enumerate(field.xs):
            for j, y in enumerate(field.ys):
                w.writerow([repr(float(x)), repr(float(y)), repr(float(field.taux[i, j])),
                            repr(float(field.tauy[i, j]))])


@dataclass(frozen=True)
class DisturbanceSpec:
    """One disturbance source. ``values`` is (tau_u, tau_v) for body kinds, (tau_x, tau_y) otherwise."""

    kind: str = "none"
    values: tuple[float, float] = (0.0, 0.0)
    grid: GridField | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown disturbance kind {self.kind!r}")
        if self.kind == "grid" and self.grid is None:
            raise ValueError("grid disturbance needs a loaded GridField")
        object.__setattr__(self, "values", (float(self.values[0]), float(self.values[1])))


def sample(spec: DisturbanceSpec, position: tuple[float, float], psi: float) -> BodyWrench:
    if spec.kind == "none":
        return BodyWrench(0.0, 0.0, 0.0)
    if spec.kind == "constant_body":
        return BodyWrench(spec.values[0], spec.values[1], 0.0)
    if spec.kind == "constant_inertial":
        fx, fy = spec.values
    else:
        fx, fy = spec.grid.interpolate(position[0], position[1])
    return BodyWrench(*inertial_to_body(fx, fy, psi), 0.0)


def inertial_to_body(fx: float, fy: float, psi: float) -> tuple[float, float]:
    c, s = math.cos(psi), math.sin(psi)
    return c * fx + s * fy, -s * fx + c * fy


def body_to_inertial(fu: float, fv: float, psi: float) -> tuple[float, float]:
    c, s = math.cos(psi), math.sin(psi)
    return c * fu - s * fv, s * fu + c * fv


def default_grid_path() -> Path:
    return Path(str(resources.files("asv_empc") / "data" / "condition5_grid.csv"))


def synthetic_grid(x_range=(-10.0, 30.0), y_range=(-10.0, 30.0), spacing=5.0) -> GridField:
    """Smooth wind-stress-like field, |tau| up to roughly 0.1 N."""
    xs = np.arange(x_range[0], x_range[1] + 0.5 * spacing, spacing)
    ys = np.arange(y_range[0], y_range[1] + 0.5 * spacing, spacing)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    taux = -0.06 + 0.04 * np.sin(gx / 9.0) * np.cos(gy / 13.0)
    tauy = 0.07 + 0.03 * np.cos(gx / 11.0 + 0.5) * np.sin(gy / 7.0)
    return GridField(xs, ys, np.round(taux, 5), np.round(tauy, 5))


def condition(number: int, grid: GridField | None = None) -> DisturbanceSpec:
    """Disturbance conditions #1 to #5 of the comparison study.

    #1-#2 act in the body frame, #3-#5 in the inertial frame; #5 is gridded
    and falls back to the packaged synthetic field.
    """
    if number == 1:
        return DisturbanceSpec("constant_body", (0.0, 0.0))
    if number == 2:
        return DisturbanceSpec("constant_body", (0.015, 0.015))
    if number == 3:
        return DisturbanceSpec("constant_inertial", (-0.0003, 0.0799))
    if number == 4:
        return DisturbanceSpec("constant_inertial", (-0.0987, 0.0868))
    if number == 5:
        return DisturbanceSpec("grid", grid=grid if grid is not None else load_grid(default_grid_path()))
    raise ValueError(f"disturbance condition must be 1..5, got {number}")


def spec_from_dict(data: dict, base_dir: Path | None = None) -> DisturbanceSpec:
    """Parse the ``disturbance`` section of a scenario file."""
    if "condition" in data:
        grid = None
        if data.get("grid"):
            grid = load_grid(_resolve(data["grid"], base_dir))
        return condition(int(data["condition"]), grid)
    kind = data.get("kind", "none")
    if kind == "grid":
        src = data.get("grid")
        grid = load_grid(_resolve(src, base_dir)) if src else load_grid(default_grid_path())
        return DisturbanceSpec("grid", grid=grid)
    return DisturbanceSpec(kind, tuple(data.get("values", (0.0, 0.0))))


def _resolve(p, base_dir):
    p = Path(p)
    if not p.is_absolute() and base_dir is not None:
        p = Path(base_dir) / p
    return p
