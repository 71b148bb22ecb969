"""Uniform cell-centered grids and scalar fields on them.

Cells are axis-aligned boxes of side `spacing`; the center of cell index k
along an axis sits at origin + k * spacing, so `origin` is the center of the
first cell and the covered box extends half a cell beyond the extreme
centers. Fields store one value per cell, flattened in row-major (C) order,
so index arithmetic matches numpy reshape exactly.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "Grid",
    "ScalarField",
    "load_field",
    "save_field",
    "synth_field",
]


@dataclass(frozen=True)
class Grid:
    shape: tuple[int, ...]
    spacing: float
    origin: tuple[float, ...] = ()

    def __post_init__(self):
        shape = tuple(int(n) for n in self.shape)
        if len(shape) not in (1, 2):
            raise ValueError(f"grid must be 1D or 2D, got shape {shape}")
        if any(n < 2 for n in shape):
            raise ValueError(f"grid needs at least 2 cells per axis, got {shape}")
        spacing = float(self.spacing)
        if not spacing > 0:
            raise ValueError(f"grid spacing must be positive, got {spacing}")
        origin = tuple(float(x) for x in self.origin)
        if not origin:
            origin = (0.0,) * len(shape)
        if len(origin) != len(shape):
            raise ValueError(
                f"origin has {len(origin)} coordinates for a {len(shape)}D grid"
            )
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", origin)

    @property
    def dim(self) -> int:
        return len(self.shape)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.shape))

    @property
    def cell_volume(self) -> float:
        return self.spacing**self.dim

    def axis_coords(self, axis: int) -> np.ndarray:
        """Cell-center coordinates along one axis."""
        n = self.shape[axis]
        return self.origin[axis] + np.arange(n) * self.spacing

    def cell_centers(self) -> np.ndarray:
        """(n_cells, dim) array of cell centers, row-major cell order."""
        axes = [self.axis_coords(a) for a in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)

    def box(self) -> tuple[np.ndarray, np.ndarray]:
        """(lo, hi) corners of the covered domain, half a cell past the centers."""
        lo = np.asarray(self.origin, dtype=float) - 0.5 * self.spacing
        hi = lo + self.spacing * np.asarray(self.shape, dtype=float)
        return lo, hi


@dataclass(frozen=True)
class ScalarField:
    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).reshape(-1).copy()
        if v.size != self.grid.n_cells:
            raise ValueError(
                f"field has {v.size} values for a grid of {self.grid.n_cells} cells"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def as_grid_array(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)

    def with_values(self, values: np.ndarray) -> "ScalarField":
        return ScalarField(self.grid, values)


def _read_pgm(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    if not raw.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    # Header: magic, width, height, maxval, separated by whitespace/comments.
    pos = 2
    tokens = []
    while len(tokens) < 3:
        m = re.match(rb"(?:\s|#[^\n]*\n)*(\d+)", raw[pos:])
        if m is None:
            raise ValueError(f"{path}: malformed PGM header")
        tokens.append(int(m.group(1)))
        pos += m.end()
    width, height, maxval = tokens
    if not 0 < maxval < 65536:
        raise ValueError(f"{path}: PGM maxval {maxval} out of range")
    pos += 1  # single whitespace byte after maxval
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    count = width * height
    data = np.frombuffer(raw, dtype=dtype, count=count, offset=pos)
    if data.size != count:
        raise ValueError(f"{path}: PGM pixel data truncated")
    return (data.astype(np.float64) / maxval).reshape(height, width)


def _read_csv(path: Path, dim: int) -> np.ndarray:
    rows = []
    with open(path) as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                row = [float(tok) for tok in line.split(",")]
            except ValueError as exc:
                raise ValueError(f"{path}:{ln}: {exc}") from None
            if dim == 1 and len(row) != 1:
                raise ValueError(
                    f"{path}:{ln}: expected one value per line, got {len(row)}"
                )
            if dim == 2 and rows and len(row) != len(rows[0]):
                raise ValueError(
                    f"{path}:{ln}: ragged row, {len(row)} values vs {len(rows[0])}"
                )
            rows.append(row)
    if not rows:
        raise ValueError(f"{path}: no data rows")
    return np.asarray(rows, dtype=np.float64)


def load_field(path: str | Path, grid: Grid) -> ScalarField:
    """Load a field from CSV (one row per grid row) or binary PGM.

    PGM values are rescaled to [0, 1]. Shape mismatches raise with both
    shapes in the message.
    """
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        arr = _read_pgm(path)
    else:
        arr = _read_csv(path, grid.dim)
    if grid.dim == 1:
        arr = arr.reshape(-1)
        if arr.shape[0] != grid.shape[0]:
            raise ValueError(
                f"{path}: file has {arr.shape[0]} values, grid wants {grid.shape[0]}"
            )
    else:
        if arr.shape != grid.shape:
            raise ValueError(
                f"{path}: file shape {arr.shape} does not match grid shape {grid.shape}"
            )
    return ScalarField(grid, arr)


def save_field(path: str | Path, f: ScalarField) -> None:
    """Write a field as CSV with full float precision (round-trips exactly)."""
    path = Path(path)
    arr = f.as_grid_array()
    if f.grid.dim == 1:
        lines = [repr(float(v)) for v in arr]
    else:
        lines = [",".join(repr(float(v)) for v in row) for row in arr]
    path.write_text("\n".join(lines) + "\n")


def synth_field(kind: str, grid: Grid, **params) -> ScalarField:
    """Built-in test data.

    kinds:
      constant       params: value (default 0)
      step           indicator of the lower half along axis 0
      radial_holder  params: beta in (0,1], cap > 0, center (default domain
                     midpoint); value max(cap - |x - center|^beta, 0)
      random         params: seed (required), lo/hi (default -1/1); iid uniform
    """
    centers = grid.cell_centers()
    if kind == "constant":
        value = float(params.pop("value", 0.0))
        _reject_extra(kind, params)
        vals = np.full(grid.n_cells, value)
    elif kind == "step":
        _reject_extra(kind, params)
        lo, hi = grid.box()
        mid = 0.5 * (lo[0] + hi[0])
        vals = (centers[:, 0] < mid).astype(np.float64)
    elif kind == "radial_holder":
        beta = float(params.pop("beta"))
        cap = float(params.pop("cap"))
        center = params.pop("center", None)
        _reject_extra(kind, params)
        if not 0 < beta <= 1:
            raise ValueError(f"radial_holder needs beta in (0, 1], got {beta}")
        if cap <= 0:
            raise ValueError(f"radial_holder needs cap > 0, got {cap}")
        if center is None:
            lo, hi = grid.box()
            center = 0.5 * (lo + hi)
        center = np.asarray(center, dtype=float)
        r = np.linalg.norm(centers - center, axis=1)
        vals = np.maximum(cap - r**beta, 0.0)
    elif kind == "random":
        if "seed" not in params:
            raise ValueError("random field needs an explicit seed")
        seed = params.pop("seed")
        lo = float(params.pop("lo", -1.0))
        hi = float(params.pop("hi", 1.0))
        _reject_extra(kind, params)
        rng = np.random.default_rng(seed)
        vals = rng.uniform(lo, hi, size=grid.n_cells)
    else:
        raise ValueError(f"unknown synth kind {kind!r}")
    return ScalarField(grid, vals)


def _reject_extra(kind: str, params: dict) -> None:
    if params:
        raise TypeError(f"synth kind {kind!r} got unexpected params {sorted(params)}")
