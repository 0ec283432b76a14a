"""Lattice domains, field rasters and their CSV representation.

Sites are the integer lattice {1..width} x {1..height}.  A field is stored as
a ``(height, width)`` array where ``values[y - 1, x - 1]`` holds Z(x, y); the
flattened site order is row-major with x varying fastest.

CSV layout: one text row per lattice row (y = 1 first), comma separated,
missing cells written as ``NaN``.  Floats are written with ``repr`` so a
write/read cycle is exact.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class GridDomain:
    width: int = 16
    height: int = 16

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise DomainError(f"grid must be at least 1x1, got {self.width}x{self.height}")

    @property
    def n_sites(self) -> int:
        return self.width * self.height

    def sites(self) -> np.ndarray:
        """(n, 2) array of (x, y) coordinates, x fastest."""
        ys, xs = np.divmod(np.arange(self.n_sites), self.width)
        return np.column_stack([xs + 1, ys + 1]).astype(float)


@dataclass
class FieldGrid:
    """A raster of field values with a boolean missing mask (True = missing)."""

    values: np.ndarray
    missing: np.ndarray | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise DomainError(f"field values must be 2-D, got shape {self.values.shape}")
        if self.missing is None:
            self.missing = ~np.isfinite(self.values)
        else:
            self.missing = np.asarray(self.missing, dtype=bool) | ~np.isfinite(self.values)
        if self.missing.shape != self.values.shape:
            raise DomainError("missing mask shape does not match values")

    @property
    def domain(self) -> GridDomain:
        h, w = self.values.shape
        return GridDomain(width=w, height=h)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def complete(self) -> bool:
        return not self.missing.any()

    @property
    def n_observed(self) -> int:
        return int((~self.missing).sum())

    def observed(self) -> tuple[np.ndarray, np.ndarray]:
        """Sites (x, y) and values of the non-missing cells in row-major order."""
        sites = self.domain.sites()
        keep = ~self.missing.ravel()
        return sites[keep], self.values.ravel()[keep]

    def window(self, row0: int, col0: int, height: int, width: int) -> FieldGrid:
        return FieldGrid(
            self.values[row0:row0 + height, col0:col0 + width].copy(),
            self.missing[row0:row0 + height, col0:col0 + width].copy(),
        )


# raster role for scanned real data; same representation
RasterGrid = FieldGrid


def rotate180(field: FieldGrid) -> FieldGrid:
    """Point-reflect a field: cell (i, j) moves to (h-1-i, w-1-j)."""
    return FieldGrid(
        field.values[::-1, ::-1].copy(), field.missing[::-1, ::-1].copy(), dict(field.metadata)
    )


def _fmt(v: float) -> str:
    return "NaN" if not math.isfinite(v) else repr(float(v))


def write_grid_csv(field: FieldGrid, path) -> None:
    vals = np.where(field.missing, np.nan, field.values)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in vals:
            writer.writerow([_fmt(v) for v in row])


def grid_to_csv_text(field: FieldGrid) -> str:
    vals = np.where(field.missing, np.nan, field.values)
    return "".join(",".join(_fmt(v) for v in row) + "\n" for row in vals)


def read_grid_csv(path) -> FieldGrid:
    """Read a CSV raster; an optional ``<path>.json`` sidecar becomes metadata."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise DomainError(f"{path}: empty grid file")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise DomainError(f"{path}: ragged rows (widths {sorted(widths)})")
    try:
        values = np.array([[float(tok) for tok in r] for r in rows])
    except ValueError as exc:
        raise DomainError(f"{path}: {exc}") from None
    meta = {}
    sidecar = path.with_name(path.name + ".json")
    if sidecar.exists():
        meta = json.loads(sidecar.read_text())
    return FieldGrid(values, metadata=meta)
