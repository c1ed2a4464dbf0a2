"""Square-field grid geometry and location probability mass functions."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidCellError, OutOfFieldError

Coordinate = tuple[float, float]


@dataclass(frozen=True)
class GridField:
    """Square field divided into m x m equal square cells.

    m = ceil(side / cell), so when the side is not an exact multiple of the
    cell size the outermost cells extend past the nominal field edge (all
    cells keep the full cell size). Cells are numbered 1..m*m in row-major
    order starting at the origin corner.
    """

    side_length_m: float
    cell_size_m: float
    origin: Coordinate = (0.0, 0.0)

    def __post_init__(self) -> None:
        if not self.side_length_m > 0:
            raise ValueError(f"side_length_m must be positive, got {self.side_length_m}")
        if not self.cell_size_m > 0:
            raise ValueError(f"cell_size_m must be positive, got {self.cell_size_m}")

    @property
    def m(self) -> int:
        """Cells per edge."""
        return math.ceil(self.side_length_m / self.cell_size_m)

    @property
    def n_cells(self) -> int:
        return self.m * self.m

    @property
    def extent_m(self) -> float:
        """Edge length of the gridded area (may exceed side_length_m)."""
        return self.m * self.cell_size_m

    def _check_cell(self, cell: int) -> int:
        cell = int(cell)
        if not 1 <= cell <= self.n_cells:
            raise InvalidCellError(f"cell {cell} outside 1..{self.n_cells}")
        return cell

    def cell_centroid(self, cell: int) -> Coordinate:
        """Centroid coordinate (meters) of a 1-based row-major cell index."""
        c = self._check_cell(cell) - 1
        row, col = divmod(c, self.m)
        return (
            self.origin[0] + (col + 0.5) * self.cell_size_m,
            self.origin[1] + (row + 0.5) * self.cell_size_m,
        )

    def position_to_cell(self, position) -> int:
        """Cell index containing a position; inverse of cell_centroid on centroids."""
        x = position[0] - self.origin[0]
        y = position[1] - self.origin[1]
        extent = self.extent_m
        if not (0.0 <= x < extent and 0.0 <= y < extent):
            raise OutOfFieldError(f"position {tuple(position)!r} outside [0, {extent})^2")
        col = min(int(x // self.cell_size_m), self.m - 1)
        row = min(int(y // self.cell_size_m), self.m - 1)
        return row * self.m + col + 1

    def centroids(self) -> np.ndarray:
        """(n_cells, 2) array of centroid coordinates in cell-index order."""
        idx = np.arange(self.n_cells)
        rows, cols = np.divmod(idx, self.m)
        return np.column_stack((
            self.origin[0] + (cols + 0.5) * self.cell_size_m,
            self.origin[1] + (rows + 0.5) * self.cell_size_m,
        ))


@dataclass
class LocationPmf:
    """Probability mass over the m*m grid cells; cell i lives at values[i-1]."""

    field: GridField
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.field.n_cells,):
            raise ValueError(
                f"pmf needs {self.field.n_cells} entries, got shape {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("pmf entries must be finite")
        if np.any(v < 0):
            raise ValueError("pmf entries must be nonnegative")
        self.values = v

    def sum(self) -> float:
        return float(self.values.sum())

    def normalize(self) -> "LocationPmf":
        """Rescale entries to sum to one, in place.

        The rounding residual is folded into the largest entry, so the total
        is exactly 1.0 except for rare one-ulp oscillations.
        """
        s = self.values.sum()
        if not s > 0:
            raise ValueError("cannot normalize a pmf with nonpositive total mass")
        self.values /= s
        for _ in range(4):
            residual = 1.0 - self.values.sum()
            if residual == 0.0:
                break
            self.values[np.argmax(self.values)] += residual
        return self

    def entropy(self) -> float:
        """Shannon entropy in nats (uniform pmf gives log(m*m))."""
        p = self.values[self.values > 0]
        return float(-(p * np.log(p)).sum())

    def as_matrix(self) -> np.ndarray:
        """m x m matrix copy, row-major."""
        return self.values.reshape(self.field.m, self.field.m).copy()

    def copy(self) -> "LocationPmf":
        return LocationPmf(self.field, self.values.copy())


def uniform_pmf(field: GridField) -> LocationPmf:
    """Pmf with every cell at 1/(m*m)."""
    n = field.n_cells
    return LocationPmf(field, np.full(n, 1.0 / n))


def delta_pmf(field: GridField, cell: int) -> LocationPmf:
    """Pmf with all mass on one cell."""
    c = field._check_cell(cell)
    v = np.zeros(field.n_cells)
    v[c - 1] = 1.0
    return LocationPmf(field, v)
