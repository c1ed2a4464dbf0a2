"""Log-distance shadowing channel model and its discretized likelihood.

The channel follows the classic log-distance law with log-normal shadowing:
path loss at distance d is pl0 + 10*n*log10(d/d0) plus a zero-mean Gaussian
in dB. The likelihood of observing a given path loss between two grid cells
is that Gaussian truncated to +/- span_sigmas standard deviations, sampled
at step_db-wide bins, and renormalized to sum to one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from statistics import NormalDist

import numpy as np

from .errors import DomainError, InvalidCellError, NoCoverageError
from .grid import GridField


# Admits bin centers that land a rounding error past the truncation edge.
_SPAN_EPS_DB = 1e-9


class CanopyMode(str, Enum):
    """Antenna placement relative to the tree tops; selects a channel preset."""

    BELOW_CANOPY = "below_canopy"
    ABOVE_CANOPY = "above_canopy"


@dataclass(frozen=True)
class PathLossModel:
    """Log-distance path loss parameters (decibel intercept at d0, exponent, shadowing std)."""

    pl0_db: float
    n: float
    sigma_db: float
    d0_m: float = 1.0

    def __post_init__(self) -> None:
        if not self.n > 0:
            raise ValueError(f"path loss exponent must be positive, got {self.n}")
        if not self.sigma_db > 0:
            raise ValueError(f"sigma_db must be positive, got {self.sigma_db}")
        if not self.d0_m > 0:
            raise ValueError(f"d0_m must be positive, got {self.d0_m}")


# 2.45 GHz orchard measurements: node-to-node radios sit inside the canopy,
# gateway-to-node links clear it.
BELOW_CANOPY_MODEL = PathLossModel(pl0_db=75.0, n=3.61, sigma_db=5.27)
ABOVE_CANOPY_MODEL = PathLossModel(pl0_db=72.0, n=2.91, sigma_db=4.14)

_PRESETS = {
    CanopyMode.BELOW_CANOPY: BELOW_CANOPY_MODEL,
    CanopyMode.ABOVE_CANOPY: ABOVE_CANOPY_MODEL,
}


def preset_model(mode: CanopyMode | str) -> PathLossModel:
    return _PRESETS[CanopyMode(mode)]


def mean_path_loss(model: PathLossModel, d):
    """Mean path loss in dB at distance d (meters); accepts scalars or arrays."""
    d = np.asarray(d, dtype=np.float64)
    if np.any(d <= 0):
        raise DomainError("distance must be positive")
    out = model.pl0_db + 10.0 * model.n * np.log10(d / model.d0_m)
    return float(out) if out.ndim == 0 else out


def sample_path_loss(model: PathLossModel, d, rng: np.random.Generator):
    """Draw a shadowed path loss sample; deterministic given the generator state."""
    return mean_path_loss(model, d) + rng.normal(0.0, model.sigma_db, size=np.shape(d) or None)


def _bin_offsets(sigma_db: float, step_db: float, span_sigmas: float) -> np.ndarray:
    """Bin-center offsets from the mean: -span*sigma, then step_db increments."""
    half = span_sigmas * sigma_db
    count = int(math.floor(2.0 * half / step_db)) + 1
    return -half + step_db * np.arange(count)


def _bin_weights(sigma_db: float, step_db: float, span_sigmas: float) -> np.ndarray:
    offsets = _bin_offsets(sigma_db, step_db, span_sigmas)
    w = np.exp(-(offsets ** 2) / (2.0 * sigma_db ** 2))
    return w / w.sum()


def likelihood(model: PathLossModel, pl: float, d: float,
               step_db: float = 1.0, span_sigmas: float = 3.0) -> float:
    """Probability of the bin containing pl, given distance d.

    pl snaps to the nearest bin center; outside +/- span_sigmas standard
    deviations of the mean the likelihood is exactly zero.
    """
    mean = mean_path_loss(model, d)
    half = span_sigmas * model.sigma_db
    delta = pl - mean
    if abs(delta) > half + _SPAN_EPS_DB:
        return 0.0
    w = _bin_weights(model.sigma_db, step_db, span_sigmas)
    idx = int(np.clip(round((delta + half) / step_db), 0, len(w) - 1))
    return float(w[idx])


class LikelihoodTable:
    """Discretized path loss likelihood for every pair of grid cells.

    Cell pairs collapse into distance classes (equal inter-centroid
    distance), so the table stores one mean path loss per class plus a single
    shared bin-weight vector. Same-cell pairs use half a cell size as the
    floor distance, since the log-distance law diverges at zero.
    """

    def __init__(self, field: GridField, model: PathLossModel,
                 step_db: float = 1.0, span_sigmas: float = 3.0):
        if not step_db > 0:
            raise ValueError("step_db must be positive")
        if not span_sigmas > 0:
            raise ValueError("span_sigmas must be positive")
        self.field = field
        self.model = model
        self.step_db = float(step_db)
        self.span_sigmas = float(span_sigmas)

        m = field.m
        idx = np.arange(field.n_cells)
        rows, cols = np.divmod(idx, m)
        dr = np.abs(rows[:, None] - rows[None, :])
        dc = np.abs(cols[:, None] - cols[None, :])
        k2 = dr * dr + dc * dc
        self.class_offsets_sq, inverse = np.unique(k2, return_inverse=True)
        self.class_matrix = inverse.reshape(field.n_cells, field.n_cells).astype(np.int32)

        d = field.cell_size_m * np.sqrt(self.class_offsets_sq.astype(np.float64))
        d[self.class_offsets_sq == 0] = field.cell_size_m / 2.0
        self.class_distances = d
        self.class_means = mean_path_loss(model, d)
        self.weights = _bin_weights(model.sigma_db, step_db, span_sigmas)
        self._half_span = span_sigmas * model.sigma_db

    @property
    def n_classes(self) -> int:
        return len(self.class_distances)

    @property
    def n_distance_classes(self) -> int:
        """Distinct nonzero inter-centroid distances."""
        return int(np.count_nonzero(self.class_offsets_sq > 0))

    @property
    def n_bins(self) -> int:
        return len(self.weights)

    @cached_property
    def _pool_index(self) -> np.ndarray:
        n, nc = self.field.n_cells, self.n_classes
        return (np.arange(n)[:, None] * nc + self.class_matrix).ravel()

    def mass_vector(self, pl: float) -> np.ndarray:
        """Likelihood of pl for every distance class."""
        delta = pl - self.class_means
        idx = np.rint((delta + self._half_span) / self.step_db).astype(np.int64)
        hit = self.weights[np.clip(idx, 0, self.n_bins - 1)]
        return np.where(np.abs(delta) <= self._half_span + _SPAN_EPS_DB, hit, 0.0)

    def mass_matrix(self, pls: np.ndarray) -> np.ndarray:
        """mass_vector stacked over many samples: shape (len(pls), n_classes)."""
        delta = np.asarray(pls, dtype=np.float64)[:, None] - self.class_means[None, :]
        idx = np.rint((delta + self._half_span) / self.step_db).astype(np.int64)
        hit = self.weights[np.clip(idx, 0, self.n_bins - 1)]
        return np.where(np.abs(delta) <= self._half_span + _SPAN_EPS_DB, hit, 0.0)

    def lookup(self, cell_i: int, cell_j: int, pl: float) -> float:
        """Likelihood of pl between two cells; symmetric in the cell pair."""
        a = self.field._check_cell(cell_i) - 1
        b = self.field._check_cell(cell_j) - 1
        cls = int(self.class_matrix[a, b])
        return float(self.mass_vector(pl)[cls])

    def factor(self, pl: float, neighbor_values: np.ndarray) -> np.ndarray:
        """Per-cell evidence factor: mixture of the likelihood over the neighbor pmf."""
        mass = self.mass_vector(pl)
        return mass[self.class_matrix] @ neighbor_values

    def pooled(self, neighbor_values: np.ndarray) -> np.ndarray:
        """Neighbor pmf mass pooled per (cell, distance class); shape (n_cells, n_classes).

        factor(pl, v) == pooled(v) @ mass_vector(pl); precomputing this once
        per multicast amortizes the pairwise sum across receivers.
        """
        n, nc = self.field.n_cells, self.n_classes
        w = np.broadcast_to(neighbor_values, (n, n)).ravel()
        return np.bincount(self._pool_index, weights=w, minlength=n * nc).reshape(n, nc)


def build_likelihood(field: GridField, model: PathLossModel,
                     step_db: float = 1.0, span_sigmas: float = 3.0) -> LikelihoodTable:
    """Build the per-cell-pair likelihood table for a field and channel model."""
    return LikelihoodTable(field, model, step_db=step_db, span_sigmas=span_sigmas)


def connectivity_distance(model: PathLossModel, ptx_dbm: float,
                          sensitivity_dbm: float, link_prob: float) -> float:
    """Largest distance at which received power clears the sensitivity with link_prob.

    Closed-form inversion of the shadowed link budget:
    d = d0 * 10**((ptx - sens - pl0 - z*sigma) / (10*n)) with z the standard
    normal quantile of link_prob.
    """
    if not 0.0 < link_prob < 1.0:
        raise DomainError(f"link_prob must lie in (0, 1), got {link_prob}")
    z = NormalDist().inv_cdf(link_prob)
    if ptx_dbm <= sensitivity_dbm + model.pl0_db - z * model.sigma_db:
        raise NoCoverageError(
            f"budget {ptx_dbm - sensitivity_dbm:.1f} dB cannot reach "
            f"{link_prob:.0%} link probability"
        )
    exponent = (ptx_dbm - sensitivity_dbm - model.pl0_db - z * model.sigma_db) / (10.0 * model.n)
    return model.d0_m * 10.0 ** exponent
