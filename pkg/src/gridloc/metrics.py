"""Localization error metrics pooled across Monte-Carlo trials."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError
from .grid import Coordinate, GridField


@dataclass
class TrialResult:
    """Per-trial outcome: final per-node errors and run diagnostics."""

    trial: int
    errors_m: np.ndarray
    rounds_to_convergence: int
    avg_landmark_degree: float
    avg_unknown_degree: float


def localization_error(field: GridField, decided_cell: int, true_position: Coordinate) -> float:
    """Euclidean distance from the decided cell's centroid to the true position."""
    cx, cy = field.cell_centroid(decided_cell)
    return math.hypot(cx - true_position[0], cy - true_position[1])


def two_drms(errors) -> float:
    """Twice the root-mean-square radial error (the ~95%-confidence circle radius)."""
    e = np.asarray(errors, dtype=np.float64)
    if e.size == 0:
        raise DomainError("two_drms needs at least one error sample")
    return float(2.0 * np.sqrt(np.mean(e * e)))


def coverage_check(errors, radius: float) -> float:
    """Fraction of errors at or below the radius."""
    if radius < 0:
        raise DomainError(f"radius must be nonnegative, got {radius}")
    e = np.asarray(errors, dtype=np.float64)
    if e.size == 0:
        raise DomainError("coverage_check needs at least one error sample")
    return float(np.mean(e <= radius))
