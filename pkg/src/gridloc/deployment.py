"""Node deployment, landmark placement presets, and disk connectivity graphs."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .channel import PathLossModel
from .errors import EmptyDeploymentError
from .grid import Coordinate, GridField, LocationPmf, delta_pmf, uniform_pmf

# Landmarks sit on the field border; a 1 m inward inset keeps their
# coordinates inside the half-open gridded extent.
BORDER_INSET_M = 1.0

SUPPORTED_LANDMARK_COUNTS = (2, 3, 4, 6, 8)


class NodeRole(Enum):
    LANDMARK = "landmark"
    UNKNOWN = "unknown"


@dataclass
class Node:
    """A deployed radio: landmarks know their cell, unknowns carry a belief pmf."""

    id: int
    role: NodeRole
    true_position: Coordinate
    ptx_dbm: float
    pmf: LocationPmf


@dataclass
class Scenario:
    """One deployment: field, channel models, nodes, and connectivity ranges.

    range_node_m applies to links between two unknown nodes; range_landmark_m
    applies whenever either endpoint is a landmark (gateway above canopy).
    """

    field: GridField
    model_node: PathLossModel
    model_landmark: PathLossModel
    nodes: list[Node]
    range_node_m: float
    range_landmark_m: float
    seed: int = 0
    max_steps: int = 20
    hop_limit: int = 8
    scenario_id: str = "scenario"

    def __post_init__(self) -> None:
        if not self.range_node_m > 0 or not self.range_landmark_m > 0:
            raise ValueError("connectivity ranges must be positive")
        roles = [n.role for n in self.nodes]
        n_lm = sum(r is NodeRole.LANDMARK for r in roles)
        if n_lm < 1 or n_lm == len(self.nodes):
            raise ValueError("scenario needs at least one landmark and one unknown node")
        ids = [n.id for n in self.nodes]
        if ids != list(range(len(self.nodes))):
            raise ValueError("node ids must be 0..N-1 in list order")
        if any(r is NodeRole.LANDMARK for r in roles[n_lm:]):
            raise ValueError("landmarks must occupy the first ids")

    @property
    def n_landmarks(self) -> int:
        return sum(n.role is NodeRole.LANDMARK for n in self.nodes)

    @property
    def landmark_ids(self) -> list[int]:
        return [n.id for n in self.nodes if n.role is NodeRole.LANDMARK]

    @property
    def unknown_ids(self) -> list[int]:
        return [n.id for n in self.nodes if n.role is NodeRole.UNKNOWN]

    def positions(self) -> np.ndarray:
        return np.array([n.true_position for n in self.nodes], dtype=np.float64)


@dataclass
class ConnectivityGraph:
    """Symmetric adjacency as per-node sorted neighbor id arrays."""

    neighbors: tuple[np.ndarray, ...]

    def degree(self, node_id: int) -> int:
        return len(self.neighbors[node_id])

    def has_edge(self, i: int, j: int) -> bool:
        return bool(np.isin(j, self.neighbors[i]))

    def edge_count(self) -> int:
        return sum(len(nb) for nb in self.neighbors) // 2


def place_grid(field: GridField, spacing_m: float) -> list[Coordinate]:
    """Centered square lattice with the given spacing, one node per lattice block."""
    if not spacing_m > 0:
        raise ValueError("spacing must be positive")
    if spacing_m > field.side_length_m:
        raise EmptyDeploymentError(
            f"spacing {spacing_m} m exceeds field side {field.side_length_m} m"
        )
    per_axis = int(field.side_length_m // spacing_m)
    shift = (field.side_length_m - per_axis * spacing_m) / 2.0
    coords = shift + (np.arange(per_axis) + 0.5) * spacing_m
    return [(float(x), float(y)) for y in coords for x in coords]


def place_random(field: GridField, count: int, rng: np.random.Generator) -> list[Coordinate]:
    """count i.i.d. uniform positions inside the field."""
    if count < 1:
        raise EmptyDeploymentError(f"count must be >= 1, got {count}")
    pts = rng.uniform(0.0, field.side_length_m, size=(count, 2))
    return [(float(x), float(y)) for x, y in pts]


def place_landmarks(field: GridField, count: int) -> list[Coordinate]:
    """Fixed border/corner landmark arrangements for the supported counts.

    2 -> midpoints of two opposite edges, 3 -> three edge midpoints,
    4 -> corners, 6 -> corners plus two opposite edge midpoints,
    8 -> corners plus all four edge midpoints.
    """
    side = field.side_length_m
    lo, hi, mid = BORDER_INSET_M, side - BORDER_INSET_M, side / 2.0
    corners = [(lo, lo), (hi, lo), (lo, hi), (hi, hi)]
    mid_left, mid_right = (lo, mid), (hi, mid)
    mid_bottom, mid_top = (mid, lo), (mid, hi)
    presets = {
        2: [mid_left, mid_right],
        3: [mid_left, mid_right, mid_bottom],
        4: corners,
        6: corners + [mid_left, mid_right],
        8: corners + [mid_bottom, mid_top, mid_left, mid_right],
    }
    if count not in presets:
        raise ValueError(
            f"unsupported landmark count {count}; supported: {SUPPORTED_LANDMARK_COUNTS}"
        )
    return presets[count]


def scaled_range(base_range_m: float, ptx_dbm: float, ptx_ref_dbm: float,
                 path_loss_exponent: float) -> float:
    """Rescale a connectivity range anchored at ptx_ref_dbm to another transmit power."""
    return base_range_m * 10.0 ** ((ptx_dbm - ptx_ref_dbm) / (10.0 * path_loss_exponent))


def build_connectivity(scenario: Scenario) -> ConnectivityGraph:
    """Disk graph: edge iff distance < the range applicable to the node pair."""
    pos = scenario.positions()
    lm = np.array([n.role is NodeRole.LANDMARK for n in scenario.nodes])
    diff = pos[:, None, :] - pos[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    thr = np.where(lm[:, None] | lm[None, :], scenario.range_landmark_m, scenario.range_node_m)
    adj = dist < thr
    np.fill_diagonal(adj, False)
    return ConnectivityGraph(tuple(np.flatnonzero(row) for row in adj))


def degree_stats(graph: ConnectivityGraph, nodes: list[Node]) -> tuple[float, float]:
    """(avg landmark degree, avg unknown degree), averaged over unknown nodes."""
    lm = np.array([n.role is NodeRole.LANDMARK for n in nodes])
    unknowns = [n.id for n in nodes if n.role is NodeRole.UNKNOWN]
    if not unknowns:
        raise ValueError("degree stats need at least one unknown node")
    lm_degs = [int(lm[graph.neighbors[u]].sum()) for u in unknowns]
    unk_degs = [len(graph.neighbors[u]) - d for u, d in zip(unknowns, lm_degs)]
    return float(np.mean(lm_degs)), float(np.mean(unk_degs))


def make_nodes(field: GridField, landmark_positions: list[Coordinate],
               unknown_positions: list[Coordinate], ptx_landmark_dbm: float,
               ptx_unknown_dbm: float) -> list[Node]:
    """Assemble the node list: landmarks first (delta pmfs), then unknowns (uniform)."""
    nodes: list[Node] = []
    for pos in landmark_positions:
        cell = field.position_to_cell(pos)
        nodes.append(Node(len(nodes), NodeRole.LANDMARK, pos, ptx_landmark_dbm,
                          delta_pmf(field, cell)))
    for pos in unknown_positions:
        nodes.append(Node(len(nodes), NodeRole.UNKNOWN, pos, ptx_unknown_dbm,
                          uniform_pmf(field)))
    return nodes
