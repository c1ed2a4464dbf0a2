"""Scenario configuration: JSON loading, named presets, scenario construction."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .channel import PathLossModel
from .deployment import (
    SUPPORTED_LANDMARK_COUNTS,
    Scenario,
    make_nodes,
    place_grid,
    place_landmarks,
    place_random,
    scaled_range,
)
from .errors import ConfigError
from .grid import GridField

HECTARE_M2 = 10_000.0


@dataclass
class ChannelConfig:
    pl0_db: float
    n: float
    sigma_db: float
    d0_m: float = 1.0
    mode: str = "below_canopy"

    def model(self) -> PathLossModel:
        return PathLossModel(self.pl0_db, self.n, self.sigma_db, self.d0_m)


# Measured orchard presets (2.45 GHz).
NODE_CHANNEL = ChannelConfig(pl0_db=75.0, n=3.61, sigma_db=5.27, mode="below_canopy")
LANDMARK_CHANNEL = ChannelConfig(pl0_db=72.0, n=2.91, sigma_db=4.14, mode="above_canopy")


@dataclass
class ScenarioConfig:
    """Everything needed to rebuild a deployment and its run schedule."""

    scenario_id: str = "scenario"
    field_ha: float = 20.0
    cell_size_m: float = 30.0
    placement: str = "random"          # "random" | "grid"
    density_per_ha: float | None = 7.0
    count: int | None = None           # overrides density when set
    grid_spacing_m: float | None = None
    landmark_count: int = 8
    ptx_dbm_unknown: float = 15.0
    ptx_dbm_landmark: float = 15.0
    ptx_ref_dbm: float = 15.0          # power at which the ranges below hold
    sensitivity_dbm: float = -103.0
    range_node_m: float = 120.0
    range_landmark_m: float = 220.0
    seed: int = 1
    trials: int = 10
    max_steps: int = 20
    hop_limit: int = 8
    codec_payload_bytes: int | None = None
    heatmap_nodes: list[int] = field(default_factory=list)
    log_trajectory: bool = True
    channel_node: ChannelConfig = field(default_factory=lambda: NODE_CHANNEL)
    channel_landmark: ChannelConfig = field(default_factory=lambda: LANDMARK_CHANNEL)

    def __post_init__(self) -> None:
        if self.placement not in ("random", "grid"):
            raise ConfigError(f"placement must be 'random' or 'grid', got {self.placement!r}")
        if self.landmark_count not in SUPPORTED_LANDMARK_COUNTS:
            raise ConfigError(
                f"landmark_count {self.landmark_count} unsupported; "
                f"choose one of {SUPPORTED_LANDMARK_COUNTS}"
            )
        if self.count is None and self.density_per_ha is None:
            raise ConfigError("either count or density_per_ha is required")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.max_steps < 0:
            raise ConfigError("max_steps must be >= 0")

    @property
    def side_length_m(self) -> float:
        return math.sqrt(self.field_ha * HECTARE_M2)

    @property
    def unknown_count(self) -> int:
        if self.count is not None:
            return int(self.count)
        return int(round(self.density_per_ha * self.field_ha))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict) -> "ScenarioConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        data = dict(raw)
        for key, default in (("channel_node", NODE_CHANNEL), ("channel_landmark", LANDMARK_CHANNEL)):
            if key in data and isinstance(data[key], dict):
                extra = set(data[key]) - set(ChannelConfig.__dataclass_fields__)
                if extra:
                    raise ConfigError(f"unknown {key} keys: {sorted(extra)}")
                data[key] = ChannelConfig(**data[key])
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def preset_names() -> list[str]:
    names = []
    for ha in (6, 20):
        for density in (3, 7):
            for lm in SUPPORTED_LANDMARK_COUNTS:
                names.append(f"orchard_{ha}ha_d{density}_l{lm}")
    return names


def preset(name: str) -> ScenarioConfig:
    """Named deployment presets: orchard_{6|20}ha_d{3|7}_l{2|3|4|6|8}."""
    if name not in preset_names():
        raise ConfigError(f"unknown preset {name!r}; see `gridloc presets`")
    _, ha_part, d_part, l_part = name.split("_")
    return ScenarioConfig(
        scenario_id=name,
        field_ha=float(ha_part.removesuffix("ha")),
        density_per_ha=float(d_part.removeprefix("d")),
        landmark_count=int(l_part.removeprefix("l")),
    )


def load_config(source: str | Path) -> ScenarioConfig:
    """Load a scenario config from a preset name or a JSON file path."""
    text = str(source)
    if not text.endswith(".json") and not Path(text).exists():
        return preset(text)
    path = Path(text)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    cfg = ScenarioConfig.from_dict(raw)
    return cfg


def trial_rng(cfg_seed: int, trial_index: int) -> np.random.Generator:
    """Independent, order-free stream for one trial of one configuration."""
    return np.random.default_rng(np.random.SeedSequence([int(cfg_seed), int(trial_index)]))


def build_scenario(cfg: ScenarioConfig, trial_index: int = 0,
                   rng: np.random.Generator | None = None
                   ) -> tuple[Scenario, np.random.Generator]:
    """Materialize one deployment; the returned generator continues the trial stream."""
    if rng is None:
        rng = trial_rng(cfg.seed, trial_index)
    fld = GridField(cfg.side_length_m, cfg.cell_size_m)
    landmark_positions = place_landmarks(fld, cfg.landmark_count)
    if cfg.placement == "grid":
        spacing = cfg.grid_spacing_m
        if spacing is None:
            spacing = math.sqrt(HECTARE_M2 / cfg.density_per_ha)
        unknown_positions = place_grid(fld, spacing)
    else:
        unknown_positions = place_random(fld, cfg.unknown_count, rng)
    nodes = make_nodes(fld, landmark_positions, unknown_positions,
                       cfg.ptx_dbm_landmark, cfg.ptx_dbm_unknown)
    scenario = Scenario(
        field=fld,
        model_node=cfg.channel_node.model(),
        model_landmark=cfg.channel_landmark.model(),
        nodes=nodes,
        range_node_m=scaled_range(cfg.range_node_m, cfg.ptx_dbm_unknown,
                                  cfg.ptx_ref_dbm, cfg.channel_node.n),
        range_landmark_m=scaled_range(cfg.range_landmark_m, cfg.ptx_dbm_landmark,
                                      cfg.ptx_ref_dbm, cfg.channel_landmark.n),
        seed=cfg.seed,
        max_steps=cfg.max_steps,
        hop_limit=cfg.hop_limit,
        scenario_id=cfg.scenario_id,
    )
    return scenario, rng
