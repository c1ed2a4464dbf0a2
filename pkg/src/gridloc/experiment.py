"""Batch experiment driver: seeded Monte-Carlo runs, sweeps, and result files.

All outputs are plain text (CSV, matrix dumps, JSON manifest) and are a pure
function of (configuration, seed): rerunning a plan reproduces every file
byte for byte. The manifest lists each emitted file with its SHA-256 hash.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ScenarioConfig, build_scenario, load_config
from .deployment import SUPPORTED_LANDMARK_COUNTS, degree_stats
from .engine import RoundRecord, SimState, init_state, run
from .errors import ConfigError
from .metrics import TrialResult, coverage_check, two_drms

SWEEP_AXES = ("ptx", "landmarks", "density")
OUT_DIR_ENV = "GRIDLOC_OUT"


@dataclass
class ExperimentPlan:
    """One batch: a scenario config, optional sweep axis, trial count, output dir."""

    config_source: str | Path
    out_dir: Path
    trials: int | None = None
    seed: int | None = None
    max_steps: int | None = None
    axis: str | None = None
    axis_values: list[float] | None = None
    heatmap_nodes: list[int] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.out_dir = Path(self.out_dir)
        if self.axis is not None and self.axis not in SWEEP_AXES:
            raise ConfigError(f"sweep axis must be one of {SWEEP_AXES}, got {self.axis!r}")


def _axis_values(axis: str, explicit: list[float] | None) -> list[float]:
    if explicit:
        return [float(v) for v in explicit]
    if axis == "ptx":
        return [float(v) for v in range(0, 16)]
    if axis == "landmarks":
        return [float(v) for v in SUPPORTED_LANDMARK_COUNTS]
    return [3.0, 7.0]


def _apply_axis(cfg: ScenarioConfig, axis: str, value: float) -> ScenarioConfig:
    if axis == "ptx":
        return dataclasses.replace(cfg, ptx_dbm_unknown=float(value))
    if axis == "landmarks":
        return dataclasses.replace(cfg, landmark_count=int(value))
    return dataclasses.replace(cfg, density_per_ha=float(value), count=None)


def _axis_label(axis: str, value: float) -> str:
    return f"{axis}_{value:g}".replace(".", "p")


@dataclass
class ConfigRunResult:
    """Aggregates of all trials of one configuration."""

    cfg: ScenarioConfig
    rounds: list[int]
    pooled_errors: list[np.ndarray]          # per round, nodes x trials pooled
    avg_landmark_degree: float
    avg_unknown_degree: float
    trial_results: list[TrialResult]
    trajectory_rows: list[tuple]
    heatmaps: dict[int, str]

    def round_two_drms(self, round_index: int) -> float:
        return two_drms(self.pooled_errors[round_index])

    @property
    def final_two_drms(self) -> float:
        return self.round_two_drms(self.rounds[-1])


def _round_errors(state: SimState, record: RoundRecord) -> np.ndarray:
    centroids = state.scenario.field.centroids()
    true_pos = state._positions[list(record.unknown_ids)]
    decided = centroids[record.decided_cells - 1]
    return np.hypot(*(decided - true_pos).T)


def _rounds_to_convergence(records: list[RoundRecord]) -> int:
    final = records[-1].decided_cells
    for rec in records:
        if np.array_equal(rec.decided_cells, final):
            return rec.round_index
    return records[-1].round_index


def run_trials(cfg: ScenarioConfig, trials: int, max_steps: int,
               heatmap_nodes: list[int] | None = None) -> ConfigRunResult:
    """Run seeded trials of one configuration and pool the per-round errors."""
    heatmap_nodes = list(heatmap_nodes or []) or list(cfg.heatmap_nodes)
    pooled: list[list[np.ndarray]] = [[] for _ in range(max_steps + 1)]
    lm_degs, unk_degs = [], []
    trial_results: list[TrialResult] = []
    trajectory_rows: list[tuple] = []
    heatmaps: dict[int, str] = {}

    for trial in range(trials):
        scenario, rng = build_scenario(cfg, trial)
        state = init_state(scenario, rng, log_samples=False,
                           codec_payload=cfg.codec_payload_bytes)
        records = run(state, max_steps)
        lm_deg, unk_deg = degree_stats(state.graph, scenario.nodes)
        lm_degs.append(lm_deg)
        unk_degs.append(unk_deg)
        for rec in records:
            errors = _round_errors(state, rec)
            pooled[rec.round_index].append(errors)
            if cfg.log_trajectory:
                trajectory_rows.extend(
                    (trial, rec.round_index, node, ent, int(cell), err)
                    for node, ent, cell, err in zip(
                        rec.unknown_ids, rec.entropies, rec.decided_cells, errors)
                )
        trial_results.append(TrialResult(
            trial=trial,
            errors_m=_round_errors(state, records[-1]),
            rounds_to_convergence=_rounds_to_convergence(records),
            avg_landmark_degree=lm_deg,
            avg_unknown_degree=unk_deg,
        ))
        if trial == 0:
            for node_id in heatmap_nodes:
                heatmaps[node_id] = dump_heatmap(state, node_id)

    return ConfigRunResult(
        cfg=cfg,
        rounds=list(range(max_steps + 1)),
        pooled_errors=[np.concatenate(chunks) for chunks in pooled],
        avg_landmark_degree=float(np.mean(lm_degs)),
        avg_unknown_degree=float(np.mean(unk_degs)),
        trial_results=trial_results,
        trajectory_rows=trajectory_rows,
        heatmaps=heatmaps,
    )


def dump_heatmap(state: SimState, node_id: int) -> str:
    """Node pmf as an m x m text matrix, row-major, 6 significant digits."""
    if not 0 <= node_id < len(state.scenario.nodes):
        raise ValueError(f"unknown node id {node_id}")
    mat = state.scenario.nodes[node_id].pmf.as_matrix()
    return "\n".join(" ".join(f"{v:.6g}" for v in row) for row in mat) + "\n"


def _metrics_csv(result: ConfigRunResult) -> str:
    lines = ["scenario,round,two_drms_m,mean_error_m,coverage_at_2drms,"
             "avg_landmark_degree,avg_unknown_degree"]
    for r in result.rounds:
        errors = result.pooled_errors[r]
        drms = two_drms(errors)
        lines.append(
            f"{result.cfg.scenario_id},{r},{drms:.4f},{errors.mean():.4f},"
            f"{coverage_check(errors, drms):.6f},"
            f"{result.avg_landmark_degree:.4f},{result.avg_unknown_degree:.4f}"
        )
    return "\n".join(lines) + "\n"


def _trajectory_csv(result: ConfigRunResult) -> str:
    lines = ["trial,round,node,entropy,decided_cell,error_m"]
    lines.extend(
        f"{trial},{rnd},{node},{ent:.6f},{cell},{err:.4f}"
        for trial, rnd, node, ent, cell, err in result.trajectory_rows
    )
    return "\n".join(lines) + "\n"


def _write(path: Path, text: str, files: dict[str, str], root: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    data = text.encode()
    path.write_bytes(data)
    files[path.relative_to(root).as_posix()] = hashlib.sha256(data).hexdigest()
    return path


def run_experiment(plan: ExperimentPlan) -> list[Path]:
    """Execute a plan and write metrics, trajectories, heatmaps, and a manifest.

    The manifest goes last and lists every other file with its content hash.
    Returns all written paths.
    """
    cfg = load_config(plan.config_source)
    if plan.seed is not None:
        cfg = dataclasses.replace(cfg, seed=int(plan.seed))
    if plan.trials is not None:
        cfg = dataclasses.replace(cfg, trials=int(plan.trials))
    if plan.max_steps is not None:
        cfg = dataclasses.replace(cfg, max_steps=int(plan.max_steps))

    out_root = Path(os.environ.get(OUT_DIR_ENV, plan.out_dir))
    out_root.mkdir(parents=True, exist_ok=True)
    files: dict[str, str] = {}
    written: list[Path] = []

    if plan.axis is None:
        points = [(None, cfg)]
    else:
        values = _axis_values(plan.axis, plan.axis_values)
        points = []
        for v in values:
            sub = _apply_axis(cfg, plan.axis, v)
            label = _axis_label(plan.axis, v)
            sub = dataclasses.replace(sub, scenario_id=f"{cfg.scenario_id}[{label}]")
            points.append((v, sub))

    summary_rows = []
    for value, sub_cfg in points:
        result = run_trials(sub_cfg, sub_cfg.trials, sub_cfg.max_steps,
                            plan.heatmap_nodes)
        sub_dir = out_root if value is None else out_root / _axis_label(plan.axis, value)
        written.append(_write(sub_dir / "metrics.csv", _metrics_csv(result), files, out_root))
        if sub_cfg.log_trajectory:
            written.append(_write(sub_dir / "trajectory.csv", _trajectory_csv(result),
                                  files, out_root))
        for node_id, text in sorted(result.heatmaps.items()):
            written.append(_write(sub_dir / f"heatmap_node{node_id}.txt", text,
                                  files, out_root))
        if value is not None:
            summary_rows.append(
                f"{_axis_label(plan.axis, value)},{value:g},"
                f"{result.final_two_drms:.4f},"
                f"{result.pooled_errors[-1].mean():.4f},"
                f"{result.avg_landmark_degree:.4f},{result.avg_unknown_degree:.4f}"
            )

    if plan.axis is not None:
        text = ("label,axis_value,final_two_drms_m,final_mean_error_m,"
                "avg_landmark_degree,avg_unknown_degree\n" + "\n".join(summary_rows) + "\n")
        written.append(_write(out_root / "sweep_summary.csv", text, files, out_root))

    manifest = {
        "scenario_id": cfg.scenario_id,
        "config": cfg.to_dict(),
        "axis": plan.axis,
        "axis_values": None if plan.axis is None else [v for v, _ in points],
        "master_seed": cfg.seed,
        "trials": cfg.trials,
        "trial_seed_scheme": "numpy SeedSequence([master_seed, trial_index])",
        "files": files,
    }
    manifest_path = out_root / "manifest.json"
    manifest_path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    written.append(manifest_path)
    return written
