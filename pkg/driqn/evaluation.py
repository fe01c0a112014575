"""Evaluation protocol, six-metric bookkeeping, run comparison and curve smoothing."""
from __future__ import annotations
import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agents import Policy
from .config import RunConfig
from .noise import ComponentRanges, assign_subgroup, build_catalog, perturb
from .types import ActionCommand, ConfigError, DriqnError, Outcome, WorldMap
from .world import LayoutError, read_trajectory, reset, save_layout, sense, step, write_trajectory

log = logging.getLogger(__name__)


class CompareError(DriqnError):
    """Runs cannot be compared."""


METRIC_COLUMNS = ("step", "SR", "CR", "TR", "FCR", "AT", "AE", "mean_lambda_entropy", "grad_norm")
POSITIVE_METRICS = ("SR", "FCR")
NEGATIVE_METRICS = ("CR", "TR", "AT", "AE")


@dataclass(frozen=True)
class MetricsRecord:
    sr: float
    cr: float
    tr: float
    fcr: float
    at: float | None
    ae: float | None

    @classmethod
    def from_episodes(cls, episodes: list[EpisodeLog]) -> MetricsRecord:
        if not episodes:
            raise DriqnError("cannot score an empty evaluation")
        n = len(episodes)
        goals = [e for e in episodes if e.outcome is Outcome.GOAL_REACHED]
        collisions = sum(e.outcome is Outcome.COLLISION for e in episodes)
        timeouts = n - len(goals) - collisions
        sr, cr, tr = len(goals) / n, collisions / n, timeouts / n
        fcr = float(np.mean([e.total_reward for e in episodes]))
        at = float(np.mean([e.duration for e in goals])) if goals else None
        ae = float(np.mean([e.energy for e in goals])) if goals else None
        return cls(sr, cr, tr, fcr, at, ae)

    def as_row(self) -> dict:
        return {"SR": self.sr, "CR": self.cr, "TR": self.tr, "FCR": self.fcr, "AT": self.at, "AE": self.ae}


@dataclass
class EpisodeLog:
    seed: int
    world: WorldMap
    subgroup_id: int
    outcome: Outcome = Outcome.RUNNING
    rows: list[dict] = field(default_factory=list)
    total_reward: float = 0.0
    steps: int = 0
    duration: float = 0.0
    energy: float = 0.0


# ============================================================
# Episodes
# ============================================================

def eval_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    """(subgroup, noise, policy) streams owned by one evaluation episode."""
    children = np.random.SeedSequence([seed, 0xE7A1]).spawn(3)
    return tuple(np.random.default_rng(c) for c in children)


def run_episode(policy: Policy, cfg: RunConfig, seed: int) -> EpisodeLog:
    params = cfg.world
    catalog = build_catalog(list(cfg.noise.kinds), cfg.noise.intensity)
    sub_rng, noise_rng, act_rng = eval_streams(seed)
    try:
        state, world = reset(seed, cfg.randomize_layout, params)
    except LayoutError as exc:
        # evaluation seeds are frozen
        raise ConfigError(f"evaluation seed {seed} has no feasible layout ({exc}); choose another base",
                          "eval_seed_base") from exc
    spec = assign_subgroup(sub_rng, catalog)
    ranges = ComponentRanges.for_world(world, params)
    policy.reset()

    episode = EpisodeLog(seed=seed, world=world, subgroup_id=spec.subgroup_id)
    episode.rows.append({"t": 0.0, "x": state.position[0], "y": state.position[1], "psi": state.heading,
                         "v": state.speed, "reward": 0.0, "outcome": Outcome.RUNNING.value})
    effort = 0.0
    while True:
        obs = perturb(sense(state, world, params), spec, noise_rng, ranges, cfg.noise.calibration)
        cmd = ActionCommand(policy.act(obs, act_rng))
        result = step(state, cmd, world, params.dt, params)
        state = result.next_state
        effort += (cmd.accel ** 2 + cmd.turn_rate ** 2) * params.dt
        episode.total_reward += result.reward
        episode.rows.append({"t": state.step_count * params.dt, "x": state.position[0],
                             "y": state.position[1], "psi": state.heading, "v": state.speed,
                             "reward": result.reward, "outcome": result.outcome.value})
        if result.outcome.terminal:
            episode.outcome = result.outcome
            break
    episode.steps = state.step_count
    episode.duration = state.step_count * params.dt
    episode.energy = effort * cfg.energy_scale
    return episode


def evaluate(policy: Policy, cfg: RunConfig,
             seeds: list[int] | None = None) -> tuple[MetricsRecord, list[EpisodeLog]]:
    """Exploration-free rollouts on the frozen evaluation seeds, scored in seed order."""
    seeds = cfg.eval_seeds if seeds is None else seeds
    episodes = [run_episode(policy, cfg, s) for s in seeds]
    record = MetricsRecord.from_episodes(episodes)
    log.info("eval over %d envs: SR %.2f CR %.2f TR %.2f FCR %.1f",
             len(episodes), record.sr, record.cr, record.tr, record.fcr)
    return record, episodes


def write_episodes(episodes: list[EpisodeLog], directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, ep in enumerate(episodes):
        write_trajectory(ep.rows, directory / f"episode_{i}.csv")
        save_layout(ep.world, directory / f"episode_{i}.yaml")


def replay_fcr(directory: str | Path) -> float:
    """Mean of re-summed logged per-step rewards across the episodes in a directory."""
    paths = sorted(Path(directory).glob("episode_*.csv"), key=lambda p: int(p.stem.split("_")[1]))
    if not paths:
        raise DriqnError(f"no trajectories in {directory}")
    totals = []
    for path in paths:
        total = 0.0
        for row in read_trajectory(path)[1:]:
            total += row["reward"]
        totals.append(total)
    return float(np.mean(totals))


# ============================================================
# Metric logs
# ============================================================

def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return "" if math.isnan(value) else repr(value)
    return str(value)


class MetricsLog:
    """Append-only metrics.csv writer."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        if not self.path.exists():
            with open(self.path, "w", newline="") as f:
                csv.writer(f).writerow(METRIC_COLUMNS)

    def append(self, step_: int, record: MetricsRecord, lambda_entropy: float | None = None,
               grad_norm: float | None = None) -> None:
        row = {"step": step_, **record.as_row(), "mean_lambda_entropy": lambda_entropy,
               "grad_norm": grad_norm}
        with open(self.path, "a", newline="") as f:
            csv.writer(f).writerow([_cell(row[c]) for c in METRIC_COLUMNS])


def read_metrics(path: str | Path) -> list[dict]:
    rows = []
    with open(path, newline="") as f:
        for raw in csv.DictReader(f):
            row = {"step": int(raw["step"])}
            for column in METRIC_COLUMNS[1:]:
                row[column] = float(raw[column]) if raw[column] != "" else None
            rows.append(row)
    return rows


# ============================================================
# Comparison
# ============================================================

@dataclass
class RunSummary:
    path: Path
    agent: str
    strategy: str
    intensity: float
    seed: int
    eval_seeds: list[int]
    final: dict


def load_run(run_dir: str | Path) -> RunSummary:
    run_dir = Path(run_dir)
    try:
        meta = json.loads((run_dir / "run.json").read_text())
    except FileNotFoundError:
        raise CompareError(f"{run_dir} has no run.json") from None
    rows = read_metrics(run_dir / "metrics.csv") if (run_dir / "metrics.csv").exists() else []
    if not rows:
        raise CompareError(f"{run_dir} has no completed evaluation")
    return RunSummary(run_dir, meta["agent"], meta["strategy"], float(meta["intensity"]),
                      int(meta["seed"]), list(meta["eval_seeds"]), rows[-1])


def percent_change(runner_up: float, best: float) -> float:
    """Signed percent change from runner-up to best."""
    return (best - runner_up) / abs(runner_up) * 100.0


@dataclass
class GroupStats:
    agent: str
    strategy: str
    intensity: float
    runs: int
    mean: dict[str, float | None]
    std: dict[str, float | None]


@dataclass
class SummaryTable:
    groups: list[GroupStats]
    improvements: dict[float, dict[str, float]]

    def to_csv(self, path: str | Path) -> None:
        metrics = METRIC_COLUMNS[1:7]
        header = ["intensity", "agent", "strategy", "runs"]
        for m in metrics:
            header += [f"{m}_mean", f"{m}_std"]
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(header)
            for intensity in sorted({g.intensity for g in self.groups}, reverse=True):
                for g in (g for g in self.groups if g.intensity == intensity):
                    row = [intensity, g.agent, g.strategy, g.runs]
                    for m in metrics:
                        row += [_cell(g.mean[m]), _cell(g.std[m])]
                    writer.writerow(row)
                if intensity in self.improvements:
                    imp = self.improvements[intensity]
                    row = [intensity, "improvement", "", ""]
                    for m in metrics:
                        row += [_cell(imp.get(m)), ""]
                    writer.writerow(row)

    def format(self) -> str:
        metrics = METRIC_COLUMNS[1:7]
        lines = ["═" * 100, "  " + "".join(f"{h:<14}" for h in ("level", "agent", "strategy") + metrics),
                 "─" * 100]
        for g in self.groups:
            cells = []
            for m in metrics:
                cells.append("--" if g.mean[m] is None else f"{g.mean[m]:.2f}±{g.std[m]:.2f}")
            lines.append("  " + "".join(f"{c:<14}" for c in (f"{g.intensity:g}", g.agent, g.strategy, *cells)))
        for intensity, imp in sorted(self.improvements.items(), reverse=True):
            cells = [f"{imp[m]:+.2f}%" if m in imp else "--" for m in metrics]
            lines.append("  " + "".join(f"{c:<14}" for c in (f"{intensity:g}", "improvement", "", *cells)))
        lines.append("═" * 100)
        return "\n".join(lines)


def _group_stats(runs: list[RunSummary]) -> GroupStats:
    mean, std = {}, {}
    for m in METRIC_COLUMNS[1:7]:
        values = [r.final[m] for r in runs if r.final[m] is not None]
        mean[m] = float(np.mean(values)) if values else None
        std[m] = float(np.std(values)) if values else None
    first = runs[0]
    return GroupStats(first.agent, first.strategy, first.intensity, len(runs), mean, std)


def improvement_row(groups: list[GroupStats]) -> dict[str, float]:
    """Best versus runner-up per metric; metrics with fewer than two values are left out."""
    out = {}
    for m in POSITIVE_METRICS + NEGATIVE_METRICS:
        values = sorted(g.mean[m] for g in groups if g.mean[m] is not None)
        if len(values) < 2:
            continue
        if m in POSITIVE_METRICS:
            best, runner_up = values[-1], values[-2]
        else:
            best, runner_up = values[0], values[1]
        if runner_up == 0.0:
            continue
        out[m] = percent_change(runner_up, best)
    return out


def compare(run_dirs: list[str | Path]) -> SummaryTable:
    runs = [load_run(d) for d in run_dirs]
    if not runs:
        raise CompareError("no runs given")
    reference = runs[0].eval_seeds
    for run in runs[1:]:
        if run.eval_seeds != reference:
            raise CompareError(f"{run.path} was evaluated on different seeds than {runs[0].path}")

    keyed: dict[tuple[str, str, float], list[RunSummary]] = {}
    for run in runs:
        keyed.setdefault((run.agent, run.strategy, run.intensity), []).append(run)
    groups = [_group_stats(v) for _, v in sorted(keyed.items(), key=lambda kv: (-kv[0][2], kv[0][0], kv[0][1]))]

    improvements = {}
    for intensity in {g.intensity for g in groups}:
        level = [g for g in groups if g.intensity == intensity]
        if len(level) >= 2:
            improvements[intensity] = improvement_row(level)
    return SummaryTable(groups, improvements)


# ============================================================
# Learning curves
# ============================================================

def ema(values, weight: float = 0.6) -> np.ndarray:
    """Exponential moving average seeded with the first value."""
    if not 0.0 <= weight < 1.0:
        raise ValueError(f"weight must lie in [0, 1), got {weight}")
    values = np.asarray(values, dtype=np.float64)
    out = np.empty_like(values)
    last = values[0] if values.size else 0.0
    for i, v in enumerate(values):
        last = weight * last + (1.0 - weight) * v
        out[i] = last
    return out


@dataclass
class Curve:
    label: str
    steps: np.ndarray
    mean: dict[str, np.ndarray]
    std: dict[str, np.ndarray]


def learning_curves(run_dirs: list[str | Path], metrics=("SR", "CR", "FCR"),
                    weight: float = 0.6) -> list[Curve]:
    """Per (agent, strategy, intensity) group: EMA-smoothed mean and std over seeds."""
    keyed: dict[tuple[str, str, float], list[list[dict]]] = {}
    for d in run_dirs:
        meta = json.loads((Path(d) / "run.json").read_text())
        key = (meta["agent"], meta["strategy"], float(meta["intensity"]))
        keyed.setdefault(key, []).append(read_metrics(Path(d) / "metrics.csv"))
    curves = []
    for (agent, strategy, intensity), logs in sorted(keyed.items()):
        length = min(len(rows) for rows in logs)
        if length == 0:
            log.warning("skipping %s/%s/%g: no evaluations logged", agent, strategy, intensity)
            continue
        steps = np.array([r["step"] for r in logs[0][:length]])
        mean, std = {}, {}
        for m in metrics:
            smoothed = np.stack([ema([r[m] for r in rows[:length]], weight) for rows in logs])
            mean[m] = smoothed.mean(axis=0)
            std[m] = smoothed.std(axis=0)
        curves.append(Curve(f"{agent} ({strategy}, {intensity:g})", steps, mean, std))
    return curves
