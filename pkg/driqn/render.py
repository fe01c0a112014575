"""SVG documents for logged trajectories and learning curves."""
from __future__ import annotations
import logging
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .canvas import PlotCanvas
from .evaluation import Curve
from .types import Outcome, WorldMap
from .world import load_layout, read_trajectory

log = logging.getLogger(__name__)

OUTCOME_COLORS = {
    Outcome.GOAL_REACHED.value: "tab:green",
    Outcome.COLLISION.value: "tab:red",
    Outcome.TIMEOUT.value: "tab:orange",
    Outcome.RUNNING.value: "tab:gray",
}


def legend(canvas: PlotCanvas) -> None:
    canvas.legend_entry("obstacle", "dimgray", "o")
    canvas.legend_entry("vortex core", "tab:blue", "o")
    canvas.legend_entry("start", "black", "s")
    canvas.legend_entry("goal", "gold", "*")
    for outcome, color in OUTCOME_COLORS.items():
        if outcome != Outcome.RUNNING.value:
            canvas.legend_entry(f"path ({outcome})", color)


def draw_world(canvas: PlotCanvas, world: WorldMap) -> None:
    xmin, ymin, xmax, ymax = world.bounds
    canvas.rect(xmin, ymin, xmax - xmin, ymax - ymin, "black", gid="bounds")
    for i, o in enumerate(world.obstacles):
        canvas.circle(o.center[0], o.center[1], o.radius, "dimgray", gid=f"obstacle_{i}")
    for i, v in enumerate(world.vortices):
        canvas.circle(v.center[0], v.center[1], v.core_radius, "tab:blue", gid=f"vortex_{i}",
                      filled=False, dashed=True)
    canvas.marker(world.start[0], world.start[1], "s", "black", gid="start")
    canvas.marker(world.goal[0], world.goal[1], "*", "gold", gid="goal")


def trajectory_canvas(world: WorldMap, rows: list[dict], title: str) -> PlotCanvas:
    canvas = PlotCanvas(title, world.bounds)
    legend(canvas)
    draw_world(canvas, world)
    outcome = rows[-1]["outcome"] if rows else Outcome.RUNNING.value
    canvas.polyline([r["x"] for r in rows], [r["y"] for r in rows],
                    OUTCOME_COLORS.get(outcome, "tab:gray"), gid="path")
    return canvas


def latest_step_dir(run_dir: Path) -> Path | None:
    steps = sorted((run_dir / "trajectories").glob("step_*"), key=lambda p: int(p.name.split("_")[1]))
    return steps[-1] if steps else None


def render_trajectories(run_dir: str | Path, episode_ids: list[int], out_dir: str | Path | None = None,
                        step: int | None = None) -> list[Path]:
    """One SVG per logged episode; an empty id list yields a legend-only document."""
    run_dir = Path(run_dir)
    out_dir = Path(out_dir) if out_dir is not None else run_dir / "renders"
    if not episode_ids:
        canvas = PlotCanvas("legend", (0.0, 0.0, 1.0, 1.0))
        legend(canvas)
        return [canvas.save(out_dir / "legend.svg")]

    source = run_dir / "trajectories" / f"step_{step}" if step is not None else latest_step_dir(run_dir)
    written = []
    for i in episode_ids:
        if source is None or not (source / f"episode_{i}.csv").exists():
            log.warning("episode %d not found under %s; skipping", i, source or run_dir)
            continue
        world = load_layout(source / f"episode_{i}.yaml")
        rows = read_trajectory(source / f"episode_{i}.csv")
        canvas = trajectory_canvas(world, rows, f"{source.name} episode {i}")
        written.append(canvas.save(out_dir / f"{source.name}_episode_{i}.svg"))
    return written


def render_learning_curves(curves: list[Curve], path: str | Path) -> Path:
    """Mean line with a +-std band per group, one panel per metric."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    metrics = list(curves[0].mean) if curves else ["SR"]
    fig, axes = plt.subplots(1, len(metrics), figsize=(5 * len(metrics), 4), squeeze=False)
    try:
        for ax, metric in zip(axes[0], metrics):
            for curve in curves:
                mean, std = curve.mean[metric], curve.std[metric]
                (line,) = ax.plot(curve.steps, mean, label=curve.label)
                line.set_gid(f"curve_{metric}_{curve.label}")
                ax.fill_between(curve.steps, mean - std, mean + std, color=line.get_color(), alpha=0.2)
            ax.set_xlabel("training steps")
            ax.set_title(metric)
        if curves:
            axes[0][0].legend(fontsize="small")
        fig.tight_layout()
        fig.savefig(path, format="svg")
    finally:
        plt.close(fig)
    return path
