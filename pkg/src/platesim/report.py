"""Plain-text and CSV serialization of run results.

Every writer here is deterministic: rows depend only on scene config and
simulation outcomes, never on wall clocks or machine state, so repeated
runs with the same seed produce byte-identical files.

Formats
-------
plan report (text): sections ``scene`` (name, hash, grid, dt, seed,
threshold), ``direct estimates`` (one row per item: skewer/scoop/twirl
and the best primitive), ``decision`` (target, rationale, chosen action,
predicted post estimate), ``candidates`` (one row per rollout) and, when
an execution trace is given, ``execution`` (attempt rows).

candidates CSV header:
    action,feasible,post_best,monitor_fired,steps,renders,error

metrics CSV header (one row per sampled step of a rollout):
    step,t,mass,com_x,com_y,com_z,momentum_x,momentum_y,momentum_z,kinetic_energy

volumes CSV header (cmd_recon output):
    item,category,volume_m3,particles
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

from .estimator import SuccessEstimate
from .mpm import SimWorld
from .planner import ExecutionTrace, PlanResult
from .scene import SceneConfig

__all__ = [
    "plan_report",
    "candidates_csv",
    "MetricsRecorder",
    "metrics_csv",
    "volumes_csv",
    "estimates_lines",
]

METRICS_FIELDS = [
    "step", "t", "mass", "com_x", "com_y", "com_z",
    "momentum_x", "momentum_y", "momentum_z", "kinetic_energy",
]

CANDIDATE_FIELDS = [
    "action", "feasible", "post_best", "monitor_fired", "steps", "renders", "error",
]


def _fmt(value: float, digits: int = 4) -> str:
    return f"{value:.{digits}f}"


def estimates_lines(estimates: dict[int, SuccessEstimate], categories: dict[int, str]) -> list[str]:
    """Fixed-width rows for the per-item estimate table."""
    lines = ["  item  category          skewer  scoop   twirl   best"]
    for item_id in sorted(estimates):
        est = estimates[item_id]
        name, value = est.best
        cat = categories.get(item_id, "?")
        lines.append(
            f"  {item_id:<5d} {cat:<17s} {_fmt(est.skewer)}  {_fmt(est.scoop)}"
            f"  {_fmt(est.twirl)}  {name} {_fmt(value)}"
        )
    return lines


def plan_report(
    config: SceneConfig,
    result: PlanResult,
    trace: ExecutionTrace | None = None,
) -> str:
    """Render one plan (and optionally its execution) as structured text."""
    categories = {item.item_id: item.category for item in config.items}
    out = [
        "platesim plan report",
        f"scene: {config.name}",
        f"hash: {config.scene_hash()}",
        f"grid: {config.grid_dims}^3  dt: {config.dt:g}  seed: {config.seed}",
        f"items: {len(config.items)}",
        f"threshold: {config.planner.threshold:g}",
        "",
        "direct estimates",
        *estimates_lines(result.direct, categories),
        "",
        "decision",
        f"  target item: {result.target_item}",
        f"  best direct: {result.best_primitive} {_fmt(result.best_direct)}",
        f"  rationale: {result.rationale}",
    ]
    if result.chosen_action is not None:
        out.append(f"  chosen action: {result.chosen_action.label}")
        out.append(f"  predicted post estimate: {_fmt(result.chosen_post)}")
    else:
        out.append("  chosen action: none (direct acquisition)")
    if result.warning:
        out.append(f"  warning: {result.warning}")

    if result.candidates:
        out += ["", "candidates",
                "  action   feasible  post_best  monitor  steps  renders"]
        for cand in result.candidates:
            note = f"  [{cand.error}]" if cand.error else ""
            out.append(
                f"  {cand.spec.label:<8s} {'yes' if cand.feasible else 'no':<9s}"
                f" {_fmt(cand.post_best):<10s}"
                f" {'yes' if cand.monitor_fired else 'no':<8s}"
                f" {cand.steps:<6d} {cand.render_count}{note}"
            )

    if trace is not None:
        out += ["", "execution",
                f"  succeeded: {'yes' if trace.succeeded else 'no'}"]
        for i, attempt in enumerate(trace.attempts, start=1):
            note = f"  [{attempt.error}]" if attempt.error else ""
            out.append(
                f"  attempt {i}: {attempt.label} predicted={_fmt(attempt.predicted)}"
                f" measured={_fmt(attempt.measured)}"
                f" {'ok' if attempt.success else 'shortfall'}{note}"
            )
    out.append("")
    return "\n".join(out)


def candidates_csv(result: PlanResult) -> str:
    """Per-candidate rollout table as delimited text."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CANDIDATE_FIELDS, lineterminator="\n")
    writer.writeheader()
    for cand in result.candidates:
        writer.writerow(
            {
                "action": cand.spec.label,
                "feasible": int(cand.feasible),
                "post_best": f"{cand.post_best:.6f}",
                "monitor_fired": int(bool(cand.monitor_fired)),
                "steps": cand.steps,
                "renders": cand.render_count,
                "error": cand.error or "",
            }
        )
    return buf.getvalue()


@dataclass
class MetricsRecorder:
    """Collects conservation diagnostics every ``every`` steps of a run.

    Pass :meth:`probe` as the ``progress`` callback of ``SimWorld.run``
    (or call it manually inside rollout loops); rows accumulate in
    :attr:`rows` ready for :func:`metrics_csv`.
    """

    every: int = 25
    rows: list[dict] = field(default_factory=list)

    def probe(self, i: int, nsteps: int, world: SimWorld) -> None:
        if i % self.every and i != nsteps:
            return
        self.sample(world)

    def step_probe(self, world: SimWorld) -> None:
        """Throttled observer keyed on the world's own step counter."""
        if world.step_count % self.every == 0:
            self.sample(world)

    def sample(self, world: SimWorld) -> None:
        com = world.com()
        mom = world.momentum()
        self.rows.append(
            {
                "step": world.step_count,
                "t": f"{world.t:.6f}",
                "mass": f"{world.total_mass():.9e}",
                "com_x": f"{com[0]:.6e}",
                "com_y": f"{com[1]:.6e}",
                "com_z": f"{com[2]:.6e}",
                "momentum_x": f"{mom[0]:.6e}",
                "momentum_y": f"{mom[1]:.6e}",
                "momentum_z": f"{mom[2]:.6e}",
                "kinetic_energy": f"{world.kinetic_energy():.6e}",
            }
        )


def metrics_csv(recorder: MetricsRecorder) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=METRICS_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in recorder.rows:
        writer.writerow(row)
    return buf.getvalue()


def volumes_csv(
    volumes: dict[int, float],
    categories: dict[int, str],
    particle_counts: dict[int, int],
) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["item", "category", "volume_m3", "particles"])
    for item_id in sorted(volumes):
        writer.writerow(
            [
                item_id,
                categories.get(item_id, "?"),
                f"{volumes[item_id]:.9e}",
                particle_counts.get(item_id, 0),
            ]
        )
    return buf.getvalue()
