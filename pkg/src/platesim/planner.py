"""Decision loop: score direct acquisition, explore pre-acquisition actions.

The protocol: estimate success for every item from the current observation;
if the best direct estimate clears the threshold, acquire directly. Below
threshold, roll out each feasible candidate action exactly once on a cloned
world, re-observe the rendered end state, and pick the action with the
best post estimate if it beats going direct. Execution then replays the
chosen action on the live world with a single retry on shortfall.

Observation and rollout are injected as callables so the protocol itself
is testable with stubs, without a simulator in the loop.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional

from .actions import ActionParams, ActionSpec, candidate_actions, plan_action
from .errors import ConfigError, InfeasibleActionError, PlatesimError
from .estimator import SuccessEstimate
from .mpm import SimWorld
from .render import CameraSpec, RenderMode, RenderPolicy, rollout_with_policy

__all__ = [
    "PlannerConfig",
    "CandidateOutcome",
    "PlanResult",
    "AttemptRecord",
    "ExecutionTrace",
    "RolloutRun",
    "plan",
    "execute",
    "make_rollout_fn",
]

RATIONALE_DIRECT = "DirectAboveThreshold"
RATIONALE_IMPROVES = "PreAcqImproves"
RATIONALE_FALLBACK = "FallbackDirect"

ObserveFn = Callable[[SimWorld], dict[int, SuccessEstimate]]


@dataclass(frozen=True)
class PlannerConfig:
    threshold: float = 0.70
    retry_once: bool = True
    rollout_duration_cap: float = 2.5
    workers: int = 1
    success_slack: float = 0.15

    def __post_init__(self):
        if not (0.0 < self.threshold < 1.0):
            raise ConfigError("planner threshold must lie in (0, 1)")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.rollout_duration_cap <= 0:
            raise ConfigError("rollout_duration_cap must be positive")

    @classmethod
    def from_dict(cls, data: dict) -> "PlannerConfig":
        known = set(cls.__dataclass_fields__)
        bad = set(data) - known
        if bad:
            raise ConfigError(f"unknown planner fields: {sorted(bad)}")
        return cls(**data)


@dataclass(frozen=True)
class RolloutRun:
    """What one action rollout did to (its copy of) the world."""

    world: Optional[SimWorld]
    feasible: bool
    steps: int = 0
    render_count: int = 0
    monitor_fired: bool = False
    error: Optional[str] = None


@dataclass(frozen=True)
class CandidateOutcome:
    spec: ActionSpec
    feasible: bool
    post_best: float
    post_estimate: Optional[SuccessEstimate] = None
    steps: int = 0
    render_count: int = 0
    monitor_fired: bool = False
    wall_clock: float = 0.0
    error: Optional[str] = None


@dataclass(frozen=True)
class PlanResult:
    target_item: int
    direct: dict[int, SuccessEstimate]
    best_direct: float
    best_primitive: str
    rationale: str
    candidates: tuple[CandidateOutcome, ...] = ()
    chosen_action: Optional[ActionSpec] = None
    chosen_post: Optional[float] = None
    warning: Optional[str] = None


@dataclass(frozen=True)
class AttemptRecord:
    label: str
    predicted: float
    measured: float
    success: bool
    error: Optional[str] = None


@dataclass(frozen=True)
class ExecutionTrace:
    target_item: int
    attempts: tuple[AttemptRecord, ...]
    final_estimates: dict[int, SuccessEstimate]
    succeeded: bool


def make_rollout_fn(
    camera: CameraSpec,
    config: PlannerConfig,
    render_mode: RenderMode = RenderMode.ON_DEMAND,
) -> Callable[[SimWorld, ActionSpec], RolloutRun]:
    """Default rollout: plan the action's trajectory and simulate it."""

    def rollout(world: SimWorld, spec: ActionSpec) -> RolloutRun:
        try:
            trajectory, monitor = plan_action(world, spec)
        except InfeasibleActionError as exc:
            return RolloutRun(world=None, feasible=False, error=str(exc))
        duration = min(
            trajectory.duration + spec.params.settle_time,
            config.rollout_duration_cap,
        )
        try:
            result = rollout_with_policy(
                world,
                trajectory,
                RenderPolicy(mode=render_mode),
                camera,
                duration=duration,
                monitor=monitor,
                settle_time=spec.params.settle_time,
            )
        except PlatesimError as exc:
            return RolloutRun(world=world, feasible=True, error=str(exc))
        return RolloutRun(
            world=result.world,
            feasible=True,
            steps=result.steps,
            render_count=result.render_count,
            monitor_fired=result.monitor_fired,
        )

    return rollout


def _best_of(estimates: dict[int, SuccessEstimate]) -> tuple[int, str, float]:
    """Highest estimate over items and primitives; ties to the lowest id."""
    best = None
    for item_id in sorted(estimates):
        name, value = estimates[item_id].best
        if best is None or value > best[2]:
            best = (item_id, name, value)
    if best is None:
        raise ConfigError("no items to plan over")
    return best


def plan(
    world: SimWorld,
    observe_fn: ObserveFn,
    rollout_fn: Callable[[SimWorld, ActionSpec], RolloutRun],
    config: PlannerConfig = PlannerConfig(),
    action_params: ActionParams = ActionParams(),
) -> PlanResult:
    """Run the threshold-and-explore protocol once.

    The world is never mutated: candidate rollouts run on clones.
    """
    direct = observe_fn(world)
    target, primitive, best_direct = _best_of(direct)
    if best_direct >= config.threshold:
        return PlanResult(
            target_item=target,
            direct=direct,
            best_direct=best_direct,
            best_primitive=primitive,
            rationale=RATIONALE_DIRECT,
        )

    specs = candidate_actions(target, action_params)
    clones = [world.clone() for _ in specs]

    def run_candidate(i: int) -> CandidateOutcome:
        spec = specs[i]
        t0 = time.perf_counter()
        run = rollout_fn(clones[i], spec)
        if not run.feasible:
            return CandidateOutcome(
                spec=spec, feasible=False, post_best=0.0, error=run.error,
                wall_clock=time.perf_counter() - t0,
            )
        post = observe_fn(run.world) if run.error is None else {}
        est = post.get(target)
        return CandidateOutcome(
            spec=spec,
            feasible=True,
            post_best=float(est.vector.max()) if est is not None else 0.0,
            post_estimate=est,
            steps=run.steps,
            render_count=run.render_count,
            monitor_fired=run.monitor_fired,
            wall_clock=time.perf_counter() - t0,
            error=run.error,
        )

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(run_candidate, range(len(specs))))
    else:
        outcomes = [run_candidate(i) for i in range(len(specs))]

    feasible = [o for o in outcomes if o.feasible and o.error is None]
    warning = None
    if not feasible:
        warning = "all candidate actions infeasible or failed"
        return PlanResult(
            target_item=target,
            direct=direct,
            best_direct=best_direct,
            best_primitive=primitive,
            rationale=RATIONALE_FALLBACK,
            candidates=tuple(outcomes),
            warning=warning,
        )
    best = max(feasible, key=lambda o: o.post_best)  # first max wins ties
    if best.post_best > best_direct:
        return PlanResult(
            target_item=target,
            direct=direct,
            best_direct=best_direct,
            best_primitive=primitive,
            rationale=RATIONALE_IMPROVES,
            candidates=tuple(outcomes),
            chosen_action=best.spec,
            chosen_post=best.post_best,
        )
    return PlanResult(
        target_item=target,
        direct=direct,
        best_direct=best_direct,
        best_primitive=primitive,
        rationale=RATIONALE_FALLBACK,
        candidates=tuple(outcomes),
    )


def execute(
    world: SimWorld,
    result: PlanResult,
    observe_fn: ObserveFn,
    rollout_fn: Callable[[SimWorld, ActionSpec], RolloutRun],
    config: PlannerConfig = PlannerConfig(),
) -> ExecutionTrace:
    """Apply the plan to the live world, retrying the action once on shortfall.

    The acquisition itself is scored, not simulated; success means the
    measured post estimate comes within the slack of the prediction.
    """
    if result.chosen_action is None:
        return ExecutionTrace(
            target_item=result.target_item,
            attempts=(),
            final_estimates=observe_fn(world),
            succeeded=True,
        )
    predicted = result.chosen_post if result.chosen_post is not None else 0.0
    attempts: list[AttemptRecord] = []
    succeeded = False
    max_attempts = 2 if config.retry_once else 1
    for _ in range(max_attempts):
        run = rollout_fn(world, result.chosen_action)
        if not run.feasible or run.error is not None:
            error = run.error or "action infeasible"
            attempts.append(
                AttemptRecord(
                    label=result.chosen_action.label,
                    predicted=predicted,
                    measured=0.0,
                    success=False,
                    error=error,
                )
            )
            continue
        est = observe_fn(run.world).get(result.target_item)
        measured = float(est.vector.max()) if est is not None else 0.0
        success = measured >= predicted - config.success_slack
        attempts.append(
            AttemptRecord(
                label=result.chosen_action.label,
                predicted=predicted,
                measured=measured,
                success=success,
            )
        )
        if success:
            succeeded = True
            break
    return ExecutionTrace(
        target_item=result.target_item,
        attempts=tuple(attempts),
        final_estimates=observe_fn(world),
        succeeded=succeeded,
    )
