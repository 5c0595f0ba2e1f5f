#!/usr/bin/env python3
"""
Perturbation campaigns.

A Thompson-sampling planner chooses (strategy, target) arms, the executor
escalates each perturbation step by step against a running simulator, and a
per-tick safety guard rolls everything back on the tick a threshold breaks.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.config import settings
from src.core.riskcore import (
    AmplificationEntry,
    AmplificationMap,
    AmplificationSource,
    RiskReport,
    assess_system_risk,
    classify_risk,
    compute_lri,
)
from src.core.seeding import rng_for
from src.core.simengine import (
    SimState,
    Simulator,
    TelemetryTrace,
    TrafficProfile,
    check_compatible,
    run_simulation,
)
from src.core.topology import ComponentKind, ValidatedTopology
from src.errors import IncompatibleTarget, NoEligibleTargets, SafetyRollback
from src.log_config import get_logger
from src.models import (
    BINARY_STRATEGIES,
    PerturbationAction,
    PerturbationStrategy,
    ReportMetadata,
    RiskLevel,
)

logger = get_logger(__name__)


# Safety

class SafetySignal(str, Enum):
    ERROR_RATE = "error_rate"
    P95_LATENCY = "p95_latency"
    UTILIZATION = "utilization"


class SafetyViolation(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    signal: SafetySignal = Field(..., description="Breached signal")
    component: str = Field(..., description="Component that breached it")
    observed: float = Field(..., description="Observed window value")
    threshold: float = Field(..., description="Threshold in force")


class SafetyVerdict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    passed: bool = Field(..., description="True when no signal breached")
    violations: List[SafetyViolation] = Field(default_factory=list)
    tick: Optional[int] = Field(None, description="Last tick of the checked window")

    @model_validator(mode="after")
    def _consistent(self) -> "SafetyVerdict":
        if self.passed != (not self.violations):
            raise ValueError("passed must be true exactly when there are no violations")
        return self


def safety_check(window: Union[TelemetryTrace, Sequence[SimState]], baseline: TelemetryTrace) -> SafetyVerdict:
    """
    Compare a telemetry window against the safety thresholds.

    Per component: window-mean error fraction > 0.05, window-mean latency above
    2x its baseline mean, or window-mean utilization > 0.85.
    """
    states = list(window.states if isinstance(window, TelemetryTrace) else window)
    if not states:
        raise ValueError("safety_check needs a non-empty window")
    violations = []
    for cid in states[0].components:
        samples = [s.sample(cid) for s in states]
        error_fraction = float(np.mean([x.error_fraction for x in samples]))
        latency = float(np.mean([x.latency_ms for x in samples]))
        utilization = float(np.mean([x.utilization for x in samples]))
        latency_limit = settings.SAFETY_LATENCY_FACTOR * baseline.mean(cid, "latency_ms")
        if error_fraction > settings.SAFETY_ERROR_RATE:
            violations.append(SafetyViolation(signal=SafetySignal.ERROR_RATE, component=cid,
                                              observed=error_fraction, threshold=settings.SAFETY_ERROR_RATE))
        if latency > latency_limit:
            violations.append(SafetyViolation(signal=SafetySignal.P95_LATENCY, component=cid,
                                              observed=latency, threshold=latency_limit))
        if utilization > settings.SAFETY_UTILIZATION:
            violations.append(SafetyViolation(signal=SafetySignal.UTILIZATION, component=cid,
                                              observed=utilization, threshold=settings.SAFETY_UTILIZATION))
    return SafetyVerdict(passed=not violations, violations=violations, tick=states[-1].tick_s)


class SafetyMonitor:
    """Per-tick guard for a perturbed run; keeps the first failing verdict."""

    def __init__(self, baseline: TelemetryTrace):
        self.baseline = baseline
        self.verdict: Optional[SafetyVerdict] = None

    def __call__(self, snapshot: SimState) -> bool:
        verdict = safety_check([snapshot], self.baseline)
        if verdict.passed:
            return False
        if self.verdict is None:
            self.verdict = verdict
        return True


# Escalation

class TerminationReason(str, Enum):
    MAX_RATE_REACHED = "max_rate_reached"
    HIGH_RISK = "high_risk"
    RAPID_ESCALATION = "rapid_escalation"
    SAFETY_ROLLBACK = "safety_rollback"


class EscalationParams(BaseModel):
    """Geometric magnitude schedule start * factor^k while it stays within cap."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    start: float = Field(..., gt=0.0, description="First magnitude")
    factor: float = Field(..., ge=1.0, description="Growth per step")
    cap: float = Field(..., gt=0.0, description="Largest allowed magnitude")

    @classmethod
    def default_for(cls, strategy: PerturbationStrategy) -> "EscalationParams":
        start, factor, cap = settings.ESCALATION_DEFAULTS[strategy.value]
        return cls(start=start, factor=factor, cap=cap)

    def check(self, strategy: PerturbationStrategy) -> "EscalationParams":
        """Reject a cap that would schedule magnitudes the strategy cannot take."""
        if strategy == PerturbationStrategy.CACHE_BYPASS and self.cap > settings.BYPASS_CAP:
            raise ValueError(f"cache_bypass escalation cap must be <= {settings.BYPASS_CAP}, got {self.cap}")
        if strategy == PerturbationStrategy.RESOURCE_CONSTRAINT and self.cap >= 1.0:
            raise ValueError(f"resource_constraint escalation cap must be < 1, got {self.cap}")
        return self

    def magnitudes(self, strategy: PerturbationStrategy) -> List[float]:
        if strategy in BINARY_STRATEGIES:
            return [1.0]
        if self.factor == 1.0:
            return [self.start] if self.start <= self.cap else []
        values = []
        k = 0
        while self.start * self.factor ** k <= self.cap:
            values.append(self.start * self.factor ** k)
            k += 1
        return values


def action_magnitude(strategy: PerturbationStrategy, value: float) -> float:
    """Schedule value to action magnitude; resource_constraint escalates the capacity reduction."""
    if strategy == PerturbationStrategy.RESOURCE_CONSTRAINT:
        return 1.0 - value
    if strategy in BINARY_STRATEGIES:
        return 1.0
    return value


class EscalationStep(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    step: int = Field(..., ge=1)
    magnitude: float = Field(..., description="Schedule value; the bypass rate for cache_bypass")
    amplification: float = Field(..., ge=0.0, description="Largest load ratio on the probed edges")
    lri: float = Field(..., ge=0.0, description="Largest LRI over the affected components")
    component: str = Field(..., description="Affected component with that LRI")


class RiskTrace(BaseModel):
    model_config = ConfigDict(extra="forbid")

    strategy: PerturbationStrategy
    target: str
    source: Optional[str] = None
    steps: List[EscalationStep] = Field(default_factory=list)
    termination_reason: TerminationReason
    rollback_tick: Optional[int] = None
    violations: List[SafetyViolation] = Field(default_factory=list)
    edge_ratios: List[AmplificationEntry] = Field(default_factory=list,
                                                  description="Probed-edge load ratios of the last step")

    @property
    def bypass_rates(self) -> List[float]:
        return [s.magnitude for s in self.steps]

    @property
    def lri_history(self) -> List[float]:
        return [s.lri for s in self.steps]


@dataclass
class SimContext:
    """
    Shared simulator for a campaign.

    Holds a baseline window of normal operation and every tick simulated
    since, so the campaign's full telemetry can be inspected afterwards.
    """
    topo: ValidatedTopology
    traffic: TrafficProfile
    seed: int
    amap: AmplificationMap
    baseline: TelemetryTrace
    simulator: Simulator
    step_ticks: int = settings.STEP_WINDOW_TICKS
    history: List[SimState] = field(default_factory=list)

    @classmethod
    def create(cls, topo: ValidatedTopology, traffic: TrafficProfile, seed: int,
               amap: Optional[AmplificationMap] = None,
               step_ticks: int = settings.STEP_WINDOW_TICKS) -> "SimContext":
        simulator = Simulator(topo, traffic, seed=seed)
        baseline = run_simulation(topo, traffic, step_ticks, seed, simulator=simulator)
        return cls(topo=topo, traffic=traffic, seed=seed,
                   amap=amap if amap is not None else AmplificationMap.from_topology(topo, assume_bypassable=True),
                   baseline=baseline, simulator=simulator, step_ticks=step_ticks,
                   history=list(baseline.states))

    def run_window(self, guard=None) -> TelemetryTrace:
        window = run_simulation(self.topo, self.traffic, self.step_ticks, self.seed,
                                guard=guard, simulator=self.simulator)
        self.history.extend(window.states)
        return window

    def telemetry(self) -> TelemetryTrace:
        return TelemetryTrace(states=tuple(self.history), seed=self.seed, duration_s=len(self.history))


# Strategies whose effect equals a full bypass of the target's optimization.
_FULL_BYPASS = frozenset({PerturbationStrategy.BREAKER_BYPASS, PerturbationStrategy.LB_MANIPULATION})


def _measure_step(ctx: SimContext, action: PerturbationAction,
                  window: TelemetryTrace) -> Tuple[float, float, str, List[AmplificationEntry]]:
    """
    Load ratios on the probed edges and the largest LRI they imply.

    Ratios only raise alpha for the step's LRI. They count as measured
    amplification for full-bypass strategies and as observed otherwise.
    """
    probed = action.source if action.strategy == PerturbationStrategy.DEPENDENCY_ISOLATION else action.target
    source = AmplificationSource.MEASURED if action.strategy in _FULL_BYPASS else AmplificationSource.OBSERVED
    amap = ctx.amap
    ratios = []
    for e in ctx.topo.out_edges(probed):
        base = ctx.baseline.mean(e.to_id, "offered_rps")
        if base < settings.ZERO_BASELINE_RPS:
            continue
        entry = AmplificationEntry(from_id=e.from_id, to_id=e.to_id,
                                   alpha=window.mean(e.to_id, "offered_rps") / base,
                                   source=source, window_s=len(window))
        ratios.append(entry)
        amap = amap.raised(entry)
    affected = [r.to_id for r in ratios] or [action.target]
    lri, component = max((compute_lri(ctx.topo, amap, cid), cid) for cid in affected)
    amplification = max((r.alpha for r in ratios), default=1.0)
    return amplification, lri, component, ratios


def execute_strategy(
    ctx: SimContext,
    action: PerturbationAction,
    escalation: Optional[EscalationParams] = None,
    max_risk: float = settings.HIGH_RISK_LRI,
) -> RiskTrace:
    """
    Escalate one perturbation until risk is found or the schedule is exhausted.

    Each step holds the action for one measurement window, measures
    amplification on the probed edges and the LRI of the affected components.
    Normal operation is always restored afterwards.

    Raises:
        IncompatibleTarget: the strategy cannot target the component
        SafetyRollback: a safety threshold broke; carries the partial trace
    """
    if max_risk <= 0.0:
        raise ValueError("max_risk must be > 0")
    action = check_compatible(ctx.topo, action)
    escalation = (escalation or EscalationParams.default_for(action.strategy)).check(action.strategy)
    steps: List[EscalationStep] = []
    ratios: List[AmplificationEntry] = []
    reason = TerminationReason.MAX_RATE_REACHED
    logger.info("escalating %s on %s", action.strategy.value, action.target)
    try:
        for k, value in enumerate(escalation.magnitudes(action.strategy), start=1):
            ctx.simulator.apply(action.model_copy(update={"magnitude": action_magnitude(action.strategy, value)}))
            monitor = SafetyMonitor(ctx.baseline)
            window = ctx.run_window(guard=monitor)
            if monitor.verdict is not None:
                trace = RiskTrace(strategy=action.strategy, target=action.target, source=action.source,
                                  steps=steps, termination_reason=TerminationReason.SAFETY_ROLLBACK,
                                  rollback_tick=monitor.verdict.tick, violations=monitor.verdict.violations,
                                  edge_ratios=ratios)
                raise SafetyRollback(trace, monitor.verdict)

            amplification, lri, component, ratios = _measure_step(ctx, action, window)
            steps.append(EscalationStep(step=k, magnitude=value, amplification=amplification,
                                        lri=lri, component=component))
            logger.debug("step %d: magnitude %.4g alpha %.4g lri %.4g", k, value, amplification, lri)
            if lri > settings.HIGH_RISK_LRI:
                reason = TerminationReason.HIGH_RISK
                break
            if len(steps) >= 2 and steps[-1].lri - steps[-2].lri > settings.RAPID_ESCALATION_GRADIENT:
                reason = TerminationReason.RAPID_ESCALATION
                break
            if lri >= max_risk:
                reason = TerminationReason.HIGH_RISK
                break
    finally:
        ctx.simulator.restore_normal_operation()
    return RiskTrace(strategy=action.strategy, target=action.target, source=action.source,
                     steps=steps, termination_reason=reason, edge_ratios=ratios)


def execute_cache_bypass(ctx: SimContext, cache_id: str, max_risk_threshold: float) -> RiskTrace:
    """Escalating cache bypass: 0.5% start, x1.4 per step, capped at 20%."""
    spec = ctx.topo.component(cache_id)
    if spec.kind != ComponentKind.CACHE:
        raise IncompatibleTarget(PerturbationStrategy.CACHE_BYPASS.value, cache_id, spec.kind.value)
    escalation = EscalationParams(start=settings.BYPASS_START, factor=settings.BYPASS_FACTOR, cap=settings.BYPASS_CAP)
    action = PerturbationAction(strategy=PerturbationStrategy.CACHE_BYPASS, target=cache_id,
                                magnitude=settings.BYPASS_START)
    return execute_strategy(ctx, action, escalation, max_risk_threshold)


# Planning

class ArmStats(BaseModel):
    model_config = ConfigDict(extra="forbid")

    successes: int = Field(0, ge=0)
    failures: int = Field(0, ge=0)

    @property
    def a(self) -> int:
        return 1 + self.successes

    @property
    def b(self) -> int:
        return 1 + self.failures


def arm_key(strategy: PerturbationStrategy, kind: ComponentKind) -> str:
    return f"{strategy.value}:{kind.value}"


class StrategyStats(BaseModel):
    """Beta-Bernoulli statistics per (strategy, target kind)."""
    model_config = ConfigDict(extra="forbid")

    arms: Dict[str, ArmStats] = Field(default_factory=dict)

    def get(self, strategy: PerturbationStrategy, kind: ComponentKind) -> ArmStats:
        return self.arms.get(arm_key(strategy, kind), ArmStats())

    def record(self, strategy: PerturbationStrategy, kind: ComponentKind, success: bool) -> None:
        current = self.get(strategy, kind)
        self.arms[arm_key(strategy, kind)] = ArmStats(
            successes=current.successes + int(success),
            failures=current.failures + int(not success),
        )

    def merge(self, other: "StrategyStats") -> "StrategyStats":
        merged = {k: v.model_copy() for k, v in self.arms.items()}
        for key, arm in other.arms.items():
            mine = merged.get(key, ArmStats())
            merged[key] = ArmStats(successes=mine.successes + arm.successes, failures=mine.failures + arm.failures)
        return StrategyStats(arms=dict(sorted(merged.items())))


class PlanStep(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    strategy: PerturbationStrategy
    target: str
    escalation: EscalationParams

    @model_validator(mode="after")
    def _check_cap(self) -> "PlanStep":
        self.escalation.check(self.strategy)
        return self


class CampaignPlan(BaseModel):
    model_config = ConfigDict(extra="forbid")

    steps: List[PlanStep] = Field(default_factory=list)
    budget: int = Field(..., ge=0, description="Maximum total perturbed ticks")
    seed: int = Field(0, description="Planning and simulation seed")
    max_risk_threshold: float = Field(settings.HIGH_RISK_LRI, gt=0.0)


class CampaignConfig(BaseModel):
    """Campaign section of a scenario."""
    model_config = ConfigDict(extra="forbid")

    strategies: List[PerturbationStrategy] = Field(default_factory=lambda: list(PerturbationStrategy))
    escalation: Dict[PerturbationStrategy, EscalationParams] = Field(default_factory=dict)
    budget: int = Field(3600, ge=0, description="Maximum total perturbed ticks")
    max_risk_threshold: float = Field(settings.HIGH_RISK_LRI, gt=0.0)
    seed: Optional[int] = Field(None, description="Overrides the scenario seed")
    targets: Optional[List[str]] = Field(None, description="Restrict planning to these components")
    prior_stats: StrategyStats = Field(default_factory=StrategyStats)

    @field_validator("escalation")
    @classmethod
    def _check_caps(cls, escalation: Dict[PerturbationStrategy, EscalationParams]):
        for strategy, params in escalation.items():
            params.check(strategy)
        return escalation


_TARGET_KINDS = {
    PerturbationStrategy.CACHE_BYPASS: {ComponentKind.CACHE},
    PerturbationStrategy.BREAKER_BYPASS: {ComponentKind.CIRCUIT_BREAKER},
    PerturbationStrategy.LB_MANIPULATION: {ComponentKind.LOAD_BALANCER},
}


def eligible_arms(
    topo: ValidatedTopology,
    strategies: Optional[Sequence[PerturbationStrategy]] = None,
    targets: Optional[Sequence[str]] = None,
) -> List[Tuple[PerturbationStrategy, str]]:
    """(strategy, target) pairs in deterministic order."""
    allowed = set(targets) if targets is not None else None
    arms = []
    for strategy in strategies or list(PerturbationStrategy):
        kinds = _TARGET_KINDS.get(strategy)
        for cid in topo.order:
            spec = topo.component(cid)
            if allowed is not None and cid not in allowed:
                continue
            if spec.kind == ComponentKind.ENTRY:
                continue
            if kinds is not None and spec.kind not in kinds:
                continue
            arms.append((strategy, cid))
    return arms


def select_arm(topo: ValidatedTopology, arms: Sequence[Tuple[PerturbationStrategy, str]],
               stats: StrategyStats, rng: np.random.Generator) -> int:
    """Index of the arm with the largest Beta(a, b) draw."""
    draws = []
    for strategy, target in arms:
        arm = stats.get(strategy, topo.component(target).kind)
        draws.append(rng.beta(arm.a, arm.b))
    return int(np.argmax(draws))


def plan_campaign(
    topo: ValidatedTopology,
    stats: StrategyStats,
    budget: int,
    seed: int,
    config: Optional[CampaignConfig] = None,
) -> CampaignPlan:
    """
    Thompson-sampling plan.

    Each draw samples every eligible arm that still fits the budget and
    appends the winner; a step costs its worst-case perturbed ticks.

    Raises:
        NoEligibleTargets
    """
    if budget < 0:
        raise ValueError("budget must be >= 0")
    config = config or CampaignConfig()
    arms = eligible_arms(topo, config.strategies, config.targets)
    if not arms:
        raise NoEligibleTargets()

    def escalation_for(strategy: PerturbationStrategy) -> EscalationParams:
        return config.escalation.get(strategy) or EscalationParams.default_for(strategy)

    def cost(strategy: PerturbationStrategy) -> int:
        return max(1, len(escalation_for(strategy).magnitudes(strategy))) * settings.STEP_WINDOW_TICKS

    rng = rng_for(seed, "planner")
    remaining = budget
    steps = []
    while True:
        fitting = [arm for arm in arms if cost(arm[0]) <= remaining]
        if not fitting:
            break
        strategy, target = fitting[select_arm(topo, fitting, stats, rng)]
        steps.append(PlanStep(strategy=strategy, target=target, escalation=escalation_for(strategy)))
        remaining -= cost(strategy)
    logger.info("planned %d step(s) within a %d-tick budget", len(steps), budget)
    return CampaignPlan(steps=steps, budget=budget, seed=seed, max_risk_threshold=config.max_risk_threshold)


# Campaign execution

class DiscoveredRisk(BaseModel):
    model_config = ConfigDict(extra="forbid")

    component: str
    lri: float = Field(..., ge=0.0)
    level: RiskLevel
    prior_level: RiskLevel
    strategy: PerturbationStrategy
    target: str


class CampaignStepResult(BaseModel):
    model_config = ConfigDict(extra="forbid")

    strategy: PerturbationStrategy
    target: str
    success: bool = Field(..., description="Revealed a strictly worse classification")
    trace: RiskTrace


class CampaignReport(BaseModel):
    model_config = ConfigDict(extra="forbid")

    steps: List[CampaignStepResult] = Field(default_factory=list)
    discovered: List[DiscoveredRisk] = Field(default_factory=list)
    stats: StrategyStats = Field(default_factory=StrategyStats)
    amplification: List[AmplificationEntry] = Field(default_factory=list, description="Largest load ratio per probed edge")
    assessment: Optional[RiskReport] = Field(None, description="Risk ranking under the campaign's amplification map")
    metadata: Optional[ReportMetadata] = None

    def amplification_map(self, base: AmplificationMap) -> AmplificationMap:
        """base updated with the campaign's ratios; observed ratios only ever raise alpha."""
        amap = base
        for entry in self.amplification:
            amap = amap.raised(entry) if entry.source == AmplificationSource.OBSERVED else amap.with_entry(entry)
        return amap


def _rank(entry: AmplificationEntry) -> Tuple[bool, float]:
    return entry.source == AmplificationSource.MEASURED, entry.alpha


def run_campaign(
    topo: ValidatedTopology,
    traffic: TrafficProfile,
    plan: CampaignPlan,
    stats: Optional[StrategyStats] = None,
    amap: Optional[AmplificationMap] = None,
    context: Optional[SimContext] = None,
) -> CampaignReport:
    """
    Execute a plan in order on one shared simulator.

    A step succeeds when some affected component's measured classification
    is strictly worse than before the campaign. Safety rollbacks are recorded
    and the campaign moves on.
    """
    stats = (stats or StrategyStats()).model_copy(deep=True)
    if not plan.steps:
        return CampaignReport(stats=stats)
    for step in plan.steps:
        check_compatible(topo, PerturbationAction(strategy=step.strategy, target=step.target))

    ctx = context or SimContext.create(topo, traffic, plan.seed, amap=amap)
    prior = assess_system_risk(topo, ctx.amap).levels()

    results = []
    discovered: Dict[str, DiscoveredRisk] = {}
    strongest: Dict[Tuple[str, str], AmplificationEntry] = {}
    for step in plan.steps:
        action = PerturbationAction(strategy=step.strategy, target=step.target,
                                    magnitude=action_magnitude(step.strategy, step.escalation.start))
        try:
            trace = execute_strategy(ctx, action, step.escalation, plan.max_risk_threshold)
        except SafetyRollback as exc:
            logger.warning("%s on %s rolled back: %s", step.strategy.value, step.target, exc)
            trace = exc.trace

        success = False
        for s in trace.steps:
            level = classify_risk(s.lri)
            before = prior.get(s.component, RiskLevel.LOW)
            if level.severity > before.severity:
                success = True
                current = discovered.get(s.component)
                if current is None or s.lri > current.lri:
                    discovered[s.component] = DiscoveredRisk(component=s.component, lri=s.lri, level=level,
                                                             prior_level=before, strategy=step.strategy,
                                                             target=step.target)
        for entry in trace.edge_ratios:
            key = (entry.from_id, entry.to_id)
            if key not in strongest or _rank(entry) > _rank(strongest[key]):
                strongest[key] = entry
        stats.record(step.strategy, topo.component(step.target).kind, success)
        results.append(CampaignStepResult(strategy=step.strategy, target=step.target, success=success, trace=trace))

    ranked = sorted(discovered.values(), key=lambda d: (-d.lri, d.component))
    logger.info("campaign finished: %d step(s), %d discovered risk(s)", len(results), len(ranked))
    report = CampaignReport(
        steps=results,
        discovered=ranked,
        stats=StrategyStats(arms=dict(sorted(stats.arms.items()))),
        amplification=[strongest[k] for k in sorted(strongest)],
    )
    report.assessment = assess_system_risk(topo, report.amplification_map(ctx.amap))
    return report
