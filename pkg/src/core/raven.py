#!/usr/bin/env python3
"""
Streaming risk monitor.

Telemetry flows through an overlapping sliding window. Each window summary
yields an online system LRI, which feeds a change detector, a trend
forecast and the continuous optimization loop: short APEX runs, trial
safety validation, gradual rollout, and shadow/degrade/rollback mitigation.
"""

from collections import deque
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Deque, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.config import settings
from src.core.apex import (
    ConfigurationVector,
    OptimizerConfig,
    apply_configuration,
    default_configuration,
    optimize,
)
from src.core.concurrency import gather_in_executor, run_blocking
from src.core.hydra import safety_check
from src.core.riskcore import AmplificationMap, classify_risk, measure_amplification_map, system_lri
from src.core.seeding import derive_seed
from src.core.simengine import SimState, Simulator, TelemetryTrace, TrafficProfile, run_simulation
from src.core.topology import ComponentKind, ValidatedTopology
from src.errors import InsufficientHistory, NoFeasibleSolution, NonContiguousBatch, NoSnapshotAvailable
from src.log_config import get_logger
from src.models import ReportMetadata, RiskLevel

logger = get_logger(__name__)

# Stand-in for alpha when a cache reports a perfect hit rate
_ALPHA_CEILING = 1e9


# Sliding window

class ComponentSummary(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    offered_rps: float
    served_rps: float
    error_rps: float
    utilization: float
    latency_ms: float
    hit_rate: Optional[float] = None


class WindowSummary(BaseModel):
    """Aggregates over one full window of ticks [start_tick, end_tick]."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    start_tick: int = Field(..., description="First tick covered")
    end_tick: int = Field(..., description="Last tick covered, inclusive")
    components: Dict[str, ComponentSummary] = Field(..., description="Per-component window means")
    max_utilization: float = Field(..., description="Highest single-tick utilization in the window")
    amplification: Dict[str, float] = Field(
        default_factory=dict,
        description="Edge 'i->j' to alpha derived from the window-mean hit rate of cache i",
    )


@dataclass
class SlidingWindow:
    """
    Overlapping telemetry window.

    The first summary is emitted once duration_ticks ticks are buffered, then
    one every stride ticks, each covering the latest duration_ticks ticks.
    """
    duration_ticks: int = settings.WINDOW_TICKS
    overlap_fraction: float = settings.WINDOW_OVERLAP
    buffer: Deque[SimState] = field(default_factory=deque)
    next_tick: Optional[int] = None
    seen: int = 0

    def __post_init__(self):
        if self.duration_ticks < 1:
            raise ValueError("duration_ticks must be >= 1")
        if not 0.0 <= self.overlap_fraction < 1.0:
            raise ValueError("overlap_fraction must be in [0, 1)")
        self.buffer = deque(self.buffer, maxlen=self.duration_ticks)

    @property
    def stride(self) -> int:
        return max(1, round(self.duration_ticks * (1.0 - self.overlap_fraction)))

    def as_trace(self) -> TelemetryTrace:
        states = tuple(self.buffer)
        return TelemetryTrace(states=states, seed=0, duration_s=len(states),
                              start_tick=states[0].tick_s if states else 0)


def summarize(states: Sequence[SimState], topo: Optional[ValidatedTopology] = None) -> WindowSummary:
    """Window means per component; with a topology, also hit-rate derived alpha per cache edge."""
    components: Dict[str, ComponentSummary] = {}
    peak = 0.0
    for cid in states[0].components:
        samples = [s.sample(cid) for s in states]
        utilization = np.array([x.utilization for x in samples])
        hits = [x.hit_rate for x in samples if x.hit_rate is not None]
        components[cid] = ComponentSummary(
            offered_rps=float(np.mean([x.offered_rps for x in samples])),
            served_rps=float(np.mean([x.served_rps for x in samples])),
            error_rps=float(np.mean([x.error_rps for x in samples])),
            utilization=float(utilization.mean()),
            latency_ms=float(np.mean([x.latency_ms for x in samples])),
            hit_rate=float(np.mean(hits)) if hits else None,
        )
        peak = max(peak, float(utilization.max()))

    amplification = {}
    for cid in (topo.of_kind(ComponentKind.CACHE) if topo is not None else ()):
        hit = components[cid].hit_rate if cid in components else None
        if hit is None:
            continue
        alpha = 1.0 / (1.0 - hit) if hit < 1.0 else _ALPHA_CEILING
        for e in topo.out_edges(cid):
            amplification[f"{e.from_id}->{e.to_id}"] = alpha

    return WindowSummary(start_tick=states[0].tick_s, end_tick=states[-1].tick_s,
                         components=components, max_utilization=peak, amplification=amplification)


def update_window(
    w: SlidingWindow,
    batch: Sequence[SimState],
    topo: Optional[ValidatedTopology] = None,
) -> Tuple[SlidingWindow, List[WindowSummary]]:
    """
    Append a batch of tick snapshots.

    Returns the window and the summaries completed by this batch, in tick
    order. A batch no longer than the stride completes at most one.
    Amplification estimates need the topology; without it they are omitted.

    Raises:
        NonContiguousBatch: the batch does not continue the buffered ticks
    """
    summaries = []
    for state in batch:
        if w.next_tick is not None and state.tick_s != w.next_tick:
            raise NonContiguousBatch(w.next_tick, state.tick_s)
        w.buffer.append(state)
        w.next_tick = state.tick_s + 1
        w.seen += 1
        if w.seen >= w.duration_ticks and (w.seen - w.duration_ticks) % w.stride == 0:
            summaries.append(summarize(list(w.buffer), topo))
    return w, summaries


def window_amplification_map(topo: ValidatedTopology, summary: WindowSummary,
                             base: Optional[AmplificationMap] = None) -> AmplificationMap:
    """base (declared/assumed alpha by default), overridden by the window's hit-rate estimates."""
    amap = base if base is not None else AmplificationMap.from_topology(topo)
    window = summary.end_tick - summary.start_tick + 1
    for key, alpha in summary.amplification.items():
        source, target = key.split("->", 1)
        amap = amap.with_measured(source, target, alpha, window)
    return amap


def window_lri(topo: ValidatedTopology, summary: WindowSummary, base: Optional[AmplificationMap] = None) -> float:
    return system_lri(topo, window_amplification_map(topo, summary, base))


def _offline_amplification(topo: ValidatedTopology, traffic: TrafficProfile, seed: int) -> AmplificationMap:
    """Declared alpha plus one-off bypass measurements for undeclared non-cache edges; windows cover caches."""
    amap = AmplificationMap.from_topology(topo)
    sources = sorted({i for i, _ in amap.missing(topo) if topo.component(i).kind != ComponentKind.CACHE},
                     key=topo.order.index)
    if not sources:
        return amap
    return measure_amplification_map(topo, traffic, seed=seed, base=amap, sources=sources)


# Change detection

class DetectorAlgorithm(str, Enum):
    CUSUM = "cusum"
    PAGE_HINKLEY = "page_hinkley"


@dataclass(frozen=True)
class ChangeDetectorState:
    """
    One-sided upward change detector.

    For CUSUM, reference is the target mean mu0 (the first sample when
    unset). For Page-Hinkley it is the running mean and minimum tracks the
    lowest cumulative deviation seen since the last reset.
    """
    algorithm: DetectorAlgorithm = DetectorAlgorithm.CUSUM
    drift: float = 0.5
    threshold: float = 5.0
    reference: Optional[float] = None
    statistic: float = 0.0
    minimum: float = 0.0
    samples: int = 0

    def __post_init__(self):
        if not self.threshold > 0.0:
            raise ValueError("threshold must be > 0")
        if self.drift < 0.0:
            raise ValueError("drift must be >= 0")

    def reset(self) -> "ChangeDetectorState":
        keep = self.reference if self.algorithm == DetectorAlgorithm.CUSUM else None
        return ChangeDetectorState(self.algorithm, self.drift, self.threshold, reference=keep)


def detect_change(state: ChangeDetectorState, value: float) -> Tuple[ChangeDetectorState, bool]:
    """
    Feed one value; returns the next state and whether a change fired.

    The statistic resets on detection, so a detector fires at most once per
    reset.
    """
    if not np.isfinite(value):
        raise ValueError(f"detector input must be finite, got {value}")

    if state.algorithm == DetectorAlgorithm.CUSUM:
        mu0 = value if state.reference is None else state.reference
        statistic = max(0.0, state.statistic + value - mu0 - state.drift)
        updated = replace(state, reference=mu0, statistic=statistic, samples=state.samples + 1)
        fired = statistic > state.threshold
    else:
        n = state.samples + 1
        mean = value if state.reference is None else state.reference + (value - state.reference) / n
        statistic = state.statistic + value - mean - state.drift
        minimum = min(state.minimum, statistic)
        updated = replace(state, reference=mean, statistic=statistic, minimum=minimum, samples=n)
        fired = statistic - minimum > state.threshold

    if fired:
        logger.info("%s change detected after %d sample(s), value %.4g",
                    state.algorithm.value, updated.samples, value)
        return updated.reset(), True
    return updated, False


# Forecasting

def forecast_lri(
    history: Sequence[Tuple[int, float]],
    horizon_ticks: int,
    smoothing: float = settings.FORECAST_SMOOTHING,
) -> List[Tuple[int, float]]:
    """
    Linear LRI trend with exponentially decaying weights on older points.

    Fits a weighted least-squares line where point i of n weighs
    (1 - smoothing) ** (n - 1 - i), then extrapolates one value per tick
    after the last history tick. Forecasts are clamped to >= 0.

    Raises:
        InsufficientHistory: fewer than two history points
    """
    if len(history) < 2:
        raise InsufficientHistory(len(history))
    if horizon_ticks < 1:
        raise ValueError("horizon_ticks must be >= 1")
    if not 0.0 <= smoothing < 1.0:
        raise ValueError("smoothing must be in [0, 1)")

    ticks = np.array([t for t, _ in history], dtype=float)
    values = np.array([v for _, v in history], dtype=float)
    if np.any(np.diff(ticks) <= 0):
        raise ValueError("history ticks must be strictly increasing")

    last = ticks[-1]
    weights = (1.0 - smoothing) ** np.arange(len(history) - 1, -1, -1, dtype=float)
    # polyfit weights multiply residuals, so pass the square root
    slope, intercept = np.polyfit(ticks - last, values, 1, w=np.sqrt(weights))
    offsets = np.arange(1, horizon_ticks + 1, dtype=float)
    forecast = np.maximum(0.0, intercept + slope * offsets)
    return [(int(last + k), float(v)) for k, v in zip(offsets, forecast)]


# Mitigation

class MitigationKind(str, Enum):
    INCREASE_SHADOW_TRAFFIC = "increase_shadow_traffic"
    DEGRADE_PERFORMANCE = "degrade_performance"
    ROLLBACK_CONFIGURATION = "rollback_configuration"


class MitigationAction(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    kind: MitigationKind = Field(..., description="Mitigation lever")
    shadow_fraction_delta: float = Field(0.0, ge=0.0, le=settings.SHADOW_FRACTION_MAX,
                                         description="Added shadow traffic fraction")
    shed_fraction: Optional[float] = Field(None, ge=0.0, lt=1.0, description="Entry load fraction to shed")
    snapshot_id: Optional[int] = Field(None, description="Configuration snapshot to restore")


@dataclass(frozen=True)
class ConfigSnapshot:
    snapshot_id: int
    tick: int
    lri: float
    level: RiskLevel
    topology: ValidatedTopology
    configuration: Dict[str, float]


@dataclass(frozen=True)
class MitigationState:
    shadow_fraction: float = 0.0
    shed_fraction: float = 0.0
    snapshots: Tuple[ConfigSnapshot, ...] = ()

    def with_snapshot(self, snapshot: ConfigSnapshot, keep: int = 16) -> "MitigationState":
        return replace(self, snapshots=(self.snapshots + (snapshot,))[-keep:])

    def snapshot(self, snapshot_id: int) -> ConfigSnapshot:
        for snap in self.snapshots:
            if snap.snapshot_id == snapshot_id:
                return snap
        raise KeyError(snapshot_id)


class MonitorPolicy(BaseModel):
    """Streaming loop policy; the monitor section of a scenario."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    lri_trigger: float = Field(settings.LRI_HIGH, gt=0.0, description="System LRI above which to optimize")
    cooldown_ticks: int = Field(1800, ge=0, description="Minimum ticks between reconfiguration starts")
    gradual_steps: int = Field(4, ge=1, description="Interpolation steps from current to target configuration")
    step_interval_ticks: int = Field(60, ge=1, description="Ticks between gradual steps")
    window_ticks: int = Field(settings.WINDOW_TICKS, ge=1, description="Sliding window length")
    window_overlap: float = Field(settings.WINDOW_OVERLAP, ge=0.0, lt=1.0, description="Window overlap fraction")
    batch_ticks: int = Field(30, ge=1, description="Telemetry batch size fed to the window")
    detector: DetectorAlgorithm = Field(DetectorAlgorithm.CUSUM, description="Change detector on system LRI")
    detector_drift: float = Field(0.5, ge=0.0, description="Detector drift allowance")
    detector_threshold: float = Field(5.0, gt=0.0, description="Detector firing threshold")
    forecast_horizon_ticks: int = Field(0, ge=0, description="Optimize when the trend forecast crosses the trigger; 0 disables")
    shadow_step: float = Field(0.05, ge=0.0, le=settings.SHADOW_FRACTION_MAX, description="Shadow traffic increment")
    shed_fraction: float = Field(0.1, ge=0.0, lt=1.0, description="Entry load shed when degrading")
    apex_generations: int = Field(5, ge=1, description="Generations per in-loop optimization")
    enabled: bool = Field(True, description="Act on triggers; False runs a passive control")
    mitigation: bool = Field(True, description="Apply shadow/degrade/rollback mitigations")


def rollback_to_low(state: MitigationState) -> ConfigSnapshot:
    """
    Most recent Low-classified snapshot.

    Raises:
        NoSnapshotAvailable: no Low snapshot has been recorded
    """
    for snap in reversed(state.snapshots):
        if snap.level == RiskLevel.LOW:
            return snap
    raise NoSnapshotAvailable()


def mitigate(level: RiskLevel, current: MitigationState, policy: MonitorPolicy) -> Optional[MitigationAction]:
    """
    Policy table from risk level to mitigation.

    High rolls back to the last Low snapshot, or degrades when there is
    none. Medium adds shadow traffic up to the cap. Low does nothing.
    """
    if level == RiskLevel.LOW:
        return None
    if level == RiskLevel.MEDIUM:
        delta = max(0.0, min(policy.shadow_step, settings.SHADOW_FRACTION_MAX - current.shadow_fraction))
        return MitigationAction(kind=MitigationKind.INCREASE_SHADOW_TRAFFIC, shadow_fraction_delta=delta)
    try:
        snap = rollback_to_low(current)
    except NoSnapshotAvailable:
        return MitigationAction(kind=MitigationKind.DEGRADE_PERFORMANCE, shed_fraction=policy.shed_fraction)
    return MitigationAction(kind=MitigationKind.ROLLBACK_CONFIGURATION, snapshot_id=snap.snapshot_id)


def apply_mitigation(state: MitigationState, action: Optional[MitigationAction]) -> MitigationState:
    if action is None:
        return state
    if action.kind == MitigationKind.INCREASE_SHADOW_TRAFFIC:
        shadow = min(settings.SHADOW_FRACTION_MAX, state.shadow_fraction + action.shadow_fraction_delta)
        return replace(state, shadow_fraction=shadow)
    if action.kind == MitigationKind.DEGRADE_PERFORMANCE:
        return replace(state, shed_fraction=action.shed_fraction or 0.0)
    return state


# Continuous optimization

def interpolate_configuration(
    current: ConfigurationVector,
    target: ConfigurationVector,
    steps: int,
) -> List[ConfigurationVector]:
    """steps equal linear steps from current (exclusive) to target (inclusive)."""
    if [v.name for v in current.variables] != [v.name for v in target.variables]:
        raise ValueError("configurations have different decision variables")
    if steps < 1:
        raise ValueError("steps must be >= 1")
    start = np.asarray(current.values, dtype=float)
    end = np.asarray(target.values, dtype=float)
    return [
        ConfigurationVector.from_array(target.variables, start + (end - start) * k / steps)
        for k in range(1, steps + 1)
    ]


class Trigger(str, Enum):
    LRI_THRESHOLD = "lri_threshold"
    CHANGE_DETECTED = "change_detected"
    FORECAST = "forecast"


class AppliedStep(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    tick: int = Field(..., description="Tick the step took effect")
    configuration: Dict[str, float] = Field(..., description="Variable name to value")


class DecisionRecord(BaseModel):
    """One loop decision, made at the end of a window."""
    model_config = ConfigDict(extra="forbid")

    tick: int = Field(..., description="Last tick of the window")
    lri: float = Field(..., description="Online system LRI of the window")
    level: RiskLevel = Field(..., description="Classification of lri")
    trigger: Optional[Trigger] = Field(None, description="Why optimization was requested")
    chosen_config: Optional[Dict[str, float]] = Field(None, description="Target configuration picked from the front")
    fitness: Optional[float] = Field(None, description="Fitness of the chosen configuration")
    safety_passed: Optional[bool] = Field(None, description="Trial validation verdict for every step")
    applied_steps: List[AppliedStep] = Field(default_factory=list, description="Gradual steps as they took effect")
    mitigation: Optional[MitigationAction] = Field(None, description="Mitigation applied instead of optimizing")
    note: Optional[str] = Field(None, description="Why a trigger did not lead to reconfiguration")


class OptimizationLog(BaseModel):
    model_config = ConfigDict(extra="forbid")

    records: List[DecisionRecord] = Field(default_factory=list)
    duration_s: int = Field(..., description="Ticks streamed")
    seed: int = Field(..., description="Master seed")
    enabled: bool = Field(True, description="Whether the loop acted on triggers")
    metadata: Optional[ReportMetadata] = None

    @property
    def reconfigurations(self) -> List[DecisionRecord]:
        return [r for r in self.records if r.chosen_config is not None and r.safety_passed]

    @property
    def final_lri(self) -> float:
        return self.records[-1].lri if self.records else 0.0

    def jsonl(self) -> Iterator[str]:
        for record in self.records:
            yield record.model_dump_json()


class ContinuousOptimizer:
    """
    Risk-aware optimization loop over a live simulator.

    Telemetry is consumed in batches; each completed window produces one
    DecisionRecord. Reconfigurations are validated on trial simulations
    before any step is applied, then rolled out one step per
    step_interval_ticks.
    """

    def __init__(
        self,
        topo: ValidatedTopology,
        traffic: TrafficProfile,
        policy: MonitorPolicy,
        optimizer: Optional[OptimizerConfig] = None,
        seed: int = 0,
    ):
        """
        Initialize the loop.

        Args:
            topo: Validated topology the live simulator starts from
            traffic: Offered traffic profile
            policy: Loop policy
            optimizer: APEX settings and decision variables; None disables optimization
            seed: Master seed
        """
        self.traffic = traffic
        self.policy = policy
        self.optimizer = optimizer
        self.seed = seed
        self.sim = Simulator(topo, traffic, seed=seed)
        self.amap = _offline_amplification(topo, traffic, seed)
        self.window = SlidingWindow(policy.window_ticks, policy.window_overlap)
        self.detector = ChangeDetectorState(policy.detector, policy.detector_drift, policy.detector_threshold)
        self.mitigation = MitigationState()
        self.history: List[Tuple[int, float]] = []
        self.records: List[DecisionRecord] = []
        self._pending: Deque[Tuple[int, ConfigurationVector, DecisionRecord]] = deque()
        self._last_start: Optional[int] = None
        self._next_snapshot = 0

    def run(self, duration_s: int) -> List[DecisionRecord]:
        end = self.sim.tick + duration_s
        batch: List[SimState] = []
        while self.sim.tick < end:
            self._apply_pending()
            batch.append(self.sim.step())
            if len(batch) >= self.policy.batch_ticks or self.sim.tick >= end:
                _, summaries = update_window(self.window, batch, self.sim.topology)
                batch = []
                for summary in summaries:
                    self.records.append(self._decide(summary))
        return self.records

    def _apply_pending(self) -> None:
        while self._pending and self._pending[0][0] <= self.sim.tick:
            _, x, record = self._pending.popleft()
            self.sim.reconfigure(apply_configuration(self.sim.topology, x))
            record.applied_steps.append(AppliedStep(tick=self.sim.tick, configuration=x.as_dict()))
            logger.info("tick %d: applied step %d toward %s", self.sim.tick, len(record.applied_steps), x.as_dict())

    def _decide(self, summary: WindowSummary) -> DecisionRecord:
        lri = window_lri(self.sim.topology, summary, self.amap)
        level = classify_risk(lri)
        self.history.append((summary.end_tick, lri))
        self.detector, fired = detect_change(self.detector, lri)
        record = DecisionRecord(tick=summary.end_tick, lri=lri, level=level)
        logger.debug("window [%d, %d]: LRI %.4g (%s)", summary.start_tick, summary.end_tick, lri, level.value)
        if not self.policy.enabled:
            return record

        if level == RiskLevel.LOW:
            self._take_snapshot(summary.end_tick, lri, level)

        record.trigger = self._trigger(lri, fired)
        if record.trigger is not None:
            if self._pending:
                record.note = "rollout in progress"
            elif not self._cooldown_elapsed(record.tick):
                record.note = "cooldown"
            elif self._reconfigure(record):
                return record

        if self.policy.mitigation and not self._pending:
            record.mitigation = self._mitigate(level)
        return record

    def _trigger(self, lri: float, fired: bool) -> Optional[Trigger]:
        if lri > self.policy.lri_trigger:
            return Trigger.LRI_THRESHOLD
        if fired:
            return Trigger.CHANGE_DETECTED
        horizon = self.policy.forecast_horizon_ticks
        if horizon > 0 and len(self.history) >= 2:
            if forecast_lri(self.history, horizon)[-1][1] > self.policy.lri_trigger:
                return Trigger.FORECAST
        return None

    def _cooldown_elapsed(self, tick: int) -> bool:
        return self._last_start is None or tick - self._last_start >= self.policy.cooldown_ticks

    def _reconfigure(self, record: DecisionRecord) -> bool:
        if self.optimizer is None:
            record.note = "no optimizer configured"
            return False
        topo = self.sim.topology
        start = self.sim.tick
        cfg = self.optimizer.model_copy(update={
            "generations": self.policy.apex_generations,
            "start_tick": start,
            "seed": derive_seed(self.seed, "raven", record.tick) % (2 ** 31),
        })
        try:
            front = optimize(topo, self.traffic, cfg.bounds, cfg)
        except NoFeasibleSolution as e:
            logger.warning("tick %d: %s; keeping current configuration", record.tick, e)
            record.note = str(e)
            return False

        best = front.best_by_fitness()
        record.chosen_config = best.configuration.as_dict()
        record.fitness = best.objectives.fitness
        steps = interpolate_configuration(default_configuration(topo, cfg.bounds), best.configuration,
                                          self.policy.gradual_steps)
        verdicts = self._validate(topo, steps, start, cfg.eval_duration_s, cfg.max_workers)
        record.safety_passed = all(v.passed for v in verdicts)
        if not record.safety_passed:
            failed = next(v for v in verdicts if not v.passed)
            record.note = "trial safety check failed: " + ", ".join(
                f"{v.component} {v.signal.value}" for v in failed.violations)
            logger.warning("tick %d: %s", record.tick, record.note)
            return False

        self._last_start = record.tick
        for k, x in enumerate(steps):
            self._pending.append((start + k * self.policy.step_interval_ticks, x, record))
        logger.info("tick %d: reconfiguring toward %s in %d step(s)", record.tick,
                    record.chosen_config, len(steps))
        return True

    def _validate(self, topo: ValidatedTopology, steps: Sequence[ConfigurationVector],
                  start: int, duration_s: int, max_workers: int):
        baseline = self.window.as_trace()

        def trial(item: Tuple[int, ConfigurationVector]):
            k, x = item
            sim = Simulator(apply_configuration(topo, x), self.traffic,
                            seed=derive_seed(self.seed, "raven-trial", start, k), start_tick=start)
            sim.set_shadow_fraction(self.mitigation.shadow_fraction)
            sim.set_shed_fraction(self.mitigation.shed_fraction)
            trace = run_simulation(sim.topology, self.traffic, duration_s, sim.seed, simulator=sim)
            return safety_check(trace, baseline)

        return run_blocking(gather_in_executor(trial, list(enumerate(steps)), max_workers))

    def _take_snapshot(self, tick: int, lri: float, level: RiskLevel) -> None:
        configuration: Dict[str, float] = {}
        if self.optimizer is not None:
            configuration = default_configuration(self.sim.topology, self.optimizer.bounds).as_dict()
        snap = ConfigSnapshot(snapshot_id=self._next_snapshot, tick=tick, lri=lri, level=level,
                              topology=self.sim.topology, configuration=configuration)
        self._next_snapshot += 1
        self.mitigation = self.mitigation.with_snapshot(snap)

    def _mitigate(self, level: RiskLevel) -> Optional[MitigationAction]:
        action = mitigate(level, self.mitigation, self.policy)
        if action is None:
            return None
        if action.kind == MitigationKind.ROLLBACK_CONFIGURATION:
            snap = self.mitigation.snapshot(action.snapshot_id)
            self.sim.reconfigure(snap.topology)
            logger.warning("rolled back to snapshot %d from tick %d (LRI %.4g)",
                           snap.snapshot_id, snap.tick, snap.lri)
        self.mitigation = apply_mitigation(self.mitigation, action)
        self.sim.set_shadow_fraction(self.mitigation.shadow_fraction)
        self.sim.set_shed_fraction(self.mitigation.shed_fraction)
        return action


def continuous_loop(
    topo: ValidatedTopology,
    traffic: TrafficProfile,
    policy: MonitorPolicy,
    optimizer: Optional[OptimizerConfig],
    duration_s: int,
    seed: int,
) -> OptimizationLog:
    """
    Stream duration_s ticks through the continuous optimization loop.

    Raises:
        ValueError: duration_s is shorter than one window
    """
    if duration_s < policy.window_ticks:
        raise ValueError(f"duration {duration_s} is shorter than the {policy.window_ticks}-tick window")
    loop = ContinuousOptimizer(topo, traffic, policy, optimizer, seed)
    records = loop.run(duration_s)
    log = OptimizationLog(records=records, duration_s=duration_s, seed=seed, enabled=policy.enabled)
    logger.info("monitor: %d window(s), %d reconfiguration(s), final LRI %.4g",
                len(records), len(log.reconfigurations), log.final_lri)
    return log
