#!/usr/bin/env python3
"""
Risk mathematics: amplification measurement, latent accumulation, LRI,
classification, resilience observability and ranked system assessment.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.config import settings
from src.core.seeding import derive_seed, rng_for
from src.core.simengine import (
    ComponentSample,
    OptimizationBypass,
    TelemetryTrace,
    TrafficProfile,
    run_simulation,
)
from src.core.topology import (
    BYPASSABLE_KINDS,
    ValidatedTopology,
    dependency_depth,
    max_upstream_amplification,
)
from src.errors import (
    EmptyCatalog,
    MissingAmplification,
    NotBypassable,
    RiskError,
    ZeroBaseline,
    ZeroObservability,
)
from src.log_config import get_logger
from src.models import PerturbationAction, PerturbationStrategy, ReportMetadata, RiskLevel

logger = get_logger(__name__)

Edge = Tuple[str, str]


class AmplificationSource(str, Enum):
    MEASURED = "measured"
    DECLARED = "declared"
    OBSERVED = "observed"
    ASSUMED = "assumed"


_PRECEDENCE = {
    AmplificationSource.MEASURED: 3,
    AmplificationSource.DECLARED: 2,
    AmplificationSource.OBSERVED: 1,
    AmplificationSource.ASSUMED: 0,
}


class AmplificationEntry(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    from_id: str = Field(..., description="Upstream component")
    to_id: str = Field(..., description="Downstream component")
    alpha: float = Field(..., ge=0.0, description="Load amplification factor")
    source: AmplificationSource = Field(..., description="Where alpha came from")
    window_s: Optional[int] = Field(None, description="Measurement window for measured entries")


@dataclass(frozen=True)
class AmplificationMap:
    """
    Per-edge amplification factors.

    Precedence runs measured, declared, observed, assumed. Observed entries
    come from partial perturbations and only bound alpha from below.
    """
    _entries: Mapping[Edge, AmplificationEntry] = field(default_factory=dict)

    @classmethod
    def from_topology(cls, topo: ValidatedTopology, assume_bypassable: bool = False) -> "AmplificationMap":
        """
        Declared alpha where present, otherwise an assumed alpha of 1.0.

        Undeclared edges leaving a cache, breaker or load balancer are left
        out unless assume_bypassable is set; their alpha has to be measured.
        """
        entries = {}
        for e in topo.edges:
            if e.declared_amplification is not None:
                entries[e.key] = AmplificationEntry(from_id=e.from_id, to_id=e.to_id,
                                                    alpha=e.declared_amplification,
                                                    source=AmplificationSource.DECLARED)
            elif assume_bypassable or topo.component(e.from_id).kind not in BYPASSABLE_KINDS:
                entries[e.key] = AmplificationEntry(from_id=e.from_id, to_id=e.to_id, alpha=1.0,
                                                    source=AmplificationSource.ASSUMED)
        return cls(entries)

    @classmethod
    def declared_only(cls, topo: ValidatedTopology) -> "AmplificationMap":
        return cls({
            e.key: AmplificationEntry(from_id=e.from_id, to_id=e.to_id, alpha=e.declared_amplification,
                                      source=AmplificationSource.DECLARED)
            for e in topo.edges if e.declared_amplification is not None
        })

    def alpha(self, source: str, target: str) -> Optional[float]:
        entry = self._entries.get((source, target))
        return entry.alpha if entry is not None else None

    def entry(self, source: str, target: str) -> Optional[AmplificationEntry]:
        return self._entries.get((source, target))

    def with_entry(self, entry: AmplificationEntry) -> "AmplificationMap":
        """New map including entry, unless an existing entry has higher precedence."""
        key = (entry.from_id, entry.to_id)
        current = self._entries.get(key)
        if current is not None and _PRECEDENCE[current.source] > _PRECEDENCE[entry.source]:
            return self
        return AmplificationMap({**self._entries, key: entry})

    def with_measured(self, source: str, target: str, alpha: float, window_s: int) -> "AmplificationMap":
        return self.with_entry(AmplificationEntry(from_id=source, to_id=target, alpha=alpha,
                                                  source=AmplificationSource.MEASURED, window_s=window_s))

    def raised(self, entry: AmplificationEntry) -> "AmplificationMap":
        """New map whose alpha on the entry's edge is at least entry.alpha."""
        key = (entry.from_id, entry.to_id)
        current = self._entries.get(key)
        if current is not None and current.alpha >= entry.alpha:
            return self
        return AmplificationMap({**self._entries, key: entry})

    def missing(self, topo: ValidatedTopology) -> List[Edge]:
        return [e.key for e in topo.edges if e.key not in self._entries]

    def entries(self) -> List[AmplificationEntry]:
        return [self._entries[k] for k in sorted(self._entries)]

    def __len__(self) -> int:
        return len(self._entries)


# Amplification measurement

def _check_bypassable(topo: ValidatedTopology, component_id: str) -> None:
    spec = topo.component(component_id)
    if spec.kind not in BYPASSABLE_KINDS:
        raise NotBypassable(component_id, spec.kind.value)


def measure_source(
    topo: ValidatedTopology,
    traffic: TrafficProfile,
    source: str,
    bypass_duration_s: int = settings.BYPASS_DURATION_S,
    seed: int = 0,
    baseline: Optional[TelemetryTrace] = None,
    start_tick: int = 0,
) -> Dict[Edge, Optional[float]]:
    """
    Alpha for every outgoing edge of one bypassable component.

    Edges whose baseline load is below the zero-baseline floor map to None.
    """
    _check_bypassable(topo, source)
    if baseline is None:
        baseline = run_simulation(topo, traffic, bypass_duration_s, seed, start_tick=start_tick)
    stressed = run_simulation(topo, traffic, bypass_duration_s, seed, start_tick=start_tick,
                              schedule=[(start_tick, OptimizationBypass(source))])
    result: Dict[Edge, Optional[float]] = {}
    for e in topo.out_edges(source):
        base = baseline.mean(e.to_id, "offered_rps")
        if base < settings.ZERO_BASELINE_RPS:
            result[e.key] = None
            continue
        result[e.key] = stressed.mean(e.to_id, "offered_rps") / base
    return result


def measure_amplification(
    topo: ValidatedTopology,
    traffic: TrafficProfile,
    edge: Edge,
    bypass_duration_s: int = settings.BYPASS_DURATION_S,
    seed: int = 0,
) -> float:
    """
    Measure the amplification of edge (i, j) by fully bypassing i's optimization.

    Runs a baseline and a bypassed simulation of bypass_duration_s ticks and
    divides the mean offered load at j in the bypassed run by the baseline mean.

    Raises:
        NotBypassable: i has no optimization to bypass
        ZeroBaseline: j sees no load in the baseline run
    """
    source, target = edge
    topo.edge(source, target)
    alphas = measure_source(topo, traffic, source, bypass_duration_s, seed)
    alpha = alphas[edge]
    if alpha is None:
        base = run_simulation(topo, traffic, bypass_duration_s, seed).mean(target, "offered_rps")
        raise ZeroBaseline(source, target, base)
    logger.info("measured alpha %s->%s = %.4g over %d ticks", source, target, alpha, bypass_duration_s)
    return alpha


def measure_amplification_map(
    topo: ValidatedTopology,
    traffic: TrafficProfile,
    bypass_duration_s: int = settings.BYPASS_DURATION_S,
    seed: int = 0,
    base: Optional[AmplificationMap] = None,
    baseline: Optional[TelemetryTrace] = None,
    start_tick: int = 0,
    sources: Optional[Sequence[str]] = None,
) -> AmplificationMap:
    """Measured alpha for every edge leaving the given (default: all) bypassable components, on top of base."""
    amap = base if base is not None else AmplificationMap.from_topology(topo)
    if sources is None:
        sources = topo.of_kind(*BYPASSABLE_KINDS)
    if not sources:
        return amap
    if baseline is None:
        baseline = run_simulation(topo, traffic, bypass_duration_s, seed, start_tick=start_tick)
    for source in sources:
        measured = measure_source(topo, traffic, source, bypass_duration_s, seed, baseline, start_tick)
        for (i, j), alpha in measured.items():
            if alpha is None:
                logger.warning("edge %s->%s has zero baseline load, keeping %s alpha", i, j,
                               amap.entry(i, j).source.value if amap.entry(i, j) else "no")
                continue
            amap = amap.with_measured(i, j, alpha, bypass_duration_s)
    return amap


def resolve_amplification(
    topo: ValidatedTopology,
    traffic: TrafficProfile,
    bypass_duration_s: int = settings.BYPASS_DURATION_S,
    seed: int = 0,
    measure_all: bool = False,
    baseline: Optional[TelemetryTrace] = None,
    start_tick: int = 0,
) -> AmplificationMap:
    """
    Amplification map for risk assessment.

    Declared and assumed alpha first; components with an undeclared
    outgoing edge are then bypassed and measured. With measure_all every
    bypassable component is measured and measurements override declarations.
    An edge that still has no alpha (zero baseline load) stays missing, so
    the LRI of its target raises MissingAmplification.
    """
    amap = AmplificationMap.from_topology(topo)
    if measure_all:
        sources = None
    else:
        sources = sorted({i for i, _ in amap.missing(topo)}, key=topo.order.index)
        if not sources:
            return amap
        logger.info("measuring undeclared amplification out of %s", ", ".join(sources))
    return measure_amplification_map(topo, traffic, bypass_duration_s, seed, base=amap,
                                     baseline=baseline, start_tick=start_tick, sources=sources)


# Risk formulas

class RiskInputs(BaseModel):
    """LRI terms for one component."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    alpha_max: float = Field(..., description="Maximum upstream amplification")
    depth: int = Field(..., description="Dependency depth")
    criticality: float = Field(..., description="Business criticality")
    observability: float = Field(..., description="Observability coverage")
    recovery: float = Field(..., description="Recovery rate, 1 / mttr_minutes")

    def lri(self) -> float:
        return (self.alpha_max * self.depth * self.criticality) / (self.observability * self.recovery)


def compute_latent_accumulation(topo: ValidatedTopology, amap: AmplificationMap, component_id: str) -> float:
    """Sum over predecessors j of alpha(j, i) * bypass_probability(j) * (1 - edge_observability)."""
    total = 0.0
    for e in topo.in_edges(component_id):
        alpha = amap.alpha(e.from_id, e.to_id)
        if alpha is None:
            raise MissingAmplification(e.from_id, e.to_id)
        total += alpha * topo.component(e.from_id).bypass_probability * (1.0 - e.edge_observability)
    return total


def risk_inputs(topo: ValidatedTopology, amap: AmplificationMap, component_id: str) -> RiskInputs:
    spec = topo.component(component_id)
    if topo.is_entry(component_id):
        alpha_max, depth = 1.0, 1
    else:
        alpha_max = max_upstream_amplification(topo, amap, component_id)
        depth = dependency_depth(topo, component_id)
    return RiskInputs(
        alpha_max=alpha_max,
        depth=depth,
        criticality=spec.criticality,
        observability=spec.observability_coverage,
        recovery=spec.recovery,
    )


def compute_lri(topo: ValidatedTopology, amap: AmplificationMap, component_id: str) -> float:
    """
    Latent Risk Index: (alpha_max * depth * criticality) / (observability * recovery).

    Raises:
        ZeroObservability: observability coverage is 0
        MissingAmplification: an incoming edge has no alpha
    """
    spec = topo.component(component_id)
    if spec.observability_coverage <= 0.0:
        raise ZeroObservability(component_id)
    return risk_inputs(topo, amap, component_id).lri()


def classify_risk(lri: float) -> RiskLevel:
    """Low below 2.0, Medium in [2.0, 10.0), High from 10.0."""
    if math.isnan(lri) or lri < 0.0:
        raise ValueError(f"lri must be a non-negative number, got {lri!r}")
    if lri < settings.LRI_MEDIUM:
        return RiskLevel.LOW
    if lri < settings.LRI_HIGH:
        return RiskLevel.MEDIUM
    return RiskLevel.HIGH


def severity_band(lri: float) -> str:
    """Finer report annotation band for an LRI."""
    label = settings.LRI_BANDS[0][1]
    for lower, name in settings.LRI_BANDS:
        if lri >= lower:
            label = name
    return label


# Resilience observability

class FailureMode(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str = Field(..., description="Failure mode name")
    detection_probability: float = Field(..., ge=0.0, le=1.0, description="P(detect before failure)")


class FailureModeCatalog(BaseModel):
    """Failure modes per component."""
    model_config = ConfigDict(extra="forbid")

    modes: Dict[str, List[FailureMode]] = Field(default_factory=dict, description="component id -> failure modes")

    def add(self, component_id: str, mode: FailureMode) -> None:
        self.modes.setdefault(component_id, []).append(mode)


def compute_ros(catalog: FailureModeCatalog, component_id: str) -> float:
    """Mean detection probability over the component's failure modes."""
    modes = catalog.modes.get(component_id) or []
    if not modes:
        raise EmptyCatalog(component_id)
    return float(np.mean([m.detection_probability for m in modes]))


class MonitorMetric(str, Enum):
    ERROR_RPS = "error_rps"
    ERROR_FRACTION = "error_fraction"
    LATENCY_MS = "latency_ms"
    UTILIZATION = "utilization"
    OFFERED_RPS = "offered_rps"


class MonitorRule(BaseModel):
    """Threshold alert firing when the metric strictly exceeds the threshold."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    component: str = Field(..., description="Monitored component")
    metric: MonitorMetric = Field(..., description="Monitored metric")
    threshold: float = Field(..., description="Firing threshold")

    def fires(self, sample: ComponentSample) -> bool:
        return getattr(sample, self.metric.value) > self.threshold


class FailureModeSpec(BaseModel):
    """A failure to inject when estimating detection probability."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str = Field(..., description="Failure mode name")
    component: str = Field(..., description="Component whose catalog receives the estimate")
    action: PerturbationAction = Field(..., description="Injected failure")
    ramp_ticks: int = Field(0, ge=0, description="Ticks over which the magnitude ramps up to its full value")


def detection_onsets(seed: int, trials: int) -> List[int]:
    """Randomized failure onset ticks used by the detection trials."""
    rng = rng_for(seed, "detection")
    offsets = rng.integers(0, settings.DETECTION_ONSET_SPREAD_TICKS, size=trials)
    return [settings.DETECTION_WARMUP_TICKS + int(o) for o in offsets]


def _failure_schedule(failure: PerturbationAction, onset: int, ramp_ticks: int) -> List[tuple]:
    if ramp_ticks <= 1 or failure.strategy not in (
        PerturbationStrategy.LATENCY_INJECTION, PerturbationStrategy.CACHE_BYPASS
    ):
        return [(onset, failure)]
    return [
        (onset + r, failure.model_copy(update={"magnitude": failure.magnitude * (r + 1) / ramp_ticks}))
        for r in range(ramp_ticks)
    ]


def estimate_detection_probability(
    topo: ValidatedTopology,
    traffic: TrafficProfile,
    failure: PerturbationAction,
    monitor_rules: Sequence[MonitorRule],
    trials: int,
    seed: int,
    ramp_ticks: int = 0,
) -> float:
    """
    Fraction of trials in which a monitor rule fires before the failure
    causes errors.

    Every trial runs warmup + spread + horizon ticks with the failure starting
    at a seeded random onset. A trial counts as detected when some rule fires
    at or after the onset and no later than the first tick with errors; a
    trial whose failure never causes errors counts when any rule fired.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not monitor_rules:
        return 0.0
    duration = (settings.DETECTION_WARMUP_TICKS + settings.DETECTION_ONSET_SPREAD_TICKS
                + settings.DETECTION_HORIZON_TICKS)
    ramp = min(ramp_ticks, settings.DETECTION_HORIZON_TICKS)
    detected = 0
    for onset in detection_onsets(seed, trials):
        schedule = [(t, a) for t, a in _failure_schedule(failure, onset, ramp) if t < duration]
        trace = run_simulation(topo, traffic, duration, seed, schedule=schedule)
        fired = False
        for state in trace.states[onset:]:
            if any(rule.fires(state.sample(rule.component)) for rule in monitor_rules):
                fired = True
                break
            if any(s.error_rps > 1e-9 for s in state.components.values()):
                break
        detected += fired
    probability = detected / trials
    logger.debug("detection of %s on %s: %d/%d", failure.strategy.value, failure.target, detected, trials)
    return probability


def build_failure_catalog(
    topo: ValidatedTopology,
    traffic: TrafficProfile,
    failure_modes: Iterable[FailureModeSpec],
    rules: Sequence[MonitorRule],
    trials: int,
    seed: int,
) -> FailureModeCatalog:
    catalog = FailureModeCatalog()
    for mode in failure_modes:
        probability = estimate_detection_probability(
            topo, traffic, mode.action, rules, trials, derive_seed(seed, "failure_mode", mode.name),
            ramp_ticks=mode.ramp_ticks,
        )
        catalog.add(mode.component, FailureMode(name=mode.name, detection_probability=probability))
    return catalog


class BlindSpot(BaseModel):
    """Component degrading while no monitor rule fires."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    component: str
    silent_ticks: int = Field(..., description="Degraded ticks with no rule firing")
    signals: List[str] = Field(..., description="Degraded signals observed")


def find_blind_spots(trace: TelemetryTrace, baseline: TelemetryTrace,
                     rules: Sequence[MonitorRule]) -> List[BlindSpot]:
    """Observability gaps: degradation past the safety thresholds that no rule reports."""
    base_latency = {cid: baseline.mean(cid, "latency_ms") for cid in baseline.component_ids}
    silent: Dict[str, int] = {}
    signals: Dict[str, set] = {}
    for state in trace.states:
        if any(rule.fires(state.sample(rule.component)) for rule in rules):
            continue
        for cid, sample in state.components.items():
            seen = []
            if sample.error_fraction > settings.SAFETY_ERROR_RATE:
                seen.append("error_rate")
            if sample.latency_ms > settings.SAFETY_LATENCY_FACTOR * base_latency.get(cid, math.inf):
                seen.append("p95_latency")
            if seen:
                silent[cid] = silent.get(cid, 0) + 1
                signals.setdefault(cid, set()).update(seen)
    spots = [BlindSpot(component=cid, silent_ticks=n, signals=sorted(signals[cid])) for cid, n in silent.items()]
    return sorted(spots, key=lambda s: (-s.silent_ticks, s.component))


def failure_blind_spots(
    topo: ValidatedTopology,
    traffic: TrafficProfile,
    failure_modes: Iterable[FailureModeSpec],
    rules: Sequence[MonitorRule],
    seed: int,
) -> List[BlindSpot]:
    """
    Blind spots while each failure mode is injected, merged per component.

    Every failure starts after the detection warmup and runs for the
    detection horizon; silent ticks add up across failure modes.
    """
    onset = settings.DETECTION_WARMUP_TICKS
    duration = onset + settings.DETECTION_HORIZON_TICKS
    baseline = run_simulation(topo, traffic, duration, seed)
    silent: Dict[str, int] = {}
    signals: Dict[str, set] = {}
    for mode in failure_modes:
        ramp = min(mode.ramp_ticks, settings.DETECTION_HORIZON_TICKS)
        schedule = [(t, a) for t, a in _failure_schedule(mode.action, onset, ramp) if t < duration]
        trace = run_simulation(topo, traffic, duration, seed, schedule=schedule)
        for spot in find_blind_spots(trace, baseline, rules):
            silent[spot.component] = silent.get(spot.component, 0) + spot.silent_ticks
            signals.setdefault(spot.component, set()).update(spot.signals)
    spots = [BlindSpot(component=cid, silent_ticks=n, signals=sorted(signals[cid])) for cid, n in silent.items()]
    if spots:
        logger.info("%d component(s) degrade without a firing rule", len(spots))
    return sorted(spots, key=lambda s: (-s.silent_ticks, s.component))


# System assessment

class ComponentRisk(BaseModel):
    model_config = ConfigDict(extra="forbid")

    component: str = Field(..., description="Component id")
    rank: int = Field(..., ge=1, description="1 = riskiest")
    lri: float = Field(..., ge=0.0, description="Latent Risk Index")
    level: RiskLevel = Field(..., description="Three-level classification")
    band: str = Field(..., description="Finer severity band annotation")
    inputs: RiskInputs = Field(..., description="LRI inputs")
    latent_accumulation: float = Field(..., ge=0.0, description="Latent risk accumulated from bypassable predecessors")
    ros: Optional[float] = Field(None, description="Resilience observability score, when cataloged")


class RiskReport(BaseModel):
    """Components ranked by LRI descending, ties broken by id."""
    model_config = ConfigDict(extra="forbid")

    components: List[ComponentRisk] = Field(default_factory=list)
    blind_spots: List[BlindSpot] = Field(default_factory=list, description="Degradation no monitor rule reports")
    metadata: Optional[ReportMetadata] = Field(None)

    def get(self, component_id: str) -> ComponentRisk:
        for c in self.components:
            if c.component == component_id:
                return c
        raise KeyError(component_id)

    @property
    def system_lri(self) -> float:
        return max((c.lri for c in self.components), default=0.0)

    def levels(self) -> Dict[str, RiskLevel]:
        return {c.component: c.level for c in self.components}


def assess_system_risk(
    topo: ValidatedTopology,
    amap: AmplificationMap,
    catalog: Optional[FailureModeCatalog] = None,
) -> RiskReport:
    """
    Compute and rank every component's LRI.

    Raises:
        RiskError: from compute_lri, carrying the component id
    """
    rows = []
    for cid in topo.order:
        try:
            lri = compute_lri(topo, amap, cid)
            inputs = risk_inputs(topo, amap, cid)
            latent = compute_latent_accumulation(topo, amap, cid)
        except RiskError as exc:
            if exc.component_id is None:
                exc.component_id = cid
            raise
        ros = None
        if catalog is not None and catalog.modes.get(cid):
            ros = compute_ros(catalog, cid)
        rows.append((cid, lri, inputs, latent, ros))

    rows.sort(key=lambda r: (-r[1], r[0]))
    components = [
        ComponentRisk(
            component=cid,
            rank=rank,
            lri=lri,
            level=classify_risk(lri),
            band=severity_band(lri),
            inputs=inputs,
            latent_accumulation=latent,
            ros=ros,
        )
        for rank, (cid, lri, inputs, latent, ros) in enumerate(rows, start=1)
    ]
    return RiskReport(components=components)


def system_lri(topo: ValidatedTopology, amap: AmplificationMap) -> float:
    """Maximum LRI over all components."""
    return max(compute_lri(topo, amap, cid) for cid in topo.order)
