#!/usr/bin/env python3
"""
Deterministic fluid simulation of traffic through a validated topology.

Each 1 s tick propagates entry load in topological order. Components serve up
to their capacity, optimization layers absorb or shed part of what they
serve, and the remainder is split over outgoing edges by load_fraction.
"""

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Callable, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.config import settings
from src.core.seeding import rng_for
from src.core.topology import (
    BreakerParams,
    CacheParams,
    ComponentKind,
    LatencyModel,
    LatencyProfile,
    LoadBalancerParams,
    QueueParams,
    ValidatedTopology,
)
from src.errors import IncompatibleTarget, ScheduleOutOfRange, UnknownComponent
from src.log_config import get_logger
from src.models import PerturbationAction, PerturbationStrategy

logger = get_logger(__name__)

TELEMETRY_COLUMNS = (
    "tick_s", "component", "offered_rps", "served_rps", "error_rps",
    "utilization", "latency_ms", "hit_rate", "breaker_state",
)


class TrafficPattern(str, Enum):
    CONSTANT = "constant"
    DIURNAL = "diurnal"
    SPIKE = "spike"


class TrafficProfile(BaseModel):
    """Offered load at the entries as a function of the tick."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    pattern: TrafficPattern = Field(TrafficPattern.CONSTANT, description="Load shape")
    base_rps: float = Field(..., gt=0.0, description="Base offered load in requests/second")
    spike_multiplier: float = Field(1.0, ge=1.0, description="Load multiplier during the spike")
    spike_start_s: int = Field(0, ge=0, description="First spike tick")
    spike_duration_s: int = Field(0, ge=0, description="Spike length in ticks")
    diurnal_period_s: int = Field(86400, gt=0, description="Diurnal period in ticks")
    diurnal_amplitude: float = Field(0.5, ge=0.0, le=1.0, description="Relative diurnal swing")
    noise_fraction: float = Field(0.0, ge=0.0, lt=1.0, description="Relative std-dev of seeded load noise")

    def offered_at(self, tick_s: int) -> float:
        """Noise-free offered load at a tick."""
        if self.pattern == TrafficPattern.DIURNAL:
            phase = 2.0 * math.pi * tick_s / self.diurnal_period_s
            return self.base_rps * (1.0 + self.diurnal_amplitude * math.sin(phase))
        if self.pattern == TrafficPattern.SPIKE:
            if self.spike_start_s <= tick_s < self.spike_start_s + self.spike_duration_s:
                return self.base_rps * self.spike_multiplier
        return self.base_rps


class BreakerMode(str, Enum):
    CLOSED = "closed"
    OPEN = "open"
    HALF_OPEN = "half_open"


@dataclass(frozen=True, slots=True)
class BreakerState:
    mode: BreakerMode = BreakerMode.CLOSED
    ticks_open: int = 0


@dataclass(frozen=True, slots=True)
class ComponentSample:
    """Metrics of one component on one tick."""
    component: str
    offered_rps: float
    served_rps: float
    error_rps: float
    utilization: float
    latency_ms: float
    queue_depth: float = 0.0
    # Kept locally this tick. At queues this includes the backlog change,
    # so it goes negative while a backlog drains.
    absorbed_rps: float = 0.0
    forwarded_rps: float = 0.0
    hit_rate: Optional[float] = None
    breaker_state: Optional[BreakerMode] = None

    @property
    def error_fraction(self) -> float:
        return self.error_rps / self.offered_rps if self.offered_rps > 0.0 else 0.0


@dataclass(frozen=True, slots=True)
class SimState:
    """Snapshot of one tick; components keyed by id in topological order."""
    tick_s: int
    components: Mapping[str, ComponentSample]
    active_perturbations: Tuple[PerturbationAction, ...] = ()
    rolled_back: bool = False

    def sample(self, component_id: str) -> ComponentSample:
        try:
            return self.components[component_id]
        except KeyError:
            raise UnknownComponent(component_id) from None


@dataclass(frozen=True)
class Clear:
    """Schedule item removing active actions; all of them when target is None."""
    target: Optional[str] = None


@dataclass(frozen=True)
class OptimizationBypass:
    """Full bypass of one optimization layer, for amplification measurement."""
    target: str


@dataclass(frozen=True)
class ClearBypass:
    target: Optional[str] = None


ScheduleItem = Union[PerturbationAction, Clear, OptimizationBypass, ClearBypass]
Schedule = Sequence[Tuple[int, ScheduleItem]]
Guard = Callable[[SimState], bool]


@dataclass(frozen=True)
class TelemetryTrace:
    """Gap-free sequence of tick snapshots plus run metadata."""
    states: Tuple[SimState, ...]
    seed: int
    duration_s: int
    scenario_hash: str = ""
    start_tick: int = 0

    def __len__(self) -> int:
        return len(self.states)

    def __iter__(self) -> Iterator[SimState]:
        return iter(self.states)

    @property
    def ticks(self) -> List[int]:
        return [s.tick_s for s in self.states]

    @property
    def component_ids(self) -> Tuple[str, ...]:
        return tuple(self.states[0].components) if self.states else ()

    def series(self, component_id: str, metric: str, start: Optional[int] = None,
               end: Optional[int] = None) -> np.ndarray:
        """Metric values of one component over ticks [start, end)."""
        values = [
            getattr(s.sample(component_id), metric)
            for s in self.states
            if (start is None or s.tick_s >= start) and (end is None or s.tick_s < end)
        ]
        return np.asarray([np.nan if v is None else v for v in values], dtype=float)

    def mean(self, component_id: str, metric: str, start: Optional[int] = None,
             end: Optional[int] = None) -> float:
        values = self.series(component_id, metric, start, end)
        return float(values.mean()) if values.size else 0.0

    def slice(self, start: int, end: int) -> "TelemetryTrace":
        """Sub-trace over ticks [start, end)."""
        states = tuple(s for s in self.states if start <= s.tick_s < end)
        return replace(self, states=states, duration_s=len(states),
                       start_tick=states[0].tick_s if states else start)

    def records(self) -> Iterator[Dict[str, object]]:
        """Flat rows, one per tick per component, in export column order."""
        for s in self.states:
            for sample in s.components.values():
                yield {
                    "tick_s": s.tick_s,
                    "component": sample.component,
                    "offered_rps": sample.offered_rps,
                    "served_rps": sample.served_rps,
                    "error_rps": sample.error_rps,
                    "utilization": sample.utilization,
                    "latency_ms": sample.latency_ms,
                    "hit_rate": sample.hit_rate,
                    "breaker_state": sample.breaker_state.value if sample.breaker_state else None,
                }


def latency_at_utilization(profile: LatencyProfile, utilization: float) -> float:
    """
    Latency of a profile at utilization rho in [0, 1].

    mm1 is base/(1 - rho) clamped at the cap; linear runs from base to cap;
    table interpolates its points and reaches the cap at rho = 1.
    """
    rho = min(1.0, max(0.0, utilization))
    base, cap = profile.base_latency_ms, profile.saturation_cap_ms
    if profile.model == LatencyModel.LINEAR:
        return base + rho * (cap - base)
    if profile.model == LatencyModel.TABLE:
        xs = [p[0] for p in profile.table_points]
        ys = [p[1] for p in profile.table_points]
        if xs[-1] < 1.0:
            xs.append(1.0)
            ys.append(cap)
        return float(np.interp(rho, xs, ys))
    if rho >= 1.0:
        return cap
    return min(cap, base / (1.0 - rho))


def step_circuit_breaker(state: BreakerState, window_error_rate: float, params: BreakerParams) -> BreakerState:
    """One transition of the closed/open/half_open state machine."""
    if state.mode == BreakerMode.CLOSED:
        if window_error_rate > params.trip_threshold:
            return BreakerState(BreakerMode.OPEN, 0)
        return state
    if state.mode == BreakerMode.OPEN:
        ticks_open = state.ticks_open + 1
        if ticks_open >= params.recovery_ticks:
            return BreakerState(BreakerMode.HALF_OPEN, 0)
        return BreakerState(BreakerMode.OPEN, ticks_open)
    if window_error_rate <= params.trip_threshold:
        return BreakerState(BreakerMode.CLOSED, 0)
    return BreakerState(BreakerMode.OPEN, 0)


_COMPATIBLE_KINDS = {
    PerturbationStrategy.CACHE_BYPASS: {ComponentKind.CACHE},
    PerturbationStrategy.BREAKER_BYPASS: {ComponentKind.CIRCUIT_BREAKER},
    PerturbationStrategy.LB_MANIPULATION: {ComponentKind.LOAD_BALANCER},
}


def check_compatible(topo: ValidatedTopology, action: PerturbationAction) -> PerturbationAction:
    """
    Verify an action can target its component.

    Returns the action with the isolated source resolved for dependency_isolation.

    Raises:
        UnknownComponent, IncompatibleTarget
    """
    spec = topo.component(action.target)
    allowed = _COMPATIBLE_KINDS.get(action.strategy)
    if allowed is not None and spec.kind not in allowed:
        raise IncompatibleTarget(action.strategy.value, spec.id, spec.kind.value)
    if action.strategy == PerturbationStrategy.DEPENDENCY_ISOLATION:
        preds = topo.predecessors(spec.id)
        if not preds:
            raise IncompatibleTarget(action.strategy.value, spec.id, spec.kind.value)
        if action.source is None:
            return action.model_copy(update={"source": preds[0]})
        if action.source not in preds:
            raise IncompatibleTarget(action.strategy.value, spec.id, spec.kind.value)
    return action


@dataclass
class _Node:
    id: str
    kind: ComponentKind
    capacity: float
    profile: LatencyProfile
    params: object
    out: List[Tuple[str, float]]
    is_entry: bool


@dataclass
class _Tick:
    snapshot: SimState
    breakers: Dict[str, BreakerState]
    backlog: Dict[str, float]


class Simulator:
    """
    Stepping engine holding the live state of one run.

    Actions, bypasses and mitigation fractions persist across steps until
    cleared; reconfigure() swaps optimization parameters without resetting
    breaker or queue state.
    """

    def __init__(self, topo: ValidatedTopology, traffic: TrafficProfile, seed: int = 0, start_tick: int = 0):
        """
        Initialize a simulator.

        Args:
            topo: Validated topology
            traffic: Entry traffic profile
            seed: Master seed; only traffic noise draws from it
            start_tick: Clock value of the first step
        """
        self.traffic = traffic
        self.seed = seed
        self.tick = start_tick
        self.shadow_fraction = 0.0
        self.shed_fraction = 0.0
        self._actions: Dict[tuple, PerturbationAction] = {}
        self._bypassed: Dict[str, int] = {}
        self._breakers: Dict[str, BreakerState] = {}
        self._backlog: Dict[str, float] = {}
        self.reconfigure(topo)

    @property
    def topology(self) -> ValidatedTopology:
        return self._topo

    @property
    def active_actions(self) -> Tuple[PerturbationAction, ...]:
        return tuple(self._actions[k] for k in sorted(self._actions))

    def reconfigure(self, topo: ValidatedTopology) -> None:
        self._topo = topo
        self._nodes = [
            _Node(
                id=cid,
                kind=spec.kind,
                capacity=spec.effective_capacity(),
                profile=spec.latency_profile,
                params=spec.optimization_params,
                out=[(e.to_id, e.load_fraction) for e in topo.out_edges(cid)],
                is_entry=topo.is_entry(cid),
            )
            for cid, spec in ((cid, topo.component(cid)) for cid in topo.order)
        ]
        for node in self._nodes:
            if node.kind == ComponentKind.CIRCUIT_BREAKER:
                self._breakers.setdefault(node.id, BreakerState())
            if node.kind == ComponentKind.QUEUE:
                self._backlog.setdefault(node.id, 0.0)

    def apply(self, action: PerturbationAction) -> PerturbationAction:
        """Activate an action; re-applying the same key replaces the earlier one."""
        action = check_compatible(self._topo, action).model_copy(update={"started_tick": self.tick})
        self._actions[action.key] = action
        logger.debug("tick %d: applied %s on %s (%.4g)", self.tick, action.strategy.value,
                     action.target, action.magnitude)
        return action

    def clear(self, target: Optional[str] = None) -> None:
        if target is None:
            self._actions.clear()
        else:
            for key in [k for k, a in self._actions.items() if a.target == target]:
                del self._actions[key]

    def bypass(self, target: str) -> None:
        spec = self._topo.component(target)
        if spec.kind not in (ComponentKind.CACHE, ComponentKind.CIRCUIT_BREAKER, ComponentKind.LOAD_BALANCER):
            raise IncompatibleTarget("optimization_bypass", target, spec.kind.value)
        self._bypassed[target] = self.tick

    def clear_bypass(self, target: Optional[str] = None) -> None:
        if target is None:
            self._bypassed.clear()
        else:
            self._bypassed.pop(target, None)

    def set_shadow_fraction(self, fraction: float) -> None:
        self.shadow_fraction = min(settings.SHADOW_FRACTION_MAX, max(0.0, fraction))

    def set_shed_fraction(self, fraction: float) -> None:
        self.shed_fraction = min(0.999, max(0.0, fraction))

    def restore_normal_operation(self) -> None:
        self._actions.clear()
        self._bypassed.clear()

    def step(self, guard: Optional[Guard] = None) -> SimState:
        """
        Advance one tick.

        When guard returns True for the computed snapshot, every action is
        cleared and the same tick is recomputed without them.
        """
        self._expire_actions()
        result = self._compute(self.tick)
        if guard is not None and self._actions and guard(result.snapshot):
            logger.warning("tick %d: guard tripped, rolling back %d action(s)", self.tick, len(self._actions))
            self._actions.clear()
            result = self._compute(self.tick)
            result.snapshot = replace(result.snapshot, rolled_back=True)
        self._breakers = result.breakers
        self._backlog = result.backlog
        self.tick += 1
        return result.snapshot

    def _expire_actions(self) -> None:
        limit = settings.MAX_PERTURBATION_TICKS
        for key, action in list(self._actions.items()):
            if self.tick - action.started_tick >= limit:
                logger.info("tick %d: %s on %s reached the %d-tick limit", self.tick,
                            action.strategy.value, action.target, limit)
                del self._actions[key]

    def _entry_load(self, tick_s: int) -> float:
        load = self.traffic.offered_at(tick_s)
        if self.traffic.noise_fraction > 0.0:
            noise = rng_for(self.seed, "traffic", tick_s).standard_normal()
            load *= max(0.0, 1.0 + self.traffic.noise_fraction * noise)
        return load * (1.0 - self.shed_fraction)

    def _compute(self, tick_s: int) -> _Tick:
        bypass_frac: Dict[str, float] = {}
        injected: Dict[str, float] = {}
        multiplier: Dict[str, float] = {}
        forced_closed = set()
        removed: Dict[str, int] = {}
        isolated = set()
        for a in self._actions.values():
            if a.strategy == PerturbationStrategy.CACHE_BYPASS:
                bypass_frac[a.target] = a.magnitude
            elif a.strategy == PerturbationStrategy.LATENCY_INJECTION:
                injected[a.target] = injected.get(a.target, 0.0) + a.magnitude
            elif a.strategy == PerturbationStrategy.RESOURCE_CONSTRAINT:
                multiplier[a.target] = a.magnitude
            elif a.strategy == PerturbationStrategy.BREAKER_BYPASS:
                forced_closed.add(a.target)
            elif a.strategy == PerturbationStrategy.LB_MANIPULATION:
                removed[a.target] = 1
            elif a.strategy == PerturbationStrategy.DEPENDENCY_ISOLATION:
                isolated.add((a.source, a.target))
        for target in self._bypassed:
            bypass_frac[target] = 1.0
            forced_closed.add(target)
            removed[target] = max(removed.get(target, 0), 1)

        entries = [n for n in self._nodes if n.is_entry]
        per_entry = self._entry_load(tick_s) / len(entries)
        inflow: Dict[str, float] = {n.id: 0.0 for n in self._nodes}
        for n in entries:
            inflow[n.id] += per_entry

        samples: Dict[str, ComponentSample] = {}
        backlog = dict(self._backlog)
        for n in self._nodes:
            capacity = n.capacity * multiplier.get(n.id, 1.0)
            if n.kind == ComponentKind.LOAD_BALANCER and n.id in removed:
                replicas = n.params.replicas if isinstance(n.params, LoadBalancerParams) else 1
                capacity *= max(0, replicas - removed[n.id]) / replicas

            offered = inflow[n.id]
            available = offered
            held = backlog.get(n.id, 0.0)
            if n.kind == ComponentKind.QUEUE:
                available = offered + held
            served = min(available, capacity)
            remaining = available - served
            queue_depth = 0.0
            if n.kind == ComponentKind.QUEUE:
                depth = n.params.queue_depth if isinstance(n.params, QueueParams) else 0.0
                queue_depth = min(remaining, depth)
                backlog[n.id] = queue_depth
                remaining -= queue_depth
            errors = remaining

            forwarded = served
            hit_rate = None
            breaker_mode = None
            if n.kind == ComponentKind.CACHE and isinstance(n.params, CacheParams):
                hit_rate = n.params.hit_rate(tick_s)
                effective_hit = hit_rate * (1.0 - bypass_frac.get(n.id, 0.0)) * (1.0 - self.shadow_fraction)
                forwarded = served * (1.0 - effective_hit)
            elif n.kind == ComponentKind.CIRCUIT_BREAKER:
                mode = BreakerMode.CLOSED if n.id in forced_closed else self._breakers[n.id].mode
                breaker_mode = mode
                if mode == BreakerMode.OPEN:
                    errors += served
                    served = 0.0
                    forwarded = 0.0
                elif mode == BreakerMode.HALF_OPEN:
                    probe = n.params.half_open_probe_fraction if isinstance(n.params, BreakerParams) else 0.1
                    forwarded = served * probe
                    errors += served - forwarded
                    served = forwarded

            sent = 0.0
            for to_id, fraction in n.out:
                if (n.id, to_id) in isolated:
                    continue
                share = forwarded * fraction
                inflow[to_id] += share
                sent += share

            if capacity > 0.0:
                utilization = min(1.0, available / capacity)
            else:
                utilization = 1.0 if available > 0.0 else 0.0
            latency = latency_at_utilization(n.profile, utilization) + injected.get(n.id, 0.0)
            samples[n.id] = ComponentSample(
                component=n.id,
                offered_rps=offered,
                served_rps=served,
                error_rps=errors,
                utilization=utilization,
                latency_ms=latency,
                queue_depth=queue_depth,
                absorbed_rps=served - sent + queue_depth - held,
                forwarded_rps=sent,
                hit_rate=hit_rate,
                breaker_state=breaker_mode,
            )

        breakers = dict(self._breakers)
        for n in self._nodes:
            if n.kind != ComponentKind.CIRCUIT_BREAKER or not isinstance(n.params, BreakerParams):
                continue
            if n.id in forced_closed:
                breakers[n.id] = BreakerState()
                continue
            downstream = [samples[to_id] for to_id, _ in n.out]
            offered = sum(s.offered_rps for s in downstream)
            rate = sum(s.error_rps for s in downstream) / offered if offered > 0.0 else 0.0
            breakers[n.id] = step_circuit_breaker(breakers[n.id], min(1.0, rate), n.params)

        snapshot = SimState(tick_s=tick_s, components=samples, active_perturbations=self.active_actions)
        return _Tick(snapshot=snapshot, breakers=breakers, backlog=backlog)


def apply_action(sim: Simulator, action: PerturbationAction) -> Simulator:
    """Activate an action on a running simulator; its effect shows from the next step."""
    sim.apply(action)
    return sim


def run_simulation(
    topo: ValidatedTopology,
    traffic: TrafficProfile,
    duration_s: int,
    seed: int,
    schedule: Optional[Schedule] = None,
    start_tick: int = 0,
    guard: Optional[Guard] = None,
    scenario_hash: str = "",
    simulator: Optional[Simulator] = None,
) -> TelemetryTrace:
    """
    Run the simulation for duration_s ticks.

    Schedule items take effect at the start of their tick. Passing a
    simulator continues its live state instead of starting fresh.

    Raises:
        ScheduleOutOfRange: a schedule tick falls outside the run
    """
    if duration_s < 1:
        raise ValueError("duration_s must be >= 1")
    sim = simulator or Simulator(topo, traffic, seed=seed, start_tick=start_tick)
    first = sim.tick
    end = first + duration_s

    pending: Dict[int, List[ScheduleItem]] = {}
    for tick, item in schedule or ():
        if not first <= tick < end:
            raise ScheduleOutOfRange(tick, duration_s)
        pending.setdefault(tick, []).append(item)

    states = []
    while sim.tick < end:
        for item in pending.get(sim.tick, ()):
            if isinstance(item, PerturbationAction):
                sim.apply(item)
            elif isinstance(item, Clear):
                sim.clear(item.target)
            elif isinstance(item, OptimizationBypass):
                sim.bypass(item.target)
            elif isinstance(item, ClearBypass):
                sim.clear_bypass(item.target)
        states.append(sim.step(guard))

    return TelemetryTrace(states=tuple(states), seed=seed, duration_s=duration_s,
                          scenario_hash=scenario_hash, start_tick=first)
