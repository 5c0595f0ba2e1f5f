#!/usr/bin/env python3
"""
Declarative dependency graph G=(V, E, W) with validation and structural queries.

Numeric ranges of components and edges are checked by validate_topology so
that violations surface as InvalidField naming the field; kind-specific
optimization parameters are constrained by their pydantic models.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, List, Mapping, Optional, Protocol, Tuple, Union

import networkx as nx
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.errors import (
    CycleDetected,
    DanglingEdge,
    InvalidField,
    MissingAmplification,
    UnknownComponent,
    UnreachableComponent,
)
from src.log_config import get_logger

logger = get_logger(__name__)


class ComponentKind(str, Enum):
    CACHE = "cache"
    LOAD_BALANCER = "load_balancer"
    CIRCUIT_BREAKER = "circuit_breaker"
    QUEUE = "queue"
    SERVICE = "service"
    DATABASE = "database"
    ENTRY = "entry"


BYPASSABLE_KINDS = frozenset({
    ComponentKind.CACHE,
    ComponentKind.CIRCUIT_BREAKER,
    ComponentKind.LOAD_BALANCER,
})


class LatencyModel(str, Enum):
    MM1 = "mm1"
    LINEAR = "linear"
    TABLE = "table"


class LatencyProfile(BaseModel):
    """Latency as a function of utilization."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    base_latency_ms: float = Field(..., description="Latency at zero utilization")
    model: LatencyModel = Field(LatencyModel.MM1, description="Curve family")
    saturation_cap_ms: float = Field(..., description="Latency at saturation")
    table_points: Optional[List[Tuple[float, float]]] = Field(
        None, description="(utilization, latency_ms) points for the table model"
    )


# Kind-specific optimization parameters

class CacheParams(BaseModel):
    """Working-set hit curve: hit(s) = max_hit_rate * (1 - exp(-s / working_set))."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    cache_size: float = Field(..., ge=0.0, description="Cache size in memory units")
    max_hit_rate: float = Field(..., ge=0.0, le=1.0, description="Asymptotic hit rate")
    working_set: float = Field(..., gt=0.0, description="Size scale of the working set")
    hit_drift_per_s: float = Field(0.0, ge=0.0, description="Linear hit-rate decay per simulated second")

    def hit_rate(self, tick_s: float = 0.0) -> float:
        curve = self.max_hit_rate * (1.0 - math.exp(-self.cache_size / self.working_set))
        return min(1.0, max(0.0, curve - self.hit_drift_per_s * tick_s))


class BreakerParams(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    trip_threshold: float = Field(0.5, gt=0.0, le=1.0, description="Error rate that opens the breaker")
    recovery_ticks: int = Field(5, ge=1, description="Ticks spent open before probing")
    half_open_probe_fraction: float = Field(0.1, gt=0.0, le=1.0, description="Traffic share let through while probing")


class BalancingPolicy(str, Enum):
    ROUND_ROBIN = "round_robin"
    LEAST_LOADED = "least_loaded"


class LoadBalancerParams(BaseModel):
    """Replica pool of k identical sub-capacities."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    replicas: int = Field(2, ge=1, description="Replicas in rotation")
    replica_capacity_rps: Optional[float] = Field(
        None, gt=0.0, description="Per-replica capacity; when absent capacity_rps is split evenly"
    )
    policy: BalancingPolicy = Field(BalancingPolicy.ROUND_ROBIN, description="Balancing policy")


class QueueParams(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    queue_depth: float = Field(0.0, ge=0.0, description="Maximum buffered requests")


class PoolParams(BaseModel):
    """Connection pool bounding a service's or database's usable capacity."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    pool_size: int = Field(..., ge=1, description="Connections in the pool")
    per_connection_rps: float = Field(..., gt=0.0, description="Throughput of one connection")


OptimizationParams = Union[CacheParams, BreakerParams, LoadBalancerParams, QueueParams, PoolParams]

PARAMS_BY_KIND: Dict[ComponentKind, type] = {
    ComponentKind.CACHE: CacheParams,
    ComponentKind.CIRCUIT_BREAKER: BreakerParams,
    ComponentKind.LOAD_BALANCER: LoadBalancerParams,
    ComponentKind.QUEUE: QueueParams,
    ComponentKind.SERVICE: PoolParams,
    ComponentKind.DATABASE: PoolParams,
}

_DEFAULTED_KINDS = {ComponentKind.CIRCUIT_BREAKER, ComponentKind.LOAD_BALANCER, ComponentKind.QUEUE}


class ComponentSpec(BaseModel):
    """A system node: capacity, latency profile, recovery and observability, plus criticality and bypass behaviour."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    id: str = Field(..., min_length=1, description="Unique component name")
    kind: ComponentKind = Field(..., description="Component kind")
    capacity_rps: float = Field(..., description="Capacity in requests/second")
    latency_profile: LatencyProfile = Field(..., description="Latency as a function of utilization")
    mttr_minutes: float = Field(..., description="Mean time to recovery; recovery rate is its inverse")
    observability_coverage: float = Field(..., description="Observability coverage in (0, 1]")
    criticality: float = Field(1.0, description="Business criticality in [1, 5]")
    bypass_probability: float = Field(0.0, description="P(bypass) of this component's optimization")
    optimization_params: Optional[OptimizationParams] = Field(None, description="Kind-specific settings")

    @model_validator(mode="before")
    @classmethod
    def _params_for_kind(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        kind = data.get("kind")
        try:
            kind = ComponentKind(kind)
        except ValueError:
            return data
        params = data.get("optimization_params")
        params_cls = PARAMS_BY_KIND.get(kind)
        if params_cls is None:
            if params is not None:
                raise ValueError(f"{kind.value} components take no optimization_params")
            return data
        if params is None:
            if kind in _DEFAULTED_KINDS:
                return {**data, "optimization_params": params_cls()}
            if kind == ComponentKind.CACHE:
                raise ValueError("cache components require optimization_params")
            return data
        if isinstance(params, dict):
            return {**data, "optimization_params": params_cls.model_validate(params)}
        if not isinstance(params, params_cls):
            raise ValueError(f"{kind.value} components take {params_cls.__name__}")
        return data

    @property
    def recovery(self) -> float:
        """1 / mttr_minutes."""
        return 1.0 / self.mttr_minutes

    def effective_capacity(self) -> float:
        """Capacity after pool or replica limits."""
        params = self.optimization_params
        if isinstance(params, PoolParams):
            return min(self.capacity_rps, params.pool_size * params.per_connection_rps)
        if isinstance(params, LoadBalancerParams) and params.replica_capacity_rps is not None:
            return params.replicas * params.replica_capacity_rps
        return self.capacity_rps


class DependencyEdge(BaseModel):
    """Directed dependency with load share, amplification and edge observability."""
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    from_id: str = Field(..., alias="from", description="Upstream component id")
    to_id: str = Field(..., alias="to", description="Downstream component id")
    load_fraction: float = Field(1.0, description="Share of upstream forwarded traffic sent here")
    declared_amplification: Optional[float] = Field(None, description="Ground-truth alpha for synthetic scenarios")
    edge_observability: float = Field(1.0, description="Observability of the dependency relationship")

    @property
    def key(self) -> Tuple[str, str]:
        return (self.from_id, self.to_id)


class TopologyGraph(BaseModel):
    """Raw, unvalidated graph."""
    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    components: List[ComponentSpec] = Field(..., description="Components V")
    edges: List[DependencyEdge] = Field(default_factory=list, description="Dependencies E with weights W")
    entry_ids: List[str] = Field(..., alias="entries", description="External entry points")


class AmplificationLookup(Protocol):
    def alpha(self, source: str, target: str) -> Optional[float]: ...


@dataclass(frozen=True)
class ValidatedTopology:
    """
    Immutable validated topology with a topological order attached.

    Equality compares the underlying graph and order only.
    """
    graph: TopologyGraph
    order: Tuple[str, ...]
    _components: Dict[str, ComponentSpec] = field(init=False, compare=False, repr=False)
    _out: Dict[str, Tuple[DependencyEdge, ...]] = field(init=False, compare=False, repr=False)
    _in: Dict[str, Tuple[DependencyEdge, ...]] = field(init=False, compare=False, repr=False)
    _depth: Dict[str, int] = field(init=False, compare=False, repr=False)

    def __post_init__(self) -> None:
        components = {c.id: c for c in self.graph.components}
        out: Dict[str, List[DependencyEdge]] = {cid: [] for cid in components}
        inc: Dict[str, List[DependencyEdge]] = {cid: [] for cid in components}
        for e in self.graph.edges:
            out[e.from_id].append(e)
            inc[e.to_id].append(e)
        object.__setattr__(self, "_components", components)
        object.__setattr__(self, "_out", {k: tuple(sorted(v, key=lambda e: e.to_id)) for k, v in out.items()})
        object.__setattr__(self, "_in", {k: tuple(sorted(v, key=lambda e: e.from_id)) for k, v in inc.items()})
        depth: Dict[str, int] = {}
        for cid in self.order:
            preds = self._in[cid]
            depth[cid] = 1 + max((depth[e.from_id] for e in preds), default=0)
        object.__setattr__(self, "_depth", depth)

    @property
    def components(self) -> Mapping[str, ComponentSpec]:
        return self._components

    @property
    def edges(self) -> Tuple[DependencyEdge, ...]:
        return tuple(self.graph.edges)

    @property
    def entry_ids(self) -> Tuple[str, ...]:
        return tuple(self.graph.entry_ids)

    def component(self, component_id: str) -> ComponentSpec:
        try:
            return self._components[component_id]
        except KeyError:
            raise UnknownComponent(component_id) from None

    def out_edges(self, component_id: str) -> Tuple[DependencyEdge, ...]:
        self.component(component_id)
        return self._out[component_id]

    def in_edges(self, component_id: str) -> Tuple[DependencyEdge, ...]:
        self.component(component_id)
        return self._in[component_id]

    def successors(self, component_id: str) -> Tuple[str, ...]:
        return tuple(e.to_id for e in self.out_edges(component_id))

    def predecessors(self, component_id: str) -> Tuple[str, ...]:
        return tuple(e.from_id for e in self.in_edges(component_id))

    def edge(self, source: str, target: str) -> DependencyEdge:
        for e in self.out_edges(source):
            if e.to_id == target:
                return e
        self.component(target)
        raise UnknownComponent(f"{source}->{target}")

    def is_entry(self, component_id: str) -> bool:
        return component_id in self.graph.entry_ids

    def of_kind(self, *kinds: ComponentKind) -> Tuple[str, ...]:
        return tuple(cid for cid in self.order if self._components[cid].kind in kinds)


def _check_range(value: float, lo: float, hi: float, name: str, component_id: str,
                 lo_open: bool = False, hi_open: bool = False) -> None:
    below = value <= lo if lo_open else value < lo
    above = value >= hi if hi_open else value > hi
    if math.isnan(value) or below or above:
        raise InvalidField(name, value, component_id)


def _check_component(c: ComponentSpec) -> None:
    _check_range(c.capacity_rps, 0.0, math.inf, "capacity_rps", c.id, lo_open=True, hi_open=True)
    _check_range(c.mttr_minutes, 0.0, math.inf, "mttr_minutes", c.id, lo_open=True, hi_open=True)
    _check_range(c.observability_coverage, 0.0, 1.0, "observability_coverage", c.id)
    _check_range(c.criticality, 1.0, 5.0, "criticality", c.id)
    _check_range(c.bypass_probability, 0.0, 1.0, "bypass_probability", c.id)

    profile = c.latency_profile
    _check_range(profile.base_latency_ms, 0.0, math.inf, "base_latency_ms", c.id, lo_open=True, hi_open=True)
    if not profile.saturation_cap_ms >= profile.base_latency_ms:
        raise InvalidField("saturation_cap_ms", profile.saturation_cap_ms, c.id)
    if profile.model == LatencyModel.TABLE:
        points = profile.table_points or []
        if len(points) < 2 or points[0][0] != 0.0:
            raise InvalidField("table_points", points, c.id)
        for (u0, l0), (u1, l1) in zip(points, points[1:]):
            if not u0 < u1 or l1 < l0:
                raise InvalidField("table_points", points, c.id)
        if points[-1][0] > 1.0 or points[-1][1] > profile.saturation_cap_ms or points[0][1] <= 0.0:
            raise InvalidField("table_points", points, c.id)


def validate_topology(raw: Union[TopologyGraph, ValidatedTopology]) -> ValidatedTopology:
    """
    Validate a topology and attach a deterministic topological order.

    Raises:
        CycleDetected, UnreachableComponent, DanglingEdge, InvalidField, UnknownComponent
    """
    graph = raw.graph if isinstance(raw, ValidatedTopology) else raw

    ids = set()
    for c in graph.components:
        if c.id in ids:
            raise InvalidField("id", c.id, c.id)
        ids.add(c.id)
        _check_component(c)

    if not graph.entry_ids:
        raise InvalidField("entries", [])
    for entry in graph.entry_ids:
        if entry not in ids:
            raise UnknownComponent(entry)

    seen_edges = set()
    outgoing: Dict[str, float] = {}
    for e in graph.edges:
        for endpoint in (e.from_id, e.to_id):
            if endpoint not in ids:
                raise DanglingEdge(e.from_id, e.to_id, endpoint)
        if e.from_id == e.to_id:
            raise CycleDetected([e.from_id])
        if e.key in seen_edges:
            raise InvalidField("edges", f"{e.from_id}->{e.to_id}", e.from_id)
        seen_edges.add(e.key)
        _check_range(e.load_fraction, 0.0, 1.0, "load_fraction", e.from_id)
        _check_range(e.edge_observability, 0.0, 1.0, "edge_observability", e.from_id)
        if e.declared_amplification is not None:
            _check_range(e.declared_amplification, 0.0, math.inf, "declared_amplification",
                         e.to_id, lo_open=True, hi_open=True)
        outgoing[e.from_id] = outgoing.get(e.from_id, 0.0) + e.load_fraction
    for cid, total in outgoing.items():
        if total > 1.0 + 1e-9:
            raise InvalidField("load_fraction", total, cid)

    g = nx.DiGraph()
    g.add_nodes_from(c.id for c in graph.components)
    g.add_edges_from(e.key for e in graph.edges)

    if not nx.is_directed_acyclic_graph(g):
        cycle = nx.find_cycle(g)
        raise CycleDetected([u for u, _ in cycle])

    entries = set(graph.entry_ids)
    kinds = {c.id: c.kind for c in graph.components}
    for entry in graph.entry_ids:
        if g.in_degree(entry) > 0 or kinds[entry] != ComponentKind.ENTRY:
            raise InvalidField("entries", entry, entry)
    for c in graph.components:
        if c.kind == ComponentKind.ENTRY and c.id not in entries:
            raise InvalidField("entries", c.id, c.id)

    reachable = set(entries)
    for entry in graph.entry_ids:
        reachable |= nx.descendants(g, entry)
    for c in graph.components:
        if c.id not in reachable:
            raise UnreachableComponent(c.id)

    order = tuple(nx.lexicographical_topological_sort(g))
    logger.debug("validated topology with %d components, order %s", len(order), order)
    return ValidatedTopology(graph=graph, order=order)


def dependency_depth(topo: ValidatedTopology, component_id: str) -> int:
    """Nodes on the longest entry->component path, inclusive; entries are 1."""
    topo.component(component_id)
    return topo._depth[component_id]


def max_upstream_amplification(topo: ValidatedTopology, metrics: AmplificationLookup, component_id: str) -> float:
    """Maximum alpha over incoming edges; 1.0 when there are no predecessors."""
    incoming = topo.in_edges(component_id)
    if not incoming:
        return 1.0
    best = 0.0
    for e in incoming:
        alpha = metrics.alpha(e.from_id, e.to_id)
        if alpha is None:
            raise MissingAmplification(e.from_id, e.to_id)
        best = max(best, alpha)
    return best


def apply_overrides(
    topo: ValidatedTopology,
    overrides: Mapping[Tuple[str, str], float]
) -> ValidatedTopology:
    """
    New topology with optimization parameters replaced.

    Args:
        overrides: (component_id, parameter name) -> value
    """
    if not overrides:
        return topo
    by_component: Dict[str, Dict[str, float]] = {}
    for (cid, param), value in overrides.items():
        by_component.setdefault(cid, {})[param] = value

    components = []
    for c in topo.graph.components:
        updates = by_component.pop(c.id, None)
        if updates:
            params = c.optimization_params
            if params is None or any(name not in type(params).model_fields for name in updates):
                bad = next(iter(updates))
                raise InvalidField(bad, updates[bad], c.id)
            params = type(params).model_validate({**params.model_dump(), **updates})
            c = c.model_copy(update={"optimization_params": params})
        components.append(c)
    if by_component:
        raise UnknownComponent(next(iter(by_component)))
    return validate_topology(topo.graph.model_copy(update={"components": components}))


def iter_components(topo: ValidatedTopology) -> Iterable[ComponentSpec]:
    """Components in topological order."""
    return (topo.component(cid) for cid in topo.order)
