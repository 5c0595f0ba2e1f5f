#!/usr/bin/env python3
"""
Risk-aware multi-objective configuration optimizer.

NSGA-II (pymoo) searches configuration vectors for throughput, latency and
resource efficiency under an LRI cap and a resilience reserve. Every
candidate is scored by simulating the configured topology.
"""

import math
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pymoo.algorithms.moo.nsga2 import NSGA2
from pymoo.core.problem import Problem
from pymoo.core.repair import Repair
from pymoo.operators.crossover.sbx import SBX
from pymoo.operators.mutation.pm import PM
from pymoo.operators.sampling.rnd import FloatRandomSampling
from pymoo.optimize import minimize

from src.config import settings
from src.core.concurrency import gather_in_executor, run_blocking
from src.core.riskcore import AmplificationMap, assess_system_risk, resolve_amplification, system_lri
from src.core.seeding import derive_seed
from src.core.simengine import TrafficProfile, run_simulation
from src.core.topology import BreakerParams, ComponentKind, ValidatedTopology, apply_overrides
from src.errors import ArityMismatch, InvalidField, InvalidShares, NoFeasibleSolution
from src.log_config import get_logger
from src.models import ReportMetadata

logger = get_logger(__name__)


class DecisionVariable(BaseModel):
    """One optimization parameter of one component with box bounds."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    component: str = Field(..., description="Component id")
    param: str = Field(..., description="Optimization parameter name, e.g. cache_size")
    lo: float = Field(..., description="Lower bound")
    hi: float = Field(..., description="Upper bound")
    is_integer: bool = Field(False, description="Round to integers")

    @model_validator(mode="after")
    def _check_bounds(self) -> "DecisionVariable":
        if not self.lo < self.hi:
            raise ValueError(f"{self.name}: bounds must satisfy lo < hi, got [{self.lo}, {self.hi}]")
        if self.is_integer and (self.lo != int(self.lo) or self.hi != int(self.hi)):
            raise ValueError(f"{self.name}: integer variables need integer bounds")
        return self

    @property
    def name(self) -> str:
        return f"{self.component}.{self.param}"


class ConfigurationVector(BaseModel):
    """Decision variable values x, aligned with their variables."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    variables: List[DecisionVariable] = Field(..., description="Decision variables")
    values: List[float] = Field(..., description="One value per variable")

    @model_validator(mode="after")
    def _check_values(self) -> "ConfigurationVector":
        if len(self.variables) != len(self.values):
            raise ValueError("one value per variable is required")
        for var, value in zip(self.variables, self.values):
            if not var.lo - 1e-9 <= value <= var.hi + 1e-9:
                raise ValueError(f"{var.name}={value} outside [{var.lo}, {var.hi}]")
            if var.is_integer and value != round(value):
                raise ValueError(f"{var.name} must be an integer, got {value}")
        return self

    @classmethod
    def from_array(cls, variables: Sequence[DecisionVariable], values: Sequence[float]) -> "ConfigurationVector":
        clean = []
        for var, value in zip(variables, values):
            value = min(var.hi, max(var.lo, float(value)))
            clean.append(float(round(value)) if var.is_integer else value)
        return cls(variables=list(variables), values=clean)

    def as_dict(self) -> Dict[str, float]:
        return {var.name: value for var, value in zip(self.variables, self.values)}

    def as_overrides(self) -> Dict[Tuple[str, str], float]:
        return {
            (var.component, var.param): int(value) if var.is_integer else value
            for var, value in zip(self.variables, self.values)
        }

    def normalized(self) -> List[float]:
        """Position of each value inside its bounds, in [0, 1]."""
        return [(value - var.lo) / (var.hi - var.lo) for var, value in zip(self.variables, self.values)]


class ObjectiveVector(BaseModel):
    """Maximized objectives plus the attached constraint state and reporting scores."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    throughput_rps: float = Field(..., description="Served requests/second, maximized")
    neg_latency_ms: float = Field(..., description="Negated load-weighted latency, maximized")
    resource_efficiency: float = Field(..., ge=0.0, le=1.0, description="1 - mean normalized resource use, maximized")
    lri: float = Field(0.0, ge=0.0, description="System LRI of the configuration")
    peak_utilization: float = Field(0.0, ge=0.0, description="Highest tick utilization of any component")
    feasible: bool = Field(True, description="LRI <= tau_risk and reserve constraint hold")
    performance: float = Field(0.0, description="Throughput over offered load")
    stability: float = Field(0.0, description="1 - coefficient of variation of throughput")
    fitness: float = Field(0.0, description="Scalar fitness for reporting")

    @property
    def objectives(self) -> Tuple[float, float, float]:
        return (self.throughput_rps, self.neg_latency_ms, self.resource_efficiency)


class ApexConfig(BaseModel):
    """NSGA-II and fitness settings."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    population: int = Field(100, ge=100, le=500, description="Population size, even")
    generations: int = Field(40, ge=1, description="Generations to run")
    crossover_rate: float = Field(0.9, ge=0.0, le=1.0, description="SBX crossover probability")
    mutation_rate: float = Field(0.2, ge=0.0, le=1.0, description="Polynomial mutation probability")
    tau_risk: float = Field(settings.LRI_HIGH, gt=0.0, description="Maximum allowed system LRI")
    alpha: float = Field(1.0, ge=0.0, description="Performance weight")
    beta: float = Field(1.0, ge=0.0, description="Inverse-risk weight")
    gamma: float = Field(1.0, ge=0.0, description="Stability weight")
    epsilon: float = Field(0.01, gt=0.0, description="Keeps beta/(LRI + epsilon) finite")
    resilience_reserve_fraction: float = Field(0.15, ge=0.0, lt=1.0, description="Spare capacity kept on every component")
    seed: int = Field(0, description="Optimizer seed")
    eval_duration_s: int = Field(settings.APEX_EVAL_DURATION_S, ge=1, description="Ticks simulated per candidate")
    start_tick: int = Field(0, ge=0, description="Clock of the first evaluation tick")
    measure_amplification: bool = Field(True, description="Measure alpha on every bypassable edge per candidate; otherwise only undeclared edges")
    max_workers: int = Field(settings.APEX_MAX_WORKERS, ge=1, description="Parallel candidate evaluations")

    @field_validator("population")
    @classmethod
    def _even(cls, value: int) -> int:
        if value % 2:
            raise ValueError("population must be even")
        return value


class OptimizerConfig(ApexConfig):
    """Optimizer section of a scenario: ApexConfig plus variable bounds."""

    bounds: List[DecisionVariable] = Field(..., min_length=1, description="Decision variables")


class RiskAwareTuning(BaseModel):
    """Breaker thresholds and balancing weights derived from downstream LRI."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    breaker_thresholds: Dict[str, float] = Field(default_factory=dict, description="Trip threshold per breaker")
    lb_weights: Dict[str, Dict[str, float]] = Field(default_factory=dict, description="Successor weights per load balancer")


class FrontMember(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    configuration: ConfigurationVector
    objectives: ObjectiveVector


class ParetoFront(BaseModel):
    model_config = ConfigDict(extra="forbid")

    members: List[FrontMember] = Field(default_factory=list)
    generations: int = Field(..., description="Generations run")
    seed: int = Field(..., description="Optimizer seed")
    evaluated: int = Field(0, description="Candidates evaluated")
    tuning: Optional[RiskAwareTuning] = Field(None, description="Risk-aware tuning of the fittest member")
    metadata: Optional[ReportMetadata] = None

    def best_by_fitness(self) -> FrontMember:
        return max(self.members, key=lambda m: (m.objectives.fitness, m.objectives.objectives))


# Scalar scores

def fitness(performance: float, lri: float, stability: float, cfg: ApexConfig) -> float:
    """alpha * performance + beta / (lri + epsilon) + gamma * stability."""
    if lri < 0.0:
        raise ValueError("lri must be >= 0")
    return cfg.alpha * performance + cfg.beta / (lri + cfg.epsilon) + cfg.gamma * stability


def risk_penalty(lri: float) -> float:
    """lri / 10 clamped to [0, 5]."""
    return min(settings.RISK_PENALTY_MAX, max(0.0, lri / settings.RISK_PENALTY_SCALE))


def dominates(a: Union[ObjectiveVector, Sequence[float]], b: Union[ObjectiveVector, Sequence[float]]) -> bool:
    """
    Constraint-domination over maximized objectives.

    A feasible vector dominates any infeasible one and an infeasible vector
    never dominates a feasible one; otherwise a must be >= b everywhere and
    > b somewhere.
    """
    a_feasible = a.feasible if isinstance(a, ObjectiveVector) else True
    b_feasible = b.feasible if isinstance(b, ObjectiveVector) else True
    left = a.objectives if isinstance(a, ObjectiveVector) else tuple(a)
    right = b.objectives if isinstance(b, ObjectiveVector) else tuple(b)
    if len(left) != len(right):
        raise ArityMismatch(len(left), len(right))
    if a_feasible != b_feasible:
        return a_feasible
    return all(x >= y for x, y in zip(left, right)) and any(x > y for x, y in zip(left, right))


# Configuration handling

def default_configuration(topo: ValidatedTopology, bounds: Sequence[DecisionVariable]) -> ConfigurationVector:
    """Current topology values of the variables, clamped into bounds."""
    values = []
    for var in bounds:
        params = topo.component(var.component).optimization_params
        if params is None or var.param not in type(params).model_fields:
            raise InvalidField(var.param, None, var.component)
        values.append(getattr(params, var.param))
    return ConfigurationVector.from_array(bounds, values)


def apply_configuration(topo: ValidatedTopology, x: ConfigurationVector) -> ValidatedTopology:
    return apply_overrides(topo, x.as_overrides())


def evaluate(
    topo: ValidatedTopology,
    traffic: TrafficProfile,
    x: ConfigurationVector,
    seed: int,
    cfg: Optional[ApexConfig] = None,
) -> ObjectiveVector:
    """
    Simulate one configuration and score it.

    Throughput is entry load minus all errors, latency is the load-weighted
    sum of component latencies per entry request, efficiency is one minus the
    mean normalized variable value. The system LRI uses measured amplification
    on bypassable edges and declared values elsewhere.
    """
    cfg = cfg or ApexConfig()
    configured = apply_configuration(topo, x)
    trace = run_simulation(configured, traffic, cfg.eval_duration_s, seed, start_tick=cfg.start_tick)

    entries = configured.entry_ids
    throughput, latency, offered_series = [], [], []
    peak = 0.0
    for state in trace.states:
        offered = sum(state.sample(e).offered_rps for e in entries)
        errors = sum(s.error_rps for s in state.components.values())
        weighted = sum(s.latency_ms * s.offered_rps for s in state.components.values())
        throughput.append(offered - errors)
        latency.append(weighted / offered if offered > 0.0 else 0.0)
        offered_series.append(offered)
        peak = max(peak, max(s.utilization for s in state.components.values()))

    mean_throughput = float(np.mean(throughput))
    mean_offered = float(np.mean(offered_series))
    spread = float(np.std(throughput))
    stability = 1.0 - spread / mean_throughput if mean_throughput > 0.0 else 0.0
    stability = min(1.0, max(0.0, stability))
    performance = mean_throughput / mean_offered if mean_offered > 0.0 else 0.0
    efficiency = 1.0 - float(np.mean(x.normalized())) if x.variables else 1.0

    amap = resolve_amplification(configured, traffic, cfg.eval_duration_s, seed,
                                 measure_all=cfg.measure_amplification, baseline=trace, start_tick=cfg.start_tick)
    lri = system_lri(configured, amap)
    feasible = lri <= cfg.tau_risk and peak <= 1.0 - cfg.resilience_reserve_fraction

    return ObjectiveVector(
        throughput_rps=mean_throughput,
        neg_latency_ms=-float(np.mean(latency)),
        resource_efficiency=min(1.0, max(0.0, efficiency)),
        lri=lri,
        peak_utilization=peak,
        feasible=feasible,
        performance=performance,
        stability=stability,
        fitness=fitness(performance, lri, stability, cfg),
    )


async def evaluate_population(
    topo: ValidatedTopology,
    traffic: TrafficProfile,
    candidates: Sequence[ConfigurationVector],
    seeds: Sequence[int],
    cfg: ApexConfig,
) -> List[ObjectiveVector]:
    """Evaluate candidates on a thread pool; results follow input order."""
    def run(item: Tuple[ConfigurationVector, int]) -> ObjectiveVector:
        return evaluate(topo, traffic, item[0], item[1], cfg)

    return await gather_in_executor(run, list(zip(candidates, seeds)), cfg.max_workers)


# NSGA-II

class _IntegerRepair(Repair):
    def __init__(self, mask: np.ndarray):
        super().__init__()
        self.mask = mask

    def _do(self, problem, X, **kwargs):
        X[:, self.mask] = np.round(X[:, self.mask])
        return X


class _Archive:
    """Every evaluated candidate, keyed by its values, in evaluation order."""

    def __init__(self, topo: ValidatedTopology, traffic: TrafficProfile,
                 bounds: Sequence[DecisionVariable], cfg: ApexConfig):
        self.topo = topo
        self.traffic = traffic
        self.bounds = list(bounds)
        self.cfg = cfg
        self.members: Dict[Tuple[float, ...], FrontMember] = {}
        self.evaluated = 0

    def evaluate_batch(self, X: np.ndarray) -> List[ObjectiveVector]:
        candidates = [ConfigurationVector.from_array(self.bounds, row) for row in X]
        results: List[Optional[ObjectiveVector]] = [None] * len(candidates)
        todo, seeds = [], []
        for i, x in enumerate(candidates):
            known = self.members.get(tuple(x.values))
            if known is not None:
                results[i] = known.objectives
            else:
                todo.append(i)
                seeds.append(derive_seed(self.cfg.seed, "apex", self.evaluated + len(seeds)))
        fresh = run_blocking(evaluate_population(
            self.topo, self.traffic, [candidates[i] for i in todo], seeds, self.cfg))
        for i, objectives in zip(todo, fresh):
            results[i] = objectives
            self.members.setdefault(tuple(candidates[i].values),
                                    FrontMember(configuration=candidates[i], objectives=objectives))
        self.evaluated += len(todo)
        return results

    def front(self) -> List[FrontMember]:
        feasible = [m for m in self.members.values() if m.objectives.feasible]
        if not feasible:
            return []
        F = np.array([m.objectives.objectives for m in feasible], dtype=float)
        front = []
        for i, member in enumerate(feasible):
            dominated = np.any(np.all(F >= F[i], axis=1) & np.any(F > F[i], axis=1))
            if not dominated:
                front.append(member)
        return sorted(front, key=lambda m: (tuple(-v for v in m.objectives.objectives), m.configuration.values))


class _ConfigurationProblem(Problem):
    def __init__(self, archive: _Archive):
        self.archive = archive
        bounds = archive.bounds
        super().__init__(
            n_var=len(bounds),
            n_obj=3,
            n_ieq_constr=2,
            xl=np.array([v.lo for v in bounds], dtype=float),
            xu=np.array([v.hi for v in bounds], dtype=float),
        )

    def _evaluate(self, x, out, *args, **kwargs):
        cfg = self.archive.cfg
        results = self.archive.evaluate_batch(np.atleast_2d(x))
        out["F"] = np.array([[-r.throughput_rps, -r.neg_latency_ms, -r.resource_efficiency] for r in results])
        out["G"] = np.array([
            [r.lri - cfg.tau_risk, r.peak_utilization - (1.0 - cfg.resilience_reserve_fraction)]
            for r in results
        ])


def optimize(
    topo: ValidatedTopology,
    traffic: TrafficProfile,
    bounds: Sequence[DecisionVariable],
    cfg: ApexConfig,
) -> ParetoFront:
    """
    NSGA-II over the bounded configuration space.

    Returns the feasible non-dominated set of every configuration evaluated
    across all generations.

    Raises:
        NoFeasibleSolution: no evaluated configuration satisfied the constraints
    """
    if not bounds:
        raise ValueError("at least one decision variable is required")
    archive = _Archive(topo, traffic, bounds, cfg)
    mask = np.array([v.is_integer for v in bounds], dtype=bool)
    algorithm = NSGA2(
        pop_size=cfg.population,
        sampling=FloatRandomSampling(),
        crossover=SBX(prob=cfg.crossover_rate, eta=15),
        mutation=PM(prob=cfg.mutation_rate, eta=20),
        repair=_IntegerRepair(mask),
        eliminate_duplicates=True,
    )
    logger.info("optimizing %d variable(s): population %d, %d generation(s)",
                len(bounds), cfg.population, cfg.generations)
    minimize(_ConfigurationProblem(archive), algorithm, ("n_gen", cfg.generations), seed=cfg.seed, verbose=False)

    members = archive.front()
    if not members:
        min_lri = min((m.objectives.lri for m in archive.members.values()), default=math.inf)
        logger.warning("no feasible configuration among %d evaluated", archive.evaluated)
        raise NoFeasibleSolution(archive.evaluated, min_lri)
    logger.info("front has %d member(s) from %d evaluation(s)", len(members), archive.evaluated)
    front = ParetoFront(members=members, generations=cfg.generations, seed=cfg.seed, evaluated=archive.evaluated)

    configured = apply_configuration(topo, front.best_by_fitness().configuration)
    amap = resolve_amplification(configured, traffic, cfg.eval_duration_s, derive_seed(cfg.seed, "apex", "tuning"),
                                 measure_all=cfg.measure_amplification, start_tick=cfg.start_tick)
    front.tuning = risk_aware_tuning(configured, amap)
    return front


# Allocation and tuning

class CacheLayer(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    name: str = Field(..., description="Layer name")
    baseline_share: float = Field(..., ge=0.0, le=1.0, description="Share of memory before risk weighting")
    benefit_estimate: float = Field(..., ge=0.0, description="Expected benefit of the layer")
    risk_cost: float = Field(0.0, ge=0.0, description="Risk contributed per unit of penalty")


def allocate_cache(total_memory: float, layers: Sequence[CacheLayer], current_lri: float) -> Dict[str, float]:
    """
    Split memory by baseline share times risk-discounted utility.

    utility = benefit / (1 + risk_cost * risk_penalty(lri)); allocations are
    normalized to total_memory. Layers with zero mass overall fall back to
    their baseline shares.

    Raises:
        InvalidShares: baseline shares do not sum to 1
    """
    if total_memory <= 0.0:
        raise ValueError("total_memory must be > 0")
    total_share = math.fsum(layer.baseline_share for layer in layers)
    if abs(total_share - 1.0) > 1e-9:
        raise InvalidShares(total_share)
    penalty = risk_penalty(current_lri)
    raw = {
        layer.name: layer.baseline_share * layer.benefit_estimate / (1.0 + layer.risk_cost * penalty)
        for layer in layers
    }
    mass = math.fsum(raw.values())
    if mass <= 0.0:
        raw = {layer.name: layer.baseline_share for layer in layers}
        mass = math.fsum(raw.values())
    return {name: total_memory * value / mass for name, value in raw.items()}


def tune_breaker_threshold(base_threshold: float, lri: float) -> float:
    """Tighter trip threshold for riskier dependencies."""
    return base_threshold / (1.0 + risk_penalty(lri))


def risk_aware_weights(server_lri: Mapping[str, float]) -> Dict[str, float]:
    """Load balancing weights proportional to 1 / (1 + risk_penalty(lri)), summing to 1."""
    if not server_lri:
        return {}
    raw = {name: 1.0 / (1.0 + risk_penalty(lri)) for name, lri in server_lri.items()}
    total = math.fsum(raw.values())
    return {name: value / total for name, value in sorted(raw.items())}


def risk_aware_tuning(topo: ValidatedTopology, amap: AmplificationMap) -> RiskAwareTuning:
    """
    Tighten each breaker by the riskiest dependency it guards and weight
    each load balancer's successors away from risk.
    """
    lri = {c.component: c.lri for c in assess_system_risk(topo, amap).components}
    thresholds = {}
    for cid in topo.of_kind(ComponentKind.CIRCUIT_BREAKER):
        params = topo.component(cid).optimization_params or BreakerParams()
        guarded = max((lri[s] for s in topo.successors(cid)), default=0.0)
        thresholds[cid] = tune_breaker_threshold(params.trip_threshold, guarded)
    weights = {
        cid: risk_aware_weights({s: lri[s] for s in topo.successors(cid)})
        for cid in topo.of_kind(ComponentKind.LOAD_BALANCER)
    }
    return RiskAwareTuning(breaker_thresholds=thresholds, lb_weights=weights)
