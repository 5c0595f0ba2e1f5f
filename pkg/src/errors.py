#!/usr/bin/env python3
"""
Exception hierarchy.

Scenario errors map to exit code 2, runtime errors to 3 and usage errors to 1.
"""

from typing import Any, List, Optional, Sequence, Tuple


class LatentRiskError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 3


class UsageError(LatentRiskError):
    """Bad command-line usage."""

    exit_code = 1


# Scenario and topology errors

class ScenarioError(LatentRiskError):
    """A scenario file could not be parsed or validated."""

    exit_code = 2


class ParseError(ScenarioError):
    """Malformed scenario document."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class SchemaError(ScenarioError):
    """Scenario document does not match the strict schema."""

    def __init__(self, path: str, message: str = "invalid value"):
        super().__init__(f"{path}: {message}")
        self.path = path


class TopologyError(ScenarioError):
    """Base for topology validation failures."""


class CycleDetected(TopologyError):
    def __init__(self, cycle: Sequence[str]):
        self.cycle: List[str] = list(cycle)
        super().__init__(f"dependency cycle detected: {' -> '.join(self.cycle)}")


class UnreachableComponent(TopologyError):
    def __init__(self, component_id: str):
        self.component_id = component_id
        super().__init__(f"component '{component_id}' is not reachable from any entry")


class DanglingEdge(TopologyError):
    def __init__(self, source: str, target: str, missing: str):
        self.edge: Tuple[str, str] = (source, target)
        self.missing = missing
        super().__init__(f"edge {source}->{target} references unknown component '{missing}'")


class InvalidField(TopologyError):
    def __init__(self, field: str, value: Any = None, component_id: Optional[str] = None):
        self.field = field
        self.value = value
        self.component_id = component_id
        where = f" on '{component_id}'" if component_id else ""
        super().__init__(f"invalid field '{field}'{where}: {value!r}")


class UnknownComponent(TopologyError):
    def __init__(self, component_id: str):
        self.component_id = component_id
        super().__init__(f"unknown component '{component_id}'")


# Simulation errors

class SimulationError(LatentRiskError):
    """Simulation could not be run as requested."""


class ScheduleOutOfRange(SimulationError):
    def __init__(self, tick: int, duration_s: int):
        self.tick = tick
        super().__init__(f"scheduled tick {tick} is outside a {duration_s}-tick run")


class IncompatibleTarget(SimulationError):
    def __init__(self, strategy: str, component_id: str, kind: str):
        self.strategy = strategy
        self.component_id = component_id
        super().__init__(f"strategy '{strategy}' cannot target {kind} '{component_id}'")


# Risk errors

class RiskError(LatentRiskError):
    """Risk computation failed."""

    def __init__(self, message: str, component_id: Optional[str] = None):
        self.component_id = component_id
        prefix = f"[{component_id}] " if component_id else ""
        super().__init__(prefix + message)


class MissingAmplification(RiskError):
    def __init__(self, source: str, target: str):
        self.edge = (source, target)
        super().__init__(f"no measured or declared amplification for edge {source}->{target}", target)


class ZeroObservability(RiskError):
    def __init__(self, component_id: str):
        super().__init__("observability_coverage is 0, LRI is unbounded", component_id)


class NotBypassable(RiskError):
    def __init__(self, component_id: str, kind: str):
        super().__init__(f"{kind} has no optimization to bypass", component_id)


class ZeroBaseline(RiskError):
    def __init__(self, source: str, target: str, baseline: float):
        self.edge = (source, target)
        super().__init__(f"baseline load {baseline!r} rps on edge {source}->{target} is zero, amplification undefined", target)


class EmptyCatalog(RiskError):
    def __init__(self, component_id: str):
        super().__init__("failure mode catalog is empty", component_id)


# Campaign errors

class CampaignError(LatentRiskError):
    """Perturbation campaign failure."""


class NoEligibleTargets(CampaignError):
    def __init__(self):
        super().__init__("no (strategy, target) pair is eligible for planning")


class SafetyRollback(CampaignError):
    """A safety verdict failed mid-step; carries the partial risk trace."""

    def __init__(self, trace: Any, verdict: Any):
        self.trace = trace
        self.verdict = verdict
        signals = ", ".join(v.signal.value for v in verdict.violations)
        super().__init__(f"safety rollback on tick {verdict.tick}: {signals}")


# Optimization errors

class OptimizationError(LatentRiskError):
    """Optimizer failure."""


class ArityMismatch(OptimizationError):
    def __init__(self, left: int, right: int):
        super().__init__(f"objective arity mismatch: {left} vs {right}")


class NoFeasibleSolution(OptimizationError):
    def __init__(self, evaluated: int, min_lri: float):
        self.evaluated = evaluated
        self.min_lri = min_lri
        super().__init__(f"no feasible configuration among {evaluated} evaluated (lowest LRI {min_lri:.4g})")


class InvalidShares(OptimizationError):
    def __init__(self, total: float):
        super().__init__(f"baseline shares sum to {total!r}, expected 1")


# Monitoring errors

class MonitorError(LatentRiskError):
    """Streaming monitor failure."""


class NonContiguousBatch(MonitorError):
    def __init__(self, expected: int, got: int):
        super().__init__(f"telemetry batch starts at tick {got}, expected {expected}")


class InsufficientHistory(MonitorError):
    def __init__(self, points: int):
        super().__init__(f"forecasting needs at least 2 history points, got {points}")


class NoSnapshotAvailable(MonitorError):
    def __init__(self):
        super().__init__("rollback requested but no Low-classified configuration snapshot exists")
