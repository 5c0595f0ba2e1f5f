#!/usr/bin/env python3
"""
Scenario documents: strict JSON parsing, schema validation and provenance hash.
"""

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, ValidationError, model_validator

from src.core.apex import OptimizerConfig
from src.core.hydra import CampaignConfig
from src.core.raven import MonitorPolicy
from src.core.riskcore import FailureModeSpec, MonitorRule
from src.core.simengine import TrafficProfile
from src.core.topology import ComponentSpec, DependencyEdge, TopologyGraph, ValidatedTopology, validate_topology
from src.errors import ParseError, ScenarioError, SchemaError
from src.log_config import get_logger

logger = get_logger(__name__)


class DetectionConfig(BaseModel):
    """Monitor rules and failure modes for ROS estimation."""
    model_config = ConfigDict(extra="forbid")

    rules: List[MonitorRule] = Field(default_factory=list, description="Threshold alerts")
    failure_modes: List[FailureModeSpec] = Field(default_factory=list, description="Failures to inject")
    trials: int = Field(100, ge=1, description="Seeded trials per failure mode")


class Scenario(BaseModel):
    """
    A complete scenario: topology, traffic and optional per-command sections.

    `components`, `edges` and `entries` sit at the top level of the document;
    `topology` assembles them into the raw graph and `validated` is the
    checked one.
    """
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    name: str = Field("", description="Human-readable scenario name")
    seed: int = Field(0, description="Master seed")
    components: List[ComponentSpec] = Field(..., description="Components V")
    edges: List[DependencyEdge] = Field(default_factory=list, description="Dependencies E with weights W")
    entry_ids: List[str] = Field(..., alias="entries", description="External entry points")
    traffic: TrafficProfile = Field(..., description="Offered load at the entries")
    campaign: Optional[CampaignConfig] = Field(None, description="HYDRA campaign settings")
    optimizer: Optional[OptimizerConfig] = Field(None, description="APEX settings and decision variables")
    monitor: Optional[MonitorPolicy] = Field(None, description="RAVEN loop policy")
    detection: Optional[DetectionConfig] = Field(None, description="Monitor rules for ROS estimation")

    _validated: Optional[ValidatedTopology] = PrivateAttr(default=None)

    @model_validator(mode="after")
    def _check_references(self) -> "Scenario":
        ids = {c.id for c in self.components}
        refs = []
        if self.campaign and self.campaign.targets:
            refs += [(f"campaign.targets.{i}", cid) for i, cid in enumerate(self.campaign.targets)]
        if self.optimizer:
            refs += [(f"optimizer.bounds.{i}.component", v.component) for i, v in enumerate(self.optimizer.bounds)]
        if self.detection:
            refs += [(f"detection.rules.{i}.component", r.component) for i, r in enumerate(self.detection.rules)]
            refs += [(f"detection.failure_modes.{i}.component", m.component)
                     for i, m in enumerate(self.detection.failure_modes)]
            refs += [(f"detection.failure_modes.{i}.action.target", m.action.target)
                     for i, m in enumerate(self.detection.failure_modes)]
        for path, cid in refs:
            if cid not in ids:
                raise SchemaError(path, f"unknown component '{cid}'")
        return self

    @property
    def topology(self) -> TopologyGraph:
        return TopologyGraph(components=self.components, edges=self.edges, entries=self.entry_ids)

    @property
    def validated(self) -> ValidatedTopology:
        if self._validated is None:
            self._validated = validate_topology(self.topology)
        return self._validated

    def document(self) -> Dict[str, Any]:
        """JSON-ready dict that parses back to an equal Scenario."""
        return self.model_dump(mode="json", by_alias=True, exclude_none=True)

    def content_hash(self) -> str:
        """SHA-256 of the canonical (sorted, compact) document."""
        canonical = json.dumps(self.document(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def _reject_duplicates(pairs):
    result = {}
    for key, value in pairs:
        if key in result:
            raise SchemaError(key, "duplicate key")
        result[key] = value
    return result


def _reject_constant(name: str):
    raise SchemaError("<document>", f"non-finite number {name} is not allowed")


def _schema_path(err: ValidationError) -> SchemaError:
    first = err.errors()[0]
    path = ".".join(str(part) for part in first["loc"]) or "<document>"
    return SchemaError(path, first["msg"])


def parse_scenario(text: str) -> Scenario:
    """
    Parse and validate scenario JSON text.

    Raises:
        ParseError: malformed JSON, with line and column
        SchemaError: schema violation, with the field path
        TopologyError: the graph fails topology validation
    """
    try:
        raw = json.loads(text, object_pairs_hook=_reject_duplicates, parse_constant=_reject_constant)
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, e.lineno, e.colno) from None
    if not isinstance(raw, dict):
        raise SchemaError("<document>", "top level must be an object")
    try:
        scenario = Scenario.model_validate(raw)
    except ValidationError as e:
        raise _schema_path(e) from None
    scenario.validated  # topology errors surface here
    return scenario


def load_scenario(path: Union[str, Path]) -> Scenario:
    """Read and validate a scenario file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ScenarioError(f"cannot read scenario {path}: {e.strerror or e}") from None
    scenario = parse_scenario(text)
    logger.info("loaded scenario %s: %d component(s), %d edge(s)", path.name,
                len(scenario.components), len(scenario.edges))
    return scenario


def dump_scenario(scenario: Scenario) -> str:
    return json.dumps(scenario.document(), indent=2, sort_keys=True) + "\n"
