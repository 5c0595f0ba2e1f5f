#!/usr/bin/env python3
"""
Report serialization.

JSON, CSV and JSON-lines renderers plus an all-or-nothing writer: output
goes to a temporary file next to the target and is renamed into place only
after it was written completely.
"""

import csv
import io
import json
import os
import sys
import tempfile
from contextlib import contextmanager
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Optional, Sequence, TextIO, Union

from pydantic import BaseModel

from src.core.apex import ParetoFront
from src.core.hydra import CampaignReport
from src.core.raven import OptimizationLog
from src.core.riskcore import RiskReport
from src.core.simengine import TELEMETRY_COLUMNS, TelemetryTrace
from src.log_config import get_logger

logger = get_logger(__name__)

Row = Dict[str, Any]


class OutputFormat(str, Enum):
    JSON = "json"
    CSV = "csv"
    JSONL = "jsonl"


@contextmanager
def atomic_writer(path: Union[str, Path]) -> Iterator[TextIO]:
    """
    Open a temporary sibling of path for writing; rename over path on success.

    On any exception the temporary file is removed and path is untouched.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as handle:
            yield handle
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def emit(text: str, out: Optional[Union[str, Path]] = None) -> None:
    """Write text to out atomically, or to stdout when out is None."""
    if out is None:
        sys.stdout.write(text)
        sys.stdout.flush()
        return
    with atomic_writer(out) as handle:
        handle.write(text)
    logger.info("wrote %s", out)


# Renderers

def to_json(model: BaseModel) -> str:
    return model.model_dump_json(indent=2) + "\n"


def to_jsonl(lines: Iterable[str]) -> str:
    return "".join(line + "\n" for line in lines)


def to_csv(rows: Iterable[Row], columns: Sequence[str]) -> str:
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=list(columns), lineterminator="\n", extrasaction="raise")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: "" if v is None else v for k, v in row.items()})
    return buffer.getvalue()


# Row builders

def telemetry_rows(trace: TelemetryTrace) -> List[Row]:
    return list(trace.records())


def telemetry_jsonl(trace: TelemetryTrace) -> str:
    return to_jsonl(json.dumps(row, separators=(",", ":")) for row in trace.records())


RISK_COLUMNS = (
    "rank", "component", "lri", "level", "band", "alpha_max", "depth",
    "criticality", "observability", "recovery", "latent_accumulation", "ros",
)


def risk_rows(report: RiskReport) -> List[Row]:
    return [
        {
            "rank": c.rank,
            "component": c.component,
            "lri": c.lri,
            "level": c.level.value,
            "band": c.band,
            "alpha_max": c.inputs.alpha_max,
            "depth": c.inputs.depth,
            "criticality": c.inputs.criticality,
            "observability": c.inputs.observability,
            "recovery": c.inputs.recovery,
            "latent_accumulation": c.latent_accumulation,
            "ros": c.ros,
        }
        for c in report.components
    ]


CAMPAIGN_COLUMNS = (
    "step", "strategy", "target", "success", "termination_reason",
    "steps_run", "max_lri", "max_magnitude", "rollback_tick",
)


def campaign_rows(report: CampaignReport) -> List[Row]:
    rows = []
    for index, result in enumerate(report.steps):
        trace = result.trace
        rows.append({
            "step": index,
            "strategy": result.strategy.value,
            "target": result.target,
            "success": result.success,
            "termination_reason": trace.termination_reason.value,
            "steps_run": len(trace.steps),
            "max_lri": max(trace.lri_history, default=None),
            "max_magnitude": max((s.magnitude for s in trace.steps), default=None),
            "rollback_tick": trace.rollback_tick,
        })
    return rows


_OBJECTIVE_COLUMNS = (
    "throughput_rps", "neg_latency_ms", "resource_efficiency", "lri",
    "peak_utilization", "performance", "stability", "fitness",
)


def front_columns(front: ParetoFront) -> List[str]:
    names = [v.name for v in front.members[0].configuration.variables] if front.members else []
    return names + list(_OBJECTIVE_COLUMNS)


def front_rows(front: ParetoFront) -> List[Row]:
    rows = []
    for member in front.members:
        row: Row = dict(member.configuration.as_dict())
        objectives = member.objectives
        row.update({name: getattr(objectives, name) for name in _OBJECTIVE_COLUMNS})
        rows.append(row)
    return rows


LOG_COLUMNS = (
    "tick", "lri", "level", "trigger", "fitness", "safety_passed",
    "applied_steps", "mitigation", "note",
)


def log_rows(log: OptimizationLog) -> List[Row]:
    return [
        {
            "tick": r.tick,
            "lri": r.lri,
            "level": r.level.value,
            "trigger": r.trigger.value if r.trigger else None,
            "fitness": r.fitness,
            "safety_passed": r.safety_passed,
            "applied_steps": len(r.applied_steps),
            "mitigation": r.mitigation.kind.value if r.mitigation else None,
            "note": r.note,
        }
        for r in log.records
    ]


def log_jsonl(log: OptimizationLog) -> str:
    return to_jsonl(log.jsonl())
