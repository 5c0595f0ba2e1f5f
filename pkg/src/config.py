#!/usr/bin/env python3
"""
Application configuration.

Defaults only: run-time configuration comes from scenario files and CLI
flags, never from the environment.
"""

from typing import Dict, Tuple


class Settings:
    """Application settings."""

    # Project
    VERSION = "0.1.0"

    # Risk classification thresholds
    LRI_MEDIUM = 2.0
    LRI_HIGH = 10.0
    # Finer report bands: (lower bound, label), ascending
    LRI_BANDS: Tuple[Tuple[float, str], ...] = (
        (0.0, "Low"),
        (2.0, "Medium-Low"),
        (5.0, "Medium"),
        (10.0, "High"),
        (20.0, "Very High"),
        (50.0, "Critical"),
    )

    # Safety monitoring
    SAFETY_ERROR_RATE = 0.05
    SAFETY_LATENCY_FACTOR = 2.0
    SAFETY_UTILIZATION = 0.85
    MAX_PERTURBATION_TICKS = 300

    # Amplification measurement
    BYPASS_DURATION_S = 300
    ZERO_BASELINE_RPS = 1e-9

    # Cache bypass escalation
    BYPASS_START = 0.005
    BYPASS_FACTOR = 1.4
    BYPASS_CAP = 0.20
    STEP_WINDOW_TICKS = 90
    HIGH_RISK_LRI = 10.0
    RAPID_ESCALATION_GRADIENT = 2.0

    # Per-strategy escalation defaults: (start, factor, cap)
    ESCALATION_DEFAULTS: Dict[str, Tuple[float, float, float]] = {
        "cache_bypass": (0.005, 1.4, 0.20),
        "latency_injection": (10.0, 2.0, 80.0),
        # Escalates the capacity *reduction*; the action multiplier is 1 - reduction
        "resource_constraint": (0.1, 1.5, 0.5),
        "breaker_bypass": (1.0, 1.0, 1.0),
        "lb_manipulation": (1.0, 1.0, 1.0),
        "dependency_isolation": (1.0, 1.0, 1.0),
    }

    # Cache allocation
    RISK_PENALTY_SCALE = 10.0
    RISK_PENALTY_MAX = 5.0

    # Streaming monitor
    WINDOW_TICKS = 900
    WINDOW_OVERLAP = 0.5
    SHADOW_FRACTION_MAX = 0.5
    FORECAST_SMOOTHING = 0.1

    # Detection estimation
    DETECTION_WARMUP_TICKS = 30
    DETECTION_ONSET_SPREAD_TICKS = 60
    DETECTION_HORIZON_TICKS = 120

    # Optimizer
    APEX_EVAL_DURATION_S = 60
    APEX_MAX_WORKERS = 4


settings = Settings()
