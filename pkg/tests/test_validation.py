#!/usr/bin/env python3
"""
Unit tests for validation.py
"""

import pytest

from src.core.riskcore import measure_amplification
from src.core.simengine import TrafficProfile
from src.core.validation import correlate_lri_severity, severity_study, study_topology


class TestCorrelate:
    """Test suite for correlate_lri_severity."""

    def test_monotone(self):
        """Test a monotone relation has rank correlations of 1."""
        result = correlate_lri_severity([1.0, 2.0, 3.0, 4.0, 5.0], [1.0, 4.0, 9.0, 16.0, 25.0])

        assert result.n == 5
        assert result.spearman == pytest.approx(1.0)
        assert result.kendall == pytest.approx(1.0)
        assert 0.9 < result.pearson < 1.0

    def test_inverse(self):
        """Test a reversed relation has a Spearman of -1."""
        assert correlate_lri_severity([1.0, 2.0, 3.0], [3.0, 2.0, 1.0]).spearman == pytest.approx(-1.0)

    @pytest.mark.parametrize("lri,severity", [
        ([1.0, 2.0, 3.0], [1.0, 2.0]),
        ([1.0, 2.0], [1.0, 2.0]),
        ([1.0, 1.0, 1.0], [1.0, 2.0, 3.0]),
        ([1.0, 2.0, 3.0], [0.5, 0.5, 0.5]),
    ])
    def test_invalid_input(self, lri, severity):
        """Test mismatched, short and constant series are rejected."""
        with pytest.raises(ValueError):
            correlate_lri_severity(lri, severity)


class TestSeverityStudy:
    """Test suite for the seeded severity study."""

    def test_study_topology(self):
        """Test the study chain amplifies by its configured alpha."""
        topo = study_topology(alpha=10.0, declared_alpha=11.0, criticality=1.0, observability=1.0, load_rps=1000.0)

        measured = measure_amplification(topo, TrafficProfile(base_rps=1000.0), ("cache", "db"), 60)

        assert measured == pytest.approx(10.0, rel=1e-9)
        assert topo.component("db").capacity_rps == pytest.approx(200.0)
        assert topo.edge("cache", "db").declared_amplification == 11.0

    def test_lri_tracks_severity(self):
        """Test LRI ranks bypass severity with Spearman >= 0.7 over 30 chains."""
        study = severity_study(scenarios=30, seed=0)

        assert len(study.points) == 30
        assert study.correlation.spearman >= 0.7
        for point in study.points:
            assert 3.0 <= point.alpha <= 100.0
            assert point.severity == pytest.approx(1.0 - 2.0 / point.alpha, rel=1e-6)

    def test_seeded(self):
        """Test equal seeds give equal studies."""
        assert severity_study(scenarios=5, seed=4) == severity_study(scenarios=5, seed=4)
