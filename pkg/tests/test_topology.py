#!/usr/bin/env python3
"""
Unit tests for topology.py
"""

import math

import numpy as np
import pytest
from pydantic import ValidationError

from src.core.topology import (
    BreakerParams,
    CacheParams,
    ComponentKind,
    dependency_depth,
    apply_overrides,
    iter_components,
    max_upstream_amplification,
    validate_topology,
)
from src.errors import (
    CycleDetected,
    DanglingEdge,
    InvalidField,
    MissingAmplification,
    UnknownComponent,
    UnreachableComponent,
)
from tests.builders import build, cache, cache_chain, component, edge, graph


class _Lookup:
    def __init__(self, alphas):
        self.alphas = alphas

    def alpha(self, source, target):
        return self.alphas.get((source, target))


class TestValidateTopology:
    """Test suite for validate_topology."""

    def test_chain_order_and_depth(self):
        """Test a chain gets a topological order and inclusive depths."""
        topo = cache_chain(0.9)

        assert topo.order == ("entry", "cache", "db")
        assert [dependency_depth(topo, cid) for cid in topo.order] == [1, 2, 3]
        assert topo.entry_ids == ("entry",)
        assert topo.successors("cache") == ("db",)
        assert topo.predecessors("db") == ("cache",)

    def test_depth_is_longest_path(self):
        """Test depth follows the longest entry path in a diamond."""
        topo = build(
            [component("entry", "entry"), component("a", "service"), component("b", "service"),
             component("x", "service"), component("c", "database")],
            [edge("entry", "a", load_fraction=0.5), edge("entry", "b", load_fraction=0.5),
             edge("a", "c"), edge("b", "x"), edge("x", "c")],
        )

        assert dependency_depth(topo, "c") == 4
        assert dependency_depth(topo, "a") == 2

    @pytest.mark.parametrize("seed", [0, 1, 2])
    def test_depth_grows_along_every_edge(self, seed):
        """Test each edge's target sits deeper than its source in a random DAG."""
        rng = np.random.default_rng(seed)
        ids = ["entry"] + [f"n{i:02d}" for i in range(1, 30)]
        pairs = []
        for j in range(1, len(ids)):
            parents = rng.choice(j, size=min(j, int(rng.integers(1, 4))), replace=False)
            pairs += [(ids[int(i)], ids[j]) for i in sorted(parents)]
        fanout = {}
        for source, _ in pairs:
            fanout[source] = fanout.get(source, 0) + 1
        topo = build(
            [component("entry", "entry")] + [component(cid, "service") for cid in ids[1:]],
            [edge(s, t, load_fraction=1.0 / fanout[s]) for s, t in pairs],
        )

        for e in topo.edges:
            assert dependency_depth(topo, e.to_id) >= dependency_depth(topo, e.from_id) + 1

    def test_order_is_deterministic(self):
        """Test ties in the order are broken lexicographically."""
        topo = build(
            [component("entry", "entry"), component("zeta", "service"), component("alpha", "service")],
            [edge("entry", "zeta", load_fraction=0.5), edge("entry", "alpha", load_fraction=0.5)],
        )

        assert topo.order == ("entry", "alpha", "zeta")

    def test_revalidation_is_idempotent(self):
        """Test validating a validated topology yields an equal one."""
        topo = cache_chain(0.5)

        assert validate_topology(topo) == topo

    def test_cycle_detected(self):
        """Test a dependency cycle is rejected with its members."""
        with pytest.raises(CycleDetected) as exc:
            build(
                [component("entry", "entry"), component("a", "service"), component("b", "service")],
                [edge("entry", "a"), edge("a", "b"), edge("b", "a")],
            )

        assert set(exc.value.cycle) == {"a", "b"}

    def test_self_loop_is_a_cycle(self):
        """Test an edge from a component to itself is rejected."""
        with pytest.raises(CycleDetected):
            build([component("entry", "entry"), component("a", "service")],
                  [edge("entry", "a"), edge("a", "a")])

    def test_unreachable_component(self):
        """Test a component no entry reaches is rejected."""
        with pytest.raises(UnreachableComponent) as exc:
            build([component("entry", "entry"), component("a", "service"), component("orphan", "service")],
                  [edge("entry", "a")])

        assert exc.value.component_id == "orphan"

    def test_dangling_edge(self):
        """Test an edge to an unknown component is rejected."""
        with pytest.raises(DanglingEdge) as exc:
            build([component("entry", "entry")], [edge("entry", "ghost")])

        assert exc.value.missing == "ghost"
        assert exc.value.edge == ("entry", "ghost")

    @pytest.mark.parametrize("overrides,field", [
        ({"observability": 1.5}, "observability_coverage"),
        ({"observability": -0.1}, "observability_coverage"),
        ({"criticality": 0.5}, "criticality"),
        ({"criticality": 6.0}, "criticality"),
        ({"mttr": 0.0}, "mttr_minutes"),
        ({"capacity": 0.0}, "capacity_rps"),
        ({"bypass_probability": 1.2}, "bypass_probability"),
    ])
    def test_invalid_component_fields(self, overrides, field):
        """Test out-of-range component fields name the field."""
        with pytest.raises(InvalidField) as exc:
            build([component("entry", "entry"), component("a", "service", **overrides)], [edge("entry", "a")])

        assert exc.value.field == field
        assert exc.value.component_id == "a"

    def test_nan_field_rejected(self):
        """Test NaN never passes a range check."""
        with pytest.raises(InvalidField):
            build([component("entry", "entry"), component("a", "service", observability=math.nan)],
                  [edge("entry", "a")])

    def test_load_fractions_over_one(self):
        """Test outgoing load fractions may not exceed 1."""
        with pytest.raises(InvalidField) as exc:
            build(
                [component("entry", "entry"), component("a", "service"), component("b", "service")],
                [edge("entry", "a", load_fraction=0.7), edge("entry", "b", load_fraction=0.7)],
            )

        assert exc.value.field == "load_fraction"

    def test_duplicate_ids(self):
        """Test duplicate component ids are rejected."""
        with pytest.raises(InvalidField) as exc:
            build([component("entry", "entry"), component("entry", "entry")], [])

        assert exc.value.field == "id"

    def test_duplicate_edges(self):
        """Test the same edge may appear only once."""
        with pytest.raises(InvalidField):
            build([component("entry", "entry"), component("a", "service")],
                  [edge("entry", "a", load_fraction=0.5), edge("entry", "a", load_fraction=0.5)])

    def test_entries_required(self):
        """Test an empty entry list is rejected."""
        with pytest.raises(InvalidField) as exc:
            build([component("entry", "entry")], [], entries=[])

        assert exc.value.field == "entries"

    def test_unknown_entry(self):
        """Test entries must name existing components."""
        with pytest.raises(UnknownComponent):
            build([component("entry", "entry")], [], entries=["nowhere"])

    def test_entry_must_be_entry_kind(self):
        """Test a non-entry component may not be listed as an entry."""
        with pytest.raises(InvalidField):
            build([component("svc", "service")], [], entries=["svc"])

    def test_entry_kind_must_be_listed(self):
        """Test every entry-kind component is listed in entries."""
        with pytest.raises(InvalidField):
            build([component("entry", "entry"), component("other", "entry")], [], entries=["entry"])

    def test_entry_without_incoming_edges(self):
        """Test an entry may not have predecessors."""
        with pytest.raises(InvalidField) as exc:
            build([component("entry", "entry"), component("edge", "entry")],
                  [edge("entry", "edge")], entries=["entry", "edge"])

        assert exc.value.field == "entries"

    def test_table_points_validated(self):
        """Test table latency points must start at zero and increase."""
        bad = component("a", "service")
        bad["latency_profile"] = {"base_latency_ms": 1.0, "model": "table", "saturation_cap_ms": 10.0,
                                  "table_points": [[0.5, 1.0], [0.2, 2.0]]}
        with pytest.raises(InvalidField) as exc:
            build([component("entry", "entry"), bad], [edge("entry", "a")])

        assert exc.value.field == "table_points"

    def test_cap_below_base_rejected(self):
        """Test the saturation cap may not undercut the base latency."""
        with pytest.raises(InvalidField) as exc:
            build([component("entry", "entry"), component("a", "service", base_latency=10.0, cap=5.0)],
                  [edge("entry", "a")])

        assert exc.value.field == "saturation_cap_ms"


class TestComponentSpec:
    """Test suite for component parameters."""

    def test_cache_requires_params(self):
        """Test a cache without optimization_params fails schema validation."""
        with pytest.raises(ValidationError):
            graph([component("entry", "entry"), component("c", "cache")], [edge("entry", "c")])

    def test_params_must_match_kind(self):
        """Test an entry takes no optimization_params."""
        with pytest.raises(ValidationError):
            graph([component("entry", "entry", params={"pool_size": 1, "per_connection_rps": 1.0})], [])

    def test_breaker_params_default(self):
        """Test breakers, balancers and queues get default parameters."""
        topo = build([component("entry", "entry"), component("b", "circuit_breaker")], [edge("entry", "b")])

        params = topo.component("b").optimization_params
        assert isinstance(params, BreakerParams)
        assert params.trip_threshold == 0.5
        assert params.recovery_ticks == 5

    def test_pool_limits_capacity(self):
        """Test a connection pool caps the usable capacity."""
        topo = build([component("entry", "entry"),
                      component("db", "database", capacity=5000.0,
                                params={"pool_size": 10, "per_connection_rps": 100.0})],
                     [edge("entry", "db")])

        assert topo.component("db").effective_capacity() == 1000.0

    def test_replica_capacity(self):
        """Test per-replica capacity overrides capacity_rps."""
        topo = build([component("entry", "entry"),
                      component("lb", "load_balancer", capacity=10.0,
                                params={"replicas": 3, "replica_capacity_rps": 200.0})],
                     [edge("entry", "lb")])

        assert topo.component("lb").effective_capacity() == 600.0

    def test_recovery_rate(self):
        """Test R is the inverse of mttr."""
        topo = cache_chain(0.9, db_mttr=4.0)

        assert topo.component("db").recovery == 0.25


class TestCacheParams:
    """Test suite for the working-set hit curve."""

    def test_hit_curve(self):
        """Test hit(s) = h_max * (1 - exp(-s / w))."""
        params = CacheParams(cache_size=200.0, max_hit_rate=0.95, working_set=200.0)

        assert params.hit_rate() == pytest.approx(0.95 * (1.0 - math.exp(-1.0)))

    def test_empty_cache_has_no_hits(self):
        """Test a zero-size cache never hits."""
        assert CacheParams(cache_size=0.0, max_hit_rate=0.9, working_set=10.0).hit_rate() == 0.0

    def test_drift_lowers_hit_rate(self):
        """Test hit-rate drift is linear in time and clamped at zero."""
        params = CacheParams(cache_size=1e6, max_hit_rate=0.5, working_set=1.0, hit_drift_per_s=0.001)

        assert params.hit_rate(100) == pytest.approx(0.4)
        assert params.hit_rate(10_000) == 0.0


class TestQueries:
    """Test suite for structural queries."""

    def test_max_upstream_amplification(self):
        """Test the largest alpha over incoming edges is returned."""
        topo = build(
            [component("entry", "entry"), cache("c1", hit=0.5), cache("c2", hit=0.5), component("db", "database")],
            [edge("entry", "c1", load_fraction=0.5), edge("entry", "c2", load_fraction=0.5),
             edge("c1", "db"), edge("c2", "db")],
        )
        lookup = _Lookup({("c1", "db"): 3.0, ("c2", "db"): 7.0, ("entry", "c1"): 1.0, ("entry", "c2"): 1.0})

        assert max_upstream_amplification(topo, lookup, "db") == 7.0
        assert max_upstream_amplification(topo, lookup, "entry") == 1.0

    def test_missing_amplification(self):
        """Test an edge without alpha is reported."""
        topo = cache_chain(0.9)

        with pytest.raises(MissingAmplification) as exc:
            max_upstream_amplification(topo, _Lookup({}), "db")

        assert exc.value.edge == ("cache", "db")

    def test_unknown_component(self):
        """Test lookups of unknown ids raise UnknownComponent."""
        topo = cache_chain(0.9)

        with pytest.raises(UnknownComponent):
            topo.component("nope")
        with pytest.raises(UnknownComponent):
            topo.edge("entry", "db")

    def test_of_kind_and_iteration(self):
        """Test kind filtering and iteration follow the topological order."""
        topo = cache_chain(0.9)

        assert topo.of_kind(ComponentKind.CACHE, ComponentKind.DATABASE) == ("cache", "db")
        assert [c.id for c in iter_components(topo)] == ["entry", "cache", "db"]


class TestApplyOverrides:
    """Test suite for apply_overrides."""

    def test_override_parameter(self):
        """Test an override yields a new topology and leaves the original alone."""
        topo = cache_chain(0.9)

        updated = apply_overrides(topo, {("cache", "cache_size"): 5.0})

        assert updated.component("cache").optimization_params.cache_size == 5.0
        assert topo.component("cache").optimization_params.cache_size == 1e6

    def test_empty_overrides(self):
        """Test no overrides returns the same topology."""
        topo = cache_chain(0.9)

        assert apply_overrides(topo, {}) is topo

    def test_unknown_parameter(self):
        """Test overriding a parameter the component lacks fails."""
        with pytest.raises(InvalidField):
            apply_overrides(cache_chain(0.9), {("cache", "pool_size"): 5})

    def test_unknown_component(self):
        """Test overriding a missing component fails."""
        with pytest.raises(UnknownComponent):
            apply_overrides(cache_chain(0.9), {("ghost", "cache_size"): 5.0})

    def test_override_is_validated(self):
        """Test overridden values obey the parameter model."""
        with pytest.raises(ValidationError):
            apply_overrides(cache_chain(0.9), {("cache", "cache_size"): -1.0})
