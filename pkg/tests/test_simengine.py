#!/usr/bin/env python3
"""
Unit tests for simengine.py
"""

import pytest

from src.core.simengine import (
    BreakerMode,
    BreakerState,
    Clear,
    ClearBypass,
    OptimizationBypass,
    Simulator,
    TELEMETRY_COLUMNS,
    TrafficPattern,
    TrafficProfile,
    apply_action,
    latency_at_utilization,
    run_simulation,
    step_circuit_breaker,
)
from src.core.topology import BreakerParams, LatencyProfile
from src.errors import IncompatibleTarget, ScheduleOutOfRange
from src.models import PerturbationAction, PerturbationStrategy
from tests.builders import build, cache, cache_chain, component, edge


def _action(strategy, target, magnitude=1.0, **extra):
    return PerturbationAction(strategy=PerturbationStrategy(strategy), target=target, magnitude=magnitude, **extra)


class TestLatencyModel:
    """Test suite for latency_at_utilization."""

    def test_mm1(self):
        """Test mm1 latency is base / (1 - rho) and saturates at the cap."""
        profile = LatencyProfile(base_latency_ms=5.0, model="mm1", saturation_cap_ms=100.0)

        assert latency_at_utilization(profile, 0.0) == 5.0
        assert latency_at_utilization(profile, 0.5) == pytest.approx(10.0)
        assert latency_at_utilization(profile, 0.99) == 100.0
        assert latency_at_utilization(profile, 1.0) == 100.0

    def test_linear(self):
        """Test linear latency runs from base to cap."""
        profile = LatencyProfile(base_latency_ms=2.0, model="linear", saturation_cap_ms=12.0)

        assert latency_at_utilization(profile, 0.25) == pytest.approx(4.5)
        assert latency_at_utilization(profile, 1.0) == pytest.approx(12.0)

    def test_table_interpolates(self):
        """Test table latency interpolates linearly between its points."""
        profile = LatencyProfile(base_latency_ms=1.0, model="table", saturation_cap_ms=50.0,
                                 table_points=[(0.0, 1.0), (0.5, 3.0), (0.8, 10.0)])

        assert latency_at_utilization(profile, 0.25) == pytest.approx(2.0)
        assert latency_at_utilization(profile, 0.65) == pytest.approx(6.5)
        # beyond the last point the curve runs to the cap at rho = 1
        assert latency_at_utilization(profile, 0.9) == pytest.approx(30.0)


class TestCircuitBreaker:
    """Test suite for the breaker state machine."""

    @pytest.fixture
    def params(self):
        """Fixture providing breaker parameters."""
        return BreakerParams(trip_threshold=0.5, recovery_ticks=3)

    def test_closed_trips_above_threshold(self, params):
        """Test a closed breaker opens when the error rate exceeds the threshold."""
        assert step_circuit_breaker(BreakerState(), 0.4, params).mode == BreakerMode.CLOSED
        assert step_circuit_breaker(BreakerState(), 0.5, params).mode == BreakerMode.CLOSED
        assert step_circuit_breaker(BreakerState(), 0.6, params).mode == BreakerMode.OPEN

    def test_open_waits_for_recovery(self, params):
        """Test an open breaker half-opens after recovery_ticks."""
        state = BreakerState(BreakerMode.OPEN, 0)
        modes = []
        for _ in range(3):
            state = step_circuit_breaker(state, 1.0, params)
            modes.append(state.mode)

        assert modes == [BreakerMode.OPEN, BreakerMode.OPEN, BreakerMode.HALF_OPEN]

    def test_half_open_resolves(self, params):
        """Test a half-open breaker closes on success and reopens on failure."""
        half = BreakerState(BreakerMode.HALF_OPEN, 0)

        assert step_circuit_breaker(half, 0.1, params).mode == BreakerMode.CLOSED
        assert step_circuit_breaker(half, 0.9, params).mode == BreakerMode.OPEN


class TestTrafficProfile:
    """Test suite for TrafficProfile."""

    def test_constant(self):
        """Test constant load ignores the tick."""
        assert TrafficProfile(base_rps=100.0).offered_at(12345) == 100.0

    def test_spike(self):
        """Test spike load applies only inside its window."""
        traffic = TrafficProfile(pattern=TrafficPattern.SPIKE, base_rps=100.0, spike_multiplier=3.0,
                                 spike_start_s=10, spike_duration_s=5)

        assert traffic.offered_at(9) == 100.0
        assert traffic.offered_at(10) == 300.0
        assert traffic.offered_at(14) == 300.0
        assert traffic.offered_at(15) == 100.0

    def test_diurnal(self):
        """Test diurnal load peaks a quarter period in."""
        traffic = TrafficProfile(pattern=TrafficPattern.DIURNAL, base_rps=100.0,
                                 diurnal_period_s=400, diurnal_amplitude=0.5)

        assert traffic.offered_at(0) == pytest.approx(100.0)
        assert traffic.offered_at(100) == pytest.approx(150.0)
        assert traffic.offered_at(300) == pytest.approx(50.0)


class TestFlow:
    """Test suite for load propagation."""

    def test_cache_forwards_misses(self, traffic):
        """Test a cache forwards (1 - h) of what it serves."""
        trace = run_simulation(cache_chain(0.9), traffic, 5, seed=0)

        state = trace.states[-1]
        assert state.sample("entry").offered_rps == pytest.approx(1000.0)
        assert state.sample("cache").offered_rps == pytest.approx(1000.0)
        assert state.sample("cache").hit_rate == pytest.approx(0.9)
        assert state.sample("db").offered_rps == pytest.approx(100.0)
        assert state.sample("cache").absorbed_rps == pytest.approx(900.0)

    def test_overload_produces_errors(self, traffic):
        """Test load above capacity is served up to capacity and the rest errors."""
        topo = cache_chain(0.5, db_capacity=400.0)

        db = run_simulation(topo, traffic, 1, seed=0).states[0].sample("db")

        assert db.offered_rps == pytest.approx(500.0)
        assert db.served_rps == pytest.approx(400.0)
        assert db.error_rps == pytest.approx(100.0)
        assert db.utilization == 1.0
        assert db.error_fraction == pytest.approx(0.2)

    def test_load_fractions_split(self, traffic):
        """Test forwarded load is split by load_fraction."""
        topo = build(
            [component("entry", "entry"), component("a", "service"), component("b", "service")],
            [edge("entry", "a", load_fraction=0.7), edge("entry", "b", load_fraction=0.3)],
        )

        state = run_simulation(topo, traffic, 1, seed=0).states[0]

        assert state.sample("a").offered_rps == pytest.approx(700.0)
        assert state.sample("b").offered_rps == pytest.approx(300.0)

    def test_queue_buffers_before_erroring(self):
        """Test a queue buffers overflow up to its depth before dropping."""
        topo = build(
            [component("entry", "entry"),
             component("q", "queue", capacity=100.0, params={"queue_depth": 500.0})],
            [edge("entry", "q")],
        )

        trace = run_simulation(topo, TrafficProfile(base_rps=150.0), 12, seed=0)

        errors = trace.series("q", "error_rps")
        assert all(e == 0.0 for e in errors[:10])
        assert errors[10] == pytest.approx(50.0)
        assert trace.states[9].sample("q").queue_depth == pytest.approx(500.0)

    def test_breaker_opens_and_recovers(self, traffic):
        """Test a breaker opens on downstream errors, then half-opens and closes."""
        topo = build(
            [component("entry", "entry"), component("breaker", "circuit_breaker"),
             component("db", "database", capacity=100.0)],
            [edge("entry", "breaker"), edge("breaker", "db")],
        )

        trace = run_simulation(topo, traffic, 8, seed=0)

        modes = [s.sample("breaker").breaker_state for s in trace.states]
        assert modes[0] == BreakerMode.CLOSED
        assert modes[1] == BreakerMode.OPEN
        assert trace.states[1].sample("db").offered_rps == 0.0
        assert modes[6] == BreakerMode.HALF_OPEN
        assert trace.states[6].sample("db").offered_rps == pytest.approx(100.0)
        assert trace.states[6].sample("db").error_rps == 0.0
        assert modes[7] == BreakerMode.CLOSED

    def test_shadow_fraction_is_capped(self, traffic):
        """Test shadow traffic never exceeds half of the hits."""
        sim = Simulator(cache_chain(0.9), traffic)
        sim.set_shadow_fraction(0.9)

        assert sim.shadow_fraction == 0.5
        assert sim.step().sample("db").offered_rps == pytest.approx(1000.0 * (1.0 - 0.9 * 0.5))

    def test_shed_fraction_reduces_entry_load(self, traffic):
        """Test shed load never reaches the entries."""
        sim = Simulator(cache_chain(0.9), traffic)
        sim.set_shed_fraction(0.25)

        assert sim.step().sample("entry").offered_rps == pytest.approx(750.0)


class TestPerturbations:
    """Test suite for perturbation actions."""

    def test_cache_bypass(self, traffic):
        """Test a partial bypass routes that share of hits downstream."""
        trace = run_simulation(cache_chain(0.99), traffic, 3, seed=0,
                               schedule=[(1, _action("cache_bypass", "cache", 0.10))])

        assert trace.states[0].sample("db").offered_rps == pytest.approx(10.0)
        assert trace.states[1].sample("db").offered_rps == pytest.approx(109.0)

    def test_apply_action_on_running_simulator(self, traffic):
        """Test an action applied between steps shows from the next step."""
        sim = Simulator(cache_chain(0.99), traffic)
        before = sim.step()

        assert apply_action(sim, _action("cache_bypass", "cache", 0.10)) is sim
        after = sim.step()

        assert before.sample("db").offered_rps == pytest.approx(10.0)
        assert after.sample("db").offered_rps == pytest.approx(109.0)
        assert after.active_perturbations[0].started_tick == 1

    def test_full_optimization_bypass(self, traffic):
        """Test a full bypass sends everything downstream until cleared."""
        trace = run_simulation(cache_chain(0.9), traffic, 4, seed=0,
                               schedule=[(1, OptimizationBypass("cache")), (3, ClearBypass("cache"))])

        db = trace.series("db", "offered_rps")
        assert db.tolist() == pytest.approx([100.0, 1000.0, 1000.0, 100.0])

    def test_latency_injection(self, traffic):
        """Test injected latency adds to the component's latency."""
        topo = cache_chain(0.9)

        trace = run_simulation(topo, traffic, 2, seed=0, schedule=[(1, _action("latency_injection", "db", 50.0))])

        assert trace.states[1].sample("db").latency_ms == pytest.approx(trace.states[0].sample("db").latency_ms + 50.0)

    def test_resource_constraint(self, traffic):
        """Test a resource constraint scales capacity."""
        topo = cache_chain(0.5, db_capacity=1000.0)

        trace = run_simulation(topo, traffic, 2, seed=0,
                               schedule=[(1, _action("resource_constraint", "db", 0.4))])

        assert trace.states[0].sample("db").error_rps == 0.0
        assert trace.states[1].sample("db").served_rps == pytest.approx(400.0)
        assert trace.states[1].sample("db").error_rps == pytest.approx(100.0)

    def test_lb_manipulation(self, traffic):
        """Test removing a replica removes its share of capacity."""
        topo = build(
            [component("entry", "entry"), component("lb", "load_balancer", capacity=1000.0, params={"replicas": 4})],
            [edge("entry", "lb")],
        )

        trace = run_simulation(topo, traffic, 2, seed=0, schedule=[(1, _action("lb_manipulation", "lb"))])

        assert trace.states[0].sample("lb").error_rps == 0.0
        assert trace.states[1].sample("lb").served_rps == pytest.approx(750.0)

    def test_dependency_isolation(self, traffic):
        """Test isolation cuts the edge from the resolved predecessor."""
        topo = cache_chain(0.9)
        sim = Simulator(topo, traffic)

        applied = sim.apply(_action("dependency_isolation", "db"))

        assert applied.source == "cache"
        assert sim.step().sample("db").offered_rps == 0.0

    def test_isolation_needs_a_predecessor(self, traffic):
        """Test isolating an entry is incompatible."""
        with pytest.raises(IncompatibleTarget):
            Simulator(cache_chain(0.9), traffic).apply(_action("dependency_isolation", "entry"))

    @pytest.mark.parametrize("strategy,target", [
        ("cache_bypass", "db"),
        ("breaker_bypass", "cache"),
        ("lb_manipulation", "db"),
    ])
    def test_incompatible_targets(self, traffic, strategy, target):
        """Test kind-specific strategies reject other kinds."""
        magnitude = 0.1 if strategy == "cache_bypass" else 1.0
        with pytest.raises(IncompatibleTarget):
            Simulator(cache_chain(0.9), traffic).apply(_action(strategy, target, magnitude))

    def test_bypass_rejects_non_optimizations(self, traffic):
        """Test a full bypass needs a cache, breaker or balancer."""
        with pytest.raises(IncompatibleTarget):
            Simulator(cache_chain(0.9), traffic).bypass("db")

    def test_clear(self, traffic):
        """Test Clear removes active actions."""
        trace = run_simulation(cache_chain(0.9), traffic, 3, seed=0,
                               schedule=[(0, _action("latency_injection", "db", 10.0)), (2, Clear())])

        assert trace.states[1].active_perturbations
        assert trace.states[2].active_perturbations == ()

    def test_actions_expire(self, traffic):
        """Test an action lapses after the maximum perturbation time."""
        trace = run_simulation(cache_chain(0.9), traffic, 310, seed=0,
                               schedule=[(0, _action("latency_injection", "db", 10.0))])

        assert trace.states[299].active_perturbations
        assert trace.states[300].active_perturbations == ()

    def test_reapplying_replaces(self, traffic):
        """Test re-applying the same strategy on a target replaces it."""
        sim = Simulator(cache_chain(0.9), traffic)
        sim.apply(_action("cache_bypass", "cache", 0.05))
        sim.apply(_action("cache_bypass", "cache", 0.10))

        assert len(sim.active_actions) == 1
        assert sim.active_actions[0].magnitude == 0.10

    def test_guard_rolls_back_same_tick(self, traffic):
        """Test a tripped guard recomputes the tick without any action."""
        sim = Simulator(cache_chain(0.9), traffic)
        sim.apply(_action("latency_injection", "db", 500.0))

        state = sim.step(guard=lambda s: s.sample("db").latency_ms > 100.0)

        assert state.rolled_back
        assert state.active_perturbations == ()
        assert state.sample("db").latency_ms < 100.0
        assert sim.active_actions == ()

    def test_bypass_magnitude_is_capped(self):
        """Test cache_bypass magnitudes above 20% are rejected."""
        with pytest.raises(ValueError):
            _action("cache_bypass", "cache", 0.5)


class TestRunSimulation:
    """Test suite for run_simulation."""

    def test_trace_is_gap_free(self, traffic):
        """Test one snapshot per tick starting at start_tick."""
        trace = run_simulation(cache_chain(0.9), traffic, 10, seed=1, start_tick=100)

        assert len(trace) == 10
        assert trace.ticks == list(range(100, 110))
        assert trace.start_tick == 100

    def test_schedule_out_of_range(self, traffic):
        """Test schedule ticks outside the run are rejected."""
        with pytest.raises(ScheduleOutOfRange):
            run_simulation(cache_chain(0.9), traffic, 10, seed=0, schedule=[(10, Clear())])

    def test_duration_must_be_positive(self, traffic):
        """Test a zero-length run is rejected."""
        with pytest.raises(ValueError):
            run_simulation(cache_chain(0.9), traffic, 0, seed=0)

    def test_seeded_noise_is_deterministic(self):
        """Test equal seeds reproduce noisy runs and different seeds differ."""
        traffic = TrafficProfile(base_rps=1000.0, noise_fraction=0.1)
        topo = cache_chain(0.9)

        first = list(run_simulation(topo, traffic, 50, seed=42).records())
        second = list(run_simulation(topo, traffic, 50, seed=42).records())
        other = list(run_simulation(topo, traffic, 50, seed=43).records())

        assert first == second
        assert first != other

    def test_records_follow_export_columns(self, traffic):
        """Test telemetry rows carry the export columns."""
        rows = list(run_simulation(cache_chain(0.9), traffic, 2, seed=0).records())

        assert len(rows) == 6
        assert tuple(rows[0]) == TELEMETRY_COLUMNS
        assert rows[0]["hit_rate"] is None
        assert rows[1]["hit_rate"] == pytest.approx(0.9)

    def test_slice_and_mean(self, traffic):
        """Test slicing keeps ticks in [start, end)."""
        trace = run_simulation(cache_chain(0.9), traffic, 10, seed=0)

        part = trace.slice(3, 6)
        assert part.ticks == [3, 4, 5]
        assert part.mean("db", "offered_rps") == pytest.approx(100.0)

    def test_continuing_a_simulator(self, traffic):
        """Test passing a simulator continues its clock."""
        topo = cache_chain(0.9)
        sim = Simulator(topo, traffic)

        run_simulation(topo, traffic, 5, seed=0, simulator=sim)
        trace = run_simulation(topo, traffic, 5, seed=0, simulator=sim)

        assert trace.ticks == [5, 6, 7, 8, 9]


def test_cache_builder_hit_is_exact():
    """Test the cache builder yields the requested hit rate."""
    topo = build([component("entry", "entry"), cache(hit=0.73)], [edge("entry", "cache")])

    assert topo.component("cache").optimization_params.hit_rate() == pytest.approx(0.73)


class TestFlowConservation:
    """Test suite for per-tick flow accounting across every component kind."""

    @pytest.fixture
    def mixed_topology(self):
        """Fixture providing one component of each kind, with a queue and a breaker under stress."""
        return build(
            [
                component("entry", "entry"),
                component("lb", "load_balancer", params={"replicas": 2}),
                component("breaker", "circuit_breaker"),
                cache(hit=0.8),
                component("q", "queue", capacity=100.0, params={"queue_depth": 200.0}),
                component("svc", "service"),
                component("db", "database", capacity=80.0,
                          params={"pool_size": 4, "per_connection_rps": 20.0}),
                component("guard", "circuit_breaker"),
                component("ledger", "database", capacity=10.0),
            ],
            [
                edge("entry", "lb", load_fraction=0.8), edge("entry", "guard", load_fraction=0.2),
                edge("lb", "breaker"), edge("breaker", "cache"), edge("cache", "q"),
                edge("q", "svc"), edge("svc", "db", load_fraction=0.6), edge("guard", "ledger"),
            ],
        )

    @pytest.fixture
    def spike(self):
        """Fixture providing a triple-load spike that overfills the queue."""
        return TrafficProfile(pattern=TrafficPattern.SPIKE, base_rps=300.0, spike_multiplier=3.0,
                              spike_start_s=5, spike_duration_s=5)

    def test_offered_equals_absorbed_forwarded_and_errors(self, mixed_topology, spike):
        """Test offered = absorbed + forwarded + errors on every tick for every component."""
        trace = run_simulation(mixed_topology, spike, 30, seed=0)

        for state in trace.states:
            for sample in state.components.values():
                total = sample.absorbed_rps + sample.forwarded_rps + sample.error_rps
                assert total == pytest.approx(sample.offered_rps, rel=1e-9, abs=1e-9), (
                    state.tick_s, sample.component)

    def test_forwarded_reaches_successors(self, mixed_topology, spike):
        """Test each component's offered load is the sum of what its predecessors forwarded to it."""
        trace = run_simulation(mixed_topology, spike, 30, seed=0)

        state = trace.states[12]
        assert state.sample("q").offered_rps == pytest.approx(state.sample("cache").forwarded_rps)
        assert state.sample("svc").offered_rps == pytest.approx(state.sample("q").forwarded_rps)
        assert state.sample("db").offered_rps == pytest.approx(state.sample("svc").forwarded_rps)
        assert state.sample("svc").absorbed_rps == pytest.approx(0.4 * state.sample("svc").served_rps)

    def test_queue_backlog_is_accounted(self, mixed_topology, spike):
        """Test queue fill and drain appear as positive then negative absorption."""
        trace = run_simulation(mixed_topology, spike, 30, seed=0)

        absorbed = trace.series("q", "absorbed_rps")
        depth = trace.series("q", "queue_depth")
        assert max(depth) == pytest.approx(200.0)
        assert absorbed[5] == pytest.approx(44.0)
        assert absorbed[10] == pytest.approx(-52.0)
        assert sum(absorbed) == pytest.approx(depth[-1])

    def test_breaker_states_are_exercised(self, mixed_topology, spike):
        """Test the guarding breaker both opens and half-opens during the run."""
        trace = run_simulation(mixed_topology, spike, 30, seed=0)

        modes = {s.sample("guard").breaker_state for s in trace.states}
        assert {BreakerMode.OPEN, BreakerMode.HALF_OPEN} <= modes
