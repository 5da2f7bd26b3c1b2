import pytest

from metasim.kernel import (
    EventBudgetExhausted,
    EventQueue,
    FixedDelay,
    ScaledDelay,
    SchedulingInPast,
    Simulator,
    UniformJitter,
    sample_delay,
    schedule,
)
from metasim.metrics import TransitionLedger
from metasim.primitives import WIRE_DATA, Inverter, Wire


def test_schedule_single_event_is_head():
    q = EventQueue()
    fired = []
    q.push(10, fired.append, "a")
    ev = q.pop()
    assert ev.time == 10 and ev.arg == "a"
    assert q.now == 10


def test_simultaneous_events_dequeue_in_insertion_order():
    q = EventQueue()
    order = []
    q.push(10, order.append, 1)
    q.push(10, order.append, 2)
    for _ in range(2):
        ev = q.pop()
        ev.fire(ev.arg)
    assert order == [1, 2]


def test_scheduling_in_past_rejected():
    q = EventQueue()
    q.push(10, lambda a: None)
    q.pop()
    with pytest.raises(SchedulingInPast):
        q.push(5, lambda a: None)


def test_schedule_prebuilt_event_checks_time():
    q = EventQueue()
    ev = q.push(10, lambda a: None)
    q.pop()
    with pytest.raises(SchedulingInPast):
        schedule(ev._replace(time=3), q)


def test_run_to_quiescence_empty_queue():
    sim = Simulator()
    assert sim.run_to_quiescence() == (0, 0)


def test_run_to_quiescence_event_chain():
    sim = Simulator()
    times = []

    def hop(depth):
        times.append(sim.now)
        if depth < 3:
            sim.after(7, hop, depth + 1)

    sim.after(7, hop, 1)
    final, count = sim.run_to_quiescence()
    assert (final, count) == (21, 3)
    assert times == [7, 14, 21]


def test_ring_oscillator_exhausts_event_budget():
    sim = Simulator(ledger=TransitionLedger())
    loop = Wire(sim, "loop", WIRE_DATA, FixedDelay(5))
    inv = Inverter(sim, "inv", loop, loop)
    inv.kick()
    with pytest.raises(EventBudgetExhausted) as e:
        sim.run_to_quiescence(max_events=1000)
    assert e.value.processed == 1000


def test_quiescence_is_sound():
    sim = Simulator()
    sim.after(5, lambda a: None)
    sim.run_to_quiescence()
    assert sim.run_to_quiescence() == (5, 0)


def test_causality_times_nondecreasing():
    sim = Simulator(seed=3)
    seen = []

    def record(a):
        seen.append(sim.now)

    import random

    rng = random.Random(9)
    for _ in range(200):
        sim.at(rng.randint(1, 1000), record)
    sim.run_to_quiescence()
    assert seen == sorted(seen)


def test_sample_delay_fixed():
    sim = Simulator()
    assert sample_delay(FixedDelay(50), sim.rng) == 50


def test_sample_delay_degenerate_uniform():
    sim = Simulator()
    assert sample_delay(UniformJitter(10, 10), sim.rng) == 10


def test_sample_delay_scaled():
    sim = Simulator()
    assert sample_delay(ScaledDelay(FixedDelay(40), 2.5), sim.rng) == 100


def test_sample_delay_uniform_in_bounds_and_deterministic():
    a = Simulator(seed=11).rng
    b = Simulator(seed=11).rng
    model = UniformJitter(1, 100)
    xs = [sample_delay(model, a) for _ in range(500)]
    ys = [sample_delay(model, b) for _ in range(500)]
    assert xs == ys
    assert all(1 <= x <= 100 for x in xs)


def test_delay_model_validation():
    with pytest.raises(ValueError):
        FixedDelay(0)
    with pytest.raises(ValueError):
        UniformJitter(0, 5)
    with pytest.raises(ValueError):
        UniformJitter(9, 5)
    with pytest.raises(ValueError):
        ScaledDelay(FixedDelay(10), 0.0)
    # Scaling never produces a sub-picosecond delay.
    sim = Simulator()
    assert sample_delay(ScaledDelay(FixedDelay(1), 0.001), sim.rng) == 1


def test_zero_delay_scheduling_forbidden():
    sim = Simulator()
    with pytest.raises(ValueError):
        sim.after(0, lambda a: None)
