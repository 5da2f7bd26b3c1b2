"""Acceptance suite: one test per top-level claim, streamable as a checklist.

Run with `pytest tests/test_acceptance.py -v -s` to get one PASS line per
criterion. Every tolerance is pinned here; nothing is calibrated after
the fact. The heavy sweeps (A3, A6) parallelize over processes and stay
within their stated wall-clock targets on two cores.
"""

import itertools
import multiprocessing
import os
import random
import time

from metasim.codec import Coord, ImpedanceCode, Opcode, Packet, size_grid
from metasim.fabric import Grid
from metasim.kernel import FixedDelay, Simulator, UniformJitter
from metasim.metrics import TransitionLedger, compare_reports, energy, latency_report
from metasim.oracle import exhaustive_oracle, grid_outcome
from metasim.primitives import FOUR_PHASE, TWO_PHASE, Channel, muller_c_step
from metasim.run import run_async, run_sync
from metasim.scenario import validate_scenario
from metasim.sync_baseline import TimingParams, build_clock_tree, check_timing

JOBS = min(2, os.cpu_count() or 1)


def _ok(name, detail):
    print(f"\n{name} PASS: {detail}")


def set_cmd(x, y, load=0, r=0, xc=0):
    return Packet(
        Opcode.SET_IMPEDANCE,
        Coord(x, y),
        Coord(0, 0),
        load,
        ImpedanceCode(r, xc).as_payload(),
    )


# -- A1 --------------------------------------------------------------------------


def test_a1_muller_c_exhaustive():
    cases = 0
    for arity in (2, 3):
        for bits in itertools.product([False, True], repeat=arity):
            for prev in (False, True):
                got = muller_c_step(list(bits), prev)
                expected = (
                    True if all(bits) else False if not any(bits) else prev
                )
                assert got is expected, (bits, prev)
                cases += 1
    assert cases == 8 + 16
    _ok("A1", f"{cases} input/state combinations match the agreement rule")


# -- A2 --------------------------------------------------------------------------


def _channel_run(protocol, n_items, seed=0):
    sim = Simulator(seed, ledger=TransitionLedger())
    ch = Channel(sim, "ch", 16, protocol, FixedDelay(50))
    queue = list(range(n_items))
    got = []

    def deliver(word):
        got.append(word)
        return True

    def pump():
        if queue and ch.sender.idle:
            ch.sender.send(queue.pop(0) & 0xFFFF)

    ch.receiver.on_deliver = deliver
    ch.sender.on_ready = pump
    sim.after(1, lambda a: pump(), None)
    sim.run_to_quiescence()
    assert len(got) == n_items
    led = sim.ledger
    return (
        len(led.times_for(ch.req.ledger_idx)),
        len(led.times_for(ch.ack.ledger_idx)),
        energy(led, start=0).by_class_j["handshake"],
    )


def test_a2_handshake_edge_economy():
    n = 1000
    req4, ack4, e4 = _channel_run(FOUR_PHASE, n)
    req2, ack2, e2 = _channel_run(TWO_PHASE, n)
    assert (req4, ack4) == (2 * n, 2 * n)
    assert (req2, ack2) == (n, n)
    ratio = e4 / e2
    assert ratio == 2.0  # exact: transition counts are exact integers
    _ok(
        "A2",
        f"four-phase {req4}+{ack4} vs two-phase {req2}+{ack2} edges; "
        f"handshake energy ratio {ratio}",
    )


# -- A3 --------------------------------------------------------------------------


def _a3_one_seed(seed):
    sim = Simulator(seed, ledger=TransitionLedger())
    grid = Grid(sim, 8, 8, protocol=FOUR_PHASE, delay=UniformJitter(1, 100))
    grid.assign_addresses()
    rng = random.Random(seed ^ 0x5EED)
    cmds = []
    for i in range(100):
        cmds.append(
            set_cmd(rng.randrange(8), rng.randrange(8), rng.randrange(4), i % 256, i % 256)
        )
    for i, c in enumerate(cmds):
        grid.gateway.inject_at(1 + i * 300, c)
    try:
        sim.run_to_quiescence(5_000_000)
    except Exception:
        return (seed, -1, -1, False)
    delivered = [p for p, _t in grid.deliveries]
    # FIFO per destination: one source, so per-dest order must match.
    fifo = True
    for dest in {p.dest for p in cmds}:
        sent = [p for p in cmds if p.dest == dest]
        got = [p for p in delivered if p.dest == dest]
        if sent != got:
            fifo = False
    violations = len(grid.bundling_violations(sim.ledger))
    return (seed, len(delivered), violations, fifo)


def test_a3_delay_insensitivity_sweep():
    t0 = time.time()
    seeds = list(range(1000))
    if JOBS > 1:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(JOBS) as pool:
            results = pool.map(_a3_one_seed, seeds, chunksize=25)
    else:
        results = [_a3_one_seed(s) for s in seeds]
    bad = [r for r in results if r[1] != 100 or r[2] != 0 or not r[3]]
    assert bad == [], f"failing seeds: {bad[:5]}"
    _ok(
        "A3",
        f"1000 seeds x 100 packets on 8x8 with 1-100 ps jitter: 100% delivery, "
        f"0 bundling violations, 0 deadlocks, FIFO held ({time.time() - t0:.0f}s)",
    )


# -- A4 --------------------------------------------------------------------------


def _sparse_scenario():
    rng = random.Random(5)
    wl = [
        {
            "t_ps": i * 100_000_000,
            "dest": [rng.randrange(16), rng.randrange(16)],
            "load_index": rng.randrange(4),
            "payload": [rng.randrange(256), rng.randrange(256)],
        }
        for i in range(10)
    ]
    return validate_scenario(
        {
            "grid": {"width": 16, "height": 16},
            "delays": {"kind": "uniform", "lo_ps": 1, "hi_ps": 100},
            "discovery": False,
            "duration_ps": 1_000_000_000,  # 1 ms
            "seed": 11,
            "sync": {"period_ps": 10_000, "skew_per_level_ps": 0},  # 100 MHz
            "workload": wl,
        }
    )


def test_a4_idle_and_sparse_power_direction():
    idle = validate_scenario(
        {
            "grid": {"width": 16, "height": 16},
            "discovery": False,
            "duration_ps": 1_000_000,  # 1 us
            "sync": {"period_ps": 10_000, "skew_per_level_ps": 0},
            "workload": [],
        }
    )
    a = run_async(idle)
    s = run_sync(idle)
    assert a["energy"]["total_j"] == 0.0  # exact
    assert s["energy"]["total_j"] > 0.0
    assert s["clock_power_share"] == 1.0  # exact: no data moved

    sparse = _sparse_scenario()
    ar = run_async(sparse)
    sr = run_sync(sparse)
    ratio = compare_reports(ar, sr)["energy_ratio_async_over_sync"]
    assert ratio < 0.5
    _ok(
        "A4",
        f"idle: async 0 J vs sync {s['energy']['total_j']:.3e} J (clock share 1.0); "
        f"sparse energy ratio {ratio:.2e} < 0.5",
    )


# -- A5 --------------------------------------------------------------------------


def test_a5_emission_spread():
    sparse = _sparse_scenario()
    a = run_async(sparse)
    s = run_sync(sparse)
    p2a_async = a["emission"]["peak_to_average"]
    p2a_sync = s["emission"]["peak_to_average"]
    assert p2a_sync >= 2.0 * p2a_async
    _ok(
        "A5",
        f"sync peak-to-average {p2a_sync:.1f} >= 2x async {p2a_async:.1f} "
        f"(100 ps bins, identical sparse workload)",
    )


# -- A6 --------------------------------------------------------------------------


def _a6_one_grid(wh):
    w, h = wh
    sim = Simulator(w * 100 + h, ledger=TransitionLedger())
    grid = Grid(sim, w, h, protocol=FOUR_PHASE, delay=FixedDelay(20))
    res = grid.run_discovery()
    coords_ok = all(tc == assigned for tc, assigned in res.address_map.items())
    return (w, h, res.extent, res.announced, coords_ok)


def test_a6_discovery_scaling():
    t0 = time.time()
    sizes = [(w, h) for w in range(1, 17) for h in range(1, 17)]
    if JOBS > 1:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(JOBS) as pool:
            results = pool.map(_a6_one_grid, sizes, chunksize=16)
    else:
        results = [_a6_one_grid(s) for s in sizes]
    for w, h, extent, announced, coords_ok in results:
        assert extent == (w, h), (w, h, extent)
        assert announced == w * h
        assert coords_ok, f"coordinate mismatch on {w}x{h}"
    _ok(
        "A6",
        f"discovery exact on all 256 grids up to 16x16 ({time.time() - t0:.0f}s)",
    )


# -- A7 --------------------------------------------------------------------------


def test_a7_skew_scaling():
    params = TimingParams(setup=100, hold=100, hop_data_delay=1000)
    counts = []
    for side in range(2, 65):
        tree = build_clock_tree(side, side, period=10_000, skew_per_level=20, seed=0)
        counts.append(len(check_timing(tree, params)))
    assert counts == sorted(counts), "violation count not monotone in grid side"
    first = next((side for side, n in zip(range(2, 65), counts) if n), None)
    assert first is not None, "no side in 2..64 ever violates timing"
    _ok(
        "A7",
        f"violations monotone over sides 2..64; first violation at side "
        f"{first}, count {counts[-1]} at side 64",
    )


# -- A8 --------------------------------------------------------------------------

_A8_CMDS = [
    (0, set_cmd(1, 1, load=0, r=0xFF, xc=0xA5)),
    (0, set_cmd(1, 0, load=1, r=3, xc=4)),
    (5, set_cmd(0, 1, load=2, r=7, xc=9)),
]


def _a8_timed_outcome(seed):
    sim = Simulator(seed, ledger=TransitionLedger())
    grid = Grid(sim, 2, 2, protocol=FOUR_PHASE, delay=UniformJitter(1, 60))
    grid.assign_addresses()
    for t, pkt in _A8_CMDS:
        grid.gateway.inject_at(t + 1, pkt)
    sim.run_to_quiescence()
    return grid_outcome(grid, len(grid.bundling_violations(sim.ledger)))


def test_a8_oracle_equivalence():
    t0 = time.time()
    verdict = exhaustive_oracle(2, 2, _A8_CMDS)
    assert verdict.deadlock_free
    assert verdict.delivery_complete
    assert verdict.bundling_clean
    missing = []
    for seed in range(100):
        outcome = _a8_timed_outcome(seed)
        if outcome not in verdict.outcomes:
            missing.append(seed)
    assert missing == [], f"simulator outcomes outside oracle set: seeds {missing}"
    _ok(
        "A8",
        f"{verdict.states_explored} states, {verdict.terminal_count} terminals, "
        f"{len(verdict.outcomes)} outcomes; 100 seeded runs all contained "
        f"({time.time() - t0:.0f}s)",
    )


# -- A9 --------------------------------------------------------------------------


def test_a9_sync_async_functional_equivalence():
    rng = random.Random(99)
    for trial in range(50):
        cmds = []
        for i in range(12):
            cmds.append(
                (
                    1 + i * 50,
                    set_cmd(
                        rng.randrange(8),
                        rng.randrange(8),
                        rng.randrange(4),
                        rng.randrange(256),
                        rng.randrange(256),
                    ),
                )
            )
        sim = Simulator(trial, ledger=TransitionLedger())
        agrid = Grid(sim, 8, 8, protocol=FOUR_PHASE, delay=UniformJitter(1, 80))
        agrid.assign_addresses()
        for t, pkt in cmds:
            agrid.gateway.inject_at(t, pkt)
        sim.run_to_quiescence()

        tree = build_clock_tree(8, 8, period=10_000, skew_per_level=0, seed=trial)
        from metasim.sync_baseline import SyncGrid

        sgrid = SyncGrid(8, 8, tree, ledger=TransitionLedger())
        sgrid.run(cmds)
        assert agrid.register_state() == sgrid.register_state(), f"trial {trial}"
    _ok("A9", "identical final impedance registers on 50 random workloads (8x8)")


# -- A10 -------------------------------------------------------------------------


def test_a10_size_grid():
    atoms, pitch = size_grid(2.4e9)
    assert (atoms, pitch) == (25, 0.025)
    atoms, pitch = size_grid(60e9)
    assert (atoms, pitch) == (25, 0.001)
    _ok("A10", "2.4 GHz -> (25, 2.5 cm); 60 GHz -> (25, 1 mm), exact")


# -- supporting golden: deterministic single-hop latency ---------------------------


def test_single_hop_latency_golden():
    # Hand-derived for fixed 50 ps wires, margin 10 ps, node delay 20 ps:
    # matched delay m = (50 - 50) + 10 + 1 = 11; each word cycle is
    # req-up (m+d) + ack-up (d) + req-down (m+d) + ack-down (d) = 222 ps;
    # a word latches m+d = 61 ps after its cycle starts; the 4th word of a
    # packet latches at 3*222 + 61 = 727 ps; routing adds 20 ps.
    m, d, node = 11, 50, 20
    cycle = 2 * (m + d) + 2 * d
    expected = 3 * cycle + (m + d) + node
    sim = Simulator(0, ledger=TransitionLedger())
    grid = Grid(sim, 2, 2, protocol=FOUR_PHASE, delay=FixedDelay(50))
    grid.assign_addresses()
    grid.gateway.inject_at(1000, set_cmd(0, 0, load=0, r=1, xc=1))
    sim.run_to_quiescence()
    stats = latency_report(grid.gateway.injected, grid.deliveries)
    assert stats.min_ps == stats.max_ps == expected == 747
