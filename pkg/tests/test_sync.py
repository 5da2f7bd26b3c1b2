import numpy as np
import pytest

from metasim.codec import Coord, ImpedanceCode, Opcode, Packet
from metasim.metrics import TransitionLedger, energy
from metasim.sync_baseline import (
    ClockTree,
    SyncGrid,
    TimingParams,
    build_clock_tree,
    check_timing,
)


def set_cmd(x, y, load=0, r=0, xc=0):
    return Packet(
        Opcode.SET_IMPEDANCE,
        Coord(x, y),
        Coord(0, 0),
        load,
        ImpedanceCode(r, xc).as_payload(),
    )


# -- clock tree -----------------------------------------------------------------


def test_tree_2x2_depth_and_skew_bound():
    tree = build_clock_tree(2, 2, period=10_000, skew_per_level=10, seed=1)
    assert tree.levels == 2
    assert tree.max_abs_skew == 20
    assert int(np.abs(tree.leaf_skews).max()) <= 20


def test_tree_zero_skew_is_flat():
    tree = build_clock_tree(8, 8, period=10_000, skew_per_level=0, seed=5)
    assert int(np.abs(tree.leaf_skews).max()) == 0
    assert int(np.abs(tree.wire_offsets).max()) == 0


def test_tree_deterministic_for_seed():
    a = build_clock_tree(16, 16, 10_000, 5, seed=99)
    b = build_clock_tree(16, 16, 10_000, 5, seed=99)
    c = build_clock_tree(16, 16, 10_000, 5, seed=100)
    assert np.array_equal(a.leaf_skews, b.leaf_skews)
    assert np.array_equal(a.wire_offsets, b.wire_offsets)
    assert not np.array_equal(a.leaf_skews, c.leaf_skews)


def test_tree_wire_count():
    # Power-of-two squares prune to a full binary tree: exactly 2N-1
    # wires (N leaves, N-1 internal nodes, plus the root feed).
    for side in (1, 2, 4, 16):
        tree = build_clock_tree(side, side, 10_000, 5, seed=0)
        assert tree.n_wires == 2 * side * side - 1
    # Other shapes keep pass-through segments spanning pruned regions.
    for w, h in ((3, 3), (4, 2), (5, 7)):
        tree = build_clock_tree(w, h, 10_000, 5, seed=0)
        assert tree.n_wires >= 2 * w * h - 1


def test_pairwise_skew_nested_across_grid_growth():
    # Growing the grid leaves skew differences between existing adjacent
    # nodes untouched, which is what makes violation counts monotone.
    small = build_clock_tree(8, 8, 10_000, 20, seed=3)
    large = build_clock_tree(16, 16, 10_000, 20, seed=3)
    s, l = small.leaf_skews, large.leaf_skews[:8, :8]
    assert np.array_equal(s[:, 1:] - s[:, :-1], l[:, 1:] - l[:, :-1])
    assert np.array_equal(s[1:, :] - s[:-1, :], l[1:, :] - l[:-1, :])


# -- timing checks -----------------------------------------------------------------


def test_no_violations_with_ample_margin():
    tree = build_clock_tree(4, 4, period=10_000, skew_per_level=0, seed=0)
    params = TimingParams(setup=50, hold=50, hop_data_delay=1000)
    assert check_timing(tree, params) == []


def test_hold_violation_inequality():
    # skew difference 1.2 ns, hop delay 1 ns, hold 0.3 ns: 1.0 < 0.3 + 1.2.
    tree = ClockTree(
        width=2,
        height=1,
        period=10_000,
        skew_per_level=0,
        seed=0,
        levels=1,
        leaf_skews=np.array([[0, 1200]], dtype=np.int64),
        wire_offsets=np.array([0, 0, 1200], dtype=np.int64),
        max_abs_skew=1200,
    )
    params = TimingParams(setup=100, hold=300, hop_data_delay=1000)
    kinds = {(v.kind, v.src, v.dst) for v in check_timing(tree, params)}
    assert ("hold", Coord(0, 0), Coord(1, 0)) in kinds
    # the reverse direction has -1.2 ns skew and holds fine
    assert ("hold", Coord(1, 0), Coord(0, 0)) not in kinds


def test_setup_violation_when_period_too_tight():
    tree = ClockTree(
        width=2,
        height=1,
        period=1000,
        skew_per_level=0,
        seed=0,
        levels=1,
        leaf_skews=np.array([[0, -500]], dtype=np.int64),
        wire_offsets=np.array([0, 0, -500], dtype=np.int64),
        max_abs_skew=500,
    )
    params = TimingParams(setup=100, hold=10, hop_data_delay=900)
    kinds = {(v.kind, v.src, v.dst) for v in check_timing(tree, params)}
    assert ("setup", Coord(0, 0), Coord(1, 0)) in kinds


def test_violation_count_monotone_on_small_sweep():
    params = TimingParams(setup=100, hold=100, hop_data_delay=1000)
    counts = []
    for side in range(2, 25):
        tree = build_clock_tree(side, side, 10_000, 20, seed=0)
        counts.append(len(check_timing(tree, params)))
    assert counts == sorted(counts)


# -- clocked grid -----------------------------------------------------------------


def test_idle_grid_clock_floor():
    ledger = TransitionLedger()
    tree = build_clock_tree(4, 4, period=10_000, skew_per_level=0, seed=0)
    grid = SyncGrid(4, 4, tree, ledger=ledger)
    grid.run([], duration_ps=100 * 10_000)
    rep = energy(ledger, start=0)
    assert rep.transitions["data"] == 0
    assert rep.transitions["clock"] == 2 * tree.n_wires * 100
    assert rep.transitions["handshake"] == 0


def test_single_packet_latency_in_cycles():
    ledger = TransitionLedger()
    tree = build_clock_tree(8, 8, period=10_000, skew_per_level=0, seed=0)
    grid = SyncGrid(8, 8, tree, ledger=ledger)
    grid.run([(0, set_cmd(3, 2, load=1, r=7, xc=7))], duration_ps=0)
    assert grid.nodes[Coord(3, 2)].registers[1] == ImpedanceCode(7, 7)
    (pkt_in, t_in), = grid.injected
    (pkt_out, t_out), = grid.deliveries
    hops = 3 + 2 + 1  # x moves + y moves + local consume
    assert t_out - t_in == hops * tree.period


def test_register_state_matches_async_functional_result():
    from metasim.fabric import Grid
    from metasim.kernel import Simulator, UniformJitter

    cmds = [
        (1, set_cmd(2, 2, load=0, r=1, xc=2)),
        (2, set_cmd(0, 3, load=3, r=9, xc=9)),
        (3, set_cmd(2, 2, load=0, r=5, xc=5)),
    ]
    sim = Simulator(11, ledger=TransitionLedger())
    agrid = Grid(sim, 4, 4, protocol="four_phase", delay=UniformJitter(1, 50))
    agrid.assign_addresses()
    for t, pkt in cmds:
        agrid.gateway.inject_at(t, pkt)
    sim.run_to_quiescence()

    tree = build_clock_tree(4, 4, period=10_000, skew_per_level=0, seed=0)
    sgrid = SyncGrid(4, 4, tree, ledger=TransitionLedger())
    sgrid.run(cmds)
    assert sgrid.register_state() == agrid.register_state()


def test_sync_rejects_report_and_out_of_range():
    tree = build_clock_tree(2, 2, period=10_000, skew_per_level=0, seed=0)
    grid = SyncGrid(2, 2, tree, ledger=TransitionLedger())
    with pytest.raises(ValueError):
        grid.inject_at(0, Packet(Opcode.REPORT, Coord(0, 0), Coord(1, 1)))
    from metasim.fabric import DestOutOfRange

    with pytest.raises(DestOutOfRange):
        grid.inject_at(0, set_cmd(5, 0))


def test_skew_must_stay_under_period():
    tree = build_clock_tree(64, 64, period=100, skew_per_level=20, seed=0)
    with pytest.raises(ValueError):
        SyncGrid(64, 64, tree, ledger=TransitionLedger())
