"""Scenario execution: build, discover, inject, measure, report.

A run has two phases. Discovery (or direct address assignment) brings the
fabric up; the metrics window then opens, the workload executes, and the
fabric drains to quiescence. Reports cover the workload window, so an
idle asynchronous fabric really does score zero transitions.
"""

from __future__ import annotations

import multiprocessing
from typing import Optional

from .codec import Coord, ImpedanceCode, Opcode, Packet
from .fabric import Grid
from .kernel import Simulator
from .metrics import (
    EnergyParams,
    TransitionLedger,
    emission_profile,
    energy,
    latency_report,
)
from .scenario import Scenario
from .sync_baseline import SyncGrid, TimingParams, build_clock_tree, check_timing


def workload_packets(scn: Scenario) -> list[tuple[int, str, Packet]]:
    """Scenario workload as (relative time, kind, packet) triples."""
    out = []
    for cmd in scn.config["workload"]:
        if cmd["opcode"] == "SET_IMPEDANCE":
            pkt = Packet(
                Opcode.SET_IMPEDANCE,
                Coord(*cmd["dest"]),
                Coord(0, 0),
                cmd["load_index"],
                ImpedanceCode(*cmd["payload"]).as_payload(),
            )
            out.append((cmd["t_ps"], "inject", pkt))
        else:
            pkt = Packet(
                Opcode.REPORT, Coord(0, 0), Coord(*cmd["src"]), payload=cmd["payload"]
            )
            out.append((cmd["t_ps"], "report", pkt))
    return out


def _energy_params(scn: Scenario) -> EnergyParams:
    m = scn.config["metrics"]
    return EnergyParams(c_eff=m["c_eff_f"], vdd=m["vdd_v"])


def run_async(scn: Scenario, seed: Optional[int] = None) -> dict:
    """Run the handshake fabric for one scenario; returns the report dict."""
    seed = scn.seed if seed is None else seed
    ledger = TransitionLedger()
    sim = Simulator(seed, ledger)
    grid = Grid(
        sim,
        scn.width,
        scn.height,
        protocol=scn.config["protocol"],
        delay=scn.delay_model(),
        bus_width=scn.config["bus_width"],
        loads_per_node=scn.config["grid"]["loads_per_node"],
        setup_margin=scn.config["setup_margin_ps"],
        node_delay=scn.config["node_delay_ps"],
    )
    discovery_info = None
    if scn.config["discovery"]:
        res = grid.run_discovery()
        discovery_info = {
            "extent": list(res.extent),
            "announced": res.announced,
            "events": res.events,
            "time_ps": res.time,
        }
    else:
        grid.assign_addresses()
    t0 = sim.now
    ledger.mark_workload_start(t0)
    for t_rel, kind, pkt in workload_packets(scn):
        if kind == "inject":
            grid.gateway.inject_at(t0 + t_rel, pkt)
        else:
            src_node = grid.nodes[pkt.src]
            sim.at(t0 + t_rel, src_node.report_event, pkt.payload)
    end_time, events = sim.run_to_quiescence()
    window_end = max(end_time, t0 + scn.config["duration_ps"])

    injections = grid.gateway.injected + grid.report_injections
    params = _energy_params(scn)
    e = energy(ledger, params, start=t0)
    hist = emission_profile(
        ledger, scn.config["metrics"]["bin_width_ps"], start=t0, end=window_end
    )
    lat = latency_report(injections, grid.deliveries)
    violations = grid.bundling_violations(ledger)
    return {
        "fabric": "async",
        "seed": seed,
        "scenario": scn.config,
        "discovery": discovery_info,
        "workload_start_ps": t0,
        "end_ps": window_end,
        "events": events,
        "quiescent": True,
        "packets": {
            "injected": len(injections),
            "delivered": len(grid.deliveries),
            "reports_collected": len(grid.gateway.collected_reports),
        },
        "energy": {
            "total_j": e.total_j,
            "by_class_j": e.by_class_j,
            "transitions": e.transitions,
            "suppressed": e.suppressed,
        },
        "emission": {
            "bin_width_ps": hist.bin_width,
            "bins": hist.n_bins,
            "peak": hist.peak,
            "total": hist.total,
            "peak_to_average": hist.peak_to_average,
        },
        "latency_ps": lat.as_dict(),
        "bundling_violations": len(violations),
        "clock_power_share": 0.0,
        "_histogram": hist,
        "_register_state": grid.register_state(),
    }


def run_sync(scn: Scenario, seed: Optional[int] = None) -> dict:
    """Run the clocked baseline for the same scenario."""
    if scn.config["sync"] is None:
        raise ValueError("scenario has no sync section")
    seed = scn.seed if seed is None else seed
    sync_cfg = scn.config["sync"]
    ledger = TransitionLedger()
    tree = build_clock_tree(
        scn.width,
        scn.height,
        sync_cfg["period_ps"],
        sync_cfg["skew_per_level_ps"],
        seed,
    )
    grid = SyncGrid(
        scn.width,
        scn.height,
        tree,
        loads_per_node=scn.config["grid"]["loads_per_node"],
        ledger=ledger,
    )
    commands = []
    for t_rel, kind, pkt in workload_packets(scn):
        if kind != "inject":
            raise ValueError("the clocked baseline runs SET_IMPEDANCE workloads")
        commands.append((t_rel, pkt))
    grid.run(commands, duration_ps=scn.config["duration_ps"])
    end_time = max(ledger.end_time(), scn.config["duration_ps"])

    params = _energy_params(scn)
    e = energy(ledger, params, start=0)
    hist = emission_profile(
        ledger, scn.config["metrics"]["bin_width_ps"], start=0, end=end_time
    )
    lat = latency_report(grid.injected, grid.deliveries)
    timing = check_timing(
        tree,
        TimingParams(
            setup=sync_cfg["setup_ps"],
            hold=sync_cfg["hold_ps"],
            hop_data_delay=sync_cfg["hop_delay_ps"],
        ),
    )
    clock_j = e.by_class_j["clock"]
    return {
        "fabric": "sync",
        "seed": seed,
        "scenario": scn.config,
        "workload_start_ps": 0,
        "end_ps": end_time,
        "cycles": grid.cycles_run,
        "clock_wires": tree.n_wires,
        "packets": {
            "injected": len(grid.injected),
            "delivered": len(grid.deliveries),
            "reports_collected": 0,
        },
        "energy": {
            "total_j": e.total_j,
            "by_class_j": e.by_class_j,
            "transitions": e.transitions,
            "suppressed": e.suppressed,
        },
        "emission": {
            "bin_width_ps": hist.bin_width,
            "bins": hist.n_bins,
            "peak": hist.peak,
            "total": hist.total,
            "peak_to_average": hist.peak_to_average,
        },
        "latency_ps": lat.as_dict(),
        "timing_violations": len(timing),
        "clock_power_share": (clock_j / e.total_j) if e.total_j > 0 else 0.0,
        "_histogram": hist,
        "_register_state": grid.register_state(),
    }


def strip_private(report: dict) -> dict:
    """Drop in-memory-only fields before serializing a report."""
    return {k: v for k, v in report.items() if not k.startswith("_")}


# --------------------------------------------------------------------------
# Seed sweeps
# --------------------------------------------------------------------------

_SWEEP_SCENARIO: Optional[Scenario] = None


def _sweep_init(config: dict):
    global _SWEEP_SCENARIO
    _SWEEP_SCENARIO = Scenario(config)


def _sweep_one(seed: int) -> dict:
    rep = run_async(_SWEEP_SCENARIO, seed=seed)
    return {
        "seed": seed,
        "injected": rep["packets"]["injected"],
        "delivered": rep["packets"]["delivered"],
        "bundling_violations": rep["bundling_violations"],
        "quiescent": rep["quiescent"],
        "end_ps": rep["end_ps"],
    }


def sweep_async(scn: Scenario, seeds: list[int], jobs: int = 1) -> list[dict]:
    """Run independent per-seed instances, optionally in parallel.

    Results come back ordered by seed regardless of completion order, so
    sweep output is deterministic.
    """
    if jobs <= 1 or len(seeds) <= 1:
        _sweep_init(scn.config)
        return [_sweep_one(s) for s in seeds]
    ctx = multiprocessing.get_context("fork")
    with ctx.Pool(jobs, initializer=_sweep_init, initargs=(scn.config,)) as pool:
        results = pool.map(_sweep_one, seeds)
    return sorted(results, key=lambda r: r["seed"])
