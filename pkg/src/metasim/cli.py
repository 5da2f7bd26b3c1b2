"""Command-line front door.

Subcommands: run (execute a scenario, paired with the clocked baseline
when the scenario carries a sync section), discover (address discovery
only), compare (paired run, sync section required), oracle (exhaustive
small-instance exploration), size (tile sizing arithmetic).

Exit codes: 0 success, 2 schema error, 3 simulation error (deadlock,
budget, incomplete discovery), 4 oracle property failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .codec import size_grid
from .kernel import SimError
from .metrics import compare_reports
from .oracle import exhaustive_oracle
from .run import run_async, run_sync, strip_private, sweep_async, workload_packets
from .scenario import SchemaError, load_scenario

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_SIM = 3
EXIT_ORACLE = 4


def _dump(obj: dict, path=None) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True)
    if path is None:
        print(text)
    else:
        os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write(text + "\n")


def _write_histogram_csv(report: dict, path: str) -> None:
    hist = report["_histogram"]
    with open(path, "w", encoding="utf-8") as f:
        f.write("bin_index,start_ps,count\n")
        for i, count in hist.nonzero_bins():
            f.write(f"{i},{hist.start + i * hist.bin_width},{count}\n")


def _load(args) -> object:
    scn = load_scenario(args.scenario)
    if getattr(args, "seed", None) is not None:
        cfg = dict(scn.config)
        cfg["seed"] = args.seed
        scn = type(scn)(cfg)
    return scn


def cmd_run(args) -> int:
    scn = _load(args)
    if args.sweep_seeds:
        seeds = list(range(scn.seed, scn.seed + args.sweep_seeds))
        results = sweep_async(scn, seeds, jobs=args.jobs)
        out = {
            "sweep": results,
            "seeds": len(seeds),
            "all_delivered": all(r["injected"] == r["delivered"] for r in results),
            "total_bundling_violations": sum(r["bundling_violations"] for r in results),
        }
        _dump(out, os.path.join(args.out, "sweep.json") if args.out else None)
        return EXIT_OK
    async_report = run_async(scn)
    outputs = {"async": async_report}
    if scn.config["sync"] is not None:
        sync_report = run_sync(scn)
        outputs["sync"] = sync_report
        outputs["comparison"] = compare_reports(async_report, sync_report)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        for name, rep in outputs.items():
            body = rep if name == "comparison" else strip_private(rep)
            _dump(body, os.path.join(args.out, f"{name}.json"))
            if args.format == "csv" and name != "comparison":
                _write_histogram_csv(rep, os.path.join(args.out, f"{name}_histogram.csv"))
    else:
        printable = {
            name: (rep if name == "comparison" else strip_private(rep))
            for name, rep in outputs.items()
        }
        _dump(printable)
    return EXIT_OK


def cmd_discover(args) -> int:
    from .fabric import Grid
    from .kernel import Simulator

    scn = _load(args)
    sim = Simulator(scn.seed)
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
    res = grid.run_discovery()
    out = {
        "extent": list(res.extent),
        "announced": res.announced,
        "events": res.events,
        "time_ps": res.time,
        "addresses": {
            f"{c.x},{c.y}": [a.x, a.y] for c, a in sorted(res.address_map.items())
        },
    }
    _dump(out, os.path.join(args.out, "discovery.json") if args.out else None)
    return EXIT_OK


def cmd_compare(args) -> int:
    scn = _load(args)
    if scn.config["sync"] is None:
        raise SchemaError("sync", "compare needs a sync section in the scenario")
    return cmd_run(args)


def cmd_oracle(args) -> int:
    scn = _load(args)
    commands = [
        (t, pkt) for t, kind, pkt in workload_packets(scn) if kind == "inject"
    ]
    if scn.width > 2 or scn.height > 2 or len(commands) > 3:
        raise SchemaError(
            "grid", "exhaustive exploration is bounded to 2x2 grids and 3 commands"
        )
    verdict = exhaustive_oracle(
        scn.width,
        scn.height,
        commands,
        protocol=scn.config["protocol"],
        bus_width=scn.config["bus_width"],
        state_budget=args.budget,
    )
    _dump(
        verdict.as_dict(),
        os.path.join(args.out, "oracle.json") if args.out else None,
    )
    return EXIT_OK if verdict.ok else EXIT_ORACLE


def cmd_size(args) -> int:
    atoms, pitch = size_grid(args.frequency_hz)
    _dump(
        {
            "frequency_hz": args.frequency_hz,
            "min_atoms_per_side": atoms,
            "max_atom_pitch_m": pitch,
        },
        os.path.join(args.out, "size.json") if args.out else None,
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="metasim",
        description="Asynchronous metasurface control-fabric simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def scenario_args(p):
        p.add_argument("--scenario", required=True, help="scenario JSON path")
        p.add_argument("--seed", type=int, default=None, help="override the seed")
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--format", choices=("json", "csv"), default="json")

    p = sub.add_parser("run", help="run a scenario (paired when sync present)")
    scenario_args(p)
    p.add_argument("--sweep-seeds", type=int, default=0, help="run N consecutive seeds")
    p.add_argument("--jobs", type=int, default=1, help="parallel sweep workers")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("discover", help="run address discovery only")
    scenario_args(p)
    p.set_defaults(func=cmd_discover)

    p = sub.add_parser("compare", help="async vs sync paired run")
    scenario_args(p)
    p.set_defaults(func=cmd_run_compare_alias)

    p = sub.add_parser("oracle", help="exhaustive small-instance exploration")
    scenario_args(p)
    p.add_argument("--budget", type=int, default=10_000_000, help="state cap")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("size", help="tile sizing for an operating frequency")
    p.add_argument("--frequency-hz", type=float, required=True)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_size)
    return parser


def cmd_run_compare_alias(args) -> int:
    args.sweep_seeds = 0
    args.jobs = 1
    return cmd_compare(args)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SchemaError as e:
        print(f"schema error: {e}", file=sys.stderr)
        return EXIT_SCHEMA
    except SimError as e:
        print(f"simulation error: {e}", file=sys.stderr)
        return EXIT_SIM


if __name__ == "__main__":
    sys.exit(main())
