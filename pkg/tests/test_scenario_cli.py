import json
import os

import pytest

from metasim.cli import main
from metasim.run import run_async, run_sync, sweep_async
from metasim.scenario import (
    SchemaError,
    parse_scenario,
    validate_scenario,
)

MINIMAL = json.dumps(
    {
        "grid": {"width": 2, "height": 2},
        "workload": [{"t_ps": 0, "dest": [1, 1], "payload": [1, 2]}],
    }
)


def test_minimal_scenario_gets_documented_defaults():
    scn = parse_scenario(MINIMAL)
    cfg = scn.config
    assert cfg["protocol"] == "four_phase"
    assert cfg["delays"] == {"kind": "fixed", "ps": 50}
    assert cfg["bus_width"] == 16
    assert cfg["setup_margin_ps"] == 10
    assert cfg["metrics"]["bin_width_ps"] == 100
    assert cfg["workload"][0]["load_index"] == 0


def test_dest_outside_grid_names_the_field():
    bad = json.dumps(
        {"grid": {"width": 2, "height": 2}, "workload": [{"dest": [5, 0]}]}
    )
    with pytest.raises(SchemaError) as e:
        parse_scenario(bad)
    assert e.value.path == "workload[0].dest"


def test_unknown_field_rejected_with_path():
    with pytest.raises(SchemaError) as e:
        parse_scenario('{"grdi": {}}')
    assert "grdi" in e.value.path


def test_parse_serialize_round_trip():
    scn = parse_scenario(MINIMAL)
    again = parse_scenario(scn.serialize())
    assert again == scn


def test_round_trip_fuzz_over_schema():
    import random

    rng = random.Random(0)
    for _ in range(200):
        w, h = rng.randint(1, 6), rng.randint(1, 6)
        doc = {
            "grid": {"width": w, "height": h, "loads_per_node": rng.randint(1, 8)},
            "protocol": rng.choice(["four_phase", "two_phase"]),
            "delays": rng.choice(
                [
                    {"kind": "fixed", "ps": rng.randint(1, 200)},
                    {"kind": "uniform", "lo_ps": 1, "hi_ps": rng.randint(1, 300)},
                    {
                        "kind": "scaled",
                        "factor": rng.choice([0.5, 2.0, 3.5]),
                        "base": {"kind": "fixed", "ps": rng.randint(1, 99)},
                    },
                ]
            ),
            "seed": rng.randint(0, 2**31),
            "workload": [
                {
                    "t_ps": rng.randint(0, 10_000),
                    "dest": [rng.randrange(w), rng.randrange(h)],
                    "payload": [rng.randrange(256), rng.randrange(256)],
                }
                for _ in range(rng.randint(0, 4))
            ],
        }
        scn = validate_scenario(doc)
        assert parse_scenario(scn.serialize()) == scn


def test_env_seed_is_lowest_priority(monkeypatch):
    monkeypatch.setenv("METASIM_SEED", "99")
    scn = parse_scenario('{"grid": {"width": 1, "height": 1}}')
    assert scn.seed == 99
    scn = parse_scenario('{"grid": {"width": 1, "height": 1}, "seed": 5}')
    assert scn.seed == 5


# -- run orchestration --------------------------------------------------------------


def test_run_async_delivers_and_reports():
    scn = parse_scenario(MINIMAL)
    rep = run_async(scn)
    assert rep["packets"]["injected"] == 1
    assert rep["packets"]["delivered"] == 1
    assert rep["bundling_violations"] == 0
    assert rep["energy"]["total_j"] > 0
    assert rep["discovery"]["extent"] == [2, 2]


def test_run_async_deterministic_reports():
    scn = parse_scenario(MINIMAL)
    a = json.dumps({k: v for k, v in run_async(scn).items() if not k.startswith("_")},
                   sort_keys=True)
    b = json.dumps({k: v for k, v in run_async(scn).items() if not k.startswith("_")},
                   sort_keys=True)
    assert a == b


def test_run_sync_requires_sync_section():
    scn = parse_scenario(MINIMAL)
    with pytest.raises(ValueError):
        run_sync(scn)


def test_paired_run_and_comparison(tmp_path):
    doc = {
        "grid": {"width": 4, "height": 4},
        "discovery": False,
        "duration_ps": 1_000_000,
        "sync": {"period_ps": 10_000},
        "workload": [{"t_ps": 0, "dest": [2, 3], "payload": [9, 9]}],
    }
    scn = validate_scenario(doc)
    a = run_async(scn)
    s = run_sync(scn)
    assert a["_register_state"] == s["_register_state"]
    from metasim.metrics import compare_reports

    cmp_rec = compare_reports(a, s)
    assert cmp_rec["energy_ratio_async_over_sync"] < 1.0


def test_sweep_parallel_matches_serial():
    scn = parse_scenario(MINIMAL)
    serial = sweep_async(scn, [1, 2, 3], jobs=1)
    parallel = sweep_async(scn, [1, 2, 3], jobs=2)
    assert serial == parallel
    assert all(r["delivered"] == 1 for r in serial)


# -- CLI ---------------------------------------------------------------------------


def write_scenario(tmp_path, doc):
    p = tmp_path / "scn.json"
    p.write_text(json.dumps(doc))
    return str(p)


def test_cli_run_writes_reports(tmp_path, capsys):
    path = write_scenario(
        tmp_path,
        {
            "grid": {"width": 2, "height": 2},
            "workload": [{"dest": [1, 0], "payload": [7, 7]}],
        },
    )
    out = tmp_path / "out"
    rc = main(["run", "--scenario", path, "--out", str(out), "--format", "csv"])
    assert rc == 0
    report = json.loads((out / "async.json").read_text())
    assert report["packets"]["delivered"] == 1
    assert (out / "async_histogram.csv").read_text().startswith("bin_index")


def test_cli_byte_identical_reruns(tmp_path):
    path = write_scenario(
        tmp_path,
        {
            "grid": {"width": 3, "height": 2},
            "seed": 13,
            "workload": [{"dest": [2, 1], "payload": [1, 1]}],
        },
    )
    out1, out2 = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--scenario", path, "--out", str(out1)]) == 0
    assert main(["run", "--scenario", path, "--out", str(out2)]) == 0
    assert (out1 / "async.json").read_bytes() == (out2 / "async.json").read_bytes()


def test_cli_schema_error_exit_code(tmp_path, capsys):
    path = write_scenario(tmp_path, {"grid": {"width": 0, "height": 1}})
    assert main(["run", "--scenario", path]) == 2
    assert "grid.width" in capsys.readouterr().err


def test_cli_discover(tmp_path):
    path = write_scenario(tmp_path, {"grid": {"width": 3, "height": 3}})
    out = tmp_path / "out"
    assert main(["discover", "--scenario", path, "--out", str(out)]) == 0
    doc = json.loads((out / "discovery.json").read_text())
    assert doc["extent"] == [3, 3]
    assert doc["addresses"]["2,2"] == [2, 2]


def test_cli_compare_requires_sync(tmp_path, capsys):
    path = write_scenario(tmp_path, {"grid": {"width": 2, "height": 2}})
    assert main(["compare", "--scenario", path]) == 2


def test_cli_oracle(tmp_path, capsys):
    path = write_scenario(
        tmp_path,
        {
            "grid": {"width": 2, "height": 2},
            "discovery": False,
            "workload": [{"dest": [1, 1], "payload": [1, 2]}],
        },
    )
    assert main(["oracle", "--scenario", path]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["deadlock_free"] and doc["delivery_complete"] and doc["bundling_clean"]


def test_cli_oracle_bounds(tmp_path, capsys):
    path = write_scenario(tmp_path, {"grid": {"width": 3, "height": 3}})
    assert main(["oracle", "--scenario", path]) == 2
    assert "bounded" in capsys.readouterr().err


def test_cli_size(capsys):
    assert main(["size", "--frequency-hz", "2.4e9"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["min_atoms_per_side"] == 25
    assert doc["max_atom_pitch_m"] == 0.025


def test_cli_seed_override(tmp_path):
    path = write_scenario(
        tmp_path,
        {
            "grid": {"width": 2, "height": 2},
            "seed": 1,
            "delays": {"kind": "uniform", "lo_ps": 1, "hi_ps": 90},
            "workload": [{"dest": [1, 1], "payload": [3, 3]}],
        },
    )
    o1, o2 = tmp_path / "s1", tmp_path / "s2"
    assert main(["run", "--scenario", path, "--out", str(o1)]) == 0
    assert main(["run", "--scenario", path, "--seed", "2", "--out", str(o2)]) == 0
    a = json.loads((o1 / "async.json").read_text())
    b = json.loads((o2 / "async.json").read_text())
    assert a["seed"] == 1 and b["seed"] == 2
    assert a["end_ps"] != b["end_ps"]


def test_cli_sweep(tmp_path):
    path = write_scenario(
        tmp_path,
        {
            "grid": {"width": 2, "height": 2},
            "seed": 0,
            "delays": {"kind": "uniform", "lo_ps": 1, "hi_ps": 50},
            "workload": [{"dest": [1, 1], "payload": [1, 1]}],
        },
    )
    out = tmp_path / "out"
    rc = main(
        ["run", "--scenario", path, "--out", str(out), "--sweep-seeds", "4", "--jobs", "2"]
    )
    assert rc == 0
    doc = json.loads((out / "sweep.json").read_text())
    assert doc["seeds"] == 4 and doc["all_delivered"]


def test_shipped_scenarios_parse():
    here = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    for name in ("demo_4x4.json", "sparse_compare_16x16.json", "oracle_2x2.json"):
        with open(os.path.join(here, "scenarios", name)) as f:
            parse_scenario(f.read())
