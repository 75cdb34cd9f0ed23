import csv

import numpy as np
import pytest

from d2dcache.cli import ConfigError, load_config, main, validate
from d2dcache.instancegen import read_mobility_csv
from d2dcache.mobility import MobilityModel, PairParams, synthesize_trace, write_trace
from d2dcache.placement import read_placement_csv

SMALL = ["--set", "n_files=10", "--set", "n_instances=1"]


def rows(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# d2dcache ") and "config_sha256=" in lines[0] and "seed=" in lines[0]
    return list(csv.DictReader(lines[1:]))


def run(tmp_path, *args):
    return main([*args, "--out", str(tmp_path)])


def test_analyze_sweep_one_row_per_point_and_strategy(tmp_path):
    cfg = tmp_path / "fig4.cfg"
    cfg.write_text("# small sweep\nn_users = 5, 10, 15\nn_files = 20\nstrategies = greedy, random, popular\n")
    assert run(tmp_path, "analyze", "--config", str(cfg), "--seed", "3") == 0
    got = rows(tmp_path / "analyze.csv")
    assert len(got) == 3 * 3
    assert {(r["n_users"], r["strategy"]) for r in got} == {
        (n, s) for n in ("5", "10", "15") for s in ("greedy", "random", "popular")}
    assert all(0.0 <= float(r["ratio"]) <= 1.0 for r in got)


def test_analyze_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    args = ["analyze", "--seed", "11", "--set", "n_users=5", *SMALL, "--set", "mu=1,2"]
    assert main([*args, "--out", str(a)]) == 0
    assert main([*args, "--out", str(b)]) == 0
    assert (a / "analyze.csv").read_bytes() == (b / "analyze.csv").read_bytes()
    assert main([*args[:2], "12", *args[3:], "--out", str(b)]) == 0
    assert (a / "analyze.csv").read_bytes() != (b / "analyze.csv").read_bytes()


def test_empty_strategy_list_is_an_error(tmp_path, capsys):
    assert run(tmp_path, "analyze", "--set", "strategies=") == 1
    assert "at least one strategy" in capsys.readouterr().err
    assert not (tmp_path / "analyze.csv").exists()


def test_unknown_key_rejected_with_location(tmp_path, capsys):
    cfg = tmp_path / "x.cfg"
    cfg.write_text("n_files = 10\nbogus = 3\n")
    assert run(tmp_path, "analyze", "--config", str(cfg)) == 1
    assert f"{cfg}:2" in capsys.readouterr().err


def test_bad_value_reported(tmp_path, capsys):
    assert run(tmp_path, "analyze", "--set", "n_files=ten") == 1
    assert "n_files" in capsys.readouterr().err


def test_ignore_baseline_is_flagged_in_metadata(tmp_path):
    assert run(tmp_path, "analyze", "--set", "n_users=3", *SMALL, "--set", "strategies=greedy_ignore") == 0
    assert "note=greedy_ignore" in (tmp_path / "analyze.csv").read_text().splitlines()[0]
    assert run(tmp_path, "analyze", "--set", "n_users=3", *SMALL, "--set", "strategies=greedy") == 0
    assert "note=" not in (tmp_path / "analyze.csv").read_text().splitlines()[0]


def test_simulate_requires_requests(tmp_path, capsys):
    assert run(tmp_path, "simulate", "--set", "n_requests=0") == 1
    assert "n_requests" in capsys.readouterr().err


def test_simulate_union_mu_sweep(tmp_path):
    args = ["simulate", "--set", "n_users=6", "--set", "n_files=15", "--set", "deadline=120",
            "--set", "file_size=100", "--set", "strategies=random", "--set", "mu=0.5,2,8",
            "--set", "n_requests=1500"]
    assert run(tmp_path, *args) == 0
    got = rows(tmp_path / "simulate.csv")
    assert [r["mu"] for r in got] == ["0.5", "2", "8"]
    sim = [float(r["simulated"]) for r in got]
    se = [float(r["stderr"]) for r in got]
    for k in range(2):
        assert sim[k + 1] >= sim[k] - 2 * np.hypot(se[k], se[k + 1])
    ana = [float(r["analytic"]) for r in got]
    assert ana[0] < ana[1] < ana[2]


def test_simulate_resource_limited_on_trace(tmp_path):
    m = MobilityModel.uniform(4, 1 / 60, 1 / 300)
    trace = synthesize_trace(m, 6e4, np.random.default_rng(0))
    tpath = tmp_path / "trace.txt"
    write_trace(trace, tpath)
    lo, hi = trace.span
    args = ["simulate", "--set", "source=trace", "--set", f"trace={tpath}",
            "--set", f"fit_window={lo},{hi}", "--set", f"eval_window={lo},{hi}",
            "--set", "mode=resource_limited", "--set", "blocks=15", "--set", "n_files=6",
            "--set", "strategies=greedy,popular"]
    assert run(tmp_path, *args) == 0
    got = rows(tmp_path / "simulate.csv")
    assert [r["strategy"] for r in got] == ["greedy", "popular"]
    assert all(r["mode"] == "resource_limited" and r["n_users"] == "4" for r in got)


def test_place_writes_placements_and_gain_trace(tmp_path):
    args = ["place", "--set", "n_users=5", "--set", "n_files=12", "--set", "cache_size=900",
            "--set", "strategies=greedy,popular"]
    assert run(tmp_path, *args) == 0
    g = read_placement_csv(tmp_path / "placement_greedy.csv", 5, 12)
    assert np.all(g.sum(axis=1) == 3)
    gains = rows(tmp_path / "gains_greedy.csv")
    assert len(gains) == 15 and list(gains[0]) == ["iteration", "user", "file", "gain"]
    p = read_placement_csv(tmp_path / "placement_popular.csv", 5, 12)
    assert all(np.array_equal(p[0], p[i]) for i in range(5))
    assert not (tmp_path / "gains_popular.csv").exists()


def test_place_optimal_dominates_greedy(tmp_path):
    args = ["place", "--set", "n_users=4", "--set", "n_files=6", "--set", "cache_size=600",
            "--set", "strategies=greedy,optimal"]
    assert run(tmp_path, *args) == 0
    assert run(tmp_path / "an", "analyze", *args[1:]) == 0
    ratio = {r["strategy"]: float(r["ratio"]) for r in rows(tmp_path / "an" / "analyze.csv")}
    assert ratio["optimal"] >= ratio["greedy"] - 1e-9


def test_place_optimal_beyond_budget_refused(tmp_path, capsys):
    args = ["place", "--set", "n_users=8", "--set", "n_files=30", "--set", "strategies=optimal"]
    assert run(tmp_path, *args) == 1
    assert "optimal_budget=10000000" in capsys.readouterr().err


def test_place_rejects_sweeps(tmp_path, capsys):
    assert run(tmp_path, "place", "--set", "n_users=3,4") == 1
    assert "single value" in capsys.readouterr().err


def test_fit_round_trip(tmp_path):
    pairs = {(0, 1): PairParams(1 / 50, 1 / 200), (1, 2): PairParams(1 / 80, 1 / 150)}
    m = MobilityModel.from_pairs(3, pairs)
    trace = synthesize_trace(m, 1e6, np.random.default_rng(1))
    tpath = tmp_path / "trace.txt"
    write_trace(trace, tpath)
    assert run(tmp_path, "fit", "--set", f"trace={tpath}", "--set", "fit_window=0,1000000") == 0
    fitted = read_mobility_csv(tmp_path / "mobility.csv", n_users=3)
    for (a, b), p in pairs.items():
        assert fitted.contact_rate[a, b] == pytest.approx(p.contact_rate, rel=0.05)
        assert fitted.intercontact_rate[a, b] == pytest.approx(p.intercontact_rate, rel=0.05)
    assert fitted.pair(0, 2).is_no_contact
    assert rows(tmp_path / "diagnostics.csv") == []


def test_fit_diagnostics_list_pairs_never_apart(tmp_path):
    tpath = tmp_path / "trace.txt"
    tpath.write_text("0 1 0 100\n0 2 10 20\n")
    assert run(tmp_path, "fit", "--set", f"trace={tpath}", "--set", "fit_window=0,100") == 0
    assert rows(tmp_path / "diagnostics.csv") == [{"user_a": "0", "user_b": "1", "reason": "no_gap_in_window"}]


def test_fit_comment_only_trace(tmp_path, capsys):
    tpath = tmp_path / "trace.txt"
    tpath.write_text("# a\n# b\n")
    assert run(tmp_path, "fit", "--set", f"trace={tpath}") == 1
    assert "no records" in capsys.readouterr().err


def test_fit_malformed_line_17(tmp_path, capsys):
    tpath = tmp_path / "trace.txt"
    lines = ["# header"] + [f"0 1 {10 * k} {10 * k + 5}" for k in range(15)] + ["0 1 oops 3"]
    tpath.write_text("\n".join(lines) + "\n")
    assert run(tmp_path, "fit", "--set", f"trace={tpath}") == 1
    assert "line 17" in capsys.readouterr().err


def test_fit_requires_trace(tmp_path, capsys):
    assert run(tmp_path, "fit") == 1
    assert "trace" in capsys.readouterr().err


def test_bad_seed_exits_nonzero(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run(tmp_path, "analyze", "--seed", "-1")
    assert exc.value.code != 0


def test_load_config_precedence(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("n_files = 7   # trailing comment\nrate = 2\n")
    c = load_config(cfg, ["rate=3"])
    assert c["n_files"] == 7 and c["rate"] == 3.0 and c["deadline"] == 300.0
    with pytest.raises(ConfigError, match="key = value"):
        load_config(None, ["rate"])
    c["mode"] = "other"
    with pytest.raises(ConfigError, match="mode"):
        validate(c, "simulate")
