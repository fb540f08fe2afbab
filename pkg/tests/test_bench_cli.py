import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pdpsolve.bench import COLUMNS, ExperimentConfig, emit_table, parse_csv, run_bench, run_point
from pdpsolve.cli import main
from pdpsolve.errors import ConfigurationError

NUMERIC = [c for c in COLUMNS if c != "wall_time"]


# config -----------------------------------------------------------------------------------

def test_config_roundtrip(tmp_path):
    cfg = ExperimentConfig(methods=("pdp", "minres_q1"), nus=(1e-2, 1e-3), n_cells=(8,), seed=4)
    path = tmp_path / "c.json"
    path.write_text(json.dumps(cfg.to_dict()))
    assert ExperimentConfig.from_json(path) == cfg
    assert len(cfg.points()) == 4


@pytest.mark.parametrize("bad", [
    {"methods": []},
    {"methods": ["cg"]},
    {"nus": [0.0]},
    {"lambdas": [2.0]},
    {"n_cells": [6]},
    {"problem": {"generator": "elasticity"}},
    {"problem": {"generator": "poisson", "target": "nope"}},
    {"problem": {"generator": "poisson", "mesh": 3}},
    {"frobnicate": 1},
])
def test_config_invalid(bad):
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_dict(bad)


def test_config_bad_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_json(p)
    p.write_text("[1, 2]")
    with pytest.raises(ConfigurationError):
        ExperimentConfig.from_json(p)


# runs ----------------------------------------------------------------------------------

def test_zero_data_row():
    cfg = ExperimentConfig(problem={"generator": "poisson", "target": "zero"}, n_cells=(8,))
    rows = run_bench(cfg)
    assert len(rows) == 1
    assert rows[0]["outer_iters"] <= 1 and not rows[0]["failed"]


def test_deterministic_and_threads():
    cfg = ExperimentConfig(methods=("pdp", "ppcg_exact", "minres_q1", "minres_q2"), nus=(1e-2, 1e-4),
                           n_cells=(8,))
    a, b, c = run_bench(cfg), run_bench(cfg), run_bench(cfg, threads=4)
    assert [r["index"] for r in c] == list(range(len(c)))
    strip = lambda rows: [{k: r[k] for k in NUMERIC} for r in rows]  # noqa: E731
    assert strip(a) == strip(b) == strip(c)
    assert emit_table(a, columns=NUMERIC) == emit_table(c, columns=NUMERIC)


def test_counter_conservation():
    cfg = ExperimentConfig(methods=("pdp", "minres_q2"), nus=(1e-3,), n_cells=(16,))
    for r in run_bench(cfg):
        assert r["q_a_total"] == sum(r[f"q_a_{k}"] for k in ("inner", "primal", "dual", "spectrum"))
        assert r["q_a_total"] > 0


def test_nu_trend():
    nus = (1e-1, 1e-2, 1e-3, 1e-4)
    cfg = ExperimentConfig(nus=nus, n_cells=(16,))
    rows = run_bench(cfg)
    outer = [r["outer_iters"] for r in rows]
    assert [r["nu"] for r in rows] == list(nus)
    assert all(a <= b for a, b in zip(outer, outer[1:]))
    assert all(r["converged"] for r in rows)


def test_failure_becomes_row():
    cfg = ExperimentConfig(methods=("minres_q1",), max_iter=2, n_cells=(8,))
    rows = run_bench(cfg)
    assert rows[0]["failed"] == 1 and rows[0]["message"]


# tables ----------------------------------------------------------------------------------

def test_emit_empty():
    assert emit_table([]) == ",".join(COLUMNS) + "\n"


def test_emit_one_row():
    cfg = ExperimentConfig(n_cells=(8,))
    row, _ = run_point(cfg, 0, "pdp", 8, 1e-3, 1e-2)
    text = emit_table([row])
    assert len(text.splitlines()) == 2


def test_emit_markdown():
    cfg = ExperimentConfig(methods=("pdp", "minres_q2"), nus=(1e-2, 1e-3), n_cells=(8,))
    md = emit_table(run_bench(cfg), "markdown")
    lines = md.splitlines()
    assert lines[0].startswith("| method") and "ν=0.01" in lines[0]
    assert len(lines) == 4
    with pytest.raises(ConfigurationError):
        emit_table([], "latex")


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)
row_strategy = st.fixed_dictionaries({
    k: (st.integers(-10**9, 10**9) if t is int else finite if t is float
        else st.text(st.characters(blacklist_categories=("Cs", "Cc")), max_size=20))
    for k, t in COLUMNS.items()
})


@settings(max_examples=60, deadline=None)
@given(st.lists(row_strategy, max_size=5))
def test_csv_roundtrip(rows):
    back = parse_csv(emit_table(rows))
    assert len(back) == len(rows)
    for a, b in zip(rows, back):
        for k, t in COLUMNS.items():
            if t is float:
                assert a[k] == b[k] or (math.isnan(a[k]) and math.isnan(b[k]))
            else:
                assert a[k] == b[k]


# CLI --------------------------------------------------------------------------------------

def test_cli_solve(capsys):
    assert main(["solve", "--n-cells", "8", "--nu", "1e-3"]) == 0
    out = capsys.readouterr().out
    assert "k,increment_b_norm" in out and "outer_iters" in out


def test_cli_gen_then_solve(tmp_path, capsys):
    d = tmp_path / "prob"
    assert main(["gen", "--n-cells", "8", "--nu", "1e-2", "--out", str(d)]) == 0
    assert (d / "A.mtx").exists()
    out = tmp_path / "r.csv"
    assert main(["solve", "--problem", str(d), "--method", "ppcg_exact", "--out", str(out)]) == 0
    rows = parse_csv(out.read_text())
    assert rows[0]["n_cells"] == 8 and rows[0]["nu"] == 1e-2 and rows[0]["converged"] == 1


def test_cli_bench_threads(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"methods": ["pdp", "minres_q2"], "nus": [1e-2, 1e-3], "n_cells": [8]}))
    outs = []
    for t in ("1", "3"):
        o = tmp_path / f"o{t}.csv"
        assert main(["bench", "--config", str(cfg), "--threads", t, "--out", str(o)]) == 0
        outs.append(emit_table(parse_csv(o.read_text()), columns=NUMERIC))
    assert outs[0] == outs[1]


def test_cli_bench_markdown(capsys):
    assert main(["bench", "--format", "markdown"]) == 0
    assert capsys.readouterr().out.startswith("| method")


def test_cli_config_error(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"methods": ["bogus"]}))
    assert main(["bench", "--config", str(cfg)]) == 3
    assert main(["bench", "--config", str(tmp_path / "missing.json")]) == 3
    assert main(["solve", "--n-cells", "6"]) == 3
    assert "config error" in capsys.readouterr().err


def test_cli_solver_failure(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"methods": ["minres_q1"], "max_iter": 2, "n_cells": [8]}))
    assert main(["bench", "--config", str(cfg)]) == 2


def test_cli_verify(tmp_path, capsys):
    out = tmp_path / "v.txt"
    assert main(["verify", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert len(lines) == 11 and all(l.startswith("[PASS]") for l in lines)
    assert "11/11 criteria passed" in capsys.readouterr().out
