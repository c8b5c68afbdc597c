import json
import math

import numpy as np
import pytest

from snconic.metrics_bench import (
    COLUMNS,
    MethodSpec,
    MetricRow,
    ReplicationPlan,
    compute_metrics,
    read_table,
    run_replications,
    table_preset,
    write_outputs,
    write_table,
)
from snconic.simgen import SimConfig, generate

P = 6


def _X(rng, n=10, p=P):
    return rng.standard_normal((n, p))


def test_perfect_estimates_give_zero_metrics(rng):
    b0 = np.array([1.0, 0, 0, 2.0, 0, 0])
    X = [_X(rng) for _ in range(3)]
    row = compute_metrics([b0.copy()] * 3, b0, X, "m")
    for c in ("bias", "rmse", "prb", "l2", "l1", "pr", "fp", "fn"):
        assert getattr(row, c) == 0.0
    assert math.isnan(row.time_s) and row.reps == 3


def test_single_rep_hand_arithmetic(rng):
    b0 = np.zeros(P)
    e = np.array([3.0, -4.0, 0, 0, 0, 0])
    row = compute_metrics([b0 + e], b0, [_X(rng)])
    assert row.bias == row.rmse == row.l2 == 5.0
    assert row.l1 == 7.0
    assert row.fp == 2.0 and row.fn == 0.0


def test_opposite_errors_cancel_in_bias(rng):
    b0 = np.ones(P)
    e = rng.standard_normal(P)
    X = _X(rng)
    row = compute_metrics([b0 + e, b0 - e], b0, [X, X])
    assert row.bias == pytest.approx(0.0, abs=1e-15)
    assert row.l2 == pytest.approx(np.linalg.norm(e))
    assert row.prb == pytest.approx(0.0, abs=1e-15)


def test_prediction_metrics_use_design(rng):
    b0 = np.zeros(P)
    e = rng.standard_normal(P)
    X = _X(rng, n=16)
    row = compute_metrics([b0 + e], b0, [X])
    assert row.pr == pytest.approx(np.linalg.norm(X @ e) / 4.0)
    assert row.prb == pytest.approx(row.pr)


def test_support_uses_truncation(rng):
    b0 = np.array([1.0, 0, 0, 0, 0, 0])
    est = np.array([0.0, 5e-8, 2e-7, 0, 0, 0])
    row = compute_metrics([est], b0, [_X(rng)])
    assert row.fn == 1.0 and row.fp == 1.0


def test_length_mismatch(rng):
    with pytest.raises(ValueError):
        compute_metrics([np.zeros(P)] * 2, np.zeros(P), [_X(rng)])
    with pytest.raises(ValueError):
        compute_metrics([], np.zeros(P), [])
    with pytest.raises(ValueError):
        compute_metrics([np.zeros(P + 1)], np.zeros(P), [_X(rng)])


def _row(**kw):
    base = dict(method="sn", n=300, p=100, bias=0.1234567, rmse=0.5, prb=0.25, l2=0.7,
                l1=2.0, pr=0.75, fp=3.0, fn=0.0, time_s=1.5)
    base.update(kw)
    return MetricRow(**base)


def test_csv_one_row(tmp_path):
    path = tmp_path / "rows.csv"
    write_table([_row()], path)
    raw = path.read_bytes()
    assert b"\r\n" not in raw
    lines = raw.decode().splitlines()
    assert len(lines) == 2
    assert lines[0] == ",".join(COLUMNS)
    assert lines[1].startswith("sn,300,100,0.123457,")


def test_csv_round_trip(tmp_path):
    rows = [_row(), _row(method="lasso", l2=0.954321)]
    write_table(rows, tmp_path / "r.csv")
    back = read_table(tmp_path / "r.csv")
    for a, b in zip(rows, back):
        assert a.method == b.method and (a.n, a.p) == (b.n, b.p)
        for c in COLUMNS[3:]:
            assert getattr(b, c) == pytest.approx(getattr(a, c), abs=1e-6)


def test_markdown_table(tmp_path):
    write_table([_row(failures=2)], tmp_path / "r.md", format="md")
    lines = (tmp_path / "r.md").read_text().splitlines()
    assert lines[0].startswith("| method | n | p |")
    assert "0.123457" in lines[2] and lines[2].rstrip().endswith("| 2 |")


def test_write_table_errors(tmp_path):
    with pytest.raises(ValueError):
        write_table([], tmp_path / "x.csv")
    with pytest.raises(ValueError):
        write_table([_row()], tmp_path / "x.csv", format="xls")


def _plan(reps=3, parallelism=1, **kw):
    sim = SimConfig(n=40, p=8, **kw)
    methods = (
        MethodSpec("sn", "sn-conic", params={"tau_scale": 0.5}),
        MethodSpec("sn thr", "sn-conic", output="thresholded", params={"tau_scale": 0.5}),
        MethodSpec("sn refit", "sn-conic", output="refit", params={"tau_scale": 0.5}),
        MethodSpec("conic", "brt-conic"),
        MethodSpec("lasso", "lasso"),
        MethodSpec("lasso oracle", "lasso", design="oracle"),
        MethodSpec("dantzig", "dantzig"),
    )
    return ReplicationPlan(sim, methods, reps=reps, master_seed=7, parallelism=parallelism)


def test_replications_pair_methods_on_one_draw():
    plan = _plan()
    rows, per_rep = run_replications(plan, return_records=True)
    assert [r.method for r in rows] == [m.label for m in plan.methods]
    for r, records in enumerate(per_rep):
        sums = {rec["checksum"] for rec in records}
        assert len(sums) == 1
        assert all(rec["rep"] == r and rec["status"] == "optimal" for rec in records)
    assert all(row.failures == 0 and row.reps == 3 for row in rows)


def test_replications_deterministic_and_parallel_independent():
    a = run_replications(_plan(), return_records=True)[1]
    b = run_replications(_plan(), return_records=True)[1]
    c = run_replications(_plan(parallelism=2), return_records=True)[1]
    assert a == b == c


def test_metrics_recomputed_from_persisted_reps(tmp_path):
    plan = _plan(regime="mar")
    rows, per_rep = run_replications(plan, return_records=True)
    write_outputs(plan, rows, per_rep, tmp_path)
    assert (tmp_path / "rows.md").exists() and (tmp_path / "plan.json").exists()
    back = ReplicationPlan.from_dict(json.loads((tmp_path / "plan.json").read_text()))
    assert back.to_dict() == plan.to_dict()
    table = {r.method: r for r in read_table(tmp_path / "rows.csv")}
    for k, spec in enumerate(plan.methods):
        ests, truths, X = [], [], []
        for r in range(plan.reps):
            lines = (tmp_path / "reps" / f"rep_{r}.jsonl").read_text().splitlines()
            rec = json.loads(lines[k])
            draw = generate(plan.sim, r)
            ests.append(np.array(rec["beta"]))
            truths.append(draw.beta0)
            X.append(draw.oracle_x)
        ref = compute_metrics(ests, truths, X, spec.label)
        for c in ("bias", "rmse", "prb", "l2", "l1", "pr", "fp", "fn"):
            assert getattr(table[spec.label], c) == pytest.approx(getattr(ref, c), abs=1e-6)


def test_timing_opt_in():
    plan = ReplicationPlan(SimConfig(n=30, p=6), (MethodSpec("lasso", "lasso"),), reps=2,
                           timing=True)
    row = run_replications(plan)[0]
    assert row.time_s >= 0
    plan = ReplicationPlan(SimConfig(n=30, p=6), (MethodSpec("lasso", "lasso"),), reps=2)
    assert math.isnan(run_replications(plan)[0].time_s)


def test_oracle_lasso_noiseless_plan():
    sim = SimConfig(n=60, p=8, sigma_xi=0.0, sigma_w=0.0)
    plan = ReplicationPlan(sim, (MethodSpec("o", "lasso", "oracle", params={"lam": 1e-7}),),
                           reps=1)
    assert run_replications(plan)[0].l2 <= 1e-3


def test_plan_validation():
    sim = SimConfig(n=30, p=6)
    with pytest.raises(ValueError):
        ReplicationPlan(sim, (MethodSpec("a", "lasso"),), reps=0)
    with pytest.raises(ValueError):
        ReplicationPlan(sim, ())
    with pytest.raises(ValueError):
        ReplicationPlan(sim, (MethodSpec("a", "lasso"), MethodSpec("a", "dantzig")))
    with pytest.raises(ValueError):
        MethodSpec("a", "ridge")
    with pytest.raises(ValueError):
        MethodSpec("a", "lasso", output="refit")
    plan = ReplicationPlan(sim, (MethodSpec("a", "lasso"),), master_seed=99)
    assert plan.sim.seed == 99


def test_table_presets():
    plan = table_preset("t1", p=10, reps=5, master_seed=3)
    assert plan.sim.n == 300 and plan.sim.p == 10 and plan.reps == 5
    assert [m.label for m in plan.methods] == ["sn-conic c=0.5", "conic", "lasso biased",
                                               "lasso oracle"]
    s2 = table_preset("s2", methods=["sn-conic c=1", "sn-conic c=1 refitted"])
    assert [m.output for m in s2.methods] == ["raw", "refit"]
    assert table_preset("s6").sim.regime.value == "mar"
    with pytest.raises(ValueError):
        table_preset("t9")
    with pytest.raises(ValueError):
        table_preset("t1", methods=["nope"])
