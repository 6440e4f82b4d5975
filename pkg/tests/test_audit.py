import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from facebias.audit import (
    AuditError,
    LogEntry,
    PredictionLog,
    accuracy,
    axis,
    disparity_summary,
    expected_age,
    group_slice,
    kinship_slice,
    mae,
)
from oracles import brute_force_cells, demographic_dataset, random_log


def one_hot(j, n=101):
    p = np.zeros(n)
    p[j] = 1
    return p


def test_expected_age_examples():
    assert expected_age(one_hot(30)) == 30.0
    assert expected_age(np.full(101, 1 / 101)) == pytest.approx(50.0, abs=1e-12)
    p = np.zeros(101)
    p[20], p[40] = 0.25, 0.75
    assert expected_age(p) == 35.0
    with pytest.raises(ValueError):
        expected_age(np.full(100, 0.01))


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1), st.floats(0, 1))
def test_expected_age_linear(seed, alpha):
    rng = np.random.default_rng(seed)
    p, q = rng.dirichlet(np.ones(101)), rng.dirichlet(np.ones(101))
    mix = alpha * p + (1 - alpha) * q
    mix /= mix.sum()
    assert expected_age(mix) == pytest.approx(alpha * expected_age(p) + (1 - alpha) * expected_age(q), abs=1e-9)


def test_mae_examples():
    assert mae([1, 2, 3], [1, 2, 3]) == 0
    assert mae([1, 2, 3], [4, 5, 6]) == 3
    assert mae([10, 20], [12, 26]) == 4.0
    for bad in (([], []), ([1], [1, 2])):
        with pytest.raises(ValueError):
            mae(*bad)


@given(st.lists(st.integers(-1000, 1000), min_size=1, max_size=30), st.integers(-10**6, 10**6))
def test_mae_translation(values, c):
    preds = [v + 3 for v in values]
    assert mae([p + c for p in preds], [v + c for v in values]) == mae(preds, values)


def test_accuracy_examples():
    assert accuracy([1, 2], [1, 2]) == 1.0
    assert accuracy([0, 0], [1, 1]) == 0.0
    assert accuracy([1, 2, 3, 4], [1, 2, 3, 0]) == 0.75
    with pytest.raises(ValueError):
        accuracy([], [])


def test_log_entry_validation():
    with pytest.raises(AuditError):
        LogEntry("a", "detection", 1, 1)
    with pytest.raises(AuditError):
        LogEntry("a", "verification", True, True, relationship="X-Y", age_difference=3)
    with pytest.raises(AuditError):
        LogEntry("a", "verification", True, True, relationship="F-S")
    with pytest.raises(AuditError, match="mixed"):
        PredictionLog([LogEntry("a", "classification", 1, 1), LogEntry("b", "age_regression", 1.0, 1.0)])


def test_age_distribution_prediction_decoded():
    e = LogEntry("a", "age_regression", one_hot(42), 40.0)
    assert e.score("mae") == 2.0
    with pytest.raises(AuditError):
        e.score("accuracy")


# --- group_slice -------------------------------------------------------------


@pytest.fixture(scope="module")
def demo():
    return demographic_dataset(300, seed=1)


def test_gender_age_layout(demo):
    table = group_slice(random_log(demo, 0), demo, [axis("gender"), axis("age")])
    assert table.column_labels() == [
        "F: 0-18", "F: 19-30", "F: 31-45", "F: 46-60", "F: 61+",
        "M: 0-18", "M: 19-30", "M: 31-45", "M: 46-60", "M: 61+",
    ]


@pytest.mark.parametrize("seed", range(10))
@pytest.mark.parametrize("metric, task", [("accuracy", "classification"), ("mae", "age_regression")])
def test_matches_filter_then_score(demo, seed, metric, task):
    log = random_log(demo, seed, task)
    table = group_slice(log, demo, [axis("gender"), axis("age")], metric)
    ref = brute_force_cells(log, demo, metric)
    assert set(table.cells) == set(ref)
    for key, (v, n) in ref.items():
        tv, tn = table.cells[key]
        assert tn == n
        assert (tv is None) == (v is None)
        if v is not None:
            assert tv == pytest.approx(v, abs=1e-9)
    weighted = math.fsum(v * n for v, n in table.cells.values() if n) / table.overall[1]
    assert weighted == pytest.approx(table.overall[0], abs=1e-9)
    assert sum(n for _, n in table.cells.values()) == table.overall[1] == len(log)


def test_single_populated_cell_equals_overall(demo):
    rec = demo[0]
    log = PredictionLog([LogEntry(rec.record_id, "classification", 1, 1)])
    table = group_slice(log, demo, [axis("gender"), axis("age")])
    (val,) = table.nonempty().values()
    assert val == table.overall[0] == 1.0
    empties = [v for v, n in table.cells.values() if n == 0]
    assert len(empties) == 9 and all(v is None for v in empties)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.randoms(use_true_random=False))
def test_order_invariance(seed, rnd):
    ds = demographic_dataset(60, seed=seed)
    log = random_log(ds, seed, "age_regression")
    shuffled = list(log)
    rnd.shuffle(shuffled)
    axes = [axis("gender"), axis("age")]
    assert group_slice(log, ds, axes, "mae") == group_slice(PredictionLog(shuffled), ds, axes, "mae")


def test_errors(demo):
    with pytest.raises(AuditError, match="nobody"):
        group_slice(PredictionLog([LogEntry("nobody", "classification", 0, 0)]), demo, [axis("gender")])
    with pytest.raises(AuditError):
        group_slice(random_log(demo, 0), demo, [axis("gender")], "mae")


def test_ita_axis(demo):
    table = group_slice(random_log(demo, 3), demo, [axis("ita")])
    assert [l for _, l in table.axes][0] == ("brown", "tan", "intermediate", "light", "very light")


# --- disparity ---------------------------------------------------------------


def _table_with(values):
    ds = demographic_dataset(1, 0)
    table = group_slice(PredictionLog([LogEntry(ds[0].record_id, "classification", 0, 0)]), ds, [axis("gender")])
    table.cells = {(i,): (v, 0 if v is None else 1) for i, v in enumerate(values)}
    return table


def test_disparity_examples():
    d = disparity_summary(_table_with([0.5, 0.7, 0.9]))
    assert d.gap == pytest.approx(0.4) and d.std == pytest.approx(0.16329932, abs=1e-8)
    assert d.max_cell == (2,) and d.min_cell == (0,)
    d = disparity_summary(_table_with([0.8, 0.8]))
    assert d.gap == 0 and d.std == 0
    assert disparity_summary(_table_with([0.3, None])).gap == 0
    with pytest.raises(AuditError):
        disparity_summary(_table_with([None, None]))


# --- kinship -----------------------------------------------------------------


def _kin_log(n, seed, correct=None):
    rng = np.random.default_rng(seed)
    rels = ("B-B", "S-S", "S-B", "M-S", "M-D", "F-S", "F-D")
    out = []
    for j in range(n):
        t = bool(rng.integers(2))
        p = t if correct or (correct is None and rng.random() < 0.6) else (not t)
        out.append(LogEntry(f"k{j}", "verification", p, t, rels[int(rng.integers(7))], float(rng.integers(0, 41))))
    return PredictionLog(out)


def test_kinship_all_correct():
    kt = kinship_slice(_kin_log(400, 0, correct=True))
    assert all(v == 1.0 for v in kt.table.nonempty().values())


def test_kinship_bin_edges():
    log = PredictionLog(
        [
            LogEntry("a", "verification", True, True, "F-S", 10),
            LogEntry("b", "verification", True, False, "F-S", 11),
            LogEntry("c", "verification", True, True, "F-S", 35),
        ]
    )
    kt = kinship_slice(log)
    assert kt.table.cells[(5, 0)] == (1.0, 1)
    assert kt.table.cells[(5, 1)] == (0.0, 1)
    assert kt.table.cells[(5, 3)] == (1.0, 1) and kt.overflow == 1
    assert kt.relationship_mean["F-S"] == pytest.approx(2 / 3)
    assert kt.relationship_mean["B-B"] is None


def test_kinship_matches_filter():
    log = _kin_log(500, 4)
    kt = kinship_slice(log)
    edges = [(0, 10), (11, 20), (21, 30), (31, math.inf)]
    for r, rel in enumerate(("B-B", "S-S", "S-B", "M-S", "M-D", "F-S", "F-D")):
        for b, (lo, hi) in enumerate(edges):
            sel = [e for e in log if e.relationship == rel and lo <= e.age_difference <= hi]
            v, n = kt.table.cells[(r, b)]
            assert n == len(sel)
            if sel:
                assert v == pytest.approx(sum(e.predicted == e.target for e in sel) / len(sel), abs=1e-12)


def test_kinship_rejects_other_tasks():
    with pytest.raises(AuditError):
        kinship_slice(PredictionLog([LogEntry("a", "classification", 0, 0)]))


def test_report_serialisation(demo, tmp_path):
    log = random_log(demo, 2)
    path = tmp_path / "p.jsonl"
    path.write_text(log.to_jsonl())
    assert PredictionLog.from_jsonl(path) == log
    table = group_slice(log, demo, [axis("gender"), axis("age")])
    import json

    doc = json.loads(table.to_json())
    assert set(doc) == {"metric", "axes", "cells", "overall", "disparity"}
    assert len(doc["cells"]) == 10
    assert table.to_csv().splitlines()[0] == "gender,age,value,n"
