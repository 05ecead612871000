import numpy as np
import pytest

from ssdcd import metrics
from ssdcd.graphs import Dag, GroundTruth


def _truth(d, edges, bi=(), lat=0):
    b = np.zeros((d, d), bool)
    for i, j in bi:
        b[i, j] = True
    return GroundTruth(Dag.from_edges(d, edges).adjacency, b, lat)


def test_perfect_prediction():
    t = _truth(4, [(0, 1), (1, 2), (2, 3)])
    r = metrics.evaluate(t.directed, t)
    assert (r.precision, r.recall, r.f1) == (1.0, 1.0, 1.0)


def test_counts_example():
    t = _truth(5, [(0, 1), (1, 2), (2, 3), (3, 4)])
    pred = np.zeros((5, 5))
    pred[0, 1] = pred[1, 2] = pred[0, 4] = 1
    r = metrics.evaluate(pred, t)
    assert (r.tp, r.fp, r.fn) == (2, 1, 2)
    assert r.precision == pytest.approx(2 / 3)
    assert r.recall == pytest.approx(1 / 2)
    assert r.f1 == pytest.approx(4 / 7)
    assert r.f1 == 2 * r.precision * r.recall / (r.precision + r.recall)


def test_empty_prediction():
    r = metrics.evaluate(np.zeros((3, 3)), _truth(3, [(0, 1)]))
    assert (r.precision, r.recall, r.f1) == (0.0, 0.0, 0.0)


def test_empty_truth_convention():
    r = metrics.evaluate(np.zeros((3, 3)), _truth(3, []))
    assert r.recall == 1.0 and r.precision == 0.0 and r.f1 == 0.0


def test_reversed_edge_is_wrong_in_directed_mode_but_right_in_skeleton():
    t = _truth(3, [(0, 1)])
    pred = np.zeros((3, 3))
    pred[1, 0] = 1
    assert metrics.evaluate(pred, t).f1 == 0.0
    assert metrics.evaluate(pred, t, "skeleton").f1 == 1.0


def test_bidirected_matched_by_either_orientation_once():
    t = _truth(3, [], bi=[(0, 2)], lat=1)
    for i, j in [(0, 2), (2, 0)]:
        pred = np.zeros((3, 3))
        pred[i, j] = 1
        r = metrics.evaluate(pred, t)
        assert (r.tp, r.fp, r.fn) == (1, 0, 0)
    pred = np.zeros((3, 3))
    pred[0, 2] = pred[2, 0] = 1
    r = metrics.evaluate(pred, t)
    assert (r.tp, r.fp, r.fn) == (1, 1, 0)


def test_skeleton_invariant_to_reorientation():
    rng = np.random.default_rng(0)
    t = _truth(6, [(0, 1), (1, 2), (3, 4), (0, 5)])
    pred = np.triu(rng.random((6, 6)) < 0.4, 1)
    base = metrics.evaluate(pred, t, "skeleton")
    for _ in range(5):
        mask = np.triu(rng.random((6, 6)) < 0.5, 1) & pred
        re = (pred & ~mask) | mask.T
        assert metrics.evaluate(re, t, "skeleton") == base


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        metrics.evaluate(np.zeros((2, 2)), _truth(3, []))


def test_report_json_and_csv(tmp_path):
    r = metrics.evaluate(np.zeros((3, 3)), _truth(3, [(0, 1)]), seconds=1.5)
    assert '"seconds": 1.5' in r.to_json(tmp_path / "r.json")
    rows = [{"method": "m", "d": 3, "degree": 1.0, "n": 10, "noise": "gaussian", "seed": 1,
             "precision": 0.5, "recall": 0.25, "f1": 1 / 3, "seconds": 0.1, "extra": "x"}]
    metrics.rows_to_csv(rows, tmp_path / "rows.csv")
    back = metrics.read_csv_rows(tmp_path / "rows.csv")
    assert list(back[0])[:10] == list(metrics.RUN_COLUMNS)
    assert float(back[0]["f1"]) == 1 / 3
