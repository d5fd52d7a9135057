import json
import math
import warnings

import numpy as np
import pytest

from bimanual.evaluation import (
    ConfusionMatrix, assign_folds, compute_metrics, format_report, kfold_evaluate, kfold_evaluate_methods,
    overlap, score_timeline, write_results,
)
from bimanual.recognizer import NA, Event
from bimanual.signals import Annotation
from bimanual.synthgen import generate_dataset

from conftest import synced

GESTURES = ["OCC", "SWP", "FCOT", "RFF", "WO"]


@pytest.fixture(autouse=True)
def quiet():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="stream of")
        yield


def published_4x4d_prob() -> ConfusionMatrix:
    """A matrix honouring every cell and aggregate quoted for the implicit/probability run."""
    # rows = predicted, columns = true: OCC SWP FCOT RFF WO N.A.
    return ConfusionMatrix(GESTURES, [
        [59, 0, 0, 0, 0, 0],
        [0, 58, 1, 0, 0, 0],
        [0, 0, 56, 3, 20, 0],
        [1, 0, 0, 44, 0, 0],
        [0, 0, 0, 0, 29, 0],
        [0, 2, 3, 13, 11, 0],
    ])


# --- confusion matrices -----------------------------------------------------------------


def test_na_label_is_last():
    cm = ConfusionMatrix([NA, "A", "B"])
    assert cm.labels == ["A", "B", NA] and cm.gestures == ["A", "B"]
    with pytest.raises(ValueError):
        ConfusionMatrix(["A", "A"])
    with pytest.raises(ValueError):
        ConfusionMatrix(["A"], [[1, -1], [0, 0]])
    with pytest.raises(ValueError):
        ConfusionMatrix(["A"], [[1]])


def test_rows_are_predicted_columns_true():
    cm = ConfusionMatrix.from_pairs(["A", "B"], [("A", "B"), ("A", "A"), ("B", NA)])
    assert cm.cell("B", "A") == 1 and cm.cell(NA, "B") == 1
    assert cm.column_total("A") == 2 and cm.row_total("A") == 1
    assert cm.total == 3


def test_addition_and_equality():
    a = ConfusionMatrix.from_pairs(["A", "B"], [("A", "A")])
    b = ConfusionMatrix.from_pairs(["A", "B"], [("B", "A")])
    assert (a + b).counts.tolist() == [[1, 1, 0], [0, 0, 0], [0, 0, 0]]
    assert a + b == b + a
    with pytest.raises(ValueError):
        a + ConfusionMatrix(["A", "C"])


def test_csv_round_trip(tmp_path):
    cm = published_4x4d_prob()
    p = tmp_path / "cm.csv"
    cm.write_csv(p)
    assert p.read_text().splitlines()[0] == "predicted\\true,OCC,SWP,FCOT,RFF,WO,N.A."
    assert ConfusionMatrix.read_csv(p) == cm
    p.write_text("predicted\\true,A,N.A.\nB,1,0\nN.A.,0,0\n")
    with pytest.raises(ValueError):
        ConfusionMatrix.read_csv(p)


# --- metrics -----------------------------------------------------------------------------


def test_diagonal_is_perfect():
    cm = ConfusionMatrix(["A", "B"], np.diag([5, 7, 0]))
    m = compute_metrics(cm)
    assert m.accuracy == 1.0
    assert set(m.precision.values()) == {1.0} and set(m.recall.values()) == {1.0}


def test_empty_row_is_not_applicable():
    cm = ConfusionMatrix.from_pairs(["A", "B"], [("A", "A"), ("B", NA)])
    m = compute_metrics(cm)
    assert m.precision["B"] is None and m.recall["B"] == 0.0
    assert "n/a" in format_report("t", cm, m)


def test_paper_column_and_row():
    m = compute_metrics(published_4x4d_prob())
    assert 100 * m.recall["OCC"] == pytest.approx(98.3, abs=0.1)
    assert 100 * m.precision["SWP"] == pytest.approx(98.3, abs=0.1)


def test_paper_aggregates_4x4d_prob():
    cm = published_4x4d_prob()
    m = compute_metrics(cm)
    assert cm.total == 300 and all(cm.column_total(g) == 60 for g in GESTURES)
    assert 100 * m.accuracy == pytest.approx(82.0, abs=0.1)
    assert 100 * m.recall["WO"] == pytest.approx(48.3, abs=0.1)
    assert 100 * m.precision["FCOT"] == pytest.approx(70.9, abs=0.1)
    assert min(m.recall, key=m.recall.get) == "WO"
    assert min(m.precision, key=m.precision.get) == "FCOT"


def test_metrics_are_fractions():
    rng = np.random.default_rng(0)
    for _ in range(50):
        counts = rng.integers(0, 20, (6, 6))
        counts[:, -1] = 0
        m = compute_metrics(ConfusionMatrix(GESTURES, counts))
        vals = [v for v in list(m.precision.values()) + list(m.recall.values()) if v is not None]
        assert all(0.0 <= v <= 1.0 for v in vals) and 0.0 <= m.accuracy <= 1.0
        assert m.accuracy == np.trace(counts[:5, :5]) / counts.sum()


# --- folds ------------------------------------------------------------------------------


def fake_dataset(n=12, subjects=4):
    from bimanual.signals import SampleStream, Trial

    t = np.arange(3) / 40
    s = SampleStream("left", t, np.zeros((3, 3)))
    return {g: [Trial(s, s.with_values(s.a), g, f"{g}_{i}", f"S{i % subjects}") for i in range(n)]
            for g in ("A", "B")}


def test_folds_partition_and_determinism():
    ds = fake_dataset()
    a = assign_folds(ds, 6, seed=5)
    assert all(np.array_equal(a[g], assign_folds(ds, 6, seed=5)[g]) for g in ds)
    for g in ds:
        assert sorted(np.bincount(a[g]).tolist()) == [2] * 6
    assert any(not np.array_equal(a[g], assign_folds(ds, 6, seed=6)[g]) for g in ds)


def test_indivisible_dataset_suggests_trim():
    with pytest.raises(ValueError, match="trim to 12"):
        assign_folds(fake_dataset(n=13), 6)


def test_subject_disjoint_folds():
    ds = fake_dataset(n=12, subjects=4)
    idx = assign_folds(ds, 2, seed=1, subject_disjoint=True)
    fold_of = {}
    for g, trials in ds.items():
        for tr, f in zip(trials, idx[g]):
            assert fold_of.setdefault(tr.subject, f) == f
    assert set(fold_of.values()) == {0, 1}
    with pytest.raises(ValueError):
        assign_folds(ds, 6, subject_disjoint=True)


@pytest.fixture(scope="module")
def small_study():
    return synced(generate_dataset(trials_per_gesture=6, seed=4))


def test_small_kfold_runs_and_is_permutation_invariant(small_study):
    folds = 3
    idx = assign_folds(small_study, folds, seed=2)
    res = kfold_evaluate_methods(small_study, folds, "4x4D", seed=2, fold_index=idx)
    rng = np.random.default_rng(0)
    perm = {g: rng.permutation(len(v)) for g, v in small_study.items()}
    shuffled = {g: [v[i] for i in perm[g]] for g, v in small_study.items()}
    idx2 = {g: idx[g][perm[g]] for g in small_study}
    res2 = kfold_evaluate_methods(shuffled, folds, "4x4D", seed=2, fold_index=idx2)
    for m, r in res.items():
        assert r.confusion == res2[m].confusion
        assert r.confusion.total == 30
        assert all(r.confusion.column_total(g) == 6 for g in r.confusion.gestures)
        assert sum(f.total for f in r.fold_confusions) == 30
        assert len(r.metrics.folds) == folds


def test_fold_index_validation(small_study):
    with pytest.raises(ValueError, match="fold_index"):
        kfold_evaluate(small_study, 3, fold_index={g: [0] * len(v) for g, v in small_study.items()}
                       | {"OCC": [5] * 6})


def test_write_results(small_study, tmp_path):
    r = kfold_evaluate(small_study, 3, "2x7D", "distance", seed=0)
    paths = write_results([r], tmp_path)
    assert [p.name for p in paths] == ["confusion_2x7d_distance.csv", "report.txt", "summary.json"]
    doc = json.loads((tmp_path / "summary.json").read_text())
    assert doc[0]["approach"] == "2x7D" and doc[0]["method"] == "distance"
    assert ConfusionMatrix(**doc[0]["confusion"]) == r.confusion
    assert "2x7D + distance" in (tmp_path / "report.txt").read_text()


# --- timelines ------------------------------------------------------------------------


SC1 = [Annotation(5.0, 9.2, "SWP"), Annotation(14.2, 18.9, "SWP")]


def test_perfect_scenario_one():
    events = [Event(0.0, 5.0, NA, math.nan), Event(5.0, 9.2, "SWP", 1.0), Event(9.2, 14.2, NA, math.nan),
              Event(14.2, 18.9, "SWP", 1.0)]
    assert score_timeline(events, SC1).summary() == "TP=2 FP=0 FN=0"


def test_empty_prediction_misses_everything():
    s = score_timeline([Event(0.0, 24.0, NA, math.nan)], SC1)
    assert (s.tp, s.fp, s.fn) == (0, 0, 2)


def test_mislabel_is_fp_and_fn():
    events = [Event(5.0, 9.2, "SWP", 1.0), Event(14.2, 18.9, "OCC", 1.0)]
    s = score_timeline(events, SC1)
    assert (s.tp, s.fp, s.fn) == (1, 1, 1)


def test_half_overlap_rule():
    a = [Annotation(0.0, 4.0, "WO")]
    assert score_timeline([Event(2.0, 6.0, "WO", 0.0)], a).tp == 1
    assert score_timeline([Event(2.01, 6.0, "WO", 0.0)], a).tp == 0
    assert overlap(0, 1, 2, 3) == 0.0


def test_annotation_matched_once():
    a = [Annotation(0.0, 4.0, "WO")]
    s = score_timeline([Event(0.0, 3.0, "WO", 0.0), Event(1.0, 4.0, "WO", 0.0)], a)
    assert (s.tp, s.fp, s.fn) == (1, 1, 0)
