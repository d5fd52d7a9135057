import json
import logging
import warnings

import numpy as np
import pytest

from bimanual.cli import main
from bimanual.recognizer import load_models, save_models
from bimanual.signals import GRAVITY, SampleStream, write_stream
from bimanual.synthgen import generate_scenario, write_scenario


@pytest.fixture(autouse=True)
def quiet():
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message="stream of")
        yield


@pytest.fixture(scope="module")
def small_data(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    assert main(["synth", "--trials", "6", "--seed", "3", "--out", str(out), "--force"]) == 0
    return out


@pytest.fixture(scope="module")
def bundle_paths(bundles, tmp_path_factory):
    d = tmp_path_factory.mktemp("bundles")
    paths = {}
    for ap, b in bundles.items():
        paths[ap] = d / f"{ap}.json"
        save_models(b, paths[ap])
    return paths


def snapshot(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


# --- synth --------------------------------------------------------------------------


def test_synth_manifest_and_refusal(tmp_path, capsys):
    out = tmp_path / "d"
    assert main(["synth", "--trials", "2", "--seed", "7", "--out", str(out)]) == 0
    printed = capsys.readouterr().out.split()
    assert len(printed) == 5 * 2 * 3 == len(list(out.iterdir()))
    before = snapshot(out)
    with pytest.raises(SystemExit) as e:
        main(["synth", "--trials", "2", "--seed", "7", "--out", str(out)])
    assert e.value.code == 2 and "--force" in capsys.readouterr().err
    assert main(["synth", "--trials", "2", "--seed", "7", "--out", str(out), "--force"]) == 0
    assert snapshot(out) == before


def test_synth_scenario(tmp_path):
    out = tmp_path / "s"
    assert main(["synth", "--scenario", "2", "--seed", "7", "--out", str(out)]) == 0
    assert sorted(snapshot(out)) == ["scenario2_left.csv", "scenario2_right.csv", "scenario2_truth.csv"]
    truth = (out / "scenario2_truth.csv").read_text().splitlines()
    assert [line.split(",")[2] for line in truth[1:]] == ["WO", "RFF", "FCOT", "OCC"]


# --- train --------------------------------------------------------------------------


def test_train_prints_structure(small_data, tmp_path, capsys):
    out = tmp_path / "m"
    assert main(["train", "--data", str(small_data), "--approach", "2x7d", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    for g in ("OCC", "SWP", "FCOT", "RFF", "WO"):
        assert f"{g}: K_m=" in text
    assert "components G=" in text
    bundle = load_models(out / "models.json")
    assert bundle.approach == "2x7D"
    assert all(len(m.features) == 2 for m in bundle.models)


def test_missing_label_names_file(small_data, tmp_path, capsys):
    data = tmp_path / "bad"
    data.mkdir()
    for p in small_data.glob("WO_000*"):
        (data / p.name).write_bytes(p.read_bytes())
    (data / "WO_000.meta").write_text("offset_left=1.0\noffset_right=1.0\n")
    out = tmp_path / "m"
    assert main(["train", "--data", str(data), "--out", str(out)]) == 1
    err = capsys.readouterr().err
    assert "WO_000.meta" in err and "label" in err and err.startswith("error [signals]")
    assert not out.exists()


def test_failed_run_keeps_existing_files(small_data, tmp_path):
    out = tmp_path / "m"
    out.mkdir()
    (out / "keep.txt").write_text("x")
    assert main(["train", "--data", str(tmp_path / "nowhere"), "--out", str(out), "--force"]) == 1
    assert snapshot(out) == {"keep.txt": b"x"}


# --- eval and report -------------------------------------------------------------------


def test_eval_single_combination(small_data, tmp_path, capsys):
    out = tmp_path / "e"
    assert main(["eval", "--data", str(small_data), "--method", "dist", "--approach", "4x4d",
                 "--folds", "3", "--out", str(out)]) == 0
    assert capsys.readouterr().out.count("rows: predicted, columns: true") == 1
    assert sorted(snapshot(out)) == ["confusion_4x4d_distance.csv", "report.txt", "summary.json"]


def test_eval_all_and_report(small_data, tmp_path, capsys):
    out = tmp_path / "e"
    assert main(["eval", "--data", str(small_data), "--all", "--folds", "2", "--out", str(out)]) == 0
    assert (out / "report.txt").read_text().count("rows: predicted, columns: true") == 4
    assert len(json.loads((out / "summary.json").read_text())) == 4
    capsys.readouterr()
    assert main(["report", "--summary", str(out / "summary.json")]) == 0
    assert capsys.readouterr().out == (out / "report.txt").read_text()
    assert main(["report", "--confusion", str(out / "confusion_2x7d_distance.csv")]) == 0
    assert "accuracy:" in capsys.readouterr().out


def test_eval_usage_errors(small_data, capsys):
    with pytest.raises(SystemExit) as e:
        main(["eval", "--data", str(small_data), "--all", "--approach", "4x4d"])
    assert e.value.code == 2
    with pytest.raises(SystemExit):
        main(["eval", "--data", str(small_data), "--folds", "1"])
    with pytest.raises(SystemExit):
        main(["report"])


def test_eval_indivisible_folds(small_data, tmp_path, capsys):
    assert main(["eval", "--data", str(small_data), "--folds", "4", "--out", str(tmp_path / "e")]) == 1
    assert "trim to 4" in capsys.readouterr().err
    assert not (tmp_path / "e").exists()


# --- recognize -------------------------------------------------------------------------


def test_recognize_scenario_one(bundle_paths, tmp_path, capsys):
    s = tmp_path / "s"
    assert main(["synth", "--scenario", "1", "--seed", "0", "--out", str(s)]) == 0
    out = tmp_path / "r"
    assert main(["recognize", "--bundle", str(bundle_paths["4x4D"]), "--method", "prob",
                 "--left", str(s / "scenario1_left.csv"), "--right", str(s / "scenario1_right.csv"),
                 "--truth", str(s / "scenario1_truth.csv"), "--out", str(out)]) == 0
    lines = (out / "timeline.csv").read_text().splitlines()
    assert lines[0] == "t_start,t_end,label,score"
    assert [line.split(",")[2] for line in lines[1:]].count("SWP") == 2
    assert (out / "score.txt").read_text() == "TP=2 FP=0 FN=0\n"
    header = (out / "traces.csv").read_text().splitlines()[0]
    assert header == "t,score_FCOT,score_OCC,score_RFF,score_SWP,score_WO"


def test_recognize_rest_only(bundle_paths, tmp_path):
    rng = np.random.default_rng(0)
    t = np.arange(400) / 40
    for side in ("left", "right"):
        a = np.round((np.array([0, 0, GRAVITY]) + rng.normal(0, 0.05, (400, 3))) * 1024) / 1024
        write_stream(SampleStream(side, t, a), tmp_path / f"rest_{side}.csv")
    out = tmp_path / "r"
    assert main(["recognize", "--bundle", str(bundle_paths["2x7D"]), "--method", "dist",
                 "--left", str(tmp_path / "rest_left.csv"), "--right", str(tmp_path / "rest_right.csv"),
                 "--out", str(out)]) == 0
    lines = (out / "timeline.csv").read_text().splitlines()
    assert len(lines) == 2 and lines[1].split(",")[2] == "N.A."


def test_recognize_stride_keeps_tp(bundle_paths, tmp_path):
    write_scenario(generate_scenario(["WO"], gaps=2.0, seed=9), tmp_path, "one")
    args = ["recognize", "--bundle", str(bundle_paths["4x4D"]), "--left", str(tmp_path / "one_left.csv"),
            "--right", str(tmp_path / "one_right.csv"), "--truth", str(tmp_path / "one_truth.csv")]
    assert main(args + ["--stride", "10", "--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--stride", "1", "--out", str(tmp_path / "b")]) == 0
    assert (tmp_path / "a" / "score.txt").read_text() == (tmp_path / "b" / "score.txt").read_text() \
        == "TP=1 FP=0 FN=0\n"


def test_recognize_approach_mismatch(bundle_paths, tmp_path, capsys):
    with pytest.raises(SystemExit) as e:
        main(["recognize", "--bundle", str(bundle_paths["4x4D"]), "--approach", "2x7d",
              "--left", "x", "--right", "y", "--out", str(tmp_path / "r")])
    assert e.value.code == 2 and "does not match" in capsys.readouterr().err
    assert not (tmp_path / "r").exists()
    with pytest.raises(SystemExit):
        main(["recognize", "--bundle", "b", "--left", "x", "--right", "y", "--stride", "0"])


def test_log_level_from_environment(monkeypatch, tmp_path):
    monkeypatch.setenv("BIMANUAL_LOG", "debug")
    root = logging.getLogger()
    saved = root.handlers[:], root.level
    root.handlers[:] = []
    try:
        assert main(["synth", "--trials", "1", "--out", str(tmp_path / "d")]) == 0
        assert root.level == logging.DEBUG
    finally:
        root.handlers[:], _ = saved
        root.setLevel(saved[1])
