import numpy as np
import pytest

from lanecoop import report
from lanecoop.decision import metrics
from lanecoop.errors import FormatError
from lanecoop.io import provenance, read_csv, read_json


def test_confusion_rows_sum_to_support(tmp_path):
    rng = np.random.default_rng(0)
    y = rng.integers(0, 2, 200)
    p = np.where(rng.uniform(size=200) < 0.8, y, 1 - y)
    rep = metrics(y, p).to_dict()
    files = report.eval_report(tmp_path / "eval.json", rep, provenance(1))
    header, rows = read_csv(files[1])
    assert header == ["true", "pred_LK", "pred_LC"]
    sums = {r[0]: int(r[1]) + int(r[2]) for r in rows}
    assert sums == {"LK": int((y == 0).sum()), "LC": int((y == 1).sum())}
    assert read_json(files[0])["accuracy"] == pytest.approx(rep["accuracy"])


def test_eval_report_rejects_bad_values(tmp_path):
    rep = metrics([0, 1], [0, 1]).to_dict()
    rep["accuracy"] = 2.0
    with pytest.raises(FormatError):
        report.eval_report(tmp_path / "e.json", rep, provenance(1))


def test_training_curves(tmp_path):
    hist = [{"epoch": k, "train_loss": 1.0 / k, "train_bc": 0.5, "train_irl": 0.4, "train_coop": 0.1,
             "val_loss": 1.1 / k, "val_accuracy": 0.5, "val_precision": 0.5, "val_recall": 0.5, "val_f1": 0.5,
             "val_lc_f1": 0.4, "lcs_mean": 0.5, "dcs_mean": 0.5, "alpha_mean": 0.5} for k in (1, 2, 3)]
    files = report.training_curves(tmp_path, hist, provenance(1))
    assert [f.name for f in files] == ["loss_curves.csv", "metric_curves.csv", "coop_traces.csv"]
    header, rows = read_csv(files[2])
    assert header == ["epoch", "lcs_mean", "dcs_mean", "alpha_mean"] and len(rows) == 3


def test_snapshot_rows():
    snaps = [{"step": 0, "t": 0.0, "ego": [0, 1, 0, 10], "vehicles": [[7, 5.0, 1.8]]}]
    assert report.snapshot_rows(snaps) == [[0, 0.0, "ego", 0, 1], [0, 0.0, 7, 5.0, 1.8]]


def test_schemas_ship_with_package():
    for name in ("run_report", "eval_report"):
        assert report.load_schema(name)["type"] == "object"
