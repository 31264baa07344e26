"""Report files: JSON summaries validated against the shipped schemas, plus
CSV plot data (training curves, confusion matrix, cooperation traces,
trajectory snapshots)."""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

import jsonschema

from lanecoop.errors import FormatError
from lanecoop.io import write_csv, write_json

SNAPSHOT_EVERY = 10  # steps, 1 s at 10 Hz

LOSS_COLUMNS = ("epoch", "train_loss", "train_bc", "train_irl", "train_coop", "val_loss")
METRIC_COLUMNS = ("epoch", "val_accuracy", "val_precision", "val_recall", "val_f1", "val_lc_f1")
COOP_COLUMNS = ("epoch", "lcs_mean", "dcs_mean", "alpha_mean")


def load_schema(name: str) -> dict:
    text = resources.files("lanecoop").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def validate(obj: dict, name: str) -> None:
    try:
        jsonschema.validate(obj, load_schema(name))
    except jsonschema.ValidationError as exc:
        raise FormatError(f"{name} does not match its schema: {exc.message}") from None


def _columns(history, cols):
    return [[rec.get(c) for c in cols] for rec in history]


def training_curves(out_dir, history, prov) -> list[Path]:
    """loss_curves.csv, metric_curves.csv, coop_traces.csv from a training history."""
    out = Path(out_dir)
    files = []
    for name, cols in (("loss_curves", LOSS_COLUMNS), ("metric_curves", METRIC_COLUMNS),
                       ("coop_traces", COOP_COLUMNS)):
        path = out / f"{name}.csv"
        write_csv(path, cols, _columns(history, cols), prov)
        files.append(path)
    return files


def confusion_rows(confusion: dict):
    # rows: true class, columns: predicted class
    return [["LK", confusion["TN"], confusion["FP"]], ["LC", confusion["FN"], confusion["TP"]]]


def eval_report(path, report: dict, prov) -> list[Path]:
    """JSON report plus confusion.csv next to it."""
    path = Path(path)
    validate({"_provenance": prov, **report}, "eval_report")
    write_json(path, report, prov)
    cm = path.with_name(path.stem + "_confusion.csv")
    write_csv(cm, ("true", "pred_LK", "pred_LC"), confusion_rows(report["confusion"]), prov)
    return [path, cm]


def snapshot_rows(snapshots):
    rows = []
    for s in snapshots:
        rows.append([s["step"], s["t"], "ego", *s["ego"][:2]])
        for vid, x, y in s["vehicles"]:
            rows.append([s["step"], s["t"], vid, x, y])
    return rows


def run_report(out_dir, run: dict, prov, stem: str | None = None) -> list[Path]:
    """<stem>.json (validated), <stem>_trajectory.csv and <stem>_snapshots.csv."""
    out = Path(out_dir)
    stem = stem or f"{run['scenario']}_{run['mode']}"
    validate({"_provenance": prov, **run}, "run_report")
    files = [out / f"{stem}.json", out / f"{stem}_trajectory.csv", out / f"{stem}_snapshots.csv"]
    write_json(files[0], run, prov)
    write_csv(files[1], ("t", "x", "y", "psi", "v", "accel", "steer"), run["trajectory"], prov)
    write_csv(files[2], ("step", "t", "vehicle", "x", "y"), snapshot_rows(run["snapshots"]), prov)
    return files
