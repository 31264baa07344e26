import filecmp
import subprocess
import sys

import pytest

from lanecoop.cli import main
from lanecoop.io import read_json


@pytest.fixture(scope="module")
def synth(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    (d / "cfg.kv").write_text("synth.corpus_size=300\nsynth.scenes=6\ntrain.epochs=2\ntrain.hidden=8\n"
                              "train.lr=3e-3\nstyle.max_epochs=100\n")
    assert main(["synth", "--config", str(d / "cfg.kv"), "--out-dir", str(d)]) == 0
    return d


def test_synth_outputs(synth):
    for name in ("synthetic_ngsim.csv", "corpus.samples", "scenario_case-study-replica.json",
                 "scenario_blocked-gap.json", "scenario_open-gap.json"):
        assert (synth / name).exists()
    assert read_json(synth / "scenario_blocked-gap.json")["_provenance"]["tool"] == "lanecoop"


def test_bad_config_exit_2(synth, tmp_path):
    cfg = tmp_path / "bad.kv"
    cfg.write_text("this is not a pair\n")
    assert main(["ingest", "--input", str(synth / "synthetic_ngsim.csv"), "--config", str(cfg),
                 "--out-dir", str(tmp_path)]) == 2
    cfg.write_text("detect.delta=-1\n")
    assert main(["ingest", "--input", str(synth / "synthetic_ngsim.csv"), "--config", str(cfg),
                 "--out-dir", str(tmp_path)]) == 2


def test_bad_data_exit_3(tmp_path, capsys):
    bad = tmp_path / "bad.csv"
    bad.write_text("Vehicle_ID,Frame_ID\n1,2\n")
    assert main(["ingest", "--input", str(bad), "--out-dir", str(tmp_path)]) == 3
    assert "missing column" in capsys.readouterr().err
    assert main(["cluster", "--samples", str(bad), "--out-dir", str(tmp_path)]) == 3


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_numeric_failure_exit_4(synth, tmp_path):
    cfg = tmp_path / "c.kv"
    cfg.write_text("train.epochs=2\ntrain.hidden=4\ntrain.lr=1e300\n")
    assert main(["train-decision", "--samples", str(synth / "corpus.samples"), "--config", str(cfg),
                 "--out-dir", str(tmp_path)]) == 4


def _pipeline(synth, out):
    cfg = str(synth / "cfg.kv")
    s = str(synth / "corpus.samples")
    steps = [
        ["ingest", "--input", str(synth / "synthetic_ngsim.csv")],
        ["detect", "--episodes", str(out / "episodes.jsonl")],
        ["cluster", "--samples", s],
        ["train-style", "--samples", s, "--style-model", str(out / "style.model")],
        ["train-decision", "--samples", s, "--style-model", str(out / "style.model")],
        ["eval", "--model", str(out / "decision.model"), "--samples", s, "--style-model", str(out / "style.model")],
        ["fit-irl", "--synthetic-demos", "20"],
        ["plan", "--scenario", str(synth / "scenario_case-study-replica.json"), "--omega", str(out / "omega.json")],
        ["simulate", "--scenario", str(synth / "scenario_open-gap.json"), "--style-model", str(out / "style.model"),
         "--decision-model", str(out / "decision.model"), "--omega", str(out / "omega.json"),
         "--mode", "ours", "idm_mobil"],
        ["report", str(out / "training_history.json"), str(out / "open-gap_ours.json")],
    ]
    for argv in steps:
        assert main(argv + ["--config", cfg, "--seed", "7", "--out-dir", str(out)]) == 0, argv


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_pipeline_is_byte_identical(synth, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    _pipeline(synth, a)
    _pipeline(synth, b)
    files = sorted(p.name for p in a.iterdir())
    assert len(files) > 20
    match, mismatch, errors = filecmp.cmpfiles(a, b, files, shallow=False)
    assert not mismatch and not errors
    for name in ("plan.csv", "eval_report.json", "open-gap_ours.json", "loss_curves.csv"):
        assert (a / name).read_text().startswith(("# ", "{")), name


def test_console_script_help():
    out = subprocess.run([sys.executable, "-m", "lanecoop.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for cmd in ("ingest", "detect", "cluster", "train-style", "train-decision", "ablate", "fit-irl", "plan",
                "simulate", "eval", "report"):
        assert cmd in out.stdout
