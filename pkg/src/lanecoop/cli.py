"""Command-line entry point: ``lanecoop <command> [options]``.

Every command takes ``--config`` (flat key=value file), ``--seed`` and
``--out-dir``. Exit codes: 0 ok, 2 config error, 3 data-format error,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from lanecoop import DEFAULT_SEED, ingest
from lanecoop.errors import FormatError, LanecoopError
from lanecoop.io import (apply_overrides, load_kv, provenance, read_json, read_jsonl, write_csv, write_json,
                         write_jsonl)

log = logging.getLogger("lanecoop")


# ------------------------------------------------------------------ helpers


def _out(args, explicit, default_name) -> Path:
    return Path(explicit) if explicit else Path(args.out_dir) / default_name


def _load_model(path, cls):
    d = read_json(path)
    try:
        return cls.from_dict(d)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, LanecoopError):
            raise
        raise FormatError(f"{path}: malformed model file ({exc})") from None


def _style_model(path):
    from lanecoop.style import StyleModel

    return _load_model(path, StyleModel)


def _decision_model(path):
    from lanecoop.decision import DecisionModel

    return _load_model(path, DecisionModel)


def _omega(path):
    from lanecoop.irl import RewardWeights

    return _load_model(path, RewardWeights)


def _episodes(path):
    _, recs = read_jsonl(path)
    return [ingest.Episode.from_dict(r) for r in recs]


def _styled(samples, style_path):
    """Samples with style labels from the recognizer (ingested samples carry none)."""
    from lanecoop.style import predict_style

    if not style_path:
        return samples
    labels, _ = predict_style(_style_model(style_path), samples.style_features)
    return replace(samples, style=labels.astype(np.uint8))


def _train_config(args):
    from lanecoop.decision import TrainConfig

    return apply_overrides(TrainConfig(seed=args.seed), args.cfg, "train.")


def _scenario(path):
    from lanecoop.sim import Scenario

    return Scenario.from_dict(read_json(path))


# ----------------------------------------------------------------- commands


def cmd_synth(args, prov):
    from lanecoop import synthetic
    from lanecoop.ingest import write_samples

    out = Path(args.out_dir)
    n = int(args.cfg.get("synth.corpus_size", 3000))
    truth = synthetic.ngsim_csv(out / "synthetic_ngsim.csv", int(args.cfg.get("synth.scenes", 12)), args.seed)
    write_jsonl(out / "synthetic_ngsim_truth.jsonl", truth, prov)
    write_samples(out / "corpus.samples", synthetic.decision_corpus(n, args.seed), prov)
    for sc in (synthetic.case_study_scene(), synthetic.blocked_scene(), synthetic.open_gap_scene()):
        write_json(out / f"scenario_{sc.name}.json", sc.to_dict(), prov)
    return 0


def cmd_ingest(args, prov):
    from lanecoop.detect import DetectConfig

    det = apply_overrides(DetectConfig(), args.cfg, "detect.")
    res = ingest.run(args.input, args.seed, det, float(args.cfg.get("ingest.max_rear_gap", 150.0)))
    out = Path(args.out_dir)
    write_jsonl(out / "episodes.jsonl", [ep.to_dict() for ep in res.episodes], prov)
    ingest.write_samples(out / "samples.bin", res.samples, prov)
    write_json(out / "ingest_summary.json", {"counts": dict(sorted(res.counts.items()))}, prov)
    log.info("episodes=%d samples=%d", res.counts["episodes"], res.counts["samples"])
    return 0


def cmd_detect(args, prov):
    from lanecoop.detect import DetectConfig, detect_two_pass, duration_stats

    det = apply_overrides(DetectConfig(delta=args.delta), args.cfg, "detect.")
    records, durations = [], []
    for ep in _episodes(args.episodes):
        ev = detect_two_pass(ep.ego.y_lat, det)
        rec = {"vehicle_id": ep.ego.vehicle_id, "event": None if ev is None else ev.to_dict()}
        records.append(rec)
        if ev is not None:
            durations.append(ev.duration)
    out = _out(args, args.out, "events.jsonl")
    write_jsonl(out, records, prov)
    write_csv(out.with_name(out.stem + "_durations.csv"), ("duration_s",), [[d] for d in durations], prov)
    if len(durations) >= 2:
        mu, sigma, _ = duration_stats(durations)
        write_json(out.with_name(out.stem + "_lognormal.json"), {"mu": mu, "sigma": sigma, "n": len(durations)},
                   prov)
    return 0


def cmd_cluster(args, prov):
    from lanecoop.style import STYLES, fit_clusters, projection_rows

    samples = ingest.read_samples(args.samples)
    model, styles, km = fit_clusters(samples.style_features, args.seed)
    out = _out(args, args.out, "style.model")
    write_json(out, model.to_dict(), prov)
    write_csv(out.with_name("style_projection.csv"), ("pc1", "pc2", "style"),
              projection_rows(model, samples.style_features, styles), prov)
    counts = np.bincount(styles, minlength=3)
    write_json(out.with_name("style_clusters.json"),
               {"inertia": km.inertia, "counts": {STYLES[i]: int(c) for i, c in enumerate(counts)}}, prov)
    return 0


def cmd_train_style(args, prov):
    from lanecoop.style import fit_recognizer

    samples = ingest.read_samples(args.samples)
    model = _style_model(args.style_model)
    styles = model.assign(samples.style_features)
    kw = {}
    if "style.max_epochs" in args.cfg:
        kw["max_epochs"] = int(args.cfg["style.max_epochs"])
    model = fit_recognizer(model, samples.style_features, styles, args.seed, **kw)
    write_json(_out(args, args.out, "style.model"), model.to_dict(), prov)
    return 0


def cmd_train_decision(args, prov):
    from lanecoop import report
    from lanecoop.decision import train

    samples = _styled(ingest.read_samples(args.samples), args.style_model)
    cfg = _train_config(args)
    res = train(samples.train(), samples.val(), cfg,
                log=lambda r: log.info("epoch %d loss %.4f val_f1 %s", r["epoch"], r["train_loss"],
                                       r.get("val_f1")))
    out = _out(args, args.out, "decision.model")
    write_json(out, res.model.to_dict(), prov)
    write_json(out.with_name("training_history.json"),
               {"history": res.history, "best_f1": res.best_f1, "best_epoch": res.best_epoch}, prov)
    report.training_curves(out.parent, res.history, prov)
    return 0


def cmd_eval(args, prov):
    from lanecoop import report
    from lanecoop.decision import evaluate

    samples = _styled(ingest.read_samples(args.samples), args.style_model)
    if args.split != "all":
        samples = samples.val() if args.split == "val" else samples.train()
    rep = evaluate(_decision_model(args.model), samples)
    report.eval_report(_out(args, args.report, "eval_report.json"), rep.to_dict(), prov)
    return 0


def cmd_ablate(args, prov):
    from lanecoop.decision import ablate

    samples = _styled(ingest.read_samples(args.samples), args.style_model)
    rows = ablate(samples.train(), samples.val(), _train_config(args))
    cols = ("config", "bc", "irl", "lcs", "dcs", "best_f1", "accuracy", "precision", "recall", "f1")
    write_csv(_out(args, args.out, "ablation.csv"), cols, [[r[c] for c in cols] for r in rows], prov)
    return 0


def cmd_fit_irl(args, prov):
    from lanecoop import irl, synthetic

    n_steps = int(args.cfg.get("irl.horizon", 50))
    nz = None
    if args.episodes:
        demos = irl.demos_from_episodes(_episodes(args.episodes), n_steps)
    else:
        demos, nz = synthetic.yield_demos(int(args.synthetic_demos), args.seed, n_steps)
    if not demos:
        raise FormatError("no usable demos (episodes too short for the horizon?)")
    res = irl.fit_weights(demos, int(args.cfg.get("irl.iters", 2000)), float(args.cfg.get("irl.step", 0.05)),
                          normalizer=nz)
    out = _out(args, args.out, "omega.json")
    write_json(out, {**res.weights.to_dict(), "loglik_final": res.loglik[-1], "iterations": res.iterations,
                     "feature_gap": [float(g) for g in res.gradient], "n_demos": len(demos)}, prov)
    write_csv(out.with_name("irl_loglik.csv"), ("iteration", "loglik"), list(enumerate(res.loglik)), prov)
    return 0


def _mpc(cfg):
    from lanecoop.planner import MpcConfig

    return apply_overrides(MpcConfig(), cfg, "mpc.")


def _sim_configs(cfg):
    from lanecoop.sim import IdmConfig, MobilConfig

    return apply_overrides(IdmConfig(), cfg, "idm."), apply_overrides(MobilConfig(), cfg, "mobil.")


def cmd_plan(args, prov):
    from lanecoop.sim import Models, replay

    sc = _scenario(args.scenario)
    if sc.force_lc_at is None:
        sc = replace(sc, force_lc_at=0.0, force_lk=False)
    omega = _omega(args.omega) if args.omega else None
    mode = "ours" if omega is not None else "ours_with_idm_prediction"
    idm, mobil = _sim_configs(args.cfg)
    rep = replay(sc, Models(omega=omega), mode, _mpc(args.cfg), idm, mobil)
    ref = {round(r[0], 10): r[1:] for r in rep.reference}
    rows = []
    for t, x, y, psi, v, a, d in rep.trajectory:
        y_ref, ox, oy = ref.get(round(t, 10), (None, None, None))
        rows.append([t, x, y, psi, v, a, d, y_ref, ox, oy])
    write_csv(_out(args, args.out, "plan.csv"),
              ("t", "x", "y", "psi", "v", "accel", "steer", "y_ref", "obstacle_x", "obstacle_y"), rows, prov)
    return 0


def cmd_simulate(args, prov):
    from lanecoop import report
    from lanecoop.sim import Models, replay

    sc = _scenario(args.scenario)
    models = Models(_style_model(args.style_model) if args.style_model else None,
                    _decision_model(args.decision_model) if args.decision_model else None,
                    _omega(args.omega) if args.omega else None)
    idm, mobil = _sim_configs(args.cfg)
    for mode in args.mode:
        rep = replay(sc, models, mode, _mpc(args.cfg), idm, mobil)
        report.run_report(args.out_dir, rep.to_dict(), prov)
        log.info("%s: lc_start=%s completion=%s collision=%s", mode, rep.lc_start_time, rep.completion_time,
                 rep.collision)
    return 0


def cmd_report(args, prov):
    """Regenerate plot CSVs from a training history, an eval report or a run report."""
    from lanecoop import report

    for path in args.inputs:
        d = read_json(path)
        d.pop("_provenance", None)
        if "history" in d:
            report.training_curves(args.out_dir, d["history"], prov)
        elif "confusion" in d:
            report.eval_report(Path(args.out_dir) / Path(path).name, d, prov)
        elif "snapshots" in d:
            report.run_report(args.out_dir, d, prov)
        else:
            raise FormatError(f"{path}: not a training history, eval report or run report")
    return 0


# ------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    from lanecoop.sim import MODES

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value config file")
    common.add_argument("--seed", type=int, default=DEFAULT_SEED)
    common.add_argument("--out-dir", default=".")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="lanecoop", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, parents=[common], help=help_)
        sp.set_defaults(fn=fn)
        return sp

    add("synth", cmd_synth, "write the bundled synthetic CSV, corpus and scenarios")
    sp = add("ingest", cmd_ingest, "NGSIM CSV -> episodes.jsonl + samples.bin")
    sp.add_argument("--input", required=True)
    sp = add("detect", cmd_detect, "re-run lane-change detection on episodes")
    sp.add_argument("--episodes", required=True)
    sp.add_argument("--delta", type=float, default=0.05)
    sp.add_argument("--out")
    sp = add("cluster", cmd_cluster, "k-means style clustering")
    sp.add_argument("--samples", required=True)
    sp.add_argument("--out")
    sp = add("train-style", cmd_train_style, "train the style recognizer")
    sp.add_argument("--samples", required=True)
    sp.add_argument("--style-model", required=True)
    sp.add_argument("--out")
    for name, fn, help_ in (("train-decision", cmd_train_decision, "train the lane-change decision model"),
                            ("ablate", cmd_ablate, "five-row module ablation")):
        sp = add(name, fn, help_)
        sp.add_argument("--samples", required=True)
        sp.add_argument("--style-model")
        sp.add_argument("--out")
    sp = add("eval", cmd_eval, "evaluate a decision model")
    sp.add_argument("--model", required=True)
    sp.add_argument("--samples", required=True)
    sp.add_argument("--style-model")
    sp.add_argument("--split", choices=("val", "train", "all"), default="val")
    sp.add_argument("--report")
    sp = add("fit-irl", cmd_fit_irl, "fit Max-Ent IRL reward weights")
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--episodes")
    src.add_argument("--synthetic-demos", type=int)
    sp.add_argument("--out")
    sp = add("plan", cmd_plan, "plan and track one lane change in a scenario")
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--omega")
    sp.add_argument("--out")
    sp = add("simulate", cmd_simulate, "closed-loop replay of a scenario")
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--style-model")
    sp.add_argument("--decision-model")
    sp.add_argument("--omega")
    sp.add_argument("--mode", nargs="+", choices=MODES, default=["ours"])
    sp = add("report", cmd_report, "regenerate plot CSVs from JSON outputs")
    sp.add_argument("inputs", nargs="+")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.cfg = load_kv(args.config) if args.config else {}
        prov = provenance(args.seed, args.cfg, command=args.command)
        return args.fn(args, prov)
    except LanecoopError as exc:
        print(f"lanecoop {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"lanecoop {args.command}: {exc}", file=sys.stderr)
        return FormatError.exit_code


if __name__ == "__main__":
    sys.exit(main())
