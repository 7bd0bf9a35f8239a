"""Command-line entry point: ``qtnet <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from typing import List, Optional

from .alarm import AlarmConfig, predictive_value_curve, run_dosing_session
from .checkpoint import load_checkpoint, save_checkpoint
from .delineate import delineate
from .errors import ConfigError, QTNetError
from .evaluate import evaluate_regression
from .infer import checkpoint_estimator
from .model import QTNetConfig, build_qtnet
from .signal import IntervalLabels
from .synth import CorpusSpec, sample_corpus
from .train import TrainConfig, fit, split_by_subject
from .wfdb import (build_manifest, load_column_mapping, read_corpus, timelines_from_manifest,
                   write_corpus)

MODEL_KEYS = set(QTNetConfig.__dataclass_fields__)
TRAIN_KEYS = set(TrainConfig.__dataclass_fields__)


def _read_json(path) -> dict:
    if path is None:
        return {}
    try:
        return json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def _log(msg: str) -> None:
    print(msg, file=sys.stderr, flush=True)


def cmd_ingest(args) -> int:
    columns = load_column_mapping(args.columns) if args.columns else None
    manifest = build_manifest(args.directory, args.table, columns)
    Path(args.manifest).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    n = sum(len(v) for d in manifest["subjects"].values() for v in d.values())
    print(json.dumps({"subjects": len(manifest["subjects"]), "records": n}))
    return 0


def cmd_synth(args) -> int:
    spec = CorpusSpec.from_dict(_read_json(args.spec))
    n = write_corpus(args.out, sample_corpus(spec))
    print(json.dumps({"records": n, "out": str(args.out)}))
    return 0


def _split_config(raw: dict):
    unknown = set(raw) - MODEL_KEYS - TRAIN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    model_cfg = QTNetConfig.from_dict({k: v for k, v in raw.items() if k in MODEL_KEYS})
    train_cfg = TrainConfig.from_dict({k: v for k, v in raw.items() if k in TRAIN_KEYS})
    return model_cfg, train_cfg


def cmd_train(args) -> int:
    model_cfg, train_cfg = _split_config(_read_json(args.config))
    if not train_cfg.corpus_id:
        train_cfg = TrainConfig.from_dict({**train_cfg.__dict__, "corpus_id": Path(args.corpus).name})
    records = read_corpus(args.corpus)
    train, dev, test = split_by_subject(records, train_cfg.split_fractions, train_cfg.rng_seed)
    _log(f"splits: train={len(train)} dev={len(dev)} test={len(test)}")
    model = build_qtnet(model_cfg, train_cfg.rng_seed)
    ckpt, history = fit(train, dev, model, train_cfg, log=_log)
    save_checkpoint(ckpt, args.out)
    history_path = Path(args.history or f"{args.out}.history.csv")
    history_path.write_text(history.to_csv())
    print(json.dumps({"epochs": len(history.epochs), "best_epoch": history.best_epoch,
                      "training_mae": ckpt.training_mae, "out": str(args.out)}, sort_keys=True))
    return 0


def _eval_records(args, ckpt=None):
    records = read_corpus(args.corpus)
    if args.split == "all":
        return records
    if ckpt is None:
        raise ConfigError("--split other than 'all' needs --model (the split comes from its provenance)")
    tc = ckpt.provenance.get("train_config", {})
    train, dev, test = split_by_subject(records, tuple(tc.get("split_fractions", (0.7, 0.15, 0.15))),
                                        tc.get("rng_seed", 0))
    return {"train": train, "dev": dev, "test": test}[args.split]


def cmd_eval(args) -> int:
    ckpt = load_checkpoint(args.model) if args.model else None
    records = _eval_records(args, ckpt)
    if args.estimator == "model":
        if ckpt is None:
            raise ConfigError("--estimator model needs --model")
        report = evaluate_regression(ckpt, records, name="qtnet")
    else:
        fallback = IntervalLabels(qt_ms=args.fallback_qt, hr_bpm=args.fallback_hr)
        report = evaluate_regression(lambda r: delineate(r.signal).labels, records, fallback,
                                     name="delineator")
    text = report.to_json()
    if args.report:
        Path(args.report).write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_delineate(args) -> int:
    records = read_corpus(args.corpus)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["record_id", "qt_ms", "hr_bpm", "quality"])
        failures = 0
        for rec in records:
            try:
                d = delineate(rec.signal)
                writer.writerow([rec.record_id, f"{d.qt_ms:.3f}", f"{d.hr_bpm:.3f}", f"{d.quality:.3f}"])
            except QTNetError as exc:
                failures += 1
                writer.writerow([rec.record_id, "", "", "0.000"])
                _log(f"{rec.record_id}: {exc}")
    print(json.dumps({"records": len(records), "failures": failures}))
    return 0


def cmd_monitor(args) -> int:
    ckpt = load_checkpoint(args.model)
    config = AlarmConfig.from_checkpoint(ckpt, adjustment=args.adjustment)
    manifest = _read_json(args.timeline)
    timelines = timelines_from_manifest(manifest, lead=args.lead, drug=args.drug)
    estimator = checkpoint_estimator(ckpt)
    n_alarms = n_points = 0
    with open(args.out, "w") as fh:
        for tl in timelines:
            for d in run_dosing_session(tl, estimator, config):
                row = {"subject": tl.subject_id, "t_h": d.time_offset_h, "qtc_est": d.qtc_est_ms,
                       "qtc_adj": d.qtc_adjusted_ms, "triggered": d.triggered,
                       "criterion": d.criterion}
                fh.write(json.dumps(row, sort_keys=True) + "\n")
                n_points += 1
                n_alarms += d.triggered
    print(json.dumps({"timelines": len(timelines), "timepoints": n_points, "alarms": n_alarms,
                      "training_mae_qtc_ms": config.training_mae_qtc_ms}, sort_keys=True))
    return 0


def _grid(text: str) -> List[float]:
    if ":" in text:
        lo, hi, step = (float(v) for v in text.split(":"))
        n = int(round((hi - lo) / step)) + 1
        return [round(lo + i * step, 12) for i in range(n)]
    return [float(v) for v in text.split(",") if v.strip()]


def cmd_pv_curve(args) -> int:
    rows = predictive_value_curve(args.sens, args.spec, _grid(args.grid))
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["prevalence", "ppv", "npv"])
        for r in rows:
            writer.writerow([f"{r.prevalence:.6g}", f"{r.ppv:.6f}", f"{r.npv:.6f}"])
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qtnet", description="Single-lead QT estimation toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("ingest", help="index WFDB records + measurement table into a manifest")
    s.add_argument("directory")
    s.add_argument("--manifest", required=True)
    s.add_argument("--table", help="measurement CSV (default: the only *.csv in the directory)")
    s.add_argument("--columns", help="JSON column-name mapping")
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("synth", help="write a synthetic labelled corpus")
    s.add_argument("--spec", help="JSON corpus spec (defaults apply to missing keys)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("train", help="train QTNet on a labelled corpus")
    s.add_argument("--corpus", required=True)
    s.add_argument("--config", help="JSON with model and training keys")
    s.add_argument("--out", required=True)
    s.add_argument("--history", help="history CSV path (default: <out>.history.csv)")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="regression metrics on a labelled corpus")
    s.add_argument("--model")
    s.add_argument("--corpus", required=True)
    s.add_argument("--report")
    s.add_argument("--estimator", choices=("model", "delineator"), default="model")
    s.add_argument("--split", choices=("all", "train", "dev", "test"), default="all")
    s.add_argument("--fallback-qt", type=float, default=394.0)
    s.add_argument("--fallback-hr", type=float, default=77.0)
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("delineate", help="classical QT/HR per record")
    s.add_argument("--corpus", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_delineate)

    s = sub.add_parser("monitor", help="run prolongation alarms over dosing timelines")
    s.add_argument("--model", required=True)
    s.add_argument("--timeline", required=True, help="manifest JSON from `ingest`")
    s.add_argument("--out", required=True)
    s.add_argument("--lead", default="I")
    s.add_argument("--drug")
    s.add_argument("--adjustment", choices=("add", "subtract", "none"), default="add")
    s.set_defaults(func=cmd_monitor)

    s = sub.add_parser("pv-curve", help="PPV/NPV against prevalence")
    s.add_argument("--sens", type=float, required=True)
    s.add_argument("--spec", type=float, required=True)
    s.add_argument("--grid", default="0.05:0.95:0.05", help="lo:hi:step or comma list")
    s.add_argument("--out")
    s.set_defaults(func=cmd_pv_curve)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except QTNetError as exc:
        print(json.dumps(exc.to_dict(), sort_keys=True), file=sys.stderr)
        return 2
    except (OSError, ValueError, KeyError) as exc:
        print(json.dumps({"error": "io-error" if isinstance(exc, OSError) else "invalid-input",
                          "message": str(exc)}, sort_keys=True), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
