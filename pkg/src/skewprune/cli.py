"""Command-line entry point: ``skewprune <command> ...``.

Config files are JSON objects:

* ``data synth``: SynthConfig fields (``n``, ``image_size``, ``correlation``, ``seed``, ...)
* ``train``: ``{"model": {ModelConfig fields}, "train": {TrainConfig fields}}``
* ``prune`` schedule: ``{"stages": [0, 1], "finetune_epochs": 1, "freeze": true, "train": {...}}``
* ``fl run``: ``{"model": {...}, "fl": {FlRunConfig fields}, "compare_unpruned": true}``

Exit codes: 0 ok, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from contextlib import nullcontext
from dataclasses import fields
from pathlib import Path

from . import checkpoint, fl, plotting
from .data import SynthConfig, generate, load_dataset_dir, write_directory
from .metrics import MetricsRecord, cost_report, effects, render_effects
from .model import ConfigError, ModelConfig, SwinMultimodal
from .trainer import StageSchedule, TrainConfig, evaluate, fit, skew_prune_pipeline

log = logging.getLogger("skewprune")


def _read_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return obj


def _build(cls, d: dict | None, where: str):
    d = dict(d or {})
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")
    try:
        return cls(**d)
    except TypeError as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _check_keys(d: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(d) - allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {unknown}")


def _write_json(path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=False) + "\n", encoding="utf-8")
    return path


def _emit(obj) -> None:
    print(json.dumps(obj, indent=2))


def _write_manifest(out_dir: Path, config: dict, command: str) -> None:
    files = sorted(str(p.relative_to(out_dir)) for p in out_dir.rglob("*") if p.is_file() and p.name != "manifest.json")
    _write_json(out_dir / "manifest.json", {"command": command, "config": config, "artifacts": files})


def _image_size(model: SwinMultimodal) -> int:
    return model.config.image_size


# ---------------------------------------------------------------- commands

def cmd_data_synth(args) -> int:
    raw = _read_json(args.config)
    cfg = _build(SynthConfig, raw, "data synth config")
    out = write_directory(generate(cfg), args.out)
    _write_manifest(out, raw, "data synth")
    log.info("wrote %d samples to %s", cfg.n, out)
    return 0


def cmd_train(args) -> int:
    raw = _read_json(args.config)
    _check_keys(raw, {"model", "train"}, "train config")
    mcfg = _build(ModelConfig, raw.get("model"), "model")
    tcfg = _build(TrainConfig, raw.get("train"), "train")
    ds = load_dataset_dir(args.data, mcfg.image_size)
    model, history = fit(SwinMultimodal(mcfg), ds, tcfg)
    n = checkpoint.save(model, args.out)
    _write_json(args.history, {"config": raw, "history": history, "checkpoint_bytes": n})
    final = history[-1] if history else {}
    _emit({"checkpoint": str(args.out), "bytes": n, **{k: final[k] for k in ("loss", "accuracy", "f1") if k in final}})
    return 0


def cmd_prune(args) -> int:
    raw = _read_json(args.schedule)
    _check_keys(raw, {"stages", "finetune_epochs", "freeze", "train"}, "schedule")
    schedule = StageSchedule(raw.get("stages", ()), raw.get("finetune_epochs", 1), raw.get("freeze", True))
    tcfg = _build(TrainConfig, raw.get("train"), "schedule.train")
    model = checkpoint.load(args.ckpt)
    size = _image_size(model)
    calib = load_dataset_dir(args.calib, size)
    train = load_dataset_dir(args.train, size)
    test = load_dataset_dir(args.test, size) if args.test else None

    def scored(m):
        s = evaluate(m, test, tcfg.f1_average) if test is not None else {}
        return cost_report(m, s.get("accuracy"), s.get("f1"))

    before = scored(model)
    pruned, records = skew_prune_pipeline(model, calib, train, schedule, tcfg)
    checkpoint.save(pruned, args.out)
    after = scored(pruned)
    report = Path(args.report)
    stage_dicts = [r.to_dict() for r in records]
    table = effects(before, after)
    _write_json(report / "prune_report.json", {
        "schedule": raw, "stages": stage_dicts,
        "before": before.to_dict(), "after": after.to_dict(), "effects": table,
    })
    _write_skew_csv(report / "skew.csv", stage_dicts)
    (report / "effects.txt").write_text(render_effects(table, "Baseline", "Pruned") + "\n", encoding="utf-8")
    plotting.plot_skew(stage_dicts, report / "skew.png")
    plotting.plot_effects(table, report / "effects.png")
    _write_manifest(report, raw, "prune")
    print(render_effects(table, "Baseline", "Pruned"))
    return 0


def _write_skew_csv(path: Path, stage_dicts: list[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stage", "block", "unit", "index", "skewness", "pruned"])
        for rec in stage_dicts:
            for blk in rec["blocks"]:
                sk, dec = blk["skew"], blk["decision"]
                for unit, key, gone in (("head", "head_skews", dec["heads_to_prune"]),
                                        ("group", "group_skews", dec["groups_to_prune"])):
                    for i, s in sk[key]:
                        w.writerow([sk["stage"], sk["block"], unit, i, f"{s:.6f}", int(i in gone)])


def cmd_eval(args) -> int:
    model = checkpoint.load(args.ckpt)
    ds = load_dataset_dir(args.data, _image_size(model))
    _emit(evaluate(model, ds, args.f1_average))
    return 0


def cmd_report(args) -> int:
    model = checkpoint.load(args.ckpt)
    rec = cost_report(model)
    _emit({"params": rec.params, "gflops": rec.gflops, "flops": rec.flops,
           "memory_mb": rec.memory_mb, "size_mb": rec.size_mb, "size_bytes": rec.size_bytes})
    return 0


def _write_fl_run(out: Path, res: fl.FlResult) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "rounds.jsonl", "w", encoding="utf-8") as fh:
        for r in res.rounds:
            fh.write(json.dumps(r.to_dict()) + "\n")
    with open(out / "rounds.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["round", "test_accuracy", "test_f1", "bytes_down", "bytes_up", "params", "pruned_stages"])
        for r in res.rounds:
            w.writerow([r.round, f"{r.test_accuracy:.6f}", f"{r.test_f1:.6f}", r.bytes_down, r.bytes_up,
                        r.params, ";".join(map(str, r.pruned_stages))])
    for rnd, recs in res.prune_events.items():
        stage_dicts = [sr.to_dict() for sr in recs]
        _write_json(out / f"prune_round{rnd:03d}.json", {"round": rnd, "stages": stage_dicts})
        plotting.plot_skew(stage_dicts, out / f"prune_round{rnd:03d}.png")
    checkpoint.save(res.model, out / "final.skpr")
    last = res.rounds[-1]
    final_acc = last.test_accuracy_after_prune if last.test_accuracy_after_prune is not None else last.test_accuracy
    final_f1 = last.test_f1_after_prune if last.test_f1_after_prune is not None else last.test_f1
    _write_json(out / "summary.json", {
        "final": cost_report(res.model, final_acc, final_f1).to_dict(),
        "pre_prune": res.pre_prune,
    })


def cmd_fl_run(args) -> int:
    raw = _read_json(args.config)
    _check_keys(raw, {"model", "fl", "compare_unpruned"}, "fl config")
    mcfg = _build(ModelConfig, raw.get("model"), "model")
    fcfg = _build(fl.FlRunConfig, raw.get("fl"), "fl")
    ds = load_dataset_dir(args.data, mcfg.image_size)
    out = Path(args.out)
    res = fl.run(fcfg, ds, mcfg)
    _write_fl_run(out, res)
    baseline = None
    if raw.get("compare_unpruned", bool(fcfg.prune_schedule)) and fcfg.prune_schedule:
        plain = _build(fl.FlRunConfig, {**fcfg.to_dict(), "prune_schedule": {}}, "fl")
        base = fl.run(plain, ds, mcfg)
        _write_fl_run(out / "unpruned", base)
        baseline = [r.to_dict() for r in base.rounds]
    plotting.plot_rounds([r.to_dict() for r in res.rounds], out / "rounds.png", baseline)
    _write_manifest(out, raw, "fl run")
    last = res.rounds[-1]
    _emit({"rounds": len(res.rounds), "final_params": last.params_after_prune or last.params,
           "final_test_accuracy": last.test_accuracy_after_prune if last.pruned_stages else last.test_accuracy})
    return 0


def cmd_fl_effects(args) -> int:
    out = Path(args.out)
    summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
    after = MetricsRecord.from_dict(summary["final"])
    base_path = out / "unpruned" / "summary.json"
    if base_path.exists():
        before = MetricsRecord.from_dict(json.loads(base_path.read_text(encoding="utf-8"))["final"])
        names = ("FL", "FL Pruned")
    else:
        model0 = checkpoint.load(out / "final.skpr")
        pre = summary.get("pre_prune") or {}
        fresh = SwinMultimodal(model0.config)
        before = cost_report(fresh, pre.get("accuracy"), pre.get("f1"))
        names = ("Unpruned", "FL Pruned")
    table = effects(before, after)
    text = render_effects(table, *names)
    _write_json(out / "effects.json", {"before": before.to_dict(), "after": after.to_dict(), "effects": table})
    (out / "effects.txt").write_text(text + "\n", encoding="utf-8")
    plotting.plot_effects(table, out / "effects.png")
    print(text)
    return 0


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="skewprune", description="Skewness-guided structured pruning toolkit")
    p.add_argument("--threads", type=int, default=None, help="cap BLAS worker threads")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    data = sub.add_parser("data", help="dataset utilities")
    dsub = data.add_subparsers(dest="data_command", required=True)
    synth = dsub.add_parser("synth", help="write a synthetic dataset directory")
    synth.add_argument("--config", required=True)
    synth.add_argument("--out", required=True)
    synth.set_defaults(func=cmd_data_synth)

    tr = sub.add_parser("train", help="train a model from scratch")
    tr.add_argument("--config", required=True)
    tr.add_argument("--data", required=True)
    tr.add_argument("--out", required=True, help="checkpoint path")
    tr.add_argument("--history", required=True, help="history JSON path")
    tr.set_defaults(func=cmd_train)

    pr = sub.add_parser("prune", help="stage-wise skewness pruning of a checkpoint")
    pr.add_argument("--ckpt", required=True)
    pr.add_argument("--calib", required=True)
    pr.add_argument("--train", required=True)
    pr.add_argument("--schedule", required=True)
    pr.add_argument("--out", required=True)
    pr.add_argument("--report", required=True)
    pr.add_argument("--test", default=None, help="optional held-out data for before/after scores")
    pr.set_defaults(func=cmd_prune)

    ev = sub.add_parser("eval", help="accuracy and F1 of a checkpoint")
    ev.add_argument("--ckpt", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--f1-average", default="macro", choices=("macro", "weighted"))
    ev.set_defaults(func=cmd_eval)

    rp = sub.add_parser("report", help="parameter / FLOP / memory / size report")
    rp.add_argument("--ckpt", required=True)
    rp.set_defaults(func=cmd_report)

    f = sub.add_parser("fl", help="federated simulation")
    fsub = f.add_subparsers(dest="fl_command", required=True)
    frun = fsub.add_parser("run")
    frun.add_argument("--config", required=True)
    frun.add_argument("--data", required=True)
    frun.add_argument("--out", required=True)
    frun.set_defaults(func=cmd_fl_run)
    feff = fsub.add_parser("effects")
    feff.add_argument("--out", required=True)
    feff.set_defaults(func=cmd_fl_effects)
    return p


def _thread_limit(n: int | None):
    if n is None:
        return nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with _thread_limit(args.threads):
            return args.func(args)
    except (ConfigError, ValueError, IndexError, OSError, RuntimeError, KeyError) as exc:
        msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"skewprune: error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
