"""Command line entry point: ``spcl {synth,train,detect,eval,bench}``.

Configuration is one JSON file with optional sections ``synth``, ``train``,
``detect`` and ``bench``; any key can be overridden with
``--set section.key=value`` (the value is parsed as JSON, falling back to a
plain string).  Logs go to stderr, results to files under ``--out-dir``.
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from ..core import BBox, DetectorSet, SpclError
from ..curriculum import CurriculumConfig
from ..evaldet import Detection, corloc, evaluate_detections
from ..pacer import PaceState
from ..trainer import TrainConfig, detect, localize, train
from ..wsvm import SvmConfig
from . import bench
from .io import load_dataset, save_dataset
from .synth import SynthConfig, generate_synthetic

log = logging.getLogger("spcl")

DEFAULTS = {
    "synth": {},
    "train": {},
    "detect": {"nms_iou": 0.3, "score_threshold": 0.0},
    "bench": {"methods": ["spcl", "basic_spcl", "no_diversity", "no_curriculum", "no_alternation"],
              "seeds": [0, 1, 2, 3, 4]},
}


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg: dict, assignment: str) -> None:
    key, sep, value = assignment.partition("=")
    if not sep or not key:
        raise SpclError(f"--set expects key=value, got {assignment!r}")
    parts = key.split(".")
    node = cfg
    for p in parts[:-1]:
        node = node.setdefault(p, {})
        if not isinstance(node, dict):
            raise SpclError(f"--set {key}: {p!r} is not a section")
    node[parts[-1]] = _parse_value(value)


def load_config(path, overrides=()) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path:
        with open(path, encoding="utf-8") as fh:
            user = json.load(fh)
        if not isinstance(user, dict):
            raise SpclError("config file must hold a JSON object")
        for section, body in user.items():
            if isinstance(body, dict) and isinstance(cfg.get(section), dict):
                cfg[section].update(body)
            else:
                cfg[section] = body
    for item in overrides:
        apply_override(cfg, item)
    return cfg


def synth_config(section: dict, seed=None) -> SynthConfig:
    kw = dict(section)
    if seed is not None:
        kw["seed"] = seed
    try:
        return SynthConfig(**kw)
    except TypeError as exc:
        raise SpclError(f"bad synth config: {exc}") from None


def train_config(section: dict, num_classes=None, seed=None) -> TrainConfig:
    kw = dict(section)
    try:
        if "svm" in kw:
            kw["svm"] = SvmConfig(**kw["svm"])
        if "curriculum" in kw:
            kw["curriculum"] = CurriculumConfig(**kw["curriculum"])
        pace = kw.pop("pace", None)
        if pace is not None and num_classes is not None:
            kw["pace_init"] = PaceState.initial(num_classes, **pace)
        if "ablation" in kw:
            kw["ablation"] = frozenset(kw["ablation"])
        if seed is not None:
            kw["seed"] = seed
        return TrainConfig(**kw)
    except TypeError as exc:
        raise SpclError(f"bad train config: {exc}") from None


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_synth(args, cfg, out: Path) -> None:
    scfg = synth_config(cfg["synth"], args.seed)
    train_data, test_data, _ = generate_synthetic(scfg)
    save_dataset(train_data, out / "train.jsonl")
    save_dataset(test_data, out / "test.jsonl")
    _write_json(out / "synth_config.json", scfg.to_dict())
    log.info("wrote %d train and %d test bags to %s", len(train_data), len(test_data), out)


def cmd_train(args, cfg, out: Path) -> None:
    data = load_dataset(args.data)
    tcfg = train_config(cfg["train"], data.num_classes, args.seed)
    t0 = time.perf_counter()
    det, state = train(data, tcfg)
    elapsed = time.perf_counter() - t0
    _write_json(out / "model.json", det.to_json())
    with (out / "run_log.jsonl").open("w", encoding="utf-8") as fh:
        for rec in state.log:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    record = bench.RunRecord(
        method="+".join(sorted(tcfg.ablation)) or "spcl",
        seed=tcfg.seed,
        config={"train": bench.train_config_to_dict(tcfg), "data": str(args.data),
                "config_sections": cfg},
        log=state.log,
        metrics={"accuracy": bench.instance_accuracy(data, state.y)}
        if all(b.gt_objects is not None for b in data.bags) else {},
        wall_clock=elapsed,
    )
    _write_json(out / "run_record.json", record.to_json())
    log.info("trained %d iterations in %.2fs", state.iteration, elapsed)


def _load_model(path) -> DetectorSet:
    with open(path, encoding="utf-8") as fh:
        return DetectorSet.from_json(json.load(fh))


def cmd_detect(args, cfg, out: Path) -> None:
    det = _load_model(args.model)
    data = load_dataset(args.data, num_classes=det.num_classes)
    sec = cfg["detect"]
    found = detect(data.bags, det, nms_iou=sec.get("nms_iou", 0.3),
                   score_threshold=sec.get("score_threshold", 0.0))
    rows = [{"bag_id": bag.id, "class": c + 1, "bbox": list(box.as_tuple()), "score": s}
            for bag, per in zip(data.bags, found) for c, box, s in per]
    _write_json(out / "detections.json", rows)
    log.info("wrote %d detections", len(rows))


def cmd_eval(args, cfg, out: Path) -> None:
    with open(args.detections, encoding="utf-8") as fh:
        rows = json.load(fh)
    try:
        dets = [Detection(r["bag_id"], int(r["class"]) - 1, BBox.from_seq(r["bbox"]), float(r["score"]))
                for r in rows]
    except (KeyError, TypeError, ValueError) as exc:
        raise SpclError(f"malformed detections file: {exc}") from None
    data = load_dataset(args.data)
    if any(b.gt_objects is None for b in data.bags):
        raise SpclError("evaluation data must carry ground truth for every bag")
    metrics = evaluate_detections(dets, bench.gt_map(data), data.num_classes)
    metrics["corloc"] = None
    if args.train_data and args.model:
        det = _load_model(args.model)
        tdata = load_dataset(args.train_data, num_classes=det.num_classes)
        metrics["corloc"] = corloc(tdata.bags, localize(tdata, det), bench.gt_map(tdata))
    _write_json(out / "metrics.json", metrics)
    log.info("mean AP %.4f", metrics["mean_ap"])


def cmd_bench(args, cfg, out: Path) -> None:
    scfg = synth_config(cfg["synth"])
    tcfg = train_config(cfg["train"], scfg.C)
    sec = cfg["bench"]
    seeds = [args.seed] if args.seed is not None else list(sec.get("seeds", [0]))
    report, records = bench.run_benchmark(scfg, tcfg, sec.get("methods", ["spcl"]), seeds)
    (out / "report.json").write_text(bench.dump_report(report), encoding="utf-8")
    (out / "report.txt").write_text(bench.format_table(report), encoding="utf-8")
    with (out / "records.jsonl").open("w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_json(), sort_keys=True) + "\n")
    sys.stderr.write(bench.format_table(report))


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "detect": cmd_detect, "eval": cmd_eval,
            "bench": cmd_bench}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out-dir", default=".", help="directory for outputs (created if missing)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key, e.g. train.svm.reg_tradeoff=0.5")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="spcl", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="write synthetic train/test files")
    t = sub.add_parser("train", parents=[common], help="train detectors on a dataset file")
    t.add_argument("--data", required=True)
    d = sub.add_parser("detect", parents=[common], help="run detectors over a dataset file")
    d.add_argument("--model", required=True)
    d.add_argument("--data", required=True)
    e = sub.add_parser("eval", parents=[common], help="score detections against ground truth")
    e.add_argument("--detections", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--model", help="model for CorLoc on --train-data")
    e.add_argument("--train-data")
    sub.add_parser("bench", parents=[common], help="run the ablation benchmark")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args.config, args.set)
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        COMMANDS[args.command](args, cfg, out)
    except (SpclError, OSError, json.JSONDecodeError) as exc:
        log.error("%s", exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
