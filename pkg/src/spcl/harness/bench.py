"""Ablation benchmark: every (method, seed) pair on freshly generated data."""
from __future__ import annotations

import json
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from ..core import Dataset, SpclError, instance_truth
from ..evaldet import Detection, corloc, evaluate_detections
from ..trainer import TrainConfig, detect, localize, train
from .synth import SynthConfig, generate_synthetic

METHODS = {
    "spcl": frozenset(),
    "no_diversity": frozenset({"no_diversity"}),
    "no_curriculum": frozenset({"no_curriculum"}),
    "no_alternation": frozenset({"no_alternation"}),
    "basic_spcl": frozenset({"basic_spcl"}),
}
METRICS = ("accuracy", "mean_ap", "corloc")


def gt_map(data: Dataset) -> dict:
    return {bag.id: list(bag.gt_objects or ()) for bag in data.bags}


def to_detections(bags, found) -> list:
    return [Detection(bag.id, c, box, s) for bag, per in zip(bags, found) for c, box, s in per]


def instance_accuracy(data: Dataset, y) -> float:
    truth = np.concatenate([instance_truth(bag) for bag in data.bags])
    return float(np.mean(y.flat() == truth))


def evaluate_run(train_data, test_data, det, y, nms_iou=0.3) -> dict:
    found = detect(test_data.bags, det, nms_iou=nms_iou, score_threshold=None)
    ap = evaluate_detections(to_detections(test_data.bags, found), gt_map(test_data),
                             test_data.num_classes)
    return {
        "accuracy": instance_accuracy(train_data, y),
        "mean_ap": ap["mean_ap"],
        "per_class_ap": ap["per_class_ap"],
        "corloc": corloc(train_data.bags, localize(train_data, det), gt_map(train_data)),
    }


def train_config_to_dict(cfg: TrainConfig) -> dict:
    out = asdict(cfg)
    out["ablation"] = sorted(cfg.ablation)
    if cfg.pace_init is not None:
        out["pace_init"] = {k: list(v) if isinstance(v, tuple) else v
                            for k, v in asdict(cfg.pace_init).items()}
    return out


@dataclass
class RunRecord:
    method: str
    seed: int
    config: dict
    log: list
    metrics: dict
    wall_clock: float = 0.0
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "RunRecord":
        return cls(**obj)


def run_one(synth_cfg: SynthConfig, train_cfg: TrainConfig, method: str, seed: int) -> RunRecord:
    if method not in METHODS:
        raise SpclError(f"unknown method {method!r}; choose from {sorted(METHODS)}")
    scfg = replace(synth_cfg, seed=seed)
    tcfg = replace(train_cfg, seed=seed, ablation=METHODS[method])
    t0 = time.perf_counter()
    train_data, test_data, _ = generate_synthetic(scfg)
    det, state = train(train_data, tcfg)
    metrics = evaluate_run(train_data, test_data, det, state.y)
    return RunRecord(method, seed, {"synth": scfg.to_dict(), "train": train_config_to_dict(tcfg)},
                     state.log, metrics, time.perf_counter() - t0)


def run_benchmark(synth_cfg: SynthConfig, train_cfg: TrainConfig, methods: Iterable[str],
                  seeds: Sequence[int]) -> tuple[dict, list]:
    """Return ``(report, records)``.  The report is free of timings, so it
    depends only on the configs and seeds."""
    methods = list(dict.fromkeys(methods))
    seeds = list(seeds)
    if not methods or not seeds:
        raise SpclError("need at least one method and one seed")
    for m in methods:
        if m not in METHODS:
            raise SpclError(f"unknown method {m!r}; choose from {sorted(METHODS)}")
    records = [run_one(synth_cfg, train_cfg, m, s) for m in methods for s in seeds]
    rows = []
    for m in methods:
        recs = [r for r in records if r.method == m]
        row = {"method": m, "seeds": seeds}
        for key in METRICS:
            vals = [r.metrics[key] for r in recs]
            row[key] = vals
            row[f"mean_{key}"] = float(np.mean(vals))
        rows.append(row)
    rows.sort(key=lambda r: (-r["mean_accuracy"], r["method"]))
    report = {
        "synth": replace(synth_cfg, seed=0).to_dict() | {"seed": None},
        "train": train_config_to_dict(replace(train_cfg, ablation=frozenset())) | {"seed": None,
                                                                                  "ablation": None},
        "seeds": seeds,
        "rows": rows,
    }
    return report, records


def format_table(report: dict) -> str:
    head = ["rank", "method", "accuracy", "mean_ap", "corloc"]
    lines = [[str(i + 1), r["method"], f"{r['mean_accuracy']:.4f}", f"{r['mean_mean_ap']:.4f}",
              f"{r['mean_corloc']:.4f}"] for i, r in enumerate(report["rows"])]
    widths = [max(len(h), *(len(l[j]) for l in lines)) for j, h in enumerate(head)]
    fmt = lambda cells: "  ".join(c.ljust(w) if j == 1 else c.rjust(w)
                                  for j, (c, w) in enumerate(zip(cells, widths)))
    out = [fmt(head), fmt(["-" * w for w in widths])]
    out += [fmt(l) for l in lines]
    return "\n".join(out) + "\n"


def dump_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"
