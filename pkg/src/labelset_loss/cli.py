"""``labelset`` command line: generate, train, evaluate, check, compare.

Exit codes: 0 success, 1 property or training failure, 2 usage or input error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .checks import SUITES
from .exceptions import ConfigInvalid, LabelSetError, MissingData, NonFiniteLoss
from .labelspace import LabelSpace, members
from .losses import LossSpec
from .metrics import HardSeg, case_metrics
from .phantom import Phantom, PhantomConfig, generate
from .trainer import Model, TrainConfig, TrainLog, forward, train
from .volio import FeatureMap, read_volume, write_metrics_csv, write_volume

log = logging.getLogger("labelset")

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
BASELINE_KIND = "MeanClassDice"


@dataclass(frozen=True)
class CaseSpec:
    case_id: str
    split: str
    lprime: int
    phantom: PhantomConfig


@dataclass
class ExperimentConfig:
    labels: LabelSpace
    cases: list[CaseSpec]
    losses: list[tuple[str, LossSpec]]
    train: TrainConfig
    out: Path
    seed: int = 0
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    raw: dict = field(default_factory=dict, repr=False)

    def split(self, name: str) -> list[CaseSpec]:
        return [c for c in self.cases if c.split == name]


def _case_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def parse_config(raw: dict, seed: Optional[int] = None,
                 out: Optional[str] = None) -> ExperimentConfig:
    """Build an :class:`ExperimentConfig` from a decoded JSON document."""
    try:
        labels = LabelSpace(tuple(raw["labels"]))
        k = labels.num_labels
        seed = int(raw.get("seed", 0) if seed is None else seed)
        base = dict(raw.get("phantom", {}))
        jitter = float(base.pop("radius_jitter", 0.0))
        cases = []
        seen = set()
        for i, case in enumerate(raw["cases"]):
            cid = str(case["id"])
            if cid in seen:
                raise ConfigInvalid(f"duplicate case id {cid!r}")
            seen.add(cid)
            split = case.get("split", "train")
            if split not in ("train", "test"):
                raise ConfigInvalid(f"case {cid}: split must be 'train' or 'test'")
            lprime = labels.label_set(case["lprime"]).mask if case.get("lprime") else 0
            params = {**base, **case.get("phantom", {})}
            case_seed = int(case.get("seed", _case_seed(seed, i)))
            radii = params.get("shell_radii", ())
            if jitter and radii:
                rng = np.random.default_rng(case_seed)
                radii = tuple(float(r) for r in
                              np.asarray(radii) + rng.uniform(-jitter, jitter, len(radii)))
            cfg = PhantomConfig(dims=tuple(params.get("dims", (16, 16, 16))),
                                num_labels=k,
                                noise_sigma=float(params.get("noise_sigma", 0.0)),
                                class_means=tuple(params.get("class_means", ())),
                                shell_radii=tuple(radii),
                                seed=case_seed)
            cases.append(CaseSpec(cid, split, lprime, cfg))
        losses = []
        for entry in raw.get("losses", [{"kind": "LeafDice"}]):
            entry = dict(entry)
            name = entry.pop("name", entry.get("kind"))
            losses.append((str(name), LossSpec(**entry)))
        if len({n for n, _ in losses}) != len(losses):
            raise ConfigInvalid("loss names must be unique")
        tcfg = TrainConfig(**{**raw.get("train", {}), "seed": seed})
        spacing = tuple(float(s) for s in raw.get("spacing", (1.0, 1.0, 1.0)))
        out_dir = Path(out if out is not None else raw.get("out", "labelset_out"))
    except ConfigInvalid:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigInvalid(f"invalid experiment config: {exc}") from exc
    if not cases:
        raise ConfigInvalid("config lists no cases")
    return ExperimentConfig(labels, cases, losses, tcfg, out_dir, seed, spacing, raw)


def load_config(path, seed: Optional[int] = None,
                out: Optional[str] = None) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"{path}: {exc}") from exc
    return parse_config(raw, seed, out)


# ---------------------------------------------------------------- files

def volume_paths(out: Path, case_id: str) -> dict[str, Path]:
    vol = out / "volumes"
    return {part: vol / f"{case_id}_{part}.lsv" for part in ("features", "truth", "partial")}


def cmd_generate(cfg: ExperimentConfig) -> dict:
    """Write features, truth and partial LSV1 volumes per case plus a manifest."""
    (cfg.out / "volumes").mkdir(parents=True, exist_ok=True)
    manifest = {"labels": list(cfg.labels.names), "seed": cfg.seed, "cases": []}
    for case in cfg.cases:
        ph = generate(case.phantom, case.lprime, case.case_id)
        paths = volume_paths(cfg.out, case.case_id)
        write_volume(paths["features"], FeatureMap(ph.dims, ph.features))
        write_volume(paths["truth"], ph.truth)
        write_volume(paths["partial"], ph.partial)
        manifest["cases"].append({
            "id": case.case_id,
            "split": case.split,
            "dims": list(ph.dims),
            "lprime": [cfg.labels.names[c] for c in members(case.lprime)],
            "files": {k: str(p.relative_to(cfg.out)) for k, p in paths.items()},
        })
    with open(cfg.out / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")
    return manifest


def load_case(cfg: ExperimentConfig, case: CaseSpec) -> Phantom:
    paths = volume_paths(cfg.out, case.case_id)
    missing = [str(p) for p in paths.values() if not p.exists()]
    if missing:
        raise MissingData(f"missing volumes for case {case.case_id}: {missing}; "
                          "run `labelset generate` first")
    feats = read_volume(paths["features"])
    truth = read_volume(paths["truth"])
    part = read_volume(paths["partial"])
    return Phantom(feats.dims, np.asarray(feats.values, dtype=np.float64), truth, part,
                   case.lprime, case.case_id)


def training_cases(cfg: ExperimentConfig, spec: LossSpec) -> list[CaseSpec]:
    cases = cfg.split("train")
    if spec.kind.value == BASELINE_KIND:
        # fully supervised baseline: only volumes without an unannotated set
        cases = [c for c in cases if c.lprime == 0]
    if len(cases) < 2:
        raise MissingData(f"{spec.kind} needs at least 2 training cases, got {len(cases)}")
    return cases


def cmd_train(cfg: ExperimentConfig) -> dict[str, Model]:
    (cfg.out / "models").mkdir(parents=True, exist_ok=True)
    (cfg.out / "logs").mkdir(parents=True, exist_ok=True)
    models = {}
    for name, spec in cfg.losses:
        vols = [load_case(cfg, c) for c in training_cases(cfg, spec)]
        t0 = time.perf_counter()
        model, tlog = train(vols, spec, cfg.train)
        log.info("trained %s on %d volumes in %.1fs (best epoch %d, val loss %.4f)",
                 name, len(vols), time.perf_counter() - t0, tlog.best_epoch,
                 tlog.best_val_loss)
        _save_model(cfg.out / "models" / f"{name}.json", model, spec, tlog)
        tlog.write_csv(cfg.out / "logs" / f"{name}_train_log.csv")
        models[name] = model
    return models


def _save_model(path: Path, model: Model, spec: LossSpec, tlog: TrainLog) -> None:
    doc = {
        "loss": {"kind": spec.kind.value, "alpha": spec.alpha, "epsilon": spec.epsilon,
                 "log_floor": spec.log_floor},
        "model": model.to_dict(),
        "best_epoch": tlog.best_epoch,
        "best_val_loss": tlog.best_val_loss,
        "train_ids": tlog.train_ids,
        "val_ids": tlog.val_ids,
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def _load_model(path: Path) -> Model:
    if not path.exists():
        raise MissingData(f"missing model {path}; run `labelset train` first")
    with open(path, encoding="utf-8") as fh:
        return Model.from_dict(json.load(fh)["model"])


def cmd_evaluate(cfg: ExperimentConfig,
                 models: Optional[dict[str, Model]] = None) -> dict[str, list]:
    """Per-case, per-class DSC and HD95 on the test split, one CSV per loss."""
    (cfg.out / "metrics").mkdir(parents=True, exist_ok=True)
    (cfg.out / "predictions").mkdir(parents=True, exist_ok=True)
    tests = [load_case(cfg, c) for c in cfg.split("test")]
    if not tests:
        raise MissingData("config has no test cases")
    results = {}
    for name, _ in cfg.losses:
        model = models[name] if models else _load_model(cfg.out / "models" / f"{name}.json")
        rows = []
        for ph in tests:
            prob = forward(model, ph)
            write_volume(cfg.out / "predictions" / f"{name}_{ph.case_id}_prob.lsv", prob)
            pred = HardSeg.from_probmap(prob)
            truth = HardSeg(ph.dims, ph.true_labels, ph.num_labels)
            m = case_metrics(pred, truth, cfg.spacing)
            for c, cname in enumerate(cfg.labels.names):
                rows.append((ph.case_id, cname, m.dsc[c], m.hd95[c]))
        write_metrics_csv(cfg.out / "metrics" / f"{name}.csv", rows)
        results[name] = rows
    return results


def summarize(cfg: ExperimentConfig, results: dict[str, list]) -> dict:
    summary: dict = {}
    for name, rows in results.items():
        per_class = {}
        for cname in cfg.labels.names:
            dsc = np.array([r[2] for r in rows if r[1] == cname])
            hd = np.array([r[3] for r in rows if r[1] == cname and r[3] is not None])
            per_class[cname] = {
                "dsc_mean": float(dsc.mean()),
                "dsc_std": float(dsc.std()),
                "hd95_mean": float(hd.mean()) if hd.size else None,
                "hd95_std": float(hd.std()) if hd.size else None,
                "hd95_undefined": int(dsc.size - hd.size),
            }
        summary[name] = per_class
    return summary


def cmd_compare(cfg: ExperimentConfig) -> dict:
    for case in cfg.cases:
        if not all(p.exists() for p in volume_paths(cfg.out, case.case_id).values()):
            raise MissingData(f"volumes for case {case.case_id} not found under "
                              f"{cfg.out}; run `labelset generate` first")
    models = cmd_train(cfg)
    results = cmd_evaluate(cfg, models)
    doc = {
        "seed": cfg.seed,
        "labels": list(cfg.labels.names),
        "losses": [n for n, _ in cfg.losses],
        "summary": summarize(cfg, results),
    }
    with open(cfg.out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    return doc


def cmd_check(suite: str) -> int:
    results = SUITES[suite]()
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    if failed:
        print(f"FAILED: {failed[0].name}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="labelset",
        description="Label-set losses for partially supervised segmentation.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def experiment(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="experiment JSON file")
        p.add_argument("--out", help="output directory (overrides config 'out')")
        p.add_argument("--seed", type=int, help="global seed (overrides config 'seed')")
        return p

    experiment("generate", "write synthetic phantoms as LSV1 volumes")
    experiment("train", "train one model per configured loss")
    experiment("evaluate", "score trained models on the test cases")
    experiment("compare", "train and evaluate every loss, write a summary")
    chk = sub.add_parser("check", help="run a property suite")
    chk.add_argument("suite", choices=sorted(SUITES))
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "check":
        return cmd_check(args.suite)
    try:
        cfg = load_config(args.config, args.seed, args.out)
        if args.command == "generate":
            manifest = cmd_generate(cfg)
            print(f"wrote {3 * len(manifest['cases'])} volumes to {cfg.out / 'volumes'}")
        elif args.command == "train":
            cmd_train(cfg)
        elif args.command == "evaluate":
            cmd_evaluate(cfg)
        elif args.command == "compare":
            doc = cmd_compare(cfg)
            _print_summary(doc)
    except NonFiniteLoss as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    except (LabelSetError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


def _print_summary(doc: dict) -> None:
    labels = doc["labels"]
    print("mean DSC per class")
    print(f"{'loss':<24}" + "".join(f"{n[:10]:>11}" for n in labels))
    for name, per_class in doc["summary"].items():
        print(f"{name:<24}" + "".join(f"{per_class[n]['dsc_mean']:>11.3f}" for n in labels))


if __name__ == "__main__":
    sys.exit(main())
