"""Experiment CLI: dataset synthesis, training runs, paired comparisons,
schedule ablations, and the verification suites.

Output root precedence: --out flag, then $FBL_OUT_DIR, then ./runs. Every
run directory is named by a hash of its canonical config JSON, so identical
configs land in identical paths and reruns are byte-reproducible.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import verify as verify_mod
from .backend import active_backend
from .data import SynthSpec, lambda_vector, load_dataset, save_dataset, synth_dataset
from .losses import LossKind, ScheduleKind, schedule_alpha
from .metrics import weight_norm_rank_correlation, write_metrics_csv
from .model import init_model, save_model
from .train import TrainConfig, evaluate, train

__all__ = ["main"]


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(obj) -> str:
    return hashlib.sha256(canonical_json(obj).encode()).hexdigest()[:12]


def _out_root(flag_value: str | None) -> Path:
    if flag_value:
        return Path(flag_value)
    env = os.environ.get("FBL_OUT_DIR")
    return Path(env) if env else Path("runs")


def _parse_milestones(text: str) -> tuple[tuple[int, float], ...]:
    """Parse 'epoch:divisor,epoch:divisor', e.g. '160:100,180:100'."""
    if not text.strip():
        return ()
    out = []
    for part in text.split(","):
        epoch, _, divisor = part.partition(":")
        out.append((int(epoch), float(divisor)))
    return tuple(out)


def _add_train_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=str, default=None,
                   help="TrainConfig JSON file; explicit flags override its fields")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--momentum", type=float, default=None)
    p.add_argument("--weight-decay", type=float, default=None)
    p.add_argument("--milestones", type=str, default=None,
                   help="lr anneal points as 'epoch:divisor,...', e.g. '160:100,180:100'")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--hidden-dim", type=int, default=None)
    p.add_argument("--feat-dim", type=int, default=None)
    p.add_argument("--adjust-at-eval", action=argparse.BooleanOptionalAction, default=None)
    p.add_argument("--loss", type=str, default=None,
                   choices=[k.value for k in LossKind])
    p.add_argument("--schedule", type=str, default=None,
                   choices=[s.value for s in ScheduleKind])
    p.add_argument("--alpha-max", type=float, default=None)
    p.add_argument("--norm-eps", type=float, default=None)
    p.add_argument("--tau", type=float, default=None, help="logit_adjust baseline strength")
    p.add_argument("--margin-scale", type=float, default=None, help="margin baseline strength")
    p.add_argument("--detach-norm", action=argparse.BooleanOptionalAction, default=None)


def _build_train_config(args) -> TrainConfig:
    if args.config:
        with open(args.config) as f:
            raw = json.load(f)
        if isinstance(raw, dict) and isinstance(raw.get("train"), dict):
            raw = raw["train"]  # accept a stored run config.json as input
        cfg = TrainConfig.from_dict(raw)
    else:
        cfg = TrainConfig()

    updates = {}
    for flag, name in (("epochs", "epochs"), ("batch_size", "batch_size"), ("lr", "lr"),
                       ("momentum", "momentum"), ("weight_decay", "weight_decay"),
                       ("seed", "seed"), ("hidden_dim", "hidden_dim"),
                       ("feat_dim", "feat_dim"), ("adjust_at_eval", "adjust_at_eval")):
        v = getattr(args, flag)
        if v is not None:
            updates[name] = v
    if args.milestones is not None:
        updates["lr_milestones"] = _parse_milestones(args.milestones)

    loss_updates = {}
    for flag, name in (("loss", "kind"), ("schedule", "schedule"), ("alpha_max", "alpha_max"),
                       ("norm_eps", "norm_eps"), ("tau", "baseline_tau"),
                       ("margin_scale", "baseline_margin_scale"), ("detach_norm", "detach_norm")):
        v = getattr(args, flag)
        if v is not None:
            loss_updates[name] = v

    loss_cfg = replace(cfg.loss, **loss_updates) if loss_updates else cfg.loss
    return replace(cfg, loss=loss_cfg, **updates)


def _final_eval(dataset, result, cfg: TrainConfig):
    if cfg.adjust_at_eval:
        alpha = schedule_alpha(cfg.loss.schedule, cfg.epochs, cfg.epochs, cfg.loss.alpha_max)
        return evaluate(result.model, dataset.test_x, dataset.test_y,
                        lambdas=lambda_vector(dataset.counts), alpha=alpha,
                        norm_eps=cfg.loss.norm_eps)
    return evaluate(result.model, dataset.test_x, dataset.test_y)


def run_training(data_dir: str | Path, cfg: TrainConfig, out_root: Path) -> dict:
    """Train once and write the run directory; returns the manifest dict."""
    dataset = load_dataset(data_dir)
    model = init_model(dataset.input_dim, cfg.hidden_dim, cfg.feat_dim,
                       dataset.num_classes, seed=cfg.seed)
    result = train(dataset, model, cfg)
    per_class, overall = _final_eval(dataset, result, cfg)

    run_config = {"dataset": str(data_dir), "train": cfg.to_dict()}
    run_id = config_hash(run_config)
    run_dir = out_root / f"run-{run_id}"
    run_dir.mkdir(parents=True, exist_ok=True)

    config_path = run_dir / "config.json"
    with open(config_path, "w") as f:
        json.dump(run_config, f, indent=2, sort_keys=True)
        f.write("\n")

    metrics_path = run_dir / "metrics.csv"
    write_metrics_csv(result.metrics, metrics_path)

    model_path = run_dir / "model.npz"
    save_model(result.model, model_path)

    final = result.metrics[-1]
    spearman = weight_norm_rank_correlation(dataset.counts, final.per_class_weight_norm)
    summary = {
        "run_id": run_id,
        "config_hash": run_id,
        "backend": active_backend,
        "loss_kind": cfg.loss.kind.value,
        "schedule": cfg.loss.schedule.value,
        "seed": cfg.seed,
        "epochs": cfg.epochs,
        "overall_acc": overall,
        "per_class_acc": [float(v) for v in per_class],
        "final_feat_norm_mean": [float(v) for v in final.per_class_feat_norm_mean],
        "final_weight_norm": [float(v) for v in final.per_class_weight_norm],
        "weight_norm_spearman": None if np.isnan(spearman) else spearman,
        "final_train_loss": final.mean_loss,
        "wall_time_s": result.wall_time_s,
    }
    summary_path = run_dir / "summary.json"
    with open(summary_path, "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")

    manifest = {
        "run_id": run_id,
        "created_utc": datetime.now(timezone.utc).isoformat(),
        "dataset_dir": str(data_dir),
        "config": str(config_path),
        "metrics_csv": str(metrics_path),
        "summary": str(summary_path),
        "model": str(model_path),
        "wall_time_s": result.wall_time_s,
    }
    with open(run_dir / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    manifest["run_dir"] = str(run_dir)
    return manifest


def _print_manifest(manifest: dict) -> None:
    print(f"run {manifest['run_id']} -> {manifest['run_dir']}")
    for key in ("config", "metrics_csv", "summary", "model"):
        print(f"  {key}: {manifest[key]}")


def cmd_synth(args) -> int:
    spec = SynthSpec(
        num_classes=args.classes,
        n_max=args.n_max,
        imbalance_factor=args.imbalance_factor,
        feature_dim=args.input_dim,
        cluster_spread=args.cluster_spread,
        class_center_scale=args.center_scale,
        seed=args.seed,
        test_per_class=args.test_per_class,
    )
    out_dir = Path(args.out) if args.out else _out_root(None) / f"synth-{config_hash(spec.to_dict())}"
    dataset = synth_dataset(spec)
    paths = save_dataset(dataset, out_dir)
    spec_path = out_dir / "synth_spec.json"
    with open(spec_path, "w") as f:
        json.dump(spec.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"dataset -> {out_dir}")
    for name in ("train", "test", "counts"):
        print(f"  {name}: {paths[name]}")
    print(f"  spec: {spec_path}")
    print(f"  train_samples: {dataset.counts.total}  "
          f"imbalance_factor: {dataset.counts.imbalance_factor():.4g}")
    return 0


def cmd_train(args) -> int:
    cfg = _build_train_config(args)
    manifest = run_training(args.data, cfg, _out_root(args.out))
    _print_manifest(manifest)
    return 0


def cmd_compare(args) -> int:
    cfg = _build_train_config(args)
    out_root = _out_root(args.out)
    ce_cfg = replace(cfg, loss=replace(cfg.loss, kind=LossKind.CE))
    fbl_cfg = replace(cfg, loss=replace(cfg.loss, kind=LossKind.FBL))

    ce_manifest = run_training(args.data, ce_cfg, out_root)
    fbl_manifest = run_training(args.data, fbl_cfg, out_root)

    with open(Path(ce_manifest["summary"])) as f:
        ce_summary = json.load(f)
    with open(Path(fbl_manifest["summary"])) as f:
        fbl_summary = json.load(f)

    ce_acc = np.array(ce_summary["per_class_acc"])
    fbl_acc = np.array(fbl_summary["per_class_acc"])
    n_tail = min(3, ce_acc.shape[0])
    comparison = {
        "ce_run": ce_manifest["run_id"],
        "fbl_run": fbl_manifest["run_id"],
        "seed": cfg.seed,
        "ce_overall_acc": ce_summary["overall_acc"],
        "fbl_overall_acc": fbl_summary["overall_acc"],
        "overall_gain": fbl_summary["overall_acc"] - ce_summary["overall_acc"],
        "per_class_gain": [float(v) for v in fbl_acc - ce_acc],
        "tail_classes": n_tail,
        "tail_mean_gain": float(fbl_acc[-n_tail:].mean() - ce_acc[-n_tail:].mean()),
    }
    cmp_path = out_root / f"compare-{ce_manifest['run_id']}-{fbl_manifest['run_id']}.json"
    with open(cmp_path, "w") as f:
        json.dump(comparison, f, indent=2, sort_keys=True)
        f.write("\n")

    _print_manifest(ce_manifest)
    _print_manifest(fbl_manifest)
    print(f"comparison: {cmp_path}")
    print(f"  overall: CE {comparison['ce_overall_acc']:.4f} vs "
          f"FBL {comparison['fbl_overall_acc']:.4f} "
          f"(gain {comparison['overall_gain']:+.4f})")
    print(f"  tail-{n_tail} mean gain: {comparison['tail_mean_gain']:+.4f}")
    return 0


def cmd_ablate_schedules(args) -> int:
    cfg = _build_train_config(args)
    out_root = _out_root(args.out)
    rows = []
    for kind in sorted(ScheduleKind, key=lambda k: k.value):
        run_cfg = replace(cfg, loss=replace(cfg.loss, kind=LossKind.FBL, schedule=kind))
        manifest = run_training(args.data, run_cfg, out_root)
        with open(Path(manifest["summary"])) as f:
            summary = json.load(f)
        acc = np.array(summary["per_class_acc"])
        n_tail = min(3, acc.shape[0])
        rows.append((kind.value, summary["overall_acc"], float(acc[-n_tail:].mean()),
                     manifest["run_id"]))
        print(f"{kind.value}: overall {summary['overall_acc']:.4f}")

    table_path = out_root / "schedule_ablation.csv"
    with open(table_path, "w") as f:
        f.write("schedule,overall_acc,tail_mean_acc,run_id\n")
        for name, overall, tail, run_id in rows:
            f.write(f"{name},{repr(overall)},{repr(tail)},{run_id}\n")
    print(f"ablation table: {table_path}")
    return 0


def cmd_verify(args) -> int:
    report = verify_mod.run_all(flip_df_extra_sign=args.inject_df_extra_sign_flip,
                                seed=args.seed)
    for suite in report["suites"]:
        status = "PASS" if suite["passed"] else "FAIL"
        print(f"{suite['name']}: {status}")
    if args.json:
        path = Path(args.json)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            json.dump(report, f, indent=2, sort_keys=True)
            f.write("\n")
        print(f"report: {path}")
    print("all checks passed" if report["all_passed"] else "FAILURES detected")
    return 0 if report["all_passed"] else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fbl",
        description="Feature-balanced loss experiments on synthetic long-tailed data",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="synthesize a long-tailed dataset")
    p_synth.add_argument("--out", type=str, default=None, help="dataset directory")
    p_synth.add_argument("--classes", type=int, default=10)
    p_synth.add_argument("--n-max", type=int, default=5000)
    p_synth.add_argument("--imbalance-factor", type=float, default=100.0)
    p_synth.add_argument("--input-dim", type=int, default=16)
    p_synth.add_argument("--cluster-spread", type=float, default=2.0)
    p_synth.add_argument("--center-scale", type=float, default=1.0)
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--test-per-class", type=int, default=100)
    p_synth.set_defaults(func=cmd_synth)

    for name, fn, helptext in (
        ("train", cmd_train, "train one model on a dataset"),
        ("compare", cmd_compare, "paired CE vs FBL runs with a shared seed"),
        ("ablate-schedules", cmd_ablate_schedules, "train all five stimulus schedules"),
    ):
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--data", type=str, required=True, help="dataset directory")
        p.add_argument("--out", type=str, default=None,
                       help="output root (default: $FBL_OUT_DIR or ./runs)")
        _add_train_flags(p)
        p.set_defaults(func=fn)

    p_verify = sub.add_parser("verify", help="run the verification suites")
    p_verify.add_argument("--json", type=str, default=None, help="write the JSON report here")
    p_verify.add_argument("--seed", type=int, default=0)
    p_verify.add_argument("--inject-df-extra-sign-flip", action="store_true",
                          help=argparse.SUPPRESS)
    p_verify.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
