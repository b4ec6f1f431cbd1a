"""Batch experiment front-end.

Subcommands:
    run              execute a configured stream, writing JSONL step
                     reports, a summary, a CSV series and per-step
                     checkpoints (resumable with --resume)
    report           merge one or more finished runs into a per-step
                     mean/std CSV across seeds
    validate-config  static config validation, never touches data

Configs are TOML; see configs/ for examples. Every training and search
hyperparameter has a config key whose default matches the standard setup
(task lr 1e-4, batch 128, agent lr 0.001, entropy coefficient 0.01).
"""
import argparse
import csv
import hashlib
import json
import sys
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from . import checkpoint
from .arch import ArchDescriptor
from .controller import Actor
from .data import load_cifar100, remap_labels, synthetic_dataset
from .driver import (LearnerState, Scenario, StepReport, base_report,
                     incremental_learn, init_state, make_stream)
from .errors import CnasError, ConfigError, MergeError
from .search import SearchConfig
from .training import TrainConfig


def load_config(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as f:
            raw = tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"config parse error: {e}") from e
    return parse_config(raw, base_dir=path.parent)


def parse_config(raw, base_dir=Path(".")):
    run = raw.get("run", {})
    method = run.get("method", "cnas")
    if method not in ("cnas", "sa", "ras", "ras-hf"):
        raise ConfigError(f"unknown method {method!r}")

    data = raw.get("data", {})
    source = data.get("source", "synthetic")
    if source not in ("synthetic", "cifar100"):
        raise ConfigError(f"unknown data source {source!r}")
    if source == "cifar100":
        for key in ("train_path", "test_path"):
            if key not in data:
                raise ConfigError(f"cifar100 data needs data.{key}")

    scn = raw.get("scenario", {})
    try:
        scenario = Scenario(
            kind=scn.get("kind", "kclass"),
            k=int(scn.get("k", 2)),
            base_classes=int(scn.get("base_classes", 2)),
            k_range=tuple(scn.get("k_range", (1, 19))),
            p_choices=tuple(scn.get("p_choices", (0.25, 0.5))),
            half_gap=int(scn.get("half_gap", 5)),
            class_order=scn.get("class_order",
                                "seeded" if source == "synthetic"
                                else "default"))
    except ValueError as e:
        raise ConfigError(str(e)) from e

    arch = raw.get("architecture", {})
    if "descriptor" not in arch:
        raise ConfigError("missing architecture.descriptor")
    try:
        descriptor = ArchDescriptor.from_text(arch["descriptor"])
    except CnasError as e:
        raise ConfigError(f"bad base descriptor: {e}") from e

    tr = raw.get("training", {})
    try:
        train_cfg = TrainConfig(
            learning_rate=float(tr.get("learning_rate", 1e-4)),
            batch_size=int(tr.get("batch_size", 128)),
            max_epochs=int(tr.get("max_epochs", 50)),
            patience=int(tr.get("patience", 5)))
        se = raw.get("search", {})
        search_cfg = SearchConfig(
            sample_size=int(se.get("sample_size", 20)),
            epoch_limit=int(se.get("epoch_limit", 3)),
            max_wider=int(se.get("max_wider", 3)),
            max_deeper=int(se.get("max_deeper", 3)),
            noise_scale=float(se.get("noise_scale", 5e-3)),
            widen_factor=float(se.get("widen_factor", 1.5)),
            workers=int(run.get("workers", 1)))
    except ValueError as e:
        raise ConfigError(str(e)) from e

    return {
        "method": method,
        "seed": int(run.get("seed", 0)),
        "out": run.get("out", "runs/out"),
        "source": source,
        "data": data,
        "base_dir": base_dir,
        "scenario": scenario,
        "descriptor": descriptor,
        "train_cfg": train_cfg,
        "search_cfg": search_cfg,
        "agent_learning_rate": float(
            raw.get("search", {}).get("agent_learning_rate", 0.001)),
        "fingerprint": scenario_fingerprint(raw),
    }


def scenario_fingerprint(raw):
    """Hash of the scenario and data sections; runs merged by `report`
    must agree on it."""
    payload = json.dumps({"scenario": raw.get("scenario", {}),
                          "data": raw.get("data", {})},
                         sort_keys=True, default=str)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def build_dataset(cfg):
    data = cfg["data"]
    if cfg["source"] == "synthetic":
        ds = synthetic_dataset(
            classes=int(data.get("classes", 10)),
            per_class=int(data.get("per_class", 120)),
            dims=int(data.get("dims", 8)),
            seed=int(data.get("data_seed", cfg["seed"])),
            noise_std=float(data.get("noise_std", 0.12)),
            modes_per_class=int(data.get("modes_per_class", 1)))
    else:
        base = cfg["base_dir"]
        ds = load_cifar100(base / data["train_path"],
                           base / data["test_path"])
        limit = int(data.get("limit_classes", 0))
        if limit:
            keep = ds.indices(classes=range(limit))
            from .data import LabeledDataset
            ds = LabeledDataset(images=ds.images[keep],
                                labels=ds.labels[keep],
                                split=ds.split[keep],
                                coarse=ds.coarse[keep])
    if cfg["scenario"].class_order == "seeded":
        rng = np.random.default_rng(cfg["seed"])
        order = [int(c) for c in rng.permutation(ds.classes())]
        ds = remap_labels(ds, order)
    return ds


# ---------------------------------------------------------------- run

def save_state(state, step_dir):
    step_dir.mkdir(parents=True, exist_ok=True)
    checkpoint.save_network(state.network, step_dir / "network.bin")
    checkpoint.save_network(state.wider_actor.net, step_dir / "wider.bin")
    checkpoint.save_network(state.deeper_actor.net, step_dir / "deeper.bin")
    meta = {
        "descriptor": state.descriptor.to_text(),
        "seen_classes": [int(c) for c in state.seen_classes],
        "prev_val_accuracy": state.prev_val_accuracy,
        "wider_max": state.wider_actor.max_actions,
        "deeper_max": state.deeper_actor.max_actions,
        "agent_learning_rate": state.wider_actor.learning_rate,
    }
    (step_dir / "state.json").write_text(json.dumps(meta, indent=2))


def load_state(step_dir, base_step, steps, t):
    meta = json.loads((step_dir / "state.json").read_text())
    wider = Actor("wider", meta["wider_max"],
                  learning_rate=meta["agent_learning_rate"])
    wider.net = checkpoint.load_network(step_dir / "wider.bin")
    deeper = Actor("deeper", meta["deeper_max"],
                   learning_rate=meta["agent_learning_rate"])
    deeper.net = checkpoint.load_network(step_dir / "deeper.bin")

    # aggregated data is rebuilt from the deterministic stream
    chunks = [base_step] + [s for s in steps if s.t <= t]
    state = LearnerState(
        network=checkpoint.load_network(step_dir / "network.bin"),
        descriptor=ArchDescriptor.from_text(meta["descriptor"]),
        wider_actor=wider, deeper_actor=deeper,
        train_x=np.concatenate([c.train_images for c in chunks]),
        train_y=np.concatenate([c.train_labels for c in chunks]),
        val_x=np.concatenate([c.val_images for c in chunks]),
        val_y=np.concatenate([c.val_labels for c in chunks]),
        test_x=np.concatenate([c.test_images for c in chunks]),
        test_y=np.concatenate([c.test_labels for c in chunks]),
        seen_classes=list(meta["seen_classes"]),
        prev_val_accuracy=float(meta["prev_val_accuracy"]))
    return state


def write_series(reports, path):
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["step", "classes_seen", "aia", "params", "expanded"])
        for r in reports:
            w.writerow([r.t, r.classes_seen, repr(r.aia), r.params,
                        int(r.expanded)])


def write_summary(cfg, reports, path):
    summary = {
        "method": cfg["method"],
        "seed": cfg["seed"],
        "fingerprint": cfg["fingerprint"],
        "steps": len(reports),
        "final_aia": reports[-1].aia,
        "final_params": reports[-1].params,
        "expansions": sum(1 for r in reports if r.expanded),
        "keeps": sum(1 for r in reports[1:] if not r.expanded),
    }
    Path(path).write_text(json.dumps(summary, indent=2) + "\n")


def report_from_dict(d):
    return StepReport(
        t=d["t"], method=d["method"], classes_seen=d["classes_seen"],
        aia=d["aia"], val_accuracy=d["val_accuracy"],
        val_prev_dist=d["val_prev_dist"], params=d["params"],
        expanded=d["expanded"], wider=d["wider"], deeper=d["deeper"],
        wall_s=d["wall_s"], candidates=d.get("candidates", []))


def cmd_run(args):
    try:
        cfg = load_config(args.config)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.out is not None:
        cfg["out"] = args.out
    if args.workers is not None:
        cfg["search_cfg"].workers = args.workers

    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    ckpt_root = out / "checkpoints"
    jsonl_path = out / "reports.jsonl"

    dataset = build_dataset(cfg)
    base_step, steps = make_stream(cfg["scenario"], dataset, cfg["seed"])

    reports = []
    state = None
    start_after = -1
    if args.resume:
        done = sorted(int(p.name.split("_")[1])
                      for p in ckpt_root.glob("step_*")
                      if (p / "state.json").exists())
        if done:
            start_after = done[-1]
            state = load_state(ckpt_root / f"step_{start_after:04d}",
                               base_step, steps, start_after)
            if jsonl_path.exists():
                for line in jsonl_path.read_text().splitlines():
                    d = json.loads(line)
                    if d["t"] <= start_after:
                        reports.append(report_from_dict(d))

    mode = "a" if reports else "w"
    try:
        with open(jsonl_path, mode) as jsonl:
            def emit(st, rep):
                reports.append(rep)
                jsonl.write(json.dumps(rep.to_dict()) + "\n")
                jsonl.flush()
                save_state(st, ckpt_root / f"step_{rep.t:04d}")

            if state is None:
                state = init_state(base_step, cfg["descriptor"],
                                   cfg["train_cfg"], cfg["search_cfg"],
                                   cfg["seed"])
                state.wider_actor.learning_rate = cfg["agent_learning_rate"]
                state.deeper_actor.learning_rate = cfg["agent_learning_rate"]
                emit(state, base_report(state, cfg["method"]))
            for step in steps:
                if step.t <= start_after:
                    continue
                state, rep = incremental_learn(
                    state, step, cfg["method"], cfg["train_cfg"],
                    cfg["search_cfg"], cfg["seed"])
                emit(state, rep)
    except CnasError as e:
        print(f"error: {e} (partial reports kept in {out})",
              file=sys.stderr)
        return 1

    write_series(reports, out / "series.csv")
    write_summary(cfg, reports, out / "summary.json")
    print(f"run complete: {len(reports)} steps, final AIA "
          f"{reports[-1].aia:.4f}, reports in {out}")
    return 0


# ------------------------------------------------------------- report

def cmd_report(args):
    runs = []
    for run_dir in args.run_dirs:
        run_dir = Path(run_dir)
        summary_path = run_dir / "summary.json"
        series_path = run_dir / "series.csv"
        if not summary_path.exists() or not series_path.exists():
            print(f"error: {run_dir} is not a completed run",
                  file=sys.stderr)
            return 2
        summary = json.loads(summary_path.read_text())
        with open(series_path, newline="") as f:
            rows = list(csv.DictReader(f))
        runs.append((summary, rows))

    prints = {s["fingerprint"] for s, _ in runs}
    if len(prints) > 1:
        raise MergeError(f"runs cover different scenarios: {prints}")

    n_steps = min(len(rows) for _, rows in runs)
    out = csv.writer(args.out_file or sys.stdout)
    out.writerow(["step", "classes_seen", "aia_mean", "aia_std",
                  "params_mean", "params_std"])
    for i in range(n_steps):
        aias = [float(rows[i]["aia"]) for _, rows in runs]
        params = [float(rows[i]["params"]) for _, rows in runs]
        out.writerow([
            runs[0][1][i]["step"], runs[0][1][i]["classes_seen"],
            repr(float(np.mean(aias))), repr(float(np.std(aias))),
            repr(float(np.mean(params))), repr(float(np.std(params)))])
    return 0


def cmd_validate(args):
    try:
        load_config(args.config)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    print("ok")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="cnas",
        description="continual architecture search experiment runner")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute a configured stream")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--out", default=None)
    p_run.add_argument("--workers", type=int, default=None)
    p_run.add_argument("--resume", action="store_true")
    p_run.set_defaults(func=cmd_run)

    p_rep = sub.add_parser("report", help="merge runs into mean/std CSV")
    p_rep.add_argument("run_dirs", nargs="+")
    p_rep.add_argument("--out", dest="out_path", default=None)
    p_rep.set_defaults(func=cmd_report)

    p_val = sub.add_parser("validate-config", help="static config check")
    p_val.add_argument("--config", required=True)
    p_val.set_defaults(func=cmd_validate)

    args = parser.parse_args(argv)
    if getattr(args, "out_path", None):
        with open(args.out_path, "w", newline="") as f:
            args.out_file = f
            return args.func(args)
    if args.command == "report":
        args.out_file = None
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
