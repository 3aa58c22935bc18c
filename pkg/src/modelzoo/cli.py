"""Command-line entry point: ``modelzoo run | competition | report``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
import traceback
from pathlib import Path

from . import __version__
from .artifacts import (
    fmt,
    runlog_sidecar,
    sha256_file,
    write_competition,
    write_json,
    write_loss_csv,
    write_manifest,
    write_runlog_csv,
    _write_csv,
)
from .config import ConfigError, ExperimentConfig, load_config
from .metrics import incremental_competition, pairwise_competition, summarize, timing_report
from .nncore import save_network
from .optim import cosine_lr
from .zoo import ZooMember, ZooState, multihead_runlog, run_continual, run_multihead_baseline

log = logging.getLogger("modelzoo")

REPORT_COLUMNS = [
    "run", "learner", "dataset", "replay_fraction", "epochs",
    "average_accuracy", "forgetting", "forward_transfer",
    "training_minutes", "inference_ms_per_sample",
]
# wall-clock columns; they differ between reruns of the same config
TIMING_COLUMNS = ("training_minutes", "inference_ms_per_sample")


class CliError(Exception):
    def __init__(self, kind: str, message: str, field: str | None = None, path: str | None = None):
        super().__init__(message)
        self.kind = kind
        self.field = field
        self.path = path

    def record(self) -> dict:
        return {"error": self.kind, "message": str(self), "field": self.field, "path": self.path}


def _load(args, overrides=None) -> ExperimentConfig:
    overrides = dict(overrides or {})
    try:
        cfg = load_config(args.config, overrides)
    except ConfigError as e:
        kind = "missing_file" if "not found" in e.message else "config"
        raise CliError(kind, e.message, e.field, e.path) from None
    if args.seed_override is not None:
        s = args.seed_override
        cfg = cfg.model_copy(update={"seeds": cfg.seeds.model_copy(update=dict(data=s, init=s, sampling=s))})
    if args.out is not None:
        cfg = cfg.model_copy(update={"output": Path(args.out)})
    return cfg


def _build_stream(cfg: ExperimentConfig):
    try:
        return cfg.build_stream()
    except FileNotFoundError as e:
        raise CliError("missing_file", str(e), "stream", str(e.filename)) from None
    except ValueError as e:
        raise CliError("data", str(e), "stream") from None


def run_dir_name(cfg: ExperimentConfig) -> str:
    s = cfg.seeds
    return f"{cfg.name}_d{s.data}_i{s.init}_s{s.sampling}"


def execute_run(cfg: ExperimentConfig) -> Path:
    """Run the configured learner and write the full artifact directory."""
    stream = _build_stream(cfg)
    spec = cfg.network_spec(stream)
    optim_cfg = cfg.optim_config()
    augment_cfg = cfg.augment_config()
    out = Path(cfg.output) / run_dir_name(cfg)
    out.mkdir(parents=True, exist_ok=True)
    (out / "error.json").unlink(missing_ok=True)
    write_json(cfg.echo(), out / "config.json")
    write_json(stream.manifest(), out / "stream_manifest.json")

    if cfg.learner == "multihead":
        t0 = time.perf_counter()
        accs, net, losses = run_multihead_baseline(stream, optim_cfg, spec, augment_cfg, cfg.seeds_obj(), True)
        runlog = multihead_runlog(stream, accs)
        runlog.episode_seconds.append(time.perf_counter() - t0)
        runlog.loss_traces.append(losses)
        runlog.lr_traces.append([cosine_lr(e, optim_cfg.epochs, optim_cfg.lr0) for e in range(len(losses))])
        ids = [t.id for t in stream]
        zoo = ZooState(len(stream), [ZooMember(net, tuple(ids), {i: 1.0 for i in ids}, 0)], ids)
        runlog.zoo = zoo
    else:
        runlog = run_continual(stream, cfg.zoo_config(), optim_cfg, spec, augment_cfg)

    write_runlog_csv(runlog, out / "runlog.csv")
    sidecar = runlog_sidecar(runlog)
    sidecar.update(config=cfg.echo(), seeds=cfg.seeds.model_dump())
    write_json(sidecar, out / "runlog.json")
    write_loss_csv(runlog, out / "losses.csv")
    minutes, ms = timing_report(runlog, list(stream))
    report = summarize(runlog, ms)
    metrics = report.to_dict()
    metrics.update(
        learner=cfg.learner,
        dataset=cfg.dataset,
        replay_fraction=0.0 if cfg.learner == "isolated" else cfg.zoo.replay_fraction,
        epochs=cfg.episode_epochs,
        training_minutes=minutes,
    )
    write_json(metrics, out / "metrics.json")
    ckpt = out / "checkpoints"
    ckpt.mkdir(exist_ok=True)
    for i, m in enumerate(runlog.zoo.members):
        save_network(m.network, ckpt / f"member_{i:03d}.json")
    write_json(
        [{"file": f"member_{i:03d}.json", "trained_tasks": list(m.trained_tasks),
          "data_fraction": {str(k): v for k, v in m.data_fraction.items()}, "episode": m.episode_index}
         for i, m in enumerate(runlog.zoo.members)],
        ckpt / "members.json",
    )
    write_manifest(out, {"version": __version__, "config": cfg.echo(), "sources": stream.sources, "complete": True})
    return out


def cmd_run(args) -> int:
    cfg = _load(args)
    out = execute_run(cfg)
    print(out)
    return 0


def cmd_competition(args) -> int:
    cfg = _load(args)
    mode = args.mode or cfg.competition.mode
    seed = cfg.seeds.init if cfg.competition.seed is None or args.seed_override is not None else cfg.competition.seed
    stream = _build_stream(cfg)
    spec = cfg.network_spec(stream)
    fn = pairwise_competition if mode == "pairwise" else incremental_competition
    try:
        m = fn(list(stream), cfg.optim_config(), seed, spec, cfg.augment_config(), args.threads)
    except ValueError as e:
        raise CliError("competition", str(e), "stream") from None
    m.config.update(name=cfg.name, stream=cfg.echo()["stream"], network=spec.to_dict())
    out = Path(cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    stem = f"{cfg.name}_{mode}_seed{seed}"
    write_competition(m, out / f"{stem}.csv", out / f"{stem}.json")
    files = {p: sha256_file(out / p) for p in (f"{stem}.csv", f"{stem}.json")}
    write_json({"mode": mode, "seed": seed, "runs": [r["tasks"] for r in m.runs], "files": files,
                "sources": stream.sources}, out / f"{stem}_manifest.json")
    print(out / f"{stem}.csv")
    return 0


def _report_row(d: Path):
    metrics_path = d / "metrics.json"
    manifest = d / "manifest.json"
    if not (metrics_path.is_file() and manifest.is_file() and (d / "runlog.csv").is_file()):
        return None
    m = json.loads(metrics_path.read_text(encoding="utf-8"))
    return {
        "run": d.name,
        "learner": m["learner"],
        "dataset": m["dataset"],
        "replay_fraction": fmt(m["replay_fraction"]),
        "epochs": str(m["epochs"]),
        "average_accuracy": fmt(m["average_accuracy"]),
        "forgetting": fmt(m["forgetting"]),
        "forward_transfer": fmt(m["forward_transfer"]),
        "training_minutes": fmt(m.get("training_minutes")),
        "inference_ms_per_sample": fmt(m.get("inference_ms_per_sample")),
    }


def build_report(run_dirs) -> tuple[list, list]:
    rows, warnings = [], []
    for d in map(Path, run_dirs):
        row = _report_row(d)
        if row is None:
            warnings.append({"warning": "incomplete_artifact", "path": str(d)})
            continue
        rows.append(row)
    rows.sort(key=lambda r: (r["dataset"], r["learner"], r["run"]))
    return rows, warnings


def cmd_report(args) -> int:
    rows, warnings = build_report(args.run_dirs)
    for w in warnings:
        print(json.dumps(w), file=sys.stderr)
    columns = [c for c in REPORT_COLUMNS if not (args.no_timings and c in TIMING_COLUMNS)]
    table = [[r[c] for c in columns] for r in rows]
    if args.out:
        out = Path(args.out)
        out.parent.mkdir(parents=True, exist_ok=True)
        _write_csv(out, columns, table)
        print(out)
    else:
        w = csv.writer(sys.stdout, lineterminator="\n")
        w.writerow(columns)
        w.writerows(table)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="modelzoo", description="Continual learning with a growing ensemble of small multi-head networks.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log per-episode progress")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="YAML experiment file")
        sp.add_argument("--out", help="output directory (overrides the config)")
        sp.add_argument("--seed-override", type=int, help="use this value for the data, init and sampling seeds")

    r = sub.add_parser("run", help="run one learner over a task stream")
    common(r)
    r.set_defaults(func=cmd_run)
    c = sub.add_parser("competition", help="pairwise or incremental task-competition matrix")
    common(c)
    c.add_argument("--mode", choices=("pairwise", "incremental"))
    c.add_argument("--threads", type=int, default=1, help="worker threads for independent cell runs")
    c.set_defaults(func=cmd_competition)
    rep = sub.add_parser("report", help="tabulate finished runs")
    rep.add_argument("run_dirs", nargs="+")
    rep.add_argument("--out", help="write the table here instead of stdout")
    rep.add_argument("--no-timings", action="store_true", help="drop the wall-clock columns")
    rep.set_defaults(func=cmd_report)
    return p


def _error_dir(args) -> Path | None:
    out = getattr(args, "out", None)
    return Path(out) if out else None


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except CliError as e:
        record = e.record()
    except Exception as e:  # training failures and anything unexpected
        record = {"error": "failure", "message": f"{type(e).__name__}: {e}", "field": None, "path": None}
        log.debug("%s", traceback.format_exc())
    print(json.dumps(record), file=sys.stderr)
    d = _error_dir(args)
    if d is not None and args.command != "report":
        d.mkdir(parents=True, exist_ok=True)
        write_json(record, d / "error.json")
    return 1


if __name__ == "__main__":
    sys.exit(main())
