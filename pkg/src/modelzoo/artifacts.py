"""On-disk formats for run logs, competition matrices and manifests."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
from pathlib import Path

import numpy as np

from .metrics import CompetitionMatrix
from .zoo import RunLog


def fmt(v) -> str:
    """Shortest round-trip text for a float; empty for NaN/None."""
    if v is None:
        return ""
    v = float(v)
    if math.isnan(v):
        return ""
    return repr(v)


def _parse(s: str) -> float:
    return float("nan") if s == "" else float(s)


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_bytes(buf.getvalue().encode("utf-8"))


def write_runlog_csv(log: RunLog, path) -> None:
    rows = [[e] + [fmt(v) for v in log.acc[e]] for e in range(log.n_episodes)]
    _write_csv(Path(path), ["episode"] + list(log.task_names), rows)


def read_runlog_csv(path) -> RunLog:
    with open(path, newline="", encoding="utf-8") as f:
        r = csv.reader(f)
        header = next(r)
        acc = np.array([[_parse(v) for v in row[1:]] for row in r])
    return RunLog(acc, header[1:])


def write_loss_csv(log: RunLog, path) -> None:
    rows = []
    for e, (losses, lrs) in enumerate(zip(log.loss_traces, log.lr_traces)):
        for epoch, (loss, lr) in enumerate(zip(losses, lrs)):
            rows.append([e, epoch, fmt(loss), fmt(lr)])
    _write_csv(Path(path), ["episode", "epoch", "mean_loss", "lr"], rows)


def runlog_sidecar(log: RunLog) -> dict:
    return {
        "task_names": list(log.task_names),
        "selections": [[int(t) for t in s] for s in log.selections],
        "sampling_weights": [np.asarray(w).tolist() for w in log.sampling_weights],
        "boost_weights": [np.asarray(w).tolist() for w in log.boost_history],
        "episode_seconds": list(log.episode_seconds),
    }


def write_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def write_competition(m: CompetitionMatrix, csv_path, json_path) -> None:
    rows = [[name] + [fmt(v) for v in m.values[i]] for i, name in enumerate(m.task_names)]
    _write_csv(Path(csv_path), [m.mode] + list(m.task_names), rows)
    write_json({"mode": m.mode, "task_names": m.task_names, "config": m.config, "runs": m.runs}, json_path)


def read_matrix_csv(path) -> tuple[list, np.ndarray]:
    with open(path, newline="", encoding="utf-8") as f:
        r = csv.reader(f)
        header = next(r)
        values = np.array([[_parse(v) for v in row[1:]] for row in r])
    return header[1:], values


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(root, extra: dict, name: str = "manifest.json") -> Path:
    """Hash every file under ``root`` (except the manifest) into ``name``."""
    root = Path(root)
    files = {
        str(p.relative_to(root)): sha256_file(p)
        for p in sorted(root.rglob("*"))
        if p.is_file() and p.name != name
    }
    path = root / name
    write_json({**extra, "files": files}, path)
    return path
