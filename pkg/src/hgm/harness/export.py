"""Plot-data bundle from a run directory's raw logs."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

from ..errors import MissingLog

LOG_FILES = ("train.jsonl", "eval.jsonl", "trajectories.jsonl", "timescale.jsonl")
CURVE_FILES = ("loco_curve.csv", "planner_curve.csv", "hier_curve.csv", "compare.csv")
COMMAND_WIDTH = 8


def _fmt(v):
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(x) for x in r])
    return buf.getvalue()


def _lines(path):
    if not path.exists():
        return []
    with path.open() as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _write(path, text):
    # skip rewriting identical content so repeated exports leave files untouched
    if path.exists() and path.read_text() == text:
        return path
    path.write_text(text)
    return path


def export_run(run_dir, out=None, dt=None):
    """Write CSVs for pelvis paths, per-level command streams and learning curves.

    Raises MissingLog when the directory holds no logs at all.
    """
    run = Path(run_dir)
    present = [f for f in LOG_FILES + CURVE_FILES if (run / f).exists()]
    if not run.is_dir() or not present:
        raise MissingLog(f"no logs under {run}")
    if dt is None:
        dt = _dt_from_snapshot(run)
    bundle = Path(out) if out is not None else run / "export"
    bundle.mkdir(parents=True, exist_ok=True)

    traj = _lines(run / "trajectories.jsonl")
    _write(bundle / "com_trajectories.csv", _csv_text(
        ("scenario", "tick", "time", "x", "y", "yaw"),
        ((r["scenario"], r["tick"], r["tick"] * dt, r["x"], r["y"], r["yaw"]) for r in traj)))

    rows = []
    for r in _lines(run / "timescale.jsonl"):
        if "level" not in r:
            continue
        cmd = list(r["command"])[:COMMAND_WIDTH]
        cmd += [None] * (COMMAND_WIDTH - len(cmd))
        rows.append((r["level"], r["tick"], r["tick"] * dt, *cmd))
    _write(bundle / "timescale.csv", _csv_text(
        ("level", "tick", "time", *(f"c{i}" for i in range(COMMAND_WIDTH))), rows))

    curves = []
    for name in CURVE_FILES:
        path = run / name
        if not path.exists():
            continue
        with path.open() as fh:
            for row in csv.DictReader(fh):
                step = row.pop("step")
                for key, value in row.items():
                    curves.append((name[:-4], int(step), key, float(value)))
    _write(bundle / "learning_curves.csv", _csv_text(("curve", "step", "metric", "value"), curves))

    episodes = _lines(run / "eval.jsonl")
    _write(bundle / "eval_episodes.csv", _csv_text(
        ("scenario", "episode", "seed", "return", "success", "cause", "ticks"),
        ((e["scenario"], e["episode"], e["seed"], float(e["return"]), bool(e["success"]), e["cause"], e["ticks"])
         for e in episodes)))
    return bundle


def _dt_from_snapshot(run):
    snap = run / "config.snapshot"
    if snap.exists():
        data = json.loads(snap.read_text())
        return 1.0 / float(data["schedule"]["freq_low"])
    return 1.0 / 500.0


def command_change_ticks(rows, level):
    """Ticks at which ``level`` issued a command, from timescale.csv rows."""
    return [int(r["tick"]) for r in rows if r["level"] == level]
