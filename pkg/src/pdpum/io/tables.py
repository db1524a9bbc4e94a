"""CSV outputs: crack branches, trajectory index and run summaries."""

from __future__ import annotations

import csv
import itertools
import json
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np


def _g(v) -> str:
    return format(float(v), ".17g")


def write_crack_csv(left_seq: Sequence, right_seq: Sequence, path: str) -> None:
    """Columns ``x1,y1,x2,y2``: left branch, right branch; the shorter one padded empty."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x1", "y1", "x2", "y2"])
        for a, b in itertools.zip_longest(left_seq, right_seq):
            row = ["", ""] if a is None else [_g(a[0]), _g(a[1])]
            row += ["", ""] if b is None else [_g(b[0]), _g(b[1])]
            w.writerow(row)


def read_crack_csv(path: str) -> tuple[list[np.ndarray], list[np.ndarray]]:
    left, right = [], []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r, None)
        if header != ["x1", "y1", "x2", "y2"]:
            raise ValueError(f"{path}: unexpected header {header}")
        for row in r:
            if row[0]:
                left.append(np.array([float(row[0]), float(row[1])]))
            if row[2]:
                right.append(np.array([float(row[2]), float(row[3])]))
    return left, right


def write_trajectory_index(rows: Sequence, path: str) -> None:
    """Columns ``step,time,U_max,max_damage``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "time", "U_max", "max_damage"])
        for k, t, u, d in rows:
            w.writerow([int(k), _g(t), _g(u), _g(d)])


@dataclass
class RunSummary:
    """One row per method of a run."""

    experiment: str
    config_hash: str
    rows: list = field(default_factory=list)

    def add(self, method: str, u_max: float, damage_percent: float = float("nan"), wall_time: float = float("nan"), size: int = 0, note: str = ""):
        self.rows.append(
            {
                "method": method,
                "U_max": float(u_max),
                "damage_percent": float(damage_percent),
                "wall_time": float(wall_time),
                "size": int(size),
                "note": note,
            }
        )

    def value(self, method: str) -> float:
        for r in self.rows:
            if r["method"] == method:
                return r["U_max"]
        raise KeyError(method)

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["experiment", "config_hash", "method", "U_max", "damage_percent", "wall_time", "size", "note"])
            for r in self.rows:
                w.writerow([self.experiment, self.config_hash, r["method"], _g(r["U_max"]), _g(r["damage_percent"]), f"{r['wall_time']:.3f}", r["size"], r["note"]])

    def write_json(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, sort_keys=True)

    def format(self) -> str:
        out = [f"{self.experiment} (config {self.config_hash})"]
        for r in self.rows:
            extra = f"  damage {r['damage_percent']:.2f}%" if np.isfinite(r["damage_percent"]) else ""
            out.append(f"  {r['method']:<14s} U_max = {r['U_max']:.4e} m{extra}  [{r['size']} {'DOF' if 'PUM' in r['method'] else 'nodes'}, {r['wall_time']:.1f} s]")
        return "\n".join(out)
