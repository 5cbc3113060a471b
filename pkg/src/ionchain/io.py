"""Deterministic CSV/JSON output and run manifests."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from . import __version__
from .units import CONSTANTS_VERSION, TrapConfig

FLOAT_FORMAT = "%.12e"


def config_snapshot(config: TrapConfig):
    return dataclasses.asdict(config)


def _plain(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return [_plain(v) for v in value.tolist()]
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    return value


def run_id(subcommand, config: TrapConfig, params):
    """Short hash of everything that determines a run's numbers."""
    payload = {
        "subcommand": subcommand,
        "config": config_snapshot(config),
        "params": _plain(params),
        "constants": CONSTANTS_VERSION,
        "version": __version__,
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def format_value(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return FLOAT_FORMAT % float(v)
    return str(v)


def atomic_write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(columns, rows, rid):
    lines = [f"# run_id={rid} columns={','.join(columns)}"]
    for row in rows:
        if len(row) != len(columns):
            raise ValueError(f"row has {len(row)} fields, expected {len(columns)}")
        lines.append(",".join(format_value(v) for v in row))
    return "\n".join(lines) + "\n"


def write_csv(path, columns, rows, rid, json_mirror=False):
    """Write one CSV (and optionally a JSON list of records next to it)."""
    rows = list(rows)
    atomic_write_text(path, csv_text(columns, rows, rid))
    written = [Path(path)]
    if json_mirror:
        jpath = Path(path).with_suffix(".json")
        records = [dict(zip(columns, _plain(list(r)))) for r in rows]
        atomic_write_text(jpath, json.dumps({"run_id": rid, "columns": list(columns),
                                             "rows": records}, indent=1) + "\n")
        written.append(jpath)
    return written


def read_csv(path):
    """Inverse of :func:`write_csv`: ``(run_id, columns, rows as strings)``."""
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("# run_id="):
            raise ValueError(f"{path}: missing header line")
        rid, cols = header[len("# run_id="):].split(" columns=")
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    return rid, cols.split(","), rows


@dataclasses.dataclass
class RunManifest:
    run_id: str
    subcommand: str
    config: dict
    params: dict
    constants_version: str = CONSTANTS_VERSION
    outputs: list = dataclasses.field(default_factory=list)
    wall_clock_s: float = 0.0
    warnings: list = dataclasses.field(default_factory=list)

    def write(self, out_dir):
        path = Path(out_dir) / f"{self.subcommand}_manifest.json"
        data = _plain(dataclasses.asdict(self))
        data["outputs"] = [str(p) for p in self.outputs]
        atomic_write_text(path, json.dumps(data, indent=1, sort_keys=True) + "\n")
        return path
