"""File formats: CSV tables, run manifests, surrogate model files.

CSV files are UTF-8 with a header row and ``.`` decimals; floats use
Python's shortest round-trip ``repr`` so a write/read cycle is bit-exact.
Metadata precedes the header as ``# key: value`` comment lines; every file
written by the CLI carries the digest of its run manifest that way (JSON
outputs carry it as a ``manifest_digest`` field).
"""
from __future__ import annotations

import csv
import hashlib
import io as _io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .datamodel import Dataset, Origin, ScreeningReport, validate_dataset
from .surrogate import SurrogateDistribution

EVAL_SUFFIX = ".eval.csv"
SURROGATE_FORMAT = "condsurrogate.surrogate"
SURROGATE_VERSION = 1


def fmt(x) -> str:
    """Canonical float text: shortest string that parses back to the same double."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


# --------------------------------------------------------------------------- CSV


def parse_csv(text: str):
    """Split a CSV document into ``(metadata, table)``.

    Leading ``# key: value`` lines become metadata; the first other line
    is the header. Blank lines are ignored.
    """
    meta = {}
    body = []
    in_header = True
    for line in text.splitlines():
        if in_header and line.startswith("#"):
            key, sep, value = line[1:].partition(":")
            if sep:
                meta[key.strip()] = value.strip()
            continue
        in_header = False
        if line.strip():
            body.append(line)
    table = [[cell.strip() for cell in row] for row in csv.reader(body)]
    return meta, table


def read_table(path):
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_csv(fh.read())


def read_dataset(path, origin: Origin, response_column: Optional[str] = "y"):
    """Read and validate a CSV file; returns ``(dataset, metadata)``."""
    meta, table = read_table(path)
    return validate_dataset(table, origin, response_column), meta


def write_rows(path, header, rows, meta: Optional[dict] = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(render_rows(header, rows, meta))


def render_rows(header, rows, meta: Optional[dict] = None) -> str:
    buf = _io.StringIO()
    for k, v in (meta or {}).items():
        buf.write(f"# {k}: {v}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([c if isinstance(c, str) else fmt(c) for c in row])
    return buf.getvalue()


def serialize_dataset(ds: Dataset, meta: Optional[dict] = None) -> str:
    header = list(ds.column_names)
    cols = [ds.X[:, j] for j in range(ds.d)]
    if ds.y is not None:
        header.append(ds.response_name)
        cols.append(ds.y)
    rows = zip(*[c.tolist() for c in cols])
    return render_rows(header, rows, meta)


def write_dataset(path, ds: Dataset, meta: Optional[dict] = None) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(serialize_dataset(ds, meta))


def write_screening_report(path, report: ScreeningReport, meta=None) -> None:
    ranks = report.ranks
    rows = ((i, float(report.avg_distances[i]), int(ranks[i]), bool(report.outlier_flags[i]))
            for i in range(report.n))
    write_rows(path, ["row_id", "avg_distance", "rank", "flagged"], rows, meta)


def write_l1_curve(path, report: ScreeningReport, meta=None) -> None:
    taus = np.arange(2, report.l1_curve.shape[0] + 2)
    write_rows(path, ["tau", "normalized_l1"], zip(taus.tolist(), report.l1_curve.tolist()), meta)


# --------------------------------------------------------------------------- manifest


@dataclass
class RunManifest:
    """Everything needed to reproduce one CLI run."""

    command: str
    inputs: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    tool_version: str = __version__

    def add_input(self, name, path) -> None:
        self.inputs[name] = {"file": Path(path).name, "sha256": sha256_file(path)}

    def to_dict(self) -> dict:
        return {"command": self.command, "inputs": self.inputs, "params": _jsonable(self.params),
                "results": _jsonable(self.results), "tool_version": self.tool_version}

    @property
    def digest(self) -> str:
        return "sha256:" + hashlib.sha256(canonical_json(self.to_dict()).encode()).hexdigest()

    def header(self, stage: Optional[str] = None) -> dict:
        meta = {"generator": f"condsurrogate {self.tool_version}"}
        if stage is not None:
            meta["stage"] = stage
        meta["manifest"] = self.digest
        return meta

    def write(self, path) -> None:
        d = self.to_dict()
        d["digest"] = self.digest
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(d, sort_keys=True, indent=2, allow_nan=False) + "\n")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if hasattr(obj, "value") and not isinstance(obj, (str, int)):
        return obj.value
    return obj


# --------------------------------------------------------------------------- surrogate files


def surrogate_to_dict(dist: SurrogateDistribution, **info) -> dict:
    d = {
        "format": SURROGATE_FORMAT,
        "version": SURROGATE_VERSION,
        "sigma": dist.sigma,
        "deficit": dist.deficit,
        "n_conditionals": dist.n_conditionals,
        "means": dist.means.tolist(),
        "weights": dist.weights.tolist(),
    }
    d.update(_jsonable(info))
    return d


def write_surrogate(path, dist: SurrogateDistribution, **info) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(surrogate_to_dict(dist, **info), sort_keys=True, allow_nan=False) + "\n")


def read_surrogate(path):
    """Returns ``(distribution, info)`` where ``info`` is the full JSON document."""
    with open(path, encoding="utf-8") as fh:
        d = json.load(fh)
    if d.get("format") != SURROGATE_FORMAT:
        raise ValueError(f"{path} is not a surrogate model file")
    if d.get("version") != SURROGATE_VERSION:
        raise ValueError(f"unsupported surrogate model version {d.get('version')}")
    dist = SurrogateDistribution(d["means"], d["weights"], d["sigma"], d["deficit"],
                                 d["n_conditionals"])
    return dist, d
