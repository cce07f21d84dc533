"""Serializable experiment records and atomic report writers."""

import csv
import io
import json
import math
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np

SCHEMA_VERSION = "1.0"
Z_LIMIT = 4.0


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if hasattr(obj, "to_dict"):
        return _plain(obj.to_dict())
    return obj


def fmt17(x) -> str:
    """Round-trip float formatting for CSV."""
    return format(float(x), ".17g")


@dataclass
class CovarianceRow:
    t: float
    s: float
    empirical: float
    theoretical: float
    se: float

    @property
    def z(self) -> float:
        diff = self.empirical - self.theoretical
        if self.se == 0.0:
            return 0.0 if diff == 0.0 else math.copysign(math.inf, diff)
        return diff / self.se

    def to_dict(self):
        d = asdict(self)
        d["z"] = self.z
        return d


@dataclass
class ExperimentReport:
    """Record of one Monte Carlo or deterministic check."""

    name: str
    params: dict
    seed: Optional[int]
    m_paths: Optional[int]
    table: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    psd_repair: Optional[dict] = None
    tolerances: dict = field(default_factory=dict)
    passed: bool = False
    notes: list = field(default_factory=list)

    @property
    def max_abs_z(self) -> float:
        return max((abs(r.z) for r in self.table), default=0.0)

    def to_dict(self):
        return _plain(
            {
                "name": self.name,
                "params": self.params,
                "seed": self.seed,
                "m_paths": self.m_paths,
                "passed": self.passed,
                "max_abs_z": self.max_abs_z,
                "tolerances": self.tolerances,
                "psd_repair": self.psd_repair,
                "table": [r.to_dict() for r in self.table],
                "diagnostics": self.diagnostics,
                "notes": self.notes,
            }
        )

    def csv_rows(self):
        header = ["t", "s", "empirical", "theoretical", "se", "z"]
        rows = [[fmt17(r.t), fmt17(r.s), fmt17(r.empirical), fmt17(r.theoretical), fmt17(r.se), fmt17(r.z)] for r in self.table]
        return header, rows


def to_json(obj: Any) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"


def to_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def write_atomic(path, text: str) -> Path:
    """Write ``text`` to ``path`` via a temp file in the same directory plus rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_atomic_bytes(path, data: bytes) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path
