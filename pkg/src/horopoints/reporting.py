"""Result records, JSON-lines / CSV emission and golden-file regression."""
from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .errors import GoldenMismatch


def _plain(v):
    """Convert numpy scalars, tuples and Fractions into JSON-friendly values."""
    if hasattr(v, "item") and not isinstance(v, (list, dict)):
        v = v.item()
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if type(v).__name__ == "Fraction":
        return str(v)
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


@dataclass
class ResultRecord:
    op: str
    params: dict
    payload: dict
    passed: bool | None = None
    seed: int | None = None
    version: str = __version__
    timestamp: float = field(default_factory=lambda: round(time.time(), 3))

    def __post_init__(self):
        self.params = _plain(dict(self.params))
        self.payload = _plain(dict(self.payload))

    @property
    def key(self) -> str:
        return self.op + "|" + json.dumps(self.params, sort_keys=True)

    def to_dict(self) -> dict:
        return {"op": self.op, "params": self.params, "payload": self.payload, "pass": self.passed,
                "seed": self.seed, "version": self.version, "timestamp": self.timestamp}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ResultRecord":
        return cls(d["op"], d["params"], d["payload"], d.get("pass"), d.get("seed"),
                   d.get("version", __version__), d.get("timestamp", 0.0))

    @classmethod
    def from_json(cls, line: str) -> "ResultRecord":
        return cls.from_dict(json.loads(line))

    def flat(self) -> dict:
        row = {"op": self.op}
        row.update({f"param.{k}": v for k, v in self.params.items()})
        row.update({f"value.{k}": v for k, v in self.payload.items()})
        row.update({"pass": self.passed, "seed": self.seed, "version": self.version, "timestamp": self.timestamp})
        return row


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (list, dict, bool)):
        return json.dumps(v)
    return str(v)


def _uncell(s: str):
    if s == "":
        return None
    try:
        return json.loads(s)
    except json.JSONDecodeError:
        return s


def write_records(records: list[ResultRecord], fmt: str = "jsonl") -> str:
    if fmt == "jsonl":
        return "".join(r.to_json() + "\n" for r in records)
    if fmt != "csv":
        raise ValueError(f"unknown format {fmt!r}")
    rows = [r.flat() for r in records]
    cols: list[str] = []
    for row in rows:
        cols += [k for k in row if k not in cols]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: _cell(row.get(k)) for k in cols})
    return buf.getvalue()


def read_records(text: str, fmt: str = "jsonl") -> list[ResultRecord]:
    if fmt == "jsonl":
        return [ResultRecord.from_json(line) for line in text.splitlines() if line.strip()]
    out = []
    for row in csv.DictReader(io.StringIO(text)):
        params = {k[6:]: _uncell(v) for k, v in row.items() if k.startswith("param.") and v != ""}
        payload = {k[6:]: _uncell(v) for k, v in row.items() if k.startswith("value.") and v != ""}
        out.append(ResultRecord(row["op"], params, payload, _uncell(row["pass"]), _uncell(row["seed"]),
                                row["version"], float(row["timestamp"])))
    return out


# ------------------------------------------------------------------ goldens

DEFAULT_RTOL = 1e-9


def _compare(a, b, rtol: float, path: str, diffs: list[str]) -> None:
    if isinstance(a, dict) and isinstance(b, dict):
        for k in sorted(set(a) | set(b)):
            if k not in a or k not in b:
                diffs.append(f"{path}.{k}: present in only one side")
            else:
                _compare(a[k], b[k], rtol, f"{path}.{k}", diffs)
    elif isinstance(a, list) and isinstance(b, list):
        if len(a) != len(b):
            diffs.append(f"{path}: length {len(a)} != {len(b)}")
        for i, (x, y) in enumerate(zip(a, b)):
            _compare(x, y, rtol, f"{path}[{i}]", diffs)
    elif isinstance(a, float) or isinstance(b, float):
        if isinstance(a, bool) or isinstance(b, bool) or not isinstance(a, (int, float)) or not isinstance(b, (int, float)):
            if a != b:
                diffs.append(f"{path}: {a!r} != {b!r}")
        elif not math.isclose(a, b, rel_tol=rtol, abs_tol=rtol * 1e-3):
            diffs.append(f"{path}: {a!r} != {b!r} (rtol {rtol})")
    elif a != b:
        diffs.append(f"{path}: {a!r} != {b!r}")


def golden_diff(records: list[ResultRecord], golden: dict, rtol: dict | float = DEFAULT_RTOL) -> list[str]:
    """Field-level differences between fresh records and a golden map key -> {payload, pass}."""
    diffs: list[str] = []
    fresh = {r.key: r for r in records}
    for key in sorted(set(fresh) | set(golden)):
        if key not in golden:
            diffs.append(f"{key}: not in golden file")
            continue
        if key not in fresh:
            diffs.append(f"{key}: missing from this run")
            continue
        g, r = golden[key], fresh[key]
        for field_name in sorted(set(g["payload"]) | set(r.payload)):
            tol = rtol.get(field_name, DEFAULT_RTOL) if isinstance(rtol, dict) else rtol
            _compare(r.payload.get(field_name), g["payload"].get(field_name), tol, f"{key}:{field_name}", diffs)
        if g.get("pass") != r.passed:
            diffs.append(f"{key}: pass {r.passed} != golden {g.get('pass')}")
    return diffs


def load_golden(path) -> dict:
    return json.loads(Path(path).read_text())


def bless(records: list[ResultRecord], path) -> None:
    data = {r.key: {"payload": r.payload, "pass": r.passed} for r in records}
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(json.dumps(data, indent=1, sort_keys=True) + "\n")


def check_golden(records: list[ResultRecord], path, rtol: dict | float = DEFAULT_RTOL) -> None:
    diffs = golden_diff(records, load_golden(path), rtol)
    if diffs:
        raise GoldenMismatch(diffs)
