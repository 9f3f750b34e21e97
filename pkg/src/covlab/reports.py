"""JSON and aligned-text report rendering.

JSON layout (keys sorted, two-space indent)::

    {
      "artifact":   {"name": "covlab", "version": "..."},
      "backend":    "numba" | "numpy",
      "experiment": "<kind>",
      "config":     {...},          # complete; feed back via --config to replay
      "results":    {...},          # experiment specific
      "checks":     [{"name", "value", "target", "tolerance", "passed"}, ...],
      "passed":     true | false,
      "timestamp":  "<UTC ISO-8601>"
    }

Only ``timestamp`` changes between identical runs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from covlab import __version__
from covlab._accel import backend_name


@dataclass
class Check:
    name: str
    value: object
    target: object
    tolerance: object
    passed: bool

    def to_dict(self):
        return {"name": self.name, "value": self.value, "target": self.target,
                "tolerance": self.tolerance, "passed": bool(self.passed)}


def band_check(name, value, target, tolerance) -> Check:
    return Check(name, value, target, tolerance, abs(value - target) <= tolerance)


@dataclass
class Report:
    experiment: str
    config: dict
    results: dict = field(default_factory=dict)
    checks: list[Check] = field(default_factory=list)
    lines: list[str] = field(default_factory=list)  # human-readable body

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_dict(self, timestamp: str | None = None) -> dict:
        return {
            "artifact": {"name": "covlab", "version": __version__},
            "backend": backend_name(),
            "experiment": self.experiment,
            "config": self.config,
            "results": _jsonable(self.results),
            "checks": [_jsonable(c.to_dict()) for c in self.checks],
            "passed": self.passed,
            "timestamp": timestamp or datetime.now(timezone.utc).isoformat(timespec="seconds"),
        }

    def to_json(self, timestamp: str | None = None) -> str:
        return json.dumps(self.to_dict(timestamp), indent=2, sort_keys=True, allow_nan=False) + "\n"

    def to_text(self) -> str:
        out = [f"covlab {__version__} :: {self.experiment}", ""]
        out.append("config")
        out.extend(format_table([(k, _fmt(v)) for k, v in sorted(_flatten(self.config).items())], indent=2))
        if self.lines:
            out.append("")
            out.extend(self.lines)
        if self.checks:
            out.append("")
            out.append("checks")
            rows = [(c.name, _fmt(c.value), _fmt(c.target), _fmt(c.tolerance), "PASS" if c.passed else "FAIL")
                    for c in self.checks]
            out.extend(format_table([("check", "value", "target", "tolerance", "status")] + rows, indent=2))
        return "\n".join(out) + "\n"

    def write(self, out_dir) -> tuple[Path, Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        jpath = out_dir / f"{self.experiment}.json"
        tpath = out_dir / f"{self.experiment}.txt"
        jpath.write_text(self.to_json(), encoding="utf-8")
        tpath.write_text(self.to_text(), encoding="utf-8")
        return jpath, tpath


def format_table(rows, indent=0) -> list[str]:
    rows = [tuple(str(c) for c in r) for r in rows]
    if not rows:
        return []
    widths = [max(len(r[i]) for r in rows if i < len(r)) for i in range(max(map(len, rows)))]
    pad = " " * indent
    return [pad + "  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_fmt(x) for x in v) + "]"
    return str(v)


def _flatten(d, prefix=""):
    out = {}
    for k, v in d.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            out.update(_flatten(v, key + "."))
        else:
            out[key] = v
    return out


def _jsonable(obj):
    """Convert numpy scalars/arrays and non-finite floats into plain JSON values."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "tolist"):
        return _jsonable(obj.tolist())
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj
