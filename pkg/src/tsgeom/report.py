"""Check reports, residual aggregation, and deterministic serialization.

Reports are plain data: every residual family tracks its max, mean and the
worst sample point so a failure can be reproduced with a single-point rerun.
Canonical JSON output sorts keys and renders floats with Python's shortest
round-trip repr, so identical runs serialize byte-identically; wall-clock
times live in an isolated "timings" object excluded from that contract.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

PASS = "pass"
FAIL = "fail"
INCONCLUSIVE = "inconclusive"

# fail only when clearly out of tolerance; second-derivative noise must not
# produce false negatives
FAIL_FACTOR = 100.0


def verdict_for(residual: float, tol: float) -> str:
    if residual < tol:
        return PASS
    if residual > FAIL_FACTOR * tol:
        return FAIL
    return INCONCLUSIVE


class ResidualTracker:
    """Order-independent max/mean/worst-point accumulator."""

    def __init__(self, name: str):
        self.name = name
        self.count = 0
        self.total = 0.0
        self.max = 0.0
        self.worst_point = None

    def update(self, value: float, point=None):
        v = float(abs(value))
        first = self.count == 0
        self.count += 1
        self.total += v
        if first or v > self.max:
            self.max = v
            if point is not None:
                self.worst_point = tuple(float(x) for x in np.atleast_1d(point))

    def update_many(self, values, point=None):
        arr = np.atleast_1d(np.asarray(values, dtype=float)).ravel()
        if arr.size == 0:
            return
        self.update(float(np.max(np.abs(arr))), point)
        # count every component toward the mean
        self.count += arr.size - 1
        self.total += float(np.sum(np.abs(arr))) - float(np.max(np.abs(arr)))

    @property
    def mean(self):
        return self.total / self.count if self.count else 0.0

    def summary(self):
        return {
            "max_residual": self.max,
            "mean_residual": self.mean,
            "worst_point": list(self.worst_point) if self.worst_point else None,
        }


@dataclass
class CheckReport:
    """Residual statistics and verdict for one named identity family."""

    name: str
    tolerance: float
    max_residual: float
    mean_residual: float
    worst_point: tuple | None
    verdict: str
    details: dict = field(default_factory=dict)

    @staticmethod
    def from_trackers(name, tol, trackers, verdict=None, details=None):
        worst = max(trackers, key=lambda t: t.max) if trackers else None
        max_res = worst.max if worst else 0.0
        total = sum(t.total for t in trackers)
        count = sum(t.count for t in trackers)
        det = dict(details or {})
        det["families"] = {t.name: t.summary() for t in trackers}
        return CheckReport(
            name=name,
            tolerance=tol,
            max_residual=max_res,
            mean_residual=(total / count if count else 0.0),
            worst_point=worst.worst_point if worst else None,
            verdict=verdict if verdict is not None else verdict_for(max_res, tol),
            details=det,
        )

    def to_dict(self):
        return {
            "name": self.name,
            "tolerance": self.tolerance,
            "max_residual": self.max_residual,
            "mean_residual": self.mean_residual,
            "worst_point": list(self.worst_point) if self.worst_point else None,
            "verdict": self.verdict,
            "details": self.details,
        }


def _canonical(obj):
    """Recursively convert to JSON-safe plain data with float round-trip."""
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return [_canonical(v) for v in obj.tolist()]
    return obj


def canonical_json(data) -> str:
    """Sorted-key compact JSON; floats use shortest round-trip repr."""
    return json.dumps(_canonical(data), sort_keys=True, separators=(",", ":"),
                      ensure_ascii=False) + "\n"


def strip_timings(report_dict):
    out = dict(report_dict)
    out.pop("timings", None)
    return out


TABLE1_HEADER = "S.No. | M1 | M2 | α1 | α2 | β1 | β2 | Harmonicity"


def table1_markdown(rows) -> str:
    """Markdown table for the nine factor-class pairs, in suite row order."""
    lines = [TABLE1_HEADER, " | ".join(["---"] * 8)]
    for r in rows:
        lines.append(" | ".join(str(r[k]) for k in
                                ("no", "m1", "m2", "a1", "a2", "b1", "b2",
                                 "harmonicity")))
    return "\n".join(lines) + "\n"


def run_report_markdown(report_dict) -> str:
    lines = ["# Verification report", ""]
    overall = report_dict.get("overall_verdict", "?")
    lines.append(f"Overall: **{overall}**")
    lines.append("")
    lines.append("check | max residual | mean residual | verdict")
    lines.append("--- | --- | --- | ---")
    for chk in report_dict.get("checks", []):
        lines.append(
            f"{chk['name']} | {chk['max_residual']:.3e} | "
            f"{chk['mean_residual']:.3e} | {chk['verdict']}")
        if chk.get("details", {}).get("table1_rows"):
            lines.append("")
            lines.append(table1_markdown(chk["details"]["table1_rows"]))
    notes = report_dict.get("notes", [])
    if notes:
        lines.append("")
        lines.append("## Notes")
        for n in notes:
            lines.append(f"- {n}")
    return "\n".join(lines) + "\n"
