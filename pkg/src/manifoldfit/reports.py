"""Report containers and serialization for the decision pipeline."""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field

SCHEMA_VERSION = "manifoldfit/1"

__all__ = ["SCHEMA_VERSION", "DecisionReport", "loop_csv"]


@dataclass
class DecisionReport:
    """Composite verdict with the evidence that produced it.

    ``caveat`` is UNCONDITIONAL only for d = 1 verdicts; a d >= 2 YES is
    always qualified as necessary-conditions-only.
    """

    verdict: str                  # "YES" | "NO" | "INCONCLUSIVE"
    caveat: str                   # "UNCONDITIONAL" | "NECESSARY_CONDITIONS" | "NO_WITH_MECHANISM"
    mechanism: str
    d: int
    m: int
    input_descriptor: dict | None
    config: dict
    frames_used: int
    stability: dict
    gr_summary: dict
    loops: list = field(default_factory=list)
    culprit_samples: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    generated_at: str = ""

    def __post_init__(self):
        if not self.generated_at:
            self.generated_at = time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())

    def verdict_line(self) -> str:
        if self.verdict == "YES" and self.caveat == "NECESSARY_CONDITIONS":
            return f"YES (necessary conditions passed): {self.mechanism}"
        if self.verdict == "YES":
            return f"YES (unconditional): {self.mechanism}"
        if self.verdict == "NO":
            return f"NO: {self.mechanism}"
        return f"INCONCLUSIVE: {self.mechanism}"

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "decision_report",
            "verdict": self.verdict,
            "caveat": self.caveat,
            "mechanism": self.mechanism,
            "d": self.d,
            "m": self.m,
            "input_descriptor": self.input_descriptor,
            "config": self.config,
            "frames_used": self.frames_used,
            "stability": self.stability,
            "gr_summary": self.gr_summary,
            "loops": self.loops,
            "culprit_samples": self.culprit_samples,
            "diagnostics": self.diagnostics,
            "generated_at": self.generated_at,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kwargs)


def loop_csv(loop_indices, points, angles) -> str:
    """Per-sample loop data (position and moving-line angle) as CSV text."""
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["order", "sample", "angle"]
                    + [f"x{k}" for k in range(points.shape[1])])
    for order, (i, ang) in enumerate(zip(loop_indices, angles)):
        writer.writerow([order, int(i), f"{ang:.12g}"]
                        + [f"{c:.12g}" for c in points[i]])
    return buf.getvalue()
