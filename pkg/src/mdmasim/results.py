"""Experiment records and their CSV serialization.

One file per experiment, long format ``trial,metric,value``. Header comment
lines carry the artifact version and the full scenario; the summary block is
also emitted as comments so the data rows stay purely per-trial. Floats are
written with repr (shortest round-trip), which keeps reruns byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

ARTIFACT_VERSION = "0.1.0"


@dataclass
class ExperimentResult:
    experiment: str
    scenario: dict
    records: list[tuple[int, str, float]] = field(default_factory=list)
    summary: dict[str, float] = field(default_factory=dict)

    def add(self, trial: int, metric: str, value: float) -> None:
        self.records.append((int(trial), str(metric), float(value)))

    def values(self, metric: str) -> np.ndarray:
        return np.array([v for _, m, v in self.records if m == metric])

    def metrics(self) -> list[str]:
        seen: dict[str, None] = {}
        for _, m, _ in self.records:
            seen.setdefault(m)
        return list(seen)

    def summarize(self) -> dict[str, float]:
        """Mean, std, and 5/50/95 percentiles per metric, recomputable from
        the records at any time."""
        summary: dict[str, float] = {}
        for metric in self.metrics():
            vals = self.values(metric)
            summary[f"{metric}_mean"] = float(np.mean(vals))
            summary[f"{metric}_std"] = float(np.std(vals))
            for q in (5, 50, 95):
                summary[f"{metric}_p{q}"] = float(np.percentile(vals, q))
        self.summary = summary
        return summary

    def write_csv(self, path) -> None:
        if not self.summary:
            self.summarize()
        lines = [
            f"# mdmasim {ARTIFACT_VERSION} experiment={self.experiment}",
            f"# scenario: {json.dumps(self.scenario, sort_keys=True)}",
        ]
        lines += [f"# summary {k}={v!r}" for k, v in sorted(self.summary.items())]
        lines.append("trial,metric,value")
        lines += [f"{t},{m},{v!r}" for t, m, v in self.records]
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def read_csv(cls, path) -> "ExperimentResult":
        experiment, scenario, summary = "", {}, {}
        records: list[tuple[int, str, float]] = []
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.rstrip("\n")
                if line.startswith("# scenario: "):
                    scenario = json.loads(line[len("# scenario: "):])
                elif line.startswith("# summary "):
                    key, val = line[len("# summary "):].split("=", 1)
                    summary[key] = float(val)
                elif line.startswith("# mdmasim"):
                    experiment = line.split("experiment=", 1)[-1]
                elif line.startswith("#") or line == "trial,metric,value" or not line:
                    continue
                else:
                    t, m, v = line.split(",", 2)
                    records.append((int(t), m, float(v)))
        result = cls(experiment=experiment, scenario=scenario, records=records)
        result.summary = summary
        return result


@dataclass(frozen=True)
class CheckOutcome:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def require(checks: list[CheckOutcome]) -> bool:
    return all(c.passed for c in checks)
