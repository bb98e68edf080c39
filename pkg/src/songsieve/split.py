"""File-exclusive train/validation/test assignment balanced per class."""

from __future__ import annotations

import csv
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .annotations import Annotation
from .errors import EmptyInput

SUBSETS = ("train", "validation", "test")


@dataclass
class SplitPlan:
    assignment: dict[str, str]
    per_class_counts: dict[str, tuple[int, int, int]]
    warnings: list[str] = field(default_factory=list)

    def files_in(self, subset: str) -> list[str]:
        return sorted(sid for sid, s in self.assignment.items() if s == subset)


def split_objective(
    file_counts: dict[str, Counter],
    assignment: dict[str, str],
    targets: Sequence[float] = (0.8, 0.1, 0.1),
) -> float:
    """Sum over classes of |achieved - target| fractions, weighted by 1/class size.

    Unassigned files count toward no subset, so the value is also defined
    for partial assignments.
    """
    totals: Counter = Counter()
    per: dict[str, list[int]] = defaultdict(lambda: [0, 0, 0])
    for sid, counts in file_counts.items():
        totals.update(counts)
        s = assignment.get(sid)
        if s is not None:
            k = SUBSETS.index(s)
            for c, n in counts.items():
                per[c][k] += n
    return sum(
        sum(abs(per[c][k] / n_c - targets[k]) for k in range(3)) / n_c
        for c, n_c in totals.items()
    )


def plan_split(
    annotations: Iterable[Annotation],
    targets: Sequence[float] = (0.8, 0.1, 0.1),
    seed: int = 42,
) -> SplitPlan:
    """Greedy per-file assignment toward per-class target fractions.

    Files holding the globally rarest classes are placed first (ties: more
    annotations first, then source id). Each file goes to the subset that
    most reduces the class-size-weighted deviation from the targets; exact
    ties are broken with a generator seeded by ``seed``.
    """
    targets = tuple(float(t) for t in targets)
    if len(targets) != 3 or abs(sum(targets) - 1.0) > 1e-9 or min(targets) < 0:
        raise ValueError(f"targets must be three non-negative fractions summing to 1, got {targets}")
    file_counts: dict[str, Counter] = defaultdict(Counter)
    for a in annotations:
        file_counts[a.source_id][a.label] += 1
    if not file_counts:
        raise EmptyInput("no annotations to split")
    totals: Counter = Counter()
    for counts in file_counts.values():
        totals.update(counts)

    def difficulty(sid: str):
        counts = file_counts[sid]
        return (min(totals[c] for c in counts), -sum(counts.values()), sid)

    rng = np.random.default_rng(seed)
    per: dict[str, list[int]] = {c: [0, 0, 0] for c in totals}
    assignment: dict[str, str] = {}

    def class_dev(c: str, counts: list[int]) -> float:
        n_c = totals[c]
        return sum(abs(counts[k] / n_c - targets[k]) for k in range(3)) / n_c

    for sid in sorted(file_counts, key=difficulty):
        counts = file_counts[sid]
        costs = []
        for k in range(3):
            delta = 0.0
            for c, n in counts.items():
                trial = list(per[c])
                trial[k] += n
                delta += class_dev(c, trial) - class_dev(c, per[c])
            costs.append(delta)
        best = min(costs)
        tied = [k for k in range(3) if costs[k] <= best + 1e-12]
        k = tied[0] if len(tied) == 1 else int(tied[rng.integers(len(tied))])
        assignment[sid] = SUBSETS[k]
        for c, n in counts.items():
            per[c][k] += n

    warnings = []
    files_per_class: dict[str, set[str]] = defaultdict(set)
    for sid, counts in file_counts.items():
        for c in counts:
            files_per_class[c].add(sid)
    for c in sorted(totals):
        if len(files_per_class[c]) == 1:
            (sid,) = files_per_class[c]
            warnings.append(
                f"class {c!r} occurs only in file {sid!r}; all {totals[c]} annotations placed in {assignment[sid]}"
            )
    return SplitPlan(assignment, {c: tuple(per[c]) for c in sorted(per)}, warnings)


def write_split_csv(plan: SplitPlan, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["source_id", "subset"])
        for sid in sorted(plan.assignment):
            w.writerow([sid, plan.assignment[sid]])
    return path


def read_split_csv(path: str | Path) -> dict[str, str]:
    with open(path, newline="", encoding="utf-8") as fh:
        return {row["source_id"]: row["subset"] for row in csv.DictReader(fh)}


def write_class_counts_csv(plan: SplitPlan, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", *SUBSETS, "total"])
        for c, counts in plan.per_class_counts.items():
            w.writerow([c, *counts, sum(counts)])
    return path
