"""Target records and row-level datasets shared by the pipeline, models, and
the experiment service.

A target CSV stores one (problem, block) choice rate per row. A Dataset joins
those rows against a problem table, encoding each problem into its raw feature
vector. Splits are always by problem id, never by row, so the blocks of one
problem can never straddle a split boundary.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .gambles import Problem, ValidationError
from .space import encode_features

TARGET_CSV_HEADER = ["problem_id", "block", "feedback", "n", "a_rate"]


@dataclass(frozen=True)
class TargetRecord:
    """One observed or simulated choice rate for a (problem, block) pair."""

    problem_id: str
    block: int
    feedback: bool
    n: int
    a_rate: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.a_rate <= 1.0:
            raise ValidationError(f"a_rate {self.a_rate!r} outside [0, 1]")
        if self.block < 1:
            raise ValidationError(f"block must be >= 1, got {self.block}")
        if self.n < 0:
            raise ValidationError(f"n must be >= 0, got {self.n}")


def save_targets(records: Iterable[TargetRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TARGET_CSV_HEADER)
        for r in records:
            writer.writerow([r.problem_id, r.block, int(r.feedback), r.n, repr(r.a_rate)])


def load_targets(path: str | Path) -> list[TargetRecord]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != TARGET_CSV_HEADER:
            raise ValidationError(f"{path}: unexpected target CSV header {header!r}")
        out = []
        for row in reader:
            try:
                out.append(
                    TargetRecord(row[0], int(row[1]), bool(int(row[2])), int(row[3]), float(row[4]))
                )
            except (IndexError, ValueError) as exc:
                raise ValidationError(f"{path}: bad target row {row!r}: {exc}") from exc
    return out


@dataclass
class Dataset:
    """Aligned per-row arrays: one row per (problem, block) target."""

    ids: list[str]
    features: np.ndarray
    blocks: np.ndarray
    feedback: np.ndarray
    n: np.ndarray
    a_rate: np.ndarray
    split: str = ""

    def __len__(self) -> int:
        return len(self.ids)

    def subset(self, indices, split: str | None = None) -> "Dataset":
        idx = np.asarray(indices)
        return Dataset(
            [self.ids[i] for i in idx],
            self.features[idx],
            self.blocks[idx],
            self.feedback[idx],
            self.n[idx],
            self.a_rate[idx],
            self.split if split is None else split,
        )

    def problem_ids(self) -> list[str]:
        seen = dict.fromkeys(self.ids)
        return list(seen)


def build_dataset(
    problems: Sequence[Problem], records: Sequence[TargetRecord], split: str = ""
) -> Dataset:
    """Join targets against a problem table, encoding raw feature vectors.

    Every record's problem_id must resolve; all feature vectors must share one
    width (i.e. one schema per dataset).
    """
    if not records:
        raise ValidationError("no target records")
    by_id = {p.id: p for p in problems}
    feats = []
    for r in records:
        p = by_id.get(r.problem_id)
        if p is None:
            raise ValidationError(f"target references unknown problem id {r.problem_id!r}")
        feats.append(encode_features(p, r.block, r.feedback))
    widths = {f.shape[0] for f in feats}
    if len(widths) != 1:
        raise ValidationError(f"mixed feature widths {sorted(widths)} in one dataset")
    return Dataset(
        [r.problem_id for r in records],
        np.vstack(feats),
        np.array([r.block for r in records], dtype=np.int64),
        np.array([r.feedback for r in records], dtype=bool),
        np.array([r.n for r in records], dtype=np.int64),
        np.array([r.a_rate for r in records], dtype=np.float64),
        split,
    )


def split_by_problem(
    ds: Dataset, fractions: Sequence[float], seed: int = 0, names: Sequence[str] | None = None
) -> list[Dataset]:
    """Seeded problem-level partition into len(fractions) disjoint datasets."""
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValidationError("split fractions must sum to 1")
    pids = ds.problem_ids()
    order = np.random.default_rng(seed).permutation(len(pids))
    shuffled = [pids[i] for i in order]
    bounds = np.floor(np.cumsum(fractions) * len(pids)).astype(int)
    bounds[-1] = len(pids)
    names = list(names) if names else [f"split{i}" for i in range(len(fractions))]
    out = []
    start = 0
    for frac_idx, stop in enumerate(bounds):
        chosen = set(shuffled[start:stop])
        rows = [i for i, pid in enumerate(ds.ids) if pid in chosen]
        out.append(ds.subset(rows, split=names[frac_idx]))
        start = stop
    return out


def sample_problem_fraction(ds: Dataset, fraction: float, seed: int = 0) -> Dataset:
    """Keep a seeded random fraction of the dataset's problems (all its rows)."""
    if not 0.0 < fraction <= 1.0:
        raise ValidationError(f"fraction {fraction!r} outside (0, 1]")
    pids = ds.problem_ids()
    k = max(1, int(round(fraction * len(pids))))
    order = np.random.default_rng(seed).permutation(len(pids))[:k]
    chosen = {pids[i] for i in order}
    rows = [i for i, pid in enumerate(ds.ids) if pid in chosen]
    return ds.subset(rows)
