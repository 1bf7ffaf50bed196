"""Datasets, CSV ingestion, pruning, standardization, and leakage-free splits.

CSV convention: header row, first column is the sample id, last column the
target, everything between is a feature.  Empty cells and the literal "NaN"
parse as NaN; NaN targets are rejected.

The train/validation/test split stratifies by membership signature: sample
ids are grouped by the exact subset of tasks containing them, each group is
shuffled and allocated to the three partitions by largest-remainder rounding,
and an id shared across tasks lands in the same partition everywhere.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DataError, NumericalError

RATIOS = (0.7, 0.2, 0.1)
PARTITIONS = ("train", "val", "test")


@dataclass
class TaskDataset:
    """One task's samples: feature matrix, targets, and sample identities."""

    name: str
    feature_names: list[str]
    X: np.ndarray  # (n, d), may contain NaN before pruning
    y: np.ndarray  # (n,)
    sample_ids: list[str]

    def __post_init__(self) -> None:
        self.X = np.asarray(self.X, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.X.ndim != 2:
            raise DataError(f"task {self.name!r}: X must be 2-dimensional")
        n, d = self.X.shape
        if len(self.y) != n or len(self.sample_ids) != n:
            raise DataError(f"task {self.name!r}: X, y, and sample_ids lengths disagree")
        if len(self.feature_names) != d:
            raise DataError(f"task {self.name!r}: {d} columns but {len(self.feature_names)} names")
        if len(set(self.sample_ids)) != n:
            dup = _first_duplicate(self.sample_ids)
            raise DataError(f"task {self.name!r}: duplicate sample id {dup!r}")

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]


@dataclass
class MultitaskDataset:
    """A category: several tasks restricted to a shared candidate feature set."""

    tasks: list[TaskDataset]
    candidate_features: list[str]

    def __post_init__(self) -> None:
        if not self.tasks:
            raise DataError("a category needs at least one task")
        for task in self.tasks:
            if task.feature_names != self.candidate_features:
                raise DataError(
                    f"task {task.name!r} columns do not match the candidate feature order"
                )

    @property
    def n_tasks(self) -> int:
        return len(self.tasks)

    @property
    def task_names(self) -> list[str]:
        return [t.name for t in self.tasks]


def _first_duplicate(ids: Sequence[str]) -> str:
    seen: set[str] = set()
    for s in ids:
        if s in seen:
            return s
        seen.add(s)
    raise ValueError("no duplicate present")


def _parse_cell(raw: str, path: str, row: int, col: int) -> float:
    text = raw.strip()
    if text == "" or text.lower() == "nan":
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise DataError(
            f"{path}: row {row}, column {col}: cannot parse {raw!r} as a number"
        ) from None


def load_task_csv(path: str, name: Optional[str] = None) -> TaskDataset:
    """Read one task CSV (id, features..., target) without any pruning."""
    if name is None:
        name = str(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: file is empty") from None
        if len(header) < 3:
            raise DataError(f"{path}: need at least id, one feature, and target columns")
        feature_names = [h.strip() for h in header[1:-1]]
        ids: list[str] = []
        rows: list[list[float]] = []
        targets: list[float] = []
        width = len(header)
        for r, record in enumerate(reader, start=2):
            if not record:
                continue
            if len(record) != width:
                raise DataError(f"{path}: row {r}: expected {width} cells, found {len(record)}")
            ids.append(record[0].strip())
            rows.append([_parse_cell(c, path, r, j + 2) for j, c in enumerate(record[1:-1])])
            target = _parse_cell(record[-1], path, r, width)
            if math.isnan(target):
                raise DataError(f"{path}: row {r}: target value is NaN")
            targets.append(target)
    if not rows:
        raise DataError(f"{path}: no data rows")
    return TaskDataset(
        name=name,
        feature_names=feature_names,
        X=np.array(rows, dtype=np.float64),
        y=np.array(targets, dtype=np.float64),
        sample_ids=ids,
    )


def prune_features(task: TaskDataset) -> TaskDataset:
    """Drop every column with any NaN and every constant column."""
    has_nan = np.isnan(task.X).any(axis=0)
    constant = np.all(task.X == task.X[0:1, :], axis=0)
    keep = ~(has_nan | constant)
    if not keep.any():
        raise DataError(f"task {task.name!r}: no usable features after pruning")
    return TaskDataset(
        name=task.name,
        feature_names=[f for f, k in zip(task.feature_names, keep) if k],
        X=task.X[:, keep],
        y=task.y,
        sample_ids=list(task.sample_ids),
    )


def build_category(tasks: Sequence[TaskDataset]) -> MultitaskDataset:
    """Intersect pruned feature sets and align every task to one column order."""
    if not tasks:
        raise DataError("a category needs at least one task")
    common = set(tasks[0].feature_names)
    for task in tasks[1:]:
        common &= set(task.feature_names)
    if not common:
        raise DataError("no feature is shared by every task")
    candidate = sorted(common)
    aligned = []
    for task in tasks:
        pos = {f: i for i, f in enumerate(task.feature_names)}
        cols = [pos[f] for f in candidate]
        aligned.append(
            TaskDataset(
                name=task.name,
                feature_names=list(candidate),
                X=task.X[:, cols],
                y=task.y,
                sample_ids=list(task.sample_ids),
            )
        )
    return MultitaskDataset(tasks=aligned, candidate_features=candidate)


@dataclass
class SplitAssignment:
    """Per-task train/val/test index arrays plus the seed that produced them."""

    seed: int
    train: list[np.ndarray]
    val: list[np.ndarray]
    test: list[np.ndarray]

    def partition(self, name: str) -> list[np.ndarray]:
        return {"train": self.train, "val": self.val, "test": self.test}[name]

    def to_dict(self, tasks: Sequence[TaskDataset]) -> dict:
        out: dict = {"seed": self.seed, "tasks": {}}
        for t, task in enumerate(tasks):
            out["tasks"][task.name] = {
                "train": [task.sample_ids[i] for i in self.train[t]],
                "val": [task.sample_ids[i] for i in self.val[t]],
                "test": [task.sample_ids[i] for i in self.test[t]],
            }
        return out


def _largest_remainder(n: int, ratios: Sequence[float]) -> list[int]:
    """Integer allocation of n items to len(ratios) bins, totals preserved."""
    exact = [n * r for r in ratios]
    base = [int(math.floor(e)) for e in exact]
    short = n - sum(base)
    remainders = sorted(range(len(ratios)), key=lambda i: (-(exact[i] - base[i]), i))
    for i in remainders[:short]:
        base[i] += 1
    return base


def overlap_split(
    tasks: Sequence[TaskDataset],
    ratios: Sequence[float] = RATIOS,
    seed: int = 0,
) -> SplitAssignment:
    """Leakage-free stratified split over possibly overlapping tasks."""
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError("ratios must be three positive numbers summing to 1")
    membership: dict[str, list[int]] = {}
    for t, task in enumerate(tasks):
        for sid in task.sample_ids:
            membership.setdefault(sid, []).append(t)
    cells: dict[tuple[int, ...], list[str]] = {}
    for sid, tasks_of in membership.items():
        cells.setdefault(tuple(tasks_of), []).append(sid)
    rng = np.random.default_rng(seed)
    label: dict[str, int] = {}
    for signature in sorted(cells):
        ids = sorted(cells[signature])
        perm = rng.permutation(len(ids))
        shuffled = [ids[i] for i in perm]
        counts = _largest_remainder(len(ids), ratios)
        start = 0
        for part, count in enumerate(counts):
            for sid in shuffled[start : start + count]:
                label[sid] = part
            start += count
    train, val, test = [], [], []
    for task in tasks:
        parts: list[list[int]] = [[], [], []]
        for i, sid in enumerate(task.sample_ids):
            parts[label[sid]].append(i)
        train.append(np.array(parts[0], dtype=np.intp))
        val.append(np.array(parts[1], dtype=np.intp))
        test.append(np.array(parts[2], dtype=np.intp))
    return SplitAssignment(seed=seed, train=train, val=val, test=test)


@dataclass
class Standardizer:
    """Column means/stds of one task's training partition, plus the target's."""

    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float

    def transform_X(self, X: np.ndarray) -> np.ndarray:
        return (X - self.x_mean) / self.x_std

    def transform_y(self, y: np.ndarray) -> np.ndarray:
        return (y - self.y_mean) / self.y_std

    def inverse_y(self, y_std: np.ndarray) -> np.ndarray:
        return y_std * self.y_std + self.y_mean

    def to_dict(self) -> dict:
        return {
            "x_mean": self.x_mean.tolist(),
            "x_std": self.x_std.tolist(),
            "y_mean": self.y_mean,
            "y_std": self.y_std,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Standardizer":
        return cls(
            x_mean=np.asarray(d["x_mean"], dtype=np.float64),
            x_std=np.asarray(d["x_std"], dtype=np.float64),
            y_mean=float(d["y_mean"]),
            y_std=float(d["y_std"]),
        )


def fit_standardizer(task: TaskDataset, train_idx: np.ndarray) -> Standardizer:
    """Population (divide by n) statistics of the training rows."""
    if len(train_idx) == 0:
        raise DataError(f"task {task.name!r}: empty training partition")
    Xtr = task.X[train_idx]
    ytr = task.y[train_idx]
    x_mean = Xtr.mean(axis=0)
    x_std = Xtr.std(axis=0)
    y_std = float(ytr.std())
    if np.any(x_std == 0.0):
        j = int(np.argmax(x_std == 0.0))
        raise NumericalError(
            f"task {task.name!r}: feature {task.feature_names[j]!r} is constant on train"
        )
    if y_std == 0.0:
        raise NumericalError(f"task {task.name!r}: target is constant on train")
    return Standardizer(x_mean=x_mean, x_std=x_std, y_mean=float(ytr.mean()), y_std=y_std)


def standardize_dataset(
    data: MultitaskDataset, split: SplitAssignment
) -> tuple[MultitaskDataset, list[Standardizer]]:
    """Rescale every task with its own training statistics."""
    standardizers = [fit_standardizer(t, split.train[i]) for i, t in enumerate(data.tasks)]
    tasks = []
    for task, st in zip(data.tasks, standardizers):
        tasks.append(
            TaskDataset(
                name=task.name,
                feature_names=list(task.feature_names),
                X=st.transform_X(task.X),
                y=st.transform_y(task.y),
                sample_ids=list(task.sample_ids),
            )
        )
    return (
        MultitaskDataset(tasks=tasks, candidate_features=list(data.candidate_features)),
        standardizers,
    )


def load_manifest(path: str) -> MultitaskDataset:
    """Build a category from a JSON manifest: {"tasks": {name: csv_path}}.

    Relative CSV paths resolve against the manifest's directory.
    """
    import os

    with open(path) as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as e:
            raise DataError(f"{path}: invalid JSON manifest: {e}") from None
    entries = manifest.get("tasks")
    if not isinstance(entries, dict) or not entries:
        raise DataError(f"{path}: manifest must map task names to CSV paths under 'tasks'")
    base = os.path.dirname(os.path.abspath(path))
    tasks = []
    for name in sorted(entries):
        csv_path = entries[name]
        if not os.path.isabs(csv_path):
            csv_path = os.path.join(base, csv_path)
        tasks.append(prune_features(load_task_csv(csv_path, name)))
    return build_category(tasks)


def split_to_json(split: SplitAssignment, tasks: Sequence[TaskDataset]) -> str:
    return json.dumps(split.to_dict(tasks), indent=2, sort_keys=True)
