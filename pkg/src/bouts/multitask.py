"""Multitask regression trees with a shared topology across tasks.

Every node position uses one split feature for all T tasks, but each task
keeps its own threshold and leaf values.  The split feature is chosen by a
maximin rule: each task reports the best penalized gain it can reach on a
feature, and the feature with the largest worst-task gain wins.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import AbstractSet, Optional, Sequence

import numpy as np

from .errors import NumericalError
from .trees import TIE_MARGIN, NodeView, Tree, TreeParams, best_on_feature, raw_gain, scan_columns


@dataclass(frozen=True)
class MultitaskNodeView:
    """Per-task sample views sitting at one shared node position."""

    Xs: tuple[np.ndarray, ...]
    ys: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        if len(self.Xs) != len(self.ys) or not self.Xs:
            raise ValueError("need one (X, y) pair per task")
        for X, y in zip(self.Xs, self.ys):
            if len(y) == 0:
                raise ValueError("every task view must be nonempty")
            if X.shape[0] != y.shape[0]:
                raise ValueError("X and y row counts differ")

    @property
    def n_tasks(self) -> int:
        return len(self.Xs)


@dataclass(frozen=True)
class MultitaskSplit:
    feature: int
    thresholds: tuple[float, ...]  # one per task
    gains: tuple[float, ...]  # per-task penalized gain at the chosen threshold
    raw_gains: tuple[float, ...]
    score: float  # min over tasks of the penalized gains


def maximin_split(
    node: MultitaskNodeView,
    used_universal: AbstractSet[int],
    lambda_u: float,
    params: TreeParams,
) -> Optional[MultitaskSplit]:
    """Shared split feature maximizing the minimum per-task penalized gain.

    Pass one scores every feature: each task maximizes over its own midpoint
    thresholds, the per-feature score is the min across tasks, and the argmax
    feature wins (lowest index on ties).  Pass two re-solves each task's
    threshold and gain on the winning column with the definition-based ops;
    features within the tie margin of the best score go through the same
    re-solve so near-ties cannot be misordered by scan arithmetic.  Returns
    None when the score is <= ``params.min_gain``.
    """
    d = node.Xs[0].shape[1]
    n_tasks = node.n_tasks
    per_task_raw = np.empty((n_tasks, d))
    per_task_thr = np.empty((n_tasks, d))
    per_task_amb = np.empty((n_tasks, d), dtype=bool)
    for t in range(n_tasks):
        raw, thr, amb = scan_columns(
            node.Xs[t], node.ys[t], params.min_samples_leaf, params.criterion
        )
        per_task_raw[t] = raw
        per_task_thr[t] = thr
        per_task_amb[t] = amb
    new = np.ones(d, dtype=bool)
    if used_universal:
        new[list(used_universal)] = False
    charges = np.where(new, lambda_u, 0.0)
    pen = per_task_raw - charges[None, :]
    pen[~np.isfinite(per_task_raw)] = -np.inf
    score = pen.min(axis=0)
    s_max = float(np.max(score)) if d else -np.inf
    if not np.isfinite(s_max):
        return None
    tol = TIE_MARGIN * max(1.0, abs(s_max))
    if s_max <= params.min_gain - tol:
        return None
    views = [NodeView(node.Xs[t], node.ys[t]) for t in range(n_tasks)]
    shortlist = np.flatnonzero(np.isfinite(score) & (score >= s_max - tol))
    best = None  # (score, feature, per-task (penalized gain, threshold, raw))
    for f in shortlist:
        f = int(f)
        charge = float(charges[f])
        task_best: list[tuple[float, float, float]] = []
        for t in range(n_tasks):
            if per_task_amb[t, f]:
                resolved = best_on_feature(
                    views[t], f, charge, params.min_samples_leaf, params.criterion
                )
                if resolved is None:
                    break
                g_pen, v = resolved
                g_raw = float(raw_gain(views[t], f, v, params.criterion))
            else:
                v = float(per_task_thr[t, f])
                g_raw = float(raw_gain(views[t], f, v, params.criterion))
                g_pen = g_raw - charge
            task_best.append((g_pen, v, g_raw))
        if len(task_best) < n_tasks:
            continue
        sc = min(g for g, _, _ in task_best)
        if best is None or sc > best[0]:
            best = (sc, f, task_best)
    if best is None or best[0] <= params.min_gain:
        return None
    sc, f, task_best = best
    return MultitaskSplit(
        feature=f,
        thresholds=tuple(v for _, v, _ in task_best),
        gains=tuple(g for g, _, _ in task_best),
        raw_gains=tuple(g for _, _, g in task_best),
        score=float(sc),
    )


@dataclass
class MultitaskTree:
    """Shared-topology tree: one feature per node, per-task thresholds/leaves.

    Parallel node arrays as in ``Tree``; ``thresholds[i]`` and ``values[i]``
    hold one entry per task.
    """

    n_tasks: int
    feature: list[int] = field(default_factory=list)
    thresholds: list[list[float]] = field(default_factory=list)
    left: list[int] = field(default_factory=list)
    right: list[int] = field(default_factory=list)
    values: list[list[float]] = field(default_factory=list)
    gains: list[list[float]] = field(default_factory=list)
    penalized_gains: list[list[float]] = field(default_factory=list)

    LEAF = -1

    @property
    def features_used(self) -> set[int]:
        return {f for f in self.feature if f != self.LEAF}

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def is_leaf(self, i: int) -> bool:
        return self.feature[i] == self.LEAF

    @property
    def is_stump_leaf(self) -> bool:
        return self.n_nodes == 1 and self.is_leaf(0)

    def add_leaf(self, values: Sequence[float]) -> int:
        self.feature.append(self.LEAF)
        self.thresholds.append([0.0] * self.n_tasks)
        self.left.append(self.LEAF)
        self.right.append(self.LEAF)
        self.values.append([float(v) for v in values])
        self.gains.append([0.0] * self.n_tasks)
        self.penalized_gains.append([0.0] * self.n_tasks)
        return len(self.feature) - 1

    def add_internal(self, split: MultitaskSplit) -> int:
        self.feature.append(split.feature)
        self.thresholds.append(list(split.thresholds))
        self.left.append(self.LEAF)
        self.right.append(self.LEAF)
        self.values.append([float("nan")] * self.n_tasks)
        self.gains.append(list(split.raw_gains))
        self.penalized_gains.append(list(split.gains))
        return len(self.feature) - 1

    def predict(self, task: int, X: np.ndarray) -> np.ndarray:
        """Predictions of this tree's component for one task."""
        X = np.asarray(X, dtype=np.float64)
        out = np.empty(X.shape[0])
        stack = [(0, np.arange(X.shape[0]))]
        while stack:
            i, idx = stack.pop()
            if idx.size == 0:
                continue
            if self.is_leaf(i):
                out[idx] = self.values[i][task]
                continue
            col = X[idx, self.feature[i]]
            if np.isnan(col).any():
                raise NumericalError(f"NaN at feature index {self.feature[i]} during prediction")
            go_left = col <= self.thresholds[i][task]
            stack.append((self.left[i], idx[go_left]))
            stack.append((self.right[i], idx[~go_left]))
        return out

    def task_tree(self, task: int) -> Tree:
        """The single-task tree this multitask tree induces for ``task``."""
        tree = Tree()
        tree.feature = list(self.feature)
        tree.threshold = [thr[task] for thr in self.thresholds]
        tree.left = list(self.left)
        tree.right = list(self.right)
        tree.value = [val[task] for val in self.values]
        tree.gain = [g[task] for g in self.gains]
        tree.penalized_gain = [g[task] for g in self.penalized_gains]
        return tree

    def to_dict(self) -> dict:
        nodes = []
        for i in range(self.n_nodes):
            if self.is_leaf(i):
                nodes.append({"values": self.values[i]})
            else:
                nodes.append(
                    {
                        "feature": self.feature[i],
                        "thresholds": self.thresholds[i],
                        "left": self.left[i],
                        "right": self.right[i],
                        "gains": self.gains[i],
                        "penalized_gains": self.penalized_gains[i],
                    }
                )
        return {"n_tasks": self.n_tasks, "nodes": nodes}

    @classmethod
    def from_dict(cls, d: dict) -> "MultitaskTree":
        tree = cls(n_tasks=d["n_tasks"])
        for node in d["nodes"]:
            if "values" in node:
                tree.add_leaf(node["values"])
            else:
                split = MultitaskSplit(
                    feature=node["feature"],
                    thresholds=tuple(node["thresholds"]),
                    gains=tuple(node["penalized_gains"]),
                    raw_gains=tuple(node["gains"]),
                    score=min(node["penalized_gains"]),
                )
                j = tree.add_internal(split)
                tree.left[j] = node["left"]
                tree.right[j] = node["right"]
        return tree


def grow_multitask_tree(
    Xs: Sequence[np.ndarray],
    ys: Sequence[np.ndarray],
    used_universal: AbstractSet[int] = frozenset(),
    lambda_u: float = 0.0,
    params: Optional[TreeParams] = None,
) -> MultitaskTree:
    """Grow one shared-topology tree over all tasks' current targets.

    A node position turns into a leaf (for every task) when the depth limit
    is hit, when ANY task has too few samples to split, or when no feature
    clears the maximin bar.  Leaf values are per-task target means.
    """
    if params is None:
        params = TreeParams()
    n_tasks = len(Xs)
    if n_tasks == 0 or len(ys) != n_tasks:
        raise ValueError("need one (X, y) pair per task")
    used_now = set(used_universal)
    tree = MultitaskTree(n_tasks=n_tasks)

    def build(idxs: list[np.ndarray], depth: int) -> int:
        sub_y = [ys[t][idxs[t]] for t in range(n_tasks)]
        means = [float(np.mean(v)) for v in sub_y]
        if depth >= params.max_depth or any(
            idx.size < 2 * params.min_samples_leaf for idx in idxs
        ):
            return tree.add_leaf(means)
        view = MultitaskNodeView(
            Xs=tuple(Xs[t][idxs[t]] for t in range(n_tasks)), ys=tuple(sub_y)
        )
        split = maximin_split(view, used_now, lambda_u, params)
        if split is None:
            return tree.add_leaf(means)
        used_now.add(split.feature)
        i = tree.add_internal(split)
        left_idxs, right_idxs = [], []
        for t in range(n_tasks):
            go_left = Xs[t][idxs[t], split.feature] <= split.thresholds[t]
            left_idxs.append(idxs[t][go_left])
            right_idxs.append(idxs[t][~go_left])
        tree.left[i] = build(left_idxs, depth + 1)
        tree.right[i] = build(right_idxs, depth + 1)
        return i

    build([np.arange(len(y)) for y in ys], 0)
    return tree
