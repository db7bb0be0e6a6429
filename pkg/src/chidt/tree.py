"""C4.5 decision-tree induction: gain-ratio splits, error-based pruning, prediction.

Trees are grown top-down over a float feature matrix (nominal slots hold
value indices), selecting the attribute with the highest gain ratio among
candidates whose information gain reaches the mean candidate gain. Pruning
is bottom-up subtree replacement driven by the normal-approximation upper
confidence bound on leaf error. All ties break toward the lowest index
(attribute, class, threshold) so induction is deterministic.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from statistics import NormalDist
from typing import NamedTuple, Sequence

import numpy as np

from .data import AttributeMeta, NUMERIC
from .errors import SchemaMismatchError, ValidationError

# gains at or below this are treated as zero when ranking candidates
GAIN_EPS = 1e-12


@dataclass(frozen=True)
class C45Params:
    """Induction parameters (defaults follow classic C4.5 conventions)."""

    min_leaf: int = 2
    confidence_factor: float = 0.25
    pruning: bool = True
    max_depth: int | None = None

    def __post_init__(self) -> None:
        if self.min_leaf < 1:
            raise ValidationError("min_leaf must be at least 1")
        if not 0.0 < self.confidence_factor <= 0.5:
            raise ValidationError("confidence factor must lie in (0, 0.5]")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValidationError("max_depth cannot be negative")

    def to_dict(self) -> dict:
        return {
            "min_leaf": self.min_leaf,
            "confidence_factor": self.confidence_factor,
            "pruning": self.pruning,
            "max_depth": self.max_depth,
        }

    @classmethod
    def from_dict(cls, doc) -> "C45Params":
        extra = set(doc) - {"min_leaf", "confidence_factor", "pruning", "max_depth"}
        if extra:
            raise ValidationError(f"unknown tree parameter keys: {sorted(extra)}")
        return cls(
            min_leaf=int(doc.get("min_leaf", 2)),
            confidence_factor=float(doc.get("confidence_factor", 0.25)),
            pruning=bool(doc.get("pruning", True)),
            max_depth=None if doc.get("max_depth") is None else int(doc["max_depth"]),
        )


@dataclass(frozen=True)
class SplitTest:
    """Branch test at an internal node.

    Numeric attributes branch on (<= threshold, > threshold); nominal
    attributes hold one branch per declared value.
    """

    attr_index: int
    threshold: float | None = None
    n_branches: int = 2

    @property
    def is_numeric(self) -> bool:
        return self.threshold is not None


@dataclass
class TreeNode:
    """Tree node; a leaf when ``test`` is None.

    ``counts`` holds the training class distribution reaching the node.
    Branches that received no training instances become *virtual* leaves
    carrying their parent's distribution: they predict the parent majority
    but contribute nothing to pruning error sums.
    """

    counts: np.ndarray
    majority: int
    test: SplitTest | None = None
    children: list = field(default_factory=list)
    virtual: bool = False

    @property
    def is_leaf(self) -> bool:
        return self.test is None

    def node_count(self) -> int:
        return 1 + sum(c.node_count() for c in self.children)

    def depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(c.depth() for c in self.children)


class GainStats(NamedTuple):
    gain: float
    split_info: float
    ratio: float


class NumericSplit(NamedTuple):
    threshold: float
    gain: float
    ratio: float


def entropy(weights) -> float:
    """Shannon entropy, in bits, of a nonnegative weight vector."""
    w = np.asarray(weights, dtype=np.float64)
    if np.any(w < 0):
        raise ValidationError("class weights must be nonnegative")
    total = w.sum()
    if total <= 0:
        raise ValidationError("entropy undefined for zero total weight")
    p = w[w > 0] / total
    return float(-(p * np.log2(p)).sum())


def class_counts(y: np.ndarray, n_classes: int, rows: np.ndarray | None = None) -> np.ndarray:
    sel = y if rows is None else y[rows]
    return np.bincount(sel, minlength=n_classes).astype(np.float64)


def split_rows(X: np.ndarray, test: SplitTest, rows: np.ndarray) -> list:
    """Row indices per branch of ``test`` (may contain empty branches)."""
    col = X[rows, test.attr_index]
    if test.is_numeric:
        return [rows[col <= test.threshold], rows[col > test.threshold]]
    v = col.astype(np.int64)
    return [rows[v == j] for j in range(test.n_branches)]


def gain_ratio(
    X: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    test: SplitTest,
    rows: np.ndarray | None = None,
) -> GainStats | None:
    """Information gain, split information, and their ratio for one test.

    Returns None when the test yields fewer than two non-empty branches
    (split information would be zero, so the test is not a candidate).
    """
    if rows is None:
        rows = np.arange(len(y))
    parent = entropy(class_counts(y, n_classes, rows))
    branches = split_rows(X, test, rows)
    sizes = np.array([len(b) for b in branches], dtype=np.float64)
    if np.count_nonzero(sizes) < 2:
        return None
    total = sizes.sum()
    weighted = 0.0
    for branch, size in zip(branches, sizes):
        if size:
            weighted += (size / total) * entropy(class_counts(y, n_classes, branch))
    gain = parent - weighted
    split_info = entropy(sizes)
    return GainStats(gain=gain, split_info=split_info, ratio=gain / split_info)


def best_numeric_threshold(
    X: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    attr_index: int,
    min_leaf: int = 1,
    rows: np.ndarray | None = None,
) -> NumericSplit | None:
    """Best midpoint threshold for a numeric attribute, by information gain.

    Every midpoint between consecutive distinct sorted values is evaluated;
    candidates leaving either side below ``min_leaf`` are skipped. Ties in
    gain go to the smallest threshold. Returns None when no candidate exists.
    """
    if rows is None:
        rows = np.arange(len(y))
    values = X[rows, attr_index]
    order = np.argsort(values, kind="stable")
    sv = values[order]
    sy = y[rows][order]
    n = len(rows)

    parent_counts = np.bincount(sy, minlength=n_classes).astype(np.float64)
    parent_h = entropy(parent_counts)

    left = np.zeros(n_classes, dtype=np.float64)
    best: NumericSplit | None = None
    for i in range(n - 1):
        left[sy[i]] += 1.0
        if sv[i] == sv[i + 1]:
            continue
        n_left = i + 1
        n_right = n - n_left
        if n_left < min_leaf or n_right < min_leaf:
            continue
        threshold = (sv[i] + sv[i + 1]) / 2.0
        if not sv[i] < threshold < sv[i + 1]:
            # adjacent floats can collapse the midpoint onto an endpoint
            continue
        right = parent_counts - left
        weighted = (n_left / n) * entropy(left) + (n_right / n) * entropy(right)
        gain = parent_h - weighted
        split_info = entropy([n_left, n_right])
        cand = NumericSplit(threshold=float(threshold), gain=float(gain), ratio=float(gain / split_info))
        if best is None or cand.gain > best.gain:
            best = cand
    return best


class _Candidate(NamedTuple):
    attr_index: int
    test: SplitTest
    gain: float
    ratio: float


def _attr_candidate(
    X: np.ndarray,
    y: np.ndarray,
    n_classes: int,
    attributes: Sequence[AttributeMeta],
    attr_index: int,
    rows: np.ndarray,
    min_leaf: int,
) -> _Candidate | None:
    attr = attributes[attr_index]
    if attr.kind == NUMERIC:
        found = best_numeric_threshold(X, y, n_classes, attr_index, min_leaf, rows)
        if found is None:
            return None
        test = SplitTest(attr_index, threshold=found.threshold)
        return _Candidate(attr_index, test, found.gain, found.ratio)
    test = SplitTest(attr_index, n_branches=len(attr.values))
    sizes = [len(b) for b in split_rows(X, test, rows)]
    if sum(1 for s in sizes if s >= min_leaf) < 2:
        return None
    stats = gain_ratio(X, y, n_classes, test, rows)
    if stats is None:
        return None
    return _Candidate(attr_index, test, stats.gain, stats.ratio)


def _select_split(candidates: list, impure: bool) -> _Candidate | None:
    """C4.5 selection: best gain ratio among candidates with at-least-mean gain.

    Positive-gain candidates are preferred. When an impure node has only
    zero-gain candidates left, the lowest-indexed one is taken as a last
    resort so that separable data is always separated.
    """
    positive = [c for c in candidates if c.gain > GAIN_EPS]
    if positive:
        mean_gain = sum(c.gain for c in positive) / len(positive)
        eligible = [c for c in positive if c.gain >= mean_gain - GAIN_EPS]
        best = eligible[0]
        for c in eligible[1:]:
            if c.ratio > best.ratio:
                best = c
        return best
    if impure and candidates:
        return candidates[0]
    return None


def _majority(counts: np.ndarray) -> int:
    return int(np.argmax(counts))


@dataclass
class C45Tree:
    """A grown (optionally pruned) tree plus the schema it was trained on."""

    root: TreeNode
    attributes: tuple
    class_names: tuple
    params: C45Params

    @property
    def n_nodes(self) -> int:
        return self.root.node_count()

    @property
    def depth(self) -> int:
        return self.root.depth()

    def predict_distribution(self, x) -> np.ndarray:
        return predict_distribution(self, x)

    def predict(self, x) -> int:
        return predict(self, x)

    def render(self) -> str:
        return render(self)

    def to_dict(self, embed_schema: bool = True) -> dict:
        doc = {"root": _node_to_dict(self.root), "params": self.params.to_dict()}
        if embed_schema:
            doc["schema"] = schema_fingerprint(self.attributes, self.class_names)
        return doc

    @classmethod
    def from_dict(
        cls,
        doc,
        attributes: Sequence[AttributeMeta] | None = None,
        class_names: Sequence[str] | None = None,
    ) -> "C45Tree":
        stored = doc.get("schema")
        if stored is None and (attributes is None or class_names is None):
            raise ValidationError("tree document has no schema and none was supplied")
        if attributes is None or class_names is None:
            attributes = _attributes_from_fingerprint(stored)
            class_names = tuple(stored["classes"])
        elif stored is not None:
            expected = schema_fingerprint(attributes, class_names)
            if stored != expected:
                raise SchemaMismatchError("stored tree was built against a different schema")
        root = _node_from_dict(doc["root"], len(class_names))
        return cls(
            root=root,
            attributes=tuple(attributes),
            class_names=tuple(class_names),
            params=C45Params.from_dict(doc.get("params", {})),
        )


def schema_fingerprint(attributes: Sequence[AttributeMeta], class_names: Sequence[str]) -> dict:
    return {
        "attributes": [
            {"name": a.name, "kind": a.kind, "values": list(a.values) if a.values else None}
            for a in attributes
        ],
        "classes": list(class_names),
    }


def _attributes_from_fingerprint(fp) -> tuple:
    return tuple(
        AttributeMeta(
            name=a["name"],
            kind=a["kind"],
            values=tuple(a["values"]) if a.get("values") else None,
            index=i,
        )
        for i, a in enumerate(fp["attributes"])
    )


def _node_to_dict(node: TreeNode) -> dict:
    if node.is_leaf:
        doc = {"kind": "leaf", "counts": [float(c) for c in node.counts], "majority": node.majority}
        if node.virtual:
            doc["virtual"] = True
        return doc
    test = {"attr": node.test.attr_index}
    if node.test.is_numeric:
        test["threshold"] = node.test.threshold
    else:
        test["branches"] = node.test.n_branches
    return {
        "kind": "split",
        "test": test,
        "counts": [float(c) for c in node.counts],
        "majority": node.majority,
        "children": [_node_to_dict(c) for c in node.children],
    }


def _node_from_dict(doc, n_classes: int) -> TreeNode:
    counts = np.asarray(doc["counts"], dtype=np.float64)
    if len(counts) != n_classes:
        raise SchemaMismatchError("stored class distribution does not match the class list")
    if doc["kind"] == "leaf":
        return TreeNode(counts=counts, majority=int(doc["majority"]), virtual=bool(doc.get("virtual", False)))
    t = doc["test"]
    if "threshold" in t:
        test = SplitTest(int(t["attr"]), threshold=float(t["threshold"]))
    else:
        test = SplitTest(int(t["attr"]), n_branches=int(t["branches"]))
    children = [_node_from_dict(c, n_classes) for c in doc["children"]]
    return TreeNode(counts=counts, majority=int(doc["majority"]), test=test, children=children)


def grow(
    X: np.ndarray,
    y,
    attributes: Sequence[AttributeMeta],
    class_names: Sequence[str],
    params: C45Params | None = None,
    parallel: bool = False,
) -> C45Tree:
    """Top-down C4.5 induction (no pruning; see prune_ebp / build_tree).

    Args:
        X: (n, d) float matrix; nominal columns hold value indices.
        y: integer class per row, indices into class_names.
        attributes: schema describing the d columns.
        class_names: ordered class list.
        params: induction parameters (defaults used when None).
        parallel: evaluate candidate attributes in a thread pool; the
            resulting tree is identical to sequential evaluation.
    """
    params = params or C45Params()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[1] != len(attributes):
        raise ValidationError("feature matrix shape does not match the attribute schema")
    if len(y) != X.shape[0]:
        raise ValidationError("feature matrix and class vector lengths differ")
    if len(y) == 0:
        raise ValidationError("cannot grow a tree from an empty view")
    k = len(class_names)
    if k < 1 or y.min() < 0 or y.max() >= k:
        raise ValidationError("class indices fall outside the class list")

    n_attrs = len(attributes)
    pool = ThreadPoolExecutor(max_workers=min(8, n_attrs)) if parallel and n_attrs > 1 else None

    def build(rows: np.ndarray, depth: int) -> TreeNode:
        counts = class_counts(y, k, rows)
        majority = _majority(counts)
        impure = np.count_nonzero(counts) > 1
        if not impure or (params.max_depth is not None and depth >= params.max_depth):
            return TreeNode(counts=counts, majority=majority)

        def evaluate(a: int):
            return _attr_candidate(X, y, k, attributes, a, rows, params.min_leaf)

        if pool is not None:
            results = list(pool.map(evaluate, range(n_attrs)))
        else:
            results = [evaluate(a) for a in range(n_attrs)]
        chosen = _select_split([c for c in results if c is not None], impure)
        if chosen is None:
            return TreeNode(counts=counts, majority=majority)

        children = []
        for branch in split_rows(X, chosen.test, rows):
            if len(branch) == 0:
                children.append(TreeNode(counts=counts.copy(), majority=majority, virtual=True))
            else:
                children.append(build(branch, depth + 1))
        return TreeNode(counts=counts, majority=majority, test=chosen.test, children=children)

    try:
        root = build(np.arange(len(y)), 0)
    finally:
        if pool is not None:
            pool.shutdown()
    return C45Tree(root=root, attributes=tuple(attributes), class_names=tuple(class_names), params=params)


# ---------------------------------------------------------------------------
# Error-based pruning
# ---------------------------------------------------------------------------


def pessimistic_errors(n: float, e: float, cf: float) -> float:
    """N times the upper confidence bound on the training error rate.

    Uses the normal-approximation upper limit on f = E/N at confidence CF
    (z is the standard-normal upper-CF quantile, about 0.6745 at CF 0.25).
    """
    if n <= 0:
        return 0.0
    z = NormalDist().inv_cdf(1.0 - cf)
    f = e / n
    inner = f / n - (f * f) / n + (z * z) / (4 * n * n)
    u = (f + (z * z) / (2 * n) + z * math.sqrt(max(inner, 0.0))) / (1.0 + (z * z) / n)
    return n * u


def _subtree_error(node: TreeNode, cf: float) -> float:
    if node.is_leaf:
        if node.virtual:
            return 0.0
        n = float(node.counts.sum())
        e = n - float(node.counts[node.majority])
        return pessimistic_errors(n, e, cf)
    return sum(_subtree_error(c, cf) for c in node.children)


def _prune_node(node: TreeNode, cf: float) -> TreeNode:
    if node.is_leaf:
        return node
    node = replace(node, children=[_prune_node(c, cf) for c in node.children])
    n = float(node.counts.sum())
    e = n - float(node.counts[node.majority])
    as_leaf = pessimistic_errors(n, e, cf)
    as_subtree = _subtree_error(node, cf)
    if as_leaf <= as_subtree:
        return TreeNode(counts=node.counts, majority=node.majority)
    return node


def prune_ebp(tree: C45Tree, params: C45Params | None = None) -> C45Tree:
    """Bottom-up subtree replacement using the pessimistic error bound.

    A subtree collapses to a majority leaf whenever the leaf's pessimistic
    error is no worse than the sum over the subtree's leaves, so node count
    never increases and ties favor the smaller tree.
    """
    params = params or tree.params
    root = _prune_node(tree.root, params.confidence_factor)
    return C45Tree(root=root, attributes=tree.attributes, class_names=tree.class_names, params=params)


def build_tree(
    X: np.ndarray,
    y,
    attributes: Sequence[AttributeMeta],
    class_names: Sequence[str],
    params: C45Params | None = None,
    parallel: bool = False,
) -> C45Tree:
    """grow() followed by prune_ebp() when pruning is enabled."""
    params = params or C45Params()
    tree = grow(X, y, attributes, class_names, params, parallel=parallel)
    if params.pruning:
        tree = prune_ebp(tree, params)
    return tree


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------


def _route(tree: C45Tree, x) -> TreeNode:
    if len(x) != len(tree.attributes):
        raise ValidationError(
            f"feature vector has {len(x)} slots, schema defines {len(tree.attributes)}"
        )
    node = tree.root
    while not node.is_leaf:
        attr = tree.attributes[node.test.attr_index]
        value = x[node.test.attr_index]
        if node.test.is_numeric:
            node = node.children[0] if value <= node.test.threshold else node.children[1]
        else:
            idx = int(value)
            if not 0 <= idx < node.test.n_branches:
                raise ValidationError(f"value index {value!r} outside the domain of {attr.name!r}")
            node = node.children[idx]
    return node


def predict_distribution(tree: C45Tree, x) -> np.ndarray:
    """Class distribution at the leaf reached by ``x``, normalized to sum 1."""
    leaf = _route(tree, x)
    total = leaf.counts.sum()
    return leaf.counts / total


def predict(tree: C45Tree, x) -> int:
    """Majority class index at the leaf reached by ``x`` (lowest index on ties)."""
    return int(np.argmax(predict_distribution(tree, x)))


# ---------------------------------------------------------------------------
# Text rendering
# ---------------------------------------------------------------------------


def _fmt_count(v: float) -> str:
    return f"{v:g}"


def _leaf_suffix(tree: C45Tree, node: TreeNode) -> str:
    n = float(node.counts.sum())
    e = n - float(node.counts[node.majority])
    label = tree.class_names[node.majority]
    if node.virtual:
        return f": {label} (0)"
    if e > 0:
        return f": {label} ({_fmt_count(n)}/{_fmt_count(e)})"
    return f": {label} ({_fmt_count(n)})"


def render(tree: C45Tree) -> str:
    """Indented one-test-per-line rendering, leaves annotated with (n) or (n/errors)."""
    lines: list = []

    def branch_label(test: SplitTest, j: int) -> str:
        attr = tree.attributes[test.attr_index]
        if test.is_numeric:
            op = "<=" if j == 0 else ">"
            return f"{attr.name} {op} {test.threshold:g}"
        return f"{attr.name} = {attr.values[j]}"

    def walk(node: TreeNode, prefix: str) -> None:
        for j, child in enumerate(node.children):
            head = f"{prefix}{branch_label(node.test, j)}"
            if child.is_leaf:
                lines.append(head + _leaf_suffix(tree, child))
            else:
                lines.append(head)
                walk(child, prefix + "|   ")

    if tree.root.is_leaf:
        lines.append("root" + _leaf_suffix(tree, tree.root))
    else:
        walk(tree.root, "")
    return "\n".join(lines)
