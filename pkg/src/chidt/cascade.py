"""Multi-label wrappers and the two-stage cascade classifier.

Stage 1 is a binary-relevance bank of per-code trees. Its prediction is
checked against the valid-combination registry; a known error (empty,
excluded, or unregistered combination) triggers stage 2, whose output is
returned verbatim. By default stage 2 is a deliberately diversified BR
bank (unpruned, min-leaf 1); a label-powerset stage 2, which can only emit
observed combinations, is available as an alternative strategy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .data import AttributeMeta, Dataset
from .errors import SchemaMismatchError, ValidationError
from .ontology import (
    ExclusionGroup,
    REASON_OK,
    ValidCombinationRegistry,
    combo_key,
    is_valid,
    observed_registry,
)
from .tree import C45Params, C45Tree, build_tree, schema_fingerprint

BINARY_CLASSES = ("absent", "present")

STRATEGY_DIVERSE_BR = "diverse-br"
STRATEGY_LABEL_POWERSET = "label-powerset"
STRATEGIES = (STRATEGY_DIVERSE_BR, STRATEGY_LABEL_POWERSET)

# stage-2 diversification: a different decision surface over the same data
DIVERSE_STAGE2_PARAMS = C45Params(min_leaf=1, pruning=False)


def _check_vector(attributes: Sequence[AttributeMeta], x) -> None:
    if len(x) != len(attributes):
        raise SchemaMismatchError(
            f"feature vector has {len(x)} slots, model schema defines {len(attributes)}"
        )


@dataclass
class BRModel:
    """One binary tree per code; a code is predicted present when its
    positive-class probability reaches the decision threshold."""

    codes: tuple
    trees: tuple
    attributes: tuple
    threshold: float = 0.5
    training_ids: frozenset = frozenset()
    params: C45Params = field(default_factory=C45Params)
    constant_codes: Mapping = field(default_factory=dict)

    def positive_scores(self, x) -> np.ndarray:
        _check_vector(self.attributes, x)
        return np.array([t.predict_distribution(x)[1] for t in self.trees])

    def _labels_from_scores(self, scores) -> frozenset:
        return frozenset(c for c, s in zip(self.codes, scores) if s >= self.threshold)

    def predict_labels(self, x) -> frozenset:
        return self._labels_from_scores(self.positive_scores(x))

    def predict_with_scores(self, x):
        scores = self.positive_scores(x)
        return self._labels_from_scores(scores), scores, None

    def code_scores(self, x) -> np.ndarray:
        return self.positive_scores(x)

    def to_dict(self) -> dict:
        return {
            "kind": "br",
            "codes": list(self.codes),
            "threshold": self.threshold,
            "params": self.params.to_dict(),
            "constant_codes": {c: v for c, v in sorted(self.constant_codes.items())},
            "trees": [t.to_dict(embed_schema=False) for t in self.trees],
        }

    @classmethod
    def from_dict(cls, doc, attributes: Sequence[AttributeMeta], training_ids: frozenset) -> "BRModel":
        codes = tuple(doc["codes"])
        trees = tuple(
            C45Tree.from_dict(t, attributes=attributes, class_names=BINARY_CLASSES)
            for t in doc["trees"]
        )
        return cls(
            codes=codes,
            trees=trees,
            attributes=tuple(attributes),
            threshold=float(doc.get("threshold", 0.5)),
            training_ids=training_ids,
            params=C45Params.from_dict(doc.get("params", {})),
            constant_codes=dict(doc.get("constant_codes", {})),
        )


@dataclass
class LPModel:
    """A single multi-class tree over the distinct observed label combinations."""

    tree: C45Tree
    combos: tuple
    attributes: tuple
    training_ids: frozenset = frozenset()
    params: C45Params = field(default_factory=C45Params)

    def __post_init__(self) -> None:
        object.__setattr__(self, "combos", tuple(frozenset(c) for c in self.combos))
        if not self.combos:
            raise ValidationError("label-powerset model needs at least one combination class")
        if any(not c for c in self.combos):
            raise ValidationError("label-powerset classes must decode to non-empty LabelSets")

    def predict_labels(self, x) -> frozenset:
        return self.combos[self.tree.predict(x)]

    def combo_distribution(self, x) -> np.ndarray:
        return self.tree.predict_distribution(x)

    def code_scores_over(self, codes: Sequence[str], x) -> np.ndarray:
        """Per-code marginals: each combination's probability mass goes to its codes."""
        dist = self.combo_distribution(x)
        scores = np.zeros(len(codes))
        index = {c: i for i, c in enumerate(codes)}
        for combo, p in zip(self.combos, dist):
            for code in combo:
                if code in index:
                    scores[index[code]] += p
        return scores

    def to_dict(self) -> dict:
        return {
            "kind": "lp",
            "combos": [sorted(c) for c in self.combos],
            "params": self.params.to_dict(),
            "tree": self.tree.to_dict(embed_schema=False),
        }

    @classmethod
    def from_dict(cls, doc, attributes: Sequence[AttributeMeta], training_ids: frozenset) -> "LPModel":
        combos = tuple(frozenset(c) for c in doc["combos"])
        class_names = tuple(combo_key(c) for c in combos)
        tree = C45Tree.from_dict(doc["tree"], attributes=attributes, class_names=class_names)
        return cls(
            tree=tree,
            combos=combos,
            attributes=tuple(attributes),
            training_ids=training_ids,
            params=C45Params.from_dict(doc.get("params", {})),
        )


def train_br(ds: Dataset, params: C45Params | None = None, threshold: float = 0.5) -> BRModel:
    """Train one binary C4.5 problem per code of the dataset's alphabet.

    Codes with no positive (or no negative) training example yield constant
    leaf trees and are listed in the model's ``constant_codes`` metadata so
    the model's alphabet always equals the dataset's.
    """
    if not ds.records:
        raise ValidationError("cannot train on an empty dataset")
    if not ds.label_alphabet:
        raise ValidationError("cannot train with an empty label alphabet")
    params = params or C45Params()
    X = ds.feature_matrix()
    trees = []
    constant = {}
    for code in ds.label_alphabet:
        y = np.array([1 if code in r.labels else 0 for r in ds.records], dtype=np.int64)
        positives = int(y.sum())
        if positives == 0:
            constant[code] = "negative"
        elif positives == len(y):
            constant[code] = "positive"
        trees.append(build_tree(X, y, ds.attributes, BINARY_CLASSES, params))
    return BRModel(
        codes=ds.label_alphabet,
        trees=tuple(trees),
        attributes=ds.attributes,
        threshold=threshold,
        training_ids=ds.record_ids(),
        params=params,
        constant_codes=constant,
    )


def predict_br(model: BRModel, x) -> frozenset:
    return model.predict_labels(x)


def train_label_powerset(ds: Dataset, params: C45Params | None = None) -> LPModel:
    """Train one multi-class tree whose classes are the observed combinations."""
    if not ds.records:
        raise ValidationError("cannot train on an empty dataset")
    empties = [r.id for r in ds.records if not r.labels]
    if empties:
        raise ValidationError(f"label-powerset training requires non-empty LabelSets: {empties[:5]}")
    params = params or C45Params()
    combos = sorted(ds.distinct_labelsets(), key=combo_key)
    class_index = {c: i for i, c in enumerate(combos)}
    X = ds.feature_matrix()
    y = np.array([class_index[r.labels] for r in ds.records], dtype=np.int64)
    tree = build_tree(X, y, ds.attributes, tuple(combo_key(c) for c in combos), params)
    return LPModel(
        tree=tree,
        combos=tuple(combos),
        attributes=ds.attributes,
        training_ids=ds.record_ids(),
        params=params,
    )


@dataclass(frozen=True)
class CascadeTrace:
    """Audit record of one cascade prediction."""

    triggered: bool
    reason: str
    stage1_output: frozenset
    final_output: frozenset
    fallback_applied: bool = False

    def __post_init__(self) -> None:
        if self.triggered == (self.reason == REASON_OK):
            raise ValidationError("trace triggered flag must mirror a non-ok reason")
        if not self.triggered and self.final_output != self.stage1_output:
            raise ValidationError("an untriggered trace must pass stage 1 through unchanged")


@dataclass
class ChiDTModel:
    """Cascade of two same-data classifiers with registry-triggered fallback.

    ``stage2_eval_count`` is telemetry: it counts how many times stage 2
    was actually consulted and is excluded from serialization and equality.
    """

    stage1: BRModel
    stage2: object
    registry: ValidCombinationRegistry
    exclusions: tuple = ()
    strategy: str = STRATEGY_DIVERSE_BR
    single_label_fallback: bool = False
    stage2_eval_count: int = field(default=0, compare=False)

    def __post_init__(self) -> None:
        if self.strategy not in STRATEGIES:
            raise ValidationError(f"unknown cascade strategy {self.strategy!r}")
        if self.stage1.training_ids != self.stage2.training_ids:
            raise ValidationError("cascade stages must be trained on the same records")
        object.__setattr__(self, "exclusions", tuple(self.exclusions))

    @property
    def attributes(self) -> tuple:
        return self.stage1.attributes

    @property
    def codes(self) -> tuple:
        return self.stage1.codes

    @property
    def training_ids(self) -> frozenset:
        return self.stage1.training_ids

    def predict_labels(self, x) -> frozenset:
        labels, _ = predict_chidt(self, x)
        return labels

    def predict_with_scores(self, x):
        """(final labels, per-code scores from the stage that produced them, trace)."""
        s1, s1_scores, _ = self.stage1.predict_with_scores(x)
        ok, reason = is_valid(self.registry, self.exclusions, s1)
        if ok:
            return s1, s1_scores, CascadeTrace(False, REASON_OK, s1, s1)
        self.stage2_eval_count += 1
        if isinstance(self.stage2, LPModel):
            final = self.stage2.predict_labels(x)
            scores = self.stage2.code_scores_over(self.codes, x)
        else:
            final, scores, _ = self.stage2.predict_with_scores(x)
        fallback = False
        if self.single_label_fallback:
            ok2, _ = is_valid(self.registry, self.exclusions, final)
            if not ok2:
                final = frozenset({self.codes[int(np.argmax(scores))]})
                fallback = True
        return final, scores, CascadeTrace(True, reason, s1, final, fallback)


def train_chidt(
    ds: Dataset,
    stage1_params: C45Params | None = None,
    stage2_params: C45Params | None = None,
    strategy: str = STRATEGY_DIVERSE_BR,
    registry: ValidCombinationRegistry | None = None,
    exclusions: Sequence[ExclusionGroup] = (),
    threshold: float = 0.5,
    single_label_fallback: bool = False,
) -> ChiDTModel:
    """Train both cascade stages on the same records.

    The registry defaults to the combinations observed in ``ds`` itself.
    Stage-2 parameters default to the diversified unpruned/min-leaf-1
    profile for the diverse-br strategy and to stage-1 defaults otherwise.
    """
    if strategy not in STRATEGIES:
        raise ValidationError(f"unknown cascade strategy {strategy!r}")
    stage1_params = stage1_params or C45Params()
    if registry is None:
        registry = observed_registry(ds)
    stage1 = train_br(ds, stage1_params, threshold)
    if strategy == STRATEGY_DIVERSE_BR:
        stage2 = train_br(ds, stage2_params or DIVERSE_STAGE2_PARAMS, threshold)
    else:
        stage2 = train_label_powerset(ds, stage2_params or C45Params())
    return ChiDTModel(
        stage1=stage1,
        stage2=stage2,
        registry=registry,
        exclusions=tuple(exclusions),
        strategy=strategy,
        single_label_fallback=single_label_fallback,
    )


def predict_chidt(model: ChiDTModel, x):
    """Final LabelSet and trace; stage 2 is consulted only on known errors."""
    final, _, trace = model.predict_with_scores(x)
    return final, trace


def trigger_rate(model: ChiDTModel, ds: Dataset) -> float:
    """Fraction of records whose stage-1 prediction was a known error."""
    if not ds.records:
        raise ValidationError("trigger rate undefined for an empty dataset")
    hits = 0
    for rec in ds.records:
        _, trace = predict_chidt(model, rec.features)
        hits += trace.triggered
    return hits / len(ds.records)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


def model_to_dict(model: ChiDTModel) -> dict:
    return {
        "format": "chidt-model",
        "strategy": model.strategy,
        "single_label_fallback": model.single_label_fallback,
        "schema": schema_fingerprint(model.attributes, model.codes),
        "training_ids": sorted(model.training_ids),
        "registry": model.registry.to_dict(),
        "exclusions": [sorted(g.codes) for g in model.exclusions],
        "stage1": model.stage1.to_dict(),
        "stage2": model.stage2.to_dict(),
    }


def model_from_dict(doc) -> ChiDTModel:
    if doc.get("format") != "chidt-model":
        raise ValidationError("not a cascade model document")
    fp = doc["schema"]
    from .tree import _attributes_from_fingerprint  # shared fingerprint layout

    attributes = _attributes_from_fingerprint(fp)
    training_ids = frozenset(doc["training_ids"])
    stage1 = BRModel.from_dict(doc["stage1"], attributes, training_ids)
    if tuple(stage1.codes) != tuple(fp["classes"]):
        raise SchemaMismatchError("stage-1 code list does not match the model schema")
    s2doc = doc["stage2"]
    if s2doc.get("kind") == "lp":
        stage2 = LPModel.from_dict(s2doc, attributes, training_ids)
    else:
        stage2 = BRModel.from_dict(s2doc, attributes, training_ids)
    return ChiDTModel(
        stage1=stage1,
        stage2=stage2,
        registry=ValidCombinationRegistry.from_dict(doc["registry"]),
        exclusions=tuple(ExclusionGroup(frozenset(g)) for g in doc["exclusions"]),
        strategy=doc["strategy"],
        single_label_fallback=bool(doc.get("single_label_fallback", False)),
    )
