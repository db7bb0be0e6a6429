"""ICD-10-style code hierarchy, valid-combination registry, and term lexicon.

The registry is what turns "impossible combination of codes" into a test:
a predicted LabelSet is possible iff it is non-empty, violates no declared
exclusion group, and appears in the registry.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .data import AttributeMeta, Dataset, BINARY_DOMAIN
from .errors import ValidationError

LEVELS = ("concept", "major", "minor")

REASON_OK = "ok"
REASON_EMPTY = "empty"
REASON_UNREGISTERED = "unregistered"
REASON_EXCLUSION = "exclusion-violated"


@dataclass(frozen=True)
class CodeNode:
    """One node of the three-level code tree."""

    code: str
    title: str
    level: str
    children: tuple = ()

    def __post_init__(self) -> None:
        if self.level not in LEVELS:
            raise ValidationError(f"unknown hierarchy level {self.level!r} for {self.code!r}")
        object.__setattr__(self, "children", tuple(self.children))


class CodeHierarchy:
    """Concept / major / minor code tree with an optional prefix rule.

    When the prefix rule is enabled every minor code must start with its
    parent major code followed by '.', matching ICD-10 notation (I21.0
    under I21).
    """

    def __init__(self, roots: Sequence[CodeNode], prefix_rule_enabled: bool = True):
        self.roots = tuple(roots)
        self.prefix_rule_enabled = prefix_rule_enabled
        self._nodes: dict = {}
        self._parent: dict = {}
        for root in self.roots:
            self._register(root, None)

    def _register(self, node: CodeNode, parent: CodeNode | None) -> None:
        if node.code in self._nodes:
            raise ValidationError(f"duplicate code {node.code!r} in hierarchy")
        if parent is None:
            pass
        elif parent.level == "concept" and node.level != "major":
            raise ValidationError(f"concept {parent.code!r} may only have major children, got {node.code!r}")
        elif parent.level == "major" and node.level != "minor":
            raise ValidationError(f"major {parent.code!r} may only have minor children, got {node.code!r}")
        elif parent.level == "minor":
            raise ValidationError(f"minor {parent.code!r} must be a leaf, found child {node.code!r}")
        if node.level == "minor" and node.children:
            raise ValidationError(f"minor {node.code!r} must be a leaf")
        if (
            self.prefix_rule_enabled
            and parent is not None
            and node.level == "minor"
            and not node.code.startswith(parent.code + ".")
        ):
            raise ValidationError(
                f"minor {node.code!r} does not extend its major {parent.code!r} (prefix rule)"
            )
        self._nodes[node.code] = node
        if parent is not None:
            self._parent[node.code] = parent.code
        for child in node.children:
            self._register(child, node)

    def __contains__(self, code: str) -> bool:
        return code in self._nodes

    def node(self, code: str) -> CodeNode:
        try:
            return self._nodes[code]
        except KeyError:
            raise ValidationError(f"unknown code {code!r}")

    def codes(self) -> list:
        return sorted(self._nodes)

    def at_level(self, level: str) -> list:
        if level not in LEVELS:
            raise ValidationError(f"unknown hierarchy level {level!r}")
        return sorted(c for c, n in self._nodes.items() if n.level == level)

    def ancestors(self, code: str) -> list:
        """Ancestor codes nearest first (minor -> [major, concept])."""
        self.node(code)
        out = []
        cur = code
        while cur in self._parent:
            cur = self._parent[cur]
            out.append(cur)
        return out


def _node_from_dict(doc: Mapping, parent_level: str | None) -> CodeNode:
    extra = set(doc) - {"code", "title", "children", "level"}
    if extra:
        raise ValidationError(f"unknown hierarchy node keys: {sorted(extra)}")
    if "code" not in doc:
        raise ValidationError("hierarchy node missing 'code'")
    if parent_level == "minor":
        raise ValidationError(f"node {doc['code']!r} nested deeper than the minor level")
    default = "concept" if parent_level is None else LEVELS[LEVELS.index(parent_level) + 1]
    level = doc.get("level", default)
    children = tuple(_node_from_dict(c, level) for c in doc.get("children", []))
    return CodeNode(code=str(doc["code"]), title=str(doc.get("title", "")), level=level, children=children)


def load_hierarchy(content: str, prefix_rule: bool = True) -> CodeHierarchy:
    """Build a CodeHierarchy from JSON (a node object or a list of roots).

    Node objects carry ``code``, ``title`` and ``children``; level defaults
    to the node's depth (roots are concepts) and may be overridden with an
    explicit ``level`` field.
    """
    try:
        doc = json.loads(content)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"hierarchy file is not valid JSON: {exc}")
    roots_doc = doc if isinstance(doc, list) else [doc]
    roots = tuple(_node_from_dict(r, None) for r in roots_doc)
    return CodeHierarchy(roots, prefix_rule_enabled=prefix_rule)


def ancestors(hierarchy: CodeHierarchy, code: str) -> list:
    return hierarchy.ancestors(code)


# ---------------------------------------------------------------------------
# Valid-combination registry
# ---------------------------------------------------------------------------

PROVENANCE_OBSERVED = "observed"
PROVENANCE_DECLARED = "declared"


def combo_key(labels: Iterable[str]) -> str:
    """Canonical text form of a code combination (sorted, ';'-joined)."""
    return ";".join(sorted(labels))


@dataclass(frozen=True)
class ValidCombinationRegistry:
    """The set of label combinations considered possible, with provenance."""

    combinations: frozenset
    provenance: Mapping = field(default_factory=dict)

    def __post_init__(self) -> None:
        combos = frozenset(frozenset(c) for c in self.combinations)
        if frozenset() in combos:
            raise ValidationError("the empty combination can never be valid")
        object.__setattr__(self, "combinations", combos)
        prov = {frozenset(k): v for k, v in dict(self.provenance).items()}
        for combo in combos:
            prov.setdefault(combo, PROVENANCE_DECLARED)
        for combo, p in prov.items():
            if combo not in combos:
                raise ValidationError(f"provenance entry for unknown combination {combo_key(combo)!r}")
            if p not in (PROVENANCE_OBSERVED, PROVENANCE_DECLARED):
                raise ValidationError(f"unknown provenance {p!r}")
        object.__setattr__(self, "provenance", prov)

    def __contains__(self, labels) -> bool:
        return frozenset(labels) in self.combinations

    def __len__(self) -> int:
        return len(self.combinations)

    def merged(self, other: "ValidCombinationRegistry") -> "ValidCombinationRegistry":
        """Union of both registries; existing provenance wins on overlap."""
        prov = dict(other.provenance)
        prov.update(self.provenance)
        return ValidCombinationRegistry(self.combinations | other.combinations, prov)

    def to_dict(self) -> dict:
        entries = sorted(self.combinations, key=combo_key)
        return {
            "combinations": [
                {"codes": sorted(c), "provenance": self.provenance[c]} for c in entries
            ]
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ValidCombinationRegistry":
        extra = set(doc) - {"combinations"}
        if extra:
            raise ValidationError(f"unknown registry keys: {sorted(extra)}")
        combos = set()
        prov = {}
        for entry in doc.get("combinations", []):
            bad = set(entry) - {"codes", "provenance"}
            if bad:
                raise ValidationError(f"unknown registry entry keys: {sorted(bad)}")
            combo = frozenset(entry["codes"])
            combos.add(combo)
            prov[combo] = entry.get("provenance", PROVENANCE_DECLARED)
        return cls(frozenset(combos), prov)


def observed_registry(ds: Dataset) -> ValidCombinationRegistry:
    """Registry of the distinct non-empty LabelSets appearing in ``ds``."""
    combos = ds.distinct_labelsets()
    return ValidCombinationRegistry(
        frozenset(combos), {c: PROVENANCE_OBSERVED for c in combos}
    )


def declared_registry(combos: Iterable[Iterable[str]]) -> ValidCombinationRegistry:
    combos = frozenset(frozenset(c) for c in combos)
    return ValidCombinationRegistry(combos, {c: PROVENANCE_DECLARED for c in combos})


@dataclass(frozen=True)
class ExclusionGroup:
    """Codes declared pairwise mutually exclusive."""

    codes: frozenset

    def __post_init__(self) -> None:
        object.__setattr__(self, "codes", frozenset(self.codes))
        if len(self.codes) < 2:
            raise ValidationError("an exclusion group needs at least two codes")


def load_exclusions(content: str, hierarchy: CodeHierarchy | None = None) -> tuple:
    """Parse a JSON array of code arrays; codes checked against ``hierarchy`` if given."""
    try:
        doc = json.loads(content)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"exclusions file is not valid JSON: {exc}")
    if not isinstance(doc, list):
        raise ValidationError("exclusions file must be a JSON array of code arrays")
    groups = []
    for entry in doc:
        group = ExclusionGroup(frozenset(str(c) for c in entry))
        if hierarchy is not None:
            unknown = [c for c in sorted(group.codes) if c not in hierarchy]
            if unknown:
                raise ValidationError(f"exclusion group references unknown codes: {unknown}")
        groups.append(group)
    return tuple(groups)


def is_valid(
    registry: ValidCombinationRegistry,
    exclusions: Sequence[ExclusionGroup],
    labels,
):
    """Classify a LabelSet as possible or a known error.

    Checks run in a fixed order so failure reasons are deterministic:
    empty set, then exclusion groups, then registry membership.
    """
    labels = frozenset(labels)
    if not labels:
        return False, REASON_EMPTY
    for group in exclusions:
        if len(labels & group.codes) >= 2:
            return False, REASON_EXCLUSION
    if labels not in registry:
        return False, REASON_UNREGISTERED
    return True, REASON_OK


# ---------------------------------------------------------------------------
# Term lexicon
# ---------------------------------------------------------------------------


def normalize_term(term: str) -> str:
    """Lowercase, trim, and collapse internal whitespace (idempotent)."""
    return " ".join(term.strip().lower().split())


@dataclass(frozen=True)
class TermLexicon:
    """Mapping from normalized discharge-summary terms to binary feature names."""

    mapping: Mapping

    def __post_init__(self) -> None:
        cleaned: dict = {}
        for term, targets in dict(self.mapping).items():
            key = normalize_term(str(term))
            if not key:
                raise ValidationError("lexicon contains a blank term")
            cleaned.setdefault(key, set()).update(str(t) for t in targets)
        object.__setattr__(self, "mapping", {k: frozenset(v) for k, v in cleaned.items()})

    def targets(self) -> frozenset:
        out = set()
        for t in self.mapping.values():
            out |= t
        return frozenset(out)

    @classmethod
    def from_json(cls, content: str) -> "TermLexicon":
        try:
            doc = json.loads(content)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"lexicon file is not valid JSON: {exc}")
        if not isinstance(doc, dict):
            raise ValidationError("lexicon file must be a JSON object of term -> [feature names]")
        return cls(doc)


def map_terms(lexicon: TermLexicon, terms: Iterable[str], schema: Sequence[AttributeMeta]):
    """Binary presence vector for a bag of terms.

    A feature is set to 1 iff some normalized input term maps to it; terms
    with no lexicon entry are ignored and counted. Every lexicon target must
    be a binary {0,1} feature of the schema.

    Returns:
        (feature tuple aligned with the schema, ignored-term count)
    """
    positions = {}
    for i, attr in enumerate(schema):
        if attr.is_binary:
            positions[attr.name] = i
    missing = sorted(lexicon.targets() - set(positions))
    if missing:
        raise ValidationError(f"lexicon targets features absent from the schema: {missing}")

    vector = [0.0 if a.kind == "numeric" else 0 for a in schema]
    ignored = 0
    for term in terms:
        key = normalize_term(term)
        targets = lexicon.mapping.get(key)
        if targets is None:
            ignored += 1
            continue
        for name in targets:
            vector[positions[name]] = BINARY_DOMAIN.index("1")
    return tuple(vector), ignored
