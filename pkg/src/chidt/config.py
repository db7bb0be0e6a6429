"""Run configuration: one JSON document driving generation, training, and evaluation.

Unknown keys are rejected everywhere so typos fail loudly, and every
stochastic step draws from the single top-level seed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .cascade import STRATEGIES, STRATEGY_DIVERSE_BR
from .errors import ValidationError
from .evaluation import MODES, MODE_MULTILABEL
from .tree import C45Params

PROTOCOLS = ("resubstitution", "holdout", "kfold")

_PATH_KEYS = ("dataset", "registry", "model", "hierarchy", "lexicon", "exclusions")


def _reject_unknown(doc: Mapping, allowed, where: str) -> None:
    unknown = set(doc) - set(allowed)
    if unknown:
        raise ValidationError(f"unknown {where} keys: {sorted(unknown)}")


@dataclass
class TrainingConfig:
    strategy: str = STRATEGY_DIVERSE_BR
    threshold: float = 0.5
    train_size: int | None = None
    stage1_params: C45Params | None = None
    stage2_params: C45Params | None = None
    use_declared_registry: bool = True
    single_label_fallback: bool = False

    @classmethod
    def from_dict(cls, doc: Mapping) -> "TrainingConfig":
        _reject_unknown(
            doc,
            (
                "strategy",
                "threshold",
                "train_size",
                "stage1_params",
                "stage2_params",
                "use_declared_registry",
                "single_label_fallback",
            ),
            "training config",
        )
        strategy = doc.get("strategy", STRATEGY_DIVERSE_BR)
        if strategy not in STRATEGIES:
            raise ValidationError(f"unknown strategy {strategy!r}; expected one of {STRATEGIES}")
        return cls(
            strategy=strategy,
            threshold=float(doc.get("threshold", 0.5)),
            train_size=None if doc.get("train_size") is None else int(doc["train_size"]),
            stage1_params=C45Params.from_dict(doc["stage1_params"]) if "stage1_params" in doc else None,
            stage2_params=C45Params.from_dict(doc["stage2_params"]) if "stage2_params" in doc else None,
            use_declared_registry=bool(doc.get("use_declared_registry", True)),
            single_label_fallback=bool(doc.get("single_label_fallback", False)),
        )


@dataclass
class EvaluationConfig:
    mode: str = MODE_MULTILABEL
    protocol: str = "resubstitution"
    k: int = 10

    @classmethod
    def from_dict(cls, doc: Mapping) -> "EvaluationConfig":
        _reject_unknown(doc, ("mode", "protocol", "k"), "evaluation config")
        mode = doc.get("mode", MODE_MULTILABEL)
        if mode not in MODES:
            raise ValidationError(f"unknown evaluation mode {mode!r}; expected one of {MODES}")
        protocol = doc.get("protocol", "resubstitution")
        if protocol not in PROTOCOLS:
            raise ValidationError(f"unknown protocol {protocol!r}; expected one of {PROTOCOLS}")
        return cls(mode=mode, protocol=protocol, k=int(doc.get("k", 10)))


@dataclass
class RunConfig:
    seed: int | None = None
    out_dir: Path = Path("out")
    label_column: str = "codes"
    label_separator: str = ";"
    id_column: str = "id"
    paths: dict = field(default_factory=dict)
    generator: dict | None = None
    training: TrainingConfig = field(default_factory=TrainingConfig)
    evaluation: EvaluationConfig = field(default_factory=EvaluationConfig)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "RunConfig":
        _reject_unknown(
            doc,
            (
                "seed",
                "out_dir",
                "label_column",
                "label_separator",
                "id_column",
                "paths",
                "generator",
                "training",
                "evaluation",
            ),
            "config",
        )
        paths = dict(doc.get("paths", {}))
        _reject_unknown(paths, _PATH_KEYS, "paths")
        generator = doc.get("generator")
        if generator is not None:
            if "seed" in generator:
                raise ValidationError("generator section must not carry its own seed; use the top-level seed")
            _reject_unknown(generator, ("profiles", "n_records", "noise_rate", "features"), "generator config")
        return cls(
            seed=None if doc.get("seed") is None else int(doc["seed"]),
            out_dir=Path(doc.get("out_dir", "out")),
            label_column=str(doc.get("label_column", "codes")),
            label_separator=str(doc.get("label_separator", ";")),
            id_column=str(doc.get("id_column", "id")),
            paths={k: Path(v) for k, v in paths.items() if v is not None},
            generator=generator,
            training=TrainingConfig.from_dict(doc.get("training", {})),
            evaluation=EvaluationConfig.from_dict(doc.get("evaluation", {})),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        text = Path(path).read_text(encoding="utf-8")
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file is not valid JSON: {exc}")
        if not isinstance(doc, dict):
            raise ValidationError("config file must hold a JSON object")
        return cls.from_dict(doc)

    def require_seed(self, step: str) -> int:
        if self.seed is None:
            raise ValidationError(f"{step} is stochastic and requires a seed (config key 'seed' or --seed)")
        return self.seed

    def path(self, key: str, default_name: str | None = None) -> Path:
        if key in self.paths:
            return self.paths[key]
        if default_name is None:
            raise ValidationError(f"config paths.{key} is required for this command")
        return self.out_dir / default_name
