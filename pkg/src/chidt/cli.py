"""Command-line entry point: gen, train, predict, eval, inspect, validate.

Every command is driven by one JSON config (see RunConfig); selected keys
can be overridden with flags. Canonical outputs carry no timestamps, so a
fixed seed reproduces them byte for byte; wall-clock lines go to a sidecar
``run.log`` in the output directory.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from datetime import datetime
from pathlib import Path

from . import __version__
from .cascade import (
    ChiDTModel,
    model_from_dict,
    model_to_dict,
    predict_chidt,
    train_chidt,
)
from .config import RunConfig
from .data import (
    Dataset,
    GeneratorConfig,
    SplitSpec,
    cover_all_labels_split,
    export_csv,
    generate_synthetic,
    load_csv,
)
from .errors import ValidationError
from .evaluation import (
    evaluate_holdout,
    evaluate_kfold,
    evaluate_resubstitution,
    format_report,
)
from .ontology import (
    TermLexicon,
    ValidCombinationRegistry,
    combo_key,
    is_valid,
    load_exclusions,
    load_hierarchy,
    map_terms,
    observed_registry,
)

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2


def _dump_json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _log(cfg: RunConfig, message: str) -> None:
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    with open(cfg.out_dir / "run.log", "a", encoding="utf-8") as fh:
        fh.write(f"{datetime.now().isoformat()} {message}\n")


def _load_dataset(cfg: RunConfig, path: Path, attributes=None) -> Dataset:
    return load_csv(
        path.read_text(encoding="utf-8"),
        label_column=cfg.label_column,
        label_separator=cfg.label_separator,
        id_column=cfg.id_column,
        name=path.stem,
        attributes=attributes,
    )


def _load_model(path: Path) -> ChiDTModel:
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"model file is not valid JSON: {exc}")
    return model_from_dict(doc)


def _load_registry(path: Path) -> ValidCombinationRegistry:
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"registry file is not valid JSON: {exc}")
    return ValidCombinationRegistry.from_dict(doc)


def _load_exclusion_groups(cfg: RunConfig):
    if "exclusions" not in cfg.paths:
        return ()
    hierarchy = None
    if "hierarchy" in cfg.paths:
        hierarchy = load_hierarchy(cfg.paths["hierarchy"].read_text(encoding="utf-8"))
    return load_exclusions(cfg.paths["exclusions"].read_text(encoding="utf-8"), hierarchy)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_gen(cfg: RunConfig) -> int:
    if cfg.generator is None:
        raise ValidationError("config has no 'generator' section")
    seed = cfg.require_seed("generation")
    gen_cfg = GeneratorConfig.from_dict({**cfg.generator, "seed": seed})
    ds, combos = generate_synthetic(gen_cfg)

    dataset_path = cfg.path("dataset", "corpus.csv")
    registry_path = cfg.path("registry", "registry.json")
    _write(
        dataset_path,
        export_csv(ds, label_column=cfg.label_column, label_separator=cfg.label_separator, id_column=cfg.id_column),
    )
    registry = ValidCombinationRegistry(frozenset(combos))
    _write(registry_path, _dump_json(registry.to_dict()))
    _log(cfg, f"gen seed={seed} -> {dataset_path} {registry_path}")
    print(f"generated {len(ds)} records, {len(ds.label_alphabet)} codes, {len(registry)} combinations")
    print(f"dataset: {dataset_path}")
    print(f"registry: {registry_path}")
    return EXIT_OK


def _resolve_split(cfg: RunConfig, ds: Dataset) -> SplitSpec:
    if cfg.training.train_size is None:
        return SplitSpec(train_ids=ds.record_ids(), test_ids=frozenset())
    seed = cfg.require_seed("the cover-all-labels split")
    return cover_all_labels_split(ds, cfg.training.train_size, seed)


def cmd_train(cfg: RunConfig) -> int:
    ds = _load_dataset(cfg, cfg.path("dataset", "corpus.csv"))
    split = _resolve_split(cfg, ds)
    train_ds = ds.subset(split.train_ids, name=f"{ds.name}-train")

    registry = observed_registry(train_ds)
    registry_path = cfg.path("registry", "registry.json")
    if cfg.training.use_declared_registry and registry_path.exists():
        registry = registry.merged(_load_registry(registry_path))
    exclusions = _load_exclusion_groups(cfg)

    model = train_chidt(
        train_ds,
        stage1_params=cfg.training.stage1_params,
        stage2_params=cfg.training.stage2_params,
        strategy=cfg.training.strategy,
        registry=registry,
        exclusions=exclusions,
        threshold=cfg.training.threshold,
        single_label_fallback=cfg.training.single_label_fallback,
    )
    model_path = cfg.path("model", "model.json")
    _write(model_path, _dump_json(model_to_dict(model)))
    _log(cfg, f"train strategy={model.strategy} records={len(train_ds)} -> {model_path}")
    print(
        f"trained {model.strategy} cascade on {len(train_ds)} records, "
        f"{len(model.codes)} codes, registry of {len(model.registry)} combinations"
    )
    print(f"model: {model_path}")
    return EXIT_OK


def _rows_from_terms(cfg: RunConfig, model: ChiDTModel, source: Path):
    """Map bags of discharge-summary terms to feature vectors via the lexicon."""
    lexicon = TermLexicon.from_json(cfg.path("lexicon").read_text(encoding="utf-8"))
    try:
        doc = json.loads(source.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"terms file is not valid JSON: {exc}")
    if not isinstance(doc, list):
        raise ValidationError('terms file must be a JSON array of {"id", "terms"} objects')
    rows = []
    for i, entry in enumerate(doc):
        extra = set(entry) - {"id", "terms"}
        if extra:
            raise ValidationError(f"terms entry {i}: unknown keys {sorted(extra)}")
        vector, ignored = map_terms(lexicon, entry.get("terms", []), model.attributes)
        rows.append((str(entry.get("id", f"t{i}")), vector, ignored))
    return rows


def cmd_predict(cfg: RunConfig, input_path: Path | None, terms: bool = False) -> int:
    model = _load_model(cfg.path("model", "model.json"))
    source = input_path or cfg.path("dataset", "corpus.csv")
    if terms:
        rows = _rows_from_terms(cfg, model, source)
    else:
        ds = _load_dataset(cfg, source, attributes=model.attributes)
        rows = [(rec.id, rec.features, None) for rec in ds.records]

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ["id", "codes", "triggered", "reason"]
    if terms:
        header.append("ignored_terms")
    writer.writerow(header)
    triggered = 0
    for rid, features, ignored in rows:
        labels, trace = predict_chidt(model, features)
        triggered += trace.triggered
        row = [rid, combo_key(labels), str(trace.triggered).lower(), trace.reason]
        if terms:
            row.append(ignored)
        writer.writerow(row)
    out_path = cfg.out_dir / "predictions.csv"
    _write(out_path, buf.getvalue())
    _log(cfg, f"predict {source} -> {out_path}")
    print(f"predicted {len(rows)} records, {triggered} triggered the cascade")
    print(f"predictions: {out_path}")
    return EXIT_OK


def _build_trainer(cfg: RunConfig, registry_path: Path):
    exclusions = _load_exclusion_groups(cfg)

    def trainer(train_ds: Dataset):
        registry = observed_registry(train_ds)
        if cfg.training.use_declared_registry and registry_path.exists():
            registry = registry.merged(_load_registry(registry_path))
        return train_chidt(
            train_ds,
            stage1_params=cfg.training.stage1_params,
            stage2_params=cfg.training.stage2_params,
            strategy=cfg.training.strategy,
            registry=registry,
            exclusions=exclusions,
            threshold=cfg.training.threshold,
            single_label_fallback=cfg.training.single_label_fallback,
        )

    return trainer


def cmd_eval(cfg: RunConfig) -> int:
    protocol = cfg.evaluation.protocol
    mode = cfg.evaluation.mode
    if protocol == "kfold":
        ds = _load_dataset(cfg, cfg.path("dataset", "corpus.csv"))
        seed = cfg.require_seed("k-fold assignment")
        result = evaluate_kfold(
            ds, cfg.evaluation.k, seed, _build_trainer(cfg, cfg.path("registry", "registry.json")), mode=mode
        )
        text = format_report(result.aggregate)
        doc = result.to_dict()
    else:
        model = _load_model(cfg.path("model", "model.json"))
        ds = _load_dataset(cfg, cfg.path("dataset", "corpus.csv"), attributes=model.attributes)
        split = SplitSpec(train_ids=model.training_ids, test_ids=ds.record_ids() - model.training_ids)
        if protocol == "resubstitution":
            result = evaluate_resubstitution(model, ds, split, mode=mode)
        else:
            result = evaluate_holdout(model, ds, split, mode=mode)
        text = format_report(result.metrics)
        doc = result.to_dict()

    _write(cfg.out_dir / "report.txt", text + "\n")
    _write(cfg.out_dir / "report.json", _dump_json(doc))
    _log(cfg, f"eval protocol={protocol} mode={mode}")
    print(text)
    print(f"reports: {cfg.out_dir / 'report.txt'}, {cfg.out_dir / 'report.json'}")
    return EXIT_OK


def cmd_inspect(cfg: RunConfig) -> int:
    model = _load_model(cfg.path("model", "model.json"))
    print(f"strategy: {model.strategy}")
    print(f"codes: {', '.join(model.codes)}")
    print(f"training records: {len(model.training_ids)}")
    print(f"registry: {len(model.registry)} combinations")
    print(f"exclusion groups: {len(model.exclusions)}")
    if model.stage1.constant_codes:
        consts = ", ".join(f"{c}={v}" for c, v in sorted(model.stage1.constant_codes.items()))
        print(f"constant stage-1 codes: {consts}")
    for code, tree in zip(model.stage1.codes, model.stage1.trees):
        print(f"\n--- stage 1: {code} ({tree.n_nodes} nodes) ---")
        print(tree.render())
    if hasattr(model.stage2, "trees"):
        for code, tree in zip(model.stage2.codes, model.stage2.trees):
            print(f"\n--- stage 2: {code} ({tree.n_nodes} nodes) ---")
            print(tree.render())
    else:
        tree = model.stage2.tree
        print(f"\n--- stage 2: label-powerset ({tree.n_nodes} nodes) ---")
        print(tree.render())
    return EXIT_OK


def cmd_validate(cfg: RunConfig, labelsets_path: Path) -> int:
    registry = _load_registry(cfg.path("registry", "registry.json"))
    exclusions = _load_exclusion_groups(cfg)
    try:
        doc = json.loads(labelsets_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"labelsets file is not valid JSON: {exc}")
    if not isinstance(doc, list):
        raise ValidationError("labelsets file must be a JSON array of code arrays")
    for entry in doc:
        labels = frozenset(str(c) for c in entry)
        ok, reason = is_valid(registry, exclusions, labels)
        shown = combo_key(labels) if labels else "(empty)"
        print(f"{shown}\t{'valid' if ok else 'invalid'}\t{reason}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chidt",
        description="Cascade decision-tree toolkit for multi-label diagnosis coding experiments.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", required=True, help="path to the JSON run config")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="override the output directory")
        p.add_argument(
            "--mode", choices=["principal", "multilabel"], help="override the evaluation mode"
        )
        p.add_argument(
            "--strategy", choices=["diverse-br", "label-powerset"], help="override the cascade strategy"
        )

    add_common(sub.add_parser("gen", help="generate a synthetic corpus and its registry"))
    add_common(sub.add_parser("train", help="train the cascade model"))
    p = sub.add_parser("predict", help="predict codes and cascade traces for records")
    add_common(p)
    p.add_argument("--input", help="records CSV to predict (defaults to paths.dataset)")
    p.add_argument(
        "--terms",
        action="store_true",
        help='treat the input as a JSON array of {"id", "terms"} objects and map the '
        "term bags to features through the configured lexicon",
    )
    add_common(sub.add_parser("eval", help="evaluate per the configured protocol"))
    add_common(sub.add_parser("inspect", help="render the model's trees and metadata"))
    p = sub.add_parser("validate", help="check label sets against the registry")
    add_common(p)
    p.add_argument("labelsets", help="JSON array of code arrays to validate")
    return parser


def _apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = Path(args.out)
    if getattr(args, "mode", None):
        cfg.evaluation.mode = args.mode
    if getattr(args, "strategy", None):
        cfg.training.strategy = args.strategy
    return cfg


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _apply_overrides(RunConfig.from_file(args.config), args)
        if args.command == "gen":
            return cmd_gen(cfg)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "predict":
            return cmd_predict(cfg, Path(args.input) if args.input else None, terms=args.terms)
        if args.command == "eval":
            return cmd_eval(cfg)
        if args.command == "inspect":
            return cmd_inspect(cfg)
        if args.command == "validate":
            return cmd_validate(cfg, Path(args.labelsets))
        raise ValidationError(f"unknown command {args.command!r}")
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
