"""Batch experiment driver.

One binary, subcommand style. Every artifact-writing run leaves a
``<output>.manifest.json`` beside its output with the merged options,
seed, library versions, and any metrics, sufficient to re-run it.

Options come from flags and an optional ``--config`` JSON file; flags
override file values, unknown config keys are rejected. ``ROLEFUSE_SEED``
provides the default seed. Exit codes: 0 success, 1 usage error, 2 data
error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import os
import shlex
import sys
from pathlib import Path

import numpy as np

import rolefuse
from rolefuse import augment as aug
from rolefuse import conll, crf, data_model, embeddings, evaluation, fusion
from rolefuse.data_model import DatasetError, ROLES, Role

_REQUIRED = object()


class UsageError(Exception):
    pass


def _versions() -> dict:
    return {
        "rolefuse": rolefuse.__version__,
        "numpy": np.__version__,
        "python": sys.version.split()[0],
    }


def _write_manifest(output: str, command: str, options: dict, metrics: dict | None):
    manifest = {
        "command": command,
        "options": {k: v for k, v in options.items() if k not in ("func", "config")},
        "seed": options.get("seed"),
        "versions": _versions(),
        "metrics": metrics or {},
    }
    path = Path(str(output) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, default=str), encoding="utf-8")


def _default_seed() -> int:
    try:
        return int(os.environ.get("ROLEFUSE_SEED", "0"))
    except ValueError:
        raise UsageError("ROLEFUSE_SEED must be an integer")


def _load_input_instances(opts) -> list[data_model.EntityInstance]:
    if opts.get("dataset") and opts.get("instances"):
        raise UsageError("give either --dataset or --instances, not both")
    if opts.get("dataset"):
        return data_model.flatten_to_instances(_load_dataset(opts["dataset"]))
    if opts.get("instances"):
        path = opts["instances"]
        if not Path(path).exists():
            raise DatasetError(f"instances file not found: {path}")
        return data_model.load_instances(path)
    raise UsageError("one of --dataset or --instances is required")


def _load_dataset(path) -> list[data_model.MemeRecord]:
    if not Path(path).exists():
        raise DatasetError(f"dataset file not found: {path}")
    return data_model.load_dataset(path)


def _tables(opts, setting: str) -> fusion.EmbeddingSources:
    def read(key, label):
        path = opts.get(key)
        if not path:
            raise UsageError(f"setting {setting!r} requires --{label}")
        if not Path(path).exists():
            raise DatasetError(f"embedding table not found: {path}")
        return embeddings.read_table(path)

    entity = read("entity_emb", "entity-emb")
    text = image = None
    if setting in ("entity+text", "entity+text_image"):
        text = read("text_emb", "text-emb")
    if setting in ("entity+image", "entity+text_image"):
        image = read("image_emb", "image-emb")
    return fusion.EmbeddingSources(entity=entity, text=text, image=image)


def _emit(payload: dict, opts) -> None:
    if opts.get("json"):
        print(json.dumps(payload, default=str))


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_convert(opts):
    records = _load_dataset(opts["dataset"])
    seqs = [conll.to_bio(r, mode=opts["mode"]) for r in records]
    conll.write_conll(seqs, opts["output"])
    metrics = {"sequences": len(seqs), "tokens": sum(len(s.tokens) for s in seqs)}
    _write_manifest(opts["output"], "convert", opts, metrics)
    _emit(metrics, opts)
    return metrics


def cmd_train_crf(opts):
    path = opts["train"]
    if not Path(path).exists():
        raise DatasetError(f"training file not found: {path}")
    data = conll.read_conll(path)
    if not data:
        raise DatasetError(f"no sequences in {path}")
    model, trace = crf.train_crf(
        data,
        l2=opts["l2"],
        max_iterations=opts["max_iterations"],
        seed=opts["seed"],
    )
    model.save(opts["model_out"])
    metrics = {
        "sequences": len(data),
        "features": len(model.feature_index),
        "labels": list(model.labels),
        "final_objective": trace[-1],
        "iterations": len(trace) - 1,
    }
    _write_manifest(opts["model_out"], "train-crf", opts, metrics)
    _emit(metrics, opts)
    return metrics


def cmd_tag(opts):
    model = crf.CrfModel.load(opts["model"])
    if not Path(opts["input"]).exists():
        raise DatasetError(f"input file not found: {opts['input']}")
    seqs = conll.read_conll(opts["input"])
    tagged = [crf.tag_sequence(model, s) for s in seqs]
    conll.write_conll(tagged, opts["output"])
    metrics = {"sequences": len(tagged)}
    _write_manifest(opts["output"], "tag", opts, metrics)
    _emit(metrics, opts)
    return metrics


def _maybe_augment(instances, opts):
    mode = opts.get("augment", "none")
    if mode == "none":
        return instances
    lexicon = (
        aug.load_lexicon(opts["lexicon"]) if opts.get("lexicon") else aug.default_lexicon()
    )
    copies = [int(x) for x in str(opts["copies"]).split(",")]
    if len(copies) != 4:
        raise UsageError("--copies needs four comma-separated counts")
    policy = aug.AugmentPolicy(
        copies=dict(zip(ROLES, copies)), p=opts["p"], seed=opts["seed"]
    )
    provider = None
    if mode in ("contextual", "mix"):
        if not opts.get("provider"):
            raise UsageError(f"--augment {mode} requires --provider")
        provider = aug.SubstitutionProvider(shlex.split(opts["provider"]))
    try:
        return aug.balance(instances, lexicon, policy, mode=mode, provider=provider)
    finally:
        if provider is not None:
            provider.close()


def cmd_train_fusion(opts):
    instances = _load_input_instances(opts)
    if not instances:
        raise DatasetError("no training instances")
    instances = _maybe_augment(instances, opts)
    tables = _tables(opts, opts["setting"])
    cfg = fusion.TrainConfig(
        learning_rate=opts["learning_rate"],
        batch_size=opts["batch_size"],
        epochs=opts["epochs"],
        seed=opts["seed"],
        setting=opts["setting"],
        attention=opts["attention"],
        hidden_dim=opts["hidden_dim"],
        blocks=opts["blocks"],
        rank1=opts["rank1"],
        rank2=opts["rank2"],
        rank3=opts["rank3"],
        fusion_dim=opts["fusion_dim"],
        dropout=opts["dropout"],
        attention_slots=opts["attention_slots"],
        attention_dim=opts["attention_dim"],
    )
    model, trace = fusion.train_fusion(cfg, instances, tables)
    fusion.save_model(model, opts["model_out"], epoch=cfg.epochs, loss_trace=trace)
    metrics = {
        "instances": len(instances),
        "initial_loss": trace[0],
        "final_loss": trace[-1],
        "loss_trace": trace,
    }
    _write_manifest(opts["model_out"], "train-fusion", opts, metrics)
    _emit(metrics, opts)
    return metrics


def cmd_predict(opts):
    model, meta = fusion.load_model(opts["model"])
    instances = _load_input_instances(opts)
    tables = _tables(opts, model.config.setting)
    predictions = fusion.predict_all(model, instances, tables)
    with Path(opts["output"]).open("w", encoding="utf-8") as fh:
        for inst, role in zip(instances, predictions):
            fh.write(
                json.dumps(
                    {"meme_id": inst.meme_id, "entity": inst.entity_name, "role": role.value}
                )
                + "\n"
            )
    metrics = {"instances": len(instances)}
    _write_manifest(opts["output"], "predict", opts, metrics)
    _emit(metrics, opts)
    return metrics


def _read_predictions(path) -> dict[tuple[str, str], Role]:
    if not Path(path).exists():
        raise DatasetError(f"predictions file not found: {path}")
    preds: dict[tuple[str, str], Role] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                preds[(obj["meme_id"], obj["entity"])] = Role(obj["role"])
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise DatasetError(f"{path}:{line_no}: invalid prediction: {exc}")
    return preds


def cmd_evaluate(opts):
    if opts["task"] == "classification":
        gold_instances = _load_input_instances(
            {"dataset": None, "instances": opts["gold"]}
            if _looks_like_instances(opts["gold"])
            else {"dataset": opts["gold"], "instances": None}
        )
        preds = _read_predictions(opts["pred"])
        gold, pred = [], []
        for inst in gold_instances:
            key = (inst.meme_id, inst.entity_name)
            if key not in preds:
                raise DatasetError(f"missing prediction for {key}")
            gold.append(inst.role)
            pred.append(preds[key])
        report = evaluation.evaluate(gold, pred)
    else:
        for key in ("gold", "pred"):
            if not Path(opts[key]).exists():
                raise DatasetError(f"file not found: {opts[key]}")
        gold_seqs = conll.read_conll(opts["gold"])
        pred_seqs = conll.read_conll(opts["pred"])
        if len(gold_seqs) != len(pred_seqs):
            raise DatasetError(
                f"sequence count mismatch: {len(gold_seqs)} gold vs {len(pred_seqs)} pred"
            )
        report = evaluation.sequence_evaluate(
            [s.tags for s in gold_seqs], [s.tags for s in pred_seqs]
        )
    if opts.get("report_out"):
        Path(opts["report_out"]).write_text(report.to_json(), encoding="utf-8")
        _write_manifest(opts["report_out"], "evaluate", opts, report.to_dict())
    if opts.get("json"):
        print(report.to_json(indent=None))
    else:
        print(report.to_table())
    return report.to_dict()


def _looks_like_instances(path) -> bool:
    if not Path(path).exists():
        raise DatasetError(f"gold file not found: {path}")
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError:
                    raise DatasetError(f"{path}: not valid JSONL")
                return "entity" in obj and "role" in obj
    raise DatasetError(f"{path}: empty gold file")


def cmd_augment(opts):
    instances = _load_input_instances(opts)
    merged = dict(opts)
    merged["augment"] = merged.get("mode", "lexicon")
    out = _maybe_augment(instances, merged)
    data_model.save_instances(out, opts["output"])
    counts = data_model.class_distribution(out)
    metrics = {"input": len(instances), "output": len(out), "counts": counts.as_dict()}
    _write_manifest(opts["output"], "augment", opts, metrics)
    _emit(metrics, opts)
    return metrics


def cmd_distribution(opts):
    instances = _load_input_instances(opts)
    counts = data_model.class_distribution(instances)
    pct = counts.percentages()
    payload = {"counts": counts.as_dict(), "percent": {r.value: pct[r] for r in ROLES}}
    if opts.get("json"):
        print(json.dumps(payload))
    else:
        for role in ROLES:
            print(f"{role.value:8s} {counts[role]:8d} {pct[role]:3d}%")
        print(f"{'total':8s} {counts.total:8d}")
    return payload


# ---------------------------------------------------------------------------
# Argument handling
# ---------------------------------------------------------------------------


def _sub(subparsers, name, func, help_text):
    sp = subparsers.add_parser(name, help=help_text, argument_default=argparse.SUPPRESS)
    sp.set_defaults(_func=func, _name=name)
    sp.add_argument("--config", help="JSON config file; flags override its values")
    sp.add_argument("--json", action="store_true", help="machine-readable stdout")
    sp.add_argument("--seed", type=int)
    return sp


_COMMON_DEFAULTS = {"config": None, "json": False}


def _fusion_shape_args(sp):
    sp.add_argument("--hidden-dim", type=int)
    sp.add_argument("--blocks", type=int)
    sp.add_argument("--rank1", type=int)
    sp.add_argument("--rank2", type=int)
    sp.add_argument("--rank3", type=int)
    sp.add_argument("--fusion-dim", type=int)
    sp.add_argument("--dropout", type=float)
    sp.add_argument("--attention-slots", type=int)
    sp.add_argument("--attention-dim", type=int)


def build_parser() -> tuple[argparse.ArgumentParser, dict[str, dict]]:
    parser = argparse.ArgumentParser(
        prog="rolefuse", description="Meme entity role labeling experiments"
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    defaults: dict[str, dict] = {}
    shape_defaults = {
        "hidden_dim": 512, "blocks": 8, "rank1": 64, "rank2": 64, "rank3": 32,
        "fusion_dim": 256, "dropout": 0.1, "attention_slots": 8, "attention_dim": 64,
    }

    sp = _sub(subparsers, "convert", cmd_convert, "dataset JSONL to CoNLL BIO")
    sp.add_argument("--dataset")
    sp.add_argument("--output")
    sp.add_argument("--mode", choices=["all_tokens", "entities_only"])
    defaults["convert"] = {
        **_COMMON_DEFAULTS, "dataset": _REQUIRED, "output": _REQUIRED,
        "mode": "all_tokens", "seed": None,
    }

    sp = _sub(subparsers, "train-crf", cmd_train_crf, "train the CRF tagger")
    sp.add_argument("--train")
    sp.add_argument("--model-out")
    sp.add_argument("--l2", type=float)
    sp.add_argument("--max-iterations", type=int)
    defaults["train-crf"] = {
        **_COMMON_DEFAULTS, "train": _REQUIRED, "model_out": _REQUIRED,
        "l2": 1.0, "max_iterations": 100, "seed": None,
    }

    sp = _sub(subparsers, "tag", cmd_tag, "tag a CoNLL file with a trained CRF")
    sp.add_argument("--model")
    sp.add_argument("--input")
    sp.add_argument("--output")
    defaults["tag"] = {
        **_COMMON_DEFAULTS, "model": _REQUIRED, "input": _REQUIRED,
        "output": _REQUIRED, "seed": None,
    }

    sp = _sub(subparsers, "train-fusion", cmd_train_fusion, "train the fusion classifier")
    sp.add_argument("--dataset")
    sp.add_argument("--instances")
    sp.add_argument("--entity-emb")
    sp.add_argument("--text-emb")
    sp.add_argument("--image-emb")
    sp.add_argument("--model-out")
    sp.add_argument("--setting", choices=list(fusion.SETTINGS))
    sp.add_argument("--attention", action="store_true")
    sp.add_argument("--augment", choices=["none", "lexicon", "contextual", "mix"])
    sp.add_argument("--lexicon")
    sp.add_argument("--provider", help="substitution provider command line")
    sp.add_argument("--copies", help="per-role copy counts, e.g. 6,2,3,0")
    sp.add_argument("--p", type=float)
    sp.add_argument("--learning-rate", type=float)
    sp.add_argument("--batch-size", type=int)
    sp.add_argument("--epochs", type=int)
    _fusion_shape_args(sp)
    defaults["train-fusion"] = {
        **_COMMON_DEFAULTS, "dataset": None, "instances": None,
        "entity_emb": _REQUIRED, "text_emb": None, "image_emb": None,
        "model_out": _REQUIRED, "setting": "entity+text", "attention": False,
        "augment": "none", "lexicon": None, "provider": None,
        "copies": "6,2,3,0", "p": 0.3,
        "learning_rate": 1e-6, "batch_size": 8, "epochs": 10, "seed": None,
        **shape_defaults,
    }

    sp = _sub(subparsers, "predict", cmd_predict, "predict roles with a fusion model")
    sp.add_argument("--model")
    sp.add_argument("--dataset")
    sp.add_argument("--instances")
    sp.add_argument("--entity-emb")
    sp.add_argument("--text-emb")
    sp.add_argument("--image-emb")
    sp.add_argument("--output")
    defaults["predict"] = {
        **_COMMON_DEFAULTS, "model": _REQUIRED, "dataset": None, "instances": None,
        "entity_emb": _REQUIRED, "text_emb": None, "image_emb": None,
        "output": _REQUIRED, "seed": None,
    }

    sp = _sub(subparsers, "evaluate", cmd_evaluate, "score predictions")
    sp.add_argument("--task", choices=["classification", "sequence"])
    sp.add_argument("--gold")
    sp.add_argument("--pred")
    sp.add_argument("--report-out")
    defaults["evaluate"] = {
        **_COMMON_DEFAULTS, "task": "classification", "gold": _REQUIRED,
        "pred": _REQUIRED, "report_out": None, "seed": None,
    }

    sp = _sub(subparsers, "augment", cmd_augment, "write class-balanced instances")
    sp.add_argument("--dataset")
    sp.add_argument("--instances")
    sp.add_argument("--output")
    sp.add_argument("--mode", choices=["lexicon", "contextual", "mix"])
    sp.add_argument("--lexicon")
    sp.add_argument("--provider")
    sp.add_argument("--copies")
    sp.add_argument("--p", type=float)
    defaults["augment"] = {
        **_COMMON_DEFAULTS, "dataset": None, "instances": None,
        "output": _REQUIRED, "mode": "lexicon", "lexicon": None,
        "provider": None, "copies": "6,2,3,0", "p": 0.3, "seed": None,
    }

    sp = _sub(subparsers, "distribution", cmd_distribution, "print role counts")
    sp.add_argument("--dataset")
    sp.add_argument("--instances")
    defaults["distribution"] = {
        **_COMMON_DEFAULTS, "dataset": None, "instances": None, "seed": None,
    }

    return parser, defaults


def _merge_options(args: argparse.Namespace, defaults: dict) -> dict:
    given = {k: v for k, v in vars(args).items() if not k.startswith("_") and k != "command"}
    merged = dict(defaults)
    config_path = given.pop("config", None)
    if config_path:
        try:
            config = json.loads(Path(config_path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise DatasetError(f"config file not found: {config_path}")
        except json.JSONDecodeError as exc:
            raise DatasetError(f"invalid config JSON: {exc}")
        unknown = set(config) - set(defaults)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        merged.update(config)
    merged.update(given)
    if merged.get("seed") is None:
        merged["seed"] = _default_seed()
    missing = [k for k, v in merged.items() if v is _REQUIRED]
    if missing:
        flags = ", ".join("--" + k.replace("_", "-") for k in sorted(missing))
        raise UsageError(f"missing required options: {flags}")
    return merged


def main(argv: list[str] | None = None) -> int:
    parser, defaults = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        opts = _merge_options(args, defaults[args.command])
        args._func(opts)
        return 0
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (crf.CrfNumericError, fusion.DivergenceError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except (
        DatasetError,
        conll.BioFormatError,
        embeddings.EmbeddingFormatError,
        embeddings.MissingEmbeddingError,
        aug.AugmentError,
        aug.ProviderError,
        crf.CrfError,
        fusion.FusionError,
        FileNotFoundError,
        ValueError,
    ) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
