"""Command-line driver.

Wires dataset loading, the two-pass training pipeline, and report
rendering behind six subcommands (train, eval, ga, groups, features,
synth). One YAML config file describes a run; every field can be
overridden with --set key=value, and the fully-merged config is echoed
into the model document so a run can be reproduced from its artifacts.

Exit codes: 0 success, 2 config problem, 3 data problem, 4 model
integrity problem, 5 degenerate input.
"""

from __future__ import annotations

import argparse
import copy
import hashlib
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import yaml

from . import report as rpt
from .datasets import (
    LabeledImage,
    SplitSpec,
    load_dir,
    load_idx,
    read_pgm,
    save_idx,
    split,
    synth_digits,
)
from .errors import (
    BadMagicError,
    BlankImageError,
    ConfigError,
    CountMismatchError,
    DigitPassError,
    EmptyDatasetError,
    MissingRootError,
    ModelIntegrityError,
    NoSamplesError,
    TruncatedFileError,
)
from .evolution import Chromosome, GaConfig, run_ga
from .featurizer import (
    NUM_WINDOWS,
    assemble_features,
    build_feature_bank,
    feature_header,
    window_table,
)
from .grouping import GroupTable, form_groups, qualifying_pairs
from .neuralnet import MlpModel, Topology, TrainConfig, confusion, init_model, train
from .raster import binarize, normalize
from .seeds import derive_seed
from .twopass import (
    GroupExpert,
    PipelineConfig,
    PipelineModel,
    evaluate,
    group_key,
    prepare_images,
    stratified_indices,
    train_pipeline,
)

FORMAT_VERSION = 1

DEFAULTS = {
    "seed": 0,
    "output_dir": "out",
    "dataset": {"synth": {"per_class": 200, "noise": 0.08}},
    "split": {"train_fraction": 2 / 3, "stratified": True},
    "binarize": {"threshold": "otsu", "invert": False},
    "pipeline": {
        "coarse_hidden": 35,
        "coarse_epochs": 100,
        "learning_rate": 0.02,
        "momentum": 0.9,
        "tau": 5,
        "expert_hidden": {"1-9": 20, "0-3-4-5-6": 40},
        "expert_hidden_default": None,
        "expert_epochs": 100,
        "fitness_split": 0.8,
        "fitness_on_test": False,
    },
    "ga": {
        "population_size": 20,
        "max_generations": 20,
        "crossover_fraction": 0.8,
        "mutation_fraction": 0.5,
        "stop_ratio": 0.98,
        "fitness_epochs": 30,
        "hidden_units": 20,
        "learning_rate": 0.02,
        "momentum": 0.9,
    },
}

# Allowed keys, for typo detection; None means "scalar leaf".
_SCHEMA = {
    "seed": None,
    "output_dir": None,
    "dataset": {
        "synth": {"per_class": None, "noise": None, "seed": None},
        "idx": {"images": None, "labels": None},
        "dir": {"root": None},
    },
    "split": {"train_fraction": None, "stratified": None, "seed": None},
    "binarize": {"threshold": None, "invert": None},
    "pipeline": {k: None for k in DEFAULTS["pipeline"]},
    "ga": {k: None for k in DEFAULTS["ga"]},
}


class RunConfig:
    """Validated run description plus the raw dict echoed into artifacts."""

    def __init__(self, raw: dict):
        self.raw = raw
        self.seed = raw["seed"]
        self.output_dir = Path(raw["output_dir"])
        self.dataset = raw["dataset"]
        self.split_spec = SplitSpec(
            train_fraction=raw["split"]["train_fraction"],
            seed=raw["split"].get("seed", derive_seed(self.seed, "split")),
            stratified=raw["split"]["stratified"],
        )
        self.pipeline = build_pipeline_config(raw)


def _check_schema(node, schema, path=""):
    if schema is None or not isinstance(node, dict):
        return
    for key, value in node.items():
        where = f"{path}.{key}" if path else key
        if key not in schema:
            raise ConfigError(f"unknown config field '{where}'")
        _check_schema(value, schema[key], where)


def _deep_merge(base: dict, user: dict, path=""):
    for key, value in user.items():
        where = f"{path}.{key}" if path else key
        if key == "dataset" and not path:
            base[key] = copy.deepcopy(value)  # a source replaces the default wholly
        elif isinstance(value, dict) and isinstance(base.get(key), dict):
            _deep_merge(base[key], value, where)
        else:
            base[key] = copy.deepcopy(value)


def _apply_set(raw: dict, assignment: str):
    if "=" not in assignment:
        raise ConfigError(f"--set expects key=value, got '{assignment}'")
    dotted, _, text = assignment.partition("=")
    try:
        value = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError(f"--set {dotted}: bad value: {e}")
    node = raw
    keys = dotted.split(".")
    for key in keys[:-1]:
        node = node.setdefault(key, {})
        if not isinstance(node, dict):
            raise ConfigError(f"--set {dotted}: '{key}' is not a section")
    node[keys[-1]] = value


def parse_config(config_path, sets=(), seed=None, out=None) -> RunConfig:
    raw = copy.deepcopy(DEFAULTS)
    if config_path:
        try:
            text = Path(config_path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config {config_path}: {e}")
        try:
            user = yaml.safe_load(text) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"{config_path}: not valid YAML: {e}")
        if not isinstance(user, dict):
            raise ConfigError(f"{config_path}: top level must be a mapping")
        _deep_merge(raw, user)
    for assignment in sets:
        _apply_set(raw, assignment)
    if seed is not None:
        raw["seed"] = seed
    if out is not None:
        raw["output_dir"] = out
    _check_schema(raw, _SCHEMA)

    sources = [k for k in ("synth", "idx", "dir") if k in raw["dataset"]]
    if len(sources) != 1:
        raise ConfigError(
            f"exactly one dataset source required (synth | idx | dir), found {sources or 'none'}"
        )
    try:
        return RunConfig(raw)
    except (ValueError, TypeError, KeyError) as e:
        raise ConfigError(f"invalid config value: {e}")


def build_pipeline_config(raw: dict) -> PipelineConfig:
    mode = raw["binarize"]["threshold"]
    if mode == "otsu" or mode is None:
        threshold = None
    elif isinstance(mode, int) and 0 <= mode <= 255:
        threshold = mode
    else:
        raise ConfigError(f"binarize.threshold must be 'otsu' or an integer 0..255, got {mode!r}")
    p, g = raw["pipeline"], raw["ga"]
    try:
        ga = GaConfig(seed=0, **g)
        return PipelineConfig(
            seed=raw["seed"],
            ga=ga,
            threshold=threshold,
            invert=bool(raw["binarize"]["invert"]),
            **{k: v for k, v in p.items()},
        )
    except (ValueError, TypeError) as e:
        raise ConfigError(f"invalid config value: {e}")


def load_dataset(cfg: RunConfig) -> list[LabeledImage]:
    src = cfg.dataset
    try:
        if "synth" in src:
            s = src["synth"]
            seed = s.get("seed", derive_seed(cfg.seed, "synth-data"))
            return synth_digits(int(s["per_class"]), seed, float(s.get("noise", 0.0)))
        if "idx" in src:
            return load_idx(src["idx"]["images"], src["idx"]["labels"])
        return load_dir(src["dir"]["root"])
    except OSError as e:
        raise MissingRootError(f"dataset unavailable: {e}")


# ---------------------------------------------------------------------------
# Model document
# ---------------------------------------------------------------------------

def _model_to_obj(m: MlpModel) -> dict:
    t = m.topology
    return {
        "topology": [t.inputs, t.hidden, t.outputs],
        "hidden_weights": m.hidden_weights.tolist(),
        "hidden_biases": m.hidden_biases.tolist(),
        "output_weights": m.output_weights.tolist(),
        "output_biases": m.output_biases.tolist(),
    }


def _model_from_obj(o: dict) -> MlpModel:
    t = Topology(*(int(v) for v in o["topology"]))
    return MlpModel(
        t,
        np.asarray(o["hidden_weights"], dtype=np.float64),
        np.asarray(o["hidden_biases"], dtype=np.float64),
        np.asarray(o["output_weights"], dtype=np.float64),
        np.asarray(o["output_biases"], dtype=np.float64),
    )


def _canonical(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=1)


def save_model(path, pm: PipelineModel, config_echo: dict) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "config": config_echo,
        "coarse": _model_to_obj(pm.coarse),
        "groups": [list(g) for g in pm.group_table.groups],
        "experts": [
            {
                "group": list(e.group),
                "chromosome": e.chromosome.bitstring,
                "model": _model_to_obj(e.model),
            }
            for e in pm.experts
        ],
        "train_confusion": pm.train_confusion.tolist(),
        "skipped_blank": int(pm.skipped_blank),
    }
    doc["digest"] = hashlib.sha256(_canonical(doc).encode("utf-8")).hexdigest()
    Path(path).write_text(_canonical(doc) + "\n")


def load_model(path) -> tuple[PipelineModel, dict]:
    """Verify digest and version, then rebuild the pipeline model."""
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise ModelIntegrityError(f"cannot read model document {path}: {e}")
    if not isinstance(doc, dict) or doc.get("format_version") != FORMAT_VERSION:
        raise ModelIntegrityError(
            f"{path}: unrecognized format_version {doc.get('format_version')!r}"
        )
    stored = doc.pop("digest", None)
    actual = hashlib.sha256(_canonical(doc).encode("utf-8")).hexdigest()
    if stored != actual:
        raise ModelIntegrityError(f"{path}: content digest mismatch (corrupted document)")
    try:
        echo = doc["config"]
        pm = PipelineModel(
            coarse=_model_from_obj(doc["coarse"]),
            group_table=GroupTable(tuple(tuple(int(v) for v in g) for g in doc["groups"])),
            experts=[
                GroupExpert(
                    group=tuple(int(v) for v in e["group"]),
                    chromosome=Chromosome.from_bitstring(e["chromosome"]),
                    model=_model_from_obj(e["model"]),
                )
                for e in doc["experts"]
            ],
            config=build_pipeline_config(echo),
            train_confusion=np.asarray(doc["train_confusion"], dtype=np.int64),
            skipped_blank=int(doc["skipped_blank"]),
        )
    except (KeyError, ValueError, TypeError) as e:
        raise ModelIntegrityError(f"{path}: malformed model document: {e}")
    return pm, echo


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_train(args) -> int:
    cfg = parse_config(args.config, args.set, args.seed, args.out)
    data = load_dataset(cfg)
    train_set, test_set = split(data, cfg.split_spec)
    pm = train_pipeline(
        train_set,
        cfg.pipeline,
        fitness_holdout=test_set if cfg.pipeline.fitness_on_test else None,
    )

    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    save_model(out / "model.json", pm, cfg.raw)
    rpt.write_confusion_csv(out / "confusion_train.csv", pm.train_confusion)
    rpt.render_confusion_png(out / "confusion_train.png", pm.train_confusion,
                             "coarse confusion (training)")
    rpt.write_groups_csv(out / "groups.csv", pm.group_table,
                         qualifying_pairs(pm.train_confusion, cfg.pipeline.tau))
    for key, history in pm.ga_histories.items():
        rpt.write_ga_history_csv(out / f"ga_history_{key}.csv", history)
    rpt.render_fitness_png(out / "ga_fitness.png", pm.ga_histories)
    rpt.render_windows_png(
        out / "windows.png",
        {group_key(e.group): e.chromosome.bitstring for e in pm.experts},
    )

    report = evaluate(pm, test_set)
    rpt.write_report_csv(out / "report.csv", report)
    rpt.write_route_confusions_csv(out, report)
    rpt.render_confusion_png(out / "confusion_test.png", report.combined_confusion,
                             "two-pass confusion (test)")
    summary = rpt.summary_text(report)
    (out / "report.txt").write_text(summary)
    print(summary, end="")
    print(f"artifacts written to {out}")
    return 0


def cmd_eval(args) -> int:
    pm, _ = load_model(args.model)
    cfg = parse_config(args.config, args.set, args.seed, args.out)
    data = load_dataset(cfg)
    _, test_set = split(data, cfg.split_spec)
    report = evaluate(pm, test_set)

    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    rpt.write_report_csv(out / "report.csv", report)
    rpt.write_route_confusions_csv(out, report)
    rpt.render_confusion_png(out / "confusion_test.png", report.combined_confusion,
                             "two-pass confusion (test)")
    summary = rpt.summary_text(report)
    (out / "report.txt").write_text(summary)
    print(summary, end="")
    return 0


def _parse_group(text: str) -> tuple[int, ...]:
    try:
        labels = sorted(set(int(tok) for tok in text.replace(" ", "").split(",") if tok != ""))
    except ValueError:
        raise ConfigError(f"--group expects comma-separated digits, got '{text}'")
    if len(labels) < 2 or labels[0] < 0 or labels[-1] > 9:
        raise ConfigError(f"--group needs at least 2 distinct labels in 0..9, got {labels}")
    return tuple(labels)


def cmd_ga(args) -> int:
    cfg = parse_config(args.config, args.set, args.seed, args.out)
    group = _parse_group(args.group)
    key = group_key(group)
    ga_cfg = replace(cfg.pipeline.ga, seed=derive_seed(cfg.seed, "ga", key))

    if args.mock_fitness:
        best, best_fit, history = run_ga(
            group, None, None, ga_cfg, fitness_fn=lambda ch: ch.popcount / NUM_WINDOWS
        )
    else:
        data = load_dataset(cfg)
        train_set, _ = split(data, cfg.split_spec)
        images, labels, _ = prepare_images(train_set, cfg.pipeline.threshold, cfg.pipeline.invert)
        member = np.isin(labels, group)
        if not member.any():
            raise EmptyDatasetError(f"no training samples with labels in {list(group)}")
        bank = build_feature_bank([img for img, m in zip(images, member) if m])
        g_labels = labels[member]
        fit_idx, val_idx = stratified_indices(
            g_labels, cfg.pipeline.fitness_split, derive_seed(cfg.seed, "fitness-split", key)
        )
        best, best_fit, history = run_ga(
            group,
            (bank.take(fit_idx), g_labels[fit_idx]),
            (bank.take(val_idx), g_labels[val_idx]),
            ga_cfg,
        )

    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    rpt.write_ga_history_csv(out / f"ga_history_{key}.csv", history)
    rpt.render_fitness_png(out / f"ga_fitness_{key}.png", {key: history})
    rpt.render_windows_png(out / f"windows_{key}.png", {key: best.bitstring})

    print(f"group {{{','.join(str(g) for g in group)}}}: "
          f"best chromosome {best.bitstring}, fitness {best_fit:.6f}, "
          f"{len(history.records)} generation(s)")
    for win in window_table():
        if best.bits[win.index]:
            print(f"  window {win.index}: ({win.x0},{win.y0})-({win.x1},{win.y1})")
    return 0


def cmd_groups(args) -> int:
    cfg = parse_config(args.config, args.set, args.seed, args.out)
    data = load_dataset(cfg)
    train_set, _ = split(data, cfg.split_spec)
    images, labels, _ = prepare_images(train_set, cfg.pipeline.threshold, cfg.pipeline.invert)
    if len(images) == 0:
        raise EmptyDatasetError("all training samples were blank")
    bank = build_feature_bank(images)

    p = cfg.pipeline
    coarse = init_model(Topology(24, p.coarse_hidden), derive_seed(p.seed, "coarse-init"))
    coarse, _ = train(coarse, (bank.shadows, labels), TrainConfig(
        learning_rate=p.learning_rate, momentum=p.momentum,
        epochs=p.coarse_epochs, seed=derive_seed(p.seed, "coarse-train"),
    ))
    cm = confusion(coarse, (bank.shadows, labels))
    table = form_groups(cm, p.tau)
    pairs = qualifying_pairs(cm, p.tau)

    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    rpt.write_groups_csv(out / "groups.csv", table, pairs)
    rpt.write_confusion_csv(out / "confusion_train.csv", cm)
    rpt.render_confusion_png(out / "confusion_train.png", cm, "coarse confusion (training)")

    print("record,labels,mutual_confusion")
    for gid, g in enumerate(table.groups):
        print(f"group_{gid},{' '.join(str(v) for v in g)},")
    for i, j, s in pairs:
        print(f"pair,{i} {j},{s}")
    return 0


def cmd_features(args) -> int:
    cfg = parse_config(args.config, args.set, args.seed, args.out)
    bits_text = args.chromosome
    if len(bits_text) != NUM_WINDOWS or any(c not in "01" for c in bits_text):
        raise ConfigError(f"--chromosome must be {NUM_WINDOWS} bits of 0/1, got '{bits_text}'")
    ch = Chromosome.from_bitstring(bits_text)
    try:
        gray = read_pgm(args.image)
    except OSError as e:
        raise MissingRootError(f"cannot read image: {e}")
    img = normalize(binarize(gray, cfg.pipeline.threshold))
    values = assemble_features(img, ch.bits)
    print(",".join(feature_header(ch.bits)))
    print(",".join(f"{v:.6f}" for v in values))
    return 0


def cmd_synth(args) -> int:
    cfg = parse_config(args.config, args.set, args.seed, args.out)
    spec = dict(cfg.dataset.get("synth", {}))
    per_class = args.per_class if args.per_class is not None else int(spec.get("per_class", 200))
    noise = args.noise if args.noise is not None else float(spec.get("noise", 0.0))
    seed = spec.get("seed", derive_seed(cfg.seed, "synth-data"))
    samples = synth_digits(per_class, seed, noise)

    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    save_idx(samples, out / "images.idx", out / "labels.idx")
    rpt.render_synth_preview_png(out / "synth_preview.png", samples)
    print(f"wrote {len(samples)} samples ({per_class} per class, noise {noise}) to {out}")
    return 0


# ---------------------------------------------------------------------------
# Argument parsing and dispatch
# ---------------------------------------------------------------------------

def _add_common(sp):
    sp.add_argument("--config", help="YAML run configuration")
    sp.add_argument("--seed", type=int, help="override the master seed")
    sp.add_argument("--out", help="override the output directory")
    sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                    help="override any config field, e.g. pipeline.tau=7")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="digitpass",
        description="Two-pass digit classifier: coarse shadow-feature MLP plus "
                    "GA-selected window experts.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("train", help="train the full two-pass pipeline")
    _add_common(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a saved model on the configured test split")
    _add_common(sp)
    sp.add_argument("--model", required=True, help="path to a model document")
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("ga", help="run the window-selection GA for one label group")
    _add_common(sp)
    sp.add_argument("--group", required=True, help="comma-separated labels, e.g. 1,9")
    sp.add_argument("--mock-fitness", action="store_true",
                    help="use popcount/9 as fitness (no training; smoke mode)")
    sp.set_defaults(func=cmd_ga)

    sp = sub.add_parser("groups", help="train the coarse classifier and print its groups")
    _add_common(sp)
    sp.set_defaults(func=cmd_groups)

    sp = sub.add_parser("features", help="print one image's feature vector as CSV")
    _add_common(sp)
    sp.add_argument("image", help="path to a binary P5 PGM file")
    sp.add_argument("--chromosome", default="1" * NUM_WINDOWS,
                    help="9-bit window mask (default: all windows)")
    sp.set_defaults(func=cmd_features)

    sp = sub.add_parser("synth", help="generate a synthetic IDX dataset")
    _add_common(sp)
    sp.add_argument("--per-class", type=int, default=None)
    sp.add_argument("--noise", type=float, default=None)
    sp.set_defaults(func=cmd_synth)

    return parser


_DATA_ERRORS = (
    BadMagicError,
    CountMismatchError,
    TruncatedFileError,
    MissingRootError,
    NoSamplesError,
    EmptyDatasetError,
)


def entrypoint(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except _DATA_ERRORS as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except ModelIntegrityError as e:
        print(f"model error: {e}", file=sys.stderr)
        return 4
    except BlankImageError as e:
        print(f"degenerate input: {e}", file=sys.stderr)
        return 5
    except DigitPassError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(entrypoint())
