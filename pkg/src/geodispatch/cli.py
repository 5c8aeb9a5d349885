"""Command-line entry point: build, synth, train, route, eval, sweep.

Every command accepts --seed and is end-to-end deterministic: identical
inputs, flags, and seed produce byte-identical primary output files. Exit
codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys

try:
    import tomllib
except ImportError:
    import tomli as tomllib

from . import data as dt
from . import evaluation as ev
from . import model as mdl
from . import objective
from .errors import DataError, GeodispatchError, ValidationError
from .geo import DEFAULT_THRESHOLDS_KM, ThresholdSet
from .train import TrainConfig, train

_POLICY_NAMES = {
    "retrieval": "pure_retrieval",
    "generation": "pure_generation",
    "router": "router",
    "oracle": "oracle",
}


class _Parser(argparse.ArgumentParser):
    # usage errors exit 1, not argparse's default 2
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(self._exit_with(message))

    @staticmethod
    def _exit_with(message):
        print(f"error: {message}", file=sys.stderr)
        return 1


def _add(parser, name, default, help_text, **kwargs):
    parser.add_argument(name, default=argparse.SUPPRESS,
                        help=f"{help_text} (default: {default})", **kwargs)


def _common(parser):
    parser.add_argument("--config", default=None,
                        help="TOML config file; flags override file values")
    _add(parser, "--seed", 0, "seed for all randomized behavior", type=int)


def _thresholds_arg(text) -> tuple:
    try:
        return tuple(float(v) for v in str(text).split(","))
    except ValueError as exc:
        raise ValidationError(f"bad threshold list {text!r}") from exc


def _floats_arg(text) -> tuple:
    try:
        return tuple(float(v) for v in str(text).split(","))
    except ValueError as exc:
        raise ValidationError(f"bad number list {text!r}") from exc


_DEFAULTS = {
    "seed": 0,
    "alpha": 1.6,
    "epsilon": 1e-6,
    "learning_rate": 1e-4,
    "batch_size": 24,
    "epochs": 3,
    "weight_decay": 0.01,
    "data_fraction": 1.0,
    "hard_labels": False,
    "encoder": "auto",
    "kind": "linear",
    "hidden": 16,
    "thresholds": ",".join(f"{t:g}" for t in DEFAULT_THRESHOLDS_KM),
    "n": 1000,
    "dim": 8,
    "signal_strength": 0.9,
    "retrieval_scale": 20.0,
    "generation_scale": 200.0,
    "policies": "retrieval,generation,router,oracle",
    "format": "table",
    "alphas": ",".join(f"{a:g}" for a in ev.DEFAULT_ALPHA_GRID),
    "split_fraction": 0.8,
}


def _resolve(ns: argparse.Namespace) -> dict:
    """Defaults, overridden by the config file, overridden by flags."""
    merged = dict(_DEFAULTS)
    path = getattr(ns, "config", None)
    if path:
        try:
            with open(path, "rb") as fh:
                file_cfg = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise DataError(f"{path}: bad config file: {exc}") from exc
        for key, value in file_cfg.items():
            if key not in _DEFAULTS:
                raise ValidationError(f"{path}: unknown config key {key!r}")
            merged[key] = value
    for key, value in vars(ns).items():
        if key not in ("config", "func"):
            merged[key] = value
    return merged


def _train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(
        learning_rate=float(cfg["learning_rate"]),
        batch_size=int(cfg["batch_size"]),
        epochs=int(cfg["epochs"]),
        seed=int(cfg["seed"]),
        weight_decay=float(cfg["weight_decay"]),
        data_fraction=float(cfg["data_fraction"]),
    )


def _objective_config(cfg: dict) -> objective.ObjectiveConfig:
    return objective.ObjectiveConfig(alpha=float(cfg["alpha"]),
                                     epsilon=float(cfg["epsilon"]),
                                     hard_label_mode=bool(cfg["hard_labels"]))


def _threshold_set(cfg: dict) -> ThresholdSet:
    value = cfg["thresholds"]
    if isinstance(value, str):
        value = _thresholds_arg(value)
    return ThresholdSet(tuple(float(v) for v in value))


def _make_encoder(name: str, records) -> mdl.FeatureEncoder:
    dim = dt.embedding_dim(records)
    if name == "auto":
        name = "embedding" if dim is not None else "context"
    if name == "embedding":
        if dim is None:
            raise ValidationError("embedding encoder requested but no record has an embedding")
        return mdl.EmbeddingEncoder(dim)
    if name == "context":
        return mdl.ContextEncoder()
    if name == "concat":
        if dim is None:
            raise ValidationError("concat encoder requested but no record has an embedding")
        return mdl.ConcatEncoder(dim)
    raise ValidationError(f"unknown encoder {name!r}")


def _init_model(cfg: dict, encoder: mdl.FeatureEncoder) -> mdl.RouterModel:
    if cfg["kind"] == "linear":
        return mdl.RouterModel.linear(encoder)
    if cfg["kind"] == "mlp":
        return mdl.RouterModel.mlp(encoder, hidden=int(cfg["hidden"]), seed=int(cfg["seed"]))
    raise ValidationError(f"unknown model kind {cfg['kind']!r}")


def _read_raw_entries(path):
    """Raw prediction entries, one JSON object per line; header line optional."""
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}: malformed JSON on line {lineno}: {exc}") from exc
            if lineno == 1 and isinstance(obj, dict) and "schema" in obj:
                continue
            entries.append(obj)
    return entries


def cmd_build(ns) -> int:
    cfg = _resolve(ns)
    entries = _read_raw_entries(ns.input)
    records, _, summary = dt.build_dataset(entries, float(cfg["epsilon"]), float(cfg["alpha"]))
    dt.write_jsonl(ns.output, records)
    for diag in summary.diagnostics:
        print(f"skip: {diag}", file=sys.stderr)
    print(f"instances: {summary.kept}")
    print(f"skipped: {summary.skipped}")
    print(f"label balance: {summary.label_balance:.6f}")
    return 0


def cmd_synth(ns) -> int:
    cfg = _resolve(ns)
    records = dt.synthesize(dt.SynthConfig(
        n=int(cfg["n"]), seed=int(cfg["seed"]), dim=int(cfg["dim"]),
        signal_strength=float(cfg["signal_strength"]),
        retrieval_error_scale=float(cfg["retrieval_scale"]),
        generation_error_scale=float(cfg["generation_scale"])))
    dt.write_jsonl(ns.output, records)
    print(f"instances: {len(records)}")
    return 0


def cmd_train(ns) -> int:
    cfg = _resolve(ns)
    records = dt.read_jsonl(ns.data)
    obj_cfg = _objective_config(cfg)
    targets = dt.with_targets(records, obj_cfg.epsilon, obj_cfg.alpha)
    encoder = _make_encoder(str(cfg["encoder"]), records)
    init = _init_model(cfg, encoder)
    result = train(records, targets, _train_config(cfg), obj_cfg, init)
    mdl.save_model(ns.output, result.model)
    print(f"trained on: {result.n_used}")
    for i, loss_value in enumerate(result.epoch_losses, start=1):
        print(f"epoch {i} loss: {loss_value:.9f}")
    return 0


def cmd_route(ns) -> int:
    _resolve(ns)
    records = dt.read_jsonl(ns.data)
    model = mdl.load_model(ns.model)
    if not records:
        raise DataError(f"{ns.data}: no records")
    scores = model.forward(model.encoder.encode_many(records))
    with open(ns.output, "w", encoding="utf-8") as fh:
        for record, r in zip(records, scores):
            choice = mdl.decide(float(r))
            pred = record.pred_generation if choice is mdl.ParadigmChoice.GENERATION \
                else record.pred_retrieval
            fh.write(json.dumps({
                "id": record.id,
                "score": float(r),
                "choice": choice.value,
                "prediction": [pred.lat, pred.lon],
            }, sort_keys=True, separators=(",", ":")) + "\n")
    print(f"routed: {len(records)}")
    return 0


def cmd_eval(ns) -> int:
    cfg = _resolve(ns)
    records = dt.read_jsonl(ns.data)
    names = [p.strip() for p in str(cfg["policies"]).split(",") if p.strip()]
    if not names:
        raise ValidationError("no policies requested")
    policies = []
    for name in names:
        kind = _POLICY_NAMES.get(name)
        if kind is None:
            raise ValidationError(f"unknown policy {name!r}")
        if kind == "router":
            if not ns.model:
                raise ValidationError("router policy requires --model")
            policies.append(ev.Policy("router", mdl.load_model(ns.model)))
        else:
            policies.append(ev.Policy(kind))
    report = ev.evaluate(records, policies, _threshold_set(cfg))
    if cfg["format"] == "json":
        text = json.dumps(report.to_json(), sort_keys=True, indent=2) + "\n"
    elif cfg["format"] == "table":
        text = ev.format_table(report) + "\n"
    else:
        raise ValidationError(f"unknown format {cfg['format']!r}")
    if ns.output:
        with open(ns.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_sweep(ns) -> int:
    cfg = _resolve(ns)
    records = dt.read_jsonl(ns.data)
    alphas = cfg["alphas"]
    if isinstance(alphas, str):
        alphas = _floats_arg(alphas)
    encoder = _make_encoder(str(cfg["encoder"]), records)
    init = _init_model(cfg, encoder)
    rows = ev.sweep_alpha(records, [float(a) for a in alphas], _train_config(cfg), init,
                          _threshold_set(cfg), epsilon=float(cfg["epsilon"]),
                          hard_label_mode=bool(cfg["hard_labels"]),
                          split_fraction=float(cfg["split_fraction"]))
    text = ev.sweep_to_csv(rows)
    if ns.output:
        with open(ns.output, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    print(f"rows: {len(rows)}", file=sys.stderr)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="geodispatch",
                     description="Route geolocalization queries between retrieval "
                                 "and generation predictors.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("build", parents=[], help="label raw prediction entries",
                       description="Build a labeled dataset from raw prediction JSONL.")
    p.add_argument("--in", dest="input", required=True, help="raw entries, one JSON object per line")
    p.add_argument("--out", dest="output", required=True, help="output dataset JSONL")
    _common(p)
    _add(p, "--alpha", 1.6, "soft-label steepness", type=float)
    _add(p, "--epsilon", 1e-6, "distance stability constant, km", type=float)
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("synth", help="generate a synthetic dataset",
                       description="Generate synthetic records with a planted routing signal.")
    p.add_argument("--out", dest="output", required=True, help="output dataset JSONL")
    _common(p)
    _add(p, "--n", 1000, "record count", type=int)
    _add(p, "--dim", 8, "embedding dimension", type=int)
    _add(p, "--signal-strength", 0.9, "planted signal strength in [0,1]",
         type=float, dest="signal_strength")
    _add(p, "--retrieval-scale", 20.0, "retrieval log-normal error scale, km",
         type=float, dest="retrieval_scale")
    _add(p, "--generation-scale", 200.0, "generation log-normal error scale, km",
         type=float, dest="generation_scale")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train a routing model",
                       description="Train the routing model on a labeled dataset.")
    p.add_argument("--data", required=True, help="labeled dataset JSONL")
    p.add_argument("--out", dest="output", required=True, help="output model file")
    _common(p)
    _add(p, "--alpha", 1.6, "soft-label steepness", type=float)
    _add(p, "--epsilon", 1e-6, "distance stability constant, km", type=float)
    _add(p, "--lr", 1e-4, "learning rate", type=float, dest="learning_rate")
    _add(p, "--batch-size", 24, "minibatch size", type=int, dest="batch_size")
    _add(p, "--epochs", 3, "training epochs", type=int)
    _add(p, "--weight-decay", 0.01, "decoupled weight decay", type=float, dest="weight_decay")
    _add(p, "--data-fraction", 1.0, "seeded fraction of the dataset to train on",
         type=float, dest="data_fraction")
    p.add_argument("--hard-labels", action="store_true", default=argparse.SUPPRESS,
                   dest="hard_labels",
                   help="train on binary winners instead of soft labels (default: False)")
    _add(p, "--encoder", "auto", "feature encoder: auto|embedding|context|concat")
    _add(p, "--kind", "linear", "model kind: linear|mlp")
    _add(p, "--hidden", 16, "hidden width for --kind mlp", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("route", help="route records with a trained model",
                       description="Write per-record score, choice, and chosen prediction.")
    p.add_argument("--data", required=True, help="dataset JSONL")
    p.add_argument("--model", required=True, help="trained model file")
    p.add_argument("--out", dest="output", required=True, help="output choices JSONL")
    _common(p)
    p.set_defaults(func=cmd_route)

    p = sub.add_parser("eval", help="evaluate policies on a labeled dataset",
                       description="Report geolocalization and routing accuracy per policy.")
    p.add_argument("--data", required=True, help="labeled dataset JSONL")
    p.add_argument("--model", default=None, help="trained model file (for the router policy)")
    p.add_argument("--out", dest="output", default=None, help="write report here instead of stdout")
    _common(p)
    _add(p, "--policies", "retrieval,generation,router,oracle",
         "comma-separated subset of retrieval,generation,router,oracle")
    _add(p, "--thresholds", ",".join(f"{t:g}" for t in DEFAULT_THRESHOLDS_KM),
         "comma-separated thresholds, km")
    _add(p, "--format", "table", "report format: table|json")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="alpha sweep with retraining per value",
                       description="Retrain per alpha on a seeded split; CSV output.")
    p.add_argument("--data", required=True, help="labeled dataset JSONL")
    p.add_argument("--out", dest="output", default=None, help="write CSV here instead of stdout")
    _common(p)
    _add(p, "--alphas", ",".join(f"{a:g}" for a in ev.DEFAULT_ALPHA_GRID),
         "comma-separated alpha grid")
    _add(p, "--epsilon", 1e-6, "distance stability constant, km", type=float)
    _add(p, "--lr", 1e-4, "learning rate", type=float, dest="learning_rate")
    _add(p, "--batch-size", 24, "minibatch size", type=int, dest="batch_size")
    _add(p, "--epochs", 3, "training epochs", type=int)
    _add(p, "--weight-decay", 0.01, "decoupled weight decay", type=float, dest="weight_decay")
    _add(p, "--data-fraction", 1.0, "seeded fraction of the train split",
         type=float, dest="data_fraction")
    p.add_argument("--hard-labels", action="store_true", default=argparse.SUPPRESS,
                   dest="hard_labels",
                   help="train on binary winners instead of soft labels (default: False)")
    _add(p, "--encoder", "auto", "feature encoder: auto|embedding|context|concat")
    _add(p, "--kind", "linear", "model kind: linear|mlp")
    _add(p, "--hidden", 16, "hidden width for --kind mlp", type=int)
    _add(p, "--split-fraction", 0.8, "train fraction of the seeded split",
         type=float, dest="split_fraction")
    _add(p, "--thresholds", ",".join(f"{t:g}" for t in DEFAULT_THRESHOLDS_KM),
         "comma-separated thresholds, km")
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return ns.func(ns)
    except GeodispatchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        name = getattr(exc, "filename", None)
        print(f"error: cannot access {name or 'file'}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
