"""``bayeskan`` command line: train, evaluate, compare, predict, importance, curves, init-config.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 numerical divergence.
Human-readable summaries go to stdout; all machine-readable output goes to files.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
from . import __version__
from .config import ConfigError, RunConfig
from .data import (
    DataError,
    Dataset,
    SplitSpec,
    Standardization,
    file_checksum,
    load_dataset,
    read_table,
    standardize_matrix,
    stratified_split,
)
from .evaluation import (
    TABLE_HEADER,
    comparison_csv,
    compare,
    curve_csv,
    export_spline_curve,
    feature_importance,
    metrics_report,
    prepare_split,
)
from .model import BayesKanModel, ModelFormatError
from .training import TrainingDivergence, train
from .uncertainty import expected_calibration_error, mc_predict_batch, report_csv, uncertainty_report

EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 1, 2, 3

# command-line flag -> RunConfig key
FLAG_KEYS = {
    "dataset": "dataset",
    "data": "data",
    "seed": "seed",
    "seeds": "seeds",
    "out": "out",
    "mc_samples": "mc_samples",
    "preset": "preset",
    "max_epochs": "max_epochs",
}


def _say(args, msg: str) -> None:
    if not getattr(args, "quiet", False):
        print(msg)


def resolve_config(args, need_data: bool = True) -> RunConfig:
    cfg = RunConfig.from_ini(args.config) if getattr(args, "config", None) else RunConfig()
    for flag, key in FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is not None:
            cfg.set(key, value)
    for item in getattr(args, "set", None) or []:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        cfg.set(key.strip(), value.strip())
    cfg.validate(need_data=need_data)
    return cfg


def _load(cfg: RunConfig) -> Dataset:
    return load_dataset(cfg.dataset, cfg.data)


def _load_model(path) -> BayesKanModel:
    if not Path(path).is_file():
        raise ConfigError(f"model file not found: {path}")
    return BayesKanModel.load(path)


def _write(out: Path, name: str, text: str) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    path = out / name
    path.write_text(text)
    return path


def _manifest(cfg: RunConfig, command: str, outputs: list[str], extra: dict | None = None) -> str:
    doc = {
        "command": command,
        "version": __version__,
        "config": {key: getattr(cfg, key) for keys in RunConfig.SECTIONS.values() for key in keys},
        "dataset_sha256": file_checksum(cfg.data) if cfg.data else None,
        "outputs": outputs,
    }
    doc.update(extra or {})
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def _model_standardization(m: BayesKanModel) -> Standardization:
    try:
        return Standardization.from_dict(m.metadata["standardization"])
    except KeyError:
        raise DataError("model file carries no standardization statistics") from None


# ---------------------------------------------------------------------------
# commands


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    ds = _load(cfg)
    train_set, _ = prepare_split(ds, cfg.seed, cfg.test_fraction)
    spec = cfg.model_spec(ds.n_features)
    model, history = train(spec, train_set, cfg.train_config())
    model.metadata = {
        "dataset": cfg.dataset,
        "dataset_sha256": file_checksum(cfg.data),
        "feature_names": list(ds.feature_names),
        "split_seed": cfg.seed,
        "test_fraction": cfg.test_fraction,
        "standardization": train_set.standardization.to_dict(),
        "best_epoch": history.best_epoch,
    }
    out = Path(cfg.out)
    _write(out, "model.json", model.to_json())
    _write(out, "history.csv", history.to_csv())
    _write(out, "run-config.ini", cfg.to_ini())
    _write(out, "manifest.json", _manifest(cfg, "train", ["model.json", "history.csv", "run-config.ini"]))
    best = history.records[history.best_epoch - 1]
    _say(args, f"trained {cfg.preset} on {cfg.dataset}: {len(history.records)} epochs, best epoch "
               f"{history.best_epoch} (val nll {best.val_nll:.4f}, val acc {best.val_acc:.3f}); wrote {out}/model.json")
    return 0


def cmd_evaluate(args) -> int:
    cfg = resolve_config(args)
    model = _load_model(args.model)
    ds = _load(cfg)
    seed = model.metadata.get("split_seed", cfg.seed)
    fraction = model.metadata.get("test_fraction", cfg.test_fraction)
    _, test_raw = stratified_split(ds, SplitSpec(fraction, seed))
    stats = _model_standardization(model)
    X = standardize_matrix(stats, test_raw.features)
    samples = mc_predict_batch(model, X, cfg.mc_samples, seed)
    probs = samples.mean(axis=0)
    report = metrics_report("bayesian-kan", probs, test_raw.labels, cfg.bootstrap, cfg.ci_level, seed)
    text = ",".join(TABLE_HEADER) + "\n"
    text += ",".join([cfg.dataset, report.model_name, *(repr(float(v)) for v in report.row())]) + "\n"
    out = Path(cfg.out)
    _write(out, "metrics.csv", text)
    _write(out, "test-uncertainty.csv", report_csv(uncertainty_report(samples, cfg.ci_level)))
    ece = expected_calibration_error(probs, test_raw.labels)
    _say(args, f"{cfg.dataset} test split (n={report.n_test}): accuracy {report.accuracy:.3f}, "
               f"f1 {report.f1:.3f}, auc {report.auc:.3f}, ece {ece:.3f}; wrote {out}/metrics.csv")
    return 0


def cmd_compare(args) -> int:
    cfg = resolve_config(args, need_data=False)
    kinds = args.dataset_list or [cfg.dataset]
    paths = args.data_list or ([cfg.data] if cfg.data else [])
    if len(kinds) != len(paths):
        raise ConfigError(f"{len(kinds)} datasets but {len(paths)} data paths; pass one --data per --dataset")
    for path in paths:
        if not Path(path).is_file():
            raise ConfigError(f"data file not found: {path}")
    loaded = [(kind, load_dataset(kind, path), path) for kind, path in zip(kinds, paths)]

    comparisons = []
    for kind, ds, _ in loaded:
        spec = cfg.model_spec(ds.n_features)
        comp = compare(kind, ds, spec, cfg.train_config(), cfg.seed_list, cfg.mc_samples, cfg.bootstrap,
                       cfg.test_fraction)
        comparisons.append(comp)
        for name, row in comp.averaged().items():
            _say(args, f"{kind:>6} {name:<20} acc {row[0]:.3f}  f1 {row[1]:.3f}  auc {row[2]:.3f}  "
                       f"acc CI [{row[3]:.3f}, {row[4]:.3f}]")
    out = Path(cfg.out)
    _write(out, "comparison.csv", comparison_csv(comparisons))
    _write(out, "run-config.ini", cfg.to_ini())
    extra = {"datasets": [{"kind": k, "path": p, "sha256": file_checksum(p)} for k, _, p in loaded]}
    _write(out, "manifest.json", _manifest(cfg, "compare", ["comparison.csv", "run-config.ini"], extra))
    _say(args, f"wrote {out}/comparison.csv")
    return 0


def _read_predict_input(path, model: BayesKanModel) -> np.ndarray:
    names = model.metadata.get("feature_names") or [f"x{i}" for i in range(model.spec.input_dim)]
    header, values = read_table(path)
    n_expected = model.spec.input_dim
    if header is not None:
        for i, (got, want) in enumerate(zip(header, names)):
            if got != want:
                raise DataError(f"input column {i + 1} is {got!r}, the model expects {want!r}")
    if values.shape[1] > n_expected:
        extra = repr(header[n_expected]) if header else str(n_expected + 1)
        raise DataError(f"unexpected input column {extra}: the model takes {n_expected} features")
    if values.shape[1] < n_expected:
        raise DataError(f"missing input column {names[values.shape[1]]!r}: the model takes {n_expected} features")
    return values


def cmd_predict(args) -> int:
    if not Path(args.input).is_file():
        raise ConfigError(f"input file not found: {args.input}")
    model = _load_model(args.model)
    values = _read_predict_input(args.input, model)
    X = standardize_matrix(_model_standardization(model), values)
    samples = mc_predict_batch(model, X, args.mc_samples, args.seed)
    rows = uncertainty_report(samples, args.level)
    output = Path(args.output)
    output.parent.mkdir(parents=True, exist_ok=True)
    output.write_text(report_csv(rows))
    flagged = sum(1 for r in rows if r[6] > np.median([q[6] for q in rows]))
    _say(args, f"predicted {len(rows)} rows with {args.mc_samples} posterior samples "
               f"({flagged} above-median epistemic); wrote {output}")
    return 0


def cmd_importance(args) -> int:
    cfg = resolve_config(args)
    model = _load_model(args.model)
    ds = _load(cfg)
    if ds.n_features != model.spec.input_dim:
        raise DataError(f"dataset has {ds.n_features} features, the model takes {model.spec.input_dim}")
    stats = _model_standardization(model)
    data = Dataset(standardize_matrix(stats, ds.features), ds.labels, ds.feature_names, stats)
    ranking = feature_importance(model, data)
    out = Path(cfg.out)
    _write(out, "importance.csv", ranking.to_csv())
    top = ", ".join(ranking.names[:3])
    _say(args, f"most influential features: {top}; wrote {out}/importance.csv")
    return 0


def _parse_edge(text: str) -> tuple[int, int, int]:
    try:
        layer, out_idx, in_idx = (int(p) for p in text.split(":"))
    except ValueError:
        raise ConfigError(f"--edge expects LAYER:OUT:IN, got {text!r}") from None
    return layer, out_idx, in_idx


def cmd_curves(args) -> int:
    model = _load_model(args.model)
    edges = [_parse_edge(e) for e in (args.edge or ["0:0:0"])]
    curves = []
    for layer, out_idx, in_idx in edges:
        try:
            curves.append(((layer, out_idx, in_idx), export_spline_curve(
                model, layer, out_idx, in_idx, args.points, args.mc_samples, args.seed)))
        except (IndexError, ValueError) as exc:
            raise ConfigError(f"edge {layer}:{out_idx}:{in_idx}: {exc}") from None
    out = Path(args.out)
    for (layer, out_idx, in_idx), curve in curves:
        _write(out, f"curve_{layer}_{out_idx}_{in_idx}.csv", curve_csv(curve))
    _say(args, f"wrote {len(curves)} curve file(s) to {out}/")
    return 0


def cmd_init_config(args) -> int:
    path = Path(args.path)
    if path.exists() and not args.force:
        raise ConfigError(f"{path} exists; pass --force to overwrite")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(RunConfig().to_ini())
    _say(args, f"wrote default configuration to {path}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing


class _Parser(argparse.ArgumentParser):
    # usage errors are configuration errors, not data errors
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI configuration file; flags override its values")
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override any configuration key")


def _common(p: argparse.ArgumentParser, data: bool = True) -> None:
    _config_flags(p)
    if data:
        p.add_argument("--dataset", choices=["pima", "heart", "csv"])
        p.add_argument("--data", help="path to the dataset file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="output directory")
    p.add_argument("--mc-samples", dest="mc_samples", type=int)
    p.add_argument("--quiet", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bayeskan", description="Bayesian Kolmogorov-Arnold networks")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("train", help="train a model and write model.json + history.csv")
    _common(p)
    p.add_argument("--preset", choices=["bkan", "bayes-mlp"])
    p.add_argument("--max-epochs", dest="max_epochs", type=int)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="test-split metrics for a trained model")
    _common(p)
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("compare", help="BKAN vs logistic regression vs deterministic MLP over seeds")
    _config_flags(p)
    p.add_argument("--dataset", dest="dataset_list", action="append", choices=["pima", "heart", "csv"])
    p.add_argument("--data", dest="data_list", action="append")
    p.add_argument("--seeds", help="comma-separated seeds, e.g. 1,2,3,4,5")
    p.add_argument("--out")
    p.add_argument("--mc-samples", dest="mc_samples", type=int)
    p.add_argument("--preset", choices=["bkan", "bayes-mlp"])
    p.add_argument("--max-epochs", dest="max_epochs", type=int)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("predict", help="per-row predictive uncertainty report")
    p.add_argument("--model", required=True)
    p.add_argument("--input", required=True, help="CSV of raw feature rows")
    p.add_argument("--output", default="predictions.csv")
    p.add_argument("--mc-samples", dest="mc_samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("importance", help="feature ranking from first-layer edge magnitudes")
    _common(p)
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_importance)

    p = sub.add_parser("curves", help="export learned edge functions with credible bands")
    p.add_argument("--model", required=True)
    p.add_argument("--edge", action="append", help="LAYER:OUT:IN (repeatable)")
    p.add_argument("--points", type=int, default=201)
    p.add_argument("--mc-samples", dest="mc_samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="curves")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_curves)

    p = sub.add_parser("init-config", help="write a configuration file holding every default")
    p.add_argument("path", nargs="?", default="bayeskan.ini")
    p.add_argument("--force", action="store_true")
    p.add_argument("--quiet", action="store_true")
    p.set_defaults(func=cmd_init_config)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, ModelFormatError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingDivergence as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    raise SystemExit(main())
