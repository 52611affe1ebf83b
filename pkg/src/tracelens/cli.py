"""Command-line pipeline: generate, inject, train, score, evaluate,
sweep, heatmap.

All commands read one JSON config (see DEFAULT_CONFIG for the schema),
overridable key-by-key with --set section.key=value. Every command is
idempotent for a fixed config and seed: per-stage seeds are derived from
the global seed, outputs are written atomically (write-then-rename), and
the effective config is echoed next to the outputs.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 internal.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import os
import sys
import tempfile
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import anomalies, detectors, encoding, evaluation, neuralnet, procgen
from .eventlog import LogFormatError, read_labels, read_log, write_labels, write_log
from .seeds import derive_seed

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_INTERNAL = 3

DEFAULT_CONFIG = {
    "seed": 42,
    "out_dir": "runs/default",
    "generate": {
        "model": "p2p",          # p2p | small | medium | large | huge | wide
        "n_train": 12500,
        "n_test": 2500,
        "n_users": 20,
        "format": "jsonl",
    },
    "inject": {
        "noise_level": 0.3,
        "test_noise_level": None,  # null -> same as noise_level
        "enabled_types": list(anomalies.ANOMALY_TYPES),
    },
    "train": {
        "batch_size": 50,
        "max_epochs": 200,
        "early_stop_patience": 10,
        "lr": 0.001,
        "lr_plateau_patience": 5,
        "lr_factor": 0.1,
        "beta1": 0.9,
        "beta2": 0.99,
        "epsilon": 1e-8,
        "dropout_rate": 0.5,
        "noise_sigma": 0.1,
        "hidden_size_ratio": 0.5,
        "n_hidden_layers": 2,
        "validation_fraction": 0.1,
        "include_unknown": False,
    },
    "detector": {
        "name": "dae",           # dae | tstide | tstide+ | random
        "alpha": 2.0,
        "window_k": 4,
        "anomaly_rate_guess": 0.5,
    },
    "heatmap": {
        "max_traces": 12,
        "max_events": 6,
    },
    "sweep": {
        "models": ["small"],
        "noise_levels": [0.1, 0.3, 0.5],
        "seeds": [1, 2, 3],
        "detectors": ["dae", "tstide", "tstide+", "random"],
        "n_train": 2000,
        "n_test": 500,
        "test_noise": 0.3,
        "max_epochs": 200,
    },
}


class ConfigError(ValueError):
    pass


class DataError(RuntimeError):
    pass


def load_config(path=None, overrides=(), seed=None, out_dir=None) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                user = json.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        _merge(cfg, user, [])
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        key_path, raw = item.split("=", 1)
        _apply_override(cfg, key_path.split("."), raw)
    if seed is not None:
        cfg["seed"] = seed
    if out_dir is not None:
        cfg["out_dir"] = out_dir
    return cfg


def _merge(base, user, trail):
    for key, value in user.items():
        if key not in base:
            raise ConfigError(f"unknown config key: {'.'.join(trail + [key])}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            _merge(base[key], value, trail + [key])
        else:
            base[key] = value


def _apply_override(cfg, keys, raw):
    node = cfg
    for key in keys[:-1]:
        if not isinstance(node, dict) or key not in node:
            raise ConfigError(f"unknown config key: {'.'.join(keys)}")
        node = node[key]
    leaf = keys[-1]
    if not isinstance(node, dict) or leaf not in node:
        raise ConfigError(f"unknown config key: {'.'.join(keys)}")
    try:
        node[leaf] = json.loads(raw)
    except json.JSONDecodeError:
        node[leaf] = raw  # bare strings may be given unquoted


def atomic_write_text(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _atomic(path: Path, write_fn) -> None:
    """Run write_fn against a temp path, then rename over the target."""
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    os.close(fd)
    try:
        write_fn(tmp)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _echo_config(cfg: dict, out: Path, command: str) -> None:
    atomic_write_text(out / f"config_used_{command}.json",
                      json.dumps(cfg, indent=2, ensure_ascii=False) + "\n")


def _out_dir(cfg) -> Path:
    out = Path(cfg["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _log_format(cfg) -> str:
    fmt = cfg["generate"]["format"]
    if fmt not in ("jsonl", "csv", "xes"):
        raise ConfigError(f"generate.format must be jsonl, csv, or xes, got {fmt!r}")
    return fmt


def _writable_format(cfg) -> str:
    # XES is import-only; downstream artifacts of an XES import are JSONL
    fmt = _log_format(cfg)
    return "jsonl" if fmt == "xes" else fmt


def _clean_path(cfg, stem):
    return _out_dir(cfg) / f"{stem}.{_log_format(cfg)}"


def _log_paths(cfg, stem):
    return _out_dir(cfg) / f"{stem}.{_writable_format(cfg)}"


# ---------------------------------------------------------------------------
# commands


def cmd_generate(cfg: dict) -> int:
    gen = cfg["generate"]
    if gen["n_train"] <= 0 or gen["n_test"] <= 0:
        raise ConfigError("generate.n_train and generate.n_test must be positive")
    seed = cfg["seed"]
    name = gen["model"]
    if name == "p2p":
        model = procgen.builtin_p2p()
    elif name in procgen.PROFILES:
        gen_cfg = replace(procgen.PROFILES[name],
                          seed=derive_seed(seed, "model", name),
                          n_users=gen["n_users"])
        model = procgen.generate_model(gen_cfg)
        model = procgen.assign_users(model, derive_seed(seed, "users", name),
                                     n_users=gen_cfg.n_users)
    else:
        raise ConfigError(f"unknown model {name!r}; choose p2p or a profile "
                          f"{sorted(procgen.PROFILES)}")
    probs = procgen.draw_variant_probs(
        len(model.variants), np.random.default_rng(derive_seed(seed, "probs", name)))
    train_log = procgen.sample_log(model, gen["n_train"],
                                   derive_seed(seed, "sample-train", name), probs,
                                   case_prefix="train")
    test_log = procgen.sample_log(model, gen["n_test"],
                                  derive_seed(seed, "sample-test", name), probs,
                                  case_prefix="test")
    out = _out_dir(cfg)
    if _log_format(cfg) == "xes":
        raise ConfigError("xes is import-only; use jsonl or csv for generated logs")
    _atomic(out / "model.json", model.save)
    fmt = _log_format(cfg)
    _atomic(_clean_path(cfg, "train_clean"), lambda p: write_log(train_log, p, fmt))
    _atomic(_clean_path(cfg, "test_clean"), lambda p: write_log(test_log, p, fmt))
    _echo_config(cfg, out, "generate")
    print(f"model {name}: {model.node_count()} nodes, {model.edge_count()} edges, "
          f"{len(model.variants)} variants")
    print(f"wrote {gen['n_train']} train / {gen['n_test']} test traces to {out}")
    return EXIT_OK


def _load_model_if_present(out: Path):
    path = out / "model.json"
    return procgen.ProcessModel.load(path) if path.exists() else None


def cmd_inject(cfg: dict) -> int:
    out = _out_dir(cfg)
    fmt = _log_format(cfg)
    inj = cfg["inject"]
    train_clean = _read_required(_clean_path(cfg, "train_clean"), fmt)
    test_clean = _read_required(_clean_path(cfg, "test_clean"), fmt)
    model = _load_model_if_present(out)

    enabled = list(inj["enabled_types"])
    if model is None or "user" not in train_clean.attr_names:
        dropped = [t for t in enabled if t in anomalies.MODEL_REQUIRED]
        enabled = [t for t in enabled if t not in anomalies.MODEL_REQUIRED]
        if dropped:
            print(f"note: no model/user attribute; disabled {dropped}")
        if not enabled:
            raise ConfigError("no applicable anomaly types remain")

    capacity = max(train_clean.max_trace_len, test_clean.max_trace_len)
    seed = cfg["seed"]
    test_noise = inj["test_noise_level"]
    if test_noise is None:
        test_noise = inj["noise_level"]
    train_log, train_labels, _ = anomalies.inject(
        train_clean, model,
        anomalies.InjectConfig(inj["noise_level"], tuple(enabled),
                               derive_seed(seed, "inject-train")),
        capacity=capacity)
    test_log, test_labels, _ = anomalies.inject(
        test_clean, model,
        anomalies.InjectConfig(test_noise, tuple(enabled),
                               derive_seed(seed, "inject-test")),
        capacity=capacity)
    wfmt = _writable_format(cfg)
    _atomic(_log_paths(cfg, "train"), lambda p: write_log(train_log, p, wfmt))
    _atomic(_log_paths(cfg, "test"), lambda p: write_log(test_log, p, wfmt))
    _atomic(out / "train_labels.jsonl", lambda p: write_labels(train_labels, p))
    _atomic(out / "test_labels.jsonl", lambda p: write_labels(test_labels, p))
    _echo_config(cfg, out, "inject")
    print(f"injected {train_labels.n_anomalous()} train / "
          f"{test_labels.n_anomalous()} test anomalies")
    return EXIT_OK


def _read_required(path, fmt):
    if not Path(path).exists():
        raise DataError(f"missing input {path}; run the previous stage first")
    return read_log(path, fmt)


def cmd_train(cfg: dict) -> int:
    out = _out_dir(cfg)
    train_log = _read_required(_log_paths(cfg, "train"), _writable_format(cfg))
    model = _load_model_if_present(out)
    tc = cfg["train"]
    include_unknown = tc["include_unknown"]
    if model is not None:
        layout = encoding.build_layout(
            train_log, max_len=max(model.max_variant_len(), train_log.max_trace_len),
            activity_values=model.activities,
            attribute_values={"user": model.users} if "user" in train_log.attr_names else None,
            include_unknown=include_unknown)
    else:
        layout = encoding.build_layout(train_log, include_unknown=include_unknown)
    batch = encoding.encode(train_log, layout)
    train_cfg = neuralnet.TrainConfig(
        batch_size=tc["batch_size"], max_epochs=tc["max_epochs"],
        early_stop_patience=tc["early_stop_patience"], lr=tc["lr"],
        lr_plateau_patience=tc["lr_plateau_patience"], lr_factor=tc["lr_factor"],
        beta1=tc["beta1"], beta2=tc["beta2"], epsilon=tc["epsilon"],
        dropout_rate=tc["dropout_rate"], noise_sigma=tc["noise_sigma"],
        hidden_size_ratio=tc["hidden_size_ratio"],
        n_hidden_layers=tc["n_hidden_layers"],
        validation_fraction=tc["validation_fraction"],
        seed=derive_seed(cfg["seed"], "train-nn"))
    trained = neuralnet.train(batch, train_cfg)
    _atomic(out / "dae_model.bin", trained.save)

    def write_history(p):
        with open(p, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "train_loss", "val_loss", "lr"])
            for row in trained.history:
                writer.writerow([row["epoch"], f"{row['train_loss']:.10g}",
                                 f"{row['val_loss']:.10g}", f"{row['lr']:.10g}"])

    _atomic(out / "training_history.csv", write_history)
    _echo_config(cfg, out, "train")
    print(f"trained {len(trained.history)} epochs (best {trained.best_epoch}); "
          f"mean errors {trained.mean_errors}")
    return EXIT_OK


def _detector_report(cfg, det_name, test_log):
    out = _out_dir(cfg)
    det = cfg["detector"]
    alpha = det["alpha"]
    if det_name == "dae":
        artifact = out / "dae_model.bin"
        if not artifact.exists():
            raise DataError(f"missing model artifact {artifact}; run train first")
        trained = neuralnet.TrainedNetwork.load(artifact)
        return detectors.dae_score(trained, test_log, alpha=alpha)
    if det_name in ("tstide", "tstide+"):
        train_log = _read_required(_log_paths(cfg, "train"), _writable_format(cfg))
        wm = detectors.tstide_fit(train_log, k=det["window_k"],
                                  include_attributes=det_name == "tstide+")
        return detectors.tstide_score(wm, test_log, alpha=alpha)
    if det_name == "random":
        return detectors.random_baseline(test_log, det["anomaly_rate_guess"],
                                         seed=derive_seed(cfg["seed"], "random-det"))
    raise ConfigError(f"unknown detector {det_name!r}")


def _detector_slug(name: str) -> str:
    return name.replace("+", "_plus")


def cmd_score(cfg: dict) -> int:
    out = _out_dir(cfg)
    test_log = _read_required(_log_paths(cfg, "test"), _writable_format(cfg))
    name = cfg["detector"]["name"]
    report = _detector_report(cfg, name, test_log)
    slug = _detector_slug(name)
    _atomic(out / f"scores_{slug}.jsonl",
            lambda p: detectors.write_report(report, p))
    atomic_write_text(out / f"scores_{slug}.meta.json", json.dumps({
        "detector": report.detector,
        "alpha": report.threshold.alpha,
        "means": report.threshold.means,
        "taus": report.threshold.taus,
        "field_names": list(report.field_names),
        "n_traces": len(report.case_ids),
        "anomalous_traces": int(report.trace_verdicts().sum()),
    }, indent=2) + "\n")
    _atomic(out / f"heatmap_{slug}.csv",
            lambda p: detectors.write_heatmap_csv(report, p))
    _echo_config(cfg, out, "score")
    print(f"{name}: flagged {int(report.trace_verdicts().sum())} of "
          f"{len(report.case_ids)} traces")
    return EXIT_OK


def cmd_heatmap(cfg: dict) -> int:
    out = _out_dir(cfg)
    test_log = _read_required(_log_paths(cfg, "test"), _writable_format(cfg))
    name = cfg["detector"]["name"]
    report = _detector_report(cfg, name, test_log)
    labels = None
    labels_path = out / "test_labels.jsonl"
    if labels_path.exists():
        label_set = read_labels(labels_path, test_log)
        labels = {cid: lab.trace for cid, lab in label_set.by_case.items()}
    slug = _detector_slug(name)
    hm = cfg["heatmap"]
    _atomic(out / f"heatmap_{slug}.svg",
            lambda p: detectors.write_heatmap_svg(
                report, test_log, p, max_traces=hm["max_traces"],
                max_events=hm["max_events"], labels=labels))
    _echo_config(cfg, out, "heatmap")
    print(f"wrote heatmap_{slug}.svg")
    return EXIT_OK


def cmd_evaluate(cfg: dict) -> int:
    out = _out_dir(cfg)
    test_log = _read_required(_log_paths(cfg, "test"), _writable_format(cfg))
    labels_path = out / "test_labels.jsonl"
    if not labels_path.exists():
        raise DataError(f"missing labels {labels_path}; run inject first")
    labels = read_labels(labels_path, test_log)
    name = cfg["detector"]["name"]
    report = _detector_report(cfg, name, test_log)
    rows = evaluation.score_to_metrics(report, labels)
    slug = _detector_slug(name)

    def write_metrics(p):
        with open(p, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["detector", "resolution", "f1_macro", "f1_normal",
                             "f1_anomaly", "precision_normal", "precision_anomaly",
                             "recall_normal", "recall_anomaly",
                             "support_normal", "support_anomaly"])
            for row in rows:
                writer.writerow([
                    name, row.resolution, f"{row.macro_f1:.6f}",
                    f"{row.f1_normal:.6f}", f"{row.f1_anomaly:.6f}",
                    f"{row.precision_normal:.6f}", f"{row.precision_anomaly:.6f}",
                    f"{row.recall_normal:.6f}", f"{row.recall_anomaly:.6f}",
                    row.support_normal, row.support_anomaly])

    _atomic(out / f"metrics_{slug}.csv", write_metrics)
    _echo_config(cfg, out, "evaluate")
    for row in rows:
        print(f"{name} {row.resolution}: macro F1 {row.macro_f1:.4f} "
              f"(normal {row.f1_normal:.4f}, anomaly {row.f1_anomaly:.4f})")
    return EXIT_OK


def cmd_sweep(cfg: dict) -> int:
    out = _out_dir(cfg)
    sw = cfg["sweep"]
    spec = evaluation.ExperimentSpec(
        models=tuple(sw["models"]),
        noise_levels=tuple(sw["noise_levels"]),
        seeds=tuple(sw["seeds"]),
        detectors=tuple(sw["detectors"]),
        n_train=sw["n_train"],
        n_test=sw["n_test"],
        test_noise=sw["test_noise"],
        alpha=cfg["detector"]["alpha"],
        window_k=cfg["detector"]["window_k"],
        train_config=neuralnet.TrainConfig(max_epochs=sw["max_epochs"]),
        out_dir=str(out / "sweep"),
    )
    results = evaluation.run_sweep(spec)
    _echo_config(cfg, out, "sweep")
    print(f"sweep results at {results}")
    return EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "inject": cmd_inject,
    "train": cmd_train,
    "score": cmd_score,
    "evaluate": cmd_evaluate,
    "sweep": cmd_sweep,
    "heatmap": cmd_heatmap,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tracelens",
        description="Event-log anomaly detection pipeline")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None, help="JSON config file")
        p.add_argument("--seed", type=int, default=None, help="global seed")
        p.add_argument("--out-dir", default=None, help="output directory")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="SECTION.KEY=VALUE", help="override a config key")
        p.add_argument("--detector",
                       choices=["dae", "tstide", "tstide+", "random"],
                       default=None, help="shortcut for --set detector.name=...")
        p.add_argument("--format", choices=["jsonl", "csv", "xes"], default=None,
                       help="shortcut for --set generate.format=...")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.overrides, args.seed, args.out_dir)
        if args.detector:
            cfg["detector"]["name"] = args.detector
        if args.format:
            cfg["generate"]["format"] = args.format
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, LogFormatError, encoding.EncodingError,
            anomalies.InjectionError, procgen.GenerationError,
            FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # pragma: no cover - defensive
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
