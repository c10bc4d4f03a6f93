"""Command-line interface.

Subcommands
-----------
train    select and train a base classifier from a dataset manifest
score    train an uncertainty score on top of a trained model
eval     risk-coverage evaluation of a model (+ optional score) on a split
reject   solve a rejection model on an explicit risk distribution
bench    run the replicated benchmark protocol from a JSON config
inspect  describe a model, score, or dataset file

Every output file starts with ``#`` header comments carrying the tool
version, the effective seed, and a sha256 over the resolved configuration
(output paths excluded), so identical runs produce byte-identical files.

Exit codes: 0 success, 2 configuration/usage error, 3 input parse error,
4 numeric failure, 5 I/O failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .bench import (
    BenchTask,
    ProtocolResult,
    results_csv,
    run_protocol,
    summary_json,
    summary_text,
)
from .core import loss_from_name
from .dataio import Normalizer, SplitPlan, load_dataset, load_manifest, make_splits
from .exceptions import (
    ConfigError,
    ContractError,
    NumericError,
    ParseError,
    RejoptError,
)
from .metrics import aurc, rc_curve, risk_at_coverage, write_rc_csv
from .models import fold_model_normalization, load_model, make_classifier, save_model
from .rejection import (
    DiscreteRiskDistribution,
    bounded_coverage_selector,
    bounded_improvement_selector,
    cost_based_selector,
    empirical_risk_distribution,
    evaluate_selector,
)
from .rng import Rng
from .scores import fold_score_normalization, load_score, make_score, save_score
from .synth import BUNDLED_DATASETS

_SPLIT_NAMES = ("train1", "val1", "train2", "val2", "test")


def _config_hash(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def _header_lines(seed: int, config: dict) -> list:
    return [
        f"rejopt {__version__}",
        f"seed {seed}",
        f"config sha256 {_config_hash(config)}",
    ]


def _open_out(path):
    return open(path, "w", encoding="utf-8", newline="\n")


def _write_json(path, payload: dict, seed: int, config: dict) -> None:
    payload = dict(payload)
    payload["meta"] = {
        "tool": f"rejopt {__version__}",
        "seed": seed,
        "config_sha256": _config_hash(config),
    }
    with _open_out(path) as stream:
        json.dump(payload, stream, sort_keys=True, indent=2)
        stream.write("\n")


def _parse_grid(text: str) -> tuple:
    try:
        values = tuple(float(v) for v in text.split(",") if v.strip() != "")
    except ValueError:
        raise ConfigError(f"bad C grid {text!r}; expected comma-separated numbers")
    if not values:
        raise ConfigError(f"bad C grid {text!r}; expected at least one value")
    if any(not math.isfinite(v) or v < 0 for v in values):
        raise ConfigError(f"C grid values must be finite and >= 0, got {text!r}")
    return values


def _splits_for(manifest, dataset, seed):
    plan = SplitPlan(manifest.ratios, seed=seed, replicate=1)
    return make_splits(dataset.n, plan)


def _load_model_file(path):
    with open(path, "r", encoding="utf-8") as stream:
        return load_model(stream)


def cmd_train(args) -> int:
    manifest = load_manifest(args.manifest)
    seed = manifest.seed if args.seed is None else args.seed
    grid = _parse_grid(args.c_grid)
    config = {
        "command": "train",
        "manifest": os.path.abspath(args.manifest),
        "model": args.model,
        "c_grid": list(grid),
        "gap_tol": args.gap_tol,
        "max_iters": args.max_iters,
        "seed": seed,
    }
    dataset = load_dataset(manifest)
    loss = manifest.loss_spec
    trn1, val1 = _splits_for(manifest, dataset, seed)[:2]
    X, y = dataset.features, dataset.labels
    norm = Normalizer().fit(X[trn1])
    X_trn1 = norm.transform(X[trn1])
    X_val1 = norm.transform(X[val1])
    best, best_c, best_risk, validation = None, None, math.inf, {}
    for C in grid:
        clf = make_classifier(
            args.model,
            dataset.n_classes,
            C=C,
            gap_tol=args.gap_tol,
            max_iters=args.max_iters,
        ).fit(X_trn1, y[trn1], n_classes=dataset.n_classes)
        val_risk = float(loss.vector(y[val1], clf.predict(X_val1)).mean())
        validation[repr(float(C))] = val_risk
        if val_risk < best_risk:
            best, best_c, best_risk = clf, float(C), val_risk
    folded = fold_model_normalization(best, norm.mean_, norm.scale_)
    os.makedirs(args.out, exist_ok=True)
    model_path = os.path.join(args.out, "model.txt")
    with _open_out(model_path) as stream:
        save_model(folded, stream, header_comments=_header_lines(seed, config))
    _write_json(
        os.path.join(args.out, "train_report.json"),
        {
            "model": folded.kind,
            "n_classes": dataset.n_classes,
            "n_features": dataset.d,
            "chosen_C": best_c,
            "validation_risk": validation,
            "relative_gap": float(best.report_.relative_gap),
            "iterations": int(best.report_.iterations),
            "converged": bool(best.report_.converged),
        },
        seed,
        config,
    )
    print(f"trained {folded.kind} model (C={best_c!r}) -> {model_path}")
    return 0


def cmd_score(args) -> int:
    manifest = load_manifest(args.manifest)
    seed = manifest.seed if args.seed is None else args.seed
    grid = _parse_grid(args.c_grid)
    config = {
        "command": "score",
        "manifest": os.path.abspath(args.manifest),
        "model_file": os.path.abspath(args.model_file),
        "method": args.method,
        "c_grid": list(grid),
        "gap_tol": args.gap_tol,
        "max_iters": args.max_iters,
        "seed": seed,
    }
    dataset = load_dataset(manifest)
    loss = manifest.loss_spec
    base = _load_model_file(args.model_file)
    splits = _splits_for(manifest, dataset, seed)
    trn2, val2 = splits[2], splits[3]
    X, y = dataset.features, dataset.labels
    norm = Normalizer().fit(X[trn2])
    Xs_trn2 = norm.transform(X[trn2])
    Xs_val2 = norm.transform(X[val2])
    raw_trn2 = X[trn2]
    raw_val2 = X[val2]
    val2_losses = loss.vector(y[val2], base.predict(raw_val2))
    best, best_c, best_aurc, validation = None, None, math.inf, {}
    for C in grid:
        params = {"C": C}
        if args.method == "sele":
            params["gap_tol"] = args.gap_tol
            params["max_iters"] = args.max_iters
        cand = make_score(args.method, base, loss, **params)
        if args.method == "sele":
            cand.fit(Xs_trn2, y[trn2], rng=Rng(seed, stream=1), base_inputs=raw_trn2)
        else:
            cand.fit(Xs_trn2, y[trn2], base_inputs=raw_trn2)
        val_aurc = aurc(cand.uncertainty(Xs_val2, base_inputs=raw_val2), val2_losses)
        validation[repr(float(C))] = val_aurc
        if val_aurc < best_aurc:
            best, best_c, best_aurc = cand, float(C), val_aurc
    folded = fold_score_normalization(best, norm.mean_, norm.scale_)
    os.makedirs(args.out, exist_ok=True)
    score_path = os.path.join(args.out, "score.txt")
    with _open_out(score_path) as stream:
        save_score(folded, stream, header_comments=_header_lines(seed, config))
    report = {
        "method": args.method,
        "chosen_C": best_c,
        "validation_aurc": validation,
    }
    if hasattr(best, "report_"):
        report["relative_gap"] = float(best.report_.relative_gap)
        report["iterations"] = int(best.report_.iterations)
        report["converged"] = bool(best.report_.converged)
    _write_json(os.path.join(args.out, "score_report.json"), report, seed, config)
    print(f"trained {args.method} score (C={best_c!r}) -> {score_path}")
    return 0


def cmd_eval(args) -> int:
    manifest = load_manifest(args.manifest)
    seed = manifest.seed if args.seed is None else args.seed
    if (args.score_file is None) == (args.method is None):
        raise ConfigError("pass exactly one of --score-file or --method baseline")
    if args.method is not None and args.method != "baseline":
        raise ConfigError(
            f"--method only supports 'baseline' (got {args.method!r}); "
            "trained scores come from --score-file"
        )
    config = {
        "command": "eval",
        "manifest": os.path.abspath(args.manifest),
        "model_file": os.path.abspath(args.model_file),
        "score_file": None
        if args.score_file is None
        else os.path.abspath(args.score_file),
        "method": args.method,
        "split": args.split,
        "seed": seed,
    }
    dataset = load_dataset(manifest)
    loss = manifest.loss_spec
    base = _load_model_file(args.model_file)
    splits = _splits_for(manifest, dataset, seed)
    idx = splits[_SPLIT_NAMES.index(args.split)]
    X, y = dataset.features, dataset.labels
    X_part, y_part = X[idx], y[idx]
    if args.score_file is not None:
        with open(args.score_file, "r", encoding="utf-8") as stream:
            score = load_score(stream, base)
        uncertainties = score.uncertainty(X_part)
    else:
        uncertainties = base.uncertainty(X_part)
    losses = loss.vector(y_part, base.predict(X_part))
    curve = rc_curve(uncertainties, losses)
    os.makedirs(args.out, exist_ok=True)
    curve_path = os.path.join(args.out, "rc.csv")
    with _open_out(curve_path) as stream:
        for line in _header_lines(seed, config):
            stream.write(f"# {line}\n")
        write_rc_csv(curve, stream)
    _write_json(
        os.path.join(args.out, "metrics.json"),
        {
            "split": args.split,
            "n": int(idx.shape[0]),
            "aurc": float(math.fsum(curve.risk.tolist()) / curve.n),
            "risk_at_90": risk_at_coverage(curve, 0.9),
            "risk_at_100": risk_at_coverage(curve, 1.0),
        },
        seed,
        config,
    )
    print(f"evaluated {args.split} split ({idx.shape[0]} samples) -> {curve_path}")
    return 0


def _parse_atoms(text: str) -> DiscreteRiskDistribution:
    atoms = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        risk_text, sep, mass_text = part.partition(":")
        if not sep:
            raise ConfigError(f"bad atom {part!r}; expected risk:mass")
        try:
            atoms.append((float(risk_text), float(mass_text)))
        except ValueError:
            raise ConfigError(f"bad atom {part!r}; expected two numbers") from None
    if not atoms:
        raise ConfigError("no atoms given")
    return DiscreteRiskDistribution.from_atoms(atoms)


def _read_pairs(path):
    scores, losses = [], []
    with open(path, "r", encoding="utf-8") as stream:
        for lineno, line in enumerate(stream, start=1):
            text = line.strip()
            if not text or text.startswith("#"):
                continue
            cells = [c.strip() for c in text.split(",")]
            if len(cells) != 2:
                raise ParseError(
                    f"{path}: line {lineno}: expected two columns, got {len(cells)}"
                )
            try:
                pair = (float(cells[0]), float(cells[1]))
            except ValueError:
                if not scores and all(not _is_number(c) for c in cells):
                    continue  # header row
                raise ParseError(
                    f"{path}: line {lineno}: not numeric: {text!r}"
                ) from None
            scores.append(pair[0])
            losses.append(pair[1])
    if not scores:
        raise ParseError(f"{path}: no data rows found")
    return np.asarray(scores), np.asarray(losses)


def _is_number(text: str) -> bool:
    try:
        float(text)
        return True
    except ValueError:
        return False


def cmd_reject(args) -> int:
    if (args.atoms is None) == (args.pairs is None):
        raise ConfigError("pass exactly one of --atoms or --pairs")
    if args.atoms is not None:
        dist = _parse_atoms(args.atoms)
    else:
        scores, losses = _read_pairs(args.pairs)
        dist = empirical_risk_distribution(scores, losses)
    target = args.target
    if args.model == "cost":
        selector = cost_based_selector(dist, target)
        evaluation = evaluate_selector(dist, selector, reject_cost=target)
    elif args.model == "risk":
        selector = bounded_improvement_selector(dist, target)
        evaluation = evaluate_selector(dist, selector)
    else:
        selector = bounded_coverage_selector(dist, target)
        evaluation = evaluate_selector(dist, selector)
    print(f"threshold {selector.threshold!r}")
    print(f"accept_prob {selector.accept_prob!r}")
    print(f"coverage {evaluation.coverage!r}")
    if evaluation.has_risk:
        print(f"selective_risk {evaluation.selective_risk!r}")
    else:
        print("selective_risk undefined")
    if args.model == "cost":
        print(f"expected_cost {evaluation.expected_cost!r}")
    return 0


def _bench_tasks(config_payload, config_dir):
    entries = config_payload.get("datasets")
    if not isinstance(entries, list) or not entries:
        raise ConfigError("bench config needs a nonempty 'datasets' list")
    tasks = []
    for entry in entries:
        if not isinstance(entry, dict):
            raise ConfigError(f"dataset entries must be objects, got {entry!r}")
        if ("manifest" in entry) == ("builtin" in entry):
            raise ConfigError(
                f"each dataset entry needs exactly one of 'manifest' or "
                f"'builtin': {entry!r}"
            )
        if "manifest" in entry:
            path = entry["manifest"]
            if not os.path.isabs(path):
                path = os.path.normpath(os.path.join(config_dir, path))
            manifest = load_manifest(path)
            tasks.append(
                BenchTask(
                    name=manifest.display_name,
                    dataset=load_dataset(manifest),
                    loss=manifest.loss_spec,
                    ratios=manifest.ratios,
                )
            )
        else:
            name = entry["builtin"]
            if name not in BUNDLED_DATASETS:
                raise ConfigError(
                    f"unknown builtin dataset {name!r}; "
                    f"available: {sorted(BUNDLED_DATASETS)}"
                )
            generator, loss_kind = BUNDLED_DATASETS[name]
            kwargs = {}
            if "n" in entry:
                kwargs["n"] = int(entry["n"])
            if "seed" in entry:
                kwargs["seed"] = int(entry["seed"])
            ratios = tuple(entry.get("ratios", (30.0, 10.0, 30.0, 10.0, 20.0)))
            tasks.append(
                BenchTask(
                    name=name,
                    dataset=generator(**kwargs),
                    loss=loss_from_name(loss_kind),
                    ratios=ratios,
                )
            )
    return tasks


def cmd_bench(args) -> int:
    try:
        with open(args.config, "r", encoding="utf-8") as stream:
            payload = json.load(stream)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{args.config}: not valid JSON: {exc}") from None
    if not isinstance(payload, dict):
        raise ParseError(f"{args.config}: bench config must be a JSON object")
    known = {
        "datasets",
        "family",
        "methods",
        "classifier_grid",
        "score_grid",
        "replicates",
        "seed",
        "classifier_gap_tol",
        "score_gap_tol",
        "max_iters",
    }
    unknown = set(payload) - known
    if unknown:
        raise ConfigError(f"{args.config}: unknown bench config keys {sorted(unknown)}")
    seed = payload.get("seed", 0) if args.seed is None else args.seed
    config = {
        "command": "bench",
        "config": os.path.abspath(args.config),
        "payload": payload,
        "seed": seed,
    }
    tasks = _bench_tasks(payload, os.path.dirname(os.path.abspath(args.config)))
    result = run_protocol(
        tasks,
        family=payload.get("family", "lr"),
        methods=tuple(payload.get("methods", ("baseline", "sele", "reg", "tcp"))),
        classifier_grid=tuple(payload.get("classifier_grid", (1, 10, 100, 1000))),
        score_grid=tuple(payload.get("score_grid", (0, 1, 10, 100, 1000))),
        seed=int(seed),
        replicates=int(payload.get("replicates", 5)),
        threads=int(args.threads),
        classifier_gap_tol=float(payload.get("classifier_gap_tol", 1e-3)),
        score_gap_tol=float(payload.get("score_gap_tol", 0.01)),
        max_iters=int(payload.get("max_iters", 2000)),
    )
    os.makedirs(args.out, exist_ok=True)
    csv_path = os.path.join(args.out, "results.csv")
    with _open_out(csv_path) as stream:
        for line in _header_lines(seed, config):
            stream.write(f"# {line}\n")
        results_csv(result, stream)
    with _open_out(os.path.join(args.out, "summary.txt")) as stream:
        for line in _header_lines(seed, config):
            stream.write(f"# {line}\n")
        summary_text(result, stream)
    with _open_out(os.path.join(args.out, "summary.json")) as stream:
        stream.write(summary_json(result))
    print(
        f"ran {len(result.datasets)} dataset(s) x {len(result.methods)} method(s) "
        f"x {result.replicates} replicate(s) -> {csv_path}"
    )
    return 0


def cmd_inspect(args) -> int:
    given = [
        name
        for name, value in (
            ("--model-file", args.model_file),
            ("--manifest", args.manifest),
        )
        if value is not None
    ]
    if not given:
        raise ConfigError("pass --model-file and/or --manifest")
    if args.model_file is not None:
        model = _load_model_file(args.model_file)
        print(f"model kind {model.kind}")
        print(f"n_classes {model.n_classes_}")
        print(f"n_features {model.n_features_in_}")
        print(f"C {float(model.C)!r}")
        print(f"relative_gap {float(model.report_.relative_gap)!r}")
    if args.manifest is not None:
        manifest = load_manifest(args.manifest)
        dataset = load_dataset(manifest)
        counts = np.bincount(dataset.labels, minlength=dataset.n_classes + 1)[1:]
        print(f"dataset {manifest.display_name}")
        print(f"source {manifest.source}")
        print(f"format {manifest.fmt}")
        print(f"loss {manifest.loss}")
        print(f"n {dataset.n}")
        print(f"n_features {dataset.d}")
        print(f"n_classes {dataset.n_classes}")
        print(f"class_counts {counts.tolist()}")
        print(f"ratios {list(manifest.ratios)}")
        print(f"seed {manifest.seed}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rejopt",
        description="Selective classification: train models, learn uncertainty "
        "scores, evaluate risk-coverage tradeoffs, and solve rejection rules.",
    )
    parser.add_argument(
        "--version", action="version", version=f"rejopt {__version__}"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--seed", type=int, default=None,
                       help="override the manifest/config seed")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads (results are thread-count invariant)")

    p = sub.add_parser("train", help="train a base classifier from a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model", required=True, choices=("lr", "svm", "svor"))
    p.add_argument("--c-grid", default="1,10,100,1000")
    p.add_argument("--gap-tol", type=float, default=1e-3)
    p.add_argument("--max-iters", type=int, default=2000)
    p.add_argument("--out", required=True)
    add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="train an uncertainty score on a model")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model-file", required=True)
    p.add_argument("--method", required=True, choices=("sele", "reg", "tcp"))
    p.add_argument("--c-grid", default="0,1,10,100,1000")
    p.add_argument("--gap-tol", type=float, default=0.01)
    p.add_argument("--max-iters", type=int, default=2000)
    p.add_argument("--out", required=True)
    add_common(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="risk-coverage evaluation on a split")
    p.add_argument("--manifest", required=True)
    p.add_argument("--model-file", required=True)
    p.add_argument("--score-file", default=None)
    p.add_argument("--method", default=None,
                   help="use 'baseline' to evaluate the model's own uncertainty")
    p.add_argument("--split", default="test", choices=_SPLIT_NAMES)
    p.add_argument("--out", required=True)
    add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("reject", help="solve a rejection model on a distribution")
    p.add_argument("--atoms", default=None,
                   help="inline distribution, e.g. '0.1:0.5,0.3:0.5'")
    p.add_argument("--pairs", default=None,
                   help="CSV file of score,loss rows")
    p.add_argument("--model", required=True, choices=("cost", "risk", "coverage"))
    p.add_argument("--target", type=float, required=True,
                   help="reject cost / target risk / target coverage")
    add_common(p)
    p.set_defaults(func=cmd_reject)

    p = sub.add_parser("bench", help="run the benchmark protocol from a config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    add_common(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("inspect", help="describe a model file or manifest")
    p.add_argument("--model-file", default=None)
    p.add_argument("--manifest", default=None)
    add_common(p)
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"rejopt: parse error: {exc}", file=sys.stderr)
        return 3
    except NumericError as exc:
        print(f"rejopt: numeric error: {exc}", file=sys.stderr)
        return 4
    except (ConfigError, ContractError) as exc:
        print(f"rejopt: config error: {exc}", file=sys.stderr)
        return 2
    except RejoptError as exc:
        print(f"rejopt: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"rejopt: i/o error: {exc}", file=sys.stderr)
        return 5


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
