"""End-to-end tests for the command-line interface.

Every flow runs through :func:`rejopt.cli.main` in-process: build a small
dataset plus manifest in a temp directory, drive the subcommands, and check
the files and stdout they produce. Determinism tests rerun a command into a
second directory and compare bytes.
"""

import json
import math

import numpy as np
import pytest

from rejopt.cli import main
from rejopt.core import loss_from_name
from rejopt.dataio import SplitPlan, make_splits, serialize_libsvm
from rejopt.models import load_model
from rejopt.rejection import (
    DiscreteRiskDistribution,
    cost_based_selector,
    evaluate_selector,
)
from rejopt.scores import load_score
from rejopt.synth import noisy_margin_binary

N_ROWS = 100
MANIFEST_SEED = 5


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Directory holding a 100-row LIBSVM dataset and its manifest."""
    root = tmp_path_factory.mktemp("cli")
    dataset = noisy_margin_binary(n=N_ROWS, seed=7)
    with open(root / "margin.libsvm", "w", encoding="utf-8") as stream:
        serialize_libsvm(dataset, stream)
    payload = {
        "name": "margin",
        "source": "margin.libsvm",
        "format": "libsvm",
        "loss": "zero_one_100",
        "seed": MANIFEST_SEED,
    }
    (root / "margin.json").write_text(
        json.dumps(payload, indent=2) + "\n", encoding="utf-8"
    )
    return root


@pytest.fixture(scope="module")
def manifest_path(workspace):
    return str(workspace / "margin.json")


@pytest.fixture(scope="module")
def model_dir(workspace, manifest_path):
    out = workspace / "model"
    rc = main(
        [
            "train",
            "--manifest", manifest_path,
            "--model", "lr",
            "--c-grid", "1,10",
            "--out", str(out),
        ]
    )
    assert rc == 0
    return out


@pytest.fixture(scope="module")
def model_file(model_dir):
    return str(model_dir / "model.txt")


@pytest.fixture(scope="module")
def score_dir(workspace, manifest_path, model_file):
    out = workspace / "reg_score"
    rc = main(
        [
            "score",
            "--manifest", manifest_path,
            "--model-file", model_file,
            "--method", "reg",
            "--c-grid", "0,1",
            "--out", str(out),
        ]
    )
    assert rc == 0
    return out


def read_json(path):
    with open(path, "r", encoding="utf-8") as stream:
        return json.load(stream)


# --- train ----------------------------------------------------------------------


def test_train_writes_a_loadable_model(model_file):
    with open(model_file, "r", encoding="utf-8") as stream:
        model = load_model(stream)
    assert model.kind == "logistic"
    assert model.n_classes_ == 2
    assert model.n_features_in_ == 4
    preds = model.predict(np.zeros((3, 4)))
    assert set(preds.tolist()) <= {1, 2}


def test_train_model_file_carries_header_comments(model_file):
    with open(model_file, "r", encoding="utf-8") as stream:
        lines = [stream.readline() for _ in range(3)]
    assert lines[0].startswith("# rejopt ")
    assert lines[1] == f"# seed {MANIFEST_SEED}\n"
    assert lines[2].startswith("# config sha256 ")


def test_train_report_records_the_grid_search(model_dir):
    report = read_json(model_dir / "train_report.json")
    assert report["model"] == "logistic"
    assert report["n_classes"] == 2
    assert report["n_features"] == 4
    assert report["chosen_C"] in (1.0, 10.0)
    assert set(report["validation_risk"]) == {"1.0", "10.0"}
    assert all(0.0 <= v <= 100.0 for v in report["validation_risk"].values())
    best = min(report["validation_risk"].items(), key=lambda kv: kv[1])
    assert float(best[0]) == report["chosen_C"]
    assert isinstance(report["converged"], bool)
    assert report["iterations"] >= 1
    assert report["meta"]["tool"].startswith("rejopt ")
    assert report["meta"]["seed"] == MANIFEST_SEED
    assert len(report["meta"]["config_sha256"]) == 64


def test_train_reruns_are_byte_identical(workspace, manifest_path, model_dir):
    rerun = workspace / "model_rerun"
    rc = main(
        [
            "train",
            "--manifest", manifest_path,
            "--model", "lr",
            "--c-grid", "1,10",
            "--out", str(rerun),
        ]
    )
    assert rc == 0
    for name in ("model.txt", "train_report.json"):
        first = (model_dir / name).read_bytes()
        second = (rerun / name).read_bytes()
        assert first == second


def test_train_seed_flag_overrides_the_manifest(workspace, manifest_path):
    out = workspace / "model_seed123"
    rc = main(
        [
            "train",
            "--manifest", manifest_path,
            "--model", "lr",
            "--c-grid", "1",
            "--seed", "123",
            "--out", str(out),
        ]
    )
    assert rc == 0
    assert read_json(out / "train_report.json")["meta"]["seed"] == 123


def test_train_rejects_a_malformed_c_grid(workspace, manifest_path):
    rc = main(
        [
            "train",
            "--manifest", manifest_path,
            "--model", "lr",
            "--c-grid", "1,abc",
            "--out", str(workspace / "nope"),
        ]
    )
    assert rc == 2


def test_train_missing_manifest_is_an_io_error(workspace):
    rc = main(
        [
            "train",
            "--manifest", str(workspace / "absent.json"),
            "--model", "lr",
            "--out", str(workspace / "nope"),
        ]
    )
    assert rc == 5


# --- score ----------------------------------------------------------------------


def test_score_writes_a_loadable_score(score_dir, model_file):
    with open(model_file, "r", encoding="utf-8") as stream:
        base = load_model(stream)
    with open(score_dir / "score.txt", "r", encoding="utf-8") as stream:
        score = load_score(stream, base)
    values = score.uncertainty(np.zeros((3, 4)))
    assert values.shape == (3,)
    assert np.all(np.isfinite(values))


def test_score_report_lists_the_validation_grid(score_dir):
    report = read_json(score_dir / "score_report.json")
    assert report["method"] == "reg"
    assert report["chosen_C"] in (0.0, 1.0)
    assert set(report["validation_aurc"]) == {"0.0", "1.0"}
    best = min(report["validation_aurc"].items(), key=lambda kv: kv[1])
    assert float(best[0]) == report["chosen_C"]
    assert "relative_gap" not in report  # closed-form fit, no solver to report
    assert report["meta"]["seed"] == MANIFEST_SEED


def test_sele_score_records_solver_health(workspace, manifest_path, model_file):
    out = workspace / "sele_score"
    rc = main(
        [
            "score",
            "--manifest", manifest_path,
            "--model-file", model_file,
            "--method", "sele",
            "--c-grid", "1",
            "--max-iters", "60",
            "--out", str(out),
        ]
    )
    assert rc == 0
    report = read_json(out / "score_report.json")
    assert report["method"] == "sele"
    assert report["iterations"] >= 1
    assert isinstance(report["converged"], bool)
    assert math.isfinite(report["relative_gap"])


def test_sele_score_reruns_are_byte_identical(workspace, manifest_path, model_file):
    outputs = []
    for name in ("sele_again_a", "sele_again_b"):
        out = workspace / name
        rc = main(
            [
                "score",
                "--manifest", manifest_path,
                "--model-file", model_file,
                "--method", "sele",
                "--c-grid", "1",
                "--max-iters", "60",
                "--out", str(out),
            ]
        )
        assert rc == 0
        outputs.append(
            ((out / "score.txt").read_bytes(), (out / "score_report.json").read_bytes())
        )
    assert outputs[0] == outputs[1]


def test_score_missing_model_file_is_an_io_error(workspace, manifest_path):
    rc = main(
        [
            "score",
            "--manifest", manifest_path,
            "--model-file", str(workspace / "absent_model.txt"),
            "--method", "reg",
            "--out", str(workspace / "nope"),
        ]
    )
    assert rc == 5


# --- eval -----------------------------------------------------------------------


def test_eval_baseline_writes_curve_and_metrics(workspace, manifest_path, model_file):
    out = workspace / "eval_baseline"
    rc = main(
        [
            "eval",
            "--manifest", manifest_path,
            "--model-file", model_file,
            "--method", "baseline",
            "--split", "test",
            "--out", str(out),
        ]
    )
    assert rc == 0
    with open(out / "rc.csv", "r", encoding="utf-8") as stream:
        lines = stream.read().splitlines()
    assert lines[0].startswith("# rejopt ")
    assert lines[3] == "coverage,selective_risk,threshold"
    assert len(lines) == 3 + 1 + 20  # headers, column row, one row per sample
    metrics = read_json(out / "metrics.json")
    assert metrics["split"] == "test"
    assert metrics["n"] == 20
    assert 0.0 <= metrics["aurc"] <= 100.0
    assert 0.0 <= metrics["risk_at_90"] <= 100.0
    assert 0.0 <= metrics["risk_at_100"] <= 100.0


def test_eval_full_coverage_risk_matches_a_direct_recount(
    workspace, manifest_path, model_file
):
    out = workspace / "eval_recount"
    rc = main(
        [
            "eval",
            "--manifest", manifest_path,
            "--model-file", model_file,
            "--method", "baseline",
            "--split", "test",
            "--out", str(out),
        ]
    )
    assert rc == 0
    dataset = noisy_margin_binary(n=N_ROWS, seed=7)
    plan = SplitPlan((30.0, 10.0, 30.0, 10.0, 20.0), seed=MANIFEST_SEED, replicate=1)
    test_idx = make_splits(dataset.n, plan)[4]
    with open(model_file, "r", encoding="utf-8") as stream:
        base = load_model(stream)
    loss = loss_from_name("zero_one_100")
    losses = loss.vector(dataset.labels[test_idx], base.predict(dataset.features[test_idx]))
    metrics = read_json(out / "metrics.json")
    assert metrics["risk_at_100"] == pytest.approx(losses.mean(), abs=1e-9)


def test_eval_accepts_a_trained_score_file(
    workspace, manifest_path, model_file, score_dir
):
    out = workspace / "eval_scored"
    rc = main(
        [
            "eval",
            "--manifest", manifest_path,
            "--model-file", model_file,
            "--score-file", str(score_dir / "score.txt"),
            "--split", "val2",
            "--out", str(out),
        ]
    )
    assert rc == 0
    metrics = read_json(out / "metrics.json")
    assert metrics["split"] == "val2"
    assert metrics["n"] == 10


def test_eval_needs_exactly_one_uncertainty_source(
    workspace, manifest_path, model_file, score_dir
):
    both = main(
        [
            "eval",
            "--manifest", manifest_path,
            "--model-file", model_file,
            "--score-file", str(score_dir / "score.txt"),
            "--method", "baseline",
            "--out", str(workspace / "nope"),
        ]
    )
    neither = main(
        [
            "eval",
            "--manifest", manifest_path,
            "--model-file", model_file,
            "--out", str(workspace / "nope"),
        ]
    )
    assert both == 2
    assert neither == 2


def test_eval_method_flag_only_covers_the_baseline(
    workspace, manifest_path, model_file
):
    rc = main(
        [
            "eval",
            "--manifest", manifest_path,
            "--model-file", model_file,
            "--method", "reg",
            "--out", str(workspace / "nope"),
        ]
    )
    assert rc == 2


def test_eval_rejects_a_corrupt_model_file(workspace, manifest_path):
    bad = workspace / "bad_model.txt"
    bad.write_text("not a model\n", encoding="utf-8")
    rc = main(
        [
            "eval",
            "--manifest", manifest_path,
            "--model-file", str(bad),
            "--method", "baseline",
            "--out", str(workspace / "nope"),
        ]
    )
    assert rc == 3


# --- reject ---------------------------------------------------------------------


def reject_stdout(capsys, argv):
    rc = main(argv)
    assert rc == 0
    values = {}
    for line in capsys.readouterr().out.strip().splitlines():
        key, _, text = line.partition(" ")
        values[key] = text
    return values


def test_reject_coverage_solves_the_two_atom_fixture(capsys):
    values = reject_stdout(
        capsys,
        [
            "reject",
            "--atoms", "0.1:0.5,0.3:0.5",
            "--model", "coverage",
            "--target", "0.75",
        ],
    )
    assert float(values["threshold"]) == pytest.approx(0.3, abs=1e-12)
    assert float(values["accept_prob"]) == pytest.approx(0.5, abs=1e-12)
    assert float(values["coverage"]) == pytest.approx(0.75, abs=1e-12)
    assert float(values["selective_risk"]) == pytest.approx(1.0 / 6.0, abs=1e-12)
    assert "expected_cost" not in values


def test_reject_cost_output_matches_the_library(capsys):
    values = reject_stdout(
        capsys,
        ["reject", "--atoms", "0.1:0.5,0.3:0.5", "--model", "cost", "--target", "0.2"],
    )
    dist = DiscreteRiskDistribution.from_atoms([(0.1, 0.5), (0.3, 0.5)])
    selector = cost_based_selector(dist, 0.2)
    evaluation = evaluate_selector(dist, selector, reject_cost=0.2)
    assert float(values["threshold"]) == selector.threshold
    assert float(values["accept_prob"]) == selector.accept_prob
    assert float(values["coverage"]) == evaluation.coverage
    assert float(values["expected_cost"]) == evaluation.expected_cost


def test_reject_risk_target_at_the_overall_risk_keeps_everything(capsys):
    # mean risk is 0.2, so a 0.2 risk budget is met by full coverage
    values = reject_stdout(
        capsys,
        ["reject", "--atoms", "0.1:0.5,0.3:0.5", "--model", "risk", "--target", "0.2"],
    )
    assert float(values["coverage"]) == pytest.approx(1.0, abs=1e-12)
    assert float(values["selective_risk"]) == pytest.approx(0.2, abs=1e-12)


def test_reject_reads_score_loss_pairs_with_a_header(capsys, tmp_path):
    pairs = tmp_path / "pairs.csv"
    pairs.write_text(
        "score,loss\n0.1,0.0\n0.2,1.0\n0.3,0.0\n0.4,1.0\n", encoding="utf-8"
    )
    values = reject_stdout(
        capsys,
        ["reject", "--pairs", str(pairs), "--model", "coverage", "--target", "0.5"],
    )
    assert float(values["coverage"]) == pytest.approx(0.5, abs=1e-12)
    assert float(values["selective_risk"]) == pytest.approx(0.0, abs=1e-12)


def test_reject_rejects_three_column_pairs(tmp_path):
    pairs = tmp_path / "pairs.csv"
    pairs.write_text("0.1,0.0,7\n", encoding="utf-8")
    rc = main(
        ["reject", "--pairs", str(pairs), "--model", "coverage", "--target", "0.5"]
    )
    assert rc == 3


def test_reject_needs_exactly_one_input_source(tmp_path):
    pairs = tmp_path / "pairs.csv"
    pairs.write_text("0.1,0.0\n", encoding="utf-8")
    both = main(
        [
            "reject",
            "--atoms", "0.1:1.0",
            "--pairs", str(pairs),
            "--model", "cost",
            "--target", "0.5",
        ]
    )
    neither = main(["reject", "--model", "cost", "--target", "0.5"])
    assert both == 2
    assert neither == 2


def test_reject_rejects_malformed_atoms():
    rc = main(["reject", "--atoms", "0.1;0.5", "--model", "cost", "--target", "0.5"])
    assert rc == 2


def test_reject_missing_pairs_file_is_an_io_error(tmp_path):
    rc = main(
        [
            "reject",
            "--pairs", str(tmp_path / "absent.csv"),
            "--model", "cost",
            "--target", "0.5",
        ]
    )
    assert rc == 5


# --- bench ----------------------------------------------------------------------


BENCH_CONFIG = {
    "datasets": [{"builtin": "noisy-margin", "n": 120, "seed": 3}],
    "family": "lr",
    "methods": ["baseline", "reg"],
    "classifier_grid": [1.0],
    "score_grid": [1.0],
    "replicates": 1,
    "seed": 9,
}


def write_config(path, payload):
    path.write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")


@pytest.fixture(scope="module")
def bench_dirs(workspace):
    config = workspace / "bench.json"
    write_config(config, BENCH_CONFIG)
    dirs = []
    for name in ("bench_out", "bench_rerun"):
        out = workspace / name
        rc = main(
            ["bench", "--config", str(config), "--out", str(out), "--threads", "1"]
        )
        assert rc == 0
        dirs.append(out)
    return dirs


def test_bench_writes_results_summaries_and_headers(bench_dirs):
    out = bench_dirs[0]
    with open(out / "results.csv", "r", encoding="utf-8") as stream:
        lines = stream.read().splitlines()
    assert lines[0].startswith("# rejopt ")
    assert lines[1] == "# seed 9"
    assert lines[3] == (
        "dataset,method,replicate,C_classifier,C_score,aurc,r_at_90,r_at_100"
    )
    assert len(lines) == 3 + 1 + 2  # headers, column row, 2 methods x 1 replicate
    summary = (out / "summary.txt").read_text(encoding="utf-8")
    assert "baseline" in summary and "reg" in summary
    payload = read_json(out / "summary.json")
    assert set(payload["mean_ranks"]) == {"baseline", "reg"}


def test_bench_reruns_are_byte_identical(bench_dirs):
    first, second = bench_dirs
    for name in ("results.csv", "summary.txt", "summary.json"):
        assert (first / name).read_bytes() == (second / name).read_bytes()


def test_bench_accepts_a_manifest_dataset_entry(workspace):
    config = workspace / "bench_manifest.json"
    payload = dict(BENCH_CONFIG)
    payload["datasets"] = [{"manifest": "margin.json"}]  # relative to the config
    write_config(config, payload)
    out = workspace / "bench_manifest_out"
    rc = main(["bench", "--config", str(config), "--out", str(out)])
    assert rc == 0
    with open(out / "results.csv", "r", encoding="utf-8") as stream:
        body = stream.read()
    assert "margin,baseline," in body


def test_bench_rejects_unknown_config_keys(workspace):
    config = workspace / "bench_typo.json"
    payload = dict(BENCH_CONFIG)
    payload["replicants"] = 2
    write_config(config, payload)
    rc = main(["bench", "--config", str(config), "--out", str(workspace / "nope")])
    assert rc == 2


def test_bench_rejects_invalid_json(workspace):
    config = workspace / "bench_broken.json"
    config.write_text("{", encoding="utf-8")
    rc = main(["bench", "--config", str(config), "--out", str(workspace / "nope")])
    assert rc == 3


def test_bench_rejects_unknown_builtins(workspace):
    config = workspace / "bench_unknown.json"
    payload = dict(BENCH_CONFIG)
    payload["datasets"] = [{"builtin": "mnist"}]
    write_config(config, payload)
    rc = main(["bench", "--config", str(config), "--out", str(workspace / "nope")])
    assert rc == 2


def test_bench_needs_dataset_entries(workspace):
    config = workspace / "bench_empty.json"
    write_config(config, {"datasets": []})
    rc = main(["bench", "--config", str(config), "--out", str(workspace / "nope")])
    assert rc == 2


# --- inspect --------------------------------------------------------------------


def test_inspect_describes_a_model_file(capsys, model_file):
    rc = main(["inspect", "--model-file", model_file])
    assert rc == 0
    out = capsys.readouterr().out
    assert "model kind logistic" in out
    assert "n_classes 2" in out
    assert "n_features 4" in out
    assert "relative_gap" in out


def test_inspect_describes_a_manifest(capsys, manifest_path):
    rc = main(["inspect", "--manifest", manifest_path])
    assert rc == 0
    out = capsys.readouterr().out
    assert "dataset margin" in out
    assert "format libsvm" in out
    assert "loss zero_one_100" in out
    assert f"n {N_ROWS}" in out
    assert "n_classes 2" in out
    assert "class_counts" in out
    assert "ratios [30.0, 10.0, 30.0, 10.0, 20.0]" in out


def test_inspect_needs_an_argument():
    assert main(["inspect"]) == 2


# --- parser plumbing ------------------------------------------------------------


def test_version_flag_prints_the_tool_version(capsys):
    with pytest.raises(SystemExit) as exc_info:
        main(["--version"])
    assert exc_info.value.code == 0
    assert "rejopt" in capsys.readouterr().out


def test_unknown_subcommands_exit_through_argparse():
    with pytest.raises(SystemExit) as exc_info:
        main(["frobnicate"])
    assert exc_info.value.code == 2
