import json
import subprocess
import sys

import numpy as np
import pytest

from abcforest import forest, load_table, model_choice


def run_cli(*args):
    return subprocess.run([sys.executable, "-m", "abcforest", *map(str, args)],
                          capture_output=True, text=True)


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    ws = tmp_path_factory.mktemp("cli")
    r = run_cli("simulate", "--model", "toy-ma", "--n", 1500, "--seed", 5,
                "--out", ws / "train.csv")
    assert r.returncode == 0, r.stderr
    r = run_cli("simulate", "--model", "toy-ma", "--n", 1, "--seed", 99,
                "--out", ws / "obs.csv")
    assert r.returncode == 0, r.stderr
    r = run_cli("train", "--table", ws / "train.csv", "--trees", 50,
                "--seed", 9, "--out", ws / "model.txt")
    assert r.returncode == 0, r.stderr
    return ws


def test_simulate_row_count_and_manifest(workspace):
    table = load_table(workspace / "train.csv")
    assert len(table) == 1500 and table.n_summaries == 7
    manifest = json.loads((workspace / "train.csv.manifest.json").read_text())
    assert manifest["command"] == "simulate"
    assert manifest["seed"] == 5
    assert "--n" in manifest["argv"]


def test_simulate_rejects_zero_records(tmp_path):
    r = run_cli("simulate", "--model", "toy-ma", "--n", 0, "--seed", 1,
                "--out", tmp_path / "x.csv")
    assert r.returncode == 2


def test_simulate_byte_identical_reruns(tmp_path):
    a = tmp_path / "a.csv"
    b = tmp_path / "b.csv"
    for out in (a, b):
        r = run_cli("simulate", "--model", "toy-ma", "--n", 300, "--seed", 7,
                    "--out", out)
        assert r.returncode == 0
    assert a.read_bytes() == b.read_bytes()


def test_simulate_autocovariance_flavor(tmp_path):
    r = run_cli("simulate", "--model", "toy-ma", "--n", 50, "--seed", 3,
                "--summaries", "autocovariance", "--out", tmp_path / "c.csv")
    assert r.returncode == 0
    t = load_table(tmp_path / "c.csv")
    assert t.summary_names[0] == "acov1"


def test_train_prints_oob_and_roundtrips(workspace):
    r = run_cli("train", "--table", workspace / "train.csv", "--trees", 50,
                "--seed", 9, "--out", workspace / "model_again.txt")
    assert r.returncode == 0
    assert "out-of-bag error rate" in r.stdout
    assert (workspace / "model.txt").read_bytes() == \
        (workspace / "model_again.txt").read_bytes()
    # reload reproduces identical predictions on the training table
    table = load_table(workspace / "train.csv")
    loaded = forest.load_forest(workspace / "model.txt")
    clf = model_choice.attach(loaded, table)
    retrained = model_choice.fit(table, loaded.config)
    assert np.array_equal(clf.forest.classify_batch(table.summaries),
                          retrained.forest.classify_batch(table.summaries))


def test_train_single_tree_degenerate_run(workspace, tmp_path):
    r = run_cli("train", "--table", workspace / "train.csv", "--trees", 1,
                "--seed", 2, "--out", tmp_path / "one.txt")
    assert r.returncode == 0


def test_train_missing_table_exits_3(tmp_path):
    r = run_cli("train", "--table", tmp_path / "nope.csv", "--seed", 1,
                "--out", tmp_path / "m.txt")
    assert r.returncode == 3


def test_train_malformed_table_exits_3(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("model,stat_a\n1,xyz\n")
    r = run_cli("train", "--table", bad, "--seed", 1, "--out", tmp_path / "m.txt")
    assert r.returncode == 3


def test_predict_outputs_and_determinism(workspace, tmp_path):
    outs = []
    for name in ("p1.csv", "p2.csv"):
        r = run_cli("predict", "--model", workspace / "model.txt",
                    "--table", workspace / "train.csv",
                    "--observed", workspace / "obs.csv",
                    "--out", tmp_path / name)
        assert r.returncode == 0
        assert "selected model:" in r.stdout
        outs.append((tmp_path / name).read_bytes())
    assert outs[0] == outs[1]
    header, row = outs[0].decode().strip().split("\n")
    cells = dict(zip(header.split(","), row.split(",")))
    posterior = float(cells["posterior_prob"])
    assert 0.0 <= posterior <= 1.0
    assert int(cells["votes_model_1"]) + int(cells["votes_model_2"]) == 50


def test_benchmark_seven_rows_and_replay(tmp_path):
    out = tmp_path / "bench"
    r = run_cli("benchmark", "--train", 400, "--valid", 200, "--test", 300,
                "--trees", 40, "--seed", 11, "--threads", 2, "--out", out)
    assert r.returncode == 0, r.stderr
    rows = (out / "benchmark.csv").read_text().strip().split("\n")
    assert rows[0] == "method,error,detail"
    assert len(rows) == 8  # header + the seven method rows
    methods = [line.split(",")[0] for line in rows[1:]]
    assert methods == ["lda", "logistic", "naive_bayes", "knn_k100", "knn_k50",
                       "random_forest", "bayes_oracle"]
    for line in rows[1:]:
        assert 0.0 <= float(line.split(",")[1]) <= 1.0
    assert (out / "benchmark.svg").exists()
    assert (out / "rf_confusion.csv").exists()
    assert (out / "rf_oob.csv").exists()
    # replaying the manifest into a fresh directory reproduces the bytes
    out2 = tmp_path / "bench2"
    r = run_cli("replay", out / "manifest.json", "--out", out2)
    assert r.returncode == 0, r.stderr
    for name in ("benchmark.csv", "rf_confusion.csv", "rf_oob.csv",
                 "benchmark.svg"):
        assert (out / name).read_bytes() == (out2 / name).read_bytes()


def test_diagnose_emits_five_artifacts(workspace, tmp_path):
    out = tmp_path / "diag"
    r = run_cli("diagnose", "--model", workspace / "model.txt",
                "--table", workspace / "train.csv",
                "--observed", workspace / "obs.csv",
                "--disc-n", 60, "--disc-pool", 4000, "--threads", 2,
                "--seed", 4, "--out", out)
    assert r.returncode == 0, r.stderr
    artifacts = {"error_vs_trees", "subset_stability", "importance",
                 "lda_projection", "discrepancy"}
    stems = {p.stem for p in out.iterdir() if p.name != "manifest.json"}
    assert stems == artifacts
    for stem in artifacts - {"subset_stability"}:
        assert (out / f"{stem}.csv").exists() and (out / f"{stem}.svg").exists()
    assert (out / "subset_stability.csv").exists()

    # curve final point equals the trained model's out-of-bag error
    table = load_table(workspace / "train.csv")
    clf = model_choice.attach(forest.load_forest(workspace / "model.txt"), table)
    curve_rows = (out / "error_vs_trees.csv").read_text().strip().split("\n")[1:]
    assert len(curve_rows) == 50
    assert float(curve_rows[-1].split(",")[1]) == clf.oob_error()

    # projection CSV carries one row per record plus the observed point
    proj_rows = (out / "lda_projection.csv").read_text().strip().split("\n")[1:]
    assert len(proj_rows) == len(table) + 1
    assert proj_rows[-1].startswith("observed")

    # discrepancy CSV is two-column
    disc_header = (out / "discrepancy.csv").read_text().split("\n", 1)[0]
    assert disc_header == "exact_posterior_ma2,summary_posterior_ma2"


def test_diagnose_numeric_error_exits_4(tmp_path):
    # all-constant summaries make the pooled covariance exactly zero, which
    # no regularization can rescue; the LDA projection reports a numeric
    # failure
    lines = ["model,stat_a,stat_b"]
    for i in range(40):
        lines.append(f"{1 + i % 2},1.0,2.0")
    bad = tmp_path / "flat.csv"
    bad.write_text("\n".join(lines) + "\n")
    r = run_cli("train", "--table", bad, "--trees", 5, "--seed", 1,
                "--out", tmp_path / "m.txt")
    assert r.returncode == 0
    r = run_cli("diagnose", "--model", tmp_path / "m.txt", "--table", bad,
                "--observed", bad, "--disc-n", 10, "--disc-pool", 200,
                "--out", tmp_path / "d")
    assert r.returncode == 4
    assert "numeric error" in r.stderr


def test_version_flag():
    r = run_cli("--version")
    assert r.returncode == 0
    assert r.stdout.strip()
