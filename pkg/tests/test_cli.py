"""End-to-end CLI pipeline on synthetic data, including determinism."""

import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from efold.cli import main

from conftest import write_synthetic_tsv


@pytest.fixture()
def runner():
    return CliRunner()


def run_ok(runner, args):
    result = runner.invoke(main, args, catch_exceptions=False)
    assert result.exit_code == 0, result.output + result.stderr
    return result


def pipeline(runner, base: Path, *, k=4, perms=10, seed=0, raw=None):
    """preprocess -> split -> evaluate -> simulate into base/run; returns out dir."""
    raw = raw or (base / "raw.tsv")
    if not raw.exists():
        write_synthetic_tsv(raw)
    out = base / "run"
    common = ["--out-dir", str(out), "--k", str(k), "--seed", str(seed)]
    run_ok(runner, common + ["preprocess", str(raw), "--name", "toy"])
    run_ok(runner, common + ["split", str(out / "toy.tsv"), "--name", "toy"])
    run_ok(runner, common + ["evaluate", "--dataset", f"toy={out / 'toy.tsv'}"])
    run_ok(runner, common + ["--perms", str(perms), "simulate"])
    return out


def test_full_pipeline_artifacts(runner, tmp_path):
    out = pipeline(runner, tmp_path)
    for artifact in [
        "toy.tsv",
        "toy.stats.json",
        "plan_toy_k4_seed0.csv",
        "score_cache.csv",
        "simulation_report.json",
        "simulation_raw.csv",
        "ranking_report.json",
        "percent_diff_matrix.csv",
        "stop_fold_matrix.csv",
        "mean_rank_matrix.csv",
    ]:
        assert (out / artifact).exists(), artifact

    report = json.loads((out / "simulation_report.json").read_text())
    assert report["k"] == 4 and report["n_perms"] == 10
    assert {c["algorithm"] for c in report["cells"]} == {"pop", "itemknn"}
    # 2 cells x 10 permutations of raw rows (plus header).
    assert len((out / "simulation_raw.csv").read_text().splitlines()) == 21

    ranking = json.loads((out / "ranking_report.json").read_text())
    entry = ranking["per_dataset"][0]
    # The synthetic data is built so neighborhoods beat raw popularity.
    assert entry["kcv_ranks"]["itemknn"] == 1 and entry["kcv_ranks"]["pop"] == 2


def test_preprocess_stats_and_idempotence(runner, tmp_path):
    raw = tmp_path / "raw.tsv"
    write_synthetic_tsv(raw)
    out = tmp_path / "run"
    result = run_ok(runner, ["--out-dir", str(out), "preprocess", str(raw), "--name", "toy"])
    stats = json.loads(result.output)
    assert set(stats) == {"users", "items", "interactions", "density_percent"}
    assert stats == json.loads((out / "toy.stats.json").read_text())

    # Preprocessing the canonical output again reproduces it byte for byte.
    run_ok(runner, [
        "--out-dir", str(out), "preprocess", str(out / "toy.tsv"), "--name", "again",
    ])
    assert (out / "again.tsv").read_bytes() == (out / "toy.tsv").read_bytes()


def test_evaluate_is_resumable(runner, tmp_path):
    out = pipeline(runner, tmp_path)
    common = ["--out-dir", str(out), "--k", "4", "--seed", "0"]
    rerun = run_ok(runner, common + ["evaluate", "--dataset", f"toy={out / 'toy.tsv'}"])
    assert json.loads(rerun.output.splitlines()[-1])["new_rows"] == 0


def test_pipeline_deterministic_outputs(runner, tmp_path):
    raw = tmp_path / "raw.tsv"
    write_synthetic_tsv(raw)
    out_a = pipeline(runner, tmp_path / "a", raw=raw)
    out_b = pipeline(runner, tmp_path / "b", raw=raw)
    for artifact in [
        "toy.tsv",
        "plan_toy_k4_seed0.csv",
        "score_cache.csv",
        "simulation_report.json",
        "simulation_raw.csv",
        "ranking_report.json",
        "percent_diff_matrix.csv",
        "stop_fold_matrix.csv",
        "mean_rank_matrix.csv",
    ]:
        assert (out_a / artifact).read_bytes() == (out_b / artifact).read_bytes(), artifact


def test_efold_live_run_and_trace(runner, tmp_path):
    out = pipeline(runner, tmp_path)
    common = ["--out-dir", str(out), "--k", "4", "--seed", "0"]
    result = run_ok(runner, common + [
        "efold", "--dataset", f"toy={out / 'toy.tsv'}", "--algorithm", "itemknn",
    ])
    summary = json.loads(result.output.splitlines()[-1])
    payload = json.loads((out / "efold_toy_itemknn.json").read_text())
    assert payload["stop_fold"] == summary["stop_fold"]
    assert payload["energy_fraction"] == summary["stop_fold"] / 4
    assert len(payload["scores"]) == payload["stop_fold"]

    lines = (out / "efold_trace_toy_itemknn.csv").read_text().splitlines()
    assert lines[0] == "fold,mean,ci_lower,ci_upper,width,stopped"
    assert len(lines) == 1 + payload["stop_fold"]
    first = lines[1].split(",")
    assert first[0] == "1" and first[2] == "" and first[4] == ""  # no CI at fold 1

    # The live fold scores must equal the cached full-CV scores (same folds,
    # same models, evaluation order does not matter).
    cache_lines = (out / "score_cache.csv").read_text().splitlines()[1:]
    cached = {
        int(f[2]): float(f[4])
        for f in (line.split(",") for line in cache_lines)
        if f[1] == "itemknn"
    }
    for fold, value in zip(payload["fold_order"], payload["scores"]):
        assert cached[fold] == value


def test_alpha_sweep_monotone(runner, tmp_path):
    out = pipeline(runner, tmp_path)
    common = ["--out-dir", str(out), "--k", "4", "--seed", "0"]
    run_ok(runner, common + [
        "efold", "--dataset", f"toy={out / 'toy.tsv'}", "--algorithm", "pop",
        "--alpha-sweep", "1e-5,1e-4,1e-3,1e-2,1e-1,1,10",
    ])
    rows = (out / "alpha_sweep_toy_pop.csv").read_text().splitlines()[1:]
    alphas = [float(r.split(",")[0]) for r in rows]
    stops = [int(r.split(",")[1]) for r in rows]
    assert alphas == sorted(alphas)
    # Larger alpha can only stop earlier or at the same fold.
    assert all(a >= b for a, b in zip(stops, stops[1:]))


def test_stats_command(runner, tmp_path):
    out = pipeline(runner, tmp_path)
    result = run_ok(runner, ["stats", str(out / "toy.tsv")])
    stats = json.loads(result.output)
    assert stats["interactions"] > 0


def test_config_file_precedence(runner, tmp_path):
    raw = tmp_path / "raw.tsv"
    write_synthetic_tsv(raw)
    config = tmp_path / "config.json"
    out = tmp_path / "run"
    config.write_text(json.dumps({"k": 3, "out_dir": str(out), "seed": 5}))

    run_ok(runner, ["--config", str(config), "preprocess", str(raw), "--name", "toy"])
    run_ok(runner, ["--config", str(config), "split", str(out / "toy.tsv"), "--name", "toy"])
    assert (out / "plan_toy_k3_seed5.csv").exists()  # config values applied

    # An explicit flag beats the config file.
    run_ok(runner, ["--config", str(config), "--k", "4",
                    "split", str(out / "toy.tsv"), "--name", "toy"])
    assert (out / "plan_toy_k4_seed5.csv").exists()

    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"knobs": 1}))
    result = runner.invoke(main, ["--config", str(bad), "stats", str(out / "toy.tsv")])
    assert result.exit_code == 1
    assert "EFOLD-E005" in result.stderr


def test_error_paths(runner, tmp_path):
    empty = tmp_path / "empty.tsv"
    empty.write_text("")
    result = runner.invoke(main, ["--out-dir", str(tmp_path / "o"), "preprocess", str(empty)])
    assert result.exit_code == 1
    assert "EFOLD-E003" in result.stderr

    result = runner.invoke(main, ["--out-dir", str(tmp_path / "o"), "simulate"])
    assert result.exit_code == 1
    assert "EFOLD-E003" in result.stderr  # empty cache

    raw = tmp_path / "raw.tsv"
    write_synthetic_tsv(raw)
    result = runner.invoke(main, [
        "--out-dir", str(tmp_path / "o"),
        "evaluate", "--dataset", f"toy={raw}", "--algorithms", "svdpp",
    ])
    assert result.exit_code == 1
    assert "EFOLD-E005" in result.stderr and "svdpp" in result.stderr


def test_evaluate_pair_isolation(runner, tmp_path):
    """One broken algorithm doesn't poison the other pairs' cache rows."""
    out = tmp_path / "run"
    raw = tmp_path / "raw.tsv"
    write_synthetic_tsv(raw)
    common = ["--out-dir", str(out), "--k", "3"]
    run_ok(runner, common + ["preprocess", str(raw), "--name", "toy"])
    missing_ext = tmp_path / "missing.csv"  # deliberately absent
    result = runner.invoke(main, common + [
        "evaluate", "--dataset", f"toy={out / 'toy.tsv'}",
        "--algorithms", "pop", "--external", f"deep={missing_ext}",
    ])
    assert result.exit_code == 1  # the failed pair is reported...
    assert "deep" in result.stderr
    # ...but pop's 3 folds all made it into the cache.
    cache_lines = (out / "score_cache.csv").read_text().splitlines()[1:]
    assert sum(1 for line in cache_lines if line.split(",")[1] == "pop") == 3


def test_external_scores_through_cli(runner, tmp_path):
    """A tiny external table evaluated for every fold of a 2-fold toy set."""
    out = tmp_path / "run"
    out.mkdir()
    # Four users, two items each; plan k=2 alternates per position within user.
    raw = tmp_path / "toy.tsv"
    raw.write_text(
        "".join(
            f"u{u}\ti{i}\t1\t\n"
            for u in range(4)
            for i in (0, 1)
        )
    )
    common = ["--out-dir", str(out), "--k", "2", "--seed", "1"]
    run_ok(runner, common + ["split", str(raw), "--name", "toy"])
    plan_lines = (out / "plan_toy_k2_seed1.csv").read_text().splitlines()[1:]
    assignment = [int(line.split(",")[1]) for line in plan_lines]

    # Build a consistent external table: for each fold, rank the user's test
    # item first, then any other item not in train.
    rows = ["algorithm,fold_index,user_id,rank,item_id,score"]
    for fold in (0, 1):
        for u in range(4):
            test_item = next(
                i for pos, i in enumerate([0, 1] * 4) if assignment[pos] == fold and pos // 2 == u
            )
            rows.append(f"deep,{fold},u{u},1,i{test_item},0.9")
    ext = tmp_path / "deep.csv"
    ext.write_text("\n".join(rows) + "\n")

    run_ok(runner, common + [
        "evaluate", "--dataset", f"toy={raw}", "--algorithms", "deep",
        "--external", f"deep={ext}",
    ])
    cache_lines = (out / "score_cache.csv").read_text().splitlines()[1:]
    values = [float(line.split(",")[4]) for line in cache_lines]
    assert values == [1.0, 1.0]  # perfect hit at rank 1 in both folds
