"""Command-line pipeline: preprocess -> split -> evaluate -> efold / simulate.

Every command is deterministic given its inputs and seed: JSON is dumped with
sorted keys, floats are written with repr, and nothing timestamps its output.
Errors leave on stderr with the machine-parsable ``EFOLD-Exxx:`` prefix and a
nonzero exit code.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path
from typing import Optional

import click

from . import core
from .cache import CacheRow, ScoreCache, sequences_from_cache
from .data import (
    TableFormat,
    compute_stats,
    load_interactions,
    prune_kcore,
    to_implicit,
    write_canonical,
)
from .errors import EfoldError
from .folding import PartitionPlan, load_plan, make_partition_plan, materialize_fold, save_plan
from .metrics import evaluate_fold
from .models import itemknn_train, load_external_scores, pop_train
from .simulate import (
    ScoreSequence,
    build_ranking,
    sample_permutations,
    simulate_all,
    simulate_one,
    write_matrices,
    write_raw_csv,
)

DEFAULTS = {
    "seed": 0,
    "k": 10,
    "alpha": 0.001,
    "confidence": 0.95,
    "e_min": 3,
    "n": 10,
    "perms": 5000,
    "out_dir": ".",
}

BUILTIN_ALGORITHMS = ("pop", "itemknn")


class _Group(click.Group):
    """Click group that turns EfoldError into the stderr + exit-1 contract."""

    def invoke(self, ctx):
        try:
            return super().invoke(ctx)
        except EfoldError as exc:
            click.echo(str(exc), err=True)
            ctx.exit(1)


@click.group(cls=_Group)
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="JSON file with defaults for the global flags.")
@click.option("--seed", type=int, default=None, help="Base RNG seed.")
@click.option("--k", type=int, default=None, help="Number of folds.")
@click.option("--alpha", type=float, default=None, help="Stopping-criterion alpha.")
@click.option("--confidence", type=float, default=None, help="CI confidence level.")
@click.option("--e-min", "e_min", type=int, default=None, help="Minimum folds before stopping.")
@click.option("--n", type=int, default=None, help="Metric cutoff (NDCG@n).")
@click.option("--perms", type=int, default=None, help="Number of fold-order permutations.")
@click.option("--out-dir", "out_dir", type=click.Path(file_okay=False), default=None,
              help="Directory for generated artifacts.")
@click.pass_context
def main(ctx, config_path, **flags):
    """e-fold cross-validation: early-stopped k-fold CV for top-n recommenders."""
    settings = dict(DEFAULTS)
    if config_path is not None:
        try:
            with open(config_path) as fh:
                loaded = json.load(fh)
        except OSError as exc:
            raise EfoldError("E001", f"cannot open config {config_path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise EfoldError("E002", f"config {config_path}: invalid JSON: {exc}") from exc
        unknown = sorted(set(loaded) - set(DEFAULTS))
        if unknown:
            raise EfoldError("E005", f"config {config_path}: unknown keys {unknown}")
        settings.update(loaded)
    for key, value in flags.items():
        if value is not None:
            settings[key] = value  # CLI flags beat the config file
    ctx.obj = settings


def _out_dir(settings) -> Path:
    out = Path(settings["out_dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _dump_json(payload: dict, path: Path) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _parse_named(spec: str, kind: str) -> tuple[str, str]:
    """NAME=PATH, or a bare path whose stem becomes the name."""
    if "=" in spec:
        name, path = spec.split("=", 1)
        if not name or not path:
            raise EfoldError("E005", f"bad {kind} spec {spec!r}, expected NAME=PATH")
        return name, path
    return Path(spec).stem, spec


def _table_format(delimiter, user_col, item_col, rating_col, timestamp_col, skip_header):
    def col(value):
        return None if value is None or value < 0 else value

    return TableFormat(
        delimiter="\t" if delimiter == "\\t" else delimiter,
        user_col=user_col,
        item_col=item_col,
        rating_col=col(rating_col),
        timestamp_col=col(timestamp_col),
        skip_header=skip_header,
    )


def _load_preprocessed(path: str):
    """Canonical TSV back into an implicit dataset (idempotent on such files)."""
    return to_implicit(load_interactions(path))


def _plan_for(ds, name: str, settings, out: Path, plan_path: Optional[str]) -> PartitionPlan:
    """Load the plan when its file exists, otherwise create and persist it."""
    k, seed = settings["k"], settings["seed"]
    path = Path(plan_path) if plan_path else out / f"plan_{name}_k{k}_seed{seed}.csv"
    if path.exists():
        plan = load_plan(str(path), k=k)
        if len(plan.assignment) != len(ds):
            raise EfoldError(
                "E005",
                f"plan {path} covers {len(plan.assignment)} interactions, dataset {name} has {len(ds)}",
            )
        return plan
    plan = make_partition_plan(ds, k=k, seed=seed)
    save_plan(plan, str(path))
    return plan


@main.command()
@click.argument("input_path", type=click.Path(dir_okay=False))
@click.option("--name", default=None, help="Dataset name (defaults to the file stem).")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="Where to write the preprocessed TSV.")
@click.option("--delimiter", default="\\t", show_default=True,
              help="Field delimiter of the input ('\\t' for tab, '::' works too).")
@click.option("--user-col", type=int, default=0, show_default=True)
@click.option("--item-col", type=int, default=1, show_default=True)
@click.option("--rating-col", type=int, default=2, show_default=True,
              help="Rating column; pass -1 if the file has none.")
@click.option("--timestamp-col", type=int, default=3, show_default=True,
              help="Timestamp column; pass -1 if the file has none.")
@click.option("--skip-header", is_flag=True, default=False)
@click.option("--core", type=int, default=5, show_default=True, help="k-core threshold.")
@click.pass_obj
def preprocess(settings, input_path, name, out_path, delimiter, user_col, item_col,
               rating_col, timestamp_col, skip_header, core):
    """Implicit conversion + k-core pruning; emits canonical TSV and stats JSON."""
    out = _out_dir(settings)
    name = name or Path(input_path).stem
    fmt = _table_format(delimiter, user_col, item_col, rating_col, timestamp_col, skip_header)
    ds = prune_kcore(to_implicit(load_interactions(input_path, fmt)), core=core)
    target = Path(out_path) if out_path else out / f"{name}.tsv"
    write_canonical(ds, str(target))
    stats = compute_stats(ds).to_dict()
    _dump_json(stats, out / f"{name}.stats.json")
    click.echo(json.dumps(stats, sort_keys=True))


@main.command()
@click.argument("dataset_path", type=click.Path(dir_okay=False))
@click.option("--name", default=None, help="Dataset name (defaults to the file stem).")
@click.option("--plan", "plan_path", type=click.Path(dir_okay=False), default=None,
              help="Plan CSV to write (default: plan_<name>_k<k>_seed<seed>.csv).")
@click.pass_obj
def split(settings, dataset_path, name, plan_path):
    """Create (or reuse) the user-stratified k-fold partition plan."""
    out = _out_dir(settings)
    name = name or Path(dataset_path).stem
    ds = _load_preprocessed(dataset_path)
    plan = _plan_for(ds, name, settings, out, plan_path)
    click.echo(json.dumps({
        "dataset": name,
        "k": plan.k,
        "partition_sizes": [int(s) for s in plan.partition_sizes()],
    }, sort_keys=True))


@main.command()
@click.argument("dataset_path", type=click.Path(dir_okay=False))
@click.option("--delimiter", default="\\t", show_default=True)
@click.option("--skip-header", is_flag=True, default=False)
@click.pass_obj
def stats(settings, dataset_path, delimiter, skip_header):
    """Print user/item/interaction counts and density of a canonical file."""
    fmt = _table_format(delimiter, 0, 1, 2, 3, skip_header)
    ds = load_interactions(dataset_path, fmt)
    click.echo(json.dumps(compute_stats(ds).to_dict(), sort_keys=True))


def _resolve_scorers(algorithms: str, external: tuple[str, ...]):
    """Name -> 'builtin' or external score path; union of --algorithms and --external."""
    providers: dict[str, Optional[str]] = {}
    for spec in external:
        ext_name, path = _parse_named(spec, "external")
        providers[ext_name] = path
    for raw in algorithms.split(","):
        algo = raw.strip()
        if not algo:
            continue
        if algo not in providers:
            if algo not in BUILTIN_ALGORITHMS:
                raise EfoldError(
                    "E005",
                    f"unknown algorithm {algo!r}; built-ins are {', '.join(BUILTIN_ALGORITHMS)}, "
                    "external ones need --external NAME=PATH",
                )
            providers[algo] = None
    return dict(sorted(providers.items()))


def _train_scorer(algo: str, ext_path: Optional[str], split_obj, s: int, k: int, ds, plan):
    if ext_path is not None:
        return load_external_scores(ext_path, expected_algorithm=algo, k=k, dataset=ds, plan=plan)
    if algo == "pop":
        return pop_train(split_obj.train)
    return itemknn_train(split_obj.train, s=s)


@main.command()
@click.option("--dataset", "datasets", multiple=True, required=True,
              metavar="NAME=PATH", help="Preprocessed dataset(s) to evaluate.")
@click.option("--algorithms", default="pop,itemknn", show_default=True,
              help="Comma-separated algorithm names.")
@click.option("--external", multiple=True, metavar="NAME=PATH",
              help="External score CSV for a non-builtin algorithm.")
@click.option("--plan", "plan_path", type=click.Path(dir_okay=False), default=None,
              help="Partition plan (single-dataset runs only).")
@click.option("--cache", "cache_path", type=click.Path(dir_okay=False), default=None,
              help="Score cache CSV (default: <out-dir>/score_cache.csv).")
@click.option("--itemknn-s", type=int, default=100, show_default=True,
              help="Neighborhood size for itemknn.")
@click.pass_obj
def evaluate(settings, datasets, algorithms, external, plan_path, cache_path, itemknn_s):
    """Run full k-fold evaluation, filling the score cache (resumable)."""
    out = _out_dir(settings)
    k, seed, n = settings["k"], settings["seed"], settings["n"]
    if plan_path and len(datasets) > 1:
        raise EfoldError("E005", "--plan only makes sense with a single --dataset")
    providers = _resolve_scorers(algorithms, external)
    cache = ScoreCache(Path(cache_path) if cache_path else out / "score_cache.csv")

    failures = []
    written = 0
    for spec in datasets:
        name, path = _parse_named(spec, "dataset")
        ds = _load_preprocessed(path)
        plan = _plan_for(ds, name, settings, out, plan_path)
        for algo, ext_path in providers.items():
            # A failure aborts this (dataset, algorithm) pair only.
            try:
                for fold in range(k):
                    if cache.has(name, algo, fold, seed, k):
                        continue
                    split_obj = materialize_fold(ds, plan, fold)
                    scorer = _train_scorer(algo, ext_path, split_obj, itemknn_s, k, ds, plan)
                    score = evaluate_fold(scorer, split_obj, n=n)
                    written += cache.append([CacheRow(
                        dataset=name,
                        algorithm=algo,
                        fold_index=fold,
                        metric=score.metric_name,
                        value=score.value,
                        seed=seed,
                        k=k,
                    )])
            except EfoldError as exc:
                failures.append(f"{name}/{algo}: {exc}")
                click.echo(f"{exc} [pair {name}/{algo} skipped]", err=True)
    click.echo(json.dumps({"new_rows": written, "cache": str(cache.path)}, sort_keys=True))
    if failures:
        raise EfoldError("E005", f"{len(failures)} (dataset, algorithm) pair(s) failed")


def _efold_config(settings) -> core.EfoldConfig:
    return core.EfoldConfig(
        alpha=settings["alpha"],
        confidence_level=settings["confidence"],
        e_min=settings["e_min"],
        k_max=settings["k"],
    )


def _write_trace_csv(result: core.EfoldResult, path: Path) -> None:
    """Fig.-1 data: per executed fold, running mean and CI; CI empty at fold 1."""
    with open(path, "w") as fh:
        fh.write("fold,mean,ci_lower,ci_upper,width,stopped\n")
        fh.write(f"1,{result.scores[0]!r},,,,{str(result.criterion_fired_at == 1).lower()}\n")
        trace = result.trace
        for i, fold in enumerate(trace.folds):
            stopped = str(result.criterion_fired_at == fold).lower()
            fh.write(
                f"{fold},{trace.means[i]!r},{trace.lowers[i]!r},"
                f"{trace.uppers[i]!r},{trace.widths[i]!r},{stopped}\n"
            )


@main.command()
@click.option("--dataset", "dataset_spec", required=True, metavar="NAME=PATH")
@click.option("--algorithm", default="pop", show_default=True)
@click.option("--external", multiple=True, metavar="NAME=PATH")
@click.option("--plan", "plan_path", type=click.Path(dir_okay=False), default=None)
@click.option("--itemknn-s", type=int, default=100, show_default=True)
@click.option("--alpha-sweep", default=None,
              help="Comma-separated alphas; runs all k folds once, then replays per alpha.")
@click.pass_obj
def efold(settings, dataset_spec, algorithm, external, plan_path, itemknn_s, alpha_sweep):
    """Live early-stopped run of one algorithm on one dataset."""
    out = _out_dir(settings)
    k, n = settings["k"], settings["n"]
    config = _efold_config(settings)
    name, path = _parse_named(dataset_spec, "dataset")
    providers = _resolve_scorers(algorithm, external)
    if algorithm not in providers:
        raise EfoldError("E005", f"--algorithm {algorithm!r} not among resolved providers")
    ext_path = providers[algorithm]
    ds = _load_preprocessed(path)
    plan = _plan_for(ds, name, settings, out, plan_path)

    def fold_scorer(fold: int):
        split_obj = materialize_fold(ds, plan, fold)
        scorer = _train_scorer(algorithm, ext_path, split_obj, itemknn_s, k, ds, plan)
        return evaluate_fold(scorer, split_obj, n=n)

    if alpha_sweep is None:
        result = core.run_efold(fold_scorer, plan, config)
        payload = core.result_to_dict(result, config, dataset=name, algorithm=algorithm)
        _dump_json(payload, out / f"efold_{name}_{algorithm}.json")
        _write_trace_csv(result, out / f"efold_trace_{name}_{algorithm}.csv")
        click.echo(json.dumps({
            "dataset": name,
            "algorithm": algorithm,
            "stop_fold": result.stop_fold,
            "final_mean": result.final_mean,
            "energy_fraction": core.energy_fraction(result),
        }, sort_keys=True))
        return

    # Sweep mode: pay for the k folds once, then replay the criterion per alpha.
    try:
        alphas = sorted(float(a) for a in alpha_sweep.split(","))
    except ValueError as exc:
        raise EfoldError("E005", f"bad --alpha-sweep value: {exc}") from exc
    scores = [float(fold_scorer(fold).value) for fold in range(k)]
    seq = ScoreSequence(dataset=name, algorithm=algorithm, k=k, scores=scores,
                        seed=settings["seed"])
    sweep_path = out / f"alpha_sweep_{name}_{algorithm}.csv"
    with open(sweep_path, "w") as fh:
        fh.write("alpha,stop_fold,final_mean,energy_fraction\n")
        for alpha in alphas:
            cfg = core.EfoldConfig(alpha=alpha, confidence_level=config.confidence_level,
                                   e_min=config.e_min, k_max=k)
            res = simulate_one(seq, range(k), cfg)
            fh.write(f"{alpha!r},{res.stop_fold},{res.final_mean!r},"
                     f"{core.energy_fraction(res)!r}\n")
    click.echo(json.dumps({"alphas": len(alphas), "sweep": str(sweep_path)}, sort_keys=True))


@main.command()
@click.option("--cache", "cache_path", type=click.Path(dir_okay=False), default=None,
              help="Score cache CSV (default: <out-dir>/score_cache.csv).")
@click.option("--metric", default=None, help="Metric to simulate when the cache has several.")
@click.option("--perm-seed", type=int, default=None,
              help="Seed for permutation sampling (default: the global seed).")
@click.option("--datasets", "dataset_filter", default=None,
              help="Comma-separated dataset names to include.")
@click.option("--algorithms", "algorithm_filter", default=None,
              help="Comma-separated algorithm names to include.")
@click.pass_obj
def simulate(settings, cache_path, metric, perm_seed, dataset_filter, algorithm_filter):
    """Permutation simulation + ranking consistency from the score cache."""
    out = _out_dir(settings)
    k, seed = settings["k"], settings["seed"]
    config = _efold_config(settings)
    cache = ScoreCache(Path(cache_path) if cache_path else out / "score_cache.csv")
    seqs = sequences_from_cache(
        cache, k=k, seed=seed, metric=metric,
        datasets=dataset_filter.split(",") if dataset_filter else None,
        algorithms=algorithm_filter.split(",") if algorithm_filter else None,
    )
    perms = sample_permutations(k, n_perms=settings["perms"],
                                seed=seed if perm_seed is None else perm_seed)
    report = simulate_all(seqs, perms, config)
    ranking = build_ranking(report)
    _dump_json(report.to_dict(), out / "simulation_report.json")
    write_raw_csv(report, out / "simulation_raw.csv")
    _dump_json(ranking.to_dict(), out / "ranking_report.json")
    write_matrices(report, ranking, out)
    click.echo(json.dumps({
        "cells": len(report.cells),
        "mean_energy_fraction": report.overall_mean_energy_fraction,
        "mean_percent_diff": report.overall_mean_percent_diff,
        "mean_stop_fold": report.overall_mean_stop_fold,
        "n_perms": report.n_perms,
    }, sort_keys=True))


if __name__ == "__main__":
    main()
