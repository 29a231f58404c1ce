"""Synthetic benchmark matrix: strategy x budget x seed, scored on held-out data.

One bundle per seed (corpus, reduced space, clustering, test split) is shared
across every strategy/budget cell so the comparison isolates the selection
policy.  The `random` baseline collects no verbalizers during its session, so
it is evaluated with a fixed manual set: the first planted token of each
class, the hand-written verbalizer a practitioner would start from.

The accuracy column is measured over the FULL test set: instances whose gold
class never acquired a verbalizer token are counted as errors, not excluded.
A selection policy that leaves a class uncovered cannot classify anything
into it, and the benchmark has to charge for that.
"""

from __future__ import annotations

import csv
import statistics
import time
from dataclasses import dataclass
from pathlib import Path

from . import selection
from .baselines import (
    STRATEGIES,
    STRATEGY_COLDSELECT,
    STRATEGY_RANDOM,
    STRATEGY_RANDOM_G,
    make_strategy_rng,
    random_g_step,
    random_step,
    run_strategy,
)
from .clustering import Clustering, kmeans, refine_by_silhouette, refine_clusters
from .embed_io import EmbeddingSet
from .errors import IoFailure
from .geometry import ItemKind, SharedSpace, build_shared_space
from .selection import (
    DENOM_LABELED_ONLY,
    SEPARATION_NEGATED,
    SessionConfig,
    VerbalizerEntry,
    VerbalizerSet,
    init_state,
)
from .synthetic import MixtureSpec, SyntheticCorpus, generate, generate_test_instances
from .verbalizer_eval import AGG_MEAN, evaluate

CSV_COLUMNS = ("strategy", "budget", "seed", "accuracy", "n_skipped", "n_labeled",
               "n_verbalizers", "wall_ms")
SUMMARY_SEED = "mean"


@dataclass(frozen=True)
class BenchmarkSettings:
    """Benchmark defaults, calibrated once on the default mixture and frozen.

    The dense vocabulary (112 tokens per class, no outliers), the 32-dim
    reduction and k=300 give every strategy full class coverage by budget 8
    while keeping per-seed preparation around a tenth of a second.  Mean
    aggregation scores a class by its whole verbalizer set, so a class that
    was claimed early and often is not favored over one claimed once.
    """

    n_classes: int = 4
    instances_per_class: int = 100
    tokens_per_class: int = 112
    outlier_tokens: int = 0
    dim: int = 64
    class_separation: float = 6.0
    test_per_class: int = 50
    reduced_dim: int = 32
    k: int = 300
    refine_iterations: int = 0
    separation_mode: str = SEPARATION_NEGATED
    impurity_denominator: str = DENOM_LABELED_ONLY
    aggregation: str = AGG_MEAN
    budgets: tuple[int, ...] = (8, 16, 32)
    seeds: tuple[int, ...] = tuple(range(20))

    def session_config(self, budget: int, seed: int, label_space: tuple[str, ...],
                       ablation: frozenset[str] | None = None) -> SessionConfig:
        kwargs = dict(budget=budget, label_space=label_space, seed=seed,
                      separation_mode=self.separation_mode,
                      impurity_denominator=self.impurity_denominator)
        if ablation is not None:
            kwargs["ablation"] = ablation
        return SessionConfig(**kwargs)

    def mixture_spec(self, seed: int) -> MixtureSpec:
        return MixtureSpec(
            n_classes=self.n_classes,
            instances_per_class=self.instances_per_class,
            tokens_per_class=self.tokens_per_class,
            outlier_tokens=self.outlier_tokens,
            dim=self.dim,
            class_separation=self.class_separation,
            seed=seed,
        )


@dataclass(eq=False)
class SeedBundle:
    """Everything one seed's cells share: data, geometry, clusters, test split."""
    settings: BenchmarkSettings
    spec: MixtureSpec
    corpus: SyntheticCorpus
    space: SharedSpace
    clustering: Clustering
    test_set: EmbeddingSet
    test_gold: dict[str, str]
    manual_verbalizers: VerbalizerSet


def prepare_bundle(settings: BenchmarkSettings, seed: int) -> SeedBundle:
    spec = settings.mixture_spec(seed)
    corpus = generate(spec)
    test_set, test_gold = generate_test_instances(spec, settings.test_per_class)
    space = build_shared_space(corpus.vocab, corpus.instances, settings.reduced_dim)
    clustering = kmeans(space, settings.k, seed)
    clustering = refine_by_silhouette(space, clustering, settings.refine_iterations)
    clustering = refine_clusters(space, clustering)
    return SeedBundle(
        settings=settings,
        spec=spec,
        corpus=corpus,
        space=space,
        clustering=clustering,
        test_set=test_set,
        test_gold=test_gold,
        manual_verbalizers=_manual_verbalizers(corpus, space, spec),
    )


def _manual_verbalizers(corpus: SyntheticCorpus, space: SharedSpace, spec: MixtureSpec) -> VerbalizerSet:
    verbs = VerbalizerSet()
    for ci in range(spec.n_classes):
        cls = spec.class_name(ci)
        token_id = corpus.planted[cls][0]
        row = space.row_of(ItemKind.TOKEN, token_id)
        verbs.add(VerbalizerEntry(
            token_id=token_id,
            token_index=row,
            class_name=cls,
            acquired_at=-1,
            vector=space.vectors[row].copy(),
        ))
    return verbs


def run_cell(bundle: SeedBundle, strategy: str, budget: int,
             ablation: frozenset[str] | None = None) -> dict:
    """One benchmark cell: run the session, evaluate, return a CSV-ready row."""
    config = bundle.settings.session_config(budget, bundle.spec.seed,
                                            bundle.spec.label_space, ablation)
    provider = bundle.corpus.gold.__getitem__

    started = time.perf_counter()
    state = run_strategy(strategy, bundle.clustering, bundle.space, config, provider)
    verbs = bundle.manual_verbalizers if strategy == STRATEGY_RANDOM else state.verbalizers
    report = evaluate(bundle.test_set, bundle.test_gold, verbs,
                      bundle.space.pca_model, bundle.spec.label_space,
                      bundle.settings.aggregation)
    wall_ms = int(round(1000.0 * (time.perf_counter() - started)))

    total = report.n_evaluated + report.n_skipped
    correct = sum(v["correct"] for v in report.per_class.values())
    return {
        "strategy": strategy,
        "budget": budget,
        "seed": bundle.spec.seed,
        "accuracy": (correct / total) if total else 0.0,
        "n_skipped": report.n_skipped,
        "n_labeled": len(state.labels),
        "n_verbalizers": len(verbs),
        "wall_ms": wall_ms,
    }


def simulate_matrix(settings: BenchmarkSettings, progress=None) -> list[dict]:
    """All strategy x budget x seed rows, ordered for stable CSV output."""
    rows: list[dict] = []
    for seed in settings.seeds:
        bundle = prepare_bundle(settings, seed)
        for strategy in STRATEGIES:
            for budget in settings.budgets:
                rows.append(run_cell(bundle, strategy, budget))
        if progress is not None:
            progress(f"seed {seed}: {len(bundle.clustering.clusters)} clusters")
    rows.sort(key=lambda r: (STRATEGIES.index(r["strategy"]), r["budget"], r["seed"]))
    return rows


def summarize(rows: list[dict]) -> list[dict]:
    """Per strategy/budget mean rows; the seed column reads "mean"."""
    out: list[dict] = []
    strategies = [s for s in STRATEGIES if any(r["strategy"] == s for r in rows)]
    for strategy in strategies:
        budgets = sorted({r["budget"] for r in rows if r["strategy"] == strategy})
        for budget in budgets:
            cell = [r for r in rows if r["strategy"] == strategy and r["budget"] == budget]
            out.append({
                "strategy": strategy,
                "budget": budget,
                "seed": SUMMARY_SEED,
                "accuracy": statistics.fmean(r["accuracy"] for r in cell),
                "n_skipped": statistics.fmean(r["n_skipped"] for r in cell),
                "n_labeled": statistics.fmean(r["n_labeled"] for r in cell),
                "n_verbalizers": statistics.fmean(r["n_verbalizers"] for r in cell),
                "wall_ms": statistics.fmean(r["wall_ms"] for r in cell),
            })
    return out


def write_csv(path, rows: list[dict]) -> None:
    try:
        with open(Path(path), "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
            writer.writeheader()
            writer.writerows(rows)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def steps_to_coverage(bundle: SeedBundle, strategy: str, seed: int) -> int:
    """Labels consumed until every class owns at least one verbalizer token.

    Only strategies that acquire tokens qualify; the pure-random baseline
    never assigns any, so coverage would be unreachable.
    """
    if strategy == STRATEGY_RANDOM:
        raise ValueError("the random baseline never acquires verbalizer tokens")
    spec = bundle.spec
    total = spec.n_classes * spec.instances_per_class
    config = bundle.settings.session_config(total, seed, spec.label_space)
    provider = bundle.corpus.gold.__getitem__
    state = init_state(config)
    rng = make_strategy_rng(seed)
    wanted = set(config.label_space)

    steps = 0
    while state.verbalizers.classes_covered() != wanted:
        if steps >= total:
            raise RuntimeError("verbalizer coverage not reached with every instance labeled")
        if strategy == STRATEGY_COLDSELECT:
            selection.step(state, bundle.clustering, bundle.space, config, provider)
        elif strategy == STRATEGY_RANDOM_G:
            random_g_step(state, bundle.clustering, bundle.space, config, rng, provider)
        else:
            raise ValueError(f"unknown strategy {strategy!r}")
        steps += 1
    return steps
