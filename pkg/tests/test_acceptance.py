"""Acceptance suite: one test per release gate, each printing its verdict.

Run with `pytest -v -rA tests/test_acceptance.py` to see the measured
numbers behind every PASS line.  Tolerances and runtime limits are part of
the gate and asserted, not just printed.
"""

import itertools
import math
import statistics
import time

import numpy as np

import oracles
from clozeselect import benchmark as B
from clozeselect.baselines import STRATEGIES, run_strategy
from clozeselect.clustering import (
    kmeans,
    kmeans_loss,
    negative_silhouette_loss,
    refine_by_silhouette,
    refine_clusters,
    silhouette_score,
)
from clozeselect.embed_io import SetKind, make_embedding_set
from clozeselect.geometry import build_shared_space, cosine_similarity
from clozeselect.selection import (
    SessionConfig,
    VerbalizerEntry,
    VerbalizerSet,
    canonical_json,
    cohesion_dynamic,
    cohesion_static,
    export_session,
    impurity,
    init_state,
    run_session,
    score_cluster,
    score_components,
    separation_dynamic,
    separation_static,
)
from clozeselect.synthetic import MixtureSpec, generate
from clozeselect.verbalizer_eval import AGG_MAX, AGG_MEAN, class_probabilities


def random_space_and_clusters(seed, n_tokens, n_instances, k):
    rng = np.random.default_rng(seed)
    dim, reduced = 8, 4
    vocab = make_embedding_set(SetKind.VOCAB, [f"t{i}" for i in range(n_tokens)],
                               rng.normal(size=(n_tokens, dim)))
    inst = make_embedding_set(SetKind.INSTANCE, [f"x{i}" for i in range(n_instances)],
                              rng.normal(size=(n_instances, dim)))
    space = build_shared_space(vocab, inst, reduced)
    return space, kmeans(space, k, seed), rng


def oracle_session_from(space, clustering, **kwargs):
    vectors = [[float(x) for x in row] for row in space.vectors]
    is_token = [bool(space.token_mask[i]) for i in range(len(space))]
    ids = [space.id_of(i) for i in range(len(space))]
    clusters = {c.id: [int(r) for r in c.member_indices] for c in clustering.clusters}
    centroids = {c.id: [float(x) for x in c.centroid] for c in clustering.clusters}
    return oracles.OracleSession(vectors, is_token, ids, clusters, centroids, **kwargs)


def test_metric_oracle_equivalence():
    """Every cluster metric matches a brute-force loop on 50 random fixtures."""
    started = time.perf_counter()
    worst = 0.0
    checks = 0

    for seed in range(50):
        n_tokens = 3 + seed % 5
        n_instances = 5 + seed % 8
        space, clustering, rng = random_space_and_clusters(seed, n_tokens, n_instances, 3)
        vectors = [[float(x) for x in row] for row in space.vectors]
        centroids = [[float(x) for x in c.centroid] for c in clustering.clusters]
        assign = [int(a) for a in clustering.assignment]

        for _ in range(3):
            u, v = rng.normal(size=5), rng.normal(size=5)
            got = cosine_similarity(u, v)
            worst = max(worst, abs(got - oracles.cosine(u, v)))
            checks += 1

        labels = {}
        for row in space.instance_rows:
            if rng.random() < 0.5:
                labels[space.id_of(int(row))] = ("A", "B", "C")[int(rng.integers(3))]
        verbs = VerbalizerSet()
        claimed = rng.choice(space.token_rows, size=min(3, n_tokens), replace=False)
        for i, row in enumerate(sorted(int(r) for r in claimed)):
            verbs.add(VerbalizerEntry(token_id=space.id_of(row), token_index=row,
                                      class_name="A", acquired_at=i,
                                      vector=space.vectors[row].copy()))

        for c in clustering.clusters:
            members = [int(r) for r in c.member_indices]
            member_set = set(members)
            inside = [r for r in verbs.token_indices if r in member_set]
            outside = [r for r in verbs.token_indices if r not in member_set]
            centroid = centroids[c.id]

            pairs = [
                (cohesion_static(c, space),
                 oracles.cohesion_static(vectors, members, centroid)),
                (cohesion_dynamic(c, space, verbs),
                 oracles.cohesion_dynamic(vectors, members, inside, centroid)),
            ]
            for mode in (oracles.LITERAL, oracles.NEGATED):
                pairs.append((separation_static(c, clustering.clusters, mode),
                              oracles.separation_static(centroids, c.id, mode)))
                pairs.append((separation_dynamic(c, space, verbs, clustering.clusters, mode),
                              oracles.separation_dynamic(vectors, centroids, c.id,
                                                         outside, mode)))
            inst_rows = [r for r in members if not space.token_mask[r]]
            in_cluster = [labels[space.id_of(r)] for r in inst_rows
                          if space.id_of(r) in labels]
            for denom in (oracles.ALL_INSTANCES, oracles.LABELED_ONLY):
                pairs.append((impurity(c, space, labels, denom),
                              oracles.impurity(in_cluster, len(inst_rows), denom)))
            for got, want in pairs:
                worst = max(worst, abs(got - want))
                checks += 1

        for i in range(len(space)):
            got = silhouette_score(space, clustering, i)
            worst = max(worst, abs(got - oracles.silhouette_point(vectors, assign, i)))
            checks += 1
        got = negative_silhouette_loss(space, clustering)
        worst = max(worst, abs(got - oracles.sil_loss(vectors, assign)))
        checks += 1

    wall = time.perf_counter() - started
    assert worst <= 1e-9
    assert wall < 10.0
    print(f"PASS metric oracles: {checks} checks on 50 fixtures, "
          f"max |dev| {worst:.2e} (<=1e-9), {wall:.1f}s (<10s)")


def test_kmeans_reaches_exhaustive_optimum():
    """Final clustering loss matches the exhaustive-partition optimum.

    Single-start seeded initialization cannot guarantee the global optimum on
    arbitrary point clouds, so the gate runs on well-separated mixtures
    (9 items, 3 classes) where the basin structure matches the use case.
    """
    started = time.perf_counter()
    n, k = 9, 3
    assigns = np.array([a for a in itertools.product(range(k), repeat=n)
                        if len(set(a)) == k], dtype=np.int64)
    onehot = np.eye(k)[assigns]  # (M, n, k)

    def exhaustive_best(V):
        sums = np.einsum("mnk,nd->mkd", onehot, V)
        counts = onehot.sum(axis=1)
        means = sums / counts[:, :, None]
        norms = np.maximum(np.linalg.norm(means, axis=2, keepdims=True), 1e-300)
        cents = means / norms
        sims = np.einsum("mnk,mkd,nd->m", onehot, cents, V)
        return float((2.0 * n - 2.0 * sims).min())

    hits = 0
    for seed in range(100):
        spec = MixtureSpec(n_classes=3, instances_per_class=2, tokens_per_class=1,
                           outlier_tokens=0, dim=8, class_separation=15.0, seed=seed)
        corpus = generate(spec)
        space = build_shared_space(corpus.vocab, corpus.instances, 4)
        clustering = kmeans(space, k, seed)
        final = kmeans_loss(space, clustering)
        best = exhaustive_best(space.vectors)
        assert final >= best - 1e-9, "search found a loss below the exhaustive optimum"
        if final <= best + 1e-9:
            hits += 1

    wall = time.perf_counter() - started
    assert hits >= 95
    assert wall < 30.0
    print(f"PASS kmeans optimum: {hits}/100 seeds within 1e-9 of the exhaustive "
          f"optimum (>=95), {wall:.1f}s (<30s)")


def test_loss_monotonicity():
    """Both losses never increase across their iteration histories."""
    started = time.perf_counter()
    violations = 0
    for seed in range(100):
        n_tokens = 3 + seed % 4
        n_instances = 6 + seed % 9
        k = 2 + seed % 3
        space, clustering, _ = random_space_and_clusters(seed, n_tokens, n_instances, k)
        history = clustering.loss_history.kmeans
        violations += sum(1 for a, b in zip(history, history[1:]) if b > a)
        refined = refine_by_silhouette(space, clustering, 3)
        sil = refined.loss_history.silhouette
        violations += sum(1 for a, b in zip(sil, sil[1:]) if b > a)
    wall = time.perf_counter() - started
    assert violations == 0
    print(f"PASS monotonicity: 0 violations across 100 fixtures, {wall:.1f}s")


def test_refinement_postconditions():
    """After refinement no cluster is token-only or instance-only."""
    started = time.perf_counter()
    offenders = 0
    for seed in range(100):
        spec = MixtureSpec(n_classes=2 + seed % 3, instances_per_class=10,
                           tokens_per_class=2, outlier_tokens=3, dim=16,
                           class_separation=6.0, seed=seed)
        corpus = generate(spec)
        space = build_shared_space(corpus.vocab, corpus.instances, 8)
        clustering = kmeans(space, 5 + seed % 4, seed)
        clustering = refine_by_silhouette(space, clustering, 2)
        clustering = refine_clusters(space, clustering)
        for c in clustering.clusters:
            if c.token_count == 0 or c.instance_count == 0:
                offenders += 1
    wall = time.perf_counter() - started
    assert offenders == 0
    print(f"PASS refinement postconditions: 0 single-population clusters "
          f"across 100 outlier-bearing fixtures, {wall:.1f}s")


def test_session_trace_matches_reference_loop():
    """A budget-4 session replays event-for-event against the loop oracle."""
    spec = MixtureSpec(n_classes=2, instances_per_class=8, tokens_per_class=2,
                       outlier_tokens=1, dim=12, class_separation=8.0, seed=7)
    corpus = generate(spec)
    space = build_shared_space(corpus.vocab, corpus.instances, 6)
    clustering = refine_clusters(space, kmeans(space, 4, 7))
    config = SessionConfig(budget=4, label_space=spec.label_space, seed=7)

    state = run_session(clustering, space, config, corpus.gold.__getitem__)
    oracle = oracle_session_from(space, clustering)
    expected = oracle.run(4, corpus.gold.__getitem__)

    assert len(state.events) == 4 == len(expected)
    worst = 0.0
    for got, want in zip(state.events, expected):
        assert got.timestamp == want["timestamp"]
        assert got.cluster_id == want["cluster_id"]
        assert got.instance_id == want["instance_id"]
        assert got.label == want["label"]
        assert got.token_id == want["token_id"]
        worst = max(worst, max(abs(g - w) for g, w in zip(got.scores, want["scores"])))
    assert worst <= 1e-9
    print(f"PASS trace equivalence: 4/4 events identical, "
          f"max score |dev| {worst:.2e} (<=1e-9)")


def test_budget_exactness_and_determinism():
    """|labels| = min(budget, N) and byte-identical exports, every strategy."""
    started = time.perf_counter()
    for seed in range(20):
        spec = MixtureSpec(n_classes=2, instances_per_class=6, tokens_per_class=2,
                           outlier_tokens=1, dim=12, class_separation=8.0, seed=seed)
        corpus = generate(spec)
        space = build_shared_space(corpus.vocab, corpus.instances, 6)
        clustering = refine_clusters(space, kmeans(space, 4, seed))
        n_instances = corpus.instances.count
        provider = corpus.gold.__getitem__
        for strategy in STRATEGIES:
            config = SessionConfig(budget=5, label_space=spec.label_space, seed=seed)
            blobs = []
            for _ in range(2):
                state = run_strategy(strategy, clustering, space, config, provider)
                assert len(state.labels) == 5
                blobs.append(canonical_json(export_session(
                    state, config, strategy, clustering, space)))
            assert blobs[0] == blobs[1]

            over = SessionConfig(budget=n_instances + 7,
                                 label_space=spec.label_space, seed=seed)
            state = run_strategy(strategy, clustering, space, over, provider)
            assert len(state.labels) == n_instances
    wall = time.perf_counter() - started
    print(f"PASS budget and determinism: 20 seeds x {len(STRATEGIES)} strategies, "
          f"exports byte-identical, |labels|=min(budget,N), {wall:.1f}s")


def test_cold_start_scores():
    """Before any label, every cluster score is exactly the static sum."""
    checked = 0
    for seed in range(5):
        spec = MixtureSpec(n_classes=2, instances_per_class=8, tokens_per_class=2,
                           outlier_tokens=1, dim=12, class_separation=8.0, seed=seed)
        corpus = generate(spec)
        space = build_shared_space(corpus.vocab, corpus.instances, 6)
        clustering = refine_clusters(space, kmeans(space, 4, seed))
        config = SessionConfig(budget=4, label_space=spec.label_space, seed=seed)
        state = init_state(config)
        for c in clustering.clusters:
            coh, sep, imp = score_components(c, space, clustering.clusters, state, config)
            assert coh == cohesion_static(c, space)
            assert sep == separation_static(c, clustering.clusters, config.separation_mode)
            assert imp == 0.0
            assert score_cluster(c, space, clustering.clusters, state, config) == coh + sep
            checked += 1
    print(f"PASS cold start: {checked} clusters across 5 fixtures score "
          f"exactly static cohesion + separation with zero impurity")


def test_probability_evaluator_properties():
    """Probabilities sum to one and orthogonal tokens pin the argmax."""
    rng = np.random.default_rng(11)
    dim, classes = 6, ("c0", "c1", "c2", "c3")
    verbs = VerbalizerSet()
    for i, cls in enumerate(classes):
        vector = np.zeros(dim)
        vector[i] = 1.0
        verbs.add(VerbalizerEntry(token_id=f"t{i}", token_index=i, class_name=cls,
                                  acquired_at=i, vector=vector))

    sum_violations = argmax_violations = 0
    for _ in range(1000):
        v = rng.normal(size=dim)
        v /= np.linalg.norm(v)
        expected = classes[int(np.argmax(v[: len(classes)]))]
        for agg in (AGG_MAX, AGG_MEAN):
            probs = class_probabilities(v, verbs, classes, agg)
            if abs(sum(probs.values()) - 1.0) > 1e-9:
                sum_violations += 1
            if max(classes, key=probs.__getitem__) != expected:
                argmax_violations += 1

    assert sum_violations == 0
    assert argmax_violations == 0
    print("PASS evaluator properties: 1000 instances x 2 aggregations, "
          "sums within 1e-9 of 1, argmax aligned with the planted token, "
          "0 violations")


def test_benchmark_ordering():
    """Guided selection beats both baselines on the default mixture."""
    settings = B.BenchmarkSettings()
    started = time.perf_counter()
    rows = B.simulate_matrix(settings)
    wall = time.perf_counter() - started
    means = {(r["strategy"], r["budget"]): r["accuracy"] for r in B.summarize(rows)}

    strict = 0
    lines = []
    for budget in settings.budgets:
        cs = means[("coldselect", budget)]
        r = means[("random", budget)]
        rg = means[("random-g", budget)]
        assert cs >= r and cs >= rg, f"budget {budget}: {cs:.4f} vs {r:.4f}/{rg:.4f}"
        strict += cs > r and cs > rg
        lines.append(f"budget {budget}: coldselect {cs:.4f} random {r:.4f} "
                     f"random-g {rg:.4f}")
    assert strict >= 2
    assert wall < 300.0
    print(f"PASS benchmark ordering: {'; '.join(lines)}; "
          f"strictly ahead at {strict}/3 budgets (>=2), {wall:.0f}s (<300s)")


def test_ablation_ordering():
    """The full score is at least as accurate as each ablated variant."""
    settings = B.BenchmarkSettings()
    started = time.perf_counter()
    pooled = {"full": [], "cohesion": [], "cohesion+separation": []}
    variants = (("full", None),
                ("cohesion", frozenset({"cohesion"})),
                ("cohesion+separation", frozenset({"cohesion", "separation"})))
    for seed in settings.seeds:
        bundle = B.prepare_bundle(settings, seed)
        for budget in settings.budgets:
            for name, ablation in variants:
                row = B.run_cell(bundle, "coldselect", budget, ablation)
                pooled[name].append(row["accuracy"])
    wall = time.perf_counter() - started
    means = {name: statistics.fmean(vals) for name, vals in pooled.items()}
    assert means["full"] >= means["cohesion"]
    assert means["full"] >= means["cohesion+separation"]
    print(f"PASS ablation ordering: full {means['full']:.4f} >= "
          f"cohesion-only {means['cohesion']:.4f} and "
          f"cohesion+separation {means['cohesion+separation']:.4f}, {wall:.0f}s")


def test_coverage_efficiency():
    """Guided selection covers every class in no more steps than random-g."""
    settings = B.BenchmarkSettings()
    started = time.perf_counter()
    cs, rg = [], []
    for seed in range(50):
        bundle = B.prepare_bundle(settings, seed)
        cs.append(B.steps_to_coverage(bundle, "coldselect", seed))
        rg.append(B.steps_to_coverage(bundle, "random-g", seed))
    wall = time.perf_counter() - started
    cs_mean, rg_mean = statistics.fmean(cs), statistics.fmean(rg)
    assert cs_mean <= rg_mean
    print(f"PASS coverage efficiency: coldselect mean {cs_mean:.2f} steps <= "
          f"random-g mean {rg_mean:.2f} over 50 seeds, {wall:.0f}s")
