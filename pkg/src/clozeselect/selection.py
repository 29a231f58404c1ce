"""Budgeted joint selection of annotation instances and verbalizer tokens.

One step of the loop: score every cluster that still holds an unlabeled
instance (cohesion + separation + impurity, each term switchable), pick the
best cluster, pick an instance inside it (nearest the centroid while the
cluster is unlabeled, otherwise the candidate least similar to what is
already labeled there), ask the provider for its class, then claim the
cluster token most similar to the chosen instance as a verbalizer for that
class.  Exactly one label is consumed per step.

Clusters with verbalizer tokens are scored dynamically: cohesion against the
nearest in-cluster verbalizer instead of the centroid, separation against
the most similar out-of-cluster verbalizer.  Both fall back to their static
forms while no verbalizer is relevant, so the first step of a session scores
every cluster by cohesion + separation alone.
"""

from __future__ import annotations

import json
import unicodedata
from dataclasses import dataclass, field

import numpy as np

from .clustering import Cluster, Clustering
from .errors import (
    EmptyCluster,
    IneligibleCluster,
    NoEligibleCluster,
    NoUnlabeledInstance,
    ProviderFailure,
    SingleCluster,
)
from .geometry import SharedSpace

TERM_COHESION = "cohesion"
TERM_SEPARATION = "separation"
TERM_IMPURITY = "impurity"
ABLATION_TERMS = (TERM_COHESION, TERM_SEPARATION, TERM_IMPURITY)

SEPARATION_LITERAL = "literal"
SEPARATION_NEGATED = "negated"
DENOM_ALL_INSTANCES = "all_instances"
DENOM_LABELED_ONLY = "labeled_only"


def canonical_label(raw: str) -> str:
    """Class names compare as exact strings after NFC normalization and trim."""
    return unicodedata.normalize("NFC", raw).strip()


@dataclass(frozen=True)
class SessionConfig:
    budget: int
    label_space: tuple[str, ...]
    ablation: frozenset[str] = frozenset(ABLATION_TERMS)
    separation_mode: str = SEPARATION_LITERAL
    impurity_denominator: str = DENOM_ALL_INSTANCES
    seed: int = 42
    eq16_literal: bool = False

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        canon = tuple(canonical_label(c) for c in self.label_space)
        if not canon or any(not c for c in canon):
            raise ValueError("label_space must be non-empty names")
        if len(set(canon)) != len(canon):
            raise ValueError("label_space has duplicate names after canonicalization")
        object.__setattr__(self, "label_space", canon)
        abl = frozenset(self.ablation)
        if not abl <= set(ABLATION_TERMS):
            raise ValueError(f"unknown ablation terms: {sorted(abl - set(ABLATION_TERMS))}")
        if TERM_COHESION not in abl:
            raise ValueError("ablation must always keep cohesion")
        object.__setattr__(self, "ablation", abl)
        if self.separation_mode not in (SEPARATION_LITERAL, SEPARATION_NEGATED):
            raise ValueError(f"unknown separation_mode {self.separation_mode!r}")
        if self.impurity_denominator not in (DENOM_ALL_INSTANCES, DENOM_LABELED_ONLY):
            raise ValueError(f"unknown impurity_denominator {self.impurity_denominator!r}")


@dataclass(eq=False)
class VerbalizerEntry:
    token_id: str
    token_index: int
    class_name: str
    acquired_at: int
    vector: np.ndarray


@dataclass(eq=False)
class VerbalizerSet:
    entries: list[VerbalizerEntry] = field(default_factory=list)
    token_indices: set[int] = field(default_factory=set)

    def add(self, entry: VerbalizerEntry) -> None:
        if entry.token_index in self.token_indices:
            raise ValueError(f"token row {entry.token_index} already assigned")
        self.entries.append(entry)
        self.token_indices.add(entry.token_index)

    def classes_covered(self) -> set[str]:
        return {e.class_name for e in self.entries}

    def by_class(self) -> dict[str, list[VerbalizerEntry]]:
        out: dict[str, list[VerbalizerEntry]] = {}
        for e in self.entries:
            out.setdefault(e.class_name, []).append(e)
        return out

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(eq=False)
class SelectionEvent:
    timestamp: int
    cluster_id: int | None
    instance_id: str
    label: str
    token_id: str | None
    scores: tuple[float, float, float] | None


@dataclass(eq=False)
class SessionState:
    remaining_budget: int
    timestamp: int = 0
    labels: dict[str, str] = field(default_factory=dict)
    labeled_rows: set[int] = field(default_factory=set)
    verbalizers: VerbalizerSet = field(default_factory=VerbalizerSet)
    cluster_metrics: dict[int, dict] = field(default_factory=dict)
    events: list[SelectionEvent] = field(default_factory=list)


@dataclass(frozen=True)
class Proposal:
    cluster_id: int
    instance_row: int
    instance_id: str
    scores: tuple[float, float, float]


def init_state(config: SessionConfig) -> SessionState:
    return SessionState(remaining_budget=config.budget)


# --- cluster metrics --------------------------------------------------------


def cohesion_static(cluster: Cluster, space: SharedSpace) -> float:
    if cluster.member_indices.size == 0:
        raise EmptyCluster(f"cluster {cluster.id} has no members")
    return float(np.mean(space.vectors[cluster.member_indices] @ cluster.centroid))


def separation_static(cluster: Cluster, clusters: list[Cluster], mode: str = SEPARATION_LITERAL) -> float:
    others = [c for c in clusters if c.id != cluster.id]
    if not others:
        raise SingleCluster("separation needs at least two clusters")
    best = max(float(cluster.centroid @ c.centroid) for c in others)
    return best if mode == SEPARATION_LITERAL else 1.0 - best


def impurity(cluster: Cluster, space: SharedSpace, labels: dict[str, str],
             denominator: str = DENOM_ALL_INSTANCES) -> float:
    if cluster.member_indices.size == 0:
        raise EmptyCluster(f"cluster {cluster.id} has no members")
    counts: dict[str, int] = {}
    labeled = 0
    for row in cluster.instance_members(space):
        cls = labels.get(space.id_of(int(row)))
        if cls is not None:
            counts[cls] = counts.get(cls, 0) + 1
            labeled += 1
    if labeled == 0:
        return 0.0
    top = max(counts.values())
    total = cluster.instance_count if denominator == DENOM_ALL_INSTANCES else labeled
    return 1.0 - top / total


def cohesion_dynamic(cluster: Cluster, space: SharedSpace, verbalizers: VerbalizerSet) -> float:
    member_set = set(int(r) for r in cluster.member_indices)
    inside = sorted(r for r in verbalizers.token_indices if r in member_set)
    if not inside:
        return cohesion_static(cluster, space)
    sims = space.vectors[cluster.member_indices] @ space.vectors[inside].T
    return float(np.mean(sims.max(axis=1)))


def separation_dynamic(cluster: Cluster, space: SharedSpace, verbalizers: VerbalizerSet,
                       clusters: list[Cluster], mode: str = SEPARATION_LITERAL) -> float:
    member_set = set(int(r) for r in cluster.member_indices)
    outside = sorted(r for r in verbalizers.token_indices if r not in member_set)
    if not outside:
        return separation_static(cluster, clusters, mode)
    best = float(np.max(space.vectors[outside] @ cluster.centroid))
    return best if mode == SEPARATION_LITERAL else 1.0 - best


# --- scoring and selection ---------------------------------------------------


def _unlabeled_instances(cluster: Cluster, space: SharedSpace, state: SessionState) -> np.ndarray:
    rows = cluster.instance_members(space)
    if not state.labeled_rows:
        return rows
    mask = np.array([int(r) not in state.labeled_rows for r in rows], dtype=bool)
    return rows[mask]


def score_components(cluster: Cluster, space: SharedSpace, clusters: list[Cluster],
                     state: SessionState, config: SessionConfig) -> tuple[float, float, float]:
    """(cohesion, separation, impurity) as used in the score; disabled terms 0.

    Values are cached per cluster and recomputed only when the verbalizer set
    or the cluster's labels changed since they were last computed.
    """
    member_set = set(int(r) for r in cluster.member_indices)
    n_inside = sum(1 for r in state.verbalizers.token_indices if r in member_set)
    n_labeled = sum(1 for r in state.labeled_rows if r in member_set)
    stamp = (n_inside, len(state.verbalizers), n_labeled)

    cached = state.cluster_metrics.get(cluster.id)
    if cached is not None and cached["stamp"] == stamp:
        return cached["components"]

    coh = cohesion_dynamic(cluster, space, state.verbalizers)
    if TERM_SEPARATION in config.ablation:
        if len(clusters) > 1:
            sep = separation_dynamic(cluster, space, state.verbalizers, clusters, config.separation_mode)
        else:
            sep = 0.0  # degenerate single-cluster session: no other centroid exists
    else:
        sep = 0.0
    if TERM_IMPURITY in config.ablation:
        imp = impurity(cluster, space, state.labels, config.impurity_denominator)
    else:
        imp = 0.0

    components = (coh, sep, imp)
    state.cluster_metrics[cluster.id] = {
        "stamp": stamp,
        "components": components,
        "score": coh + sep + imp,
    }
    return components


def score_cluster(cluster: Cluster, space: SharedSpace, clusters: list[Cluster],
                  state: SessionState, config: SessionConfig) -> float:
    if _unlabeled_instances(cluster, space, state).size == 0:
        raise IneligibleCluster(f"cluster {cluster.id} has no unlabeled instance")
    coh, sep, imp = score_components(cluster, space, clusters, state, config)
    return coh + sep + imp


def select_cluster(clustering: Clustering, space: SharedSpace, state: SessionState,
                   config: SessionConfig) -> tuple[Cluster, tuple[float, float, float]]:
    best: Cluster | None = None
    best_score = -np.inf
    best_components = (0.0, 0.0, 0.0)
    for cluster in clustering.clusters:  # ascending id: ties keep the lowest
        if _unlabeled_instances(cluster, space, state).size == 0:
            continue
        components = score_components(cluster, space, clustering.clusters, state, config)
        score = components[0] + components[1] + components[2]
        if score > best_score:
            best, best_score, best_components = cluster, score, components
    if best is None:
        raise NoEligibleCluster("every instance is labeled")
    return best, best_components


def select_instance(cluster: Cluster, space: SharedSpace, state: SessionState,
                    config: SessionConfig) -> int:
    candidates = _unlabeled_instances(cluster, space, state)
    if candidates.size == 0:
        raise NoUnlabeledInstance(f"cluster {cluster.id} has no unlabeled instance")

    inst_rows = cluster.instance_members(space)
    labeled_local = inst_rows[np.array([int(r) in state.labeled_rows for r in inst_rows], dtype=bool)]

    if labeled_local.size == 0:
        # Unlabeled cluster: the instance closest to the centroid.
        sims = space.vectors[candidates] @ cluster.centroid
        return int(candidates[int(np.argmax(sims))])

    sims = space.vectors[candidates] @ space.vectors[labeled_local].T
    if config.eq16_literal:
        # Printed form: maximize the minimum similarity to the labeled set.
        scores = sims.min(axis=1)
        return int(candidates[int(np.argmax(scores))])
    # Text-faithful form: the candidate farthest from the labeled set.
    scores = sims.max(axis=1)
    return int(candidates[int(np.argmin(scores))])


def select_verbalizer_token(cluster: Cluster, space: SharedSpace, state: SessionState,
                            instance_row: int) -> int | None:
    tokens = cluster.token_members(space)
    free = tokens[np.array([int(t) not in state.verbalizers.token_indices for t in tokens], dtype=bool)]
    if free.size == 0:
        return None
    sims = space.vectors[free] @ space.vectors[instance_row]
    return int(free[int(np.argmax(sims))])


# --- the step ----------------------------------------------------------------


def propose(state: SessionState, clustering: Clustering, space: SharedSpace,
            config: SessionConfig) -> Proposal:
    cluster, components = select_cluster(clustering, space, state, config)
    row = select_instance(cluster, space, state, config)
    return Proposal(
        cluster_id=cluster.id,
        instance_row=row,
        instance_id=space.id_of(row),
        scores=components,
    )


def commit(state: SessionState, proposal: Proposal, label: str, clustering: Clustering,
           space: SharedSpace, config: SessionConfig) -> SelectionEvent:
    cls = canonical_label(label)
    if cls not in config.label_space:
        raise ProviderFailure(f"label {label!r} outside the label space")
    if state.remaining_budget < 1:
        raise ProviderFailure("budget exhausted")

    cluster = clustering.cluster_by_id(proposal.cluster_id)
    token_row = select_verbalizer_token(cluster, space, state, proposal.instance_row)
    token_id = space.id_of(token_row) if token_row is not None else None

    event = SelectionEvent(
        timestamp=state.timestamp,
        cluster_id=proposal.cluster_id,
        instance_id=proposal.instance_id,
        label=cls,
        token_id=token_id,
        scores=proposal.scores,
    )
    state.events.append(event)
    state.labels[proposal.instance_id] = cls
    state.labeled_rows.add(proposal.instance_row)
    if token_row is not None:
        state.verbalizers.add(VerbalizerEntry(
            token_id=token_id,
            token_index=token_row,
            class_name=cls,
            acquired_at=state.timestamp,
            vector=space.vectors[token_row].copy(),
        ))
    state.remaining_budget -= 1
    state.timestamp += 1
    return event


def step(state: SessionState, clustering: Clustering, space: SharedSpace,
         config: SessionConfig, label_provider) -> SessionState:
    proposal = propose(state, clustering, space, config)
    try:
        raw = label_provider(proposal.instance_id)
    except Exception as exc:
        raise ProviderFailure(f"label provider failed for {proposal.instance_id!r}: {exc}") from exc
    commit(state, proposal, raw, clustering, space, config)
    return state


def run_session(clustering: Clustering, space: SharedSpace, config: SessionConfig,
                label_provider) -> SessionState:
    state = init_state(config)
    while state.remaining_budget > 0:
        try:
            step(state, clustering, space, config, label_provider)
        except NoEligibleCluster:
            break
    return state


# --- export -------------------------------------------------------------------


def export_session(state: SessionState, config: SessionConfig, strategy_name: str,
                   clustering: Clustering, space: SharedSpace) -> dict:
    """Plain-dict session artifact; canonical_json() makes it byte-stable."""
    final_metrics = {}
    for cluster in clustering.clusters:
        coh = cohesion_dynamic(cluster, space, state.verbalizers)
        if TERM_SEPARATION in config.ablation and len(clustering.clusters) > 1:
            sep = separation_dynamic(cluster, space, state.verbalizers,
                                     clustering.clusters, config.separation_mode)
        else:
            sep = 0.0
        imp = impurity(cluster, space, state.labels, config.impurity_denominator) \
            if TERM_IMPURITY in config.ablation else 0.0
        final_metrics[str(cluster.id)] = {"cohesion": coh, "separation": sep, "impurity": imp}

    return {
        "config": {
            "strategy": strategy_name,
            "budget": config.budget,
            "label_space": list(config.label_space),
            "ablation": sorted(config.ablation),
            "separation_mode": config.separation_mode,
            "impurity_denominator": config.impurity_denominator,
            "seed": config.seed,
            "eq16_literal": config.eq16_literal,
        },
        "events": [
            {
                "timestamp": e.timestamp,
                "cluster_id": e.cluster_id,
                "instance_id": e.instance_id,
                "label": e.label,
                "token_id": e.token_id,
                "scores": list(e.scores) if e.scores is not None else None,
            }
            for e in state.events
        ],
        "labels": dict(sorted(state.labels.items())),
        "verbalizers": [
            {
                "token_id": e.token_id,
                "token_index": e.token_index,
                "class": e.class_name,
                "acquired_at": e.acquired_at,
            }
            for e in state.verbalizers.entries
        ],
        "final_cluster_metrics": final_metrics,
    }


def canonical_json(obj) -> bytes:
    return (json.dumps(obj, ensure_ascii=True, sort_keys=True, indent=2) + "\n").encode("utf-8")
