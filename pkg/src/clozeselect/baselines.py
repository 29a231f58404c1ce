"""Baseline labeling strategies: uniform random and random-cluster.

``random`` samples unlabeled instances uniformly and never claims verbalizer
tokens (evaluation then relies on a manually supplied verbalizer file).
``random-g`` picks an eligible cluster uniformly at random but shares every
post-cluster-choice code path with the main strategy, so when the cluster
choices happen to coincide the traces are identical.

Both draw from a counter-based generator so traces replay identically across
platforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .clustering import Clustering
from .errors import NoEligibleCluster, NoUnlabeledInstance, ProviderFailure
from .geometry import SharedSpace
from .seeding import substream
from .selection import (
    Proposal,
    SelectionEvent,
    SessionConfig,
    SessionState,
    canonical_label,
    commit,
    init_state,
    run_session,
    score_components,
    select_instance,
    _unlabeled_instances,
)

STRATEGY_COLDSELECT = "coldselect"
STRATEGY_RANDOM = "random"
STRATEGY_RANDOM_G = "random-g"
STRATEGIES = (STRATEGY_COLDSELECT, STRATEGY_RANDOM, STRATEGY_RANDOM_G)


@dataclass(frozen=True)
class Strategy:
    name: str
    seed: int

    def __post_init__(self):
        if self.name not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.name!r}; expected one of {STRATEGIES}")


def make_strategy_rng(seed: int) -> np.random.Generator:
    return substream(seed, "strategy")


def random_step(state: SessionState, space: SharedSpace, config: SessionConfig,
                rng: np.random.Generator, label_provider) -> SelectionEvent:
    """Label one uniformly drawn unlabeled instance; no verbalizer token."""
    rows = space.instance_rows
    if state.labeled_rows:
        rows = rows[np.array([int(r) not in state.labeled_rows for r in rows], dtype=bool)]
    if rows.size == 0:
        raise NoUnlabeledInstance("every instance is labeled")
    row = int(rows[int(rng.integers(rows.size))])
    ident = space.id_of(row)

    try:
        raw = label_provider(ident)
    except Exception as exc:
        raise ProviderFailure(f"label provider failed for {ident!r}: {exc}") from exc
    cls = canonical_label(raw)
    if cls not in config.label_space:
        raise ProviderFailure(f"label {raw!r} outside the label space")

    event = SelectionEvent(
        timestamp=state.timestamp,
        cluster_id=None,
        instance_id=ident,
        label=cls,
        token_id=None,
        scores=None,
    )
    state.events.append(event)
    state.labels[ident] = cls
    state.labeled_rows.add(row)
    state.remaining_budget -= 1
    state.timestamp += 1
    return event


def random_g_step(state: SessionState, clustering: Clustering, space: SharedSpace,
                  config: SessionConfig, rng: np.random.Generator, label_provider) -> SelectionEvent:
    """Uniform eligible-cluster choice, then the standard labeling policy."""
    eligible = [c for c in clustering.clusters
                if _unlabeled_instances(c, space, state).size > 0]
    if not eligible:
        raise NoEligibleCluster("every instance is labeled")
    cluster = eligible[int(rng.integers(len(eligible)))]
    components = score_components(cluster, space, clustering.clusters, state, config)
    row = select_instance(cluster, space, state, config)
    proposal = Proposal(
        cluster_id=cluster.id,
        instance_row=row,
        instance_id=space.id_of(row),
        scores=components,
    )
    try:
        raw = label_provider(proposal.instance_id)
    except Exception as exc:
        raise ProviderFailure(f"label provider failed for {proposal.instance_id!r}: {exc}") from exc
    return commit(state, proposal, raw, clustering, space, config)


def run_random_session(space: SharedSpace, config: SessionConfig, label_provider,
                       rng: np.random.Generator | None = None) -> SessionState:
    rng = rng if rng is not None else make_strategy_rng(config.seed)
    state = init_state(config)
    while state.remaining_budget > 0:
        try:
            random_step(state, space, config, rng, label_provider)
        except NoUnlabeledInstance:
            break
    return state


def run_random_g_session(clustering: Clustering, space: SharedSpace, config: SessionConfig,
                         label_provider, rng: np.random.Generator | None = None) -> SessionState:
    rng = rng if rng is not None else make_strategy_rng(config.seed)
    state = init_state(config)
    while state.remaining_budget > 0:
        try:
            random_g_step(state, clustering, space, config, rng, label_provider)
        except NoEligibleCluster:
            break
    return state


def run_strategy(name: str, clustering: Clustering, space: SharedSpace,
                 config: SessionConfig, label_provider) -> SessionState:
    if name == STRATEGY_COLDSELECT:
        return run_session(clustering, space, config, label_provider)
    if name == STRATEGY_RANDOM:
        return run_random_session(space, config, label_provider)
    if name == STRATEGY_RANDOM_G:
        return run_random_g_session(clustering, space, config, label_provider)
    raise ValueError(f"unknown strategy {name!r}; expected one of {STRATEGIES}")
