"""Clustering of the shared space plus the two refinement stages.

Pipeline order: seeded kmeans++ / Lloyd's on the unit vectors, greedy
silhouette-loss refinement, then structural refinement that discards
token-only clusters and re-homes instances from instance-only clusters.

Conventions that matter for reproducibility:

* distances are squared Euclidean on unit vectors (equivalently 2 - 2*cos);
* a cluster centroid is always the arithmetic mean of its members,
  re-normalized to unit length;
* assignment ties resolve to the lowest cluster id, item ties to the lowest
  row index;
* silhouette refinement applies a move only when it strictly lowers the
  global loss (beyond a tiny stability margin), so recorded losses can never
  rise from floating-point reshuffling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyCluster, IndexOutOfRange, KTooLarge, NoMixedCluster
from .geometry import SharedSpace
from .seeding import generator

DISCARDED = -1
MAX_LLOYD_ITERS = 300
# Items beyond this count switch b(i) estimation to a fixed-seed subsample.
SILHOUETTE_SAMPLE_THRESHOLD = 20000
SILHOUETTE_SAMPLE_SIZE = 20000
_SILHOUETTE_SAMPLE_SEED = 0x51A7
# Moves must beat the current loss by this much; see module docstring.
MOVE_MARGIN = 1e-12
_DEGENERATE_MEAN = 1e-12


@dataclass(eq=False)
class Cluster:
    id: int
    member_indices: np.ndarray  # ascending row indices into the shared space
    centroid: np.ndarray        # unit vector
    token_count: int
    instance_count: int

    def instance_members(self, space: SharedSpace) -> np.ndarray:
        return self.member_indices[~space.token_mask[self.member_indices]]

    def token_members(self, space: SharedSpace) -> np.ndarray:
        return self.member_indices[space.token_mask[self.member_indices]]

    @property
    def size(self) -> int:
        return int(self.member_indices.size)


@dataclass(eq=False)
class LossHistory:
    kmeans: list[float] = field(default_factory=list)
    silhouette: list[float] = field(default_factory=list)


@dataclass(eq=False)
class Clustering:
    assignment: np.ndarray       # cluster id per row, DISCARDED for dropped rows
    clusters: list[Cluster]      # ascending id
    loss_history: LossHistory

    def cluster_by_id(self, cid: int) -> Cluster:
        for c in self.clusters:
            if c.id == cid:
                return c
        raise IndexOutOfRange(f"no cluster with id {cid}")


def kmeans(space: SharedSpace, k: int, seed: int) -> Clustering:
    """Lloyd's algorithm with kmeans++ initialization on the shared space."""
    V = space.vectors
    n = V.shape[0]
    if k < 1 or k > n:
        raise KTooLarge(f"k={k} outside [1, {n}]")

    rng = generator(seed)
    centroids = _kmeanspp_init(V, k, rng)
    history: list[float] = []
    prev: np.ndarray | None = None

    for _ in range(MAX_LLOYD_ITERS):
        d2 = 2.0 - 2.0 * (V @ centroids.T)
        assign = np.argmin(d2, axis=1)
        if prev is not None and np.array_equal(assign, prev):
            break
        centroids = _normalized_means(V, assign, k, centroids)
        assign, centroids = _repair_empty(V, assign, centroids, k)
        loss = float(np.sum(2.0 - 2.0 * np.einsum("ij,ij->i", V, centroids[assign])))
        history.append(loss)
        prev = assign

    assignment = prev.astype(np.int64)
    clusters = _build_clusters(space, assignment, list(range(k)), centroids)
    return Clustering(
        assignment=assignment,
        clusters=clusters,
        loss_history=LossHistory(kmeans=history),
    )


def kmeans_loss(space: SharedSpace, clustering: Clustering) -> float:
    """Sum of squared distances from each clustered row to its centroid."""
    total = 0.0
    for c in clustering.clusters:
        d2 = 2.0 - 2.0 * (space.vectors[c.member_indices] @ c.centroid)
        total += float(d2.sum())
    return total


def silhouette_score(space: SharedSpace, clustering: Clustering, index: int) -> float:
    """Silhouette of one row under cosine distance; singletons score 0."""
    n = len(space)
    if not 0 <= index < n:
        raise IndexOutOfRange(f"index {index} outside [0, {n})")
    cid = int(clustering.assignment[index])
    if cid == DISCARDED:
        raise IndexOutOfRange(f"row {index} is discarded")

    own = clustering.cluster_by_id(cid)
    if own.size == 1:
        return 0.0

    v = space.vectors[index]
    sample = _silhouette_sample(clustering)
    dists_own = 1.0 - space.vectors[own.member_indices] @ v
    a = float((dists_own.sum()) / (own.size - 1))  # self contributes 0

    b = np.inf
    for other in clustering.clusters:
        if other.id == cid:
            continue
        members = other.member_indices
        if sample is not None:
            members = members[np.isin(members, sample)]
            if members.size == 0:
                continue
        b = min(b, float(np.mean(1.0 - space.vectors[members] @ v)))
    if not np.isfinite(b):
        return 0.0
    m = max(a, b)
    return 0.0 if m <= 0.0 else (b - a) / m


def negative_silhouette_loss(space: SharedSpace, clustering: Clustering) -> float:
    """Negated mean silhouette over all clustered (non-discarded) rows."""
    active = np.nonzero(clustering.assignment != DISCARDED)[0]
    if active.size == 0:
        return 0.0
    ids = [c.id for c in clustering.clusters]
    if len(ids) == 1:
        return 0.0

    col_of = {cid: j for j, cid in enumerate(ids)}
    own_col = np.array([col_of[int(clustering.assignment[i])] for i in active])
    V = space.vectors[active]
    counts = np.bincount(own_col, minlength=len(ids)).astype(np.float64)

    sample = _silhouette_sample(clustering)
    if sample is None:
        b_pos = np.arange(active.size)
    else:
        b_pos = np.nonzero(np.isin(active, sample))[0]
    b_cols = own_col[b_pos]
    b_counts = np.bincount(b_cols, minlength=len(ids)).astype(np.float64)

    onehot_all = np.zeros((active.size, len(ids)))
    onehot_all[np.arange(active.size), own_col] = 1.0
    onehot_b = np.zeros((b_pos.size, len(ids)))
    onehot_b[np.arange(b_pos.size), b_cols] = 1.0

    S = np.zeros(active.size)
    block = 1024
    for start in range(0, active.size, block):
        stop = min(start + block, active.size)
        dist = 1.0 - V[start:stop] @ V.T
        own_sum = (dist @ onehot_all)[np.arange(stop - start), own_col[start:stop]]
        with np.errstate(divide="ignore", invalid="ignore"):
            a = own_sum / (counts[own_col[start:stop]] - 1.0)
            means = (dist[:, b_pos] @ onehot_b) / b_counts[None, :]
        means[np.arange(stop - start), own_col[start:stop]] = np.inf
        means[:, b_counts == 0] = np.inf
        b = means.min(axis=1)
        m = np.maximum(a, b)
        ok = (counts[own_col[start:stop]] > 1) & np.isfinite(b) & (m > 0)
        S[start:stop] = np.where(ok, (b - a) / np.where(m > 0, m, 1.0), 0.0)
    return float(-S.mean())


def refine_by_silhouette(space: SharedSpace, clustering: Clustering, iterations: int) -> Clustering:
    """Greedy single-point reassignment minimizing the global silhouette loss.

    Each pass visits rows in index order and moves a row to the cluster that
    lowers the loss most (staying put wins ties); a move that would empty a
    cluster is skipped.  Centroids are recomputed after every pass.
    """
    if iterations < 0:
        raise ValueError("iterations must be >= 0")
    if iterations == 0:
        return clustering

    active = np.nonzero(clustering.assignment != DISCARDED)[0]
    ids = [c.id for c in clustering.clusters]
    k = len(ids)
    new_assign = clustering.assignment.astype(np.int64).copy()
    history = list(clustering.loss_history.silhouette)

    if active.size == 0 or k == 1:
        # Nothing can move; record the (constant) loss per pass.
        L = negative_silhouette_loss(space, clustering)
        history.extend([L] * (iterations + 1))
        clusters = _build_clusters(space, new_assign, ids)
        return Clustering(new_assign, clusters, LossHistory(list(clustering.loss_history.kmeans), history))

    col_of = {cid: j for j, cid in enumerate(ids)}
    assign_c = np.array([col_of[int(a)] for a in new_assign[active]])
    V = space.vectors[active]
    D = 1.0 - V @ V.T
    np.fill_diagonal(D, 0.0)
    na = active.size
    ar = np.arange(na)

    counts = np.bincount(assign_c, minlength=k).astype(np.float64)
    SumD = D @ _onehot(assign_c, k)
    M = SumD / counts[None, :]
    L_cur = _sil_loss_from(SumD, M, counts, assign_c, ar)
    history.append(L_cur)

    for _ in range(iterations):
        for i in range(na):
            c1 = int(assign_c[i])
            if counts[c1] <= 1:
                continue  # sole member; moving would empty the cluster

            top_vals, top_cols = _row_mins(M, k)
            cand_loss = _candidate_losses(
                D, SumD, M, counts, assign_c, ar, i, c1, top_vals, top_cols
            )
            cand_loss[c1] = np.inf
            c2 = int(np.argmin(cand_loss))
            if cand_loss[c2] < L_cur - MOVE_MARGIN:
                SumD[:, c1] -= D[:, i]
                SumD[:, c2] += D[:, i]
                counts[c1] -= 1.0
                counts[c2] += 1.0
                assign_c[i] = c2
                M[:, c1] = SumD[:, c1] / counts[c1]
                M[:, c2] = SumD[:, c2] / counts[c2]
                L_cur = _sil_loss_from(SumD, M, counts, assign_c, ar)
        # Re-sync accumulators from scratch so rounding drift cannot build up.
        SumD = D @ _onehot(assign_c, k)
        M = SumD / counts[None, :]
        L_cur = _sil_loss_from(SumD, M, counts, assign_c, ar)
        history.append(L_cur)

    new_assign[active] = np.array(ids, dtype=np.int64)[assign_c]
    clusters = _build_clusters(space, new_assign, ids)
    return Clustering(
        assignment=new_assign,
        clusters=clusters,
        loss_history=LossHistory(list(clustering.loss_history.kmeans), history),
    )


def refine_clusters(space: SharedSpace, clustering: Clustering) -> Clustering:
    """Drop token-only clusters and re-home instances from instance-only ones.

    Discarded tokens stay discarded.  Instances of instance-only clusters move
    to the mixed cluster whose centroid is most cosine-similar; receiving
    centroids are recomputed afterwards.
    """
    token_only = [c for c in clustering.clusters if c.instance_count == 0]
    instance_only = [c for c in clustering.clusters if c.token_count == 0 and c.instance_count > 0]
    mixed = [c for c in clustering.clusters if c.token_count > 0 and c.instance_count > 0]
    if not mixed:
        raise NoMixedCluster("refinement requires at least one cluster with tokens and instances")

    new_assign = clustering.assignment.astype(np.int64).copy()
    for c in token_only:
        new_assign[c.member_indices] = DISCARDED

    mixed_ids = np.array([c.id for c in mixed], dtype=np.int64)
    mixed_centroids = np.stack([c.centroid for c in mixed])
    received = set()
    for c in instance_only:
        sims = space.vectors[c.member_indices] @ mixed_centroids.T
        target = np.argmax(sims, axis=1)  # ties resolve to the lowest cluster id
        new_assign[c.member_indices] = mixed_ids[target]
        received.update(int(t) for t in np.unique(target))

    clusters: list[Cluster] = []
    for j, c in enumerate(mixed):
        members = np.nonzero(new_assign == c.id)[0]
        if j in received:
            clusters.append(_make_cluster(space, c.id, members))
        else:
            clusters.append(Cluster(c.id, members, c.centroid, c.token_count, c.instance_count))
    return Clustering(
        assignment=new_assign,
        clusters=clusters,
        loss_history=clustering.loss_history,
    )


# --- internals ------------------------------------------------------------


def _kmeanspp_init(V: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = V.shape[0]
    centroids = np.empty((k, V.shape[1]))
    first = int(rng.integers(n))
    centroids[0] = V[first]
    d2 = np.sum((V - centroids[0]) ** 2, axis=1)
    for c in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            idx = int(rng.integers(n))  # all remaining points coincide
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centroids[c] = V[idx]
        d2 = np.minimum(d2, np.sum((V - centroids[c]) ** 2, axis=1))
    return centroids


def _normalized_means(V: np.ndarray, assign: np.ndarray, k: int, fallback: np.ndarray) -> np.ndarray:
    sums = np.zeros((k, V.shape[1]))
    np.add.at(sums, assign, V)
    counts = np.bincount(assign, minlength=k)
    out = fallback.copy()
    for c in range(k):
        if counts[c] == 0:
            continue
        mean = sums[c] / counts[c]
        norm = np.linalg.norm(mean)
        if norm >= _DEGENERATE_MEAN:
            out[c] = mean / norm
    return out


def _repair_empty(V: np.ndarray, assign: np.ndarray, centroids: np.ndarray, k: int):
    while True:
        counts = np.bincount(assign, minlength=k)
        empties = np.nonzero(counts == 0)[0]
        if empties.size == 0:
            return assign, centroids
        empty = int(empties[0])
        d2 = 2.0 - 2.0 * np.einsum("ij,ij->i", V, centroids[assign])
        d2[counts[assign] < 2] = -np.inf  # never empty another cluster
        victim = int(np.argmax(d2))
        src = int(assign[victim])
        assign = assign.copy()
        assign[victim] = empty
        centroids = centroids.copy()
        centroids[empty] = V[victim]
        members = np.nonzero(assign == src)[0]
        mean = V[members].mean(axis=0)
        norm = np.linalg.norm(mean)
        if norm >= _DEGENERATE_MEAN:
            centroids[src] = mean / norm


def _build_clusters(space: SharedSpace, assignment: np.ndarray, ids, centroids=None) -> list[Cluster]:
    clusters = []
    for j, cid in enumerate(ids):
        members = np.nonzero(assignment == cid)[0]
        if members.size == 0:
            raise EmptyCluster(f"cluster {cid} has no members")
        if centroids is None:
            clusters.append(_make_cluster(space, cid, members))
        else:
            tok = int(space.token_mask[members].sum())
            clusters.append(Cluster(cid, members, centroids[j].copy(), tok, members.size - tok))
    return clusters


def _make_cluster(space: SharedSpace, cid: int, members: np.ndarray) -> Cluster:
    mean = space.vectors[members].mean(axis=0)
    norm = np.linalg.norm(mean)
    if norm < _DEGENERATE_MEAN:
        raise EmptyCluster(f"cluster {cid} has a degenerate mean")
    tok = int(space.token_mask[members].sum())
    return Cluster(cid, members, mean / norm, tok, members.size - tok)


def _silhouette_sample(clustering: Clustering) -> np.ndarray | None:
    active = np.nonzero(clustering.assignment != DISCARDED)[0]
    if active.size <= SILHOUETTE_SAMPLE_THRESHOLD:
        return None
    rng = generator(_SILHOUETTE_SAMPLE_SEED)
    picked = rng.choice(active.size, size=SILHOUETTE_SAMPLE_SIZE, replace=False)
    return np.sort(active[picked])


def _onehot(cols: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros((cols.size, k))
    out[np.arange(cols.size), cols] = 1.0
    return out


def _sil_loss_from(SumD, M, counts, assign_c, ar) -> float:
    own = assign_c
    means = M.copy()
    means[ar, own] = np.inf
    with np.errstate(divide="ignore", invalid="ignore"):
        a = SumD[ar, own] / (counts[own] - 1.0)
        b = means.min(axis=1)
        m = np.maximum(a, b)
        ok = (counts[own] > 1) & np.isfinite(b) & (m > 0)
        S = np.where(ok, (b - a) / np.where(m > 0, m, 1.0), 0.0)
    return float(-S.mean())


def _row_mins(M: np.ndarray, k: int):
    """Indices/values of each row's four smallest entries (all, if k < 4)."""
    take = min(4, k)
    cols = np.argpartition(M, take - 1, axis=1)[:, :take]
    vals = np.take_along_axis(M, cols, axis=1)
    return vals, cols


def _candidate_losses(D, SumD, M, counts, assign_c, ar, i, c1, top_vals, top_cols):
    """Loss of moving row i from cluster c1 to every other cluster, exactly.

    Only columns c1 and c2 of the per-row cluster-mean matrix change under a
    move, so each row's new b value is the min of (a) the smallest unchanged
    column, found among its four smallest entries, and (b) the two replaced
    columns.
    """
    na, k = M.shape
    di = D[:, i]
    cnt1 = counts[c1]
    own = assign_c

    with np.errstate(divide="ignore", invalid="ignore"):
        mean1 = (SumD[:, c1] - di) / (cnt1 - 1.0)          # column c1 after i leaves
        mean2 = (SumD + di[:, None]) / (counts[None, :] + 1.0)  # column c2 after i joins
        a_shrunk = (SumD[:, c1] - di) / (cnt1 - 2.0)
        a_gain = (SumD[ar, own] + di) / counts[own]
        a_cur = SumD[ar, own] / (counts[own] - 1.0)

    in_c1 = own == c1

    # a under each candidate destination.
    a_mat = np.repeat(a_cur[:, None], k, axis=1)
    a_mat[in_c1, :] = a_shrunk[in_c1, None]
    a_mat[ar, own] = a_gain
    a_mat[i, :] = SumD[i, :] / counts

    # b: smallest unchanged column, excluding own/c1/c2.
    cand = np.arange(k)
    excl = (
        (top_cols[:, None, :] == own[:, None, None])
        | (top_cols[:, None, :] == c1)
        | (top_cols[:, None, :] == cand[None, :, None])
    )
    base = np.where(excl, np.inf, top_vals[:, None, :]).min(axis=2)

    v1 = np.where(in_c1, np.inf, mean1)[:, None]
    v1 = np.broadcast_to(v1, (na, k))
    v2 = np.where(own[:, None] == cand[None, :], np.inf, mean2)
    v2 = v2.copy()
    v2[i, :] = np.inf  # row i's own column under candidate c2 is c2 itself
    b_mat = np.minimum(base, np.minimum(v1, v2))

    # Row i: a/b computed against its destination cluster.
    b_row_i = np.minimum(base[i], mean1[i])
    b_mat[i, :] = b_row_i

    m = np.maximum(a_mat, b_mat)
    with np.errstate(invalid="ignore"):
        S = np.where(np.isfinite(b_mat) & (m > 0), (b_mat - a_mat) / np.where(m > 0, m, 1.0), 0.0)

    # Singletons score 0: current singletons that do not gain i, and the
    # remaining member of a two-point cluster i is leaving.
    sing_now = counts[own] == 1.0
    S[sing_now[:, None] & (cand[None, :] != own[:, None])] = 0.0
    if cnt1 == 2.0:
        S[in_c1 & (ar != i), :] = 0.0

    return -S.mean(axis=0)
