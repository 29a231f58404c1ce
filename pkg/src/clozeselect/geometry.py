"""Shared geometric space: PCA reduction and L2 normalization.

Vocabulary-token rows and instance rows are stacked (tokens first), reduced
with a single PCA fit, and each row is normalized to unit length so that
dot products downstream are cosine similarities.

Two fitting paths exist: an exact covariance eigendecomposition (used up to
1024 input dimensions) and power iteration with deflation for wider inputs.
Both honor the same sign convention so results are reproducible: the first
nonzero coordinate of every component is made positive.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .embed_io import EmbeddingSet, SetKind
from .errors import (
    DegenerateRow,
    DimensionMismatch,
    DimensionTooLarge,
    NonFiniteValue,
    ZeroNormVector,
)

# Widest input handled by the exact eigendecomposition path.
EXACT_EIG_MAX_DIM = 1024
POWER_MAX_ITER = 1000
POWER_TOL = 1e-10
DEGENERATE_NORM = 1e-12


class ItemKind(str, enum.Enum):
    TOKEN = "token"
    INSTANCE = "instance"


@dataclass(frozen=True)
class ItemRef:
    index: int
    kind: ItemKind
    id: str


@dataclass(eq=False)
class PcaModel:
    """Mean vector plus orthonormal components, descending variance."""

    mean: np.ndarray              # (dim,)
    components: np.ndarray        # (reduced_dim, dim), rows orthonormal
    explained_variance: np.ndarray  # (reduced_dim,), non-increasing
    rank_deficient: bool = False

    @property
    def reduced_dim(self) -> int:
        return self.components.shape[0]

    @property
    def input_dim(self) -> int:
        return self.components.shape[1]


class SharedSpace:
    """Reduced, unit-normalized vectors for tokens and instances together."""

    def __init__(self, items: tuple[ItemRef, ...], vectors: np.ndarray, pca_model: PcaModel):
        self.items = items
        self.vectors = vectors
        self.vectors.flags.writeable = False
        self.pca_model = pca_model
        self.reduced_dim = vectors.shape[1]
        kinds = np.array([it.kind == ItemKind.TOKEN for it in items], dtype=bool)
        self.token_mask = kinds
        self.token_rows = np.nonzero(kinds)[0]
        self.instance_rows = np.nonzero(~kinds)[0]
        self._row_of = {(it.kind, it.id): it.index for it in items}

    def __len__(self) -> int:
        return len(self.items)

    def row_of(self, kind: ItemKind, item_id: str) -> int:
        return self._row_of[(kind, item_id)]

    def id_of(self, row: int) -> str:
        return self.items[row].id


def cosine_similarity(a, b) -> float:
    """Cosine of the angle between two vectors, clamped to [-1, 1]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ZeroNormVector("cosine similarity undefined for zero-norm vector")
    return float(np.clip(float(a @ b) / (na * nb), -1.0, 1.0))


def fit_pca(stacked, reduced_dim: int, method: str = "auto") -> PcaModel:
    """Fit PCA on the row-stacked data.

    ``method`` is "auto" (exact up to EXACT_EIG_MAX_DIM columns, power
    iteration beyond), or explicitly "exact" / "power".
    """
    X = np.asarray(stacked, dtype=np.float64)
    if X.ndim != 2:
        raise DimensionMismatch(f"expected 2-d input, got shape {X.shape}")
    n, d = X.shape
    if reduced_dim < 1 or reduced_dim > d or reduced_dim > n:
        raise DimensionTooLarge(
            f"reduced_dim {reduced_dim} not in [1, min(rows={n}, dim={d})]"
        )
    if not np.isfinite(X).all():
        raise NonFiniteValue(int(np.argmin(np.isfinite(X).all(axis=1))))

    mean = X.mean(axis=0)
    Xc = X - mean
    denom = max(n - 1, 1)

    if method == "auto":
        method = "exact" if d <= EXACT_EIG_MAX_DIM else "power"
    if method == "exact":
        cov = (Xc.T @ Xc) / denom
        eigvals, eigvecs = np.linalg.eigh(cov)
        order = np.argsort(-eigvals, kind="mergesort")[:reduced_dim]
        variance = np.maximum(eigvals[order], 0.0)
        components = eigvecs[:, order].T.copy()
        top_eig = float(eigvals[-1]) if n > 1 else 0.0
    elif method == "power":
        components, variance = _power_iteration(Xc, reduced_dim, denom)
        top_eig = float(variance[0]) if reduced_dim else 0.0
    else:
        raise ValueError(f"unknown method {method!r}")

    _fix_signs(components)
    tol = max(n, d) * np.finfo(np.float64).eps * max(top_eig, 0.0)
    rank_deficient = bool(np.sum(variance > tol) < reduced_dim)
    return PcaModel(
        mean=mean,
        components=np.ascontiguousarray(components),
        explained_variance=np.ascontiguousarray(variance),
        rank_deficient=rank_deficient,
    )


def transform(model: PcaModel, rows) -> np.ndarray:
    """Project rows into the reduced space (no normalization)."""
    R = np.asarray(rows, dtype=np.float64)
    squeeze = False
    if R.ndim == 1:
        R = R[None, :]
        squeeze = True
    if R.shape[1] != model.input_dim:
        raise DimensionMismatch(f"rows have {R.shape[1]} columns, model expects {model.input_dim}")
    Z = (R - model.mean) @ model.components.T
    return Z[0] if squeeze else Z


def build_shared_space(vocab: EmbeddingSet, instances: EmbeddingSet, reduced_dim: int) -> SharedSpace:
    """Joint fit: stack tokens then instances, reduce, unit-normalize rows."""
    if vocab.kind != SetKind.VOCAB or instances.kind != SetKind.INSTANCE:
        raise ValueError("build_shared_space expects (vocab, instance) sets in that order")
    if vocab.dim != instances.dim:
        raise DimensionMismatch(f"vocab dim {vocab.dim} != instance dim {instances.dim}")

    stacked = np.vstack([
        vocab.matrix.astype(np.float64, copy=False),
        instances.matrix.astype(np.float64, copy=False),
    ]) if (vocab.count or instances.count) else np.zeros((0, vocab.dim))
    model = fit_pca(stacked, reduced_dim)
    reduced = transform(model, stacked)

    items: list[ItemRef] = []
    for i, ident in enumerate(vocab.ids):
        items.append(ItemRef(index=i, kind=ItemKind.TOKEN, id=ident))
    for j, ident in enumerate(instances.ids):
        items.append(ItemRef(index=vocab.count + j, kind=ItemKind.INSTANCE, id=ident))

    norms = np.linalg.norm(reduced, axis=1)
    low = np.nonzero(norms < DEGENERATE_NORM)[0]
    if low.size:
        bad = items[int(low[0])]
        raise DegenerateRow(f"{bad.kind.value} {bad.id!r} has norm {norms[int(low[0])]:.3e} after reduction")
    vectors = reduced / norms[:, None]
    return SharedSpace(items=tuple(items), vectors=vectors, pca_model=model)


def _fix_signs(components: np.ndarray) -> None:
    for row in components:
        nz = np.nonzero(row)[0]
        if nz.size and row[nz[0]] < 0:
            np.negative(row, out=row)


def _power_iteration(Xc: np.ndarray, reduced_dim: int, denom: int):
    """Top eigenpairs of Xc.T @ Xc / denom, matrix-free with deflation."""
    d = Xc.shape[1]
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([0x9E3779B9])))
    comps = np.zeros((reduced_dim, d))
    vals = np.zeros(reduced_dim)

    def apply_cov(v: np.ndarray) -> np.ndarray:
        w = Xc.T @ (Xc @ v) / denom
        for i in range(found):
            w -= vals[i] * (comps[i] @ v) * comps[i]
        return w

    found = 0
    for r in range(reduced_dim):
        v = rng.standard_normal(d)
        for i in range(found):  # start orthogonal to what we already have
            v -= (comps[i] @ v) * comps[i]
        nv = np.linalg.norm(v)
        v = v / nv if nv > 0 else np.eye(d)[r % d]
        lam = 0.0
        for _ in range(POWER_MAX_ITER):
            w = apply_cov(v)
            nw = np.linalg.norm(w)
            if nw < DEGENERATE_NORM:
                lam = 0.0
                break
            w /= nw
            if w @ v < 0:  # align to avoid sign flapping in the test below
                w = -w
            delta = np.linalg.norm(w - v)
            v = w
            lam = float(v @ apply_cov(v))
            if delta < POWER_TOL:
                break
        comps[r] = v
        vals[r] = max(lam, 0.0)
        found = r + 1
    return comps, vals
