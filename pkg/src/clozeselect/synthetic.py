"""Synthetic mixture corpora with known gold labels and planted verbalizers.

Class means sit on a common sphere whose radius is chosen so the mean
pairwise distance between means equals ``class_separation`` instance
standard deviations.  Instances are isotropic Gaussians around their class
mean; per-class tokens are tighter draws around the same mean (so a good
session can recover them as verbalizers); outlier tokens point far away from
every class so downstream refinement has token-only clusters to discard.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .embed_io import EmbeddingSet, InstanceText, SetKind, make_embedding_set
from .errors import InfeasibleSpec
from .seeding import substream

# Token scatter around the class mean, in instance-std units (must stay < 1).
TOKEN_SPREAD = 0.6
_MIN_DIRECTION_CHORD = 0.05
_MAX_DIRECTION_TRIES = 100
_OUTLIER_MAX_COS = 0.5


@dataclass(frozen=True)
class MixtureSpec:
    n_classes: int
    instances_per_class: int
    tokens_per_class: int
    outlier_tokens: int
    dim: int
    class_separation: float
    seed: int

    def __post_init__(self):
        if self.n_classes < 0:
            raise InfeasibleSpec("n_classes must be >= 0")
        if self.n_classes > 0 and self.instances_per_class < 1:
            raise InfeasibleSpec("need at least one instance per class")
        if self.tokens_per_class < 0 or self.outlier_tokens < 0:
            raise InfeasibleSpec("token counts must be >= 0")
        if self.dim < 2:
            raise InfeasibleSpec("dim must be >= 2")
        if self.class_separation < 0:
            raise InfeasibleSpec("class_separation must be >= 0")

    def class_name(self, i: int) -> str:
        return f"class_{i}"

    @property
    def label_space(self) -> tuple[str, ...]:
        return tuple(self.class_name(i) for i in range(self.n_classes))


@dataclass(eq=False)
class SyntheticCorpus:
    vocab: EmbeddingSet
    instances: EmbeddingSet
    gold: dict[str, str]
    planted: dict[str, list[str]]
    texts: list[InstanceText]


def generate(spec: MixtureSpec) -> SyntheticCorpus:
    means, dirs = _class_means(spec)

    rng_inst = substream(spec.seed, "instances")
    inst_rows = []
    gold: dict[str, str] = {}
    texts: list[InstanceText] = []
    inst_ids: list[str] = []
    n = 0
    for ci in range(spec.n_classes):
        for _ in range(spec.instances_per_class):
            inst_rows.append(means[ci] + rng_inst.standard_normal(spec.dim))
            ident = f"i{n:05d}"
            inst_ids.append(ident)
            gold[ident] = spec.class_name(ci)
            texts.append(InstanceText(id=ident, text=f"synthetic item {ident}"))
            n += 1

    rng_tok = substream(spec.seed, "tokens")
    tok_rows = []
    tok_ids: list[str] = []
    planted: dict[str, list[str]] = {spec.class_name(ci): [] for ci in range(spec.n_classes)}
    for ci in range(spec.n_classes):
        for j in range(spec.tokens_per_class):
            tok_rows.append(means[ci] + TOKEN_SPREAD * rng_tok.standard_normal(spec.dim))
            ident = f"t_c{ci}_{j}"
            tok_ids.append(ident)
            planted[spec.class_name(ci)].append(ident)

    rng_out = substream(spec.seed, "outliers")
    radius = (float(np.linalg.norm(means, axis=1).max()) if spec.n_classes else 0.0) \
        + 4.0 + spec.class_separation
    for j in range(spec.outlier_tokens):
        tok_rows.append(radius * _outlier_direction(rng_out, dirs, spec.dim))
        tok_ids.append(f"t_out_{j}")

    dim = spec.dim
    vocab = make_embedding_set(
        SetKind.VOCAB, tok_ids,
        np.array(tok_rows, dtype=np.float64).reshape(len(tok_ids), dim).astype(np.float32),
    )
    instances = make_embedding_set(
        SetKind.INSTANCE, inst_ids,
        np.array(inst_rows, dtype=np.float64).reshape(len(inst_ids), dim).astype(np.float32),
    )
    return SyntheticCorpus(vocab=vocab, instances=instances, gold=gold, planted=planted, texts=texts)


def generate_test_instances(spec: MixtureSpec, per_class: int) -> tuple[EmbeddingSet, dict[str, str]]:
    """Extra instances from the same class means, on an independent stream."""
    if per_class < 0:
        raise InfeasibleSpec("per_class must be >= 0")
    means, _ = _class_means(spec)
    rng = substream(spec.seed, "test")
    rows = []
    gold: dict[str, str] = {}
    ids: list[str] = []
    n = 0
    for ci in range(spec.n_classes):
        for _ in range(per_class):
            rows.append(means[ci] + rng.standard_normal(spec.dim))
            ident = f"q{n:05d}"
            ids.append(ident)
            gold[ident] = spec.class_name(ci)
            n += 1
    matrix = np.array(rows, dtype=np.float64).reshape(len(ids), spec.dim).astype(np.float32)
    return make_embedding_set(SetKind.INSTANCE, ids, matrix), gold


def _class_means(spec: MixtureSpec) -> tuple[np.ndarray, np.ndarray]:
    rng = substream(spec.seed, "means")
    if spec.n_classes == 0:
        empty = np.zeros((0, spec.dim))
        return empty, empty

    dirs = None
    for _ in range(_MAX_DIRECTION_TRIES):
        cand = rng.standard_normal((spec.n_classes, spec.dim))
        norms = np.linalg.norm(cand, axis=1)
        if (norms < 1e-9).any():
            continue
        cand /= norms[:, None]
        if spec.n_classes == 1 or _min_pairwise_chord(cand) >= _MIN_DIRECTION_CHORD:
            dirs = cand
            break
    if dirs is None:
        raise InfeasibleSpec(
            f"could not place {spec.n_classes} class directions in {spec.dim} dimensions"
        )

    if spec.n_classes == 1:
        scale = spec.class_separation
    else:
        diffs = dirs[:, None, :] - dirs[None, :, :]
        dists = np.linalg.norm(diffs, axis=2)
        mean_chord = float(dists[np.triu_indices(spec.n_classes, k=1)].mean())
        scale = spec.class_separation / mean_chord
    return dirs * scale, dirs


def _min_pairwise_chord(dirs: np.ndarray) -> float:
    diffs = dirs[:, None, :] - dirs[None, :, :]
    dists = np.linalg.norm(diffs, axis=2)
    return float(dists[np.triu_indices(dirs.shape[0], k=1)].min())


def _outlier_direction(rng: np.random.Generator, class_dirs: np.ndarray, dim: int) -> np.ndarray:
    best, best_cos = None, np.inf
    for _ in range(50):
        v = rng.standard_normal(dim)
        norm = np.linalg.norm(v)
        if norm < 1e-9:
            continue
        v /= norm
        worst = float(np.abs(class_dirs @ v).max()) if class_dirs.size else 0.0
        if worst < best_cos:
            best, best_cos = v, worst
        if worst <= _OUTLIER_MAX_COS:
            return v
    return best
