"""On-disk artifacts produced by `prepare` and consumed by later commands.

Three JSON files: the reduced space (items + vectors), the PCA model, and
the clustering dump.  Floats are serialized with Python's shortest-repr,
which round-trips float64 exactly, so reload is bit-faithful and reruns on
identical inputs produce hash-identical files.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .clustering import DISCARDED, Cluster, Clustering, LossHistory
from .errors import DataError, IoFailure
from .geometry import ItemKind, ItemRef, PcaModel, SharedSpace

SPACE_FILE = "space.json"
PCA_FILE = "pca.json"
CLUSTERING_FILE = "clustering.json"
MANIFEST_FILE = "manifest.json"


def clustering_dump(space: SharedSpace, clustering: Clustering) -> dict:
    discarded = np.nonzero(clustering.assignment == DISCARDED)[0]
    return {
        "clusters": [
            {
                "id": c.id,
                "member_ids": [space.id_of(int(r)) for r in c.member_indices],
                "member_rows": [int(r) for r in c.member_indices],
                "centroid": [float(x) for x in c.centroid],
                "token_count": c.token_count,
                "instance_count": c.instance_count,
            }
            for c in clustering.clusters
        ],
        "discarded": [space.id_of(int(r)) for r in discarded],
        "discarded_rows": [int(r) for r in discarded],
        "loss_history": {
            "kmeans": list(clustering.loss_history.kmeans),
            "silhouette": list(clustering.loss_history.silhouette),
        },
    }


def space_dump(space: SharedSpace) -> dict:
    return {
        "reduced_dim": space.reduced_dim,
        "items": [{"kind": it.kind.value, "id": it.id} for it in space.items],
        "vectors": [[float(x) for x in row] for row in space.vectors],
    }


def pca_dump(model: PcaModel) -> dict:
    return {
        "mean": [float(x) for x in model.mean],
        "components": [[float(x) for x in row] for row in model.components],
        "explained_variance": [float(x) for x in model.explained_variance],
        "rank_deficient": model.rank_deficient,
    }


def write_prepared(directory, space: SharedSpace, clustering: Clustering) -> dict:
    """Write the three artifacts plus a manifest of their content hashes."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    blobs = {
        SPACE_FILE: _to_json(space_dump(space)),
        PCA_FILE: _to_json(pca_dump(space.pca_model)),
        CLUSTERING_FILE: _to_json(clustering_dump(space, clustering)),
    }
    manifest = {"artifacts": {name: hashlib.sha256(blob).hexdigest() for name, blob in blobs.items()}}
    blobs[MANIFEST_FILE] = _to_json(manifest)
    try:
        for name, blob in blobs.items():
            (directory / name).write_bytes(blob)
    except OSError as exc:
        raise IoFailure(f"cannot write artifacts under {directory}: {exc}") from exc
    return manifest


def load_prepared(directory) -> tuple[SharedSpace, Clustering]:
    directory = Path(directory)
    space_doc = _read_json(directory / SPACE_FILE)
    pca_doc = _read_json(directory / PCA_FILE)
    clus_doc = _read_json(directory / CLUSTERING_FILE)

    model = PcaModel(
        mean=np.array(pca_doc["mean"], dtype=np.float64),
        components=np.array(pca_doc["components"], dtype=np.float64),
        explained_variance=np.array(pca_doc["explained_variance"], dtype=np.float64),
        rank_deficient=bool(pca_doc["rank_deficient"]),
    )
    items = tuple(
        ItemRef(index=i, kind=ItemKind(doc["kind"]), id=doc["id"])
        for i, doc in enumerate(space_doc["items"])
    )
    vectors = np.array(space_doc["vectors"], dtype=np.float64).reshape(len(items), space_doc["reduced_dim"])
    space = SharedSpace(items=items, vectors=vectors, pca_model=model)

    assignment = np.full(len(items), DISCARDED, dtype=np.int64)
    clusters: list[Cluster] = []
    for cdoc in clus_doc["clusters"]:
        members = np.array(cdoc["member_rows"], dtype=np.int64)
        assignment[members] = cdoc["id"]
        clusters.append(Cluster(
            id=int(cdoc["id"]),
            member_indices=members,
            centroid=np.array(cdoc["centroid"], dtype=np.float64),
            token_count=int(cdoc["token_count"]),
            instance_count=int(cdoc["instance_count"]),
        ))
    covered = int(sum(len(c.member_indices) for c in clusters)) + len(clus_doc["discarded_rows"])
    if covered != len(items):
        raise DataError(f"{directory}: clustering covers {covered} of {len(items)} rows")
    history = LossHistory(
        kmeans=list(clus_doc["loss_history"]["kmeans"]),
        silhouette=list(clus_doc["loss_history"]["silhouette"]),
    )
    return space, Clustering(assignment=assignment, clusters=clusters, loss_history=history)


def _to_json(obj) -> bytes:
    return (json.dumps(obj, ensure_ascii=True, sort_keys=True, indent=2) + "\n").encode("utf-8")


def _read_json(path: Path):
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from exc
