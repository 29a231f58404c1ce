"""Joint selection of annotation instances and verbalizer tokens on a budget."""

__version__ = "0.1.0"

from .embed_io import EmbeddingSet, SetKind, load_embedding_set, write_embedding_set
from .geometry import SharedSpace, build_shared_space
from .clustering import Clustering, kmeans, refine_by_silhouette, refine_clusters
from .selection import SessionConfig, run_session
from .verbalizer_eval import evaluate

__all__ = [
    "EmbeddingSet",
    "SetKind",
    "load_embedding_set",
    "write_embedding_set",
    "SharedSpace",
    "build_shared_space",
    "Clustering",
    "kmeans",
    "refine_by_silhouette",
    "refine_clusters",
    "SessionConfig",
    "run_session",
    "evaluate",
    "__version__",
]
