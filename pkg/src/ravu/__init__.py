"""RAVU: retrieval-augmented video understanding over spatio-temporal graphs."""

from .backends import MockBackend, PromptBundle, RemoteBackend
from .config import RavuConfig, load_config
from .errors import (
    BackendError,
    BlockedContent,
    EmptyIndex,
    MalformedResponse,
    NotFound,
    ParseError,
    RavuError,
    Timeout,
)
from .evaluate import (
    VideoAssets,
    answer_question,
    build_video,
    eval_localization,
    eval_qa,
)
from .graph_builder import build_graph, embed_graph, read_embeddings, write_embeddings
from .graph_model import (
    BoundingBox,
    EntityEvent,
    EntityNode,
    FrameRecord,
    RelationEdge,
    SpatioTemporalGraph,
    deserialize,
    serialize,
    validate,
)
from .index import Candidate, EmbeddingIndex, LocalizeResult
from .ingestion import associate, parse_observations, parse_tracklets
from .plan import ReasoningPlan, ReasoningStep, parse_plan, render
from .reasoning import breakdown, execute, hierarchical_retrieve, uniform_sample
from .synth import make_corpus, synth_world

__version__ = "0.1.0"

__all__ = [
    "BackendError",
    "BlockedContent",
    "BoundingBox",
    "Candidate",
    "EmbeddingIndex",
    "EmptyIndex",
    "EntityEvent",
    "EntityNode",
    "FrameRecord",
    "LocalizeResult",
    "MalformedResponse",
    "MockBackend",
    "NotFound",
    "ParseError",
    "PromptBundle",
    "RavuConfig",
    "RavuError",
    "ReasoningPlan",
    "ReasoningStep",
    "RelationEdge",
    "RemoteBackend",
    "SpatioTemporalGraph",
    "Timeout",
    "VideoAssets",
    "answer_question",
    "associate",
    "breakdown",
    "build_graph",
    "build_video",
    "deserialize",
    "embed_graph",
    "eval_localization",
    "eval_qa",
    "execute",
    "hierarchical_retrieve",
    "load_config",
    "make_corpus",
    "parse_observations",
    "parse_plan",
    "parse_tracklets",
    "read_embeddings",
    "render",
    "serialize",
    "synth_world",
    "uniform_sample",
    "validate",
    "write_embeddings",
]
