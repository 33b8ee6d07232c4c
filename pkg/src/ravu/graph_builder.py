"""Build the full graph from associated observations via backend calls.

Stages: per-frame relation edges, per-node descriptions, node embeddings,
and per-entity event segmentation. Each stage is deterministic under the
mock backend; results are keyed and sorted canonically so completion order
never affects the output.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import backends
from .backends import generate_with_retries, make_bundle
from .errors import BackendError, MalformedResponse, ParseError
from .graph_model import (
    EntityEvent,
    EntityNode,
    FrameRecord,
    RelationEdge,
    SpatioTemporalGraph,
    entity_timeline,
    node_edges,
)


@dataclass
class EmbeddingRecord:
    """One node's description text and its unit-norm embedding vector."""

    entity_id: int
    frame_index: int
    description: str
    vector: np.ndarray

    def __eq__(self, other):
        return (
            isinstance(other, EmbeddingRecord)
            and self.entity_id == other.entity_id
            and self.frame_index == other.frame_index
            and self.description == other.description
            and np.array_equal(self.vector, other.vector)
        )


@dataclass
class EventSegmentation:
    events: list[EntityEvent]
    fallback: bool = False


@dataclass
class BuildReport:
    dropped_edge_lines: int = 0
    fallback_entities: list[int] = field(default_factory=list)


_TRIPLE_SPLIT = "|"


def _parse_edge_lines(text: str) -> tuple[list[tuple[int, str, int]], int]:
    """Return (parsed triples, count of unparseable non-empty lines)."""
    triples = []
    bad = 0
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        parts = line.split(_TRIPLE_SPLIT)
        if len(parts) != 3:
            bad += 1
            continue
        try:
            subject = int(parts[0].strip())
            obj = int(parts[2].strip())
        except ValueError:
            bad += 1
            continue
        relation = parts[1].strip()
        if not relation:
            bad += 1
            continue
        triples.append((subject, relation, obj))
    return triples, bad


def _has_comention(description: str) -> bool:
    import re

    for sentence in re.split(r"[.!?]", description):
        if len(re.findall(r"\[E\d+\]", sentence)) >= 2:
            return True
    return False


def build_frame_graph(
    frame: FrameRecord,
    nodes_in_frame: list[EntityNode],
    backend,
    max_retries: int = 2,
) -> tuple[list[RelationEdge], int]:
    """Relation edges for one frame, plus the count of dropped lines.

    Backend output is parsed as ``subject|relation|object`` triple lines;
    lines that fail to parse or reference entities absent from the frame
    are dropped and counted. Node attributes are never touched here.
    """
    present = {n.entity_id for n in nodes_in_frame}
    payload = backends.frame_graph_payload(
        frame.frame_index, sorted(present), frame.description
    )
    bundle = make_bundle("frame_graph", payload)

    attempts = max(1, max_retries)
    text = ""
    for attempt in range(attempts):
        text = backend.generate(bundle)
        triples, _ = _parse_edge_lines(text)
        if triples or not _has_comention(frame.description):
            break
        if attempt == attempts - 1:
            raise MalformedResponse(
                f"no parseable edges for frame {frame.frame_index} despite co-mentioned entities"
            )

    triples, bad = _parse_edge_lines(text)
    edges = []
    dropped = bad
    for subject, relation, obj in triples:
        if subject not in present or obj not in present or subject == obj:
            dropped += 1
            continue
        edges.append(
            RelationEdge(
                frame_index=frame.frame_index,
                subject_id=subject,
                relation=relation,
                object_id=obj,
            )
        )
    return edges, dropped


def describe_node(node: EntityNode, edges: list[RelationEdge], backend, max_retries: int = 2) -> str:
    """One-sentence node description covering attributes and relations."""
    payload = backends.node_description_payload(node.entity_id, node.attributes, edges)
    bundle = make_bundle("node_description", payload)

    def parse(text: str) -> str:
        text = text.strip()
        if not text:
            raise ValueError("empty description")
        return text

    return generate_with_retries(backend, bundle, parse, max_retries)


def embed_graph(graph: SpatioTemporalGraph, backend) -> list[EmbeddingRecord]:
    """One embedding record per node; all nodes must be described first."""
    records = []
    for node in sorted(graph.nodes, key=lambda n: (n.frame_index, n.entity_id)):
        if not node.description:
            raise ValueError(
                f"node entity {node.entity_id} frame {node.frame_index} has no description"
            )
        try:
            vector = backend.embed(node.description)
        except BackendError as exc:
            raise type(exc)(
                f"embedding entity {node.entity_id} frame {node.frame_index}: {exc}"
            ) from exc
        records.append(
            EmbeddingRecord(
                entity_id=node.entity_id,
                frame_index=node.frame_index,
                description=node.description,
                vector=np.asarray(vector, dtype=np.float64),
            )
        )
    return records


def _appearance_runs(nodes: list[EntityNode]) -> list[list[EntityNode]]:
    runs: list[list[EntityNode]] = []
    for node in nodes:
        if runs and node.frame_index == runs[-1][-1].frame_index + 1:
            runs[-1].append(node)
        else:
            runs.append([node])
    return runs


def segment_events(
    graph: SpatioTemporalGraph, entity_id: int, backend, max_retries: int = 2
) -> EventSegmentation:
    """Chunk one entity's frames into events via the backend.

    Absence gaps always force an event boundary, so the backend is called
    once per maximal contiguous appearance run. If a run's response fails
    the event invariants after retries, that run falls back to a single
    event summarized by its first frame's description, and the result is
    flagged.
    """
    nodes = entity_timeline(graph, entity_id)
    events: list[EntityEvent] = []
    fallback = False

    for run in _appearance_runs(nodes):
        run_frames = [n.frame_index for n in run]
        rows = [
            (n.frame_index, n.attributes.get("action", ""), n.description or "")
            for n in run
        ]
        payload = backends.event_segmentation_payload(entity_id, rows)
        bundle = make_bundle("event_segmentation", payload)

        def parse(text: str, run_frames=run_frames) -> list[EntityEvent]:
            spans = []
            for line in text.splitlines():
                line = line.strip()
                if not line:
                    continue
                parts = line.split("|", 2)
                if len(parts) != 3:
                    raise ValueError(f"bad event line {line!r}")
                start, end, summary = int(parts[0]), int(parts[1]), parts[2].strip()
                if not summary:
                    raise ValueError("empty event summary")
                spans.append(EntityEvent(entity_id, start, end, summary))
            covered: list[int] = []
            for ev in spans:
                if ev.start_frame > ev.end_frame:
                    raise ValueError("inverted event span")
                covered.extend(range(ev.start_frame, ev.end_frame + 1))
            if covered != run_frames:
                raise ValueError("events do not exactly cover the appearance run")
            return spans

        try:
            events.extend(generate_with_retries(backend, bundle, parse, max_retries))
        except MalformedResponse:
            first = run[0]
            summary = first.description or first.attributes.get("action", "") or f"entity {entity_id}"
            events.append(EntityEvent(entity_id, run_frames[0], run_frames[-1], summary))
            fallback = True

    return EventSegmentation(events=events, fallback=fallback)


def build_graph(
    frames: list[FrameRecord],
    nodes: list[EntityNode],
    backend,
    fps: float = 1.0,
    max_retries: int = 2,
    segment: bool = True,
) -> tuple[SpatioTemporalGraph, BuildReport]:
    """Full build: edges, descriptions, and (optionally) events."""
    graph = SpatioTemporalGraph(frames=list(frames), nodes=list(nodes), fps=fps)
    report = BuildReport()

    all_edges: list[RelationEdge] = []
    for frame in graph.frames:
        in_frame = graph.nodes_in_frame(frame.frame_index)
        if not in_frame:
            continue
        edges, dropped = build_frame_graph(frame, in_frame, backend, max_retries)
        all_edges.extend(edges)
        report.dropped_edge_lines += dropped
    all_edges.sort(key=lambda e: (e.frame_index, e.subject_id, e.object_id, e.relation))
    graph.edges = all_edges

    for node in graph.nodes:
        edges = node_edges(graph, node.entity_id, node.frame_index)
        node.description = describe_node(node, edges, backend, max_retries)

    if segment:
        for entity_id in graph.entity_ids():
            seg = segment_events(graph, entity_id, backend, max_retries)
            graph.events[entity_id] = seg.events
            if seg.fallback:
                report.fallback_entities.append(entity_id)

    return graph, report


# ---------------------------------------------------------------------------
# Embedding persistence: embeddings.bin + embeddings.index.jsonl

_MAGIC = struct.Struct("<II")  # dimension, count


def write_embeddings(records: list[EmbeddingRecord], bin_path: str | Path, index_path: str | Path) -> None:
    dim = records[0].vector.shape[0] if records else 0
    with open(bin_path, "wb") as fh:
        fh.write(_MAGIC.pack(dim, len(records)))
        for rec in records:
            fh.write(np.asarray(rec.vector, dtype="<f4").tobytes())
    with open(index_path, "w") as fh:
        for row, rec in enumerate(records):
            fh.write(
                json.dumps(
                    {"row": row, "entity_id": rec.entity_id, "frame_index": rec.frame_index},
                    sort_keys=True,
                )
                + "\n"
            )


def read_embeddings(
    bin_path: str | Path, index_path: str | Path, graph: SpatioTemporalGraph | None = None
) -> list[EmbeddingRecord]:
    """Load records; descriptions are restored from ``graph`` when given."""
    raw = Path(bin_path).read_bytes()
    if len(raw) < _MAGIC.size:
        raise ParseError("embeddings file too short for header", field="header")
    dim, count = _MAGIC.unpack_from(raw)
    expected = _MAGIC.size + 4 * dim * count
    if len(raw) != expected:
        raise ParseError(
            f"embeddings file has {len(raw)} bytes, expected {expected}", field="body"
        )
    matrix = np.frombuffer(raw, dtype="<f4", offset=_MAGIC.size).reshape(count, dim)

    descriptions: dict[tuple[int, int], str] = {}
    if graph is not None:
        descriptions = {
            (n.entity_id, n.frame_index): n.description or "" for n in graph.nodes
        }

    records = []
    for lineno, line in enumerate(Path(index_path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
            row = int(entry["row"])
            entity_id = int(entry["entity_id"])
            frame_index = int(entry["frame_index"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed index row: {exc}", line=lineno) from exc
        if not 0 <= row < count:
            raise ParseError(f"row {row} out of range", line=lineno, field="row")
        records.append(
            EmbeddingRecord(
                entity_id=entity_id,
                frame_index=frame_index,
                description=descriptions.get((entity_id, frame_index), ""),
                vector=matrix[row].astype(np.float64),
            )
        )
    return records
