import numpy as np
import pytest

from ravu.backends import MockBackend
from ravu.errors import MalformedResponse
from ravu.graph_builder import (
    build_frame_graph,
    build_graph,
    describe_node,
    embed_graph,
    read_embeddings,
    segment_events,
    write_embeddings,
)
from ravu.graph_model import (
    BoundingBox,
    EntityNode,
    FrameRecord,
    SpatioTemporalGraph,
    validate,
)


def node(entity_id, frame, action="running", appearance="red fox", desc=None):
    return EntityNode(
        entity_id=entity_id,
        frame_index=frame,
        attributes={"appearance": appearance, "action": action, "body_pose": "upright"},
        box=BoundingBox(0, 0, 10, 10),
        description=desc,
    )


class FailingGenBackend(MockBackend):
    """Mock whose generate() always returns garbage."""

    def generate(self, bundle):
        return "@@@ not parseable @@@"


def test_build_frame_graph_parses_triples(backend):
    frame = FrameRecord(0, 0.0, "[E1] chases [E2]. [E2] rests.")
    edges, dropped = build_frame_graph(frame, [node(1, 0), node(2, 0)], backend)
    assert dropped == 0
    assert len(edges) == 1
    assert (edges[0].subject_id, edges[0].relation, edges[0].object_id) == (1, "chases", 2)


def test_build_frame_graph_drops_unknown_entities(backend):
    frame = FrameRecord(0, 0.0, "[E1] chases [E9].")
    edges, dropped = build_frame_graph(frame, [node(1, 0)], backend)
    assert edges == [] and dropped == 1


def test_build_frame_graph_no_comention_tolerates_empty(backend):
    frame = FrameRecord(0, 0.0, "[E1] sits alone.")
    edges, dropped = build_frame_graph(frame, [node(1, 0)], backend)
    assert edges == [] and dropped == 0


def test_build_frame_graph_raises_when_comention_unparseable():
    frame = FrameRecord(0, 0.0, "[E1] chases [E2].")
    with pytest.raises(MalformedResponse):
        build_frame_graph(frame, [node(1, 0), node(2, 0)], FailingGenBackend())


def test_describe_node(backend):
    text = describe_node(node(3, 0), [], backend)
    assert text == "entity 3: red fox; running; relations: none"


def small_described_graph():
    frames = [FrameRecord(i, float(i), f"frame {i}") for i in range(4)]
    nodes = [
        node(0, 0, action="running"),
        node(0, 1, action="running"),
        node(0, 2, action="digging"),
        node(0, 3, action="digging"),
    ]
    graph = SpatioTemporalGraph(frames=frames, nodes=nodes)
    for n in graph.nodes:
        n.description = f"entity 0: red fox; {n.attributes['action']}; relations: none"
    return graph


def test_segment_events_splits_on_action_change(backend):
    graph = small_described_graph()
    seg = segment_events(graph, 0, backend)
    assert not seg.fallback
    assert [(e.start_frame, e.end_frame, e.summary) for e in seg.events] == [
        (0, 1, "red fox running"),
        (2, 3, "red fox digging"),
    ]


def test_segment_events_absence_gap_forces_boundary(backend):
    graph = small_described_graph()
    graph.nodes = [n for n in graph.nodes if n.frame_index != 1]
    seg = segment_events(graph, 0, backend)
    assert [(e.start_frame, e.end_frame) for e in seg.events] == [(0, 0), (2, 3)]


def test_segment_events_fallback_flagged():
    graph = small_described_graph()
    seg = segment_events(graph, 0, FailingGenBackend())
    assert seg.fallback
    assert [(e.start_frame, e.end_frame) for e in seg.events] == [(0, 3)]
    assert seg.events[0].summary  # non-empty summary even in fallback


def test_build_graph_end_to_end(backend):
    frames = [FrameRecord(0, 0.0, "[E0] beside [E1]."), FrameRecord(1, 1.0, "calm scene.")]
    nodes = [node(0, 0), node(1, 0, appearance="blue jay"), node(0, 1)]
    graph, report = build_graph(frames, nodes, backend)
    assert report.dropped_edge_lines == 0
    assert report.fallback_entities == []
    assert len(graph.edges) == 1
    assert all(n.description for n in graph.nodes)
    assert validate(graph) == []


def test_embed_graph_requires_descriptions(backend):
    graph = SpatioTemporalGraph(
        frames=[FrameRecord(0, 0.0, "x")], nodes=[node(0, 0)]
    )
    with pytest.raises(ValueError, match="no description"):
        embed_graph(graph, backend)


def test_embed_graph_and_persistence_round_trip(tmp_path, backend):
    graph = small_described_graph()
    records = embed_graph(graph, backend)
    assert len(records) == 4
    assert all(abs(np.linalg.norm(r.vector) - 1.0) < 1e-9 for r in records)

    bin_path = tmp_path / "embeddings.bin"
    idx_path = tmp_path / "embeddings.index.jsonl"
    write_embeddings(records, bin_path, idx_path)
    loaded = read_embeddings(bin_path, idx_path, graph)
    assert [(r.entity_id, r.frame_index, r.description) for r in loaded] == [
        (r.entity_id, r.frame_index, r.description) for r in records
    ]
    # float32 storage: vectors agree to storage precision
    for a, b in zip(records, loaded):
        np.testing.assert_allclose(a.vector, b.vector, atol=1e-6)


def test_write_embeddings_is_byte_stable(tmp_path, backend):
    graph = small_described_graph()
    records = embed_graph(graph, backend)
    paths = []
    for name in ("a", "b"):
        bin_path = tmp_path / f"{name}.bin"
        idx_path = tmp_path / f"{name}.idx"
        write_embeddings(records, bin_path, idx_path)
        paths.append((bin_path.read_bytes(), idx_path.read_bytes()))
    assert paths[0] == paths[1]
