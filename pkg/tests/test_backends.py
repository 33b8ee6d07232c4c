import numpy as np
import pytest

from ravu import backends
from ravu.backends import (
    MockBackend,
    PromptBundle,
    RemoteBackend,
    generate_with_retries,
    make_bundle,
    mock_breakdown,
)
from ravu.errors import BlockedContent, MalformedResponse, Timeout
from ravu.graph_model import EntityEvent, RelationEdge


def test_bundle_role_validation():
    with pytest.raises(ValueError, match="unknown role"):
        PromptBundle(role="oracle", system_prompt="", user_payload="")
    with pytest.raises(ValueError, match="frame_refs"):
        PromptBundle(role="rerank", system_prompt="", user_payload="", frame_refs=[])


def test_system_prompts_exist_for_all_roles():
    for role in backends.ROLES:
        assert backends.load_system_prompt(role)


def test_embed_deterministic_unit_norm(backend):
    v1 = backend.embed("a red dog runs")
    v2 = backend.embed("a red dog runs")
    np.testing.assert_array_equal(v1, v2)
    assert np.linalg.norm(v1) == pytest.approx(1.0)
    assert backend.embed("").tolist() == [0.0] * backend.dim


def test_embed_seed_changes_vectors():
    a = MockBackend(seed=0).embed("hello world")
    b = MockBackend(seed=1).embed("hello world")
    assert not np.allclose(a, b)


def test_embed_similarity_orders_by_overlap(backend):
    q = backend.embed("red dog running fast")
    close = backend.embed("red dog running")
    far = backend.embed("blue cat sleeping")
    assert float(q @ close) > float(q @ far)


def test_frame_graph_rule(backend):
    payload = backends.frame_graph_payload(
        0, [1, 2], "[E1] stands beside [E2]. [E2] is alone. [E1] waves."
    )
    out = backend.generate(make_bundle("frame_graph", payload))
    assert out == "1|stands beside|2"


def test_node_description_rule(backend):
    edges = [RelationEdge(0, 3, "next to", 4), RelationEdge(0, 5, "behind", 3)]
    payload = backends.node_description_payload(
        3, {"appearance": "red fox", "action": "digging", "body_pose": "crouched"}, edges
    )
    out = backend.generate(make_bundle("node_description", payload))
    assert out == "entity 3: red fox; digging; relations: next to entity 4, entity 5 behind"


def test_node_description_no_relations(backend):
    payload = backends.node_description_payload(
        0, {"appearance": "red fox", "action": "digging"}, []
    )
    out = backend.generate(make_bundle("node_description", payload))
    assert out.endswith("relations: none")


def test_event_segmentation_rule(backend):
    rows = [
        (0, "running", "entity 0: red fox; running; relations: none"),
        (1, "running", "entity 0: red fox; running; relations: none"),
        (2, "digging", "entity 0: red fox; digging; relations: none"),
    ]
    payload = backends.event_segmentation_payload(0, rows)
    out = backend.generate(make_bundle("event_segmentation", payload))
    assert out.splitlines() == ["0|1|red fox running", "2|2|red fox digging"]


def test_rerank_rule(backend):
    payload = backends.rerank_payload(
        "gray cat sleeping", ["brown dog", "gray cat sleeping on mat", "gray cat"]
    )
    assert backend.generate(make_bundle("rerank", payload)) == "1"


def test_rerank_tie_goes_to_lowest_index(backend):
    payload = backends.rerank_payload("gray cat", ["gray cat", "gray cat"])
    assert backend.generate(make_bundle("rerank", payload)) == "0"


def test_event_analysis_rule(backend):
    events = [
        EntityEvent(0, 0, 4, "red fox running"),
        EntityEvent(0, 5, 9, "red fox digging a hole"),
    ]
    payload = backends.event_analysis_payload("when did the fox start digging", events)
    assert backend.generate(make_bundle("event_analysis", payload)) == "5"
    payload = backends.event_analysis_payload("when did the fox start flying", events)
    assert backend.generate(make_bundle("event_analysis", payload)) == "0"


def test_answer_rule_uses_frames_and_notes(backend):
    refs = [(0, "f0.jpg", "the red fox digs a hole"), (1, "f1.jpg", "the red fox rests")]
    payload = backends.answer_payload("what happens", ["a bird sings", "a fox digs"], "")
    bundle = make_bundle("answer", payload, refs)
    assert backend.answer(bundle, "what happens", ["a bird sings", "a fox digs"]) == 1

    payload = backends.answer_payload("how many foxes", ["2", "3"], "count of 'foxes': 3")
    bundle = make_bundle("answer", payload, [])
    assert backend.answer(bundle, "how many foxes", ["2", "3"]) == 1


def test_event_select_rule(backend):
    payload = backends.event_select_payload(
        "fox digging", ["bird singing", "fox digging", "fox sleeping"], 2
    )
    assert backend.generate(make_bundle("event_select", payload)) == "1, 2"


def test_block_token_raises(backend):
    payload = backends.rerank_payload("[BLOCK] anything", ["x"])
    with pytest.raises(BlockedContent):
        backend.generate(make_bundle("rerank", payload))
    bundle = make_bundle("answer", backends.answer_payload("q", ["a"]), [(0, "", "[BLOCK]")])
    with pytest.raises(BlockedContent):
        backend.answer(bundle, "q", ["a"])


def test_mock_breakdown_templates():
    out = mock_breakdown("What did the gray dog do before chasing the ball?")
    assert 'localize_node(query="gray dog chasing the ball")' in out
    assert 'events_to_sample="previous:1"' in out
    out = mock_breakdown("What did the cat do after eating?")
    assert 'events_to_sample="next:1"' in out
    out = mock_breakdown("How many dogs appear?")
    assert 'count_nodes(node_query="dogs")' in out
    out = mock_breakdown("What happens at the beginning of the video?")
    assert 'extract_temporal_part(target_part="beginning")' in out
    out = mock_breakdown("Which of these happens in the video?")
    assert "get_global_context()" in out


def test_generate_with_retries_retries_then_fails(backend):
    calls = []

    def parse(text):
        calls.append(text)
        raise ValueError("nope")

    bundle = make_bundle("rerank", backends.rerank_payload("x", ["x"]))
    with pytest.raises(MalformedResponse, match="after retries"):
        generate_with_retries(backend, bundle, parse, max_retries=3)
    assert len(calls) == 3


def test_generate_with_retries_propagates_blocked(backend):
    bundle = make_bundle("rerank", backends.rerank_payload("[BLOCK]", ["x"]))
    with pytest.raises(BlockedContent):
        generate_with_retries(backend, bundle, lambda t: t)


class _FakeResponse:
    def __init__(self, status_code=200, payload=None, bad_json=False):
        self.status_code = status_code
        self._payload = payload or {}
        self._bad_json = bad_json

    def json(self):
        if self._bad_json:
            raise ValueError("not json")
        return self._payload


def _patch_post(monkeypatch, response=None, exc=None, record=None):
    import requests

    def fake_post(url, json=None, headers=None, timeout=None):
        if record is not None:
            record.append({"url": url, "json": json, "headers": headers})
        if exc is not None:
            raise exc
        return response

    monkeypatch.setattr(requests, "post", fake_post)


def test_remote_backend_generate(monkeypatch):
    record = []
    _patch_post(monkeypatch, _FakeResponse(payload={"text": "hello"}), record=record)
    remote = RemoteBackend("http://example.test/api/", token="tok", model="m1")
    bundle = make_bundle("rerank", backends.rerank_payload("x", ["x"]))
    assert remote.generate(bundle) == "hello"
    sent = record[0]
    assert sent["url"] == "http://example.test/api"
    assert sent["headers"]["Authorization"] == "Bearer tok"
    assert sent["json"]["model"] == "m1"
    assert sent["json"]["role"] == "rerank"


def test_remote_backend_error_mapping(monkeypatch):
    remote = RemoteBackend("http://example.test")
    bundle = make_bundle("rerank", backends.rerank_payload("x", ["x"]))

    _patch_post(monkeypatch, _FakeResponse(status_code=451))
    with pytest.raises(BlockedContent):
        remote.generate(bundle)

    _patch_post(monkeypatch, _FakeResponse(status_code=500))
    with pytest.raises(MalformedResponse):
        remote.generate(bundle)

    import requests

    _patch_post(monkeypatch, exc=requests.exceptions.Timeout("slow"))
    with pytest.raises(Timeout):
        remote.generate(bundle)

    _patch_post(monkeypatch, _FakeResponse(bad_json=True))
    with pytest.raises(MalformedResponse):
        remote.generate(bundle)


def test_remote_backend_embed_and_answer(monkeypatch):
    remote = RemoteBackend("http://example.test")
    _patch_post(monkeypatch, _FakeResponse(payload={"text": "[3.0, 4.0]"}))
    vec = remote.embed("hi")
    np.testing.assert_allclose(vec, [0.6, 0.8])

    _patch_post(monkeypatch, _FakeResponse(payload={"text": "option 1"}))
    bundle = make_bundle("answer", backends.answer_payload("q", ["a", "b"]))
    assert remote.answer(bundle, "q", ["a", "b"]) == 1

    _patch_post(monkeypatch, _FakeResponse(payload={"text": "7"}))
    with pytest.raises(MalformedResponse, match="out of range"):
        remote.answer(bundle, "q", ["a", "b"])


def test_remote_backend_requires_endpoint():
    with pytest.raises(ValueError):
        RemoteBackend("")
