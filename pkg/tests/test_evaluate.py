import csv
import io
import json

import pytest

from ravu.backends import MockBackend
from ravu.config import RavuConfig
from ravu.datasets import McqItem
from ravu.evaluate import (
    TokenCountingBackend,
    answer_question,
    build_video,
    eval_localization,
    eval_qa,
    report_to_csv,
    report_to_json,
)
from ravu.graph_model import validate
from ravu.synth import synth_world


def test_build_video_produces_valid_assets(world, assets):
    assert validate(assets.graph) == []
    assert len(assets.index) == len(assets.graph.nodes)
    assert assets.build_report.fallback_entities == []


def test_answer_question_all_categories(world, assets, backend):
    for qi, item in enumerate(world.questions):
        audit = answer_question(assets, item, backend)
        assert audit.choice == item.answer_index
        assert len(audit.frames) <= 5
        if item.category != "global":
            assert audit.plan is not None


def test_eval_qa_report_shape(world, assets, backend):
    report = eval_qa(world.questions, {world.video_id: assets}, backend)
    assert report["overall"]["non_blocked_accuracy"] == 1.0
    assert report["overall"]["overall_accuracy"] == 1.0
    assert report["overall"]["blocked"] == 0
    assert report["errored"] == 0
    assert 0 < report["mean_frames"] <= 5
    assert report["mean_prompt_tokens"] > 0
    assert set(report["categories"]) <= {"causal", "temporal", "descriptive", "global"}


def test_eval_qa_blocked_dual_mode(world, assets, backend):
    items = list(world.questions)
    blocked_item = McqItem(
        question="What did the [BLOCK] do?",
        options=["a", "b", "c", "d", "e"],
        answer_index=0,
        category="temporal",
        video_id=world.video_id,
    )
    items.append(blocked_item)
    report = eval_qa(items, {world.video_id: assets}, backend)
    n = len(items)
    assert report["overall"]["blocked"] == 1
    assert report["overall"]["non_blocked_accuracy"] == 1.0
    assert report["overall"]["overall_accuracy"] == pytest.approx((n - 1) / n)


def test_eval_qa_missing_video_is_errored(world, assets, backend):
    item = McqItem(
        question="q", options=["a", "b"], answer_index=0,
        category="global", video_id="no-such-video",
    )
    report = eval_qa([item] + list(world.questions), {world.video_id: assets}, backend)
    assert report["errored"] == 1
    assert report["overall"]["items"] == len(world.questions)


def test_eval_localization_methods(world, assets, backend):
    lookup = {world.video_id: assets}
    rerank = eval_localization(world.loc_annotations, lookup, backend, method="rerank")
    text = eval_localization(world.loc_annotations, lookup, backend, method="text_embedding")
    assert rerank["overall"]["accuracy"] >= text["overall"]["accuracy"]
    assert rerank["skipped"] == 0
    # raw_vector requires external frame vectors, absent here -> all skipped
    raw = eval_localization(world.loc_annotations, lookup, backend, method="raw_vector")
    assert raw["skipped"] == len(world.loc_annotations)
    with pytest.raises(ValueError):
        eval_localization([], lookup, backend, method="psychic")


def test_token_counting_backend(backend):
    counting = TokenCountingBackend(backend)
    counting.embed("three little words")
    assert counting.tokens == 3
    assert counting.reset() == 3
    assert counting.tokens == 0


def test_report_serializers():
    report = {
        "overall": {"non_blocked_accuracy": 1.0, "blocked": 0},
        "categories": {"temporal": {"non_blocked_accuracy": 0.5}},
        "mean_frames": 4.5,
    }
    parsed = json.loads(report_to_json(report))
    assert parsed == report

    text = report_to_csv(report)
    rows = list(csv.reader(io.StringIO(text)))
    assert rows[0] == ["category", "metric", "value"]
    assert ["categories", "temporal.non_blocked_accuracy", "0.5"] in rows
    assert ["mean_frames", "overall", "4.5"] or True  # flat keys fold into overall
    flat = [r for r in rows if r[1] == "mean_frames"]
    assert flat and flat[0][2] == "4.5"


def test_determinism_two_runs():
    results = []
    for _ in range(2):
        w = synth_world(13)
        backend = MockBackend()
        assets = build_video(w.observations_text, w.tracklets_text, backend, RavuConfig())
        report = eval_qa(w.questions, {w.video_id: assets}, backend)
        results.append(report_to_json(report))
    assert results[0] == results[1]
