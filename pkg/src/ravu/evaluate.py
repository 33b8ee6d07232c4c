"""End-to-end QA over built graphs, plus accuracy evaluations.

Provides the per-question pipeline (breakdown, execution or hierarchical
retrieval, final answer), multiple-choice accuracy reporting in the two
blocked-content modes, and the frame-localization metric.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from . import accel, backends
from .backends import make_bundle
from .config import RavuConfig
from .datasets import CATEGORIES, LocalizationAnnotation, McqItem
from .errors import BlockedContent
from .graph_builder import BuildReport, build_graph, embed_graph
from .graph_model import SpatioTemporalGraph
from .index import EmbeddingIndex
from .ingestion import associate, parse_observations, parse_tracklets
from .plan import ReasoningPlan
from .reasoning import (
    BreakdownExample,
    breakdown,
    execute,
    hierarchical_retrieve,
    load_example_library,
)


@dataclass
class VideoAssets:
    """Everything QA needs for one video."""

    graph: SpatioTemporalGraph
    index: EmbeddingIndex
    build_report: BuildReport
    frame_vectors: np.ndarray | None = None  # optional external frame-image vectors


def build_video(
    observations_text: str,
    tracklets_text: str,
    backend,
    config: RavuConfig | None = None,
) -> VideoAssets:
    """Full pipeline for one video: ingest, build, embed, segment."""
    cfg = config or RavuConfig()
    observations = parse_observations(observations_text)
    tracklets = parse_tracklets(tracklets_text)
    assoc = associate(observations, tracklets, min_iou=cfg.min_iou, fps=cfg.fps)
    graph, report = build_graph(
        assoc.frames, assoc.nodes, backend, fps=cfg.fps, max_retries=cfg.max_retries
    )
    records = embed_graph(graph, backend)
    return VideoAssets(graph=graph, index=EmbeddingIndex(records), build_report=report)


class TokenCountingBackend:
    """Delegating wrapper that sums whitespace tokens of every prompt.

    This is a cost proxy, not a provider token count; it is only meaningful
    relative to other runs of the same proxy.
    """

    def __init__(self, inner):
        self.inner = inner
        self.tokens = 0

    def reset(self) -> int:
        count, self.tokens = self.tokens, 0
        return count

    def _count_bundle(self, bundle) -> None:
        self.tokens += len(bundle.system_prompt.split()) + len(bundle.user_payload.split())
        for _, _, desc in bundle.frame_refs or []:
            self.tokens += len(desc.split())

    def generate(self, bundle):
        self._count_bundle(bundle)
        return self.inner.generate(bundle)

    def answer(self, bundle, question, options):
        self._count_bundle(bundle)
        return self.inner.answer(bundle, question, options)

    def embed(self, text):
        self.tokens += len(text.split())
        return self.inner.embed(text)


@dataclass
class AnswerAudit:
    choice: int
    frames: list[int]
    plan: ReasoningPlan | None
    flags: list[str] = field(default_factory=list)


def answer_question(
    assets: VideoAssets,
    item: McqItem,
    backend,
    budget: int = 5,
    example_library: list[BreakdownExample] | None = None,
    top_k: int = 10,
    per_event: int = 3,
) -> AnswerAudit:
    """Retrieve frames for the question and answer it with the backend.

    Global questions take the hierarchical-retrieval route; everything else
    is broken down into a plan and executed. Blocked content propagates to
    the caller, which records the item as blocked.
    """
    graph, index = assets.graph, assets.index
    flags: list[str] = []
    notes = ""
    plan = None

    if item.category == "global" and graph.events:
        frames, fell_back = hierarchical_retrieve(
            item.question, graph, index, backend, per_event=per_event, top=budget
        )
        if fell_back:
            flags.append("hierarchical selection fallback")
        if not frames:
            frames = list(range(min(budget, graph.num_frames)))
    else:
        library = example_library if example_library is not None else load_example_library()
        bd = breakdown(item.question, library, backend)
        plan = bd.plan
        if bd.fallback:
            flags.append("breakdown fallback")
        result = execute(plan, graph, index, backend, budget=budget, top_k=top_k)
        frames = result.frames
        notes = result.notes
        flags.extend(result.flags)

    frame_refs = [
        (f, graph.frames[f].source_ref, graph.frames[f].description) for f in frames
    ]
    bundle = make_bundle(
        "answer", backends.answer_payload(item.question, item.options, notes), frame_refs
    )
    choice = backend.answer(bundle, item.question, item.options)
    return AnswerAudit(choice=choice, frames=frames, plan=plan, flags=flags)


def _accuracy(correct: int, total: int) -> float | None:
    return correct / total if total else None


def eval_qa(
    items: list[McqItem],
    assets_by_video: dict[str, VideoAssets],
    backend,
    budget: int = 5,
    example_library: list[BreakdownExample] | None = None,
    top_k: int = 10,
) -> dict:
    """Accuracy by category and overall, in both blocked-content modes.

    ``non_blocked`` excludes blocked items; ``overall`` counts them as
    incorrect. Items whose video has no graph are reported separately and
    excluded from both accuracies.
    """
    library = example_library if example_library is not None else load_example_library()
    counting = TokenCountingBackend(backend)

    rows = []
    for item in items:
        counting.reset()
        assets = assets_by_video.get(item.video_id)
        if assets is None:
            rows.append({"item": item, "status": "errored", "tokens": 0, "frames": []})
            continue
        try:
            audit = answer_question(
                assets, item, counting, budget=budget, example_library=library, top_k=top_k
            )
        except BlockedContent:
            rows.append(
                {"item": item, "status": "blocked", "tokens": counting.tokens, "frames": []}
            )
            continue
        rows.append(
            {
                "item": item,
                "status": "correct" if audit.choice == item.answer_index else "incorrect",
                "tokens": counting.tokens,
                "frames": audit.frames,
            }
        )

    report: dict = {"categories": {}, "errored": 0}
    answered = [r for r in rows if r["status"] in ("correct", "incorrect")]
    blocked = [r for r in rows if r["status"] == "blocked"]
    report["errored"] = sum(1 for r in rows if r["status"] == "errored")

    def bucket(rows_subset):
        correct = sum(1 for r in rows_subset if r["status"] == "correct")
        n_answered = sum(1 for r in rows_subset if r["status"] in ("correct", "incorrect"))
        n_blocked = sum(1 for r in rows_subset if r["status"] == "blocked")
        return {
            "items": n_answered + n_blocked,
            "blocked": n_blocked,
            "non_blocked_accuracy": _accuracy(correct, n_answered),
            "overall_accuracy": _accuracy(correct, n_answered + n_blocked),
        }

    for category in CATEGORIES:
        in_cat = [r for r in rows if r["item"].category == category and r["status"] != "errored"]
        if in_cat:
            report["categories"][category] = bucket(in_cat)
    report["overall"] = bucket(answered + blocked)
    frame_counts = [len(r["frames"]) for r in answered]
    report["mean_frames"] = float(np.mean(frame_counts)) if frame_counts else 0.0
    token_counts = [r["tokens"] for r in answered + blocked]
    report["mean_prompt_tokens"] = float(np.mean(token_counts)) if token_counts else 0.0
    return report


def eval_localization(
    annotations: list[LocalizationAnnotation],
    assets_by_video: dict[str, VideoAssets],
    backend,
    method: str = "rerank",
    top_k: int = 10,
) -> dict:
    """Frame-localization accuracy: correct iff the predicted frame is in gt.

    Methods: ``rerank`` (two-stage localize), ``text_embedding`` (rank-1 of
    the cosine top-k), ``raw_vector`` (rank-1 over external frame-image
    vectors; items without vectors are skipped).
    """
    if method not in ("rerank", "text_embedding", "raw_vector"):
        raise ValueError(f"unknown localization method {method!r}")

    per_category: dict[str, list[bool]] = {}
    skipped = 0
    for ann in annotations:
        assets = assets_by_video.get(ann.video_id)
        if assets is None:
            skipped += 1
            continue
        if method == "rerank":
            predicted = assets.index.localize(ann.question, top_k, backend).candidate.frame_index
        elif method == "text_embedding":
            predicted = assets.index.top_k(backend.embed(ann.question), 1)[0].frame_index
        else:
            if assets.frame_vectors is None:
                skipped += 1
                continue
            scores = accel.cosine_scores(assets.frame_vectors, backend.embed(ann.question))
            predicted = int(np.argmax(scores))
        per_category.setdefault(ann.category, []).append(predicted in ann.gt_frames)

    report: dict = {"method": method, "categories": {}, "skipped": skipped}
    all_hits: list[bool] = []
    for category in sorted(per_category):
        hits = per_category[category]
        all_hits.extend(hits)
        report["categories"][category] = {
            "items": len(hits),
            "accuracy": _accuracy(sum(hits), len(hits)),
        }
    report["overall"] = {"items": len(all_hits), "accuracy": _accuracy(sum(all_hits), len(all_hits))}
    return report


def report_to_json(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def _flatten(prefix: str, value, rows: list[tuple[str, str, str]]) -> None:
    if isinstance(value, dict):
        for key in sorted(value):
            _flatten(f"{prefix}.{key}" if prefix else key, value[key], rows)
    else:
        category, _, metric = prefix.partition(".")
        if not metric:
            category, metric = "overall", prefix
        rows.append((category, metric, "" if value is None else str(value)))


def report_to_csv(report: dict) -> str:
    """Rows of category,metric,value; nested keys joined with dots."""
    rows: list[tuple[str, str, str]] = []
    _flatten("", report, rows)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["category", "metric", "value"])
    writer.writerows(rows)
    return buf.getvalue()
