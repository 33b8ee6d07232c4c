"""Plan execution over the graph: question breakdown, the seven reasoning
functions, and hierarchical retrieval for whole-video questions.

Steps run strictly in sequence; each sees only earlier results. Step
failures are recorded and execution continues, degrading to uniform
sampling when nothing produced frames, so retrieval is total.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from importlib import resources

from . import backends
from .backends import generate_with_retries, make_bundle
from .errors import (
    BlockedContent,
    EmptyIndex,
    MalformedResponse,
    NotFound,
    ParseError,
    Timeout,
)
from .graph_model import EntityEvent, SpatioTemporalGraph, entity_timeline
from .index import EmbeddingIndex
from .plan import FRAME_PRODUCING, ReasoningPlan, Ref, parse_plan


@dataclass(frozen=True)
class NodeRef:
    entity_id: int
    frame_index: int


@dataclass(frozen=True)
class Segment:
    start: int
    end: int


@dataclass
class ExecutionResult:
    frames: list[int]
    values: list[object]
    errors: list[tuple[int, str]] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)
    notes: str = ""


def uniform_sample(frames: list[int], budget: int) -> list[int]:
    """Evenly spaced subset of ``frames`` including both endpoints.

    Positions are ceil-rounded over the index range, so 20 frames at
    budget 5 give positions 0, 5, 10, 15, 19.
    """
    n = len(frames)
    if budget >= n:
        return list(frames)
    if budget <= 0:
        return []
    if budget == 1:
        return [frames[0]]
    positions = sorted({math.ceil(i * (n - 1) / (budget - 1)) for i in range(budget)})
    return [frames[p] for p in positions]


def _entity_events(graph: SpatioTemporalGraph, entity_id: int) -> list[EntityEvent]:
    events = graph.events.get(entity_id, [])
    if not events:
        raise NotFound(f"entity {entity_id} has no events")
    return sorted(events, key=lambda ev: ev.start_frame)


def _anchor_event_index(events: list[EntityEvent], t: int) -> int:
    for i, ev in enumerate(events):
        if ev.start_frame <= t <= ev.end_frame:
            return i
    before = [i for i, ev in enumerate(events) if ev.start_frame <= t]
    return before[-1] if before else 0


def fn_analyze_events(
    graph: SpatioTemporalGraph, query: str, node: NodeRef, backend, max_retries: int = 2
) -> tuple[int, bool]:
    """Frame index answering a temporal sub-question about one entity.

    Returns (time_index, fallback). The backend reply is clamped to the
    entity's appearance span; a malformed reply falls back to the start of
    the event containing the node's frame.
    """
    events = _entity_events(graph, node.entity_id)
    timeline = entity_timeline(graph, node.entity_id)
    first, last = timeline[0].frame_index, timeline[-1].frame_index
    bundle = make_bundle("event_analysis", backends.event_analysis_payload(query, events))

    def parse(text: str) -> int:
        return int(text.strip())

    try:
        t = generate_with_retries(backend, bundle, parse, max_retries)
    except MalformedResponse:
        anchor = events[_anchor_event_index(events, node.frame_index)]
        return anchor.start_frame, True
    return min(max(t, first), last), False


_EVENTS_SPEC_RE = re.compile(r"^(previous|next):(\d+)$")


def fn_sample_entity_events(
    graph: SpatioTemporalGraph,
    node: NodeRef,
    sample_start_time: int,
    events_to_sample: str,
    quota: int,
) -> list[int]:
    """Frames sampled uniformly from the selected events of one entity."""
    events = _entity_events(graph, node.entity_id)
    anchor = _anchor_event_index(events, sample_start_time)

    if events_to_sample == "current":
        selected = [events[anchor]]
    elif events_to_sample == "all":
        selected = events
    else:
        match = _EVENTS_SPEC_RE.match(events_to_sample)
        if not match:
            raise ValueError(f"bad events_to_sample {events_to_sample!r}")
        count = int(match.group(2))
        if match.group(1) == "previous":
            selected = events[max(0, anchor - count) : anchor]
        else:
            selected = events[anchor + 1 : anchor + 1 + count]

    frames: list[int] = []
    for ev in selected:
        frames.extend(range(ev.start_frame, ev.end_frame + 1))
    return uniform_sample(sorted(frames), quota)


def temporal_thirds(n_frames: int) -> dict[str, Segment]:
    """Thirds of [0, N-1]; remainder frames go to the last third."""
    if n_frames < 3:
        seg = Segment(0, max(0, n_frames - 1))
        return {"beginning": seg, "middle": seg, "end": seg}
    third = n_frames // 3
    return {
        "beginning": Segment(0, third - 1),
        "middle": Segment(third, 2 * third - 1),
        "end": Segment(2 * third, n_frames - 1),
    }


def fn_extract_temporal_part(n_frames: int, target_part: str, quota: int) -> tuple[Segment, list[int]]:
    seg = temporal_thirds(n_frames)[target_part]
    frames = uniform_sample(list(range(seg.start, seg.end + 1)), quota)
    return seg, frames


def _norm_word(word: str) -> str:
    if len(word) > 3 and word.endswith("s") and not word.endswith("ss"):
        return word[:-1]
    return word


def _matches(query: str, text: str) -> bool:
    """All non-stopword query words present in the text (plural-insensitive)."""
    need = {_norm_word(w) for w in backends.content_words(query)}
    have = {_norm_word(w) for w in backends.words(text)}
    return bool(need) and need <= have


def fn_count_nodes(
    graph: SpatioTemporalGraph, node_query: str, event_condition: str | None = None
) -> int:
    """Distinct entities with any node description matching the query."""
    count = 0
    for entity_id in graph.entity_ids():
        nodes = entity_timeline(graph, entity_id)
        if not any(_matches(node_query, n.description or "") for n in nodes):
            continue
        if event_condition:
            events = graph.events.get(entity_id, [])
            if not any(_matches(event_condition, ev.summary) for ev in events):
                continue
        count += 1
    return count


def fn_get_global_context(n_frames: int, quota: int) -> list[int]:
    return uniform_sample(list(range(n_frames)), quota)


def fn_identify_node(
    graph: SpatioTemporalGraph, query: str, backend
) -> tuple[NodeRef, bool]:
    """Backend picks an entity from one representative description each."""
    entity_ids = graph.entity_ids()
    if not entity_ids:
        raise EmptyIndex("graph has no entities")
    reps = []
    for entity_id in entity_ids:
        first = entity_timeline(graph, entity_id)[0]
        reps.append((entity_id, first.frame_index, first.description or ""))
    if len(reps) == 1:
        entity_id, frame_index, _ = reps[0]
        return NodeRef(entity_id, frame_index), False

    bundle = make_bundle("rerank", backends.rerank_payload(query, [r[2] for r in reps]))
    try:
        chosen = int(backend.generate(bundle).strip())
        if not 0 <= chosen < len(reps):
            raise ValueError("index out of range")
    except (BlockedContent, Timeout):
        raise
    except Exception:
        entity_id, frame_index, _ = reps[0]
        return NodeRef(entity_id, frame_index), True
    entity_id, frame_index, _ = reps[chosen]
    return NodeRef(entity_id, frame_index), False


def execute(
    plan: ReasoningPlan,
    graph: SpatioTemporalGraph,
    index: EmbeddingIndex,
    backend,
    budget: int = 5,
    top_k: int = 10,
    max_retries: int = 2,
) -> ExecutionResult:
    """Run the plan's steps in sequence and collect the retrieved frames.

    Frame-producing steps share the budget: each gets a quota of
    ceil(remaining / remaining frame-producing steps). Step errors are
    recorded and execution continues; if nothing produced frames, a
    uniform-sampling fallback is appended. The final set is sorted,
    de-duplicated, and truncated uniformly to the budget.
    """
    n_frames = graph.num_frames
    values: list[object] = []
    pool: list[int] = []
    result = ExecutionResult(frames=[], values=values)
    notes: list[str] = []

    frame_steps_left = sum(1 for s in plan.steps if s.function in FRAME_PRODUCING)

    for step_index, step in enumerate(plan.steps):
        is_frame_step = step.function in FRAME_PRODUCING
        quota = 0
        if is_frame_step:
            remaining = max(0, budget - len(set(pool)))
            quota = math.ceil(remaining / frame_steps_left) if frame_steps_left else 0
            frame_steps_left -= 1

        try:
            args = {}
            for name, value in step.args.items():
                if isinstance(value, Ref):
                    resolved = values[value.step - 1]
                    if resolved is None:
                        raise ValueError(f"step {value.step} failed; cannot resolve ${value.step}")
                    args[name] = resolved
                else:
                    args[name] = value

            if step.function == "localize_node":
                loc = index.localize(args["query"], top_k, backend)
                if loc.fallback:
                    result.flags.append(f"step {step_index + 1}: rerank fallback")
                ref = NodeRef(loc.candidate.entity_id, loc.candidate.frame_index)
                values.append(ref)
                pool.append(ref.frame_index)
            elif step.function == "identify_node":
                ref, fell_back = fn_identify_node(graph, args["query"], backend)
                if fell_back:
                    result.flags.append(f"step {step_index + 1}: identify fallback")
                values.append(ref)
            elif step.function == "analyze_events":
                t, fell_back = fn_analyze_events(
                    graph, args["query"], args["node"], backend, max_retries
                )
                if fell_back:
                    result.flags.append(f"step {step_index + 1}: event-analysis fallback")
                values.append(t)
            elif step.function == "sample_entity_events":
                frames = fn_sample_entity_events(
                    graph,
                    args["node"],
                    args["sample_start_time"],
                    args["events_to_sample"],
                    quota,
                )
                values.append(frames)
                pool.extend(frames)
            elif step.function == "extract_temporal_part":
                seg, frames = fn_extract_temporal_part(n_frames, args["target_part"], quota)
                values.append(seg)
                pool.extend(frames)
            elif step.function == "count_nodes":
                count = fn_count_nodes(graph, args["node_query"], args.get("event_condition"))
                values.append(count)
                notes.append(f"count of '{args['node_query']}': {count}")
            elif step.function == "get_global_context":
                frames = fn_get_global_context(n_frames, quota)
                values.append(frames)
                pool.extend(frames)
            else:  # pragma: no cover - parser rejects unknown functions
                raise ValueError(f"unknown function {step.function}")
        except (BlockedContent, Timeout):
            raise
        except Exception as exc:
            values.append(None)
            result.errors.append((step_index + 1, str(exc)))

    if not pool and n_frames:
        pool = fn_get_global_context(n_frames, budget)
        result.flags.append("no frames produced; global-context fallback")

    final = sorted({f for f in pool if 0 <= f < n_frames})
    if len(final) > budget:
        final = uniform_sample(final, budget)
    result.frames = final
    result.notes = "; ".join(notes)
    return result


# ---------------------------------------------------------------------------
# Question breakdown


@dataclass
class BreakdownExample:
    category: str
    question: str
    analysis: str
    plan_text: str

    def render(self) -> str:
        return (
            f"question: {self.question}\n"
            f"analysis: {self.analysis}\n"
            "plan:\n"
            f"{self.plan_text}"
        )


def load_example_library() -> list[BreakdownExample]:
    """Shipped few-shot examples for question breakdown."""
    examples = []
    root = resources.files("ravu").joinpath("breakdown_examples")
    for entry in sorted(root.iterdir(), key=lambda e: e.name):
        if not entry.name.endswith(".txt"):
            continue
        text = entry.read_text()
        category = ""
        question = ""
        analysis = ""
        plan_lines: list[str] = []
        in_plan = False
        for line in text.splitlines():
            if in_plan:
                plan_lines.append(line)
            elif line.startswith("category:"):
                category = line.partition(":")[2].strip()
            elif line.startswith("question:"):
                question = line.partition(":")[2].strip()
            elif line.startswith("analysis:"):
                analysis = line.partition(":")[2].strip()
            elif line.strip() == "plan:":
                in_plan = True
        examples.append(
            BreakdownExample(
                category=category,
                question=question,
                analysis=analysis,
                plan_text="\n".join(plan_lines).strip(),
            )
        )
    return examples


@dataclass
class BreakdownResult:
    plan: ReasoningPlan
    fallback: bool = False


def breakdown(
    question: str,
    example_library: list[BreakdownExample],
    backend,
    max_retries: int = 2,
) -> BreakdownResult:
    """Decompose a question into a plan using in-context examples.

    Unparseable backend output falls back to a single uniform-sampling
    step; blocked content propagates to the caller.
    """
    if not example_library:
        raise ValueError("example library must be non-empty")
    examples_text = "\n\n".join(ex.render() for ex in example_library)
    bundle = make_bundle("breakdown", backends.breakdown_payload(question, examples_text))

    def parse(text: str) -> ReasoningPlan:
        analysis = ""
        lines = text.splitlines()
        plan_lines = []
        in_plan = False
        for line in lines:
            if in_plan:
                plan_lines.append(line)
            elif line.startswith("analysis:"):
                analysis = line.partition(":")[2].strip()
            elif line.strip() == "plan:":
                in_plan = True
        plan_text = "\n".join(plan_lines) if in_plan else text
        try:
            return parse_plan(plan_text, question=question, analysis=analysis)
        except ParseError as exc:
            raise MalformedResponse(str(exc)) from exc

    try:
        return BreakdownResult(plan=generate_with_retries(backend, bundle, parse, max_retries))
    except BlockedContent:
        raise
    except MalformedResponse:
        fallback_plan = parse_plan("get_global_context()", question=question)
        return BreakdownResult(plan=fallback_plan, fallback=True)


# ---------------------------------------------------------------------------
# Hierarchical retrieval for global questions


def hierarchical_retrieve(
    question: str,
    graph: SpatioTemporalGraph,
    index: EmbeddingIndex,
    backend,
    per_event: int = 3,
    top: int = 10,
) -> tuple[list[int], bool]:
    """Two-stage retrieval for whole-video questions.

    Stage 1 keeps the ``per_event`` best node descriptions of every entity
    event by cosine similarity against the question. Stage 2 asks the
    backend to pick the ``top`` most relevant from the pooled candidates;
    on failure the pool is truncated by score instead (flagged).

    Returns (frames, fallback).
    """
    if not graph.events:
        raise ValueError("hierarchical retrieval requires entity events")
    qvec = backend.embed(question)

    from . import accel

    pooled: list[tuple[float, int, int, str]] = []  # (score, frame, entity, desc)
    by_entity: dict[int, list[int]] = {}
    for row, rec in enumerate(index.records):
        by_entity.setdefault(rec.entity_id, []).append(row)

    for entity_id, events in sorted(graph.events.items()):
        rows = by_entity.get(entity_id, [])
        for ev in sorted(events, key=lambda ev: ev.start_frame):
            in_event = [r for r in rows if ev.start_frame <= index.records[r].frame_index <= ev.end_frame]
            if not in_event:
                continue
            scores = accel.cosine_scores(index.matrix[in_event], qvec)
            ranked = sorted(
                range(len(in_event)),
                key=lambda i: (
                    -scores[i],
                    index.records[in_event[i]].frame_index,
                    index.records[in_event[i]].entity_id,
                ),
            )
            for i in ranked[:per_event]:
                rec = index.records[in_event[i]]
                pooled.append((float(scores[i]), rec.frame_index, rec.entity_id, rec.description))

    pooled.sort(key=lambda c: (-c[0], c[1], c[2]))
    if not pooled:
        return [], False

    descriptions = [c[3] for c in pooled]
    bundle = make_bundle("event_select", backends.event_select_payload(question, descriptions, top))
    fallback = False
    try:
        text = backend.generate(bundle)
        chosen = [int(tok) for tok in re.split(r"[,\s]+", text.strip()) if tok]
        if not chosen or any(not 0 <= c < len(pooled) for c in chosen):
            raise ValueError("bad selection indices")
        chosen = chosen[:top]
    except (BlockedContent, Timeout):
        raise
    except Exception:
        chosen = list(range(min(top, len(pooled))))
        fallback = True

    frames = sorted({pooled[c][1] for c in chosen})
    return frames, fallback
