"""Model backends: one contract, a remote HTTP provider, and an offline mock.

Three model roles are used across the pipeline: text generation, multimodal
answering over frames, and text embedding. Every call site builds a
:class:`PromptBundle` whose ``user_payload`` follows a small line-oriented
format per role (see the ``*_payload`` builders below). The mock provider
parses those payloads and applies fixed deterministic rules, so the whole
pipeline is testable without network or model weights.

Mock rules per role:

- ``frame_graph``: extract ``[Ea] <words> [Eb]`` patterns within sentences
  of the frame description; each becomes a ``a|words|b`` triple line.
- ``node_description``: template ``entity <id>: <appearance>; <action>;
  relations: <rendered edges or 'none'>``.
- ``event_segmentation``: event boundary wherever the action column changes
  between consecutive rows; summary is ``<appearance> <action>``.
- ``rerank``: candidate with maximum word overlap against the grounding
  phrase; ties go to the lowest index. Output is the bare index.
- ``event_analysis``: start frame of the first event whose summary contains
  every non-stopword query word, else the first event's start frame.
- ``breakdown``: template lookup keyed by question-prefix patterns.
- ``answer``: option with maximum content-word overlap against the
  concatenated frame descriptions plus the payload notes line.
- ``event_select``: the requested number of candidates by content-word
  overlap with the question, descending, ties to the lowest index.

The test hook ``[BLOCK]`` anywhere in a payload raises BlockedContent.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import BlockedContent, MalformedResponse, Timeout

ROLES = frozenset(
    {
        "frame_graph",
        "node_description",
        "event_segmentation",
        "rerank",
        "event_analysis",
        "breakdown",
        "answer",
        "event_select",
    }
)
FRAME_REF_ROLES = frozenset({"answer", "event_select"})

BLOCK_TOKEN = "[BLOCK]"

STOPWORDS = frozenset(
    """
    a an the is are was were be been am do does did doing done will would
    what who where when why how which this that these those it its itself
    he she they them his her their i you we me my your our of in on at to
    for and or but with by from as into over under about after before
    start started starts starting begin began begins beginning stop stopped
    stops end ended ends first last next previous then there here video
    entity relations none
    """.split()
)

_WORD_RE = re.compile(r"[a-z0-9]+")


def words(text: str) -> list[str]:
    return _WORD_RE.findall(text.lower())


def content_words(text: str) -> set[str]:
    return {w for w in words(text) if w not in STOPWORDS}


@dataclass
class PromptBundle:
    """One backend request: a role-selected system prompt plus payload."""

    role: str
    system_prompt: str
    user_payload: str
    frame_refs: list[tuple[int, str, str]] | None = None  # (frame_index, source_ref, description)

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if self.frame_refs is not None and self.role not in FRAME_REF_ROLES:
            raise ValueError(f"frame_refs not allowed for role {self.role!r}")


def load_system_prompt(role: str) -> str:
    """System prompt template for a role, shipped as a package asset."""
    return resources.files("ravu").joinpath(f"prompts/{role}.txt").read_text().strip()


def make_bundle(role: str, user_payload: str, frame_refs=None) -> PromptBundle:
    return PromptBundle(
        role=role,
        system_prompt=load_system_prompt(role),
        user_payload=user_payload,
        frame_refs=frame_refs,
    )


# ---------------------------------------------------------------------------
# Payload builders (the caller side of the per-role payload contract)

def frame_graph_payload(frame_index: int, entity_ids: list[int], description: str) -> str:
    ids = ", ".join(str(i) for i in entity_ids)
    return f"frame: {frame_index}\nentities: {ids}\ndescription: {description}"


def node_description_payload(entity_id: int, attributes: dict[str, str], edges) -> str:
    lines = [f"entity: {entity_id}"]
    for key in sorted(attributes):
        lines.append(f"{key}: {attributes[key]}")
    lines.append("relations:")
    for e in edges:
        lines.append(f"{e.subject_id}|{e.relation}|{e.object_id}")
    return "\n".join(lines)


def event_segmentation_payload(entity_id: int, rows: list[tuple[int, str, str]]) -> str:
    """Rows are (frame_index, action, node_description)."""
    lines = [f"entity: {entity_id}", "frames:"]
    for frame_index, action, description in rows:
        lines.append(f"{frame_index}|{action}|{description}")
    return "\n".join(lines)


def rerank_payload(grounding: str, candidates: list[str]) -> str:
    lines = [f"grounding: {grounding}", "candidates:"]
    for i, c in enumerate(candidates):
        lines.append(f"{i}|{c}")
    return "\n".join(lines)


def event_analysis_payload(question: str, events) -> str:
    lines = [f"question: {question}", "events:"]
    for ev in events:
        lines.append(f"{ev.start_frame}|{ev.end_frame}|{ev.summary}")
    return "\n".join(lines)


def breakdown_payload(question: str, examples_text: str) -> str:
    return f"question: {question}\nexamples:\n{examples_text}"


def answer_payload(question: str, options: list[str], notes: str = "") -> str:
    lines = [f"question: {question}", "options:"]
    for i, opt in enumerate(options):
        lines.append(f"{i}|{opt}")
    if notes:
        lines.append(f"notes: {notes}")
    return "\n".join(lines)


def event_select_payload(question: str, candidates: list[str], top: int) -> str:
    lines = [f"question: {question}", f"select: {top}", "candidates:"]
    for i, c in enumerate(candidates):
        lines.append(f"{i}|{c}")
    return "\n".join(lines)


# ---------------------------------------------------------------------------

def _header_value(payload: str, key: str) -> str:
    for line in payload.splitlines():
        if line.startswith(key + ":"):
            return line[len(key) + 1 :].strip()
    return ""


def _section_lines(payload: str, key: str) -> list[str]:
    lines = payload.splitlines()
    out: list[str] = []
    active = False
    for line in lines:
        if line.strip() == key + ":":
            active = True
            continue
        if active:
            if re.match(r"^[a-z_]+:\s*$", line.strip()):
                break
            if line.strip():
                out.append(line)
    return out


def _parse_indexed(lines: list[str]) -> list[str]:
    out = []
    for line in lines:
        _, _, rest = line.partition("|")
        out.append(rest)
    return out


class MockBackend:
    """Deterministic offline provider; a pure function of (bundle, seed)."""

    def __init__(self, seed: int = 0, dim: int = 256):
        self.seed = seed
        self.dim = dim
        self._word_cache: dict[str, np.ndarray] = {}

    # -- embeddings

    def _word_vector(self, word: str) -> np.ndarray:
        vec = self._word_cache.get(word)
        if vec is None:
            digest = hashlib.blake2b(
                word.encode("utf-8"), digest_size=8, key=str(self.seed).encode()
            ).digest()
            rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest, "little")))
            vec = rng.standard_normal(self.dim)
            self._word_cache[word] = vec
        return vec

    def embed(self, text: str) -> np.ndarray:
        tokens = words(text)
        if not tokens:
            return np.zeros(self.dim, dtype=np.float64)
        total = np.zeros(self.dim, dtype=np.float64)
        for tok in tokens:
            total += self._word_vector(tok)
        norm = np.linalg.norm(total)
        if norm == 0.0:
            return np.zeros(self.dim, dtype=np.float64)
        return total / norm

    # -- generation

    def generate(self, bundle: PromptBundle) -> str:
        self._check_blocked(bundle)
        handler = getattr(self, f"_role_{bundle.role}")
        return handler(bundle.user_payload)

    def answer(self, bundle: PromptBundle, question: str, options: list[str]) -> int:
        self._check_blocked(bundle)
        if BLOCK_TOKEN in question or any(BLOCK_TOKEN in o for o in options):
            raise BlockedContent("blocked content marker in question or options")
        if not options:
            raise ValueError("at least one option required")
        context = " ".join(desc for _, _, desc in (bundle.frame_refs or []))
        notes = _header_value(bundle.user_payload, "notes")
        haystack = content_words(context) | set(words(notes))
        overlaps = [len(content_words(opt) & haystack) for opt in options]
        best = max(range(len(options)), key=lambda i: (overlaps[i], -i))
        return best

    def _check_blocked(self, bundle: PromptBundle) -> None:
        if BLOCK_TOKEN in bundle.user_payload:
            raise BlockedContent("blocked content marker in payload")
        for _, _, desc in bundle.frame_refs or []:
            if BLOCK_TOKEN in desc:
                raise BlockedContent("blocked content marker in frame description")

    # -- per-role rules

    def _role_frame_graph(self, payload: str) -> str:
        description = _header_value(payload, "description")
        triples: list[str] = []
        for sentence in re.split(r"[.!?]", description):
            mentions = list(re.finditer(r"\[E(\d+)\]", sentence))
            for left, right in zip(mentions, mentions[1:]):
                between = sentence[left.end() : right.start()]
                relation = " ".join(words(between))
                if relation:
                    triples.append(f"{left.group(1)}|{relation}|{right.group(1)}")
        return "\n".join(triples)

    def _role_node_description(self, payload: str) -> str:
        entity_id = int(_header_value(payload, "entity"))
        appearance = _header_value(payload, "appearance")
        action = _header_value(payload, "action")
        rendered = []
        for line in _section_lines(payload, "relations"):
            subj, rel, obj = line.split("|")
            if int(subj) == entity_id:
                rendered.append(f"{rel} entity {obj}")
            else:
                rendered.append(f"entity {subj} {rel}")
        relations = ", ".join(rendered) if rendered else "none"
        return f"entity {entity_id}: {appearance}; {action}; relations: {relations}"

    def _role_event_segmentation(self, payload: str) -> str:
        rows = []
        for line in _section_lines(payload, "frames"):
            frame_str, action, description = line.split("|", 2)
            rows.append((int(frame_str), action, description))
        if not rows:
            return ""
        out = []
        start = rows[0][0]
        for prev, cur in zip(rows, rows[1:]):
            if cur[1] != prev[1]:
                out.append((start, prev[0], prev[1], prev[2]))
                start = cur[0]
        out.append((start, rows[-1][0], rows[-1][1], rows[-1][2]))

        lines = []
        for s, e, action, description in out:
            match = re.match(r"entity \d+: ([^;]+);", description)
            appearance = match.group(1).strip() if match else description
            lines.append(f"{s}|{e}|{appearance} {action}")
        return "\n".join(lines)

    def _role_rerank(self, payload: str) -> str:
        grounding = set(words(_header_value(payload, "grounding")))
        candidates = _parse_indexed(_section_lines(payload, "candidates"))
        overlaps = [len(grounding & set(words(c))) for c in candidates]
        best = max(range(len(candidates)), key=lambda i: (overlaps[i], -i))
        return str(best)

    def _role_event_analysis(self, payload: str) -> str:
        query = content_words(_header_value(payload, "question"))
        events = []
        for line in _section_lines(payload, "events"):
            s, e, summary = line.split("|", 2)
            events.append((int(s), int(e), summary))
        if not events:
            return "0"
        for s, _, summary in events:
            if query and query <= set(words(summary)):
                return str(s)
        return str(events[0][0])

    def _role_breakdown(self, payload: str) -> str:
        question = _header_value(payload, "question")
        return mock_breakdown(question)

    def _role_answer(self, payload: str) -> str:  # pragma: no cover - answer() is the entry
        raise MalformedResponse("answer role must go through answer()")

    def _role_event_select(self, payload: str) -> str:
        question = content_words(_header_value(payload, "question"))
        top = int(_header_value(payload, "select"))
        candidates = _parse_indexed(_section_lines(payload, "candidates"))
        ranked = sorted(
            range(len(candidates)),
            key=lambda i: (-len(question & set(words(candidates[i]))), i),
        )
        return ", ".join(str(i) for i in ranked[:top])


_ARTICLES = {"the", "a", "an"}


def _strip_articles(phrase: str) -> str:
    return " ".join(w for w in phrase.split() if w.lower() not in _ARTICLES)


_BEFORE_AFTER_RE = re.compile(
    r"^what did (?:the |a |an )?(?P<ent>.+?) do (?P<dir>before|after) (?P<evt>.+?)\??$",
    re.IGNORECASE,
)
_COUNT_RE = re.compile(r"^how many (?P<ent>.+?)\??$", re.IGNORECASE)
_PART_RE = re.compile(r"\b(?:at|in|during) the (?P<part>beginning|middle|end)\b", re.IGNORECASE)


def mock_breakdown(question: str) -> str:
    """Template-based question breakdown used by the mock provider."""
    q = question.strip()
    match = _BEFORE_AFTER_RE.match(q)
    if match:
        ent = _strip_articles(match.group("ent"))
        evt = match.group("evt").rstrip(".?! ")
        direction = "previous" if match.group("dir").lower() == "before" else "next"
        return (
            f"analysis: locate the {ent} during '{evt}', find when that event starts, "
            f"then sample the {direction} event\n"
            "plan:\n"
            f'localize_node(query="{ent} {evt}")\n'
            f'analyze_events(query="when did the {ent} start {evt}", node=$1)\n'
            f'sample_entity_events(node=$1, sample_start_time=$2, events_to_sample="{direction}:1")'
        )
    match = _COUNT_RE.match(q)
    if match:
        ent = _strip_articles(match.group("ent"))
        for tail in (" appear", " appears", " are there", " are in the video", " do you see"):
            if ent.lower().endswith(tail):
                ent = ent[: -len(tail)]
                break
        return (
            f"analysis: count distinct entities matching '{ent}'\n"
            "plan:\n"
            f'count_nodes(node_query="{ent}")'
        )
    match = _PART_RE.search(q)
    if match:
        part = match.group("part").lower()
        return (
            f"analysis: the question targets the {part} of the video\n"
            "plan:\n"
            f'extract_temporal_part(target_part="{part}")'
        )
    return "analysis: no decomposition template applies; sample uniformly\nplan:\nget_global_context()"


class RemoteBackend:
    """HTTP provider speaking the minimal {role, system, user, frames?} schema."""

    def __init__(self, endpoint: str, token: str = "", model: str = "",
                 deadline_s: float = 60.0, dim: int = 256):
        if not endpoint:
            raise ValueError("remote backend requires an endpoint")
        self.endpoint = endpoint.rstrip("/")
        self.token = token
        self.model = model
        self.deadline_s = deadline_s
        self.dim = dim

    def _post(self, body: dict) -> dict:
        import requests

        headers = {"Content-Type": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        if self.model:
            body = {**body, "model": self.model}
        try:
            resp = requests.post(
                self.endpoint, json=body, headers=headers, timeout=self.deadline_s
            )
        except (requests.exceptions.Timeout, requests.exceptions.ConnectionError) as exc:
            raise Timeout(f"remote backend unreachable: {exc}") from exc
        if resp.status_code == 451:
            raise BlockedContent("remote provider blocked the request")
        if resp.status_code != 200:
            raise MalformedResponse(f"remote backend returned HTTP {resp.status_code}")
        try:
            return resp.json()
        except ValueError as exc:
            raise MalformedResponse("remote backend returned non-JSON body") from exc

    def generate(self, bundle: PromptBundle) -> str:
        body = {
            "role": bundle.role,
            "system": bundle.system_prompt,
            "user": bundle.user_payload,
        }
        if bundle.frame_refs is not None:
            body["frames"] = [
                {"frame_index": fi, "source_ref": ref, "description": desc}
                for fi, ref, desc in bundle.frame_refs
            ]
        data = self._post(body)
        text = data.get("text", "")
        if not text:
            raise MalformedResponse("remote backend returned empty text")
        return text

    def embed(self, text: str) -> np.ndarray:
        data = self._post({"role": "embed", "system": "", "user": text})
        try:
            vec = np.asarray(json.loads(data["text"]), dtype=np.float64)
        except (KeyError, ValueError, TypeError) as exc:
            raise MalformedResponse("remote backend returned a malformed embedding") from exc
        norm = np.linalg.norm(vec)
        if norm == 0.0:
            return vec
        return vec / norm

    def answer(self, bundle: PromptBundle, question: str, options: list[str]) -> int:
        text = self.generate(bundle)
        match = re.search(r"-?\d+", text)
        if not match:
            raise MalformedResponse(f"expected an option index, got {text!r}")
        idx = int(match.group(0))
        if not 0 <= idx < len(options):
            raise MalformedResponse(f"option index {idx} out of range")
        return idx


def generate_with_retries(backend, bundle: PromptBundle, parse, max_retries: int = 2):
    """Call generate up to ``max_retries`` times, validating with ``parse``.

    ``parse`` receives the raw text and either returns the final value or
    raises ValueError / MalformedResponse. Blocked content and timeouts
    propagate immediately; only validation failures are retried.
    """
    last: Exception | None = None
    for _ in range(max(1, max_retries)):
        try:
            text = backend.generate(bundle)
        except (BlockedContent, Timeout):
            raise
        try:
            return parse(text)
        except (ValueError, MalformedResponse) as exc:
            last = exc
    raise MalformedResponse(f"backend response invalid after retries: {last}")
