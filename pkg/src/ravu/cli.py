"""Command-line interface for the video-graph QA pipeline."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import graph_model
from .backends import MockBackend, RemoteBackend
from .config import RavuConfig, load_config
from .datasets import dump_loc, dump_mcq, load_loc, load_mcq
from .errors import RavuError
from .evaluate import (
    VideoAssets,
    answer_question,
    build_video,
    eval_localization,
    eval_qa,
    report_to_csv,
    report_to_json,
)
from .graph_builder import read_embeddings, write_embeddings
from .graph_model import SpatioTemporalGraph
from .index import EmbeddingIndex
from .ingestion import associate, parse_observations, parse_tracklets
from .plan import render
from .synth import make_corpus


def make_backend(cfg: RavuConfig):
    if cfg.backend == "mock":
        return MockBackend(seed=cfg.mock_seed, dim=cfg.embed_dim)
    if cfg.backend == "remote":
        return RemoteBackend(
            cfg.endpoint, token=cfg.token, model=cfg.model,
            deadline_s=cfg.deadline_s, dim=cfg.embed_dim,
        )
    raise click.ClickException(f"unknown backend {cfg.backend!r}")


def _load_graph(path: str) -> SpatioTemporalGraph:
    return graph_model.deserialize(Path(path).read_text())


def _load_corpus(corpus_dir: str, cfg: RavuConfig, backend) -> dict[str, VideoAssets]:
    assets: dict[str, VideoAssets] = {}
    for video_dir in sorted(p for p in Path(corpus_dir).iterdir() if p.is_dir()):
        obs = video_dir / "observations.jsonl"
        tracks = video_dir / "tracklets.json"
        if not obs.exists() or not tracks.exists():
            continue
        assets[video_dir.name] = build_video(
            obs.read_text(), tracks.read_text(), backend, cfg
        )
    return assets


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON config file; defaults to $RAVU_CONFIG.")
@click.pass_context
def main(ctx, config_path):
    """Build spatio-temporal video graphs and answer questions over them."""
    ctx.ensure_object(dict)
    try:
        ctx.obj["config"] = load_config(config_path)
    except RavuError as exc:
        raise click.ClickException(str(exc))


@main.command()
@click.option("--observations", required=True, type=click.Path(exists=True))
@click.option("--tracklets", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.pass_context
def ingest(ctx, observations, tracklets, out):
    """Associate per-frame observations with tracklets into a partial graph."""
    cfg = ctx.obj["config"]
    try:
        obs = parse_observations(Path(observations).read_text())
        tracks = parse_tracklets(Path(tracklets).read_text())
        assoc = associate(obs, tracks, min_iou=cfg.min_iou, fps=cfg.fps)
    except RavuError as exc:
        raise click.ClickException(str(exc))
    graph = SpatioTemporalGraph(
        frames=assoc.frames, nodes=assoc.nodes, edges=[], events={}, fps=cfg.fps
    )
    Path(out).write_text(graph_model.serialize(graph))
    click.echo(f"wrote {out}: {len(graph.frames)} frames, {len(graph.nodes)} nodes")


@main.command()
@click.option("--observations", required=True, type=click.Path(exists=True))
@click.option("--tracklets", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path())
@click.pass_context
def build(ctx, observations, tracklets, out):
    """Full build: association, relation edges, descriptions, events."""
    cfg = ctx.obj["config"]
    backend = make_backend(cfg)
    try:
        assets = build_video(
            Path(observations).read_text(), Path(tracklets).read_text(), backend, cfg
        )
    except RavuError as exc:
        raise click.ClickException(str(exc))
    Path(out).write_text(graph_model.serialize(assets.graph))
    report = assets.build_report
    click.echo(
        f"wrote {out}: {len(assets.graph.nodes)} nodes, {len(assets.graph.edges)} edges, "
        f"{report.dropped_edge_lines} dropped edge lines, "
        f"{len(report.fallback_entities)} segmentation fallbacks"
    )


@main.command()
@click.option("--graph", "graph_path", required=True, type=click.Path(exists=True))
@click.option("--out", required=True, type=click.Path(),
              help="Embeddings binary; the row index goes to <out>.index.jsonl.")
@click.pass_context
def embed(ctx, graph_path, out):
    """Embed all node descriptions of a built graph."""
    from .graph_builder import embed_graph

    cfg = ctx.obj["config"]
    backend = make_backend(cfg)
    graph = _load_graph(graph_path)
    try:
        records = embed_graph(graph, backend)
    except RavuError as exc:
        raise click.ClickException(str(exc))
    index_path = f"{out}.index.jsonl"
    write_embeddings(records, out, index_path)
    click.echo(f"wrote {len(records)} vectors to {out} (+ {index_path})")


@main.command()
@click.option("--graph", "graph_path", required=True, type=click.Path(exists=True))
@click.option("--entity", type=int, default=None, help="Restrict to one entity id.")
@click.pass_context
def events(ctx, graph_path, entity):
    """Print the event timeline of a built graph."""
    graph = _load_graph(graph_path)
    for entity_id in graph.entity_ids():
        if entity is not None and entity_id != entity:
            continue
        for ev in sorted(graph.events.get(entity_id, []), key=lambda e: e.start_frame):
            click.echo(f"entity {entity_id}: [{ev.start_frame}, {ev.end_frame}] {ev.summary}")


@main.command()
@click.option("--graph", "graph_path", required=True, type=click.Path(exists=True))
@click.option("--embeddings", "emb_path", required=True, type=click.Path(exists=True))
@click.option("--question", required=True)
@click.option("--option", "options", multiple=True,
              help="Answer options; repeat for each. Omit to only retrieve frames.")
@click.option("--category", default="temporal",
              type=click.Choice(["causal", "temporal", "descriptive", "global"]))
@click.option("--budget", type=int, default=None)
@click.pass_context
def ask(ctx, graph_path, emb_path, question, options, category, budget):
    """Answer a question (or just retrieve frames) over one built video."""
    from .datasets import McqItem
    from .reasoning import breakdown, execute, load_example_library

    cfg = ctx.obj["config"]
    backend = make_backend(cfg)
    budget = budget if budget is not None else cfg.budget
    graph = _load_graph(graph_path)
    records = read_embeddings(emb_path, f"{emb_path}.index.jsonl", graph)
    index = EmbeddingIndex(records)

    try:
        if options:
            item = McqItem(
                question=question, options=list(options), answer_index=0,
                category=category, video_id="cli",
            )
            audit = answer_question(
                VideoAssets(graph, index, None), item, backend,
                budget=budget, top_k=cfg.top_k, per_event=cfg.hier_per_event,
            )
            out = {
                "choice": audit.choice,
                "answer": list(options)[audit.choice],
                "frames": audit.frames,
                "plan": render(audit.plan) if audit.plan else None,
                "flags": audit.flags,
            }
        else:
            bd = breakdown(question, load_example_library(), backend)
            result = execute(bd.plan, graph, index, backend, budget=budget, top_k=cfg.top_k)
            out = {
                "frames": result.frames,
                "plan": render(bd.plan),
                "notes": result.notes,
                "flags": result.flags + (["breakdown fallback"] if bd.fallback else []),
            }
    except RavuError as exc:
        raise click.ClickException(str(exc))
    click.echo(json.dumps(out, indent=2, sort_keys=True))


@main.group(name="eval")
def eval_group():
    """Accuracy evaluations over a corpus directory."""


@eval_group.command(name="qa")
@click.option("--corpus", required=True, type=click.Path(exists=True),
              help="Directory with one subdirectory per video.")
@click.option("--dataset", required=True, type=click.Path(exists=True),
              help="Multiple-choice questions, one JSON object per line.")
@click.option("--out", default=None, type=click.Path(), help="Report file.")
@click.option("--fmt", "fmt", default="json", type=click.Choice(["json", "csv"]))
@click.pass_context
def eval_qa_cmd(ctx, corpus, dataset, out, fmt):
    """Multiple-choice accuracy by category, in both blocked-content modes."""
    cfg = ctx.obj["config"]
    backend = make_backend(cfg)
    try:
        items = load_mcq(dataset)
        assets = _load_corpus(corpus, cfg, backend)
        report = eval_qa(items, assets, backend, budget=cfg.budget, top_k=cfg.top_k)
    except RavuError as exc:
        raise click.ClickException(str(exc))
    text = report_to_csv(report) if fmt == "csv" else report_to_json(report)
    if out:
        Path(out).write_text(text)
        click.echo(f"wrote {out}")
    else:
        click.echo(text, nl=False)


@eval_group.command(name="loc")
@click.option("--corpus", required=True, type=click.Path(exists=True))
@click.option("--dataset", required=True, type=click.Path(exists=True))
@click.option("--method", default="rerank",
              type=click.Choice(["rerank", "text_embedding", "raw_vector"]))
@click.option("--out", default=None, type=click.Path())
@click.option("--fmt", "fmt", default="json", type=click.Choice(["json", "csv"]))
@click.pass_context
def eval_loc_cmd(ctx, corpus, dataset, method, out, fmt):
    """Frame-localization accuracy for one retrieval method."""
    cfg = ctx.obj["config"]
    backend = make_backend(cfg)
    try:
        annotations = load_loc(dataset)
        assets = _load_corpus(corpus, cfg, backend)
        report = eval_localization(annotations, assets, backend, method=method, top_k=cfg.top_k)
    except RavuError as exc:
        raise click.ClickException(str(exc))
    text = report_to_csv(report) if fmt == "csv" else report_to_json(report)
    if out:
        Path(out).write_text(text)
        click.echo(f"wrote {out}")
    else:
        click.echo(text, nl=False)


@main.command()
@click.option("--seed", type=int, required=True)
@click.option("--videos", type=int, default=50)
@click.option("--frames", type=int, default=24)
@click.option("--entities", type=int, default=3)
@click.option("--questions", type=int, default=4)
@click.option("--out", required=True, type=click.Path())
def synth(seed, videos, frames, entities, questions, out):
    """Generate a synthetic corpus with ground-truth QA and localization."""
    worlds = make_corpus(seed, n_videos=videos, n_frames=frames,
                         n_entities=entities, questions_per_video=questions)
    root = Path(out)
    root.mkdir(parents=True, exist_ok=True)
    all_mcq, all_loc = [], []
    for world in worlds:
        video_dir = root / world.video_id
        video_dir.mkdir(exist_ok=True)
        (video_dir / "observations.jsonl").write_text(world.observations_text)
        (video_dir / "tracklets.json").write_text(world.tracklets_text)
        all_mcq.extend(world.questions)
        all_loc.extend(world.loc_annotations)
    (root / "questions.jsonl").write_text(dump_mcq(all_mcq))
    (root / "localization.jsonl").write_text(dump_loc(all_loc))
    click.echo(
        f"wrote {len(worlds)} videos, {len(all_mcq)} questions, "
        f"{len(all_loc)} localization annotations to {out}"
    )


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
