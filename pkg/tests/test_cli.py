import json

import pytest
from click.testing import CliRunner

from ravu.cli import main


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    runner = CliRunner()
    result = runner.invoke(
        main, ["synth", "--seed", "3", "--videos", "2", "--out", str(root)]
    )
    assert result.exit_code == 0, result.output
    return root


def video_dir(corpus_dir):
    return sorted(p for p in corpus_dir.iterdir() if p.is_dir())[0]


def test_synth_layout(corpus_dir):
    assert (corpus_dir / "questions.jsonl").exists()
    assert (corpus_dir / "localization.jsonl").exists()
    vd = video_dir(corpus_dir)
    assert (vd / "observations.jsonl").exists()
    assert (vd / "tracklets.json").exists()


def test_ingest_build_embed_events_ask(corpus_dir, tmp_path):
    runner = CliRunner()
    vd = video_dir(corpus_dir)
    obs, tracks = str(vd / "observations.jsonl"), str(vd / "tracklets.json")

    partial = tmp_path / "partial.json"
    result = runner.invoke(
        main, ["ingest", "--observations", obs, "--tracklets", tracks, "--out", str(partial)]
    )
    assert result.exit_code == 0, result.output
    assert json.loads(partial.read_text())["frames"]

    graph = tmp_path / "graph.json"
    result = runner.invoke(
        main, ["build", "--observations", obs, "--tracklets", tracks, "--out", str(graph)]
    )
    assert result.exit_code == 0, result.output

    emb = tmp_path / "embeddings.bin"
    result = runner.invoke(main, ["embed", "--graph", str(graph), "--out", str(emb)])
    assert result.exit_code == 0, result.output
    assert emb.exists() and (tmp_path / "embeddings.bin.index.jsonl").exists()

    result = runner.invoke(main, ["events", "--graph", str(graph)])
    assert result.exit_code == 0, result.output
    assert "entity 0:" in result.output

    item = json.loads((corpus_dir / "questions.jsonl").read_text().splitlines()[0])
    args = [
        "ask", "--graph", str(graph), "--embeddings", str(emb),
        "--question", item["question"], "--category", item["category"],
    ]
    for opt in item["options"]:
        args += ["--option", opt]
    result = runner.invoke(main, args)
    assert result.exit_code == 0, result.output
    out = json.loads(result.output)
    assert out["choice"] == item["answer_index"]
    assert len(out["frames"]) <= 5

    # Retrieval-only mode (no options)
    result = runner.invoke(
        main, ["ask", "--graph", str(graph), "--embeddings", str(emb),
               "--question", item["question"]]
    )
    assert result.exit_code == 0, result.output
    out = json.loads(result.output)
    assert out["frames"] and "plan" in out


def test_eval_qa_and_loc(corpus_dir, tmp_path):
    runner = CliRunner()
    report_path = tmp_path / "qa.json"
    result = runner.invoke(
        main,
        ["eval", "qa", "--corpus", str(corpus_dir),
         "--dataset", str(corpus_dir / "questions.jsonl"), "--out", str(report_path)],
    )
    assert result.exit_code == 0, result.output
    report = json.loads(report_path.read_text())
    assert report["overall"]["non_blocked_accuracy"] == 1.0

    result = runner.invoke(
        main,
        ["eval", "loc", "--corpus", str(corpus_dir),
         "--dataset", str(corpus_dir / "localization.jsonl"),
         "--method", "rerank", "--fmt", "csv"],
    )
    assert result.exit_code == 0, result.output
    assert result.output.splitlines()[0] == "category,metric,value"


def test_config_file_respected(tmp_path):
    cfg = tmp_path / "config.json"
    cfg.write_text(json.dumps({"backend": "unknown-kind"}))
    runner = CliRunner()
    result = runner.invoke(
        main, ["--config", str(cfg), "synth", "--seed", "1", "--videos", "1",
               "--out", str(tmp_path / "c")]
    )
    # synth does not need a backend, so it still succeeds
    assert result.exit_code == 0, result.output

    result = runner.invoke(
        main, ["--config", str(cfg), "events", "--graph", str(tmp_path / "missing.json")]
    )
    assert result.exit_code != 0


def test_ingest_error_is_clean(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text("{not json}\n")
    tracks = tmp_path / "tracks.json"
    tracks.write_text('{"tracks": []}')
    runner = CliRunner()
    result = runner.invoke(
        main, ["ingest", "--observations", str(bad), "--tracklets", str(tracks),
               "--out", str(tmp_path / "g.json")]
    )
    assert result.exit_code != 0
    assert "invalid JSON" in result.output
