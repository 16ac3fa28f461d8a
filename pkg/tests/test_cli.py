import json
from pathlib import Path

import numpy as np
import pytest

from selftalk import data
from selftalk.cli import main
from selftalk.generator import QuestionGenerator, GeneratorConfig, init_params
from selftalk.vocab import build_vocab

FIXTURES = Path(__file__).parent / "fixtures"


def run(*argv):
    return main([str(a) for a in argv])


@pytest.fixture(scope="module")
def world(tmp_path_factory):
    """A tiny trained pipeline shared by the CLI tests."""
    root = tmp_path_factory.mktemp("world")
    assert run("gen-data", "--scenes", 12, "--seed", 5, "--out", root / "data") == 0
    assert run(
        "train-qg", "--data", root / "data/records.jsonl", "--features", root / "data/features.jsonl",
        "--out", root / "qgen.json", "--epochs", 2, "--seed", 5, "--hidden", 10, "--embed", 6,
    ) == 0
    assert run(
        "train-qa", "--data", root / "data/records.jsonl", "--features", root / "data/features.jsonl",
        "--out", root / "vqa.json", "--epochs", 2, "--seed", 5, "--hidden", 10, "--embed", 6,
    ) == 0
    return root


def test_gen_data_outputs_and_manifest(tmp_path):
    out = tmp_path / "mw"
    assert run("gen-data", "--scenes", 5, "--seed", 3, "--out", out) == 0
    assert (out / "records.jsonl").exists()
    assert (out / "features.jsonl").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "gen-data"
    assert manifest["seed"] == 3
    assert set(manifest["outputs"]) == {str(out / "records.jsonl"), str(out / "features.jsonl")}


def test_gen_data_refuses_overwrite_without_force(tmp_path):
    out = tmp_path / "mw"
    assert run("gen-data", "--scenes", 3, "--seed", 1, "--out", out) == 0
    assert run("gen-data", "--scenes", 3, "--seed", 1, "--out", out) == 1
    assert run("gen-data", "--scenes", 3, "--seed", 1, "--out", out, "--force") == 0


def test_gen_data_rerun_is_bit_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("gen-data", "--scenes", 6, "--seed", 9, "--out", a) == 0
    assert run("gen-data", "--scenes", 6, "--seed", 9, "--out", b) == 0
    assert (a / "records.jsonl").read_bytes() == (b / "records.jsonl").read_bytes()
    assert (a / "features.jsonl").read_bytes() == (b / "features.jsonl").read_bytes()


def test_train_qg_epochs_zero_equals_fresh_init(tmp_path):
    out = tmp_path / "mw"
    assert run("gen-data", "--scenes", 5, "--seed", 3, "--out", out) == 0
    ckpt = tmp_path / "q.json"
    assert run(
        "train-qg", "--data", out / "records.jsonl", "--features", out / "features.jsonl",
        "--out", ckpt, "--epochs", 0, "--seed", 11, "--hidden", 7, "--embed", 5,
    ) == 0
    model = QuestionGenerator.load(ckpt)
    records, _ = data.load_dataset(out / "records.jsonl")
    vocab = build_vocab([r.question for r in records], 1)
    config = GeneratorConfig(vocab_size=vocab.size, feature_dim=data.FEATURE_DIM, embed_dim=5, hidden_dim=7, max_len=20)
    fresh = init_params(config, np.random.default_rng(11))
    assert model.params.allclose(fresh)
    assert model.vocab == vocab


def test_train_writes_trace_figure_and_manifest(world):
    assert (world / "qgen.trace.csv").exists()
    assert (world / "qgen.loss.png").exists()
    manifest = json.loads((world / "qgen.manifest.json").read_text())
    assert manifest["command"] == "train-qg"
    trace = (world / "qgen.trace.csv").read_text().splitlines()
    assert trace[0] == "epoch,mean_loss"
    assert len(trace) == 3
    qa_trace = (world / "vqa.trace.csv").read_text().splitlines()
    assert qa_trace[0] == "epoch,mean_loss,heldout_accuracy"


def test_ask_writes_questions(world, tmp_path):
    out = tmp_path / "questions.jsonl"
    assert run(
        "ask", "--checkpoint", world / "qgen.json", "--features", world / "data/features.jsonl",
        "--mode", "sample", "--n", 2, "--seed", 4, "--out", out,
    ) == 0
    rows = [json.loads(line) for line in out.read_text().splitlines()]
    assert len(rows) == 2 * 12
    assert all(set(r) == {"image_id", "question", "log_prob", "mode"} for r in rows)


def test_answer_outputs_result(world, tmp_path, capsys):
    assert run(
        "answer", "--checkpoint", world / "vqa.json", "--features", world / "data/features.jsonl",
        "--image-id", "mw5_00000", "--question", "what is on the left",
    ) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["image_id"] == "mw5_00000"
    assert 0.0 < doc["confidence"] <= 1.0
    assert abs(sum(doc["distribution"].values()) - 1.0) < 1e-9


def test_talk_default_n_is_five(world, tmp_path):
    out = tmp_path / "transcripts.jsonl"
    assert run(
        "talk", "--generator", world / "qgen.json", "--answerer", world / "vqa.json",
        "--features", world / "data/features.jsonl", "--image-id", "mw5_00001",
        "--seed", 8, "--out", out,
    ) == 0
    docs = [json.loads(line) for line in out.read_text().splitlines()]
    assert len(docs) == 1
    assert len(docs[0]["pairs"]) == 5
    manifest = json.loads((tmp_path / "transcripts.manifest.json").read_text())
    assert set(manifest["checkpoint_hashes"]) == {"generator", "answerer"}


def test_talk_reruns_bit_identically(world, tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    for out in (a, b):
        assert run(
            "talk", "--generator", world / "qgen.json", "--answerer", world / "vqa.json",
            "--features", world / "data/features.jsonl", "--n", 3, "--seed", 21, "--out", out,
        ) == 0
    assert a.read_bytes() == b.read_bytes()


def test_score_emits_all_columns(world, tmp_path, capsys):
    cands = tmp_path / "cands.jsonl"
    refs = tmp_path / "refs.jsonl"
    cands.write_text(
        json.dumps({"id": "a", "text": "what color is the cube"}) + "\n"
        + json.dumps({"id": "b", "text": "what is on the left"}) + "\n"
    )
    refs.write_text(
        json.dumps({"id": "a", "refs": ["what color is the cube"]}) + "\n"
        + json.dumps({"id": "b", "refs": ["what is on the right", "what is on the left"]}) + "\n"
    )
    out = tmp_path / "report.json"
    assert run("score", "--candidates", cands, "--references", refs, "--out", out) == 0
    table = capsys.readouterr().out
    for column in ("CIDEr", "METEOR", "ROUGE_L", "Bleu-1", "Bleu-2", "Bleu-3", "Bleu-4"):
        assert column in table
    report = json.loads(out.read_text())
    assert report["items"] == 2
    assert report["bleu_1"] == pytest.approx(1.0)
    assert (tmp_path / "report.txt").exists()
    assert (tmp_path / "report.png").exists()


def test_exit_codes():
    # usage error: unknown flag
    assert run("gen-data", "--bogus") == 1
    # usage error: missing subcommand arguments
    assert run("train-qg") == 1
    # data error: nonexistent input file
    assert run("score", "--candidates", "/nonexistent.jsonl", "--references", "/nonexistent.jsonl",
               "--out", "/tmp/selftalk-never-written.json") == 2


def test_error_lines_are_machine_parsable(capsys, tmp_path):
    run("ask", "--checkpoint", "/does/not/exist.json", "--features", "/none.jsonl")
    err = capsys.readouterr().err.strip().splitlines()[-1]
    doc = json.loads(err)
    assert doc["code"] == 2
    assert "error" in doc


def test_gradcheck_passes_quickly(capsys):
    assert run("gradcheck", "--model", "both") == 0
    out = capsys.readouterr().out
    assert "qgen" in out and "vqa" in out and "PASS" in out


def test_score_failure_removes_partial_outputs(tmp_path):
    cands = tmp_path / "cands.jsonl"
    refs = tmp_path / "refs.jsonl"
    cands.write_text(json.dumps({"id": "a", "text": "hello there"}) + "\n")
    refs.write_text(json.dumps({"id": "other", "refs": ["hello"]}) + "\n")
    out = tmp_path / "report.json"
    assert run("score", "--candidates", cands, "--references", refs, "--out", out) == 2
    assert not out.exists()
    assert not (tmp_path / "report.txt").exists()
