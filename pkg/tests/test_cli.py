import json

import pytest

from cliniclm.cli import main


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory):
    """Run the CLI end to end with tiny settings; return the work dir."""
    work = tmp_path_factory.mktemp("cli")
    assert main(["demo-data", "--out-dir", str(work / "data"), "--docs", "80", "--seed", "1"]) == 0
    assert (
        main(
            [
                "train-tokenizer",
                "--corpus", str(work / "data" / "notes.jsonl"),
                "--vocab-size", "400",
                "--out", str(work / "vocab.json"),
            ]
        )
        == 0
    )
    (work / "model.json").write_text(json.dumps({"n_layers": 1, "hidden": 32, "n_heads": 2, "context_len": 128}))
    assert (
        main(
            [
                "train",
                "--config", str(work / "model.json"),
                "--corpus", str(work / "data" / "notes.jsonl"),
                "--vocab", str(work / "vocab.json"),
                "--steps", "5",
                "--batch", "4",
                "--seq-len", "32",
                "--out", str(work / "model.npz"),
            ]
        )
        == 0
    )
    return work


class TestPipeline:
    def test_generate_emits_records(self, pipeline_dir, capsys):
        rc = main(
            [
                "generate",
                "--ckpt", str(pipeline_dir / "model.npz"),
                "--vocab", str(pipeline_dir / "vocab.json"),
                "--prompt", "The patient reports",
                "--max-tokens", "16",
                "--n-variants", "2",
            ]
        )
        assert rc == 0
        lines = [l for l in capsys.readouterr().out.strip().splitlines() if l.startswith("{")]
        assert len(lines) == 2
        rec = json.loads(lines[0])
        assert rec["top_p"] == 0.9 and rec["temperature"] == 1.2
        assert rec["output_token_count"] <= 16

    def test_seed_extraction_and_corpus(self, pipeline_dir, capsys):
        rc = main(
            [
                "extract-seeds",
                "--corpus", str(pipeline_dir / "data" / "notes.jsonl"),
                "--vocab", str(pipeline_dir / "vocab.json"),
                "--out", str(pipeline_dir / "seeds.jsonl"),
            ]
        )
        assert rc == 0
        rc = main(
            [
                "generate-corpus",
                "--ckpt", str(pipeline_dir / "model.npz"),
                "--vocab", str(pipeline_dir / "vocab.json"),
                "--seeds", str(pipeline_dir / "seeds.jsonl"),
                "--target-words", "200",
                "--variants", "2",
                "--max-tokens", "24",
                "--out", str(pipeline_dir / "synthetic.jsonl"),
            ]
        )
        assert rc == 0
        manifest = json.loads((pipeline_dir / "synthetic.jsonl.manifest.json").read_text())
        assert manifest["complete"]
        assert manifest["total_words"] >= 200

    def test_deid_command(self, pipeline_dir, capsys):
        rc = main(
            [
                "deid",
                "--in", str(pipeline_dir / "data" / "notes_with_phi.jsonl"),
                "--out", str(pipeline_dir / "deid.jsonl"),
                "--report", str(pipeline_dir / "deid_report.json"),
            ]
        )
        assert rc == 0
        report = json.loads((pipeline_dir / "deid_report.json").read_text())
        assert sum(report.values()) > 0
        body = (pipeline_dir / "deid.jsonl").read_text()
        assert "[**NAME**]" in body or "[**DATE**]" in body

    def test_eval_re_command(self, pipeline_dir, capsys):
        data = pipeline_dir / "re_eval.jsonl"
        rows = [
            {
                "gold": [{"head": "a", "tail": "b", "relation": "r"}],
                "generated": "the relation between [a] and [b] is [r]",
            },
            {
                "gold": [{"head": "c", "tail": "d", "relation": "q"}],
                "generated": "no relation",
            },
        ]
        data.write_text("\n".join(json.dumps(r) for r in rows))
        assert main(["eval-re", "--data", str(data)]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["tp"] == 1 and out["fn"] == 1

    def test_eval_qa_command(self, pipeline_dir, capsys):
        data = pipeline_dir / "qa_eval.jsonl"
        rows = [
            {"question": "q1", "choices": ["x", "y"], "gold": "A", "generated": "(A) x"},
            {"question": "q2", "choices": ["x", "y"], "gold": "B", "generated": "(A)"},
        ]
        data.write_text("\n".join(json.dumps(r) for r in rows))
        assert main(["eval-qa", "--data", str(data)]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["correct"] == 1 and out["n"] == 2


class TestReviewCli:
    def test_ingest_and_report(self, tmp_path, capsys):
        ai = tmp_path / "ai.txt"
        human = tmp_path / "human.txt"
        ai.write_text("\n\n".join(f"machine written passage {i}" for i in range(3)))
        human.write_text("\n\n".join(f"clinician written passage {i}" for i in range(3)))
        rc = main(
            [
                "review", "ingest",
                "--ai", str(ai),
                "--human", str(human),
                "--raters", "r1,r2",
                "--seed", "3",
                "--data-dir", str(tmp_path / "reviews"),
            ]
        )
        assert rc == 0
        out = capsys.readouterr().out
        assert "6 items" in out

    def test_export_one_rating_per_line(self, tmp_path, capsys):
        from cliniclm.review.core import SessionStore

        store = SessionStore(tmp_path / "reviews")
        session = store.create_session(["gen one", "gen two"], ["real one", "real two"], ["r1"], 5)
        for item in session.items:
            store.submit_rating(session.session_id, "r1", item.item_id, 6, 7, "Human")
        rc = main(["review", "export", "--session", session.session_id, "--data-dir", str(tmp_path / "reviews")])
        assert rc == 0
        import json as _json

        lines = [l for l in capsys.readouterr().out.splitlines() if l.strip()]
        assert len(lines) == 4
        assert all("origin_guess" in _json.loads(l) for l in lines)
