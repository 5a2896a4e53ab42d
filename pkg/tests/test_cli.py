import io
import json

import numpy as np
import pytest

from rodec.cli import main, tokenize_longest_match
from rodec.lattice import Vocabulary, read_manifest
from rodec.tdt import save_joiner

from conftest import random_joiner

WORDS = ["ana", "are", "mere", "pere", "multe", "nuci", "toamna", "vine"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    tokens = ["▁" + w for w in WORDS] + ["<unk>", "<blk>"]
    vocab = Vocabulary(tuple(tokens), len(tokens) - 1)
    vocab.save(root / "vocab.txt")
    sentences = [
        "ana are mere",
        "ana are pere",
        "ana are multe nuci",
        "toamna vine",
        "mere mere mere",
    ]
    (root / "sentences.txt").write_text("\n".join(sentences) + "\n")
    (root / "corpus.txt").write_text("\n".join(sentences * 30) + "\n")
    rc = main([
        "synth", "--vocab", str(root / "vocab.txt"),
        "--text", str(root / "sentences.txt"),
        "--out-dir", str(root / "data"), "--seed", "3",
    ])
    assert rc == 0
    rc = main([
        "lm-build", str(root / "corpus.txt"),
        "--vocab", str(root / "vocab.txt"),
        "--order", "3", "--out", str(root / "lm.arpa"),
    ])
    assert rc == 0
    return root, vocab


class TestTokenizeLongestMatch:
    def test_prefers_longest(self):
        v = Vocabulary(("<blk>", "▁a", "▁ab", "b"), 0)
        assert tokenize_longest_match("ab", v) == [2]

    def test_falls_back_to_pieces(self):
        v = Vocabulary(("<blk>", "▁a", "b"), 0)
        assert tokenize_longest_match("ab", v) == [1, 2]

    def test_uncoverable_char_maps_to_unk(self):
        v = Vocabulary(("<blk>", "▁a", "<unk>"), 0)
        assert tokenize_longest_match("aq", v) == [1, 2]

    def test_roundtrip_on_coverable_text(self, workspace):
        _, vocab = workspace
        text = "ana are multe mere"
        assert vocab.decode(tokenize_longest_match(text, vocab)) == text


class TestDecodeCli:
    @pytest.mark.parametrize("strategy,manifest", [
        ("ctc-greedy", "manifest.jsonl"),
        ("ctc-beam", "manifest.jsonl"),
        ("tdt-greedy", "joiner_manifest.jsonl"),
        ("alsd", "joiner_manifest.jsonl"),
    ])
    def test_noiseless_decode_scores_zero_wer(self, workspace, tmp_path, strategy, manifest):
        root, _ = workspace
        hyp = tmp_path / f"{strategy}.jsonl"
        argv = [
            "decode", "--manifest", str(root / "data" / manifest),
            "--vocab", str(root / "vocab.txt"), "--strategy", strategy,
            "--out", str(hyp),
        ]
        if strategy == "ctc-beam":
            argv += ["--lm", str(root / "lm.arpa")]
        assert main(argv) == 0
        report = tmp_path / "report.json"
        rc = main([
            "score", "--ref", str(root / "data" / manifest),
            "--hyp", str(hyp), "--out", str(report),
        ])
        assert rc == 0
        assert json.loads(report.read_text())["wer"] == 0.0

    def test_transcript_fields_and_decomposition(self, workspace, tmp_path):
        root, _ = workspace
        hyp = tmp_path / "h.jsonl"
        main([
            "decode", "--manifest", str(root / "data" / "manifest.jsonl"),
            "--vocab", str(root / "vocab.txt"), "--strategy", "ctc-beam",
            "--lm", str(root / "lm.arpa"), "--alpha", "0.9", "--beta", "2",
            "--beam", "32", "--out", str(hyp),
        ])
        for line in hyp.read_text().splitlines():
            obj = json.loads(line)
            assert set(obj) == {
                "id", "text", "tokens", "acoustic_score", "lm_score",
                "length_bonus", "total_score",
            }
            assert obj["total_score"] == pytest.approx(
                obj["acoustic_score"] + 0.9 * obj["lm_score"] + obj["length_bonus"]
            )
            assert obj["length_bonus"] == 2.0 * len(obj["tokens"])

    def test_timings_flag_adds_seconds(self, workspace, tmp_path):
        root, _ = workspace
        hyp = tmp_path / "h.jsonl"
        main([
            "decode", "--manifest", str(root / "data" / "manifest.jsonl"),
            "--vocab", str(root / "vocab.txt"), "--strategy", "ctc-greedy",
            "--timings", "--out", str(hyp),
        ])
        obj = json.loads(hyp.read_text().splitlines()[0])
        assert obj["decode_s"] >= 0

    def test_decode_deterministic_across_runs_and_workers(self, workspace, tmp_path):
        root, _ = workspace
        outs = []
        for run, workers in ((0, "1"), (1, "4"), (2, "4")):
            path = tmp_path / f"d{run}.jsonl"
            main([
                "decode", "--manifest", str(root / "data" / "manifest.jsonl"),
                "--vocab", str(root / "vocab.txt"), "--strategy", "ctc-beam",
                "--lm", str(root / "lm.arpa"), "--workers", workers,
                "--out", str(path),
            ])
            outs.append(path.read_bytes())
        assert outs[0] == outs[1] == outs[2]

    def test_strategy_input_mismatch_exits_2(self, workspace, capsys):
        root, _ = workspace
        rc = main([
            "decode", "--manifest", str(root / "data" / "manifest.jsonl"),
            "--vocab", str(root / "vocab.txt"), "--strategy", "alsd",
        ])
        assert rc == 2
        assert "joiner" in capsys.readouterr().err

    def test_decode_failure_exits_3(self, workspace, tmp_path, capsys):
        root, vocab = workspace
        joiner = random_joiner(np.random.default_rng(0), 3, len(vocab) - 1, (2,), k=0)
        save_joiner(joiner, tmp_path / "odd.tdt")
        (tmp_path / "m.jsonl").write_text(
            json.dumps({"id": "odd", "lattice": "odd.tdt", "text": "x", "duration": 1.0}) + "\n"
        )
        rc = main([
            "decode", "--manifest", str(tmp_path / "m.jsonl"),
            "--vocab", str(root / "vocab.txt"), "--strategy", "alsd",
        ])
        assert rc == 3
        assert "odd" in capsys.readouterr().err

    def test_usage_error_exits_1(self):
        assert main(["decode", "--strategy", "bogus"]) == 1

    def test_missing_input_file_exits_2(self, workspace, capsys):
        root, _ = workspace
        rc = main([
            "decode", "--manifest", "no-such-manifest.jsonl",
            "--vocab", str(root / "vocab.txt"), "--strategy", "ctc-greedy",
        ])
        assert rc == 2
        assert "no-such-manifest" in capsys.readouterr().err

    def test_config_file_layering(self, workspace, tmp_path, capsys):
        root, _ = workspace
        config = tmp_path / "run.conf"
        config.write_text("beam=2\nalpha=0.5\n")
        hyp = tmp_path / "h.jsonl"
        rc = main([
            "decode", "--config", str(config),
            "--manifest", str(root / "data" / "manifest.jsonl"),
            "--vocab", str(root / "vocab.txt"), "--strategy", "ctc-beam",
            "--alpha", "0.7", "--out", str(hyp),
        ])
        assert rc == 0
        err = capsys.readouterr().err
        resolved = json.loads(err.split("resolved config: ", 1)[1].splitlines()[0])
        assert resolved["beam"] == 2      # from config file
        assert resolved["alpha"] == 0.7   # explicit flag wins


class TestLmCli:
    def test_lm_build_deterministic(self, workspace, tmp_path):
        root, _ = workspace
        a1, a2 = tmp_path / "a1.arpa", tmp_path / "a2.arpa"
        for out in (a1, a2):
            rc = main([
                "lm-build", str(root / "corpus.txt"),
                "--vocab", str(root / "vocab.txt"),
                "--order", "6", "--prune", "0,1,3,5",
                "--top-k", "500000", "--out", str(out),
            ])
            assert rc == 0
        assert a1.read_bytes() == a2.read_bytes()

    def test_lm_ppl_reports_value(self, workspace, capsys):
        root, _ = workspace
        rc = main([
            "lm-ppl", str(root / "corpus.txt"), "--arpa", str(root / "lm.arpa"),
        ])
        assert rc == 0
        report = json.loads(capsys.readouterr().out)
        assert report["perplexity"] > 1.0

    def test_empty_corpus_exits_2(self, workspace, tmp_path):
        root, _ = workspace
        empty = tmp_path / "empty.txt"
        empty.write_text("!!! ??? 123456789012\n")
        rc = main([
            "lm-build", str(empty), "--vocab", str(root / "vocab.txt"),
            "--order", "2",
        ])
        assert rc == 2


class TestNormalizeCli:
    def test_stdin_stdout(self, workspace, monkeypatch, capsys):
        monkeypatch.setattr("sys.stdin", io.StringIO("Aşadar, 3 mere!\nSat-ul X.\n"))
        assert main(["normalize"]) == 0
        out = capsys.readouterr().out
        assert out == "așadar trei mere\nsat-ul x\n"

    def test_composes_with_lm_build(self, workspace, monkeypatch, tmp_path, capsys):
        root, _ = workspace
        monkeypatch.setattr("sys.stdin", io.StringIO("Ana ARE mere!\nana are pere\n"))
        assert main(["normalize"]) == 0
        normalized = capsys.readouterr().out
        monkeypatch.setattr("sys.stdin", io.StringIO(normalized))
        out = tmp_path / "pipe.arpa"
        rc = main([
            "lm-build", "-", "--vocab", str(root / "vocab.txt"),
            "--order", "2", "--out", str(out),
        ])
        assert rc == 0
        assert out.read_text().startswith("\\data\\")


class TestSynthCli:
    def test_manifest_durations_match_frames(self, workspace):
        root, _ = workspace
        entries = read_manifest(root / "data" / "manifest.jsonl")
        assert len(entries) == 5
        for entry in entries:
            assert entry.duration > 0
            assert entry.text

    def test_bench_reports_ordering_inputs(self, workspace, capsys):
        root, _ = workspace
        rc = main([
            "bench", "--manifest", str(root / "data" / "manifest.jsonl"),
            "--vocab", str(root / "vocab.txt"), "--strategy", "ctc-greedy",
            "--batch", "2", "--workers", "1",
        ])
        assert rc == 0
        report = json.loads(capsys.readouterr().out)
        assert report["utterance_count"] == 5
        assert report["batch_size"] == 2
        assert report["rtfx"] > 0
