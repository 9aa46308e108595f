import csv
import json

import pytest

from piat import cli
from piat.core import ValidationError

TINY = {
    "gen": {"n_queries": 24, "n_eval_queries": 6, "vocab_size": 60, "n_synonym_classes": 10, "docs_per_query": 10},
    "train": {"epochs": 2, "embedding_dim": 8, "adv_fraction": 0.5, "n_attack_per_query": 3},
}


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "cfg.json"
    p.write_text(json.dumps(TINY))
    return str(p)


def pipeline(root, cfg_path, seed=0):
    data, ck, att, ev = root / "data", root / "ck.json", root / "att", root / "ev"
    assert cli.main(["gen", "--config", cfg_path, "--out", str(data), "--seed", str(seed)]) == 0
    assert cli.main(["train", "--config", cfg_path, "--data", str(data), "--out", str(ck), "--seed", str(seed)]) == 0
    assert cli.main(["attack", "--config", cfg_path, "--checkpoint", str(ck), "--data", str(data), "--out", str(att), "--seed", str(seed)]) == 0
    assert (
        cli.main(
            ["evaluate", "--config", cfg_path, "--checkpoint", str(ck), "--data", str(data), "--attacked", str(att), "--out", str(ev), "--seed", str(seed)]
        )
        == 0
    )
    return data, ck, att, ev


class TestConfig:
    def test_defaults_valid(self):
        cli.ExperimentConfig().validate()

    def test_unknown_keys(self):
        with pytest.raises(ValidationError):
            cli.ExperimentConfig.from_dict({"nope": {}})
        with pytest.raises(ValidationError):
            cli.ExperimentConfig.from_dict({"train": {"epoch": 3}})
        with pytest.raises(ValidationError):
            cli.ExperimentConfig.from_dict({"budget": {"eps": 0.1}})

    def test_partial_sections_keep_defaults(self):
        cfg = cli.ExperimentConfig.from_dict({"train": {"tradeoff": {"lam": 0.2}}})
        assert cfg.train.tradeoff.lam == 0.2
        assert cfg.train.learning_rate == cli.ExperimentConfig().train.learning_rate

    def test_roundtrip(self):
        cfg = cli.ExperimentConfig()
        assert cli.ExperimentConfig.from_dict(cfg.to_dict()) == cfg

    def test_flags_win(self, cfg_path):
        args = cli.build_parser().parse_args(["train", "--config", cfg_path, "--data", "x", "--out", "y", "--lr", "0.3", "--method", "ST"])
        cfg = cli.apply_overrides(cli.load_config(cfg_path), args)
        assert cfg.train.learning_rate == 0.3 and cfg.train.method.value == "ST"
        assert cfg.train.epochs == 2


class TestFormats:
    def test_run_roundtrip(self):
        rows = [("q1", "a", 1, 2.5), ("q1", "b", 2, -0.125), ("q2", "c", 1, 0.0)]
        text = cli.format_run(rows)
        assert text.splitlines()[0] == "q1 a 1 2.500000"
        assert cli.parse_run(text) == rows

    def test_run_rejects_gaps_and_rising_scores(self):
        with pytest.raises(ValidationError, match=":2:"):
            cli.parse_run("q a 1 1.0\nq b 3 0.5\n")
        with pytest.raises(ValidationError):
            cli.parse_run("q a 1 1.0\nq b 2 2.0\n")

    def test_sweep_csv(self):
        text = cli.format_sweep([(0.2, "KL", 0.5, 0.4, 0.3, 1.0), (0.35, "KL", 0.5, 0.4, 0.3, 1.0)])
        rows = list(csv.reader(text.splitlines()))
        assert tuple(rows[0]) == cli.SWEEP_HEADER
        assert [r[0] for r in rows[1:]] == ["0.2", "0.35"]


class TestCommands:
    def test_pipeline_files(self, tmp_path, cfg_path):
        data, ck, att, ev = pipeline(tmp_path, cfg_path)
        for name in ("vocab.json", "synonyms.json", "corpus.jsonl", "queries.jsonl", "candidates.tsv", "qrels.tsv"):
            assert (data / name).is_file()
        assert (tmp_path / "trainlog.json").is_file()
        metrics = json.loads((ev / "metrics.json").read_text())
        assert 0 <= metrics["clean_mrr_at"]["10"] <= 1
        cli.parse_run((ev / "clean.run").read_text())
        cli.parse_run((ev / "attacked.run").read_text())
        line = json.loads((att / "attacked_corpus.jsonl").read_text().splitlines()[0])
        assert {"doc_id", "tokens", "origin_doc_id", "substitutions"} <= set(line)

    def test_dataset_roundtrip(self, tmp_path, cfg_path):
        data, *_ = pipeline(tmp_path, cfg_path)
        from piat.datagen import generate

        corpus = generate(cli.load_config(cfg_path).gen)
        loaded = cli.read_dataset(data)
        assert [ex.candidates for ex in loaded.train] == [ex.candidates for ex in corpus.train]
        assert loaded.lexicon == corpus.lexicon

    def test_byte_identical(self, tmp_path, cfg_path):
        a = pipeline(tmp_path / "a", cfg_path, seed=5)
        b = pipeline(tmp_path / "b", cfg_path, seed=5)
        for pa, pb in zip(a, b):
            files = sorted(p.name for p in (pa.iterdir() if pa.is_dir() else [pa]))
            for name in files:
                fa = pa / name if pa.is_dir() else pa
                fb = pb / name if pb.is_dir() else pb
                assert fa.read_bytes() == fb.read_bytes(), name

    def test_malformed_corpus_line(self, tmp_path, cfg_path):
        data, *_ = pipeline(tmp_path, cfg_path)
        lines = (data / "corpus.jsonl").read_text().splitlines()
        lines[2] = "{not json"
        (data / "corpus.jsonl").write_text("\n".join(lines) + "\n")
        with pytest.raises(ValidationError, match="corpus.jsonl:3"):
            cli.read_dataset(data)
        out = tmp_path / "ck2.json"
        assert cli.main(["train", "--config", cfg_path, "--data", str(data), "--out", str(out)]) == 1
        assert not out.exists()

    def test_checkpoint_vocab_guard(self, tmp_path, cfg_path):
        data, ck, *_ = pipeline(tmp_path, cfg_path)
        vocab = json.loads((data / "vocab.json").read_text())
        vocab["words"][0] = "changed"
        (data / "vocab.json").write_text(json.dumps(vocab))
        with pytest.raises(ValidationError, match="different vocabulary"):
            cli.load_checkpoint(ck, cli.read_dataset(data).vocab)

    def test_bad_config_exit_code(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{"gen": {"vocab_size": 0}}')
        assert cli.main(["gen", "--config", str(p), "--out", str(tmp_path / "o")]) == 1

    def test_verify_exit_code_tracks_violations(self, tmp_path):
        out = tmp_path / "v.json"
        code = cli.main(["verify", "--trials", "40", "--seed", "0", "--out", str(out)])
        summary = json.loads(out.read_text())
        assert summary["bound_violations"] == 0
        assert code == (0 if summary["ok"] else 2)

    def test_sweep_rows(self, tmp_path, cfg_path):
        out = tmp_path / "sweep.csv"
        code = cli.main(["sweep", "--config", cfg_path, "--lambdas", "0.2", "0.8", "--variants", "KL", "--out", str(out), "--quiet"])
        assert code == 0
        rows = list(csv.reader(out.read_text().splitlines()))
        assert tuple(rows[0]) == cli.SWEEP_HEADER and len(rows) == 3
