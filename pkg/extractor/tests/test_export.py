import numpy as np
import pytest
from transformers import AutoTokenizer

from lexprobe.store import open_store
from lexstore_extract.cli import main as cli_main
from lexstore_extract.export import ExportJob, _plan_occurrences, export_aoc, export_iso

TEN_WORDS = "alder aspen beech birch cedar elm fir hazel holly juniper".split()


class TestIsoAcceptance:
    def test_shape_check_12_layer_768_dim(self, base_checkpoint, vocab_file,
                                          tmp_path):
        """Secondary acceptance: 10-word ISO export from a 12-layer, 768-dim
        checkpoint is readable by the consumer's open_store with
        num_layers 13, dim 768, one occurrence per word."""
        out = tmp_path / "base.iso.lxts"
        export_iso(ExportJob(model=base_checkpoint, vocab=vocab_file(TEN_WORDS),
                             mode="iso", out=str(out), max_len=64))
        with open_store(out) as handle:
            assert handle.num_layers == 13
            assert handle.dim == 768
            assert handle.words == TEN_WORDS
            for word in TEN_WORDS:
                assert handle.occurrence_count(word) == 1
                (record,) = handle.read_occurrences(word)
                assert record.vectors.shape[0] == 13
                assert record.vectors.shape[2] == 768
                assert np.isfinite(record.vectors).all()
        print("\nACCEPTANCE PASS: extractor shape check (13 layers, dim 768, "
              "one ISO occurrence per word, consumer-readable)")

    def test_determinism_bit_exact(self, base_checkpoint, vocab_file, tmp_path):
        """Secondary acceptance: identical job, identical seed -> bitwise
        identical store files."""
        job_args = dict(model=base_checkpoint, vocab=vocab_file(TEN_WORDS),
                        mode="iso", seed=11, max_len=64)
        out1, out2 = tmp_path / "a.lxts", tmp_path / "b.lxts"
        export_iso(ExportJob(out=str(out1), **job_args))
        export_iso(ExportJob(out=str(out2), **job_args))
        assert out1.read_bytes() == out2.read_bytes()
        print("\nACCEPTANCE PASS: extractor determinism (bit-identical stores "
              "across runs)")


class TestIsoBehaviour:
    def test_subword_split_token_count(self, tiny_checkpoint, vocab_file,
                                       tmp_path):
        tokenizer = AutoTokenizer.from_pretrained(tiny_checkpoint)
        pieces = tokenizer.tokenize("unfathomable")
        assert len(pieces) == 4  # un ##fath ##om ##able
        out = tmp_path / "iso.lxts"
        export_iso(ExportJob(model=tiny_checkpoint,
                             vocab=vocab_file(["unfathomable", "oak"]),
                             mode="iso", out=str(out), max_len=64))
        with open_store(out) as handle:
            (record,) = handle.read_occurrences("unfathomable")
            assert record.token_count == len(pieces) + 2  # + CLS + SEP
            assert record.subword_count == len(pieces)
            assert record.token_flags[0] == 1  # CLS first
            assert record.token_flags[-1] == 2  # SEP last
            assert (record.token_flags[1:-1] == 0).all()

    def test_vocab_order_and_single_occurrences(self, tiny_checkpoint,
                                                vocab_file, tmp_path):
        words = ["pine", "alder", "oak"]
        out = tmp_path / "iso.lxts"
        export_iso(ExportJob(model=tiny_checkpoint, vocab=vocab_file(words),
                             mode="iso", out=str(out), max_len=64))
        with open_store(out) as handle:
            assert handle.words == words
            assert all(handle.occurrence_count(w) == 1 for w in words)
            assert handle.header.source_kind == "mono"
            assert handle.header.model_id == tiny_checkpoint

    def test_unknown_surface_form_still_exported_via_unk(self, tiny_checkpoint,
                                                         vocab_file, tmp_path):
        # a word outside the wordpiece vocab maps to [UNK]: one content token
        out = tmp_path / "iso.lxts"
        export_iso(ExportJob(model=tiny_checkpoint, vocab=vocab_file(["zzzgrh"]),
                             mode="iso", out=str(out), max_len=64))
        with open_store(out) as handle:
            (record,) = handle.read_occurrences("zzzgrh")
            assert record.subword_count == 1

    def test_batching_does_not_change_word_grouping(self, tiny_checkpoint,
                                                    vocab_file, tmp_path):
        words = ["unfathomable", "oak", "pine", "alder", "beech"]
        out = tmp_path / "iso.lxts"
        export_iso(ExportJob(model=tiny_checkpoint, vocab=vocab_file(words),
                             mode="iso", out=str(out), batch_size=2,
                             max_len=64))
        with open_store(out) as handle:
            assert handle.words == words


class TestAocBehaviour:
    def corpus(self):
        return [
            "the alder sat on the mat .",
            "alder and aspen sat .",
            "oak and the alder .",
            "pine pine and oak .",
            "the beech sat .",
            "aspen , aspen and aspen .",
        ]

    def run_export(self, checkpoint, vocab_file, corpus_file, tmp_path, words,
                   max_contexts=10, seed=3, max_len=32, name="aoc.lxts",
                   sentences=None):
        out = tmp_path / name
        export_aoc(ExportJob(
            model=checkpoint, vocab=vocab_file(words), mode="aoc",
            corpus=corpus_file(sentences or self.corpus(), name + ".txt"),
            out=str(out), max_contexts=max_contexts, seed=seed, max_len=max_len,
        ))
        return out

    def test_occurrence_counts(self, tiny_checkpoint, vocab_file, corpus_file,
                               tmp_path):
        out = self.run_export(tiny_checkpoint, vocab_file, corpus_file, tmp_path,
                              ["alder", "aspen", "oak", "willow"])
        with open_store(out) as handle:
            assert handle.occurrence_count("alder") == 3  # 3 sentences
            assert handle.occurrence_count("aspen") == 4  # 1 + 3 in one sentence
            assert handle.occurrence_count("oak") == 2
            assert "willow" not in handle  # absent from corpus

    def test_max_contexts_caps_records(self, tiny_checkpoint, vocab_file,
                                       corpus_file, tmp_path):
        out = self.run_export(tiny_checkpoint, vocab_file, corpus_file, tmp_path,
                              ["aspen"], max_contexts=2, name="capped.lxts")
        with open_store(out) as handle:
            assert handle.occurrence_count("aspen") == 2

    def test_same_seed_is_bit_identical_and_seed_changes_selection(
            self, tiny_checkpoint, vocab_file, corpus_file, tmp_path):
        vocab = vocab_file(["alder", "aspen", "oak"])
        corpus = corpus_file(self.corpus())
        outs = []
        for name, seed in (("s1.lxts", 5), ("s2.lxts", 5), ("s3.lxts", 9)):
            out = tmp_path / name
            export_aoc(ExportJob(model=tiny_checkpoint, vocab=vocab, mode="aoc",
                                 corpus=corpus, out=str(out), max_contexts=2,
                                 seed=seed, max_len=32))
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]  # identical seed, bitwise identical store
        headers_differ_only = outs[0] != outs[2]
        assert headers_differ_only  # different shuffle picks other contexts

    def test_flags_cover_cls_span_sep(self, tiny_checkpoint, vocab_file,
                                      corpus_file, tmp_path):
        out = self.run_export(tiny_checkpoint, vocab_file, corpus_file, tmp_path,
                              ["alder"])
        with open_store(out) as handle:
            for record in handle.read_occurrences("alder"):
                assert record.token_flags[0] == 1
                assert record.token_flags[-1] == 2
                assert record.subword_count >= 1
                assert np.isfinite(record.vectors).all()

    def test_truncated_span_dropped(self, tiny_checkpoint, vocab_file,
                                    corpus_file, tmp_path):
        # max_len 8 keeps [CLS] + 6 tokens + [SEP]: "juniper" at word 7
        # never survives, "oak" at word 0 does
        sentences = ["oak the the the the the the juniper ."]
        out = self.run_export(tiny_checkpoint, vocab_file, corpus_file, tmp_path,
                              ["oak", "juniper"], max_len=8,
                              name="trunc.lxts", sentences=sentences)
        with open_store(out) as handle:
            assert "oak" in handle
            assert "juniper" not in handle

    def test_partially_truncated_subword_span_dropped(self, tiny_checkpoint,
                                                      vocab_file, corpus_file,
                                                      tmp_path):
        # "unfathomable" = 4 pieces; max_len 8 leaves room for only 2 of them
        sentences = ["the the the the unfathomable ."]
        out = self.run_export(tiny_checkpoint, vocab_file, corpus_file, tmp_path,
                              ["unfathomable", "the"], max_len=8,
                              name="part.lxts", sentences=sentences)
        with open_store(out) as handle:
            assert "unfathomable" not in handle
            assert handle.occurrence_count("the") == 4

    def test_aoc_requires_corpus(self, tiny_checkpoint, vocab_file, tmp_path):
        with pytest.raises(ValueError, match="corpus"):
            export_aoc(ExportJob(model=tiny_checkpoint,
                                 vocab=vocab_file(["oak"]), mode="aoc",
                                 out=str(tmp_path / "x.lxts")))

    def test_max_len_beyond_model_limit_rejected(self, tiny_checkpoint,
                                                 vocab_file, corpus_file,
                                                 tmp_path):
        with pytest.raises(ValueError, match="model limit"):
            export_aoc(ExportJob(model=tiny_checkpoint,
                                 vocab=vocab_file(["oak"]), mode="aoc",
                                 corpus=corpus_file(["oak ."]),
                                 out=str(tmp_path / "x.lxts"), max_len=512))


class TestPlanner:
    def test_matching_is_normalized_exact_whole_token(self, tiny_checkpoint):
        tokenizer = AutoTokenizer.from_pretrained(tiny_checkpoint)
        plan = _plan_occurrences(
            tokenizer,
            ["The OAK sat .", "oakley sat ."],
            {"oak"},
            max_contexts=10,
            max_len=32,
        )
        # "OAK" matches after lowercasing; "oakley" is a different token
        assert len(plan) == 1
        text, matches = plan[0]
        assert text == "The OAK sat ."
        (word, span) = matches[0]
        assert word == "oak"
        enc = tokenizer(text, truncation=True, max_length=32)
        tokens = tokenizer.convert_ids_to_tokens(
            [enc["input_ids"][p] for p in span]
        )
        assert "".join(t.removeprefix("##") for t in tokens) == "oak"

    def test_multi_piece_span_detokenizes_to_word(self, tiny_checkpoint):
        tokenizer = AutoTokenizer.from_pretrained(tiny_checkpoint)
        plan = _plan_occurrences(
            tokenizer, ["the unfathomable oak ."], {"unfathomable"},
            max_contexts=5, max_len=32,
        )
        (text, matches) = plan[0]
        (word, span) = matches[0]
        assert word == "unfathomable"
        enc = tokenizer(text, truncation=True, max_length=32)
        tokens = tokenizer.convert_ids_to_tokens(
            [enc["input_ids"][p] for p in span]
        )
        assert "".join(t.removeprefix("##") for t in tokens) == "unfathomable"


class TestCli:
    def test_iso_export_via_cli(self, tiny_checkpoint, vocab_file, tmp_path,
                                capsys):
        out = tmp_path / "cli.lxts"
        rc = cli_main([
            "--model", tiny_checkpoint, "--vocab", vocab_file(["oak", "pine"]),
            "--mode", "iso", "--max-len", "64", "--out", str(out),
        ])
        assert rc == 0
        with open_store(out) as handle:
            assert handle.words == ["oak", "pine"]

    def test_missing_corpus_is_an_error(self, tiny_checkpoint, vocab_file,
                                        tmp_path, capsys):
        rc = cli_main([
            "--model", tiny_checkpoint, "--vocab", vocab_file(["oak"]),
            "--mode", "aoc", "--max-len", "64", "--out", str(tmp_path / "x.lxts"),
        ])
        assert rc == 2
        assert "corpus" in capsys.readouterr().err
