import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from noisytext.corpus import (
    MASK_ID, PAD_ID, UNK_ID, SynthSpec, build_vocab, generate_synthetic,
    keyword_lookup_predict, load_dataset, load_encoded, save_dataset,
    synthetic_keywords, tokenize,
)
from noisytext.errors import ConfigError, DataError, FormatError


class TestTokenize:
    def test_empty(self):
        assert tokenize("") == []

    def test_sentence(self):
        assert tokenize("Election in Nigeria today.") == \
            ["election", "in", "nigeria", "today"]

    def test_punctuation_split(self):
        assert tokenize("A-B a") == ["a", "b", "a"]

    @given(st.text())
    def test_only_lowercase_alnum(self, text):
        for tok in tokenize(text):
            assert tok and all(c.islower() or c.isdigit() for c in tok if c.isascii())

    @given(st.text())
    def test_deterministic(self, text):
        assert tokenize(text) == tokenize(text)


class TestBuildVocab:
    def test_empty_corpus(self):
        vocab = build_vocab([])
        assert vocab.size == 3

    def test_min_freq(self):
        vocab = build_vocab([["a", "b", "a"]], min_freq=2)
        assert vocab.size == 4
        assert vocab.token_to_id["a"] == 3
        assert "b" not in vocab.token_to_id

    def test_max_size_lexicographic_tie(self):
        vocab = build_vocab([["a", "b"]], min_freq=1, max_size=4)
        assert vocab.size == 4
        assert vocab.token_to_id["a"] == 3
        assert "b" not in vocab.token_to_id

    def test_frequency_order(self):
        vocab = build_vocab([["b", "b", "a", "c", "c", "c"]])
        assert vocab.token_to_id["c"] == 3
        assert vocab.token_to_id["b"] == 4
        assert vocab.token_to_id["a"] == 5

    def test_reserved_ids(self):
        vocab = build_vocab([["x"]])
        assert (PAD_ID, UNK_ID, MASK_ID) == (0, 1, 2)
        assert vocab.decode([0, 1, 2]) == ["<pad>", "<unk>", "<mask>"]

    def test_bad_args(self):
        with pytest.raises(ConfigError):
            build_vocab([], min_freq=0)
        with pytest.raises(ConfigError):
            build_vocab([], max_size=3)

    @given(st.lists(st.lists(st.sampled_from("abcdef"), max_size=5), max_size=8))
    def test_encode_decode_round_trip(self, corpus):
        vocab = build_vocab(corpus)
        for doc in corpus:
            assert vocab.decode(vocab.encode(doc)) == doc


class TestLoadDataset:
    def test_jsonl(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text('{"text":"x","label":"pos"}\n{"text":"y","label":"neg"}\n')
        ds = load_dataset(p, "jsonl")
        assert ds.num_classes == 2
        assert ds.class_names == ("neg", "pos")
        assert ds.examples[0].gold_label == 1  # "pos"

    def test_empty_file(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text("")
        with pytest.raises(DataError, match="no examples"):
            load_dataset(p, "jsonl")

    def test_csv_four_classes(self, tmp_path):
        p = tmp_path / "d.csv"
        rows = ["text,label"] + [f"doc {i},c{i % 4}" for i in range(12)]
        p.write_text("\n".join(rows) + "\n")
        ds = load_dataset(p, "csv")
        assert ds.num_classes == 4

    def test_tsv(self, tmp_path):
        p = tmp_path / "d.tsv"
        p.write_text("text\tlabel\nhello there\ta\nbye now\tb\n")
        ds = load_dataset(p, "tsv")
        assert ds.num_classes == 2

    def test_missing_field_names_row(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text('{"text":"x","label":"a"}\n{"text":"y"}\n')
        with pytest.raises(FormatError, match="row 1"):
            load_dataset(p, "jsonl")

    def test_unknown_format(self, tmp_path):
        p = tmp_path / "d.xml"
        p.write_text("<x/>")
        with pytest.raises(ConfigError, match="unknown format"):
            load_dataset(p, "xml")

    def test_serialize_round_trip(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text('{"text":"aa bb","label":"pos"}\n{"text":"cc","label":"neg"}\n')
        ds = load_dataset(p, "jsonl")
        out = tmp_path / "enc.jsonl"
        save_dataset(ds, out)
        back = load_encoded(out)
        assert back == ds

    def test_nullable_noisy_label_field(self, tmp_path):
        p = tmp_path / "d.jsonl"
        p.write_text('{"text":"a b","label":"x"}\n{"text":"c","label":"y"}\n')
        ds = load_dataset(p, "jsonl")
        out = tmp_path / "enc.jsonl"
        save_dataset(ds, out)
        rows = [json.loads(l) for l in out.read_text().splitlines()]
        assert all(r["noisy_label"] is None for r in rows)
        assert all(isinstance(r["tokens"], list) for r in rows)


class TestSynthetic:
    def spec(self, **kw):
        base = dict(k=4, vocab_size=60, keywords_per_class=5, doc_length=10,
                    signal_rate=0.5, n_docs=200, seed=5)
        base.update(kw)
        return SynthSpec(**base)

    def test_deterministic(self):
        a = generate_synthetic(self.spec())
        b = generate_synthetic(self.spec())
        assert a == b

    def test_seed_changes_data(self):
        a = generate_synthetic(self.spec())
        b = generate_synthetic(self.spec(seed=6))
        assert a != b

    def test_class_balance(self):
        ds = generate_synthetic(self.spec(n_docs=203))
        counts = np.bincount(ds.gold_labels(), minlength=4)
        assert counts.max() - counts.min() <= 1

    def test_fully_separable_limit(self):
        spec = self.spec(signal_rate=1.0)
        ds = generate_synthetic(spec)
        keyword_ids = [set(ds.vocab.encode(kws)) for kws in synthetic_keywords(spec)]
        for ex in ds.examples:
            assert set(ex.tokens) <= keyword_ids[ex.gold_label]
        preds = keyword_lookup_predict(ds, spec)
        assert np.mean(preds == ds.gold_labels()) == 1.0

    def test_no_signal_limit(self):
        spec = self.spec(signal_rate=0.0, n_docs=2000)
        ds = generate_synthetic(spec)
        preds = keyword_lookup_predict(ds, spec)
        acc = np.mean(preds == ds.gold_labels())
        # chance level 1/k; 2000 draws keep the estimate within ~3 sigma
        assert abs(acc - 0.25) < 0.04

    def test_lookup_accuracy_half_signal(self):
        # brute-force simulation oracle for the spec'd setting
        spec = self.spec(signal_rate=0.5, doc_length=20, n_docs=2000,
                         vocab_size=200)
        ds = generate_synthetic(spec)
        preds = keyword_lookup_predict(ds, spec)
        assert np.mean(preds == ds.gold_labels()) > 0.99

    def test_disjoint_keywords(self):
        kws = synthetic_keywords(self.spec())
        flat = [t for k in kws for t in k]
        assert len(flat) == len(set(flat))

    def test_vocab_too_small(self):
        with pytest.raises(ConfigError):
            self.spec(vocab_size=10)

    def test_bad_signal_rate(self):
        with pytest.raises(ConfigError):
            self.spec(signal_rate=1.5)
