import numpy as np
import pytest

from voxworld.audio import encode_wav_pcm16
from voxworld.corpus import (
    HEAD_TABLE,
    Corpus,
    DatasetBundle,
    HeadSpec,
    Intonation,
    TaggedUtterance,
    WordFunction,
    WordSpan,
    export_bundle,
    import_bundle,
    load_corpus,
    save_corpus,
)
from voxworld.errors import (
    InsufficientData,
    InvalidMarkers,
    MissingFile,
    SchemaVersionMismatch,
    UnknownClip,
)
from voxworld.features import FeatureConfig

CFG = FeatureConfig()


def tone_wav(freq=440.0, seconds=0.6, rate=16000, amp=0.5):
    t = np.arange(int(seconds * rate)) / rate
    return encode_wav_pcm16(amp * np.sin(2 * np.pi * freq * t), rate)


def simple_markers(clip_id, obj=0, pattern=0, intonation=Intonation.STATEMENT,
                   words=None):
    words = words or [WordSpan(0, 2, WordFunction.OBJECT, intonation, vocab_id=obj)]
    return TaggedUtterance(clip_id, obj, pattern, intonation, len(words), tuple(words))


@pytest.fixture
def corpus():
    return Corpus(feature_cfg=CFG)


class TestHeadTable:
    def test_canonical_class_counts(self):
        counts = {h.name: h.class_count for h in HEAD_TABLE}
        assert counts == {
            "object": 13,
            "phrase_pattern": 22,
            "word_count": 10,
            "word_intonation": 4,
            "phrase_intonation": 4,
            "word_function": 11,
            "vocabulary": 40,
        }

    def test_enums_are_stable(self):
        assert len(WordFunction) == 11
        assert [f.value for f in WordFunction] == list(range(11))
        assert WordFunction.FUNCTOR == 7
        assert len(Intonation) == 4
        assert Intonation.STATEMENT == 0 and Intonation.STORY == 3


class TestAddUtterance:
    def test_first_utterance_counts_one(self, corpus):
        cid = corpus.add_clip(tone_wav())
        corpus.add_utterance(cid, simple_markers(cid, pattern=3))
        assert corpus.readiness()[3] == {"repetitions": 1, "ready": False}

    def test_word_count_mismatch(self, corpus):
        cid = corpus.add_clip(tone_wav())
        bad = TaggedUtterance(cid, 0, 0, Intonation.STATEMENT, 3,
                              (WordSpan(0, 1, WordFunction.OBJECT, Intonation.STATEMENT, 0),
                               WordSpan(1, 2, WordFunction.OBJECT, Intonation.STATEMENT, 0)))
        with pytest.raises(InvalidMarkers) as e:
            corpus.add_utterance(cid, bad)
        assert e.value.field_path == "words"

    def test_fifth_repetition_flips_ready(self, corpus):
        for i in range(5):
            cid = corpus.add_clip(tone_wav(freq=300 + 10 * i))
            corpus.add_utterance(cid, simple_markers(cid, pattern=7))
            ready = corpus.readiness()[7]["ready"]
            assert ready == (i == 4)

    def test_unknown_clip(self, corpus):
        with pytest.raises(UnknownClip):
            corpus.add_utterance("clip999999", simple_markers("clip999999"))

    def test_overlapping_spans_rejected(self, corpus):
        cid = corpus.add_clip(tone_wav())
        bad = TaggedUtterance(cid, 0, 0, Intonation.STATEMENT, 2,
                              (WordSpan(0, 4, WordFunction.OBJECT, Intonation.STATEMENT, 0),
                               WordSpan(2, 6, WordFunction.FUNCTOR, Intonation.STATEMENT, 1)))
        with pytest.raises(InvalidMarkers) as e:
            corpus.add_utterance(cid, bad)
        assert "words[1]" in e.value.field_path

    def test_span_beyond_clip_rejected(self, corpus):
        cid = corpus.add_clip(tone_wav(seconds=0.1))
        t = corpus.clip_frame_count(cid)
        bad = simple_markers(cid, words=[
            WordSpan(0, t + 1, WordFunction.OBJECT, Intonation.STATEMENT, 0)])
        with pytest.raises(InvalidMarkers):
            corpus.add_utterance(cid, bad)

    def test_empty_corpus_readiness(self, corpus):
        assert corpus.readiness() == {}


def build_two_class_corpus(reps=5, cfg=CFG):
    """Two object classes x `reps` repetitions of one pattern each."""
    corpus = Corpus(feature_cfg=cfg)
    for obj in (0, 1):
        for r in range(reps):
            freq = 500 + 400 * obj + 7 * r
            cid = corpus.add_clip(tone_wav(freq=freq))
            corpus.add_utterance(cid, simple_markers(cid, obj=obj, pattern=obj))
    return corpus


class TestBuildDataset:
    def test_split_counts_and_ordering(self):
        corpus = build_two_class_corpus()
        bundle = corpus.build_dataset("object")
        assert bundle.train_data.shape == (8, CFG.grid_width)
        assert bundle.test_data.shape == (2, CFG.grid_width)
        assert bundle.train_labels.tolist() == [0, 0, 0, 0, 1, 1, 1, 1]
        assert bundle.test_labels.tolist() == [0, 1]

    def test_row_width_always_53z(self):
        corpus = build_two_class_corpus(reps=3)
        for head in HEAD_TABLE:
            bundle = corpus.build_dataset(head)
            assert bundle.train_data.shape[1] == 53 * CFG.grid_frames

    def test_insufficient_data_names_class(self):
        corpus = Corpus(feature_cfg=CFG)
        cid = corpus.add_clip(tone_wav())
        corpus.add_utterance(cid, simple_markers(cid, obj=4))
        with pytest.raises(InsufficientData) as e:
            corpus.build_dataset("object")
        assert "class 4" in str(e.value)

    def test_deterministic_rebuild(self):
        corpus = build_two_class_corpus()
        a = corpus.build_dataset("object")
        b = corpus.build_dataset("object")
        np.testing.assert_array_equal(a.train_data, b.train_data)
        np.testing.assert_array_equal(a.test_data, b.test_data)
        np.testing.assert_array_equal(a.train_labels, b.train_labels)
        np.testing.assert_array_equal(a.test_labels, b.test_labels)

    def test_every_test_class_in_train(self):
        # property over random repetition counts in 2..10
        rng = np.random.default_rng(21)
        for trial in range(5):
            corpus = Corpus(feature_cfg=CFG)
            reps_per_class = {obj: int(rng.integers(2, 11)) for obj in range(3)}
            for obj, reps in reps_per_class.items():
                for r in range(reps):
                    cid = corpus.add_clip(tone_wav(freq=400 + 300 * obj + 11 * r))
                    corpus.add_utterance(cid, simple_markers(cid, obj=obj, pattern=obj))
            bundle = corpus.build_dataset("object")
            assert set(bundle.test_labels.tolist()) <= set(bundle.train_labels.tolist())
            # with the mod-5 rule and >=2 reps, every class lands in test too
            assert set(bundle.test_labels.tolist()) == set(reps_per_class)

    def test_word_head_uses_span_slices(self):
        corpus = Corpus(feature_cfg=CFG)
        for r in range(2):
            cid = corpus.add_clip(tone_wav(freq=600 + r))
            words = (WordSpan(0, 3, WordFunction.POINTER, Intonation.STATEMENT, 2),
                     WordSpan(4, 7, WordFunction.OBJECT, Intonation.STATEMENT, 5))
            corpus.add_utterance(cid, TaggedUtterance(cid, 0, 0, Intonation.STATEMENT,
                                                      2, words))
        bundle = corpus.build_dataset("vocabulary")
        # 2 utterances x 2 words = 4 examples, classes {2, 5}
        assert bundle.train_data.shape[0] + bundle.test_data.shape[0] == 4
        assert set(bundle.train_labels.tolist()) | set(bundle.test_labels.tolist()) == {2, 5}

    def test_word_count_label_is_count_minus_one(self):
        corpus = Corpus(feature_cfg=CFG)
        for r in range(2):
            cid = corpus.add_clip(tone_wav(freq=700 + r))
            words = (WordSpan(0, 2, WordFunction.OBJECT, Intonation.STATEMENT, 0),
                     WordSpan(2, 4, WordFunction.FUNCTOR, Intonation.STATEMENT, 1),
                     WordSpan(4, 6, WordFunction.OBJECT, Intonation.STATEMENT, 2))
            corpus.add_utterance(cid, TaggedUtterance(cid, 0, 0, Intonation.STATEMENT,
                                                      3, words))
        bundle = corpus.build_dataset("word_count")
        assert set(bundle.train_labels.tolist()) | set(bundle.test_labels.tolist()) == {2}


class TestCorpusRoundTrip:
    def test_empty_roundtrip(self, tmp_path):
        corpus = Corpus(feature_cfg=CFG)
        save_corpus(corpus, str(tmp_path / "c"))
        back = load_corpus(str(tmp_path / "c"))
        assert back.utterances == {}
        assert back.feature_cfg == CFG

    def test_full_roundtrip_identical(self, tmp_path):
        corpus = build_two_class_corpus()
        save_corpus(corpus, str(tmp_path / "c"))
        back = load_corpus(str(tmp_path / "c"))
        assert back.clips == corpus.clips  # bit-identical wav bytes
        assert list(back.utterances) == list(corpus.utterances)
        for uid in corpus.utterances:
            assert back.utterances[uid].markers == corpus.utterances[uid].markers

    def test_write_through_matches_batch_save(self, tmp_path):
        live = Corpus(feature_cfg=CFG, root=str(tmp_path / "live"))
        cid = live.add_clip(tone_wav())
        live.add_utterance(cid, simple_markers(cid))
        back = load_corpus(str(tmp_path / "live"))
        assert back.clips == live.clips
        assert back.utterances[next(iter(back.utterances))].markers == \
            live.utterances[next(iter(live.utterances))].markers

    def test_corrupt_manifest(self, tmp_path):
        corpus = build_two_class_corpus(reps=2)
        root = str(tmp_path / "c")
        save_corpus(corpus, root)
        with open(f"{root}/manifest.json", "w") as fh:
            fh.write("{not json")
        with pytest.raises(SchemaVersionMismatch):
            load_corpus(root)

    def test_wrong_schema_version(self, tmp_path):
        corpus = Corpus(feature_cfg=CFG)
        root = str(tmp_path / "c")
        save_corpus(corpus, root)
        import json
        with open(f"{root}/manifest.json") as fh:
            doc = json.load(fh)
        doc["schema_version"] = 999
        with open(f"{root}/manifest.json", "w") as fh:
            json.dump(doc, fh)
        with pytest.raises(SchemaVersionMismatch):
            load_corpus(root)


class TestBundleFiles:
    def test_export_import_bit_exact(self, tmp_path):
        corpus = build_two_class_corpus()
        bundle = corpus.build_dataset("object")
        d = str(tmp_path / "object")
        export_bundle(bundle, d)
        import os
        assert sorted(os.listdir(d)) == sorted(
            ["train_data.f32", "test_data.f32", "train_labels.u32", "test_labels.u32"])
        back = import_bundle(d)
        np.testing.assert_array_equal(back.train_data, bundle.train_data)
        np.testing.assert_array_equal(back.test_data, bundle.test_data)
        np.testing.assert_array_equal(back.train_labels, bundle.train_labels)
        np.testing.assert_array_equal(back.test_labels, bundle.test_labels)
        assert back.head.name == "object"

    def test_missing_file_named(self, tmp_path):
        corpus = build_two_class_corpus(reps=2)
        d = str(tmp_path / "object")
        export_bundle(corpus.build_dataset("object"), d)
        import os
        os.unlink(f"{d}/test_labels.u32")
        with pytest.raises(MissingFile) as e:
            import_bundle(d)
        assert "test_labels.u32" in str(e.value)

    def test_out_of_range_label_rejected(self, tmp_path):
        head = HeadSpec("object", 13, "object_id", "utterance")
        bundle = DatasetBundle(
            head=head,
            train_data=np.zeros((1, 8), dtype=np.float32),
            test_data=np.zeros((1, 8), dtype=np.float32),
            train_labels=np.array([99], dtype=np.uint32),
            test_labels=np.array([0], dtype=np.uint32),
        )
        d = str(tmp_path / "object")
        import os
        os.makedirs(d)
        from voxworld.corpus import _write_array
        _write_array(f"{d}/train_data.f32", bundle.train_data, "f32")
        _write_array(f"{d}/test_data.f32", bundle.test_data, "f32")
        _write_array(f"{d}/train_labels.u32", bundle.train_labels.reshape(-1, 1), "u32")
        _write_array(f"{d}/test_labels.u32", bundle.test_labels.reshape(-1, 1), "u32")
        with pytest.raises(SchemaVersionMismatch):
            import_bundle(d)

    def test_tampered_magic(self, tmp_path):
        corpus = build_two_class_corpus(reps=2)
        d = str(tmp_path / "object")
        export_bundle(corpus.build_dataset("object"), d)
        path = f"{d}/train_data.f32"
        blob = bytearray(open(path, "rb").read())
        blob[0:4] = b"XXXX"
        open(path, "wb").write(bytes(blob))
        with pytest.raises(SchemaVersionMismatch):
            import_bundle(d)
