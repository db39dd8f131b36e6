"""Tagged vocal corpus: recordings, their tag sets, and per-head datasets.

A corpus starts empty. Every stored utterance is a clip plus the tag set a
human supplied while teaching: the referenced object, the phrase pattern, the
phrase intonation, and one span per word carrying that word's function,
intonation and vocabulary slot. From those tags the corpus can build, for
each classification head, the four-array dataset (train/test data and
labels) used to fit that head.

On disk a corpus is a directory: manifest.json, clips/<id>.wav (bytes stored
verbatim), markers/<id>.json. Datasets export to a directory of exactly four
binary files per head.
"""

from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass, asdict
from enum import IntEnum

import numpy as np

from . import features
from .audio import AudioClip, decode_wav, encode_wav_pcm16, resample
from .errors import (
    ConfigMismatch,
    InsufficientData,
    InvalidMarkers,
    IoFailure,
    MissingFile,
    SchemaVersionMismatch,
    UnknownClip,
)
from .features import FeatureConfig, FeatureGrid, FeatureMatrix

SCHEMA_VERSION = 1
DATASET_MAGIC = b"FTDS"
TEST_STRIDE = 5  # every 5th repetition of a class is held out
DEFAULT_REPETITION_THRESHOLD = 5


class WordFunction(IntEnum):
    PERSON = 0
    ALIVE = 1
    OBJECT = 2
    ACTION = 3
    PROPERTY_NAME = 4
    OBJECT_PROPERTY = 5
    ACTION_PROPERTY = 6
    FUNCTOR = 7
    POSITIVE = 8
    NEGATIVE = 9
    POINTER = 10


class Intonation(IntEnum):
    STATEMENT = 0
    QUESTION = 1
    COMMAND = 2
    STORY = 3


@dataclass(frozen=True)
class WordSpan:
    """One word inside a phrase, addressed by feature-matrix column indices."""

    start_frame: int
    end_frame: int
    function: WordFunction
    intonation: Intonation
    vocab_id: int


@dataclass(frozen=True)
class TaggedUtterance:
    """The full tag set for one recording."""

    clip_id: str
    object_id: int
    phrase_pattern_id: int
    phrase_intonation: Intonation
    word_count: int
    words: tuple[WordSpan, ...]

    def to_json_dict(self) -> dict:
        return {
            "clip_id": self.clip_id,
            "object_id": self.object_id,
            "phrase_pattern_id": self.phrase_pattern_id,
            "phrase_intonation": int(self.phrase_intonation),
            "word_count": self.word_count,
            "words": [
                {
                    "start_frame": w.start_frame,
                    "end_frame": w.end_frame,
                    "function": int(w.function),
                    "intonation": int(w.intonation),
                    "vocab_id": w.vocab_id,
                }
                for w in self.words
            ],
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "TaggedUtterance":
        return cls(
            clip_id=d["clip_id"],
            object_id=d["object_id"],
            phrase_pattern_id=d["phrase_pattern_id"],
            phrase_intonation=Intonation(d["phrase_intonation"]),
            word_count=d["word_count"],
            words=tuple(
                WordSpan(
                    start_frame=w["start_frame"],
                    end_frame=w["end_frame"],
                    function=WordFunction(w["function"]),
                    intonation=Intonation(w["intonation"]),
                    vocab_id=w["vocab_id"],
                )
                for w in d["words"]
            ),
        )


@dataclass(frozen=True)
class HeadSpec:
    """One classification parameter: its class count and where labels come from."""

    name: str
    class_count: int
    label_extractor: str  # TaggedUtterance / WordSpan field supplying the label
    granularity: str  # "utterance" or "word"
    active: bool = True


HEAD_TABLE: tuple[HeadSpec, ...] = (
    HeadSpec("object", 13, "object_id", "utterance"),
    HeadSpec("phrase_pattern", 22, "phrase_pattern_id", "utterance"),
    HeadSpec("word_count", 10, "word_count", "utterance"),
    HeadSpec("word_intonation", 4, "intonation", "word"),
    HeadSpec("phrase_intonation", 4, "phrase_intonation", "utterance"),
    HeadSpec("word_function", 11, "function", "word"),
    HeadSpec("vocabulary", 40, "vocab_id", "word"),
)

HEAD_ORDER = tuple(h.name for h in HEAD_TABLE)
HEADS_BY_NAME = {h.name: h for h in HEAD_TABLE}

# declared for the folder layout but with no data pipeline behind it
EMOTION_HEAD = HeadSpec("emotion", 4, "emotion", "utterance", active=False)


def head_label(head: HeadSpec, utt: TaggedUtterance, word: WordSpan | None = None) -> int:
    if head.granularity == "word":
        assert word is not None
        return int(getattr(word, head.label_extractor))
    if head.name == "word_count":
        return utt.word_count - 1  # counts 1..10 map to classes 0..9
    return int(getattr(utt, head.label_extractor))


@dataclass
class DatasetBundle:
    """Exactly four arrays for one head, plus provenance."""

    head: HeadSpec
    train_data: np.ndarray  # n_train x (53 * Z) float32
    test_data: np.ndarray
    train_labels: np.ndarray  # uint32 class indices
    test_labels: np.ndarray
    cfg_hash: str = ""

    def validate(self) -> None:
        if self.train_data.shape[0] != self.train_labels.shape[0]:
            raise ValueError("train rows != train labels")
        if self.test_data.shape[0] != self.test_labels.shape[0]:
            raise ValueError("test rows != test labels")
        for labels in (self.train_labels, self.test_labels):
            if labels.size and int(labels.max()) >= self.head.class_count:
                raise ValueError(
                    f"label {int(labels.max())} out of range for head "
                    f"{self.head.name} ({self.head.class_count} classes)")


def validate_markers(markers: TaggedUtterance, n_frames: int | None = None) -> None:
    """Check every invariant, raising InvalidMarkers with the offending field path."""
    if not isinstance(markers.word_count, int) or not (1 <= markers.word_count <= 10):
        raise InvalidMarkers("word_count", f"must be in 1..10, got {markers.word_count}")
    if len(markers.words) != markers.word_count:
        raise InvalidMarkers(
            "words", f"{len(markers.words)} spans but word_count={markers.word_count}")
    if not (0 <= markers.object_id < HEADS_BY_NAME["object"].class_count):
        raise InvalidMarkers("object_id", f"out of range: {markers.object_id}")
    if not (0 <= markers.phrase_pattern_id < HEADS_BY_NAME["phrase_pattern"].class_count):
        raise InvalidMarkers("phrase_pattern_id", f"out of range: {markers.phrase_pattern_id}")
    if not isinstance(markers.phrase_intonation, Intonation):
        raise InvalidMarkers("phrase_intonation", "not a valid intonation")
    prev_end = None
    for i, w in enumerate(markers.words):
        path = f"words[{i}]"
        if w.start_frame < 0 or w.start_frame >= w.end_frame:
            raise InvalidMarkers(f"{path}.start_frame",
                                 f"need 0 <= start < end, got [{w.start_frame}, {w.end_frame})")
        if prev_end is not None and w.start_frame < prev_end:
            raise InvalidMarkers(f"{path}.start_frame",
                                 f"overlaps previous span ending at {prev_end}")
        if not (0 <= w.vocab_id < HEADS_BY_NAME["vocabulary"].class_count):
            raise InvalidMarkers(f"{path}.vocab_id", f"out of range: {w.vocab_id}")
        if not isinstance(w.function, WordFunction):
            raise InvalidMarkers(f"{path}.function", "not a valid word function")
        if not isinstance(w.intonation, Intonation):
            raise InvalidMarkers(f"{path}.intonation", "not a valid intonation")
        if n_frames is not None and w.end_frame > n_frames:
            raise InvalidMarkers(f"{path}.end_frame",
                                 f"span ends at {w.end_frame} but clip has {n_frames} frames")
        prev_end = w.end_frame


@dataclass
class StoredUtterance:
    utterance_id: str
    markers: TaggedUtterance
    superseded: bool = False
    pending_correction: bool = False


def _atomic_write(path: str, data: bytes) -> None:
    """Write-then-rename so a crash never leaves a partial file behind."""
    directory = os.path.dirname(path)
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except OSError as exc:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise IoFailure(str(exc)) from exc


class Corpus:
    """Single-writer store of clips and tagged utterances.

    When bound to a root directory every mutation is written through
    atomically, so killing the process loses nothing committed.
    """

    def __init__(self, feature_cfg: FeatureConfig | None = None, root: str | None = None,
                 repetition_threshold: int = DEFAULT_REPETITION_THRESHOLD):
        self.feature_cfg = feature_cfg or FeatureConfig()
        self.root = root
        self.repetition_threshold = repetition_threshold
        self.clips: dict[str, bytes] = {}
        self.utterances: dict[str, StoredUtterance] = {}
        self._decoded: dict[str, AudioClip] = {}
        self._matrices: dict[str, FeatureMatrix] = {}
        if root is not None:
            self._write_manifest()

    # --- clips ---------------------------------------------------------

    def add_clip(self, wav_bytes: bytes) -> str:
        clip_id = f"clip{len(self.clips):06d}"
        decode_wav(wav_bytes, clip_id)  # validate before committing
        self.clips[clip_id] = wav_bytes
        if self.root is not None:
            _atomic_write(os.path.join(self.root, "clips", f"{clip_id}.wav"), wav_bytes)
        return clip_id

    def add_clip_from_samples(self, samples: np.ndarray, sample_rate: int) -> str:
        return self.add_clip(encode_wav_pcm16(samples, sample_rate))

    def clip_bytes(self, clip_id: str) -> bytes:
        if clip_id not in self.clips:
            raise UnknownClip(clip_id)
        return self.clips[clip_id]

    def analysis_clip(self, clip_id: str) -> AudioClip:
        """Clip decoded and resampled to the corpus analysis rate."""
        if clip_id not in self._decoded:
            raw = self.clip_bytes(clip_id)
            self._decoded[clip_id] = resample(decode_wav(raw, clip_id),
                                              self.feature_cfg.sample_rate)
        return self._decoded[clip_id]

    def clip_matrix(self, clip_id: str) -> FeatureMatrix:
        """Normalized 53 x T features for a stored clip (cached)."""
        if clip_id not in self._matrices:
            clip = self.analysis_clip(clip_id)
            self._matrices[clip_id] = features.normalize(
                features.extract_features(clip, self.feature_cfg))
        return self._matrices[clip_id]

    def clip_grid(self, clip_id: str) -> FeatureGrid:
        return features.fit_to_grid(self.clip_matrix(clip_id), self.feature_cfg)

    def clip_frame_count(self, clip_id: str) -> int:
        return features.frame_count(len(self.analysis_clip(clip_id)), self.feature_cfg)

    # --- utterances ------------------------------------------------------

    def add_utterance(self, clip_id: str, markers: TaggedUtterance,
                      pending_correction: bool = False) -> str:
        if clip_id not in self.clips:
            raise UnknownClip(clip_id)
        validate_markers(markers, n_frames=self.clip_frame_count(clip_id))
        if markers.clip_id != clip_id:
            markers = TaggedUtterance(clip_id, markers.object_id, markers.phrase_pattern_id,
                                      markers.phrase_intonation, markers.word_count,
                                      markers.words)
        utterance_id = f"utt{len(self.utterances):06d}"
        stored = StoredUtterance(utterance_id, markers,
                                 pending_correction=pending_correction)
        self.utterances[utterance_id] = stored
        self._persist_utterance(stored)
        return utterance_id

    def supersede_utterance(self, utterance_id: str) -> None:
        stored = self.utterances[utterance_id]
        stored.superseded = True
        self._persist_utterance(stored)

    def mark_corrections_consumed(self) -> None:
        for stored in self.utterances.values():
            if stored.pending_correction and not stored.superseded:
                stored.pending_correction = False
                self._persist_utterance(stored)

    def active_utterances(self) -> list[StoredUtterance]:
        return [u for u in self.utterances.values() if not u.superseded]

    def pending_corrections(self) -> list[StoredUtterance]:
        return [u for u in self.active_utterances() if u.pending_correction]

    # --- readiness -------------------------------------------------------

    def repetitions(self) -> dict[int, int]:
        counts: dict[int, int] = {}
        for stored in self.active_utterances():
            pid = stored.markers.phrase_pattern_id
            counts[pid] = counts.get(pid, 0) + 1
        return counts

    def readiness(self) -> dict[int, dict]:
        """Per phrase pattern: repetition count and whether training may start."""
        return {
            pid: {"repetitions": n, "ready": n >= self.repetition_threshold}
            for pid, n in sorted(self.repetitions().items())
        }

    # --- datasets ----------------------------------------------------------

    def _examples_for_head(self, head: HeadSpec) -> list[tuple[int, str, WordSpan | None]]:
        """(label, clip_id, word_span?) per example, in insertion order."""
        examples = []
        for stored in self.active_utterances():
            utt = stored.markers
            if head.granularity == "utterance":
                examples.append((head_label(head, utt), utt.clip_id, None))
            else:
                for w in utt.words:
                    examples.append((head_label(head, utt, w), utt.clip_id, w))
        return examples

    def _example_grid(self, clip_id: str, word: WordSpan | None) -> np.ndarray:
        if word is None:
            return self.clip_grid(clip_id).flat()
        m = self.clip_matrix(clip_id)
        end = min(word.end_frame, m.n_frames)
        sliced = FeatureMatrix(values=m.values[:, word.start_frame:end], clip_id=clip_id)
        return features.fit_to_grid(sliced, self.feature_cfg).flat()

    def build_dataset(self, head: HeadSpec | str,
                      cfg: FeatureConfig | None = None) -> DatasetBundle:
        """Assemble the four arrays for one head.

        Examples are grouped per class in insertion order; within a class,
        repetition index 0, 5, 10, ... goes to the test split and the rest to
        train, so building twice from the same corpus is bit-identical.
        """
        if isinstance(head, str):
            head = HEADS_BY_NAME[head]
        if cfg is not None and cfg.config_hash() != self.feature_cfg.config_hash():
            raise ConfigMismatch("dataset config differs from the corpus feature config")

        by_class: dict[int, list[tuple[str, WordSpan | None]]] = {}
        for label, clip_id, word in self._examples_for_head(head):
            by_class.setdefault(label, []).append((clip_id, word))

        for label, reps in sorted(by_class.items()):
            if len(reps) < 2:
                raise InsufficientData(
                    f"head {head.name}: class {label} has {len(reps)} repetition(s), need >= 2")

        width = self.feature_cfg.grid_width
        train_rows, test_rows, train_labels, test_labels = [], [], [], []
        for label in sorted(by_class):
            for rep_index, (clip_id, word) in enumerate(by_class[label]):
                row = self._example_grid(clip_id, word)
                if rep_index % TEST_STRIDE == 0:
                    test_rows.append(row)
                    test_labels.append(label)
                else:
                    train_rows.append(row)
                    train_labels.append(label)

        def stack(rows):
            if not rows:
                return np.zeros((0, width), dtype=np.float32)
            return np.vstack(rows).astype(np.float32)

        bundle = DatasetBundle(
            head=head,
            train_data=stack(train_rows),
            test_data=stack(test_rows),
            train_labels=np.asarray(train_labels, dtype=np.uint32),
            test_labels=np.asarray(test_labels, dtype=np.uint32),
            cfg_hash=self.feature_cfg.config_hash(),
        )
        bundle.validate()
        return bundle

    # --- persistence -------------------------------------------------------

    def _write_manifest(self) -> None:
        manifest = {
            "schema_version": SCHEMA_VERSION,
            "feature_config": asdict(self.feature_cfg),
            "config_hash": self.feature_cfg.config_hash(),
            "repetition_threshold": self.repetition_threshold,
            "heads": {h.name: h.class_count for h in HEAD_TABLE},
        }
        _atomic_write(os.path.join(self.root, "manifest.json"),
                      json.dumps(manifest, indent=2).encode())

    def _persist_utterance(self, stored: StoredUtterance) -> None:
        if self.root is None:
            return
        doc = stored.markers.to_json_dict()
        doc["utterance_id"] = stored.utterance_id
        doc["superseded"] = stored.superseded
        doc["pending_correction"] = stored.pending_correction
        _atomic_write(os.path.join(self.root, "markers", f"{stored.utterance_id}.json"),
                      json.dumps(doc, indent=2).encode())

    def save(self, root: str) -> None:
        """Serialize everything under a (possibly different) root directory."""
        previous = self.root
        self.root = root
        try:
            self._write_manifest()
            for clip_id, raw in self.clips.items():
                _atomic_write(os.path.join(root, "clips", f"{clip_id}.wav"), raw)
            for stored in self.utterances.values():
                self._persist_utterance(stored)
        finally:
            self.root = previous

    @classmethod
    def load(cls, root: str) -> "Corpus":
        manifest_path = os.path.join(root, "manifest.json")
        if not os.path.exists(manifest_path):
            raise IoFailure(f"no manifest.json under {root}")
        try:
            with open(manifest_path, "rb") as fh:
                manifest = json.loads(fh.read())
        except json.JSONDecodeError as exc:
            raise SchemaVersionMismatch(f"manifest.json unreadable: {exc}") from exc
        if manifest.get("schema_version") != SCHEMA_VERSION:
            raise SchemaVersionMismatch(
                f"schema_version {manifest.get('schema_version')} != {SCHEMA_VERSION}")

        cfg = FeatureConfig(**manifest["feature_config"])
        corpus = cls.__new__(cls)
        corpus.feature_cfg = cfg
        corpus.root = root
        corpus.repetition_threshold = manifest.get("repetition_threshold",
                                                   DEFAULT_REPETITION_THRESHOLD)
        corpus.clips = {}
        corpus.utterances = {}
        corpus._decoded = {}
        corpus._matrices = {}

        clips_dir = os.path.join(root, "clips")
        if os.path.isdir(clips_dir):
            for name in sorted(os.listdir(clips_dir)):
                if name.endswith(".wav"):
                    with open(os.path.join(clips_dir, name), "rb") as fh:
                        corpus.clips[name[:-4]] = fh.read()

        markers_dir = os.path.join(root, "markers")
        if os.path.isdir(markers_dir):
            for name in sorted(os.listdir(markers_dir)):
                if not name.endswith(".json"):
                    continue
                path = os.path.join(markers_dir, name)
                try:
                    with open(path, "rb") as fh:
                        doc = json.loads(fh.read())
                except json.JSONDecodeError as exc:
                    raise SchemaVersionMismatch(f"{path}: {exc}") from exc
                stored = StoredUtterance(
                    utterance_id=doc["utterance_id"],
                    markers=TaggedUtterance.from_json_dict(doc),
                    superseded=doc.get("superseded", False),
                    pending_correction=doc.get("pending_correction", False),
                )
                corpus.utterances[stored.utterance_id] = stored
        return corpus


def save_corpus(corpus: Corpus, root: str) -> None:
    corpus.save(root)


def load_corpus(root: str) -> Corpus:
    return Corpus.load(root)


# --- dataset bundle files -------------------------------------------------

_BUNDLE_FILES = ("train_data.f32", "test_data.f32", "train_labels.u32", "test_labels.u32")


def _write_array(path: str, array: np.ndarray, kind: str) -> None:
    rows = array.shape[0]
    cols = array.shape[1] if array.ndim == 2 else 1
    header = struct.pack("<4sHIIH", DATASET_MAGIC, SCHEMA_VERSION, rows, cols, 0)
    dtype = "<f4" if kind == "f32" else "<u4"
    _atomic_write(path, header + np.ascontiguousarray(array, dtype=dtype).tobytes())


def _read_array(path: str, kind: str) -> np.ndarray:
    if not os.path.exists(path):
        raise MissingFile(os.path.basename(path))
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16:
        raise SchemaVersionMismatch(f"{path}: header truncated")
    magic, version, rows, cols, _ = struct.unpack("<4sHIIH", blob[:16])
    if magic != DATASET_MAGIC:
        raise SchemaVersionMismatch(f"{path}: bad magic {magic!r}")
    if version != SCHEMA_VERSION:
        raise SchemaVersionMismatch(f"{path}: version {version}")
    dtype = "<f4" if kind == "f32" else "<u4"
    data = np.frombuffer(blob[16:], dtype=dtype)
    if data.size != rows * cols:
        raise SchemaVersionMismatch(f"{path}: payload size mismatch")
    return data.reshape(rows, cols)


def export_bundle(bundle: DatasetBundle, directory: str) -> None:
    """Write the four files (and nothing else) for one head's dataset."""
    bundle.validate()
    os.makedirs(directory, exist_ok=True)
    _write_array(os.path.join(directory, "train_data.f32"), bundle.train_data, "f32")
    _write_array(os.path.join(directory, "test_data.f32"), bundle.test_data, "f32")
    _write_array(os.path.join(directory, "train_labels.u32"),
                 bundle.train_labels.reshape(-1, 1), "u32")
    _write_array(os.path.join(directory, "test_labels.u32"),
                 bundle.test_labels.reshape(-1, 1), "u32")


def import_bundle(directory: str, head: HeadSpec | None = None,
                  cfg_hash: str = "") -> DatasetBundle:
    """Read a four-file dataset back; the head defaults to the directory name."""
    if head is None:
        name = os.path.basename(os.path.normpath(directory))
        if name not in HEADS_BY_NAME:
            raise MissingFile(f"cannot infer head from directory name {name!r}")
        head = HEADS_BY_NAME[name]
    bundle = DatasetBundle(
        head=head,
        train_data=_read_array(os.path.join(directory, "train_data.f32"), "f32"),
        test_data=_read_array(os.path.join(directory, "test_data.f32"), "f32"),
        train_labels=_read_array(os.path.join(directory, "train_labels.u32"), "u32").ravel(),
        test_labels=_read_array(os.path.join(directory, "test_labels.u32"), "u32").ravel(),
        cfg_hash=cfg_hash,
    )
    try:
        bundle.validate()
    except ValueError as exc:
        raise SchemaVersionMismatch(str(exc)) from exc
    return bundle
