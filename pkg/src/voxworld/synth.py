"""Synthetic teaching material for the two-object starter world.

Real use records a human speaker; tests and demos need deterministic audio
instead. Every vocabulary slot gets its own band-limited chord, a phrase is
the concatenation of its words' chords with gaps, and every repetition jitters
pitch and amplitude by up to +/-3 percent. Distinct word sequences therefore
give every (pattern, object) class a distinct signature while keeping each
vocabulary slot acoustically consistent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import Corpus, Intonation, TaggedUtterance, WordFunction, WordSpan
from .features import FeatureConfig, frame_count
from .world import Scene, WorldSession, preliminary_world

# vocabulary slots used by the starter world
VOCAB_THIS = 0
VOCAB_IS = 1
VOCAB_WHAT = 2
VOCAB_WHERE = 3
VOCAB_FIND = 4
VOCAB_OBJECT_BASE = 5  # object o speaks as slot 5 + o
VOCAB_COLOR = 7
VOCAB_SIZE = 8
VOCAB_GREEN = 9
VOCAB_RED = 10
VOCAB_BIG = 11
VOCAB_SMALL = 12
VOCAB_YES = 13
VOCAB_NO = 14

PITCH_JITTER = 0.03
AMP_JITTER = 0.03

WORD_SECONDS = 0.20
GAP_SECONDS = 0.08
LEAD_SECONDS = 0.05

# pattern ids for the starter curriculum
PATTERN_NAME_STATEMENT = 0
PATTERN_WHAT_QUESTION = 1
PATTERN_WHERE_QUESTION = 2
PATTERN_FIND_COMMAND = 3
PATTERN_COLOR_QUESTION = 4
PATTERN_SIZE_QUESTION = 5
PATTERN_COLOR_STATEMENT = 6
PATTERN_SIZE_STATEMENT = 7
PATTERN_GREEN_CHECK = 8
PATTERN_YES = 9
PATTERN_NO = 10

CORE_PATTERNS = (PATTERN_NAME_STATEMENT, PATTERN_WHAT_QUESTION,
                 PATTERN_WHERE_QUESTION, PATTERN_FIND_COMMAND)
EXTENDED_PATTERNS = tuple(range(PATTERN_NO + 1))


def vocab_chord(vocab_id: int) -> tuple[float, float, float]:
    """Three partials unique to a vocabulary slot, inside the speech band."""
    base = 320.0 + 130.0 * vocab_id
    return (base, base * 1.27, base * 1.61)


@dataclass(frozen=True)
class PhraseWord:
    vocab_id: int
    function: WordFunction


def object_word(scene: Scene, object_id: int) -> PhraseWord:
    return PhraseWord(VOCAB_OBJECT_BASE + object_id, WordFunction.OBJECT)


def value_word(scene: Scene, object_id: int, kind: str) -> PhraseWord:
    obj = scene.objects[object_id]
    vocab = scene.vocabularies["values"][kind][obj.property_value(kind)]
    return PhraseWord(vocab, WordFunction.OBJECT_PROPERTY)


def phrase_template(scene: Scene, pattern_id: int,
                    object_id: int) -> tuple[Intonation, list[PhraseWord]]:
    """Word sequence and intonation for one (pattern, object) class."""
    obj = object_word(scene, object_id)
    fn = WordFunction
    if pattern_id == PATTERN_NAME_STATEMENT:
        return Intonation.STATEMENT, [PhraseWord(VOCAB_THIS, fn.POINTER),
                                      PhraseWord(VOCAB_IS, fn.FUNCTOR), obj]
    if pattern_id == PATTERN_WHAT_QUESTION:
        return Intonation.QUESTION, [PhraseWord(VOCAB_WHAT, fn.FUNCTOR),
                                     PhraseWord(VOCAB_IS, fn.FUNCTOR), obj]
    if pattern_id == PATTERN_WHERE_QUESTION:
        return Intonation.QUESTION, [PhraseWord(VOCAB_WHERE, fn.FUNCTOR),
                                     PhraseWord(VOCAB_IS, fn.FUNCTOR), obj]
    if pattern_id == PATTERN_FIND_COMMAND:
        return Intonation.COMMAND, [PhraseWord(VOCAB_FIND, fn.ACTION), obj]
    if pattern_id == PATTERN_COLOR_QUESTION:
        return Intonation.QUESTION, [PhraseWord(VOCAB_WHAT, fn.FUNCTOR),
                                     PhraseWord(VOCAB_COLOR, fn.PROPERTY_NAME), obj]
    if pattern_id == PATTERN_SIZE_QUESTION:
        return Intonation.QUESTION, [PhraseWord(VOCAB_WHAT, fn.FUNCTOR),
                                     PhraseWord(VOCAB_SIZE, fn.PROPERTY_NAME), obj]
    if pattern_id == PATTERN_COLOR_STATEMENT:
        return Intonation.STATEMENT, [obj, PhraseWord(VOCAB_IS, fn.FUNCTOR),
                                      value_word(scene, object_id, "color")]
    if pattern_id == PATTERN_SIZE_STATEMENT:
        return Intonation.STATEMENT, [obj, PhraseWord(VOCAB_IS, fn.FUNCTOR),
                                      value_word(scene, object_id, "size")]
    if pattern_id == PATTERN_GREEN_CHECK:
        return Intonation.QUESTION, [PhraseWord(VOCAB_IS, fn.FUNCTOR),
                                     PhraseWord(VOCAB_GREEN, fn.OBJECT_PROPERTY), obj]
    if pattern_id == PATTERN_YES:
        return Intonation.STATEMENT, [PhraseWord(VOCAB_YES, fn.POSITIVE)]
    if pattern_id == PATTERN_NO:
        return Intonation.STATEMENT, [PhraseWord(VOCAB_NO, fn.NEGATIVE)]
    raise ValueError(f"no template for pattern {pattern_id}")


def synthesize_phrase(words: list[PhraseWord], cfg: FeatureConfig,
                      rng: np.random.Generator) -> tuple[np.ndarray, list[tuple[int, int]]]:
    """Audio for a word sequence plus each word's frame span.

    One pitch/amplitude jitter pair is drawn per call (one repetition).
    """
    rate = cfg.sample_rate
    pitch = 1.0 + rng.uniform(-PITCH_JITTER, PITCH_JITTER)
    amp = 0.5 * (1.0 + rng.uniform(-AMP_JITTER, AMP_JITTER))

    word_len = int(WORD_SECONDS * rate)
    gap_len = int(GAP_SECONDS * rate)
    lead_len = int(LEAD_SECONDS * rate)
    ramp = int(0.01 * rate)
    envelope = np.ones(word_len)
    envelope[:ramp] = np.linspace(0, 1, ramp)
    envelope[-ramp:] = np.linspace(1, 0, ramp)

    chunks = [np.zeros(lead_len)]
    spans_samples = []
    pos = lead_len
    t = np.arange(word_len) / rate
    for word in words:
        tone = np.zeros(word_len)
        for k, freq in enumerate(vocab_chord(word.vocab_id)):
            tone += np.sin(2 * np.pi * freq * pitch * t) / (k + 1)
        tone *= amp * envelope / 2.0
        chunks.append(tone)
        spans_samples.append((pos, pos + word_len))
        pos += word_len
        chunks.append(np.zeros(gap_len))
        pos += gap_len
    chunks.append(np.zeros(lead_len))
    samples = np.concatenate(chunks)

    total_frames = frame_count(len(samples), cfg)
    spans = []
    for a, b in spans_samples:
        start = int(round(a / cfg.hop_size))
        end = min(total_frames, max(start + 1, int(round(b / cfg.hop_size))))
        spans.append((start, end))
    return samples, spans


def tagged_phrase(scene: Scene, corpus: Corpus, pattern_id: int, object_id: int,
                  rng: np.random.Generator) -> tuple[str, TaggedUtterance]:
    """Synthesize one repetition and build its full tag set."""
    intonation, words = phrase_template(scene, pattern_id, object_id)
    samples, spans = synthesize_phrase(words, corpus.feature_cfg, rng)
    clip_id = corpus.add_clip_from_samples(samples, corpus.feature_cfg.sample_rate)
    markers = TaggedUtterance(
        clip_id=clip_id,
        object_id=object_id,
        phrase_pattern_id=pattern_id,
        phrase_intonation=intonation,
        word_count=len(words),
        words=tuple(
            WordSpan(start, end, w.function, intonation, w.vocab_id)
            for (start, end), w in zip(spans, words)
        ),
    )
    return clip_id, markers


def pattern_objects(pattern_id: int) -> tuple[int, ...]:
    # yes/no are taught once (against object 0); everything else per object
    if pattern_id in (PATTERN_YES, PATTERN_NO):
        return (0,)
    return (0, 1)


def build_fixture_session(patterns=CORE_PATTERNS, repetitions: int = 5, seed: int = 0,
                          cfg: FeatureConfig | None = None,
                          corpus_root: str | None = None) -> WorldSession:
    """Teach the starter world from scratch: every pattern, five repetitions.

    Returns a WorldSession whose corpus holds the taught material and whose
    registry reflects the full teaching chain.
    """
    cfg = cfg or FeatureConfig()
    scene = preliminary_world()
    corpus = Corpus(feature_cfg=cfg, root=corpus_root)
    session = WorldSession(scene, corpus)
    rng = np.random.default_rng(seed)
    for object_id in (0, 1):
        for pattern_id in patterns:
            if object_id not in pattern_objects(pattern_id):
                continue
            for _ in range(repetitions):
                clip_id, markers = tagged_phrase(scene, corpus, pattern_id,
                                                 object_id, rng)
                session.register_training_phrase(clip_id, markers)
    return session


def talk_clip(session: WorldSession, pattern_id: int, object_id: int,
              seed: int = 1000) -> str:
    """A fresh jittered repetition, stored as an incoming (untagged) clip."""
    scene, corpus = session.scene, session.corpus
    rng = np.random.default_rng(seed)
    _, words = phrase_template(scene, pattern_id, object_id)
    samples, _ = synthesize_phrase(words, corpus.feature_cfg, rng)
    return corpus.add_clip_from_samples(samples, corpus.feature_cfg.sample_rate)
