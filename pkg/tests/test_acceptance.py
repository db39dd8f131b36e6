"""Acceptance suite: one test per criterion, printing one PASS/FAIL line each.

Run with `pytest tests/test_acceptance.py -s` to see the per-criterion lines.
Budgets are asserted with time.monotonic around the work they cover.
"""

import math
import os
import time
from contextlib import contextmanager

import numpy as np
import pytest

from voxworld.corpus import HEAD_ORDER, Intonation, load_corpus, save_corpus
from voxworld.features import FeatureConfig, extract_features, fit_to_grid, frame_count, frame_features, normalize, spectrum
from voxworld.audio import AudioClip
from voxworld.model import (
    MlpParams,
    TrainConfig,
    backward,
    cross_entropy,
    forward,
    load_heads,
    save_heads,
    train_all_heads,
)
from voxworld.synth import (
    CORE_PATTERNS,
    EXTENDED_PATTERNS,
    PATTERN_COLOR_QUESTION,
    PATTERN_FIND_COMMAND,
    PATTERN_GREEN_CHECK,
    PATTERN_SIZE_QUESTION,
    PATTERN_WHAT_QUESTION,
    PATTERN_WHERE_QUESTION,
    build_fixture_session,
    talk_clip,
)
from voxworld.world import PlayerMessage

CFG = FeatureConfig()
STUDY_TRAIN = TrainConfig(seed=7)  # fixed seed, default protocol otherwise
CAPABILITY_TRAIN = TrainConfig(seed=7, epochs=150, batch_size=16)


@contextmanager
def criterion(name):
    try:
        yield
    except BaseException:
        print(f"FAIL [{name}]")
        raise
    print(f"PASS [{name}]")


@pytest.fixture(scope="module")
def study():
    """Desk-scale reproduction: core four-pattern protocol, trained once."""
    session = build_fixture_session(CORE_PATTERNS, repetitions=5, seed=0)
    started = time.monotonic()
    heads = train_all_heads(session.corpus, STUDY_TRAIN)
    elapsed = time.monotonic() - started
    return session, heads, elapsed


@pytest.fixture(scope="module")
def capability():
    """Extended curriculum (adds property/check/yes/no patterns), trained once."""
    session = build_fixture_session(EXTENDED_PATTERNS, repetitions=5, seed=0)
    heads = train_all_heads(session.corpus, CAPABILITY_TRAIN)
    return session, heads


def test_dsp_oracle_equivalence():
    with criterion("DSP oracle equivalence (< 10 s)"):
        started = time.monotonic()
        rng = np.random.default_rng(100)
        n = 1024

        # naive O(N^2) DFT from the definition, no FFT anywhere
        j = np.arange(n // 2 + 1)[:, None]
        i = np.arange(n)[None, :]
        angle = -2.0 * np.pi * j * i / n
        cos_m, sin_m = np.cos(angle), np.sin(angle)

        frames = rng.uniform(-1, 1, (100, n))
        ours = np.vstack([spectrum(f) for f in frames])
        oracle = np.hypot(frames @ cos_m.T, frames @ sin_m.T)
        assert np.allclose(ours, oracle, rtol=1e-6, atol=1e-9)

        # independently coded mel filterbank + DCT-II
        def mel(f):
            return 2595.0 * math.log10(1.0 + f / 700.0)

        def unmel(m):
            return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

        points = [unmel(mel(CFG.fmin) + (mel(CFG.fmax) - mel(CFG.fmin)) * k / (CFG.n_mel + 1))
                  for k in range(CFG.n_mel + 2)]
        fb = np.zeros((CFG.n_mel, CFG.n_bins))
        for band in range(CFG.n_mel):
            lo, mid, hi = points[band], points[band + 1], points[band + 2]
            for b in range(CFG.n_bins):
                f = b * CFG.sample_rate / CFG.frame_size
                if lo <= f <= mid:
                    fb[band, b] = (f - lo) / (mid - lo)
                elif mid < f <= hi:
                    fb[band, b] = (hi - f) / (hi - mid)

        dct_scale = [math.sqrt(1.0 / CFG.n_mel) if k == 0 else math.sqrt(2.0 / CFG.n_mel)
                     for k in range(CFG.n_mfcc)]
        for spec in rng.uniform(0, 1.5, (100, CFG.n_bins)):
            expected_mel = np.log(np.maximum(CFG.log_floor, fb @ (spec * spec)))
            expected_mfcc = np.array([
                dct_scale[k] * sum(expected_mel[m] * math.cos(math.pi * k * (2 * m + 1)
                                                              / (2 * CFG.n_mel))
                                   for m in range(CFG.n_mel))
                for k in range(CFG.n_mfcc)
            ])
            got = frame_features(spec, CFG)
            assert np.allclose(got[:CFG.n_mel], expected_mel, rtol=1e-6, atol=1e-9)
            assert np.allclose(got[CFG.n_mel:], expected_mfcc, rtol=1e-6, atol=1e-9)

        elapsed = time.monotonic() - started
        assert elapsed < 10.0, f"took {elapsed:.1f}s"


def test_feature_shape_law():
    with criterion("feature-shape law over 1000 random geometries (< 30 s)"):
        started = time.monotonic()
        rng = np.random.default_rng(200)
        for _ in range(1000):
            frame = int(2 ** rng.integers(4, 11))
            hop = int(rng.integers(1, frame + 1))
            length = int(rng.integers(1, 4000))
            grid_frames = int(rng.integers(1, 48))
            cfg = FeatureConfig(frame_size=frame, hop_size=hop, grid_frames=grid_frames)
            clip = AudioClip(rng.uniform(-1, 1, length), cfg.sample_rate)

            matrix = extract_features(clip, cfg)
            expected_t = 1 if length <= frame else math.ceil((length - frame) / hop) + 1
            assert matrix.values.shape == (53, expected_t)
            assert frame_count(length, cfg) == expected_t

            grid = fit_to_grid(normalize(matrix), cfg)
            assert grid.values.shape == (53, grid_frames)
        elapsed = time.monotonic() - started
        assert elapsed < 30.0, f"took {elapsed:.1f}s"


def test_gradient_check():
    with criterion("gradient check vs central differences (< 5 s)"):
        started = time.monotonic()
        rng = np.random.default_rng(300)
        params = MlpParams(
            sizes=(4, 3, 2),
            weights=[rng.normal(scale=0.8, size=(4, 3)), rng.normal(scale=0.8, size=(3, 2))],
            biases=[rng.normal(scale=0.4, size=3), rng.normal(scale=0.4, size=2)],
        )
        x = rng.normal(size=(6, 4))
        y = rng.integers(0, 2, size=6)
        probs, hidden = forward(params, x)
        grads_w, grads_b = backward(params, x, y, probs, hidden)

        def loss():
            p, _ = forward(params, x)
            return cross_entropy(p, y)

        h = 1e-6
        worst = 0.0
        for store, analytic in [(params.weights[0], grads_w[0]),
                                (params.weights[1], grads_w[1]),
                                (params.biases[0], grads_b[0]),
                                (params.biases[1], grads_b[1])]:
            it = np.nditer(store, flags=["multi_index"])
            while not it.finished:
                idx = it.multi_index
                orig = store[idx]
                store[idx] = orig + h
                up = loss()
                store[idx] = orig - h
                down = loss()
                store[idx] = orig
                numeric = (up - down) / (2 * h)
                denom = max(abs(numeric) + abs(analytic[idx]), 1e-8)
                worst = max(worst, abs(numeric - analytic[idx]) / denom)
                it.iternext()
        assert worst < 1e-4, f"worst relative gradient error {worst:.2e}"
        elapsed = time.monotonic() - started
        assert elapsed < 5.0, f"took {elapsed:.1f}s"


def test_preliminary_study_reproduction(study):
    with criterion("desk-scale study: 2 objects x 4 patterns x 5 reps (< 5 min)"):
        session, heads, elapsed = study
        assert len(session.corpus.utterances) == 40
        for name in ("object", "phrase_pattern"):
            th = heads[name]
            assert th.train_accuracy == 1.0, f"{name} train {th.train_accuracy}"
            assert th.test_accuracy >= 0.90, f"{name} held-out {th.test_accuracy}"
        for name in HEAD_ORDER:
            assert len(heads[name].loss_history) == STUDY_TRAIN.epochs
        assert elapsed < 300.0, f"training took {elapsed:.1f}s"
        print(f"  held-out: object={heads['object'].test_accuracy:.3f} "
              f"phrase_pattern={heads['phrase_pattern'].test_accuracy:.3f} "
              f"({elapsed:.1f}s)")


def test_capability_matrix(capability):
    with criterion("capability matrix (1)-(6) scripted session (< 1 min)"):
        session, heads = capability
        registry = session.registry
        started = time.monotonic()

        def exchange(pattern, obj, point, seed):
            cid = talk_clip(session, pattern, obj, seed=seed)
            turn = session.handle_turn(heads, PlayerMessage(cid, point))
            return turn

        # (1) name an object the speaker points at
        turn = exchange(PATTERN_WHAT_QUESTION, 1, point=1, seed=3001)
        assert turn.action.kind == "reply"
        assert turn.action.clip_id == registry.name_answers[1]
        assert turn.prediction.argmax("phrase_intonation") == int(Intonation.QUESTION)

        # (2) find a requested object
        turn = exchange(PATTERN_FIND_COMMAND, 0, point=None, seed=3002)
        assert turn.action.kind == "navigate_to"
        assert turn.action.object_id == 0
        assert turn.action.path[-1] == tuple(session.scene.objects[0].position)

        # (3) answer from a question-answer pair, no pointing
        turn = exchange(PATTERN_WHERE_QUESTION, 1, point=None, seed=3003)
        assert turn.action.kind == "reply"
        assert turn.action.clip_id == registry.name_answers[1]

        # (4) answer about size and color from the world's ground truth
        turn = exchange(PATTERN_COLOR_QUESTION, 0, point=0, seed=3004)
        assert turn.action.kind == "reply_and_point"
        assert turn.resolved_tags["property"] == {"kind": "color", "value": "red"}
        turn = exchange(PATTERN_SIZE_QUESTION, 1, point=1, seed=3005)
        assert turn.action.kind == "reply_and_point"
        assert turn.resolved_tags["property"] == {"kind": "size", "value": "small"}

        # (5) execute a vocal command (agent actually moves)
        turn = exchange(PATTERN_FIND_COMMAND, 1, point=None, seed=3006)
        assert turn.action.kind == "navigate_to"
        assert session.scene.agent_position == tuple(session.scene.objects[1].position)

        # (6) intonation recognition, including the polarity checks
        turn = exchange(PATTERN_GREEN_CHECK, 1, point=1, seed=3007)
        assert turn.action.clip_id == registry.yes_clip
        turn = exchange(PATTERN_GREEN_CHECK, 0, point=0, seed=3008)
        assert turn.action.clip_id == registry.no_clip
        for t in session.turns.values():
            spoken = Intonation.COMMAND if t.action.kind == "navigate_to" \
                else Intonation.QUESTION
            assert t.prediction.argmax("phrase_intonation") == int(spoken)

        elapsed = time.monotonic() - started
        assert elapsed < 60.0, f"session took {elapsed:.1f}s"


def test_persistence_round_trips(study, tmp_path):
    with criterion("persistence: corpus, four-file bundles, heads, service restart"):
        session, heads, _ = study
        corpus = session.corpus

        # corpus round trip is bit-exact
        root = str(tmp_path / "corpus")
        save_corpus(corpus, root)
        back = load_corpus(root)
        assert back.clips == corpus.clips
        assert [u.markers for u in back.utterances.values()] == \
            [u.markers for u in corpus.utterances.values()]

        # exactly four files per head, bit-exact arrays back
        from voxworld.corpus import export_bundle, import_bundle
        for name in HEAD_ORDER:
            bundle = corpus.build_dataset(name)
            directory = str(tmp_path / "datasets" / name)
            export_bundle(bundle, directory)
            assert sorted(os.listdir(directory)) == sorted(
                ["train_data.f32", "test_data.f32", "train_labels.u32",
                 "test_labels.u32"])
            again = import_bundle(directory)
            np.testing.assert_array_equal(again.train_data, bundle.train_data)
            np.testing.assert_array_equal(again.test_data, bundle.test_data)
            np.testing.assert_array_equal(again.train_labels, bundle.train_labels)
            np.testing.assert_array_equal(again.test_labels, bundle.test_labels)

        # head bundle round trip is bit-exact
        heads_path = str(tmp_path / "heads.ftmh")
        save_heads(heads, heads_path)
        reloaded = load_heads(heads_path)
        for name in HEAD_ORDER:
            for w1, w2 in zip(heads[name].params.weights, reloaded[name].params.weights):
                np.testing.assert_array_equal(w1, w2)
            for b1, b2 in zip(heads[name].params.biases, reloaded[name].params.biases):
                np.testing.assert_array_equal(b1, b2)

        # service kill/restart retains all committed state
        from fastapi.testclient import TestClient

        from voxworld.service import SessionService, create_app
        from voxworld.synth import pattern_objects, tagged_phrase
        data_dir = str(tmp_path / "service")
        service = SessionService(
            data_dir, train_cfg=TrainConfig(seed=7, epochs=40, batch_size=16,
                                            hidden_width=32))
        client = TestClient(create_app(service))
        rng = np.random.default_rng(50)
        for obj in (0, 1):
            for pattern in CORE_PATTERNS:
                if obj not in pattern_objects(pattern):
                    continue
                for _ in range(2):
                    clip_id, markers = tagged_phrase(service.session.scene,
                                                     service.corpus, pattern, obj, rng)
                    service.session.register_training_phrase(clip_id, markers)
        job = client.post("/train").json()
        deadline = time.monotonic() + 120
        while time.monotonic() < deadline:
            doc = client.get(f"/train/{job['job_id']}").json()
            if doc["status"] != "running":
                break
            time.sleep(0.2)
        assert doc["status"] == "done", doc
        wav = service.corpus.clip_bytes(talk_clip(service.session,
                                                  PATTERN_WHAT_QUESTION, 0, seed=60))
        turn = client.post("/talk", content=wav).json()

        reborn = SessionService(data_dir)
        assert reborn.corpus.clips.keys() == service.corpus.clips.keys()
        assert set(reborn.heads) == set(service.heads)
        assert turn["turn_id"] in reborn.session.turns
        for name in HEAD_ORDER:
            for w1, w2 in zip(service.heads[name].params.weights,
                              reborn.heads[name].params.weights):
                np.testing.assert_array_equal(w1, w2)


def test_determinism(study):
    with criterion("determinism: same corpus + seed -> bit-identical heads"):
        session, first, _ = study
        second = train_all_heads(session.corpus, STUDY_TRAIN)
        for name in HEAD_ORDER:
            a, b = first[name], second[name]
            assert a.train_accuracy == b.train_accuracy
            assert a.test_accuracy == b.test_accuracy
            assert a.loss_history == b.loss_history
            for w1, w2 in zip(a.params.weights, b.params.weights):
                np.testing.assert_array_equal(w1, w2)
            for b1, b2 in zip(a.params.biases, b.params.biases):
                np.testing.assert_array_equal(b1, b2)
        # and the datasets they saw were themselves bit-identical
        x = session.corpus.build_dataset("object")
        y = session.corpus.build_dataset("object")
        np.testing.assert_array_equal(x.train_data, y.train_data)
        np.testing.assert_array_equal(x.test_labels, y.test_labels)
