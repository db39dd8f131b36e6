"""The full loop over HTTP: record, tag, train, talk, correct.

Starts the service on a scratch directory, then drives it purely through the
HTTP API with stdlib urllib: upload recordings, attach tag sets, watch the
readiness badges, launch the async training job, hold one exchange, and file
a correction that the next dataset build will include. This is exactly the
surface the browser front end uses.

Run:  python3 demos/05_service_loop.py   (trains with a small fast config)
"""

import json
import tempfile
import threading
import time
import urllib.request

import numpy as np
import uvicorn

from voxworld.features import FeatureConfig
from voxworld.model import TrainConfig
from voxworld.service import SessionService, create_app
from voxworld.synth import CORE_PATTERNS, pattern_objects, phrase_template, synthesize_phrase
from voxworld.audio import encode_wav_pcm16
from voxworld.world import preliminary_world

PORT = 8471
BASE = f"http://127.0.0.1:{PORT}"
CFG = FeatureConfig()


def call(method, path, body=None, headers=None):
    req = urllib.request.Request(f"{BASE}{path}", data=body, method=method,
                                 headers=headers or {})
    with urllib.request.urlopen(req) as resp:
        payload = resp.read()
    if resp.headers.get("content-type", "").startswith("application/json"):
        return json.loads(payload)
    return payload


def wav_for(pattern, obj, seed):
    scene = preliminary_world()
    rng = np.random.default_rng(seed)
    intonation, words = phrase_template(scene, pattern, obj)
    samples, spans = synthesize_phrase(words, CFG, rng)
    return encode_wav_pcm16(samples, CFG.sample_rate), words, spans, intonation


def markers_for(clip_id, pattern, obj, words, spans, intonation):
    return {
        "clip_id": clip_id, "object_id": obj, "phrase_pattern_id": pattern,
        "phrase_intonation": int(intonation), "word_count": len(words),
        "words": [{"start_frame": a, "end_frame": b, "function": int(w.function),
                   "intonation": int(intonation), "vocab_id": w.vocab_id}
                  for (a, b), w in zip(spans, words)],
    }


data_dir = tempfile.mkdtemp(prefix="voxworld-demo-")
service = SessionService(data_dir, feature_cfg=CFG,
                         train_cfg=TrainConfig(seed=7, epochs=80, batch_size=16,
                                               hidden_width=64))
server = uvicorn.Server(uvicorn.Config(create_app(service), host="127.0.0.1",
                                       port=PORT, log_level="warning"))
thread = threading.Thread(target=server.run, daemon=True)
thread.start()
while not server.started:
    time.sleep(0.05)
print(f"service running on {BASE}, data in {data_dir}\n")

print("teaching over HTTP (2 objects x 4 patterns x 5 repetitions)...")
seed = 0
for obj in (0, 1):
    for pattern in CORE_PATTERNS:
        if obj not in pattern_objects(pattern):
            continue
        for _ in range(5):
            wav, words, spans, intonation = wav_for(pattern, obj, seed)
            seed += 1
            clip_id = call("POST", "/recordings", wav)["clip_id"]
            call("POST", "/utterances",
                 json.dumps({"clip_id": clip_id,
                             "markers": markers_for(clip_id, pattern, obj, words,
                                                    spans, intonation)}).encode(),
                 {"Content-Type": "application/json"})

readiness = call("GET", "/readiness")
print("readiness:", {k: v["ready"] for k, v in readiness["patterns"].items()})

job = call("POST", "/train")
print(f"\ntraining job {job['job_id']} started; polling...")
while True:
    status = call("GET", f"/train/{job['job_id']}")
    if status["status"] != "running":
        break
    time.sleep(0.5)
print(f"job finished: {status['status']}")
for name, acc in status["accuracies"].items():
    print(f"  {name:<18} train={acc['train']:.3f} test={acc['test']:.3f}")

wav, words, spans, intonation = wav_for(1, 0, seed=990)  # what-question, block
turn = call("POST", "/talk?point=0", wav)
print(f"\ntalk: agent action = {turn['action']}")

print("filing a correction against that turn (retag to the ball)...")
correction = markers_for(turn["clip_id"], 1, 1, words, spans, intonation)
result = call("POST", "/corrections",
              json.dumps({"turn_id": turn["turn_id"],
                          "markers": correction}).encode(),
              {"Content-Type": "application/json"})
print(f"correction stored as utterance {result['utterance_id']} "
      f"(pending until the next training run)")

pending = service.corpus.pending_corrections()
print(f"pending corrections in the corpus: {len(pending)}")

server.should_exit = True
thread.join(timeout=5)
print("\nservice stopped; the data directory persists everything it committed")
