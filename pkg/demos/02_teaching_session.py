"""Teaching the starter world: repetition counters, readiness, datasets.

The corpus starts empty. A (synthetic) speaker teaches the two-object world
pattern by pattern, five repetitions each; the readiness table flips to
"ready" at the fifth repetition. At the end we build one head's dataset and
export it as the four-file bundle a training run consumes.

Run:  python3 demos/02_teaching_session.py
"""

import os

import numpy as np

from voxworld.corpus import Corpus, export_bundle
from voxworld.features import FeatureConfig
from voxworld.synth import CORE_PATTERNS, pattern_objects, tagged_phrase
from voxworld.world import WorldSession, preliminary_world

OUT_DIR = os.path.join(os.path.dirname(__file__), "out")

scene = preliminary_world()
print("the world:")
for obj in scene.objects.values():
    print(f"  object {obj.object_id} ({obj.name_hint}): {obj.size}, {obj.color}, "
          f"at {obj.position}")

corpus = Corpus(feature_cfg=FeatureConfig())
session = WorldSession(scene, corpus)
rng = np.random.default_rng(0)

print("\nteaching (each row is one recorded + tagged repetition):")
for object_id in (0, 1):
    for pattern in CORE_PATTERNS:
        if object_id not in pattern_objects(pattern):
            continue
        for rep in range(5):
            clip_id, markers = tagged_phrase(scene, corpus, pattern, object_id, rng)
            session.register_training_phrase(clip_id, markers)
            ready = corpus.readiness()[pattern]
            if rep == 4:
                print(f"  pattern {pattern} / object {object_id}: "
                      f"{ready['repetitions']} repetitions, ready={ready['ready']}")

print("\nreadiness table:")
for pattern, state in corpus.readiness().items():
    print(f"  pattern {pattern}: {state['repetitions']} reps, ready={state['ready']}")

print(f"\ncorpus now holds {len(corpus.clips)} clips / "
      f"{len(corpus.utterances)} tagged utterances")

bundle = corpus.build_dataset("object")
print(f"\nobject-head dataset: train {bundle.train_data.shape}, "
      f"test {bundle.test_data.shape}")
print(f"train labels: {bundle.train_labels.tolist()}")
print(f"test labels:  {bundle.test_labels.tolist()} "
      f"(every fifth repetition per class is held out)")

out = os.path.join(OUT_DIR, "dataset_object")
export_bundle(bundle, out)
print(f"\nexported exactly these files to {out}:")
for name in sorted(os.listdir(out)):
    size = os.path.getsize(os.path.join(out, name))
    print(f"  {name} ({size} bytes)")
