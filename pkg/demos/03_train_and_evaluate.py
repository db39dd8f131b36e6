"""Training the seven classifier heads and reading their report cards.

Builds the full starter-world corpus (all patterns, five repetitions), trains
every head with a fixed seed, prints the accuracy table, then digs into the
phrase-pattern head: loss curve shape and the held-out confusion matrix.

Run:  python3 demos/03_train_and_evaluate.py   (about a minute of training)
"""

import time

from voxworld.corpus import HEAD_ORDER
from voxworld.model import TrainConfig, evaluate, train_all_heads
from voxworld.synth import EXTENDED_PATTERNS, build_fixture_session

session = build_fixture_session(EXTENDED_PATTERNS, repetitions=5, seed=0)
corpus = session.corpus
print(f"corpus: {len(corpus.utterances)} utterances, "
      f"{len(corpus.readiness())} phrase patterns")

cfg = TrainConfig(seed=7, epochs=150, batch_size=16)
print(f"training all heads (seed={cfg.seed}, epochs={cfg.epochs}, "
      f"batch={cfg.batch_size}, hidden={cfg.hidden_width})...")
started = time.monotonic()
heads = train_all_heads(corpus, cfg)
print(f"done in {time.monotonic() - started:.1f}s\n")

print(f"{'head':<18} {'classes':>7} {'train':>7} {'test':>7}")
for name in HEAD_ORDER:
    th = heads[name]
    print(f"{name:<18} {th.head.class_count:>7} "
          f"{th.train_accuracy:>7.3f} {th.test_accuracy:>7.3f}")

th = heads["phrase_pattern"]
hist = th.loss_history
print(f"\nphrase-pattern loss: {hist[0]:.3f} (epoch 1) -> "
      f"{hist[len(hist) // 2]:.3f} (mid) -> {hist[-1]:.4f} (final)")

bundle = corpus.build_dataset("phrase_pattern")
result = evaluate(th, bundle)
present = sorted(set(bundle.test_labels.tolist()))
print(f"\nheld-out confusion (patterns {present}), rows=true cols=predicted:")
confusion = result["confusion"]
print("      " + " ".join(f"{c:>3}" for c in present))
for r in present:
    print(f"  {r:>3} " + " ".join(f"{confusion[r, c]:>3}" for c in present))
print(f"held-out accuracy: {result['accuracy']:.3f}")
