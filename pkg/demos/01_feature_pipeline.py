"""From raw WAV bytes to the fixed-size classifier grid, step by step.

This walks the whole per-clip pipeline on a synthesized two-word phrase:
decode -> resample -> frames -> window -> spectrum -> 53 features per frame
-> per-row normalization -> center-fit to the 53 x Z grid. It finishes by
writing the plot-data JSON (waveform + spectrogram + normalized array, the
same payload the service serves at GET /viz/{clip_id}), and renders a PNG
triptych when matplotlib is importable.

Run:  python3 demos/01_feature_pipeline.py
"""

import json
import os

import numpy as np

from voxworld.audio import decode_wav, encode_wav_pcm16, resample
from voxworld.features import (
    FeatureConfig,
    cut_frames,
    extract_features,
    fit_to_grid,
    normalize,
    visualization_bundle,
)

OUT_DIR = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT_DIR, exist_ok=True)

cfg = FeatureConfig()
print(f"feature config: frame={cfg.frame_size} hop={cfg.hop_size} "
      f"mel={cfg.n_mel} mfcc={cfg.n_mfcc} grid={cfg.grid_frames}")
print(f"config hash: {cfg.config_hash()[:16]}...")

# synthesize a phrase-like clip at 44.1 kHz: two chords with a gap, as if a
# speaker said two words
rate = 44100
t = np.arange(int(0.25 * rate)) / rate
word1 = sum(np.sin(2 * np.pi * f * t) / (k + 1) for k, f in enumerate((450, 570, 720)))
word2 = sum(np.sin(2 * np.pi * f * t) / (k + 1) for k, f in enumerate((900, 1140, 1450)))
gap = np.zeros(int(0.1 * rate))
samples = 0.4 * np.concatenate([gap, word1, gap, word2, gap])
wav_bytes = encode_wav_pcm16(samples, rate)
print(f"\nsynthesized clip: {len(samples)} samples at {rate} Hz "
      f"({len(wav_bytes)} wav bytes)")

# decode + resample to the analysis rate
clip = decode_wav(wav_bytes, source_id="demo-phrase")
clip = resample(clip, cfg.sample_rate)
print(f"decoded + resampled: {len(clip)} samples at {clip.sample_rate} Hz")

frames = cut_frames(clip, cfg)
print(f"framed: {frames.shape[0]} frames of {frames.shape[1]} samples "
      f"(hop {cfg.hop_size})")

matrix = extract_features(clip, cfg)
print(f"raw features: {matrix.values.shape[0]} x {matrix.values.shape[1]} "
      f"(40 log-mel + 13 MFCC per frame)")

normalized = normalize(matrix)
print(f"normalized range: [{normalized.values.min():.3f}, "
      f"{normalized.values.max():.3f}]")

grid = fit_to_grid(normalized, cfg)
print(f"grid for the classifiers: {grid.values.shape[0]} x {grid.values.shape[1]}"
      f" -> flattened to {grid.flat().shape[0]} float32 values")

bundle = visualization_bundle(clip, cfg)
out_json = os.path.join(OUT_DIR, "feature_pipeline.json")
with open(out_json, "w") as fh:
    json.dump(bundle.to_json_dict(), fh)
print(f"\nplot data written to {out_json}")

try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(3, 1, figsize=(10, 8), constrained_layout=True)
    axes[0].plot(np.arange(len(clip)) / clip.sample_rate, clip.samples, lw=0.5, color="k")
    axes[0].set_title("waveform")
    axes[1].imshow(np.log10(bundle.spectrogram + 1e-9), aspect="auto", origin="lower")
    axes[1].set_title("spectrogram (log magnitude)")
    axes[2].imshow(bundle.normalized.values, aspect="auto", origin="lower", cmap="magma")
    axes[2].set_title("normalized 53-row feature array")
    out_png = os.path.join(OUT_DIR, "feature_pipeline.png")
    fig.savefig(out_png, dpi=110)
    print(f"triptych rendered to {out_png}")
except ImportError:
    print("matplotlib not available; skipped the PNG render")
