"""Frame-based feature extraction: 53 features per frame, fixed-size grids.

The pipeline per clip is

    cut_frames -> apply_window -> spectrum -> frame_features   (per frame)
    extract_features -> normalize -> fit_to_grid               (per clip)

Each frame yields 40 log-mel band energies followed by 13 MFCC coefficients
(53 values). A clip therefore becomes a 53 x T matrix, min-max normalized per
row to [0, 1], then center-cropped or zero-padded to the fixed 53 x Z grid
the classifiers consume.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, asdict

import numpy as np

from .audio import AudioClip
from .errors import (
    ConfigMismatch,
    EmptyClip,
    NonPowerOfTwoFrame,
    UnknownWindowKind,
)

N_FEATURES = 53

WINDOW_KINDS = ("square", "hann")


def mel_of_hz(f):
    """Perceptual frequency warp: mel(f) = 2595 * log10(1 + f/700)."""
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def hz_of_mel(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@dataclass(frozen=True)
class FeatureConfig:
    """Extraction parameters; hash() of the field values ties artifacts together.

    n_mel + n_mfcc must equal 53. Defaults: 64 ms frames with 50% hop at
    16 kHz, filterbank over the full speech band, 64-frame grids (~2 s).
    """

    sample_rate: int = 16000
    frame_size: int = 1024
    hop_size: int = 512
    n_mel: int = 40
    n_mfcc: int = 13
    fmin: float = 0.0
    fmax: float = 8000.0
    log_floor: float = 1e-10
    grid_frames: int = 64
    window: str = "square"

    def __post_init__(self):
        if self.frame_size <= 0 or (self.frame_size & (self.frame_size - 1)) != 0:
            raise ValueError("frame_size must be a positive power of two")
        if not (0 < self.hop_size <= self.frame_size):
            raise ValueError("hop_size must be in (0, frame_size]")
        if self.n_mel + self.n_mfcc != N_FEATURES:
            raise ValueError(f"n_mel + n_mfcc must equal {N_FEATURES}")
        if not (0 <= self.fmin < self.fmax <= self.sample_rate / 2):
            raise ValueError("need 0 <= fmin < fmax <= sample_rate/2")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")
        if self.grid_frames <= 0:
            raise ValueError("grid_frames must be positive")
        if self.window not in WINDOW_KINDS:
            raise UnknownWindowKind(self.window)

    @property
    def n_bins(self) -> int:
        return self.frame_size // 2 + 1

    @property
    def grid_width(self) -> int:
        return N_FEATURES * self.grid_frames

    def config_hash(self) -> str:
        """Stable hex digest of the configuration (hash-stable JSON)."""
        blob = json.dumps(asdict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def config_digest(self) -> bytes:
        return bytes.fromhex(self.config_hash())


@dataclass(frozen=True)
class FeatureMatrix:
    """53 x T per-frame features for one clip (raw or normalized)."""

    values: np.ndarray
    clip_id: str = ""

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != N_FEATURES:
            raise ValueError(f"expected {N_FEATURES} rows, got shape {v.shape}")
        object.__setattr__(self, "values", v)

    @property
    def n_frames(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class FeatureGrid:
    """Fixed 53 x Z classifier input; carries the config hash for guarding."""

    values: np.ndarray
    cfg_hash: str = ""

    @property
    def grid_frames(self) -> int:
        return self.values.shape[1]

    def flat(self) -> np.ndarray:
        """Row-major flattening to the 53*Z float32 vector classifiers see."""
        return self.values.flatten().astype(np.float32)


def frame_count(n_samples: int, cfg: FeatureConfig) -> int:
    """T = max(1, ceil((len - frame_size)/hop_size) + 1)."""
    if n_samples <= cfg.frame_size:
        return 1
    return int(np.ceil((n_samples - cfg.frame_size) / cfg.hop_size)) + 1


def cut_frames(clip: AudioClip, cfg: FeatureConfig) -> np.ndarray:
    """Slice a clip into overlapping frames, zero-padding the final one.

    Frame k starts at sample k*hop_size. Returns shape (T, frame_size).
    """
    if len(clip) == 0:
        raise EmptyClip("cannot frame an empty clip")
    n = len(clip)
    t = frame_count(n, cfg)
    frames = np.zeros((t, cfg.frame_size), dtype=np.float64)
    for k in range(t):
        start = k * cfg.hop_size
        chunk = clip.samples[start:start + cfg.frame_size]
        frames[k, :len(chunk)] = chunk
    return frames


def window_curve(kind: str, n: int) -> np.ndarray:
    if kind == "square":
        return np.ones(n)
    if kind == "hann":
        # periodic form: w[n] = 0.5 * (1 - cos(2*pi*n/N))
        return 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(n) / n))
    raise UnknownWindowKind(kind)


def apply_window(frame: np.ndarray, kind: str = "square") -> np.ndarray:
    """Multiply a frame by the named window curve ("square" is the identity)."""
    frame = np.asarray(frame, dtype=np.float64)
    return frame * window_curve(kind, len(frame))


def spectrum(frame: np.ndarray) -> np.ndarray:
    """Magnitude spectrum |DFT|, bins 0..N/2, for a power-of-two frame."""
    frame = np.asarray(frame, dtype=np.float64)
    n = len(frame)
    if n == 0 or (n & (n - 1)) != 0:
        raise NonPowerOfTwoFrame(f"frame length {n}")
    return np.abs(np.fft.rfft(frame))


def mel_filterbank(cfg: FeatureConfig) -> np.ndarray:
    """Triangular filters, n_mel x n_bins, 50% overlap on the mel scale.

    Band edges are n_mel + 2 points equally spaced in mel between fmin and
    fmax; filter j rises over [f_j, f_{j+1}] and falls over [f_{j+1}, f_{j+2}],
    evaluated at the FFT bin centers. No area normalization.
    """
    edges_mel = np.linspace(mel_of_hz(cfg.fmin), mel_of_hz(cfg.fmax), cfg.n_mel + 2)
    edges = hz_of_mel(edges_mel)
    bin_hz = np.arange(cfg.n_bins) * (cfg.sample_rate / cfg.frame_size)

    fb = np.zeros((cfg.n_mel, cfg.n_bins), dtype=np.float64)
    for j in range(cfg.n_mel):
        lo, mid, hi = edges[j], edges[j + 1], edges[j + 2]
        up = (bin_hz - lo) / (mid - lo)
        down = (hi - bin_hz) / (hi - mid)
        fb[j] = np.clip(np.minimum(up, down), 0.0, None)
    return fb


def dct_ii_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II basis, rows are coefficients: M @ M.T == I."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    m = np.cos(np.pi * k * (2 * i + 1) / (2 * n)) * np.sqrt(2.0 / n)
    m[0] /= np.sqrt(2.0)
    return m


class _Tables:
    """Per-config filterbank/DCT cache (pure derivations, safe to share)."""

    def __init__(self):
        self._cache: dict[str, tuple[np.ndarray, np.ndarray]] = {}

    def get(self, cfg: FeatureConfig) -> tuple[np.ndarray, np.ndarray]:
        key = cfg.config_hash()
        if key not in self._cache:
            self._cache[key] = (mel_filterbank(cfg), dct_ii_matrix(cfg.n_mel))
        return self._cache[key]


_tables = _Tables()


def frame_features(spec: np.ndarray, cfg: FeatureConfig) -> np.ndarray:
    """53 features for one magnitude spectrum: 40 log-mel energies + 13 MFCCs.

    Mel energies are log(max(log_floor, filterbank @ |spec|^2)); MFCCs are the
    first n_mfcc coefficients of the orthonormal DCT-II of those energies.
    """
    spec = np.asarray(spec, dtype=np.float64)
    if spec.shape != (cfg.n_bins,):
        raise ConfigMismatch(f"spectrum has {spec.shape}, config wants ({cfg.n_bins},)")
    fb, dct = _tables.get(cfg)
    energies = np.log(np.maximum(cfg.log_floor, fb @ (spec * spec)))
    mfcc = dct[:cfg.n_mfcc] @ energies
    return np.concatenate([energies, mfcc])


def extract_features(clip: AudioClip, cfg: FeatureConfig) -> FeatureMatrix:
    """Raw (unnormalized) 53 x T feature matrix for a clip."""
    frames = cut_frames(clip, cfg)
    curve = window_curve(cfg.window, cfg.frame_size)
    spectra = np.abs(np.fft.rfft(frames * curve, axis=1))
    fb, dct = _tables.get(cfg)
    energies = np.log(np.maximum(cfg.log_floor, (spectra * spectra) @ fb.T))
    mfcc = energies @ dct[:cfg.n_mfcc].T
    return FeatureMatrix(values=np.hstack([energies, mfcc]).T, clip_id=clip.source_id)


def normalize(m: FeatureMatrix) -> FeatureMatrix:
    """Min-max scale each row to [0, 1] across the clip; constant rows -> 0."""
    v = m.values
    lo = v.min(axis=1, keepdims=True)
    hi = v.max(axis=1, keepdims=True)
    span = hi - lo
    out = np.where(span > 0, (v - lo) / np.where(span > 0, span, 1.0), 0.0)
    return FeatureMatrix(values=out, clip_id=m.clip_id)


def fit_to_grid(m: FeatureMatrix, cfg: FeatureConfig) -> FeatureGrid:
    """Center-crop or center-pad a 53 x T matrix to the fixed 53 x Z grid.

    T >= Z keeps the Z centermost columns (dropping floor((T-Z)/2) in front);
    T < Z pads with zero columns, the extra column going at the end when odd.
    """
    v = m.values
    t, z = v.shape[1], cfg.grid_frames
    if t >= z:
        drop = (t - z) // 2
        out = v[:, drop:drop + z]
    else:
        pad_front = (z - t) // 2
        out = np.zeros((N_FEATURES, z), dtype=np.float64)
        out[:, pad_front:pad_front + t] = v
    return FeatureGrid(values=np.ascontiguousarray(out), cfg_hash=cfg.config_hash())


def clip_to_grid(clip: AudioClip, cfg: FeatureConfig) -> FeatureGrid:
    """Full pipeline for one clip: extract, normalize, fit to the grid."""
    return fit_to_grid(normalize(extract_features(clip, cfg)), cfg)


@dataclass(frozen=True)
class VisualizationBundle:
    """Aligned plot data for one clip: waveform, spectrogram, normalized grid."""

    clip_id: str
    sample_rate: int
    waveform: np.ndarray
    spectrogram: np.ndarray  # n_bins x T magnitudes
    normalized: FeatureMatrix

    def to_json_dict(self) -> dict:
        spec = self.spectrogram
        norm = self.normalized.values
        return {
            "clip_id": self.clip_id,
            "sample_rate": self.sample_rate,
            "waveform": [float(x) for x in self.waveform],
            "spectrogram": {
                "rows": int(spec.shape[0]),
                "cols": int(spec.shape[1]),
                "values": [float(x) for x in spec.flatten()],
            },
            "normalized": {
                "rows": int(norm.shape[0]),
                "cols": int(norm.shape[1]),
                "values": [float(x) for x in norm.flatten()],
            },
        }


def visualization_bundle(clip: AudioClip, cfg: FeatureConfig) -> VisualizationBundle:
    """Waveform + spectrogram + normalized features sharing one time axis."""
    frames = cut_frames(clip, cfg)
    curve = window_curve(cfg.window, cfg.frame_size)
    spectrogram = np.abs(np.fft.rfft(frames * curve, axis=1)).T
    normalized = normalize(extract_features(clip, cfg))
    return VisualizationBundle(
        clip_id=clip.source_id,
        sample_rate=clip.sample_rate,
        waveform=clip.samples.copy(),
        spectrogram=spectrogram,
        normalized=normalized,
    )
