"""WAV decoding, mono downmix and resampling.

Everything downstream works on AudioClip: mono float samples in [-1, 1] at a
known rate. Decoding accepts PCM 16-bit and IEEE float 32-bit RIFF/WAVE with
one or two channels; stereo is downmixed by per-sample mean. The PCM16
encoder exists so the corpus can persist clips and tests can round-trip.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import MalformedContainer, UnsupportedEncoding

PCM16_SCALE = 32768.0  # symmetric divisor: +32767 maps just under 1.0

_FMT_PCM = 1
_FMT_IEEE_FLOAT = 3


@dataclass(frozen=True)
class AudioClip:
    """Mono audio, samples in [-1, 1], immutable after construction."""

    samples: np.ndarray
    sample_rate: int
    source_id: str = ""

    def __post_init__(self):
        object.__setattr__(self, "samples", np.array(self.samples, dtype=np.float64))
        self.samples.setflags(write=False)
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate


def decode_wav(data: bytes, source_id: str = "") -> AudioClip:
    """Decode RIFF/WAVE bytes into a mono AudioClip.

    PCM16 samples are scaled by 1/32768; float32 samples are clipped to
    [-1, 1]. Stereo is downmixed by the arithmetic mean of the channels.

    Raises MalformedContainer for structural problems, UnsupportedEncoding
    for codecs / bit depths / channel counts outside the supported set.
    """
    if len(data) < 12 or data[0:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedContainer("missing RIFF/WAVE header")

    fmt = None
    raw = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos:pos + 4]
        (chunk_size,) = struct.unpack_from("<I", data, pos + 4)
        body = data[pos + 8:pos + 8 + chunk_size]
        if len(body) < chunk_size:
            raise MalformedContainer(f"chunk {chunk_id!r} truncated")
        if chunk_id == b"fmt ":
            if chunk_size < 16:
                raise MalformedContainer("fmt chunk too small")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            raw = body
        pos += 8 + chunk_size + (chunk_size & 1)  # chunks are word-aligned

    if fmt is None or raw is None:
        raise MalformedContainer("missing fmt or data chunk")

    format_tag, n_channels, sample_rate, _, _, bits = fmt
    if sample_rate <= 0:
        raise MalformedContainer("non-positive sample rate")
    if n_channels not in (1, 2):
        raise UnsupportedEncoding(f"{n_channels} channels (only 1 or 2)")

    if format_tag == _FMT_PCM and bits == 16:
        frames = len(raw) // (2 * n_channels)
        ints = np.frombuffer(raw[:frames * 2 * n_channels], dtype="<i2")
        samples = ints.astype(np.float64) / PCM16_SCALE
    elif format_tag == _FMT_IEEE_FLOAT and bits == 32:
        frames = len(raw) // (4 * n_channels)
        floats = np.frombuffer(raw[:frames * 4 * n_channels], dtype="<f4")
        samples = np.clip(floats.astype(np.float64), -1.0, 1.0)
    else:
        raise UnsupportedEncoding(f"format tag {format_tag} at {bits} bits")

    if n_channels == 2:
        samples = samples.reshape(-1, 2).mean(axis=1)

    return AudioClip(samples=samples, sample_rate=sample_rate, source_id=source_id)


def encode_wav_pcm16(samples: np.ndarray, sample_rate: int) -> bytes:
    """Encode mono samples as a PCM16 WAV file (the inverse of decode_wav)."""
    x = np.asarray(samples, dtype=np.float64)
    ints = np.clip(np.round(x * PCM16_SCALE), -32768, 32767).astype("<i2")
    raw = ints.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(raw), b"WAVE",
        b"fmt ", 16, _FMT_PCM, 1, sample_rate, sample_rate * 2, 2, 16,
        b"data", len(raw),
    )
    return header + raw


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Resample by linear interpolation; identity when rates already match.

    Output length is round(n * target/source), so duration is preserved to
    within one output-sample period.
    """
    if target_rate <= 0:
        raise ValueError("target_rate must be positive")
    if target_rate == clip.sample_rate or len(clip) == 0:
        if target_rate == clip.sample_rate:
            return clip
        return AudioClip(np.zeros(0), target_rate, clip.source_id)

    n_out = max(1, int(round(len(clip) * target_rate / clip.sample_rate)))
    positions = np.arange(n_out) * (clip.sample_rate / target_rate)
    out = np.interp(positions, np.arange(len(clip)), clip.samples)
    return AudioClip(out, target_rate, clip.source_id)


def crop(clip: AudioClip, start_time: float = 0.0, end_time: float | None = None) -> AudioClip:
    """Trim a clip to [start_time, end_time] seconds (defaults keep everything)."""
    a = max(0, int(round(start_time * clip.sample_rate)))
    b = len(clip) if end_time is None else min(len(clip), int(round(end_time * clip.sample_rate)))
    return AudioClip(clip.samples[a:max(a, b)].copy(), clip.sample_rate, clip.source_id)
