"""Minimal 16-bit PCM WAV reading and model-rate resampling.

The adapter owns its preprocessing: whatever rate the harness hands over,
audio is resampled here to the model's expected rate (16 kHz for every
bundled model).
"""

from __future__ import annotations

import math
import struct
from pathlib import Path

import numpy as np
from scipy import signal as sig


class AudioReadError(Exception):
    pass


def read_wav_mono(path: str | Path) -> tuple[np.ndarray, int]:
    """Return (float64 mono samples scaled to [-1, 1), sample_rate)."""
    path = Path(path)
    if not path.exists():
        raise AudioReadError(f"wav file not found: {path}")
    raw = path.read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise AudioReadError(f"not a RIFF/WAVE file: {path}")
    fmt = data = None
    pos = 12
    while pos + 8 <= len(raw):
        chunk_id = raw[pos:pos + 4]
        (size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8:pos + 8 + size]
        if chunk_id == b"fmt ":
            fmt = body
        elif chunk_id == b"data":
            data = body
        pos += 8 + size + (size & 1)
    if fmt is None or data is None:
        raise AudioReadError(f"missing fmt/data chunk: {path}")
    audio_format, channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if audio_format != 1 or bits != 16:
        raise AudioReadError(
            f"unsupported encoding in {path}: format {audio_format}, {bits}-bit")
    frame = 2 * channels
    usable = len(data) - len(data) % frame
    pcm = np.frombuffer(data[:usable], dtype="<i2").reshape(-1, channels)
    return pcm.astype(np.float64).mean(axis=1) / 32768.0, rate


def resample_to(samples: np.ndarray, rate: int, target_rate: int) -> np.ndarray:
    if rate == target_rate:
        return samples
    g = math.gcd(rate, target_rate)
    return sig.resample_poly(samples, target_rate // g, rate // g)
