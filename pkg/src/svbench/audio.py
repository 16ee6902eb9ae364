"""Waveform container, 16-bit PCM WAV I/O, resampling, and convolution.

These are the primitives every degradation stage is built on.  Samples are
held as float64 throughout the pipeline; quantization to 16-bit happens only
at WAV export so chained degradations keep full headroom.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import signal as sig

from .errors import AudioError

INT16_FULL_SCALE = 32768
KAISER_BETA = 8.6
TAPS_PER_PHASE = 64

# Kernels up to this many samples are convolved directly (bit-stable);
# longer ones go through overlap-add FFT convolution.
_DIRECT_CONV_MAX_KERNEL = 1024


@dataclass(frozen=True)
class AudioBuffer:
    """Mono waveform with its sample rate.

    Invariants: all samples finite, at least one sample, positive rate.
    Nominal amplitude range is [-1, 1]; intermediate processing may exceed
    it and is clamped only on export.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise AudioError(f"expected mono 1-D samples, got shape {samples.shape}")
        if samples.size < 1:
            raise AudioError("audio buffer must hold at least one sample")
        if not np.all(np.isfinite(samples)):
            raise AudioError("audio buffer contains non-finite samples")
        if int(self.sample_rate) <= 0:
            raise AudioError(f"sample rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate

    def with_samples(self, samples: np.ndarray) -> "AudioBuffer":
        return AudioBuffer(samples, self.sample_rate)


def quantize_int16(samples: np.ndarray) -> np.ndarray:
    """Clamp to [-1, 1] and quantize to int16.

    Uses symmetric full-scale 32768 with the positive rail clamped to 32767,
    which keeps the write/read round trip within one quantization step
    (1/32768) for every in-range sample.
    """
    clamped = np.clip(np.asarray(samples, dtype=np.float64), -1.0, 1.0)
    q = np.rint(clamped * INT16_FULL_SCALE)
    return np.clip(q, -32768, 32767).astype(np.int16)


def dequantize_int16(values: np.ndarray) -> np.ndarray:
    return np.asarray(values, dtype=np.float64) / INT16_FULL_SCALE


def read_wav(path: str | Path) -> AudioBuffer:
    """Read a 16-bit PCM RIFF/WAVE file as a mono AudioBuffer.

    Multichannel audio is collapsed to mono by the per-frame channel mean.
    Extra chunks before/after ``data`` are tolerated and skipped.
    """
    path = Path(path)
    if not path.exists():
        raise AudioError(f"wav file not found: {path}")
    raw = path.read_bytes()
    if len(raw) < 12 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise AudioError(f"not a RIFF/WAVE file: {path}")

    fmt = None
    data = None
    pos = 12
    while pos + 8 <= len(raw):
        chunk_id = raw[pos:pos + 4]
        (chunk_size,) = struct.unpack_from("<I", raw, pos + 4)
        body = raw[pos + 8:pos + 8 + chunk_size]
        if chunk_id == b"fmt ":
            fmt = body
        elif chunk_id == b"data":
            data = body
        pos += 8 + chunk_size + (chunk_size & 1)  # chunks are word-aligned

    if fmt is None or len(fmt) < 16:
        raise AudioError(f"missing fmt chunk: {path}")
    if data is None:
        raise AudioError(f"missing data chunk: {path}")
    audio_format, n_channels, sample_rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if audio_format != 1:
        raise AudioError(f"unsupported encoding in {path}: format tag {audio_format}, expected PCM (1)")
    if bits != 16:
        raise AudioError(f"unsupported sample depth in {path}: {bits}-bit, expected 16-bit")
    if n_channels < 1:
        raise AudioError(f"invalid channel count {n_channels} in {path}")

    frame_bytes = 2 * n_channels
    usable = len(data) - (len(data) % frame_bytes)
    if usable == 0:
        raise AudioError(f"wav file holds no complete frames: {path}")
    pcm = np.frombuffer(data[:usable], dtype="<i2").reshape(-1, n_channels)
    mono = dequantize_int16(pcm).mean(axis=1)
    return AudioBuffer(mono, sample_rate)


def write_wav(buffer: AudioBuffer, path: str | Path) -> None:
    """Write a canonical 44-byte-header 16-bit PCM mono WAV file."""
    path = Path(path)
    pcm = quantize_int16(buffer.samples)
    data = pcm.astype("<i2").tobytes()
    sr = buffer.sample_rate
    header = b"RIFF" + struct.pack("<I", 36 + len(data)) + b"WAVE"
    header += b"fmt " + struct.pack("<IHHIIHH", 16, 1, 1, sr, sr * 2, 2, 16)
    header += b"data" + struct.pack("<I", len(data))
    try:
        path.write_bytes(header + data)
    except OSError as exc:
        raise AudioError(f"cannot write wav file {path}: {exc}") from exc


def _design_lowpass(up: int, down: int) -> np.ndarray:
    """Polyphase windowed-sinc lowpass: Kaiser window, 64 taps per phase.

    Unit DC gain; resample_poly scales by ``up`` internally.  Odd length so
    group delay is an integer and can be compensated exactly.
    """
    phases = max(up, down)
    half = (TAPS_PER_PHASE * phases) // 2
    n = np.arange(-half, half + 1)
    cutoff = 1.0 / (2.0 * phases)  # cycles/sample at the upsampled rate
    h = 2.0 * cutoff * np.sinc(2.0 * cutoff * n) * np.kaiser(2 * half + 1, KAISER_BETA)
    return h / h.sum()


def resample(buffer: AudioBuffer, target_rate: int) -> AudioBuffer:
    """Band-limited rational resampling to target_rate.

    Identity when the rate already matches.  Output length is
    round(n * target_rate / input_rate).
    """
    if target_rate <= 0:
        raise AudioError(f"target rate must be positive, got {target_rate}")
    if target_rate == buffer.sample_rate:
        return buffer
    g = math.gcd(buffer.sample_rate, int(target_rate))
    up = int(target_rate) // g
    down = buffer.sample_rate // g
    y = sig.resample_poly(buffer.samples, up, down, window=_design_lowpass(up, down))
    n_out = int(math.floor(len(buffer) * target_rate / buffer.sample_rate + 0.5))
    n_out = max(n_out, 1)
    if len(y) < n_out:
        y = np.pad(y, (0, n_out - len(y)))
    return AudioBuffer(y[:n_out], int(target_rate))


def rms(buffer: AudioBuffer) -> float:
    """Root-mean-square amplitude of the buffer."""
    return float(np.sqrt(np.mean(np.square(buffer.samples))))


def convolve(buffer: AudioBuffer, kernel: np.ndarray) -> AudioBuffer:
    """Full linear convolution truncated to the input length.

    Truncation keeps enroll/test durations stable across conditions.
    """
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.ndim != 1 or kernel.size < 1:
        raise AudioError("convolution kernel must be a non-empty 1-D sequence")
    if not np.all(np.isfinite(kernel)):
        raise AudioError("convolution kernel contains non-finite values")
    if kernel.size <= _DIRECT_CONV_MAX_KERNEL:
        full = np.convolve(buffer.samples, kernel, mode="full")
    else:
        full = sig.oaconvolve(buffer.samples, kernel, mode="full")
    return buffer.with_samples(full[: len(buffer)])
