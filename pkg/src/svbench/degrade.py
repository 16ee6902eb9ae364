"""Noise and channel degradations: SNR-exact mixing, RIR convolution, chains.

The compound pipeline applies stages in the fixed order noise -> RIR ->
codec.  Every random choice (noise source file, segment offset, RIR draw,
codec band) is derived from (master seed, utt_id), so any subset of a corpus
can be re-simulated bit-identically in any order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import AudioBuffer, convolve, read_wav, resample, rms
from .codecs import CodecSpec, apply_codec, resolve_band
from .errors import DegradeError, SilentSignalError
from .manifest import UtteranceRecord, load_manifest
from .rand import derive_rng

CLEAN_SNR_DB = float("inf")  # sentinel: no noise added

NOISE_KINDS = {"gaussian", "environmental", "crosstalk"}
BENCH_SNRS = (5.0, 15.0, 25.0)
BENCH_RIR_LEVELS = (2, 3, 4)


@dataclass(frozen=True)
class NoiseSpec:
    """Additive noise condition: kind plus target SNR in dB."""

    kind: str
    snr_db: float
    source_manifest: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in NOISE_KINDS:
            raise DegradeError(f"noise kind must be one of {sorted(NOISE_KINDS)}, got {self.kind!r}")
        if not (np.isfinite(self.snr_db) or self.snr_db == CLEAN_SNR_DB):
            raise DegradeError(f"snr_db must be finite (or +inf for clean), got {self.snr_db}")
        if self.kind in ("environmental", "crosstalk") and not self.source_manifest:
            raise DegradeError(f"{self.kind} noise requires a source_manifest")


@dataclass(frozen=True)
class RirSpec:
    """Reverberation condition: severity level resolved through a pool."""

    severity: int
    rir_pool: dict[int, tuple[str, ...]]

    def __post_init__(self) -> None:
        pool = {int(k): tuple(v) for k, v in self.rir_pool.items()}
        object.__setattr__(self, "rir_pool", pool)
        if self.severity not in pool:
            raise DegradeError(f"severity {self.severity} not present in RIR pool (levels: {sorted(pool)})")
        if not pool[self.severity]:
            raise DegradeError(f"RIR pool for severity {self.severity} is empty")


def generate_gaussian(length: int, seed: int) -> np.ndarray:
    """Deterministic i.i.d. standard-normal noise."""
    if length < 1:
        raise DegradeError(f"noise length must be >= 1, got {length}")
    return derive_rng(seed, "gaussian").standard_normal(length)


def mix_at_snr(signal: AudioBuffer, noise: np.ndarray, snr_db: float) -> AudioBuffer:
    """Add noise scaled so the mixture hits snr_db exactly.

    gain = rms(signal)/rms(noise) * 10^(-snr/20); +inf snr returns the signal
    unchanged.  A silent signal cannot be mixed and raises SilentSignalError
    so the caller can flag and exclude the trial.
    """
    if snr_db == CLEAN_SNR_DB:
        return signal
    noise = np.asarray(noise, dtype=np.float64)
    if noise.size < len(signal):
        raise DegradeError(f"noise ({noise.size}) shorter than signal ({len(signal)}); tile it first")
    segment = noise[: len(signal)]
    signal_rms = rms(signal)
    if signal_rms == 0.0:
        raise SilentSignalError("signal has zero RMS; SNR mixing undefined")
    noise_rms = float(np.sqrt(np.mean(np.square(segment))))
    if noise_rms == 0.0:
        raise DegradeError("noise segment is all zero")
    gain = (signal_rms / noise_rms) * 10.0 ** (-snr_db / 20.0)
    return signal.with_samples(signal.samples + gain * segment)


def _tile_from_offset(samples: np.ndarray, length: int, offset: int) -> np.ndarray:
    """Wrap-around copy of ``length`` samples starting at ``offset``."""
    idx = (offset + np.arange(length)) % samples.size
    return samples[idx]


_manifest_cache: dict[str, list[UtteranceRecord]] = {}


def _cached_manifest(path: str) -> list[UtteranceRecord]:
    if path not in _manifest_cache:
        _manifest_cache[path] = load_manifest(path)
    return _manifest_cache[path]


def fetch_noise_segment(
    spec: NoiseSpec,
    target: UtteranceRecord,
    length: int,
    seed: int,
    sample_rate: int,
) -> tuple[np.ndarray, dict]:
    """Noise samples for one target utterance plus a provenance record.

    Draws are keyed by (seed, target.utt_id).  Crosstalk never selects a
    source utterance from the target's own speaker.
    """
    rng = derive_rng(seed, "noise", spec.kind, target.utt_id)
    if spec.kind == "gaussian":
        noise_seed = int(rng.integers(0, 2**63 - 1))
        return generate_gaussian(length, noise_seed), {"kind": "gaussian", "noise_seed": noise_seed}

    pool = _cached_manifest(spec.source_manifest)
    if spec.kind == "crosstalk":
        pool = [r for r in pool if r.speaker_id != target.speaker_id]
        if not pool:
            raise DegradeError(
                f"crosstalk pool has no speaker other than {target.speaker_id!r}")
    if not pool:
        raise DegradeError(f"noise manifest {spec.source_manifest} is empty")

    source = pool[int(rng.integers(0, len(pool)))]
    source_audio = read_wav(source.path)
    if source_audio.sample_rate != sample_rate:
        source_audio = resample(source_audio, sample_rate)
    offset = int(rng.integers(0, len(source_audio)))
    segment = _tile_from_offset(source_audio.samples, length, offset)
    return segment, {"kind": spec.kind, "source_utt": source.utt_id,
                     "source_path": source.path, "offset": offset}


def apply_rir(signal: AudioBuffer, rir: AudioBuffer) -> AudioBuffer:
    """Convolve with a room impulse response, preserving the dry RMS level.

    The renormalization isolates reverberation character from loudness shift.
    """
    if not np.any(rir.samples):
        raise DegradeError("RIR is all zero")
    if rir.sample_rate != signal.sample_rate:
        rir = resample(rir, signal.sample_rate)
    wet = convolve(signal, rir.samples)
    dry_rms = rms(signal)
    wet_rms = rms(wet)
    if wet_rms == 0.0 or dry_rms == 0.0:
        return wet
    return wet.with_samples(wet.samples * (dry_rms / wet_rms))


def pick_rir(spec: RirSpec, seed: int, utt_id: str) -> str:
    """Deterministic RIR file draw from the severity's pool."""
    pool = spec.rir_pool[spec.severity]
    rng = derive_rng(seed, "rir", str(spec.severity), utt_id)
    return pool[int(rng.integers(0, len(pool)))]


def degrade(
    signal: AudioBuffer,
    target: UtteranceRecord,
    seed: int,
    noise: NoiseSpec | None = None,
    rir: RirSpec | None = None,
    codec: CodecSpec | None = None,
    condition_id: str = "",
) -> tuple[AudioBuffer, dict]:
    """Apply the compound chain (noise, then RIR, then codec) to one signal.

    Returns the degraded buffer plus a provenance record listing every
    resolved choice; identical (signal, specs, seed, utt_id) reproduce both
    bit-identically.
    """
    out = signal
    stages: list[dict] = []
    if noise is not None and noise.snr_db != CLEAN_SNR_DB:
        segment, prov = fetch_noise_segment(noise, target, len(signal), seed, signal.sample_rate)
        out = mix_at_snr(out, segment, noise.snr_db)
        stages.append({"stage": "noise", "snr_db": noise.snr_db, **prov})
    if rir is not None:
        rir_path = pick_rir(rir, seed, target.utt_id)
        out = apply_rir(out, read_wav(rir_path))
        stages.append({"stage": "rir", "severity": rir.severity, "rir_path": rir_path})
    if codec is not None:
        out = apply_codec(out, codec, seed, target.utt_id)
        stages.append({
            "stage": "codec",
            "kind": codec.kind.value,
            "band_hz": resolve_band(codec.band_policy, seed, target.utt_id),
        })
    provenance = {
        "utt_id": target.utt_id,
        "condition_id": condition_id,
        "seed": seed,
        "stages": stages,
    }
    return out, provenance
