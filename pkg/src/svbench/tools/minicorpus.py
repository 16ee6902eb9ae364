"""Deterministic 8-speaker synthetic mini corpus for desk-scale runs.

Each "speaker" is a harmonic voice with a fixed fundamental and spectral
envelope; utterances vary pitch, phases, and amplitude contour.  The corpus
carries enough metadata (gender, age group, language, plain/lombard
condition tags, synthetic clones) to exercise every trial protocol without
any real data.

Run as a module to materialize WAVs plus a JSON-lines manifest:

    python3 -m svbench.tools.minicorpus OUT_DIR [--speakers 8] [--utts 4]
"""

from __future__ import annotations

import argparse
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..audio import AudioBuffer, write_wav
from ..manifest import UtteranceRecord, save_manifest
from ..rand import derive_rng

RATE = 16000
N_HARMONICS = 12
AGE_GROUPS = ("18-25", "26-35", "36-45", "46-55")
LANGUAGES = ("en", "de")


@dataclass(frozen=True)
class Voice:
    f0: float
    harmonic_amps: np.ndarray
    shimmer: float


def speaker_voice(speaker_idx: int, seed: int = 0) -> Voice:
    rng = derive_rng(seed, "voice", str(speaker_idx))
    f0 = 95.0 + 14.0 * speaker_idx + rng.uniform(-3, 3)
    decay = rng.uniform(0.25, 0.6)
    amps = np.exp(-decay * np.arange(N_HARMONICS)) * rng.uniform(0.5, 1.0, N_HARMONICS)
    # two formant-like bumps at speaker-specific harmonics
    for bump in rng.integers(2, N_HARMONICS - 1, size=2):
        amps[bump] *= rng.uniform(1.8, 3.0)
    return Voice(f0=f0, harmonic_amps=amps, shimmer=rng.uniform(0.02, 0.08))


def synthesize(voice: Voice, utt_key: str, duration_s: float = 0.5,
               lombard: bool = False, spoof: bool = False, seed: int = 0) -> np.ndarray:
    """One utterance of a voice; lombard brightens and raises pitch, spoof
    resynthesizes with a warped envelope (same pitch)."""
    rng = derive_rng(seed, "utt", utt_key)
    n = int(duration_s * RATE)
    t = np.arange(n) / RATE
    f0 = voice.f0 * (1.0 + 0.04 * rng.uniform(-1, 1))
    amps = voice.harmonic_amps.copy()
    if lombard:
        f0 *= 1.10
        amps = amps * (np.arange(1, N_HARMONICS + 1) ** 0.35)  # spectral tilt up
    if spoof:
        warp = derive_rng(seed, "spoof", utt_key).uniform(0.75, 1.3, N_HARMONICS)
        amps = amps * warp
    vibrato = 1.0 + 0.008 * np.sin(2 * np.pi * rng.uniform(4, 7) * t + rng.uniform(0, 2 * np.pi))
    phase_base = 2 * np.pi * np.cumsum(f0 * vibrato) / RATE
    x = np.zeros(n)
    for h in range(1, N_HARMONICS + 1):
        jitter = 1.0 + voice.shimmer * 0.1 * np.sin(2 * np.pi * rng.uniform(1, 3) * t)
        x += amps[h - 1] * jitter * np.sin(h * phase_base + rng.uniform(0, 2 * np.pi))
    envelope = np.minimum(1.0, np.minimum(t, duration_s - t) / 0.04)
    envelope *= 1.0 + 0.15 * np.sin(2 * np.pi * rng.uniform(1.5, 3.5) * t)
    x = x * envelope + 0.002 * rng.standard_normal(n)
    peak_target = 0.35 if lombard else 0.25
    return x * (peak_target / np.abs(x).max())


def build_demo_corpus(out_dir: str | Path, n_speakers: int = 8, utts_per_speaker: int = 4,
                      seed: int = 0, with_lombard: bool = True, with_spoof: bool = True,
                      duration_s: float = 0.5) -> Path:
    """Write WAVs plus manifest.jsonl under out_dir; returns the manifest path."""
    out_dir = Path(out_dir)
    wav_dir = out_dir / "audio"
    wav_dir.mkdir(parents=True, exist_ok=True)
    records: list[UtteranceRecord] = []

    def emit(utt_id: str, samples: np.ndarray, **meta) -> None:
        path = wav_dir / f"{utt_id}.wav"
        write_wav(AudioBuffer(samples, RATE), path)
        records.append(UtteranceRecord(utt_id=utt_id, path=str(path), **meta))

    for s in range(n_speakers):
        voice = speaker_voice(s, seed)
        speaker_id = f"spk{s:02d}"
        gender = "F" if s % 2 == 0 else "M"
        age_group = AGE_GROUPS[s % len(AGE_GROUPS)]
        for u in range(utts_per_speaker):
            utt_id = f"{speaker_id}_u{u}"
            # one utterance per even speaker is in the second language
            language = LANGUAGES[1] if (s % 2 == 0 and u == utts_per_speaker - 1) else LANGUAGES[0]
            emit(utt_id, synthesize(voice, utt_id, duration_s, seed=seed),
                 speaker_id=speaker_id, gender=gender, age_group=age_group,
                 language=language, style="read", condition="plain",
                 duration_s=duration_s)
        if with_lombard:
            for u in range(2):
                utt_id = f"{speaker_id}_l{u}"
                emit(utt_id, synthesize(voice, utt_id, duration_s, lombard=True, seed=seed),
                     speaker_id=speaker_id, gender=gender, age_group=age_group,
                     language=LANGUAGES[0], style="read", condition="lombard",
                     duration_s=duration_s)
        if with_spoof and s % 2 == 0:
            utt_id = f"{speaker_id}_tts"
            emit(utt_id, synthesize(voice, utt_id, duration_s, spoof=True, seed=seed),
                 speaker_id=speaker_id, gender=gender, age_group=age_group,
                 language=LANGUAGES[0], style="read", condition="plain",
                 provenance="synthetic", tts_system="tonegen", duration_s=duration_s)

    manifest_path = out_dir / "manifest.jsonl"
    save_manifest(records, manifest_path)
    return manifest_path


# --- attack experiment corpus -------------------------------------------------
#
# The black-box attack has a query budget of a few thousand, so its trials use
# 10 ms micro-clips (low waveform dimensionality keeps the NES gradient
# estimate informative) of six deliberately similar voices at a low peak level
# (the L-inf budget is specified in absolute amplitude, so quieter audio gives
# the attacker proportionally more room).  Voices share a fundamental near
# 112 Hz and differ in spectral envelope decay and noise tilt; per-utterance
# shaped noise provides the intra-speaker variability.

ATTACK_RATE = RATE
ATTACK_N_SPEAKERS = 6
ATTACK_DURATION_S = 0.010
ATTACK_PEAK = 0.15
_ATTACK_DECAYS = np.linspace(0.10, 0.24, ATTACK_N_SPEAKERS)
_ATTACK_TILTS = np.linspace(0.35, 0.65, ATTACK_N_SPEAKERS)
_ATTACK_HARMONICS = 28


def attack_voice(speaker_idx: int, seed: int = 0) -> Voice:
    rng = derive_rng(seed, "attack-voice", str(speaker_idx))
    f0 = 112.0 + rng.uniform(-1.0, 1.0)
    amps = (np.exp(-_ATTACK_DECAYS[speaker_idx] * np.arange(_ATTACK_HARMONICS))
            * rng.uniform(0.8, 1.0, _ATTACK_HARMONICS))
    return Voice(f0=f0, harmonic_amps=amps, shimmer=float(_ATTACK_TILTS[speaker_idx]))


def attack_synthesize(voice: Voice, utt_key: str, seed: int = 0,
                      duration_s: float = ATTACK_DURATION_S) -> np.ndarray:
    """One micro-utterance; voice.shimmer doubles as the noise-tilt center."""
    rng = derive_rng(seed, "attack-utt", utt_key)
    n = int(duration_s * ATTACK_RATE)
    f0 = voice.f0 * (1.0 + 0.02 * rng.uniform(-1, 1))
    phase = 2 * np.pi * np.cumsum(np.full(n, f0)) / ATTACK_RATE
    x = np.zeros(n)
    for h in range(1, _ATTACK_HARMONICS + 1):
        x += voice.harmonic_amps[h - 1] * np.sin(h * phase + rng.uniform(0, 2 * np.pi))
    white = rng.standard_normal(n)
    tilt = float(np.clip(voice.shimmer + rng.uniform(-0.2, 0.2), 0.05, 0.9))
    shaped = np.empty(n)
    acc = 0.0
    for i in range(n):
        acc = tilt * acc + white[i]
        shaped[i] = acc
    shaped /= np.abs(shaped).max()
    x = x + rng.uniform(0.05, 0.12) * shaped
    return x * (ATTACK_PEAK / np.abs(x).max())


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="Generate the synthetic demo corpus")
    parser.add_argument("out_dir")
    parser.add_argument("--speakers", type=int, default=8)
    parser.add_argument("--utts", type=int, default=4)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--duration", type=float, default=0.5)
    args = parser.parse_args(argv)
    manifest = build_demo_corpus(args.out_dir, args.speakers, args.utts, args.seed,
                                 duration_s=args.duration)
    print(f"wrote {manifest}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
