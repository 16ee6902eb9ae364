"""Capture-condition simulation: native G.711 mu-law and external codec chains.

A codec chain is: resample to the codec's band rate (8 kHz narrowband or
16 kHz wideband; dynamic codecs draw the band per utterance), run the codec
encode/decode round trip, then resample back to the original rate so the
distortion lives in the signal content rather than the container rate.

G.711 mu-law companding is implemented natively and bit-exactly; GSM 06.10,
AMR, and Opus are reached through an external adapter subprocess contract
(WAV in -> WAV out) since they are standardized codecs with mature
implementations.
"""

from __future__ import annotations

import shlex
import subprocess
import tempfile
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

from .audio import AudioBuffer, dequantize_int16, quantize_int16, read_wav, resample, write_wav
from .errors import AdapterError, CodecError
from .rand import derive_rng

NARROWBAND_HZ = 8000
WIDEBAND_HZ = 16000

# --- G.711 mu-law companding -------------------------------------------------
#
# Encoder: sign/magnitude split, magnitude clipped at 32635, bias 0x84 added,
# segment located by the biased magnitude, 4-bit mantissa packed next to the
# 3-bit segment, and the byte complemented (mask 0xFF positive, 0x7F
# negative).  The decoder inverts that expansion; the negative-zero code 0x7F
# decodes to -2 (the midpoint of the encoder inputs that produce it) so that
# encode(decode(c)) == c holds for every one of the 256 codes.

_MULAW_BIAS = 0x84
_MULAW_CLIP = 32635
_SEG_END = np.array([0xFF, 0x1FF, 0x3FF, 0x7FF, 0xFFF, 0x1FFF, 0x3FFF, 0x7FFF], dtype=np.int64)


def mulaw_encode(samples: np.ndarray | int) -> np.ndarray | int:
    """Encode 16-bit signed PCM to 8-bit G.711 mu-law codes."""
    scalar = np.isscalar(samples)
    pcm = np.atleast_1d(np.asarray(samples, dtype=np.int64))
    if pcm.min(initial=0) < -32768 or pcm.max(initial=0) > 32767:
        raise CodecError("mu-law input out of 16-bit signed range")
    negative = pcm < 0
    magnitude = np.where(negative, -pcm, pcm)
    magnitude = np.minimum(magnitude, _MULAW_CLIP) + _MULAW_BIAS
    seg = np.searchsorted(_SEG_END, magnitude)  # first segment end >= magnitude
    mantissa = (magnitude >> (seg + 3)) & 0xF
    uval = (seg << 4) | mantissa
    code = np.where(negative, uval ^ 0x7F, uval ^ 0xFF)
    code = code.astype(np.uint8)
    return int(code[0]) if scalar else code


def mulaw_decode(codes: np.ndarray | int) -> np.ndarray | int:
    """Decode 8-bit G.711 mu-law codes to 16-bit signed PCM."""
    scalar = np.isscalar(codes)
    c = np.atleast_1d(np.asarray(codes, dtype=np.int64)) & 0xFF
    u = ~c & 0xFF
    seg = (u >> 4) & 0x7
    mantissa = u & 0xF
    step_base = ((mantissa << 3) + _MULAW_BIAS) << seg
    pcm = np.where(u & 0x80, _MULAW_BIAS - step_base, step_base - _MULAW_BIAS)
    # Negative zero (code 0x7F) maps to -2, the midpoint of its encoder
    # preimage {-1, -2, -3}, keeping decode injective on all 256 codes.
    pcm = np.where(c == 0x7F, -2, pcm)
    pcm = pcm.astype(np.int64)
    return int(pcm[0]) if scalar else pcm


# --- codec specs --------------------------------------------------------------


class CodecKind(str, Enum):
    CLEAN = "clean"
    G711_MULAW = "g711_mulaw"
    GSM_0610 = "gsm_0610"
    AMR = "amr"
    OPUS = "opus"
    EXTERNAL = "external"


class BandPolicy(str, Enum):
    FIXED_NARROW = "fixed_narrow"
    FIXED_WIDE = "fixed_wide"
    RANDOM_PER_UTTERANCE = "random_per_utterance"


_NARROW_ONLY = {CodecKind.G711_MULAW, CodecKind.GSM_0610}
_RANDOM_CAPABLE = {CodecKind.AMR, CodecKind.OPUS}


@dataclass(frozen=True)
class CodecSpec:
    """One capture condition: codec kind, band policy, optional adapter.

    ``adapter_command`` is a template with {in} {out} {rate} placeholders; it
    must write a 16-bit PCM WAV to {out} and exit 0.  ``extra`` carries
    pass-through parameters (e.g. bitrate) already baked into the template.
    """

    kind: CodecKind
    band_policy: BandPolicy = BandPolicy.FIXED_NARROW
    adapter_command: str | None = None
    internal_rate: int = NARROWBAND_HZ
    timeout_s: float = 60.0
    extra: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        kind = CodecKind(self.kind)
        policy = BandPolicy(self.band_policy)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "band_policy", policy)
        if kind in _NARROW_ONLY:
            if self.internal_rate != NARROWBAND_HZ:
                raise CodecError(f"{kind.value} requires internal_rate {NARROWBAND_HZ}")
            if policy is not BandPolicy.FIXED_NARROW:
                raise CodecError(f"{kind.value} is narrowband-only")
        if policy is BandPolicy.RANDOM_PER_UTTERANCE and kind not in _RANDOM_CAPABLE:
            raise CodecError(f"random band policy is only valid for {sorted(k.value for k in _RANDOM_CAPABLE)}")
        if kind in (CodecKind.GSM_0610, CodecKind.AMR, CodecKind.OPUS, CodecKind.EXTERNAL):
            if not self.adapter_command:
                raise CodecError(f"{kind.value} needs a non-empty adapter_command")

    @property
    def condition_token(self) -> str:
        return self.kind.value


def clean_spec() -> CodecSpec:
    return CodecSpec(kind=CodecKind.CLEAN)


def g711_spec() -> CodecSpec:
    return CodecSpec(kind=CodecKind.G711_MULAW, band_policy=BandPolicy.FIXED_NARROW,
                     internal_rate=NARROWBAND_HZ)


def resolve_band(policy: BandPolicy, seed: int, utt_id: str) -> int:
    """Band rate for one utterance; the random policy is a fair seeded coin.

    The draw is keyed by (seed, utt_id) so it is stable across runs, machines,
    and processing order.
    """
    policy = BandPolicy(policy)
    if policy is BandPolicy.FIXED_NARROW:
        return NARROWBAND_HZ
    if policy is BandPolicy.FIXED_WIDE:
        return WIDEBAND_HZ
    rng = derive_rng(seed, "band", utt_id)
    return NARROWBAND_HZ if rng.random() < 0.5 else WIDEBAND_HZ


def _run_adapter(buffer: AudioBuffer, spec: CodecSpec) -> AudioBuffer:
    """WAV in -> adapter subprocess -> WAV out, with captured diagnostics."""
    with tempfile.TemporaryDirectory(prefix="svbench_codec_") as workdir:
        in_path = Path(workdir) / "in.wav"
        out_path = Path(workdir) / "out.wav"
        write_wav(buffer, in_path)
        command = spec.adapter_command.format(**{"in": str(in_path), "out": str(out_path),
                                                 "rate": str(buffer.sample_rate)})
        argv = shlex.split(command)
        try:
            proc = subprocess.run(argv, capture_output=True, text=True, timeout=spec.timeout_s)
        except FileNotFoundError as exc:
            raise AdapterError(f"codec adapter binary not found: {argv[0]}") from exc
        except subprocess.TimeoutExpired as exc:
            raise AdapterError(f"codec adapter timed out after {spec.timeout_s}s: {command}") from exc
        if proc.returncode != 0:
            raise AdapterError(
                f"codec adapter exited {proc.returncode}: {command}\n"
                f"stdout: {proc.stdout.strip()}\nstderr: {proc.stderr.strip()}")
        if not out_path.exists():
            raise AdapterError(f"codec adapter produced no output WAV: {command}")
        try:
            return read_wav(out_path)
        except Exception as exc:
            raise AdapterError(f"codec adapter output WAV is malformed: {exc}") from exc


def apply_codec(buffer: AudioBuffer, spec: CodecSpec, seed: int, utt_id: str = "") -> AudioBuffer:
    """Run one codec chain; deterministic given (buffer, spec, seed, utt_id)."""
    if spec.kind is CodecKind.CLEAN:
        return buffer
    original_rate = buffer.sample_rate
    band = resolve_band(spec.band_policy, seed, utt_id)
    work = resample(buffer, band)
    if spec.kind is CodecKind.G711_MULAW:
        pcm = quantize_int16(work.samples)
        decoded = mulaw_decode(mulaw_encode(pcm.astype(np.int64)))
        work = work.with_samples(dequantize_int16(decoded))
    else:
        processed = _run_adapter(work, spec)
        if processed.sample_rate != band:
            processed = resample(processed, band)
        work = processed
    return resample(work, original_rate)
