import hashlib

import numpy as np
import pytest

from conftest import tone
from svbench.audio import AudioBuffer, quantize_int16, rms
from svbench.codecs import g711_spec
from svbench.degrade import (
    CLEAN_SNR_DB,
    NoiseSpec,
    RirSpec,
    apply_rir,
    degrade,
    fetch_noise_segment,
    generate_gaussian,
    mix_at_snr,
    pick_rir,
)
from svbench.errors import DegradeError, SilentSignalError
from svbench.manifest import UtteranceRecord


def measured_snr_db(mixed: AudioBuffer, clean: AudioBuffer) -> float:
    noise = mixed.samples - clean.samples
    return 20 * np.log10(rms(clean) / float(np.sqrt(np.mean(noise**2))))


def utt(utt_id="u1", speaker="spkA"):
    return UtteranceRecord(utt_id, "none.wav", speaker)


class TestGenerateGaussian:
    def test_deterministic(self):
        a = generate_gaussian(1000, 42)
        b = generate_gaussian(1000, 42)
        np.testing.assert_array_equal(a, b)

    def test_moments(self):
        x = generate_gaussian(100_000, 7)
        assert abs(x.mean()) <= 0.02
        assert 0.99 <= x.std() <= 1.01

    def test_seeds_decorrelated(self):
        a = generate_gaussian(100_000, 1)
        b = generate_gaussian(100_000, 2)
        assert abs(np.corrcoef(a, b)[0, 1]) < 0.02

    def test_length_validated(self):
        with pytest.raises(DegradeError):
            generate_gaussian(0, 1)


class TestMixAtSnr:
    def test_closed_form_gain(self):
        signal = AudioBuffer(np.full(100, 0.2), 8000)          # rms 0.2
        noise = np.tile([0.1, -0.1], 50)                        # rms 0.1
        out = mix_at_snr(signal, noise, 20.0)
        # g = (0.2 / 0.1) * 10^(-1) = 0.2
        np.testing.assert_allclose(out.samples, signal.samples + 0.2 * noise, atol=1e-15)

    def test_infinite_snr_is_identity(self):
        signal = AudioBuffer(np.full(10, 0.3), 8000)
        assert mix_at_snr(signal, np.ones(10), CLEAN_SNR_DB) is signal

    def test_remeasured_snr_exact(self):
        rng = np.random.default_rng(0)
        signal = AudioBuffer(tone(440), 16000)
        for snr in (5.0, 15.0, 25.0):
            noise = rng.normal(size=len(signal))
            out = mix_at_snr(signal, noise, snr)
            assert abs(measured_snr_db(out, signal) - snr) < 0.01

    def test_silent_signal_flagged(self):
        with pytest.raises(SilentSignalError):
            mix_at_snr(AudioBuffer(np.zeros(100), 8000), np.ones(100), 10.0)

    def test_short_noise_rejected(self):
        with pytest.raises(DegradeError, match="shorter"):
            mix_at_snr(AudioBuffer(np.ones(100), 8000), np.ones(50), 10.0)


class TestFetchNoiseSegment:
    def test_gaussian_dispatch_deterministic(self):
        seg1, prov1 = fetch_noise_segment(NoiseSpec("gaussian", 10), utt(), 500, 3, 16000)
        seg2, prov2 = fetch_noise_segment(NoiseSpec("gaussian", 10), utt(), 500, 3, 16000)
        np.testing.assert_array_equal(seg1, seg2)
        assert prov1 == prov2
        assert prov1["kind"] == "gaussian"
        assert abs(seg1.std() - 1.0) < 0.15

    def test_crosstalk_never_self(self, make_wav, write_manifest):
        paths = {}
        for spk in ("A", "B", "C"):
            paths[spk] = make_wav(f"{spk}.wav", tone(200 + 100 * ord(spk)))
        manifest = write_manifest("pool.jsonl", [
            {"utt_id": f"x{spk}", "path": str(paths[spk]), "speaker_id": f"spk{spk}"}
            for spk in ("A", "B", "C")
        ])
        spec = NoiseSpec("crosstalk", 15, source_manifest=str(manifest))
        for i in range(1000):
            _, prov = fetch_noise_segment(spec, utt(f"t{i}", "spkA"), 100, 11, 16000)
            assert prov["source_utt"] != "xA"

    def test_crosstalk_only_target_speaker_errors(self, make_wav, write_manifest):
        p = make_wav("solo.wav", tone(300))
        manifest = write_manifest("solo.jsonl", [
            {"utt_id": "solo", "path": str(p), "speaker_id": "spkA"}
        ])
        spec = NoiseSpec("crosstalk", 15, source_manifest=str(manifest))
        with pytest.raises(DegradeError, match="no speaker other than"):
            fetch_noise_segment(spec, utt("t", "spkA"), 100, 1, 16000)

    def test_environmental_tiling(self, make_wav, write_manifest):
        p = make_wav("short.wav", tone(500, duration_s=0.05))  # 800 samples
        manifest = write_manifest("env.jsonl", [
            {"utt_id": "env1", "path": str(p), "speaker_id": "env"}
        ])
        spec = NoiseSpec("environmental", 15, source_manifest=str(manifest))
        segment, prov = fetch_noise_segment(spec, utt(), 5000, 5, 16000)
        assert segment.shape == (5000,)
        assert prov["offset"] < 800

    def test_spec_validation(self):
        with pytest.raises(DegradeError, match="source_manifest"):
            NoiseSpec("environmental", 15)
        with pytest.raises(DegradeError, match="kind"):
            NoiseSpec("pink", 15)


class TestApplyRir:
    def test_unit_impulse_identity(self):
        x = AudioBuffer(tone(440), 16000)
        out = apply_rir(x, AudioBuffer(np.array([1.0]), 16000))
        np.testing.assert_allclose(out.samples, x.samples, atol=1e-12)

    def test_gain_removed_by_rms_normalization(self):
        x = AudioBuffer(tone(440), 16000)
        out = apply_rir(x, AudioBuffer(np.array([0.5]), 16000))
        np.testing.assert_allclose(out.samples, x.samples, atol=1e-12)

    def test_rms_preserved_for_any_rir(self):
        rng = np.random.default_rng(9)
        x = AudioBuffer(rng.normal(size=4000) * 0.2, 16000)
        rir = AudioBuffer(rng.normal(size=300) * np.exp(-np.arange(300) / 40), 16000)
        out = apply_rir(x, rir)
        assert rms(out) == pytest.approx(rms(x), rel=1e-9)

    def test_zero_rir_rejected(self):
        with pytest.raises(DegradeError, match="all zero"):
            apply_rir(AudioBuffer(np.ones(10), 8000), AudioBuffer(np.zeros(4) + 0.0, 8000))

    def test_rir_resampled_to_signal_rate(self):
        x = AudioBuffer(tone(440), 16000)
        rir8k = AudioBuffer(np.array([1.0, 0.3, 0.1]), 8000)
        out = apply_rir(x, rir8k)
        assert out.sample_rate == 16000
        assert len(out) == len(x)


class TestRirSpec:
    def test_missing_severity(self):
        with pytest.raises(DegradeError, match="not present"):
            RirSpec(severity=5, rir_pool={2: ("a.wav",)})

    def test_empty_pool_is_config_error(self):
        with pytest.raises(DegradeError, match="empty"):
            RirSpec(severity=2, rir_pool={2: ()})

    def test_pick_only_from_configured_level(self, make_wav):
        pool = {
            2: tuple(str(make_wav(f"r2_{i}.wav", [1.0, 0.5])) for i in range(3)),
            3: tuple(str(make_wav(f"r3_{i}.wav", [1.0, 0.2])) for i in range(3)),
        }
        spec = RirSpec(severity=2, rir_pool=pool)
        for i in range(50):
            assert pick_rir(spec, 1, f"u{i}") in pool[2]


class TestDegrade:
    def test_all_stages_absent_is_identity(self):
        x = AudioBuffer(tone(440), 16000)
        out, prov = degrade(x, utt(), seed=1)
        assert out is x
        assert prov["stages"] == []

    def test_noise_only_snr_remeasured(self):
        x = AudioBuffer(tone(440), 16000)
        out, prov = degrade(x, utt(), seed=4, noise=NoiseSpec("gaussian", 25.0))
        assert abs(measured_snr_db(out, x) - 25.0) < 0.01
        assert prov["stages"][0]["stage"] == "noise"

    def test_full_chain_deterministic(self, make_wav):
        rir_path = str(make_wav("rir.wav", [1.0, 0.0, 0.4, 0.0, 0.1]))
        x = AudioBuffer(tone(440), 16000)
        kwargs = dict(
            noise=NoiseSpec("gaussian", 15.0),
            rir=RirSpec(severity=2, rir_pool={2: (rir_path,)}),
            codec=g711_spec(),
        )
        out1, prov1 = degrade(x, utt(), seed=77, **kwargs)
        out2, prov2 = degrade(x, utt(), seed=77, **kwargs)
        np.testing.assert_array_equal(out1.samples, out2.samples)
        assert prov1 == prov2
        assert [s["stage"] for s in prov1["stages"]] == ["noise", "rir", "codec"]

    def test_stage_order_locked_by_golden_hash(self, make_wav):
        # Regression lock: canonical order is noise -> RIR -> codec.  The
        # golden digest is tied to the pinned resampler/filter design and the
        # direct convolution path.
        rir_path = str(make_wav("rir.wav", [1.0, 0.0, 0.0, 0.5]))
        t = np.arange(8000) / 16000
        x = AudioBuffer(0.4 * np.sin(2 * np.pi * 350 * t), 16000)
        record = utt("golden", "spkG")
        out, _ = degrade(
            x, record, seed=1234,
            noise=NoiseSpec("gaussian", 15.0),
            rir=RirSpec(severity=2, rir_pool={2: (rir_path,)}),
            codec=g711_spec(),
        )
        digest = hashlib.sha256(quantize_int16(out.samples).tobytes()).hexdigest()
        assert digest == "dadb21af40361ce407496b54d0834ebcf6943de9e14e4cbca9b0f04c679d8264"

        # Swapping noise and RIR produces a different signal.
        rir_first, _ = degrade(
            x, record, seed=1234,
            rir=RirSpec(severity=2, rir_pool={2: (rir_path,)}),
        )
        noise_after, _ = degrade(
            rir_first, record, seed=1234,
            noise=NoiseSpec("gaussian", 15.0),
            codec=g711_spec(),
        )
        swapped = hashlib.sha256(quantize_int16(noise_after.samples).tobytes()).hexdigest()
        assert swapped != digest
