"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines.  Criterion 1 (statistics reproduction) asserts the four reference
cells at their stated tolerances; the ethnicity cell's published t statistic
is not reproducible from the published two-decimal EER inputs (computed
t = -9.65 vs printed -9.76), so that one sub-check fails by design rather
than loosening the tolerance.  See the analysis in the project notes.
"""

import itertools
import json
import sys
from pathlib import Path

import numpy as np
import pytest
import yaml

from oracles import pair_count_auc, random_score_set, sweep_eer, sweep_min_dcf
from svbench.attacks import AttackConfig, fakebob, fgsm, toy_scorer
from svbench.audio import AudioBuffer, rms
from svbench.cli import main as cli_main
from svbench.codecs import mulaw_decode, mulaw_encode
from svbench.degrade import NoiseSpec, fetch_noise_segment, mix_at_snr
from svbench.embeddings import cosine as emb_cosine, EmbeddingVector
from svbench.manifest import UtteranceRecord, load_manifest
from svbench.metrics import DcfParams, ScoreSet, auc, eer, eer_threshold, min_dcf, roc, roc_trapezoid_auc
from svbench.stats import load_group_eers, paired_t
from svbench.tools.minicorpus import (
    attack_synthesize,
    attack_voice,
    build_demo_corpus,
    speaker_voice,
    synthesize,
)
from svbench.trials import NONTARGET, TARGET, cross_lingual_trials, lombard_trials, spoof_trials

DATA = Path(__file__).parent / "data" / "reference_group_eers.json"
ADAPTER = f"{sys.executable} -m svbench.tools.embed_adapter {{request}} {{response}} {{model}}"


def report(criterion: str, ok: bool, detail: str = "") -> bool:
    status = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {status}: {criterion}" + (f"  [{detail}]" if detail else ""))
    return ok


# --- 1. statistics reproduction -------------------------------------------------

REFERENCE_CELLS = [
    ("gender F vs M", "F", "M", -2.18, 0.095, ""),
    ("male age 18-25 vs 26-35", "M_18-25", "M_26-35", 3.70, 0.021, "*"),
    ("female age 18-25 vs 36-45", "F_18-25", "F_36-45", 4.88, 0.008, "**"),
    ("ethnicity F_white vs F_black", "F_white", "F_black", -9.76, 0.001, "***"),
]


@pytest.mark.parametrize("label,ga,gb,t_ref,p_ref,stars", REFERENCE_CELLS,
                         ids=[c[0] for c in REFERENCE_CELLS])
def test_criterion_1_statistics_reproduction(label, ga, gb, t_ref, p_ref, stars):
    groups = {g.group_id: g for g in load_group_eers(DATA)}
    comp = paired_t(groups[ga], groups[gb])
    ok = (abs(comp.t_stat - t_ref) <= 0.01
          and abs(comp.p_value - p_ref) <= 0.001
          and comp.stars == stars)
    report(f"statistics reproduction [{label}]", ok,
           f"t={comp.t_stat:.3f} vs {t_ref}, p={comp.p_value:.4f} vs {p_ref}, "
           f"stars={comp.stars!r}")
    assert abs(comp.t_stat - t_ref) <= 0.01
    assert abs(comp.p_value - p_ref) <= 0.001
    assert comp.stars == stars


# --- 2. metric oracle equivalence ----------------------------------------------


def test_criterion_2_metric_oracle_equivalence():
    rng = np.random.default_rng(20240501)
    params = DcfParams(p_target=0.01, c_miss=1.0, c_fa=1.0)
    worst = {"eer": 0.0, "dcf": 0.0, "auc": 0.0, "trap": 0.0}
    for _ in range(1000):
        scores, labels = random_score_set(rng, max_scores=50)
        ss = ScoreSet(scores, labels)
        tar, non = ss.target_scores, ss.nontarget_scores
        worst["eer"] = max(worst["eer"], abs(eer(ss) - sweep_eer(tar, non)))
        want_dcf = min(sweep_min_dcf(tar, non, 0.01, 1.0, 1.0), 1.0)
        worst["dcf"] = max(worst["dcf"], abs(min_dcf(ss, params) - want_dcf))
        worst["auc"] = max(worst["auc"], abs(auc(ss) - pair_count_auc(tar, non)))
        worst["trap"] = max(worst["trap"], abs(auc(ss) - roc_trapezoid_auc(roc(ss))))
    ok = (worst["eer"] <= 1e-9 and worst["dcf"] <= 1e-9
          and worst["auc"] <= 1e-9 and worst["trap"] <= 1e-12)
    report("metric oracle equivalence (1000 random score sets)", ok,
           f"max |diff|: eer {worst['eer']:.2e}, minDCF {worst['dcf']:.2e}, "
           f"auc {worst['auc']:.2e}, trapezoid {worst['trap']:.2e}")
    assert worst["eer"] <= 1e-9
    assert worst["dcf"] <= 1e-9
    assert worst["auc"] <= 1e-9
    assert worst["trap"] <= 1e-12


# --- 3. mu-law exhaustive check --------------------------------------------------


def test_criterion_3_mulaw_exhaustive():
    from test_codecs import oracle_encode, seg_of

    samples = np.arange(-32768, 32768, dtype=np.int64)
    codes = mulaw_encode(samples)
    want = np.array([oracle_encode(int(s)) for s in range(-32768, 32768)], dtype=np.uint8)
    encode_ok = bool(np.array_equal(codes, want))

    back = mulaw_decode(codes)
    steps = np.array([1 << (seg_of(int(c)) + 3) for c in codes])
    roundtrip_ok = bool(np.all(np.abs(back - samples) <= steps))

    all_codes = np.arange(256, dtype=np.int64)
    identity_ok = bool(np.array_equal(mulaw_encode(mulaw_decode(all_codes)), all_codes))

    ok = encode_ok and roundtrip_ok and identity_ok
    report("mu-law exhaustive check (65536 inputs, 256 codes)", ok,
           f"encode={encode_ok}, roundtrip={roundtrip_ok}, identity={identity_ok}")
    assert encode_ok and roundtrip_ok and identity_ok


# --- 4. SNR exactness -------------------------------------------------------------


def test_criterion_4_snr_exactness(tmp_path):
    from svbench.audio import write_wav
    from svbench.manifest import save_manifest

    speakers = 5
    pool_records = []
    for s in range(speakers):
        for u in range(2):
            utt = f"pool_s{s}_u{u}"
            path = tmp_path / f"{utt}.wav"
            write_wav(AudioBuffer(synthesize(speaker_voice(s), utt), 16000), path)
            pool_records.append(UtteranceRecord(utt, str(path), f"spk{s}"))
    pool_manifest = tmp_path / "pool.jsonl"
    save_manifest(pool_records, pool_manifest)

    specs = {
        "gaussian": NoiseSpec("gaussian", 0),
        "environmental": NoiseSpec("environmental", 0, source_manifest=str(pool_manifest)),
        "crosstalk": NoiseSpec("crosstalk", 0, source_manifest=str(pool_manifest)),
    }
    max_err = 0.0
    self_mixes = 0
    for kind, base_spec in specs.items():
        for snr in (5.0, 15.0, 25.0):
            spec = NoiseSpec(kind, snr, source_manifest=base_spec.source_manifest)
            for i in range(20):
                target = UtteranceRecord(f"t{i}", "none", f"spk{i % 3}")
                signal = AudioBuffer(synthesize(speaker_voice(i % 8), f"snr_{kind}_{snr}_{i}"),
                                     16000)
                segment, prov = fetch_noise_segment(spec, target, len(signal), seed=31,
                                                    sample_rate=16000)
                mixed = mix_at_snr(signal, segment, snr)
                noise_part = mixed.samples - signal.samples
                measured = 20 * np.log10(rms(signal) / float(np.sqrt(np.mean(noise_part**2))))
                max_err = max(max_err, abs(measured - snr))
                if kind == "crosstalk" and prov["source_utt"].startswith(f"pool_s{i % 3}_"):
                    self_mixes += 1
    # exhaustive no-self-mix scan over a larger sweep
    spec = NoiseSpec("crosstalk", 15, source_manifest=str(pool_manifest))
    for i in range(1000):
        target = UtteranceRecord(f"x{i}", "none", f"spk{i % speakers}")
        _, prov = fetch_noise_segment(spec, target, 100, seed=7, sample_rate=16000)
        if prov["source_utt"].startswith(f"pool_s{i % speakers}_"):
            self_mixes += 1
    ok = max_err < 0.01 and self_mixes == 0
    report("SNR exactness + crosstalk never self-mixes", ok,
           f"max SNR error {max_err:.5f} dB, self-mixes {self_mixes}")
    assert max_err < 0.01
    assert self_mixes == 0


# --- 5. degradation determinism ---------------------------------------------------


def _write_pipeline_config(root: Path, out_name: str) -> Path:
    manifest = root / "corpus" / "manifest.jsonl"
    if not manifest.exists():
        build_demo_corpus(root / "corpus", n_speakers=4, utts_per_speaker=2,
                          with_lombard=False, with_spoof=False, duration_s=0.3)
    rir = root / "rir.wav"
    if not rir.exists():
        from svbench.audio import write_wav

        kernel = np.zeros(32)
        kernel[0], kernel[11] = 1.0, 0.35
        write_wav(AudioBuffer(kernel, 16000), rir)
    config = {
        "seed": 424242,
        "output_dir": str(root / out_name),
        "corpus_manifest": str(manifest),
        "crosstalk_manifest": str(manifest),
        "rir_pools": {"2": [str(rir)]},
        "conditions": [
            {"id": "clean"},
            {"id": "gauss5_rir2_g711",
             "noise": {"kind": "gaussian", "snr_db": 5},
             "rir": {"severity": 2},
             "codec": {"kind": "g711_mulaw"}},
            {"id": "crosstalk15", "noise": {"kind": "crosstalk", "snr_db": 15}},
        ],
        "protocols": [{"kind": "within_group", "name": "all"}],
        "models": [{"id": "toy-a", "adapter": ADAPTER}],
        "workers": 2,
    }
    path = root / f"{out_name}.yaml"
    path.write_text(yaml.safe_dump(config))
    return path


def _tree_bytes(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file()}


def test_criterion_5_degradation_determinism(tmp_path):
    cfg_a = _write_pipeline_config(tmp_path, "run_a")
    cfg_b = _write_pipeline_config(tmp_path, "run_b")
    assert cli_main(["simulate", "--config", str(cfg_a)]) == 0
    assert cli_main(["simulate", "--config", str(cfg_b)]) == 0
    tree_a = _tree_bytes(tmp_path / "run_a" / "conditions")
    tree_b = _tree_bytes(tmp_path / "run_b" / "conditions")
    wavs_identical = tree_a == tree_b
    prov_a = _tree_bytes(tmp_path / "run_a" / "provenance")
    prov_b = _tree_bytes(tmp_path / "run_b" / "provenance")
    prov_identical = prov_a == prov_b and len(prov_a) > 0
    ok = wavs_identical and prov_identical and len(tree_a) > 0
    report("degradation determinism (byte-identical trees)", ok,
           f"{len(tree_a)} wavs, {len(prov_a)} provenance files")
    assert wavs_identical
    assert prov_identical


# --- 6. protocol properties -------------------------------------------------------


def test_criterion_6_protocol_properties(tmp_path):
    manifest = build_demo_corpus(tmp_path / "corpus", n_speakers=6, utts_per_speaker=3,
                                 duration_s=0.1)
    records = load_manifest(manifest)
    real = [r for r in records if r.provenance == "real"]
    synth = [r for r in records if r.provenance == "synthetic"]
    by_utt = {r.utt_id: r for r in records}

    xl = cross_lingual_trials(real, seed=3)
    xl_ok = all(
        (by_utt[p.enroll_utt].speaker_id == by_utt[p.test_utt].speaker_id
         and by_utt[p.enroll_utt].language != by_utt[p.test_utt].language)
        if p.label == TARGET else
        (by_utt[p.enroll_utt].speaker_id != by_utt[p.test_utt].speaker_id
         and by_utt[p.enroll_utt].language == by_utt[p.test_utt].language)
        for p in xl.pairs)

    lm = lombard_trials(real, "mixed", seed=3)
    lm_ok = all(
        (p.condition_enroll != p.condition_test) if p.label == TARGET
        else (p.condition_enroll == p.condition_test)
        for p in lm.pairs)

    sp = spoof_trials(real, synth, seed=3)
    sp_ok = all(
        by_utt[p.enroll_utt].speaker_id == by_utt[p.test_utt].speaker_id
        and by_utt[p.enroll_utt].provenance == "real"
        and (by_utt[p.test_utt].provenance == "synthetic") == (p.label == NONTARGET)
        for p in sp.pairs)

    ok = xl_ok and lm_ok and sp_ok
    report("protocol properties (full scans)", ok,
           f"cross-lingual {len(xl.pairs)} pairs {xl_ok}, lombard-mixed "
           f"{len(lm.pairs)} pairs {lm_ok}, spoof {len(sp.pairs)} pairs {sp_ok}")
    assert xl_ok and lm_ok and sp_ok


# --- 7. attack verification -------------------------------------------------------


def test_criterion_7a_toy_gradient_matches_finite_differences():
    oracle = toy_scorer()
    rng = np.random.default_rng(0)
    h = 1e-4
    worst = 0.0
    for _ in range(10):
        n = int(rng.integers(400, 1200))
        x = rng.uniform(-0.3, 0.3, size=n)
        ref = oracle.embed(rng.uniform(-0.3, 0.3, size=n))
        grad = oracle.gradient(x, ref)
        idx = rng.choice(n, size=30, replace=False)
        fd = np.empty(len(idx))
        for j, i in enumerate(idx):
            xp, xm = x.copy(), x.copy()
            xp[i] += h
            xm[i] -= h
            fd[j] = (oracle.score(xp, ref) - oracle.score(xm, ref)) / (2 * h)
        worst = max(worst, float(np.abs(grad[idx] - fd).max() / np.abs(fd).max()))
    ok = worst < 1e-4
    report("toy-scorer analytic gradient vs central differences", ok,
           f"max relative error {worst:.2e}")
    assert worst < 1e-4


def test_criterion_7b_fgsm_lowers_genuine_scores():
    oracle = toy_scorer()
    lowered = 0
    for i in range(200):
        voice = speaker_voice(i % 8)
        x = synthesize(voice, f"acc_fgsm_{i}")
        ref = oracle.embed(synthesize(voice, f"acc_fgsm_ref_{i}"))
        res = fgsm(AudioBuffer(x, 16000), ref, oracle,
                   AttackConfig(epsilon=0.01, mode="evade", threshold=0.0, seed=i))
        lowered += res.final_score < res.initial_score
        assert res.linf_norm <= 0.01 + 1e-12
    ok = lowered >= 190  # 95% of 200
    report("FGSM evade lowers genuine score", ok, f"{lowered}/200 lowered")
    assert lowered >= 190


def test_criterion_7c_fakebob_impersonation_rate():
    oracle = toy_scorer()
    # clean trial pool over the attack corpus: exhaustive cosine trials
    emb = {(s, u): oracle.embed(attack_synthesize(attack_voice(s), f"acc_s{s}u{u}"))
           for s in range(6) for u in range(4)}
    tar, non = [], []
    for k1, k2 in itertools.combinations(emb, 2):
        value = emb_cosine(EmbeddingVector("a", "c", emb[k1].astype(np.float32)),
                           EmbeddingVector("b", "c", emb[k2].astype(np.float32)))
        (tar if k1[0] == k2[0] else non).append(value)
    clean = ScoreSet(np.array(tar + non), np.array([True] * len(tar) + [False] * len(non)))
    tau = eer_threshold(clean)

    wins = 0
    max_queries = 0
    linf_ok = True
    n = i = 0
    rng = np.random.default_rng(2)
    while n < 50:
        i += 1
        a, b = rng.choice(6, size=2, replace=False)
        x = attack_synthesize(attack_voice(a), f"acc_fb{i}")
        ref = oracle.embed(attack_synthesize(attack_voice(b), f"acc_fbr{i}"))
        v = oracle.embed(x)
        clean_score = float(v @ ref / (np.linalg.norm(v) * np.linalg.norm(ref)))
        if clean_score >= tau:
            continue
        n += 1
        cfg = AttackConfig(epsilon=0.05, mode="impersonate", threshold=tau, seed=i,
                           nes_samples=24, max_iters=119, sigma=0.003, step_size=0.0008)
        res = fakebob(AudioBuffer(x, 16000), ref, oracle, cfg)
        wins += res.success
        max_queries = max(max_queries, res.queries_used)
        if res.linf_norm > cfg.epsilon + 1e-12:
            linf_ok = False
    ok = wins >= 45 and max_queries <= 3000 and linf_ok
    report("FakeBob impersonation (eps=0.05, <=3000 queries)", ok,
           f"success {wins}/50 (tau={tau:.4f}), max queries {max_queries}, "
           f"linf bound {linf_ok}")
    assert max_queries <= 3000
    assert linf_ok
    assert wins >= 45


# --- 8. end-to-end smoke benchmark -------------------------------------------------


def test_criterion_8_end_to_end_smoke(tmp_path):
    manifest = build_demo_corpus(tmp_path / "corpus", n_speakers=8, utts_per_speaker=3,
                                 duration_s=0.3)
    config = {
        "seed": 99,
        "output_dir": str(tmp_path / "out"),
        "corpus_manifest": str(manifest),
        "conditions": [
            {"id": "clean"},
            {"id": "gauss15", "noise": {"kind": "gaussian", "snr_db": 15}},
        ],
        "protocols": [
            {"kind": "within_group", "name": "gender", "group_by": ["gender"]},
            {"kind": "within_group", "name": "gauss15_matched", "condition": "gauss15"},
        ],
        "models": [
            {"id": "toy-a", "adapter": ADAPTER},
            {"id": "toy-b", "adapter": ADAPTER},
        ],
        "stats": {"group_by": ["gender"]},
        "workers": 2,
    }
    cfg = tmp_path / "bench.yaml"
    cfg.write_text(yaml.safe_dump(config))
    codes = {}
    for stage in ("simulate", "trials", "extract", "score", "evaluate", "stats"):
        codes[stage] = cli_main([stage, "--config", str(cfg)])
    run_manifest = json.loads((tmp_path / "out" / "run_manifest.json").read_text())
    stages_done = set(run_manifest["stages"])
    no_failures = all(not s.get("failed") for s in run_manifest["stages"].values())
    ok = (all(c == 0 for c in codes.values())
          and {"simulate", "trials", "extract", "score", "evaluate", "stats"} <= stages_done
          and no_failures)
    report("end-to-end smoke benchmark (8-speaker mini corpus)", ok,
           f"exit codes {codes}, stages {sorted(stages_done)}")
    assert all(c == 0 for c in codes.values())
    assert no_failures
    metrics = (tmp_path / "out" / "reports" / "metrics.csv").read_text().splitlines()
    assert len(metrics) == 1 + 2 * 3  # 2 models x (gender[F], gender[M], gauss15_matched)
