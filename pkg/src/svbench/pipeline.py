"""Stage implementations behind the CLI: simulate, trials, extract, score,
evaluate, stats, attack.

Every stage is idempotent and seeded per (utterance, condition) cell, so
re-running any subset reproduces identical outputs regardless of worker
count or order.  Failures abort only their own cell; the run manifest
records completion status for every requested cell.
"""

from __future__ import annotations

import csv
import hashlib
import json
import shutil
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .attacks import AttackConfig, ToyScorer, fakebob, fgsm, toy_scorer
from .audio import read_wav, write_wav
from .config import BenchConfig, ConditionSpec, ProtocolSpec
from .degrade import degrade
from .embeddings import EmbeddingCache, extract, score_trials
from .errors import BenchError, ConfigError, ProtocolError
from .manifest import UtteranceRecord, group_by, load_manifest
from .metrics import auc, eer, eer_threshold, min_dcf, ScoreSet
from .rand import derive_key
from .stats import GroupEerVector, load_group_eers, pairwise_matrix, render_matrix_csv, render_matrix_text
from .trials import (
    TrialList,
    attack_trials,
    cross_lingual_trials,
    load_trial_list,
    lombard_trials,
    save_trial_list,
    spoof_trials,
    within_group_trials,
)


def _safe(condition_id: str) -> str:
    return condition_id.replace(":", "_").replace("/", "_")


def condition_dir(config: BenchConfig, condition_id: str) -> Path:
    return config.output_dir / "conditions" / _safe(condition_id)


def provenance_dir(config: BenchConfig, condition_id: str) -> Path:
    return config.output_dir / "provenance" / _safe(condition_id)


def trials_path(config: BenchConfig, protocol: str) -> Path:
    return config.output_dir / "trials" / f"{_safe(protocol)}.txt"


def scores_path(config: BenchConfig, model_id: str, protocol: str) -> Path:
    return config.output_dir / "scores" / model_id / f"{_safe(protocol)}.csv"


def _file_sha(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()[:16]


class RunManifest:
    """Per-run record: config hash, per-stage cell statuses, timing."""

    def __init__(self, config: BenchConfig):
        self.path = config.output_dir / "run_manifest.json"
        if self.path.exists():
            self.data = json.loads(self.path.read_text())
        else:
            self.data = {"version": __version__, "stages": {}}
        self.data["config_hash"] = config.config_hash()
        self.data["effective_config"] = config.effective_dict()

    def record_stage(self, stage: str, summary: dict) -> None:
        summary = dict(summary)
        summary["finished_at"] = time.strftime("%Y-%m-%dT%H:%M:%S")
        self.data["stages"][stage] = summary
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True))

    def all_complete(self) -> bool:
        stages = self.data["stages"].values()
        return bool(stages) and all(not s.get("failed") for s in stages)


# --- simulate -----------------------------------------------------------------


def _simulate_cell(config: BenchConfig, record: UtteranceRecord,
                   cond: ConditionSpec) -> str:
    """Produce one degraded WAV; returns "written" or "skipped"."""
    out_wav = condition_dir(config, cond.condition_id) / f"{record.utt_id}.wav"
    out_prov = provenance_dir(config, cond.condition_id) / f"{record.utt_id}.json"
    source = Path(record.path)
    input_sha = _file_sha(source)
    if out_wav.exists() and out_prov.exists():
        existing = json.loads(out_prov.read_text())
        if (existing.get("input_sha") == input_sha
                and existing.get("config_hash") == config.config_hash()):
            return "skipped"

    if cond.is_clean:
        shutil.copyfile(source, out_wav)  # byte-identical copy
        provenance = {"utt_id": record.utt_id, "condition_id": cond.condition_id,
                      "seed": config.seed, "stages": []}
    else:
        audio = read_wav(source)
        degraded, provenance = degrade(
            audio, record, config.seed,
            noise=cond.noise, rir=cond.rir, codec=cond.codec,
            condition_id=cond.condition_id)
        write_wav(degraded, out_wav)
    provenance["input_sha"] = input_sha
    provenance["output_sha"] = _file_sha(out_wav)
    provenance["config_hash"] = config.config_hash()
    out_prov.write_text(json.dumps(provenance, sort_keys=True))
    return "written"


def stage_simulate(config: BenchConfig, manifest: RunManifest,
                   condition_ids: list[str] | None = None) -> dict:
    records = load_manifest(config.corpus_manifest)
    conditions = [c for c in config.conditions
                  if condition_ids is None or c.condition_id in condition_ids]
    for cond in conditions:
        condition_dir(config, cond.condition_id).mkdir(parents=True, exist_ok=True)
        provenance_dir(config, cond.condition_id).mkdir(parents=True, exist_ok=True)

    cells = [(record, cond) for cond in conditions for record in records]
    written = skipped = 0
    failed: list[dict] = []
    completed: list[dict] = []

    def work(cell):
        record, cond = cell
        return record, cond, _simulate_cell(config, record, cond)

    with ThreadPoolExecutor(max_workers=max(config.workers, 1)) as pool:
        for record, cond, outcome in pool.map(lambda c: _guarded(work, c), cells):
            if isinstance(outcome, Exception):
                failed.append({"utt_id": record.utt_id, "condition": cond.condition_id,
                               "error": str(outcome)})
                continue
            if outcome == "written":
                written += 1
            else:
                skipped += 1
            completed.append({
                "cell": f"{cond.condition_id}/{record.utt_id}",
                "provenance": str(provenance_dir(config, cond.condition_id)
                                  / f"{record.utt_id}.json"),
            })
    summary = {"written": written, "skipped": skipped, "failed": failed,
               "cells": len(cells), "completed": completed}
    manifest.record_stage("simulate", summary)
    return summary


def _guarded(fn, cell):
    record, cond = cell
    try:
        return fn(cell)
    except BenchError as exc:
        return record, cond, exc


# --- trials -------------------------------------------------------------------


def build_protocol_trials(config: BenchConfig, spec: ProtocolSpec,
                          records: list[UtteranceRecord]) -> dict[str, TrialList]:
    """Expand one protocol spec into named trial lists (one per stratum)."""
    real = [r for r in records if r.provenance == "real"]
    synthetic = [r for r in records if r.provenance == "synthetic"]
    cond_enroll, _, cond_test = spec.condition_id.partition("|")
    cond_test = cond_test or None

    def strata(pool: list[UtteranceRecord]):
        if not spec.group_by:
            return {(): pool}
        return group_by(pool, list(spec.group_by))

    out: dict[str, TrialList] = {}
    for key, bucket in strata(real).items():
        label = "" if not key else "[" + ",".join(str(k) for k in key) + "]"
        name = spec.name + label
        try:
            if spec.kind == "within_group":
                trials = within_group_trials(
                    bucket, config.seed, spec.max_pairs, protocol=name,
                    condition=cond_enroll, condition_test=cond_test)
            elif spec.kind == "cross_lingual":
                trials = cross_lingual_trials(bucket, config.seed, spec.max_pairs,
                                              protocol=name)
            elif spec.kind == "lombard":
                trials = lombard_trials(bucket, spec.mode, config.seed, spec.max_pairs)
                trials = TrialList(
                    tuple(replace(p, protocol=name) for p in trials.pairs), name,
                    trials.seed)
            elif spec.kind == "spoof":
                bucket_speakers = {r.speaker_id for r in bucket}
                synth = [r for r in synthetic if r.speaker_id in bucket_speakers]
                trials = spoof_trials(bucket, synth, config.seed, spec.tts_system,
                                      spec.max_pairs)
                trials = TrialList(
                    tuple(replace(p, protocol=name) for p in trials.pairs), name,
                    trials.seed)
            elif spec.kind == "attack":
                trials = attack_trials(bucket, spec.attack, config.seed, spec.max_pairs)
                trials = TrialList(
                    tuple(replace(p, protocol=name) for p in trials.pairs), name,
                    trials.seed)
            else:  # unreachable: ProtocolSpec validates kind
                raise ConfigError(f"unknown protocol kind {spec.kind}")
        except ProtocolError as exc:
            raise ProtocolError(f"protocol {name!r}: {exc}") from exc
        out[name] = trials
    return out


def stage_trials(config: BenchConfig, manifest: RunManifest,
                 protocol_names: list[str] | None = None) -> dict:
    records = load_manifest(config.corpus_manifest)
    (config.output_dir / "trials").mkdir(parents=True, exist_ok=True)
    built: list[str] = []
    failed: list[dict] = []
    for spec in config.protocols:
        if protocol_names and spec.name not in protocol_names:
            continue
        try:
            for name, trials in build_protocol_trials(config, spec, records).items():
                save_trial_list(trials, trials_path(config, name))
                built.append(name)
        except BenchError as exc:
            failed.append({"protocol": spec.name, "error": str(exc)})
    summary = {"built": built, "failed": failed}
    manifest.record_stage("trials", summary)
    return summary


def _trial_files(config: BenchConfig) -> list[Path]:
    root = config.output_dir / "trials"
    return sorted(root.glob("*.txt")) if root.exists() else []


def _conditions_in_trials(config: BenchConfig) -> set[str]:
    needed = set()
    for path in _trial_files(config):
        trials = load_trial_list(path)
        for p in trials.pairs:
            needed.add(p.condition_enroll)
            needed.add(p.condition_test)
    return needed


# --- extract / score ----------------------------------------------------------


def stage_extract(config: BenchConfig, manifest: RunManifest,
                  model_ids: list[str] | None = None) -> dict:
    records = load_manifest(config.corpus_manifest)
    needed = _conditions_in_trials(config)
    if not needed:
        needed = {"clean"}
    cache_dir = config.output_dir / "cache"
    extracted: list[str] = []
    failed: list[dict] = []
    configured = {c.condition_id for c in config.conditions}
    corpus_tags = {r.condition for r in records if r.condition}
    for model in config.models:
        if model_ids and model.model_id not in model_ids:
            continue
        for cond_id in sorted(needed):
            requests = []
            if cond_id in configured or cond_id.startswith("adv:"):
                cdir = condition_dir(config, cond_id)
                for r in records:
                    wav = cdir / f"{r.utt_id}.wav"
                    if wav.exists():
                        requests.append((r.utt_id, str(wav)))
            elif cond_id in corpus_tags:
                # Corpus-level condition tag (e.g. plain/lombard/farfield):
                # the audio is the utterance's own recording.
                clean_dir = condition_dir(config, "clean")
                for r in records:
                    if r.condition != cond_id:
                        continue
                    wav = clean_dir / f"{r.utt_id}.wav"
                    requests.append((r.utt_id, str(wav) if wav.exists() else r.path))
            if not requests:
                failed.append({"model": model.model_id, "condition": cond_id,
                               "error": "no simulated audio found for condition"})
                continue
            try:
                extract(requests, cond_id, model.adapter_command, cache_dir,
                        model.model_id, timeout_s=config.adapter_timeout_s)
                extracted.append(f"{model.model_id}/{cond_id}")
            except BenchError as exc:
                failed.append({"model": model.model_id, "condition": cond_id,
                               "error": str(exc)})
    summary = {"extracted": extracted, "failed": failed}
    manifest.record_stage("extract", summary)
    return summary


def stage_score(config: BenchConfig, manifest: RunManifest,
                model_ids: list[str] | None = None,
                protocol_names: list[str] | None = None) -> dict:
    cache_dir = config.output_dir / "cache"
    scored: list[str] = []
    failed: list[dict] = []
    for model in config.models:
        if model_ids and model.model_id not in model_ids:
            continue
        cache = EmbeddingCache(cache_dir, model.model_id)
        for path in _trial_files(config):
            protocol = path.stem
            if protocol_names and protocol not in protocol_names:
                continue
            trials = load_trial_list(path)
            embeddings = {}
            try:
                for pair in trials.pairs:
                    for utt, cond in ((pair.enroll_utt, pair.condition_enroll),
                                      (pair.test_utt, pair.condition_test)):
                        if (utt, cond) not in embeddings:
                            vec = cache.get(utt, cond)
                            if vec is None:
                                raise BenchError(
                                    f"no cached embedding for ({utt!r}, {cond!r})")
                            embeddings[(utt, cond)] = vec
                score_set = score_trials(trials, embeddings, model.model_id)
            except BenchError as exc:
                failed.append({"model": model.model_id, "protocol": protocol,
                               "error": str(exc)})
                continue
            out = scores_path(config, model.model_id, protocol)
            out.parent.mkdir(parents=True, exist_ok=True)
            with out.open("w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["trial_index", "label", "enroll_utt", "test_utt",
                                 "condition_enroll", "condition_test", "score"])
                for i, pair in enumerate(trials.pairs):
                    writer.writerow([i, pair.label, pair.enroll_utt, pair.test_utt,
                                     pair.condition_enroll, pair.condition_test,
                                     f"{score_set.scores[i]:.9f}"])
            scored.append(f"{model.model_id}/{protocol}")
    summary = {"scored": scored, "failed": failed}
    manifest.record_stage("score", summary)
    return summary


def load_score_set(config: BenchConfig, model_id: str, protocol: str) -> ScoreSet:
    path = scores_path(config, model_id, protocol)
    if not path.exists():
        raise BenchError(f"no scores for ({model_id}, {protocol})")
    scores, labels = [], []
    with path.open() as fh:
        for row in csv.DictReader(fh):
            scores.append(float(row["score"]))
            labels.append(row["label"] == "target")
    return ScoreSet(np.array(scores), np.array(labels), model_id=model_id,
                    protocol=protocol)


# --- evaluate -----------------------------------------------------------------


def stage_evaluate(config: BenchConfig, manifest: RunManifest,
                   model_ids: list[str] | None = None,
                   protocol_names: list[str] | None = None) -> dict:
    reports = config.output_dir / "reports"
    reports.mkdir(parents=True, exist_ok=True)
    models = [m.model_id for m in config.models
              if not model_ids or m.model_id in model_ids]
    protocols = [p.stem for p in _trial_files(config)
                 if not protocol_names or p.stem in protocol_names]
    rows = []
    gaps = []
    for model_id in models:
        for protocol in protocols:
            try:
                score_set = load_score_set(config, model_id, protocol)
            except BenchError as exc:
                gaps.append({"model": model_id, "protocol": protocol, "error": str(exc)})
                continue
            detail_eer = eer(score_set)
            rows.append({
                "protocol": protocol,
                "model_id": model_id,
                "n_target": score_set.n_target,
                "n_nontarget": score_set.n_nontarget,
                "eer": f"{detail_eer:.6f}",
                "min_dcf": f"{min_dcf(score_set, config.dcf):.6f}",
                "dcf_p_target": config.dcf.p_target,
                "dcf_c_miss": config.dcf.c_miss,
                "dcf_c_fa": config.dcf.c_fa,
                "auc": f"{auc(score_set):.6f}",
                "config_hash": config.config_hash(),
            })
    metrics_csv = reports / "metrics.csv"
    with metrics_csv.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=[
            "protocol", "model_id", "n_target", "n_nontarget", "eer", "min_dcf",
            "dcf_p_target", "dcf_c_miss", "dcf_c_fa", "auc", "config_hash"])
        writer.writeheader()
        writer.writerows(rows)
    gaps_csv = reports / "gaps.csv"
    with gaps_csv.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["model", "protocol", "error"])
        writer.writeheader()
        writer.writerows(gaps)
    summary = {"rows": len(rows), "metrics_csv": str(metrics_csv),
               "gaps": gaps, "failed": gaps}
    manifest.record_stage("evaluate", summary)
    return summary


# --- stats --------------------------------------------------------------------


def _groups_from_metrics(config: BenchConfig) -> dict[str, list[GroupEerVector]]:
    """Per-category group EER vectors assembled from computed metrics."""
    metrics_csv = config.output_dir / "reports" / "metrics.csv"
    if not metrics_csv.exists():
        raise BenchError("run evaluate before stats (reports/metrics.csv missing)")
    records = load_manifest(config.corpus_manifest)
    model_order = [m.model_id for m in config.models]
    if config.stats_model_subset:
        model_order = [m for m in model_order if m in config.stats_model_subset]
    per_protocol: dict[str, dict[str, float]] = {}
    with metrics_csv.open() as fh:
        for row in csv.DictReader(fh):
            per_protocol.setdefault(row["protocol"], {})[row["model_id"]] = float(row["eer"])
    categories: dict[str, list[GroupEerVector]] = {}
    for protocol, eers in sorted(per_protocol.items()):
        if "[" not in protocol or not protocol.endswith("]"):
            continue
        base, bucket = protocol[:-1].split("[", 1)
        if any(m not in eers for m in model_order):
            continue
        spec = next((p for p in config.protocols if p.name == base), None)
        speakers = set()
        if spec and spec.group_by:
            groups = group_by(records, list(spec.group_by))
            key = tuple(bucket.split(","))
            speakers = {r.speaker_id for r in groups.get(key, [])}
        categories.setdefault(base, []).append(GroupEerVector(
            group_id=bucket, speaker_count=len(speakers),
            eers=tuple(eers[m] for m in model_order),
            model_ids=tuple(model_order)))
    return categories


def stage_stats(config: BenchConfig, manifest: RunManifest,
                override_eers: str | None = None) -> dict:
    reports = config.output_dir / "reports"
    reports.mkdir(parents=True, exist_ok=True)
    categories: dict[str, list[GroupEerVector]] = {}
    if override_eers:
        data = json.loads(Path(override_eers).read_text())
        by_cat: dict[str, list] = {}
        for entry in data.get("groups", []):
            by_cat.setdefault(entry.get("category", "all"), []).append(entry)
        for cat, entries in by_cat.items():
            subset = list(config.stats_model_subset) or None
            sliced = dict(data)
            sliced["groups"] = entries
            tmp = reports / f"_override_{cat}.json"
            tmp.write_text(json.dumps(sliced))
            categories[cat] = load_group_eers(tmp, model_subset=subset)
            tmp.unlink()
    else:
        categories = _groups_from_metrics(config)

    written = []
    failed = []
    for cat, groups in categories.items():
        if len(groups) < 2:
            failed.append({"category": cat, "error": "needs >= 2 groups"})
            continue
        matrix = pairwise_matrix(groups)
        text = render_matrix_text(groups, matrix, config.stats_min_speakers)
        header = (f"# models: {', '.join(groups[0].model_ids)}\n"
                  f"# config: {config.config_hash()}\n")
        (reports / f"stats_{_safe(cat)}.txt").write_text(header + text)
        (reports / f"stats_{_safe(cat)}.csv").write_text(render_matrix_csv(groups, matrix))
        written.append(cat)
    summary = {"categories": written, "failed": failed}
    manifest.record_stage("stats", summary)
    return summary


# --- attack -------------------------------------------------------------------


def _attack_oracle(config: BenchConfig) -> ToyScorer:
    if config.attack.oracle == "toy":
        return toy_scorer()
    if config.attack.oracle == "toy-score-only":
        oracle = toy_scorer()
        oracle.supports_gradient = False
        return oracle
    raise ConfigError(f"unknown attack oracle {config.attack.oracle!r}")


def stage_attack(config: BenchConfig, manifest: RunManifest) -> dict:
    attack_specs = [p for p in config.protocols if p.kind == "attack"]
    if not attack_specs:
        raise ConfigError("no attack protocols configured")
    records = load_manifest(config.corpus_manifest)
    real = [r for r in records if r.provenance == "real"]
    oracle = _attack_oracle(config)

    results_all = []
    failed = []
    for spec in attack_specs:
        cond_id = f"adv:{spec.attack}"
        out_dir = condition_dir(config, cond_id)
        out_dir.mkdir(parents=True, exist_ok=True)
        trial_sets = build_protocol_trials(config, spec, records)

        # one attack per unique enroll utterance: reference = its paired test
        pairs_by_enroll: dict[str, str] = {}
        for trials in trial_sets.values():
            for p in trials.pairs:
                if p.condition_enroll == cond_id and p.enroll_utt not in pairs_by_enroll:
                    pairs_by_enroll[p.enroll_utt] = p.test_utt
        items = sorted(pairs_by_enroll.items())
        if config.attack.max_utterances:
            items = items[: config.attack.max_utterances]

        by_utt = {r.utt_id: r for r in real}
        threshold = config.attack.threshold
        if threshold is None:
            threshold = _clean_toy_threshold(config, real, oracle)

        for enroll_utt, test_utt in items:
            try:
                wave = read_wav(by_utt[enroll_utt].path)
                reference = oracle.embed(read_wav(by_utt[test_utt].path).samples)
                attack_config = AttackConfig(
                    epsilon=config.attack.epsilon,
                    max_iters=config.attack.max_iters,
                    nes_samples=config.attack.nes_samples,
                    sigma=config.attack.sigma,
                    step_size=config.attack.step_size,
                    threshold=float(threshold),
                    seed=derive_key(config.seed, "attack", spec.attack, enroll_utt) % 2**31,
                    mode=config.attack.mode,
                )
                if spec.attack == "fgsm":
                    result = fgsm(wave, reference, oracle, attack_config)
                else:
                    result = fakebob(wave, reference, oracle, attack_config)
                write_wav(result.adv_waveform, out_dir / f"{enroll_utt}.wav")
                sidecar = {
                    "utt_id": enroll_utt,
                    "reference_utt": test_utt,
                    "attack": spec.attack,
                    "mode": attack_config.mode,
                    "epsilon": attack_config.epsilon,
                    "threshold": attack_config.threshold,
                    "queries_used": result.queries_used,
                    "success": bool(result.success),
                    "linf_norm": result.linf_norm,
                    "final_score": result.final_score,
                    "initial_score": result.initial_score,
                }
                (out_dir / f"{enroll_utt}.json").write_text(json.dumps(sidecar, sort_keys=True))
                results_all.append(sidecar)
            except BenchError as exc:
                failed.append({"attack": spec.attack, "utt_id": enroll_utt,
                               "error": str(exc)})

    summary_csv = config.output_dir / "attacks_summary.csv"
    with summary_csv.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["attack", "n", "success_rate", "mean_queries", "mean_linf"])
        for attack_name in sorted({r["attack"] for r in results_all}):
            subset = [r for r in results_all if r["attack"] == attack_name]
            writer.writerow([
                attack_name, len(subset),
                f"{np.mean([r['success'] for r in subset]):.4f}",
                f"{np.mean([r['queries_used'] for r in subset]):.1f}",
                f"{np.mean([r['linf_norm'] for r in subset]):.6f}",
            ])
    summary = {"attacked": len(results_all), "failed": failed,
               "summary_csv": str(summary_csv)}
    manifest.record_stage("attack", summary)
    return summary


def _clean_toy_threshold(config: BenchConfig, records: list[UtteranceRecord],
                         oracle: ToyScorer) -> float:
    """EER threshold of toy-scorer cosine scores on clean within-speaker trials."""
    trials = within_group_trials(records, config.seed, protocol="_attack_tau")
    embeddings = {}
    for r in records:
        embeddings[r.utt_id] = oracle.embed(read_wav(r.path).samples)
    scores, labels = [], []
    for p in trials.pairs:
        a, b = embeddings[p.enroll_utt], embeddings[p.test_utt]
        scores.append(float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b))))
        labels.append(p.label == "target")
    return eer_threshold(ScoreSet(np.array(scores), np.array(labels)))
