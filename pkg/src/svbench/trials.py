"""Trial protocol construction: who gets compared with whom, and under what
condition tags.

All protocols are pure functions of (records, parameters, seed).  Pairs are
unordered (enroll/test fixed lexicographically by utt_id) except for the
asymmetric protocols: attack trials put the perturbed side first and spoof
trials put the real recording on the enroll side.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

from .errors import ProtocolError
from .manifest import UtteranceRecord, group_by
from .rand import derive_rng

TARGET = "target"
NONTARGET = "nontarget"
CLEAN_CONDITION = "clean"


@dataclass(frozen=True)
class TrialPair:
    enroll_utt: str
    test_utt: str
    label: str
    protocol: str
    condition_enroll: str = CLEAN_CONDITION
    condition_test: str = CLEAN_CONDITION

    def __post_init__(self) -> None:
        if self.enroll_utt == self.test_utt:
            raise ProtocolError(f"trial pairs an utterance with itself: {self.enroll_utt}")
        if self.label not in (TARGET, NONTARGET):
            raise ProtocolError(f"label must be target/nontarget, got {self.label!r}")


@dataclass(frozen=True)
class TrialList:
    pairs: tuple[TrialPair, ...]
    protocol: str
    seed: int

    def __post_init__(self) -> None:
        pairs = tuple(self.pairs)
        object.__setattr__(self, "pairs", pairs)
        labels = {p.label for p in pairs}
        if TARGET not in labels or NONTARGET not in labels:
            raise ProtocolError(
                f"protocol {self.protocol!r} needs at least one target and one nontarget")
        seen = set()
        for p in pairs:
            if p.condition_enroll == p.condition_test:
                key = (frozenset((p.enroll_utt, p.test_utt)), p.condition_enroll)
                if key in seen:
                    raise ProtocolError(
                        f"duplicate unordered pair in {self.protocol!r}: "
                        f"{p.enroll_utt} / {p.test_utt}")
                seen.add(key)

    @property
    def n_target(self) -> int:
        return sum(1 for p in self.pairs if p.label == TARGET)

    @property
    def n_nontarget(self) -> int:
        return sum(1 for p in self.pairs if p.label == NONTARGET)


def _ordered(a: UtteranceRecord, b: UtteranceRecord) -> tuple[str, str]:
    return (a.utt_id, b.utt_id) if a.utt_id <= b.utt_id else (b.utt_id, a.utt_id)


def _check_speaker_consistency(pairs: list[TrialPair], by_utt: dict[str, UtteranceRecord],
                               same_speaker_nontargets_ok: bool = False) -> None:
    for p in pairs:
        same = by_utt[p.enroll_utt].speaker_id == by_utt[p.test_utt].speaker_id
        if p.label == TARGET and not same:
            raise ProtocolError(f"target pair crosses speakers: {p.enroll_utt}/{p.test_utt}")
        if p.label == NONTARGET and same and not same_speaker_nontargets_ok:
            raise ProtocolError(f"nontarget pair shares a speaker: {p.enroll_utt}/{p.test_utt}")


def _subsample(pairs: list[TrialPair], max_pairs: int | None, seed: int,
               protocol: str) -> list[TrialPair]:
    """Seeded uniform subsample preserving the target:nontarget ratio."""
    if max_pairs is None or max_pairs >= len(pairs):
        return pairs
    if max_pairs < 2:
        raise ProtocolError("max_pairs must allow at least one target and one nontarget")
    targets = [p for p in pairs if p.label == TARGET]
    nontargets = [p for p in pairs if p.label == NONTARGET]
    n_tar = max(1, round(max_pairs * len(targets) / len(pairs)))
    n_tar = min(n_tar, max_pairs - 1, len(targets))
    n_non = min(max_pairs - n_tar, len(nontargets))
    rng = derive_rng(seed, "subsample", protocol)
    keep_t = sorted(rng.choice(len(targets), size=n_tar, replace=False).tolist())
    keep_n = sorted(rng.choice(len(nontargets), size=n_non, replace=False).tolist())
    return [targets[i] for i in keep_t] + [nontargets[i] for i in keep_n]


def within_group_trials(records: list[UtteranceRecord], seed: int,
                        max_pairs: int | None = None,
                        protocol: str = "within_group",
                        condition: str = CLEAN_CONDITION,
                        condition_test: str | None = None) -> TrialList:
    """Exhaustive same-speaker targets and cross-speaker nontargets.

    Nontargets stay inside the group, so stratified protocols keep impostor
    difficulty within the stratum.  ``condition_test`` different from
    ``condition`` gives a mismatched-condition protocol (enroll under one,
    test under the other).
    """
    speakers = {r.speaker_id for r in records}
    if len(speakers) < 2:
        raise ProtocolError(
            f"protocol {protocol!r} needs >= 2 speakers, got {len(speakers)} "
            "(no nontarget pairs possible)")
    cond_test = condition if condition_test is None else condition_test
    pairs = []
    for a, b in combinations(records, 2):
        enroll, test = _ordered(a, b)
        label = TARGET if a.speaker_id == b.speaker_id else NONTARGET
        pairs.append(TrialPair(enroll, test, label, protocol, condition, cond_test))
    pairs = _subsample(pairs, max_pairs, seed, protocol)
    by_utt = {r.utt_id: r for r in records}
    _check_speaker_consistency(pairs, by_utt)
    return TrialList(tuple(pairs), protocol, seed)


def cross_lingual_trials(records: list[UtteranceRecord], seed: int,
                         max_pairs: int | None = None,
                         protocol: str = "cross_lingual") -> TrialList:
    """Targets cross languages within a speaker; nontargets share a language
    across speakers.  Records without a language tag cannot satisfy either
    rule and are skipped."""
    tagged = [r for r in records if r.language]
    multilingual = {
        spk for spk, recs in group_by(tagged, ["speaker_id"]).items()
        if len({r.language for r in recs}) >= 2
    }
    if not multilingual:
        raise ProtocolError("cross-lingual protocol needs a speaker with >= 2 languages")
    pairs = []
    for a, b in combinations(tagged, 2):
        enroll, test = _ordered(a, b)
        if a.speaker_id == b.speaker_id and a.language != b.language:
            pairs.append(TrialPair(enroll, test, TARGET, protocol))
        elif a.speaker_id != b.speaker_id and a.language == b.language:
            pairs.append(TrialPair(enroll, test, NONTARGET, protocol))
    pairs = _subsample(pairs, max_pairs, seed, protocol)
    by_utt = {r.utt_id: r for r in tagged}
    _check_speaker_consistency(pairs, by_utt)
    return TrialList(tuple(pairs), protocol, seed)


LOMBARD_MODES = ("plain", "lombard", "mixed")


def lombard_trials(records: list[UtteranceRecord], mode: str, seed: int,
                   max_pairs: int | None = None) -> TrialList:
    """Speaking-style trials over plain/lombard condition tags.

    plain / lombard: both sides from that condition.  mixed: targets pair a
    plain with a lombard utterance of one speaker; nontargets stay within a
    single condition.  Callers stratify by gender before calling.
    """
    if mode not in LOMBARD_MODES:
        raise ProtocolError(f"lombard mode must be one of {LOMBARD_MODES}, got {mode!r}")
    untagged = [r.utt_id for r in records if r.condition not in ("plain", "lombard")]
    if untagged:
        raise ProtocolError(f"records missing plain/lombard condition tags: {untagged[:5]}")
    protocol = f"lombard_{mode}"
    if mode in ("plain", "lombard"):
        subset = [r for r in records if r.condition == mode]
        return within_group_trials(subset, seed, max_pairs, protocol, condition=mode)

    pairs = []
    for a, b in combinations(records, 2):
        if a.speaker_id == b.speaker_id and a.condition != b.condition:
            plain_rec, lomb_rec = (a, b) if a.condition == "plain" else (b, a)
            pairs.append(TrialPair(plain_rec.utt_id, lomb_rec.utt_id, TARGET, protocol,
                                   "plain", "lombard"))
        elif a.speaker_id != b.speaker_id and a.condition == b.condition:
            enroll, test = _ordered(a, b)
            pairs.append(TrialPair(enroll, test, NONTARGET, protocol,
                                   a.condition, a.condition))
    pairs = _subsample(pairs, max_pairs, seed, protocol)
    by_utt = {r.utt_id: r for r in records}
    _check_speaker_consistency(pairs, by_utt)
    return TrialList(tuple(pairs), protocol, seed)


def spoof_trials(real_records: list[UtteranceRecord],
                 synthetic_records: list[UtteranceRecord], seed: int,
                 tts_system: str | None = None,
                 max_pairs: int | None = None) -> TrialList:
    """Spoof protocol: targets are real/real same-speaker pairs; nontargets
    pair a real recording with a synthetic clone of the *same* speaker (the
    system must reject the clone).  Stratify per TTS system via
    ``tts_system``."""
    protocol = "spoof" if tts_system is None else f"spoof_{tts_system}"
    synth = [r for r in synthetic_records
             if tts_system is None or r.tts_system == tts_system]
    for r in synth:
        if r.provenance != "synthetic":
            raise ProtocolError(f"spoof nontarget source {r.utt_id} is not synthetic")
    real_speakers = {r.speaker_id for r in real_records}
    orphans = sorted({r.speaker_id for r in synth} - real_speakers)
    if orphans:
        raise ProtocolError(f"synthetic audio for speakers with no real audio: {orphans}")

    pairs = []
    for a, b in combinations(real_records, 2):
        if a.speaker_id == b.speaker_id:
            enroll, test = _ordered(a, b)
            pairs.append(TrialPair(enroll, test, TARGET, protocol))
    for s in synth:
        for r in real_records:
            if r.speaker_id == s.speaker_id:
                pairs.append(TrialPair(r.utt_id, s.utt_id, NONTARGET, protocol))
    pairs = _subsample(pairs, max_pairs, seed, protocol)
    by_utt = {r.utt_id: r for r in list(real_records) + list(synth)}
    _check_speaker_consistency(pairs, by_utt, same_speaker_nontargets_ok=True)
    return TrialList(tuple(pairs), protocol, seed)


ATTACKS = ("fgsm", "fakebob")


def attack_trials(records: list[UtteranceRecord], attack: str, seed: int,
                  max_pairs: int | None = None,
                  attacked_label: str = TARGET) -> TrialList:
    """Adversarial protocol: same-speaker pairs whose enroll side carries the
    ``adv:<attack>`` condition, padded with the clean cross-speaker nontarget
    pool.  ``attacked_label`` flips the evaluation convention (attacked pairs
    as targets being evaded, or as impostor nontargets)."""
    if attack not in ATTACKS:
        raise ProtocolError(f"attack must be one of {ATTACKS}, got {attack!r}")
    if attacked_label not in (TARGET, NONTARGET):
        raise ProtocolError(f"attacked_label must be target/nontarget, got {attacked_label!r}")
    protocol = f"attack_{attack}"
    condition = f"adv:{attack}"
    pairs = []
    for a, b in combinations(records, 2):
        enroll, test = _ordered(a, b)
        if a.speaker_id == b.speaker_id:
            pairs.append(TrialPair(enroll, test, attacked_label, protocol,
                                   condition, CLEAN_CONDITION))
            if attacked_label == NONTARGET:
                # Impostor convention: the clean same-speaker pair supplies
                # the target side of the list.
                pairs.append(TrialPair(enroll, test, TARGET, protocol,
                                       CLEAN_CONDITION, CLEAN_CONDITION))
        else:
            pairs.append(TrialPair(enroll, test, NONTARGET, protocol,
                                   CLEAN_CONDITION, CLEAN_CONDITION))
    pairs = _subsample(pairs, max_pairs, seed, protocol)
    return TrialList(tuple(pairs), protocol, seed)


def save_trial_list(trials: TrialList, path: str | Path) -> None:
    """One JSON header line, then "label enroll test cond_enroll cond_test"."""
    path = Path(path)
    header = {
        "protocol": trials.protocol,
        "seed": trials.seed,
        "n_target": trials.n_target,
        "n_nontarget": trials.n_nontarget,
    }
    with path.open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for p in trials.pairs:
            fh.write(f"{p.label} {p.enroll_utt} {p.test_utt} "
                     f"{p.condition_enroll} {p.condition_test}\n")


def load_trial_list(path: str | Path) -> TrialList:
    path = Path(path)
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ProtocolError(f"empty trial file: {path}")
    header = json.loads(lines[0])
    pairs = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split()
        if len(parts) != 5:
            raise ProtocolError(f"{path}:{lineno}: expected 5 fields, got {len(parts)}")
        label, enroll, test, c_enroll, c_test = parts
        pairs.append(TrialPair(enroll, test, label, header["protocol"], c_enroll, c_test))
    return TrialList(tuple(pairs), header["protocol"], int(header["seed"]))
