"""Uniform utterance records and JSON-lines manifest ingestion.

Every corpus (studio speech, conversational meetings, read sentences,
noise/RIR pools, TTS outputs) is converted to one JSON object per line with
the field names below; corpus-specific conversion stays outside the harness.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields as dc_fields
from pathlib import Path

from .errors import ManifestError

GENDERS = {"F", "M", "other"}
STYLES = {"read", "spontaneous"}
PROVENANCES = {"real", "synthetic"}

UNKNOWN = "unknown"


@dataclass(frozen=True)
class UtteranceRecord:
    """One corpus utterance plus the metadata used for stratification."""

    utt_id: str
    path: str
    speaker_id: str
    gender: str | None = None
    age_group: str | None = None
    ethnicity: str | None = None
    language: str | None = None
    style: str | None = None
    condition: str | None = None
    provenance: str = "real"
    tts_system: str | None = None
    duration_s: float | None = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.utt_id:
            raise ManifestError("record is missing utt_id")
        if not self.speaker_id:
            raise ManifestError(f"record {self.utt_id}: speaker_id must be non-empty")
        if self.gender is not None and self.gender not in GENDERS:
            raise ManifestError(f"record {self.utt_id}: gender must be one of {sorted(GENDERS)}")
        if self.style is not None and self.style not in STYLES:
            raise ManifestError(f"record {self.utt_id}: style must be one of {sorted(STYLES)}")
        if self.provenance not in PROVENANCES:
            raise ManifestError(f"record {self.utt_id}: provenance must be one of {sorted(PROVENANCES)}")
        if self.provenance == "synthetic" and not self.tts_system:
            raise ManifestError(f"record {self.utt_id}: synthetic provenance requires tts_system")


_KNOWN_FIELDS = {f.name for f in dc_fields(UtteranceRecord)} - {"extras"}


def record_from_dict(obj: dict) -> UtteranceRecord:
    known = {k: v for k, v in obj.items() if k in _KNOWN_FIELDS}
    extras = {k: v for k, v in obj.items() if k not in _KNOWN_FIELDS}
    return UtteranceRecord(**known, extras=extras)


def record_to_dict(record: UtteranceRecord) -> dict:
    out = {}
    for f in dc_fields(UtteranceRecord):
        if f.name == "extras":
            continue
        value = getattr(record, f.name)
        if value is not None:
            out[f.name] = value
    out.update(record.extras)
    return out


def load_manifest(path: str | Path) -> list[UtteranceRecord]:
    """Load and validate a JSON-lines manifest, preserving line order."""
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    records: list[UtteranceRecord] = []
    seen: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            if not isinstance(obj, dict):
                raise ManifestError(f"{path}:{lineno}: expected a JSON object")
            try:
                record = record_from_dict(obj)
            except ManifestError as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from exc
            except TypeError as exc:
                raise ManifestError(f"{path}:{lineno}: malformed record: {exc}") from exc
            if record.utt_id in seen:
                raise ManifestError(f"{path}:{lineno}: duplicate utt_id {record.utt_id!r}")
            seen.add(record.utt_id)
            records.append(record)
    return records


def save_manifest(records: list[UtteranceRecord], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record_to_dict(record), sort_keys=True) + "\n")


def group_by(records: list[UtteranceRecord], keys: list[str]) -> dict[tuple, list[UtteranceRecord]]:
    """Partition records by a tuple of field values.

    Records with a missing key field land in an explicit "unknown" bucket for
    that key; nothing is silently dropped.
    """
    for key in keys:
        if key not in _KNOWN_FIELDS:
            raise ManifestError(f"unknown field {key!r}; known fields: {sorted(_KNOWN_FIELDS)}")
    groups: dict[tuple, list[UtteranceRecord]] = {}
    for record in records:
        bucket = tuple(
            getattr(record, key) if getattr(record, key) is not None else UNKNOWN
            for key in keys
        )
        groups.setdefault(bucket, []).append(record)
    return groups


def group_sizes(groups: dict[tuple, list[UtteranceRecord]]) -> dict[tuple, dict[str, int]]:
    """Speaker and utterance counts per bucket."""
    return {
        key: {"speakers": len({r.speaker_id for r in bucket}), "utterances": len(bucket)}
        for key, bucket in groups.items()
    }
