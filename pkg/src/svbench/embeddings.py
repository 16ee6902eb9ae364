"""Obtaining, caching, and scoring speaker embeddings.

The harness never loads a neural model in-process: embeddings arrive either
from files or from an external extractor adapter invoked as a subprocess.
The adapter contract is a request file of "utt_id<TAB>wav_path" lines and a
JSON-lines response of {"utt_id": ..., "embedding": [...]}; response lines
without an "utt_id" key are treated as adapter metadata (e.g. checkpoint
identifiers) and preserved.

Vectors are cached per model as a raw little-endian float32 blob plus a
JSON-lines index ({"utt_id", "condition_id", "offset", "dim"}, offset in
bytes).  Scores are computed in float64 from the stored float32 values.
"""

from __future__ import annotations

import json
import shlex
import subprocess
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AdapterError, EmbeddingError
from .metrics import ScoreSet
from .trials import TrialList


@dataclass(frozen=True)
class EmbeddingVector:
    utt_id: str
    condition_id: str
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float32)
        if values.ndim != 1 or values.size < 1:
            raise EmbeddingError(f"{self.utt_id}: embedding must be a non-empty vector")
        if not np.all(np.isfinite(values)):
            raise EmbeddingError(f"{self.utt_id}: embedding has non-finite values")
        if float(np.linalg.norm(values)) == 0.0:
            raise EmbeddingError(f"{self.utt_id}: embedding has zero norm")
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return int(self.values.size)


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Cosine similarity in [-1, 1], computed in float64."""
    if a.dim != b.dim:
        raise EmbeddingError(f"dimension mismatch: {a.dim} vs {b.dim}")
    x = a.values.astype(np.float64)
    y = b.values.astype(np.float64)
    value = float(np.dot(x, y) / (np.linalg.norm(x) * np.linalg.norm(y)))
    return float(np.clip(value, -1.0, 1.0))


class EmbeddingCache:
    """Append-only per-model vector store; lossless at float32 precision."""

    def __init__(self, cache_dir: str | Path, model_id: str):
        self.root = Path(cache_dir) / model_id
        self.root.mkdir(parents=True, exist_ok=True)
        self.index_path = self.root / "index.jsonl"
        self.blob_path = self.root / "embeddings.f32"
        self.model_id = model_id
        self._index: dict[tuple[str, str], tuple[int, int]] = {}
        self._dim: int | None = None
        if self.index_path.exists():
            for line in self.index_path.read_text().splitlines():
                if not line.strip():
                    continue
                entry = json.loads(line)
                self._index[(entry["utt_id"], entry["condition_id"])] = (
                    int(entry["offset"]), int(entry["dim"]))
                self._check_dim(int(entry["dim"]), entry["utt_id"])

    def _check_dim(self, dim: int, utt_id: str) -> None:
        if self._dim is None:
            self._dim = dim
        elif dim != self._dim:
            raise EmbeddingError(
                f"dimension drift in model {self.model_id!r}: got {dim} for "
                f"{utt_id!r}, cache holds {self._dim}")

    def __contains__(self, key: tuple[str, str]) -> bool:
        return key in self._index

    def get(self, utt_id: str, condition_id: str) -> EmbeddingVector | None:
        key = (utt_id, condition_id)
        if key not in self._index:
            return None
        offset, dim = self._index[key]
        with self.blob_path.open("rb") as fh:
            fh.seek(offset)
            raw = fh.read(4 * dim)
        values = np.frombuffer(raw, dtype="<f4")
        return EmbeddingVector(utt_id, condition_id, values)

    def put(self, vector: EmbeddingVector) -> None:
        self._check_dim(vector.dim, vector.utt_id)
        key = (vector.utt_id, vector.condition_id)
        if key in self._index:
            return
        with self.blob_path.open("ab") as fh:
            offset = fh.tell()
            fh.write(vector.values.astype("<f4").tobytes())
        with self.index_path.open("a") as fh:
            fh.write(json.dumps({"utt_id": vector.utt_id, "condition_id": vector.condition_id,
                                 "offset": offset, "dim": vector.dim}) + "\n")
        self._index[key] = (offset, vector.dim)


def parse_response(path: str | Path, condition_id: str) -> tuple[dict[str, EmbeddingVector], list[dict]]:
    """Read an adapter response file; returns (vectors by utt_id, metadata)."""
    path = Path(path)
    if not path.exists():
        raise AdapterError(f"adapter wrote no response file: {path}")
    vectors: dict[str, EmbeddingVector] = {}
    metadata: list[dict] = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise AdapterError(f"{path}:{lineno}: malformed JSON line: {exc}") from exc
        if "utt_id" not in obj:
            metadata.append(obj)
            continue
        utt_id = obj["utt_id"]
        if utt_id in vectors:
            raise AdapterError(f"{path}:{lineno}: duplicate utt_id {utt_id!r} in response")
        vectors[utt_id] = EmbeddingVector(utt_id, condition_id, np.asarray(obj["embedding"]))
    return vectors, metadata


def _run_extractor(adapter_command: str, request_path: Path, response_path: Path,
                   model_id: str, timeout_s: float) -> None:
    command = adapter_command.format(request=str(request_path), response=str(response_path),
                                     model=model_id)
    argv = shlex.split(command)
    try:
        proc = subprocess.run(argv, capture_output=True, text=True, timeout=timeout_s)
    except FileNotFoundError as exc:
        raise AdapterError(f"extractor adapter binary not found: {argv[0]}") from exc
    except subprocess.TimeoutExpired as exc:
        raise AdapterError(f"extractor adapter timed out after {timeout_s}s") from exc
    if proc.returncode != 0:
        raise AdapterError(
            f"extractor adapter exited {proc.returncode}: {command}\n"
            f"stdout: {proc.stdout.strip()}\nstderr: {proc.stderr.strip()}")


def extract(
    requests: list[tuple[str, str]],
    condition_id: str,
    adapter_command: str,
    cache_dir: str | Path,
    model_id: str,
    timeout_s: float = 600.0,
    runner=None,
    work_dir: str | Path | None = None,
) -> dict[str, EmbeddingVector]:
    """Embeddings for (utt_id, wav_path) requests, through the cache.

    Cache misses are batched into a single adapter invocation; a warm cache
    spawns no subprocess.  ``runner`` overrides the subprocess call (used by
    tests to count invocations).
    """
    cache = EmbeddingCache(cache_dir, model_id)
    out: dict[str, EmbeddingVector] = {}
    missing: list[tuple[str, str]] = []
    seen: set[str] = set()
    for utt_id, wav_path in requests:
        if utt_id in seen:
            raise EmbeddingError(f"duplicate utt_id in extraction request: {utt_id!r}")
        seen.add(utt_id)
        cached = cache.get(utt_id, condition_id)
        if cached is not None:
            out[utt_id] = cached
        else:
            missing.append((utt_id, wav_path))

    if missing:
        work = Path(work_dir) if work_dir else cache.root
        request_path = work / f"request_{condition_id.replace(':', '_').replace('/', '_')}.tsv"
        response_path = work / f"response_{condition_id.replace(':', '_').replace('/', '_')}.jsonl"
        with request_path.open("w") as fh:
            for utt_id, wav_path in missing:
                fh.write(f"{utt_id}\t{wav_path}\n")
        if response_path.exists():
            response_path.unlink()
        run = runner or _run_extractor
        run(adapter_command, request_path, response_path, model_id, timeout_s)
        vectors, _metadata = parse_response(response_path, condition_id)
        absent = [utt_id for utt_id, _ in missing if utt_id not in vectors]
        if absent:
            raise AdapterError(
                f"adapter response is missing {len(absent)} of {len(missing)} "
                f"requested utterances; first missing: {absent[0]!r}")
        for utt_id, _ in missing:
            vector = vectors[utt_id]
            cache.put(vector)
            out[utt_id] = vector
    return out


def load_embeddings_file(path: str | Path, condition_id: str = "clean") -> dict[str, EmbeddingVector]:
    """Ingest a response-format JSON-lines embedding file directly."""
    vectors, _ = parse_response(path, condition_id)
    return vectors


def score_trials(trials: TrialList, embeddings: dict[tuple[str, str], EmbeddingVector],
                 model_id: str = "") -> ScoreSet:
    """One cosine score per trial pair, in trial order."""
    scores = np.empty(len(trials.pairs), dtype=np.float64)
    labels = np.empty(len(trials.pairs), dtype=bool)
    for i, pair in enumerate(trials.pairs):
        enroll = embeddings.get((pair.enroll_utt, pair.condition_enroll))
        test = embeddings.get((pair.test_utt, pair.condition_test))
        if enroll is None:
            raise EmbeddingError(
                f"trial {i}: missing embedding for ({pair.enroll_utt!r}, "
                f"{pair.condition_enroll!r})")
        if test is None:
            raise EmbeddingError(
                f"trial {i}: missing embedding for ({pair.test_utt!r}, "
                f"{pair.condition_test!r})")
        scores[i] = cosine(enroll, test)
        labels[i] = pair.label == "target"
    return ScoreSet(scores, labels, model_id=model_id, protocol=trials.protocol,
                    trial_index=np.arange(len(trials.pairs)))
