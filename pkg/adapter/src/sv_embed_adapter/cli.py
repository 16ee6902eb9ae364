"""Adapter entry point: serve one request file.

    sv-embed-adapter REQUEST RESPONSE MODEL_ID

Exit 0 with a complete response on success; nonzero with a single
machine-readable JSON error line on stderr otherwise.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

from .audio import AudioReadError, read_wav_mono, resample_to
from .models import ModelLoadError, load_model


class RequestError(Exception):
    pass


def parse_request(path: str | Path) -> list[tuple[str, str]]:
    """Validated (utt_id, wav_path) pairs; ids must be unique."""
    path = Path(path)
    if not path.exists():
        raise RequestError(f"request file not found: {path}")
    entries: list[tuple[str, str]] = []
    seen: set[str] = set()
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2 or not parts[0]:
            raise RequestError(f"line {lineno}: expected 'utt_id<TAB>wav_path'")
        utt_id, wav_path = parts
        if utt_id in seen:
            raise RequestError(f"line {lineno}: duplicate utt_id {utt_id!r}")
        seen.add(utt_id)
        entries.append((utt_id, wav_path))
    return entries


def serve(request_path: str, response_path: str, model_id: str) -> int:
    entries = parse_request(request_path)
    model = load_model(model_id)
    lines = []
    dim = None
    for utt_id, wav_path in entries:
        samples, rate = read_wav_mono(wav_path)
        samples = resample_to(samples, rate, model.sample_rate)
        embedding = model.embed(samples)
        if dim is None:
            dim = embedding.size
        elif embedding.size != dim:
            raise ModelLoadError(
                f"model {model_id!r} changed dimension: {embedding.size} vs {dim}")
        # float32 -> float64 is exact, and json renders the shortest
        # round-tripping decimal, so the 32-bit values survive the protocol.
        lines.append(json.dumps({
            "utt_id": utt_id,
            "embedding": [float(v) for v in embedding],
        }))
    header = json.dumps({"adapter": "sv-embed-adapter", "model": model_id,
                         "checkpoint": model.checkpoint, "dim": dim})
    Path(response_path).write_text("\n".join([header] + lines) + ("\n" if lines else "\n"))
    return 0


def _fail(kind: str, message: str) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return 2


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 3:
        return _fail("usage", "sv-embed-adapter REQUEST RESPONSE MODEL_ID")
    request_path, response_path, model_id = argv
    try:
        return serve(request_path, response_path, model_id)
    except RequestError as exc:
        return _fail("bad-request", str(exc))
    except ModelLoadError as exc:
        return _fail("model-unavailable", str(exc))
    except AudioReadError as exc:
        return _fail("bad-audio", str(exc))


if __name__ == "__main__":
    raise SystemExit(main())
