"""Reference embedding adapter backed by the built-in toy scorer.

Implements the extractor adapter file protocol (request: "utt_id<TAB>path"
lines; response: JSON-lines with one {"utt_id", "embedding"} object per
utterance, preceded by a metadata line) so the extract stage can run end to
end without any external model.  Different model ids get different fixed
projections, giving genuinely distinct "models" for multi-model reports.

    python3 -m svbench.tools.embed_adapter REQUEST RESPONSE MODEL_ID
"""

from __future__ import annotations

import json
import sys
import zlib
from pathlib import Path

from ..attacks import ToyScorer
from ..audio import read_wav


def serve(request_path: str, response_path: str, model_id: str) -> int:
    request = Path(request_path)
    if not request.exists():
        print(f"error: request file not found: {request}", file=sys.stderr)
        return 2
    scorer = ToyScorer(projection_seed=zlib.crc32(model_id.encode()))
    lines = [json.dumps({"adapter": "svbench-toy", "model": model_id})]
    seen = set()
    for lineno, line in enumerate(request.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            print(f"error: line {lineno}: expected utt_id<TAB>path", file=sys.stderr)
            return 2
        utt_id, wav_path = parts
        if utt_id in seen:
            print(f"error: duplicate utt_id {utt_id!r} in request", file=sys.stderr)
            return 2
        seen.add(utt_id)
        buffer = read_wav(wav_path)
        embedding = scorer.embed(buffer.samples)
        lines.append(json.dumps({"utt_id": utt_id,
                                 "embedding": [round(float(v), 8) for v in embedding]}))
    Path(response_path).write_text("\n".join(lines) + "\n")
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    if len(argv) != 3:
        print("usage: python3 -m svbench.tools.embed_adapter REQUEST RESPONSE MODEL_ID",
              file=sys.stderr)
        return 2
    try:
        return serve(*argv)
    except Exception as exc:  # adapter contract: nonzero exit + diagnostic line
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
