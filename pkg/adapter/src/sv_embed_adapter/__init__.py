"""Speaker-embedding extractor adapter.

Speaks the harness file protocol: a request file of "utt_id<TAB>wav_path"
lines in, a JSON-lines response of {"utt_id", "embedding"} objects out,
one metadata header line first.  Models live in a registry; adding one
never touches the protocol code.
"""

__version__ = "0.1.0"
