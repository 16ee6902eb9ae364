import json

import numpy as np
import pytest

from svbench.audio import AudioBuffer, write_wav


@pytest.fixture
def make_wav(tmp_path):
    """Write a synthetic WAV under tmp_path and return its path."""

    def _make(name, samples, rate=16000):
        path = tmp_path / name
        path.parent.mkdir(parents=True, exist_ok=True)
        write_wav(AudioBuffer(np.asarray(samples, dtype=np.float64), rate), path)
        return path

    return _make


@pytest.fixture
def write_manifest(tmp_path):
    def _write(name, records):
        path = tmp_path / name
        with path.open("w") as fh:
            for record in records:
                fh.write(json.dumps(record) + "\n")
        return path

    return _write


def tone(freq, duration_s=0.5, rate=16000, amplitude=0.3, phase=0.0):
    t = np.arange(int(duration_s * rate)) / rate
    return amplitude * np.sin(2 * np.pi * freq * t + phase)
