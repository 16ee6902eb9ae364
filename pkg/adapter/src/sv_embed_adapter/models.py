"""Embedding model wrappers and the registry.

Every entry maps a model id to a loader returning an object with:

    sample_rate: int           expected input rate
    checkpoint: str            identifier recorded in the response header
    embed(samples) -> ndarray  one embedding per waveform

"specstats" is checkpoint-free (log-mel statistics) and always available,
so the protocol is testable without downloads.  "hf:<name>" loads a
transformers checkpoint from the local cache and mean-pools its last hidden
state; "pt:<path>" runs a TorchScript module.  Adding a model means adding
a registry entry here, nothing else.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np


class ModelLoadError(Exception):
    pass


class SpectralStatsModel:
    """Deterministic DSP embedding: per-band log-energy mean and spread."""

    sample_rate = 16000
    checkpoint = "builtin-specstats-v1"

    N_FFT = 512
    HOP = 160
    N_BANDS = 30

    def __init__(self) -> None:
        freqs = np.fft.rfftfreq(self.N_FFT, d=1.0 / self.sample_rate)
        mel = 2595.0 * np.log10(1.0 + freqs / 700.0)
        edges = np.linspace(0.0, mel[-1], self.N_BANDS + 2)
        self.bank = np.zeros((self.N_BANDS, freqs.size))
        for m in range(self.N_BANDS):
            lo, mid, hi = edges[m], edges[m + 1], edges[m + 2]
            self.bank[m] = np.clip(
                np.minimum((mel - lo) / max(mid - lo, 1e-9),
                           (hi - mel) / max(hi - mid, 1e-9)), 0.0, None)

    def embed(self, samples: np.ndarray) -> np.ndarray:
        x = np.asarray(samples, dtype=np.float64)
        if x.size < self.N_FFT:
            x = np.pad(x, (0, self.N_FFT - x.size))
        n_frames = 1 + (x.size - self.N_FFT) // self.HOP
        idx = np.arange(self.N_FFT)[None, :] + self.HOP * np.arange(n_frames)[:, None]
        frames = x[idx] * np.hanning(self.N_FFT)
        power = np.abs(np.fft.rfft(frames, axis=1)) ** 2
        logs = np.log(power @ self.bank.T + 1e-10)
        return np.concatenate([logs.mean(axis=0), logs.std(axis=0)]).astype(np.float32)


class HuggingFaceModel:
    """Mean-pooled last hidden state of a transformers audio encoder."""

    sample_rate = 16000

    def __init__(self, name: str):
        try:
            import torch
            from transformers import AutoModel
        except ImportError as exc:
            raise ModelLoadError(f"transformers/torch not installed: {exc}") from exc
        try:
            self._torch = torch
            self.model = AutoModel.from_pretrained(name, local_files_only=True)
        except Exception as exc:
            raise ModelLoadError(f"checkpoint {name!r} not available locally: {exc}") from exc
        self.model.eval()
        self.checkpoint = f"hf:{name}"

    def embed(self, samples: np.ndarray) -> np.ndarray:
        torch = self._torch
        with torch.inference_mode():
            wave = torch.as_tensor(samples, dtype=torch.float32).unsqueeze(0)
            hidden = self.model(wave).last_hidden_state
            return hidden.mean(dim=1).squeeze(0).numpy().astype(np.float32)


class TorchScriptModel:
    """A scripted module mapping a float32 waveform tensor to an embedding."""

    sample_rate = 16000

    def __init__(self, path: str):
        try:
            import torch
        except ImportError as exc:
            raise ModelLoadError(f"torch not installed: {exc}") from exc
        ckpt = Path(path)
        if not ckpt.exists():
            raise ModelLoadError(f"checkpoint file not found: {ckpt}")
        self._torch = torch
        self.model = torch.jit.load(str(ckpt), map_location="cpu")
        self.model.eval()
        digest = hashlib.sha256(ckpt.read_bytes()).hexdigest()[:12]
        self.checkpoint = f"pt:{ckpt.name}@{digest}"

    def embed(self, samples: np.ndarray) -> np.ndarray:
        torch = self._torch
        with torch.inference_mode():
            wave = torch.as_tensor(samples, dtype=torch.float32)
            return self.model(wave).detach().numpy().reshape(-1).astype(np.float32)


def load_model(model_id: str):
    if model_id == "specstats":
        return SpectralStatsModel()
    if model_id.startswith("hf:"):
        return HuggingFaceModel(model_id[3:])
    if model_id.startswith("pt:"):
        return TorchScriptModel(model_id[3:])
    raise ModelLoadError(
        f"unknown model id {model_id!r}; expected 'specstats', 'hf:<name>', or 'pt:<path>'")
