"""Adversarial attacks against an abstract verification score oracle.

Two attacks are provided: a single-step white-box gradient-sign perturbation
(needs the oracle's gradient) and a black-box score-query attack that
estimates the gradient with antithetic Gaussian probes (natural evolution
strategies) and takes projected sign steps.  Both operate directly on the
cosine score: verification is a score-threshold decision, so the score is
the natural loss.

A built-in differentiable "toy" scorer (framed mel-style filterbank
energies, smooth log, fixed seeded projection, cosine) makes desk-scale
end-to-end verification of both attacks possible without any external
model.  Attacked audio is meant to be exported through the standard 16-bit
WAV path so quantization survival is part of any downstream result.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import AudioBuffer
from .errors import AttackError
from .metrics import eer_threshold  # noqa: F401  (re-exported: tau estimation lives here)
from .rand import derive_rng

EVADE = "evade"
IMPERSONATE = "impersonate"


@dataclass
class AttackConfig:
    """Attack hyperparameters; defaults are desk-scale conventions."""

    epsilon: float = 0.002
    max_iters: int = 200
    nes_samples: int = 50
    sigma: float = 0.001
    step_size: float | None = None  # defaults to epsilon / 10
    threshold: float = 0.5
    margin: float = 0.0
    seed: int = 0
    mode: str = EVADE

    def __post_init__(self) -> None:
        if self.epsilon < 0:
            raise AttackError(f"epsilon must be >= 0, got {self.epsilon}")
        if self.nes_samples < 2 or self.nes_samples % 2:
            raise AttackError(f"nes_samples must be even and >= 2, got {self.nes_samples}")
        if self.sigma <= 0:
            raise AttackError(f"sigma must be positive, got {self.sigma}")
        if self.step_size is None:
            self.step_size = self.epsilon / 10.0
        if self.step_size < 0:
            raise AttackError(f"step_size must be >= 0, got {self.step_size}")
        if self.max_iters < 0:
            raise AttackError(f"max_iters must be >= 0, got {self.max_iters}")
        if self.mode not in (EVADE, IMPERSONATE):
            raise AttackError(f"mode must be {EVADE!r} or {IMPERSONATE!r}, got {self.mode!r}")


@dataclass(frozen=True)
class AttackResult:
    adv_waveform: AudioBuffer
    success: bool
    queries_used: int
    final_score: float
    linf_norm: float
    initial_score: float = 0.0


class ScoreOracle:
    """Scoring interface the attacks drive.

    score() must be deterministic for fixed inputs; gradient() is optional
    (white-box access).  query_count counts score() calls.
    """

    supports_gradient = False

    def __init__(self) -> None:
        self.query_count = 0
        self.gradient_count = 0

    def score(self, waveform: np.ndarray, reference: np.ndarray) -> float:
        raise NotImplementedError

    def gradient(self, waveform: np.ndarray, reference: np.ndarray) -> np.ndarray:
        raise AttackError("this oracle does not expose gradients")


def _passed(score: float, config: AttackConfig) -> bool:
    if config.mode == IMPERSONATE:
        return score >= config.threshold + config.margin
    return score < config.threshold - config.margin


def fgsm(waveform: AudioBuffer, reference: np.ndarray, oracle: ScoreOracle,
         config: AttackConfig) -> AttackResult:
    """One signed-gradient step of size epsilon inside [-1, 1].

    evade pushes the score down (gradient sign negated); impersonate pushes
    it up toward the reference.  sign(0) is 0, so zero-gradient components
    are left untouched.
    """
    if not oracle.supports_gradient:
        raise AttackError("white-box attack needs a gradient-capable oracle "
                          "(score-only adapter given)")
    x = waveform.samples
    initial = oracle.score(x, reference)
    grad = oracle.gradient(x, reference)
    if grad.shape != x.shape:
        raise AttackError(f"oracle gradient has shape {grad.shape}, waveform {x.shape}")
    direction = grad if config.mode == IMPERSONATE else -grad
    adv = np.clip(x + config.epsilon * np.sign(direction), -1.0, 1.0)
    final = oracle.score(adv, reference)
    return AttackResult(
        adv_waveform=waveform.with_samples(adv),
        success=_passed(final, config),
        queries_used=2,
        final_score=final,
        linf_norm=float(np.abs(adv - x).max(initial=0.0)),
        initial_score=initial,
    )


def fakebob(waveform: AudioBuffer, reference: np.ndarray, oracle: ScoreOracle,
            config: AttackConfig) -> AttackResult:
    """Black-box iterative attack with NES gradient estimation.

    Per iteration: nes_samples antithetic probes estimate the gradient, one
    signed step of step_size is taken, the iterate is projected back onto
    the L-inf epsilon ball and [-1, 1], and one success-check query decides
    stopping.  Total queries: 1 + iterations * (nes_samples + 1).
    """
    rng = derive_rng(config.seed, "fakebob")
    x0 = waveform.samples.copy()
    x = x0.copy()
    start_queries = oracle.query_count

    score = oracle.score(x, reference)
    initial = score
    iterations = 0
    if not _passed(score, config):
        for _ in range(config.max_iters):
            iterations += 1
            half = config.nes_samples // 2
            grad_est = np.zeros_like(x)
            for _k in range(half):
                u = rng.standard_normal(x.size)
                s_plus = oracle.score(x + config.sigma * u, reference)
                s_minus = oracle.score(x - config.sigma * u, reference)
                grad_est += (s_plus - s_minus) * u
            grad_est /= config.nes_samples * config.sigma
            direction = grad_est if config.mode == IMPERSONATE else -grad_est
            x = x + config.step_size * np.sign(direction)
            x = np.clip(x, x0 - config.epsilon, x0 + config.epsilon)
            x = np.clip(x, -1.0, 1.0)
            assert np.abs(x - x0).max(initial=0.0) <= config.epsilon + 1e-12
            score = oracle.score(x, reference)
            if _passed(score, config):
                break

    return AttackResult(
        adv_waveform=waveform.with_samples(x),
        success=_passed(score, config),
        queries_used=oracle.query_count - start_queries,
        final_score=score,
        linf_norm=float(np.abs(x - x0).max(initial=0.0)),
        initial_score=initial,
    )


# --- built-in differentiable toy scorer --------------------------------------

TOY_SAMPLE_RATE = 16000
TOY_FRAME = 400       # 25 ms at 16 kHz
TOY_HOP = 160         # 10 ms
TOY_N_MELS = 24
TOY_DIM = 32
TOY_LOG_FLOOR = 1e-8
TOY_DC_BIAS = 0.005   # injected before the spectrum: makes the embedding
                      # polarity-sensitive (the filterbank path is not even)
_TOY_PROJECTION_SEED = 0x5EEDED


def _mel_scale(f: np.ndarray) -> np.ndarray:
    return 2595.0 * np.log10(1.0 + f / 700.0)


def _mel_inverse(m: np.ndarray) -> np.ndarray:
    return 700.0 * (10.0 ** (m / 2595.0) - 1.0)


def _toy_filterbank() -> np.ndarray:
    freqs = np.fft.rfftfreq(TOY_FRAME, d=1.0 / TOY_SAMPLE_RATE)
    points = _mel_inverse(np.linspace(0.0, _mel_scale(np.array(TOY_SAMPLE_RATE / 2.0)),
                                      TOY_N_MELS + 2))
    bank = np.zeros((TOY_N_MELS, freqs.size))
    for m in range(TOY_N_MELS):
        lo, mid, hi = points[m], points[m + 1], points[m + 2]
        rising = (freqs - lo) / max(mid - lo, 1e-9)
        falling = (hi - freqs) / max(hi - mid, 1e-9)
        bank[m] = np.clip(np.minimum(rising, falling), 0.0, None)
    bank[0, 0] = 0.5  # couple the DC bin into the lowest band
    return bank


class ToyScorer(ScoreOracle):
    """Deterministic differentiable embedding scorer for desk-scale runs.

    Pipeline per 25 ms / 10 ms frame: add a small DC bias, power spectrum,
    mel-style triangular filterbank, log(E + floor), fixed seeded linear
    projection to 32 dims; frames averaged; cosine against the reference.
    The analytic gradient follows the same chain in reverse.
    """

    supports_gradient = True

    def __init__(self, projection_seed: int = _TOY_PROJECTION_SEED) -> None:
        super().__init__()
        self.filterbank = _toy_filterbank()
        rng = derive_rng(projection_seed, "toy-projection")
        self.projection = rng.standard_normal((TOY_DIM, TOY_N_MELS)) / np.sqrt(TOY_N_MELS)

    # -- forward -----------------------------------------------------------

    def _frames(self, x: np.ndarray) -> np.ndarray:
        if x.size < TOY_FRAME:
            x = np.pad(x, (0, TOY_FRAME - x.size))
        n = 1 + (x.size - TOY_FRAME) // TOY_HOP
        idx = np.arange(TOY_FRAME)[None, :] + TOY_HOP * np.arange(n)[:, None]
        return x[idx]

    def _frame_features(self, x: np.ndarray):
        frames = self._frames(np.asarray(x, dtype=np.float64)) + TOY_DC_BIAS
        spectra = np.fft.rfft(frames, axis=1)
        power = spectra.real**2 + spectra.imag**2
        energies = power @ self.filterbank.T
        logs = np.log(energies + TOY_LOG_FLOOR)
        return frames, spectra, energies, logs

    def embed(self, x: np.ndarray) -> np.ndarray:
        _, _, _, logs = self._frame_features(x)
        return (logs @ self.projection.T).mean(axis=0)

    def score(self, waveform: np.ndarray, reference: np.ndarray) -> float:
        self.query_count += 1
        v = self.embed(waveform)
        return float(v @ reference / (np.linalg.norm(v) * np.linalg.norm(reference)))

    # -- backward ----------------------------------------------------------

    def gradient(self, waveform: np.ndarray, reference: np.ndarray) -> np.ndarray:
        """d score / d waveform by the chain rule (exact, not estimated)."""
        self.gradient_count += 1
        x = np.asarray(waveform, dtype=np.float64)
        frames, spectra, energies, logs = self._frame_features(x)
        n_frames = frames.shape[0]

        v = (logs @ self.projection.T).mean(axis=0)
        r = np.asarray(reference, dtype=np.float64)
        nv, nr = np.linalg.norm(v), np.linalg.norm(r)
        d_v = r / (nv * nr) - v * (v @ r) / (nv**3 * nr)

        d_logs = np.broadcast_to(d_v @ self.projection / n_frames,
                                 (n_frames, TOY_N_MELS))
        d_energies = d_logs / (energies + TOY_LOG_FLOOR)
        d_power = d_energies @ self.filterbank  # (frames, bins)

        # Adjoint of the half-spectrum power: build full-spectrum weights
        # (upper bins zero) and push through the inverse transform.
        full = np.zeros((n_frames, TOY_FRAME), dtype=complex)
        full[:, : d_power.shape[1]] = d_power * spectra
        d_frames = 2.0 * TOY_FRAME * np.real(np.fft.ifft(full, axis=1))

        grad = np.zeros(max(x.size, TOY_FRAME), dtype=np.float64)
        for i in range(n_frames):
            start = i * TOY_HOP
            grad[start:start + TOY_FRAME] += d_frames[i]
        return grad[: x.size]


def toy_scorer() -> ToyScorer:
    return ToyScorer()
