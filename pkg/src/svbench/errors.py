"""Exception types shared across the harness."""


class BenchError(Exception):
    """Base class for all harness errors."""


class AudioError(BenchError):
    """Invalid audio data or unsupported audio file."""


class CodecError(BenchError):
    """Codec simulation failure (bad spec or adapter process failure)."""


class DegradeError(BenchError):
    """Noise/RIR degradation failure (bad spec, silent signal, empty pool)."""


class SilentSignalError(DegradeError):
    """Signal has zero RMS; SNR mixing is undefined and the trial is excluded."""


class ManifestError(BenchError):
    """Manifest parse or validation failure."""


class ProtocolError(BenchError):
    """Trial protocol cannot be constructed from the given records."""


class EmbeddingError(BenchError):
    """Embedding extraction, validation, or cache failure."""


class AdapterError(BenchError):
    """External adapter process failed (exit code, timeout, malformed output)."""


class MetricsError(BenchError):
    """Invalid score set or metric parameters."""


class StatsError(BenchError):
    """Group statistics failure (degenerate input, mismatched model orders)."""


class DegenerateDifferenceError(StatsError):
    """Paired differences have zero spread; the t statistic is undefined."""


class AttackError(BenchError):
    """Adversarial attack configuration or capability error."""


class ConfigError(BenchError):
    """Benchmark configuration is invalid or incomplete."""
