"""svbench: a robustness benchmark harness for speaker verification systems.

The harness simulates capture and channel degradations (codecs, noise,
reverberation), builds stratified trial protocols, scores trials from
externally produced speaker embeddings, and reports EER / minDCF / AUC
together with paired significance tests across demographic groups.
"""

__version__ = "0.1.0"
