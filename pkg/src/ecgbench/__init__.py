"""ecgbench: benchmarking and evaluation toolkit for multi-label ECG
classification.

Submodules: records (domain types, task construction), ingest (file
parsers), metrics, bootstrap (confidence intervals), hierarchy (upward
propagation), analysis (stratification, uncertainty), splits, windows,
wavelets, shallow (baseline network), baseline (naive + wavelet pipelines),
cli.
"""

__version__ = "0.1.0"
