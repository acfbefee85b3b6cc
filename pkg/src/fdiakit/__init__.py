"""fdiakit: synthetic grid operating data, false data injection attacks,
and autoencoder-based anomaly detection for DC state estimation."""

__version__ = "0.1.0"
