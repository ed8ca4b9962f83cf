"""deepkm - row-wise k-means parameter sharing for CNNs with spectrally relaxed retraining."""

__version__ = "0.1.0"
