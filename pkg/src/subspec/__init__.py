"""Sub-band log-mel features, CRNN branches and score-level fusion for
environmental sound classification."""

__version__ = "0.1.0"
