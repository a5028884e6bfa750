"""Deterministic negative-sample generation, Haar face detection and score
post-processing for face-forgery classifier training."""

__version__ = "0.1.0"
