"""Deterministic neural-network work function: training, evaluation, codecs."""
