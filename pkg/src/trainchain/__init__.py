"""Blockchain consensus whose mining work is neural-network training.

Miners earn blocks by training a small deterministic model under a two-phase
commit-reveal protocol; full nodes accept the highest-accuracy valid model
and can re-verify the whole chain by retraining it bit for bit.
"""

__version__ = "0.1.0"
