"""Model Zoo continual learner: a growing ensemble of small multi-head networks."""

__version__ = "0.1.0"
