"""Tensor-network simulation of an emitter coupled to a phonon bath and a feedback loop."""

__version__ = "0.1.0"
