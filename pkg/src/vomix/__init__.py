"""VoMix - Vision Transformer engine with vote-and-mix token reduction."""

__version__ = "0.1.0"
