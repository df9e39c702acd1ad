"""Command-line interface for VoMix."""
