"""Core engine, models and services for VoMix."""
