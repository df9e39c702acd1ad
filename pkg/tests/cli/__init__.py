"""CLI tests for Data Compass."""
