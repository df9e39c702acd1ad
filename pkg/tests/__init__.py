"""Tests for Data Compass."""
