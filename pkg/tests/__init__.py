"""Tests for bop-forge."""
