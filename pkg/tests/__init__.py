"""Tests for perftensor package."""
