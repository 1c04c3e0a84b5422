"""Bundled guideline, scenario, and wire-format samples."""
