"""Scripted end-to-end case walks for the bundled guideline."""
