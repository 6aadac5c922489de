"""Bundled scenario configurations (JSON)."""
