"""Bundled case files."""
