"""Integration tests for the pipeline, CLI and HTTP surface."""
