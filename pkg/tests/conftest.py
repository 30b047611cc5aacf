"""Shared test fixtures and configuration."""

import pytest

from tests.helpers import create_test_config, create_test_tree


@pytest.fixture
def test_config():
    """The small book on a three-stage binary tree."""
    return create_test_config()


@pytest.fixture
def test_tree(test_config):
    return create_test_tree(test_config)


@pytest.fixture(autouse=True)
def isolated_output(tmp_path, monkeypatch):
    """Keep service output and env lookups inside the test's temp directory."""
    monkeypatch.setenv("ALM_OUTPUT_DIR", str(tmp_path / "runs"))
    monkeypatch.chdir(tmp_path)
