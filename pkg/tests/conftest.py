import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

import helpers  # noqa: E402


@pytest.fixture(scope="session")
def fixture_dir(tmp_path_factory):
    """All nine CLI problem fixtures, written once per session."""
    root = tmp_path_factory.mktemp("fixtures")
    return root, helpers.build_fixtures(root)
