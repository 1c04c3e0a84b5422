"""Shared fixtures: the bundled pathway document and ready-made runtimes."""

from __future__ import annotations

from importlib import resources

import pytest

from careflow import document
from careflow.runtime import virtual_runtime


@pytest.fixture(scope="session")
def chest_pain_text() -> str:
    return (
        resources.files("careflow.fixtures")
        .joinpath("chest_pain.json")
        .read_text()
    )


@pytest.fixture(scope="session")
def chest_pain_definition(chest_pain_text):
    return document.parse(chest_pain_text)


@pytest.fixture
def runtime(chest_pain_text):
    """A virtual-clock runtime with the chest-pain pathway deployed."""
    rt = virtual_runtime()
    rt.deploy_document(chest_pain_text)
    yield rt
    rt.close()
