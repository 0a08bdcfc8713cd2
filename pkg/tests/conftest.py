import pytest

from opfuzz.corpus import load_corpus


@pytest.fixture(scope="session")
def corpus():
    return load_corpus()


@pytest.fixture(scope="session")
def manifest(corpus):
    return corpus.manifest
