import pytest
from hypothesis import HealthCheck, settings

from picsel.synth import generate_corpus

settings.register_profile(
    "suite",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """60-image synthetic corpus for fast pipeline-level tests."""
    root = tmp_path_factory.mktemp("corpus-small")
    return generate_corpus(root, n_images=60, seed=11)


@pytest.fixture(scope="session")
def big_corpus(tmp_path_factory):
    """500-image synthetic corpus shared by the end-to-end checks."""
    root = tmp_path_factory.mktemp("corpus-big")
    return generate_corpus(root, n_images=500, seed=7)
