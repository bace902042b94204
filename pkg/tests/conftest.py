import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dmad import synth

settings.register_profile("dmad", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("dmad")


@pytest.fixture(scope="session")
def small_dataset(tmp_path_factory):
    """8 subjects, 8 morphs, all four cameras: enough for every pipeline stage."""
    root = tmp_path_factory.mktemp("small_ds")
    return synth.emit_dataset(root, n_subjects=8, n_morphs=8, master_seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_normals(rng, shape):
    v = rng.normal(size=shape + (3,))
    v[..., 2] = np.abs(v[..., 2])
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


# criterion number -> result line, filled by test_acceptance.py
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
