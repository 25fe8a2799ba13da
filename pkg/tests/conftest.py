import sys

import numpy as np
import pytest

from graspable.preprocess import fit_regression_plane, make_frame_transform
from graspable.synth import generate_scene, hemisphere_scene


@pytest.fixture(scope="session")
def hemi_spec():
    return hemisphere_scene()


@pytest.fixture(scope="session")
def hemi_cloud(hemi_spec):
    return generate_scene(hemi_spec)


@pytest.fixture(scope="session")
def hemi_frame(hemi_cloud):
    return make_frame_transform(fit_regression_plane(hemi_cloud))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
