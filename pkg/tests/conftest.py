import logging
from pathlib import Path

import numpy as np
import pytest
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from c2p.geometry import RelativePose, skew
from c2p.problem import C2P_LAYOUT, average_coefficients, lift_ground_truth
from c2p.synth import SceneConfig, generate_scene

DATA = Path(__file__).parent / "data"
FIXTURE = DATA / "noise_free_20.txt"


@pytest.fixture(autouse=True)
def _quiet_solver(caplog):
    caplog.set_level(logging.ERROR, logger="c2p")


def random_rotation(rng) -> np.ndarray:
    return Rotation.random(random_state=rng).as_matrix()


def random_unit(rng) -> np.ndarray:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def random_pose(rng) -> RelativePose:
    return RelativePose(random_rotation(rng), random_unit(rng))


def scene(n=30, noise=0.0, seed=0, magnitude=1.0, **kw):
    return generate_scene(SceneConfig(n=n, noise_px=noise, seed=seed, translation_magnitude=magnitude, **kw))


def lifted_truth(inst, layout=C2P_LAYOUT):
    gt = inst.ground_truth
    E = skew(gt.translation) @ gt.rotation
    return lift_ground_truth(layout, E, gt.translation, gt.q, average_coefficients(inst.clean_pairs))


seeds = st.integers(min_value=0, max_value=2**32 - 1)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
