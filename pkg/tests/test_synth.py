import numpy as np
import pytest
from hypothesis import given, settings
from scipy.spatial.transform import Rotation

from c2p.geometry import RelativePose, epipolar_residuals, essential_from_pose
from c2p.synth import (
    SceneConfig,
    generate_scene,
    magnitude_sweep,
    make_rng,
    pose_errors,
    rotation_error_deg,
    translation_error_deg,
)

from conftest import seeds


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_noise_free_scene_satisfies_epipolar_constraint(seed):
    inst = generate_scene(SceneConfig(n=50, seed=seed % 2**32))
    E = essential_from_pose(inst.ground_truth)
    assert np.max(np.abs(epipolar_residuals(E, inst.pairs))) < 1e-12
    assert np.all(inst.depths0 > 0) and np.all(inst.depths1 > 0)
    np.testing.assert_array_equal(inst.pairs.f0, inst.clean_pairs.f0)


def test_geometry_of_points():
    inst = generate_scene(SceneConfig(n=40, seed=3, translation_magnitude=1.3))
    R, t = inst.ground_truth.rotation, 1.3 * inst.ground_truth.translation
    np.testing.assert_allclose(inst.depths0[:, None] * inst.clean_pairs.f0, inst.points, atol=1e-12)
    p1 = inst.depths1[:, None] * inst.clean_pairs.f1
    np.testing.assert_allclose(p1 @ R.T + t, inst.points, atol=1e-12)
    assert np.all((inst.depths0 >= 4.0) & (inst.depths0 <= 8.0))


def test_pure_rotation_scene():
    inst = generate_scene(SceneConfig(n=30, seed=4, translation_magnitude=0.0))
    assert inst.is_pure_rotation
    np.testing.assert_allclose(inst.pairs.f1 @ inst.ground_truth.rotation.T, inst.pairs.f0, atol=1e-12)


def test_noise_stays_in_tangent_bound():
    inst = generate_scene(SceneConfig(n=500, seed=5, noise_px=8.0))
    ang = np.arccos(np.clip(np.einsum("ij,ij->i", inst.pairs.f0, inst.clean_pairs.f0), -1, 1))
    # per-axis uniform in [-sigma, sigma]: at most sigma * sqrt(2) off
    assert ang.max() <= np.sqrt(2) * 8.0 / 800.0 + 1e-12
    assert ang.max() > 0.5 * 8.0 / 800.0
    np.testing.assert_allclose(np.linalg.norm(inst.pairs.f1, axis=1), 1.0, atol=1e-15)


def test_determinism():
    a = generate_scene(SceneConfig(n=20, noise_px=1.0, seed=6))
    b = generate_scene(SceneConfig(n=20, noise_px=1.0, seed=6))
    c = generate_scene(SceneConfig(n=20, noise_px=1.0, seed=7))
    np.testing.assert_array_equal(a.pairs.f0, b.pairs.f0)
    np.testing.assert_array_equal(a.ground_truth.rotation, b.ground_truth.rotation)
    assert not np.array_equal(a.pairs.f0, c.pairs.f0)


def test_make_rng_keys():
    assert make_rng(1, 2).uniform() == make_rng(1, 2).uniform()
    assert make_rng(1, 2).uniform() != make_rng(2, 1).uniform()


def test_default_magnitude_range_and_rotation_bound():
    for k in range(200):
        inst = generate_scene(SceneConfig(n=6), make_rng(8, k))
        assert 0 < inst.translation_magnitude <= 2.0
        angles = Rotation.from_matrix(inst.ground_truth.rotation).as_euler("ZYX")
        assert np.all(np.abs(angles) <= 0.5 + 1e-12)
    inst = generate_scene(SceneConfig(n=6, translation_magnitude=(0.5, 0.6)))
    assert 0.5 <= inst.translation_magnitude <= 0.6


@pytest.mark.parametrize(
    "kw",
    [
        {"n": 5},
        {"n": 10, "noise_px": -1.0},
        {"n": 10, "focal_px": 0.0},
        {"n": 10, "translation_magnitude": -0.1},
        {"n": 10, "rotation_bound_rad": 0.0},
        {"n": 10, "depth_range": (5.0, 4.0)},
        {"n": 10, "seed": -1},
    ],
)
def test_config_validation(kw):
    with pytest.raises(ValueError):
        SceneConfig(**kw)


def test_error_metric_examples():
    gt = RelativePose(np.eye(3), [0.0, 0.0, 1.0])
    assert pose_errors(gt, gt) == (0.0, 0.0)
    Rz = Rotation.from_euler("z", 10, degrees=True).as_matrix()
    rot, trans = pose_errors(gt, RelativePose(Rz, [0.0, 0.0, 1.0]))
    assert abs(rot - 10.0) < 1e-9 and trans == 0.0
    assert abs(translation_error_deg([0, 0, 1.0], [0, 0, -1.0]) - 180.0) < 1e-12
    assert abs(rotation_error_deg(np.eye(3), np.diag([-1.0, -1.0, 1.0])) - 180.0) < 1e-12


def test_error_metric_small_angles_keep_precision():
    for a in (1e-6, 1e-9, 1e-12):
        R = Rotation.from_rotvec([0, a, 0]).as_matrix()
        assert abs(rotation_error_deg(np.eye(3), R) - np.degrees(a)) < 1e-6 * np.degrees(a)


def test_magnitude_sweep():
    out = list(magnitude_sweep([0.0, 0.5], n=10, noise_px=0.5, trials=3, seed=9))
    assert [m for m, _ in out] == [0.0] * 3 + [0.5] * 3
    assert all(inst.translation_magnitude == m for m, inst in out)
    again = list(magnitude_sweep([0.0, 0.5], n=10, noise_px=0.5, trials=3, seed=9))
    np.testing.assert_array_equal(out[4][1].pairs.f1, again[4][1].pairs.f1)
