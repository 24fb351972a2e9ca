"""Synthetic two-view scenes with a spherical-camera noise model."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy.spatial.transform import Rotation

from c2p.geometry import Correspondences, RelativePose

DEFAULT_FOCAL_PX = 800.0
DEFAULT_ROTATION_BOUND = 0.5
DEFAULT_DEPTH_RANGE = (4.0, 8.0)
MAX_TRANSLATION = 2.0
EULER_SEQUENCE = "ZYX"


def make_rng(*keys: int) -> np.random.Generator:
    """Counter-based generator keyed by a tuple of nonnegative integers."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(k) for k in keys])))


@dataclass(frozen=True)
class SceneConfig:
    """Parameters of one synthetic scene.

    ``translation_magnitude`` may be a number, a ``(low, high)`` range sampled
    uniformly, or ``None`` for the default range ``(0, 2]``.
    """

    n: int
    noise_px: float = 0.0
    focal_px: float = DEFAULT_FOCAL_PX
    translation_magnitude: Union[None, float, Tuple[float, float]] = None
    rotation_bound_rad: float = DEFAULT_ROTATION_BOUND
    depth_range: Tuple[float, float] = DEFAULT_DEPTH_RANGE
    seed: int = 0

    def __post_init__(self):
        if self.n < 6:
            raise ValueError("n must be at least 6")
        if not self.noise_px >= 0:
            raise ValueError("noise_px must be nonnegative")
        if not self.focal_px > 0:
            raise ValueError("focal_px must be positive")
        lo, hi = self.depth_range
        if not 0 < lo < hi:
            raise ValueError("depth_range must satisfy 0 < min < max")
        if not 0 < self.rotation_bound_rad < np.pi:
            raise ValueError("rotation_bound_rad must lie in (0, pi)")
        m = self.translation_magnitude
        if m is not None and np.ndim(m) == 0 and not m >= 0:
            raise ValueError("translation_magnitude must be nonnegative")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class SyntheticInstance:
    config: SceneConfig
    ground_truth: RelativePose
    translation_magnitude: float
    pairs: Correspondences
    clean_pairs: Correspondences
    points: np.ndarray
    depths0: np.ndarray
    depths1: np.ndarray

    @property
    def is_pure_rotation(self) -> bool:
        return self.translation_magnitude == 0.0


def _tangent_noise(rng, f: np.ndarray, sigma: float) -> np.ndarray:
    """Per-axis uniform perturbation in each bearing's tangent plane."""
    if sigma == 0:
        return f.copy()
    # any vector not parallel to f spans the plane with it
    helper = np.where(np.abs(f[:, [0]]) < 0.9, [[1.0, 0.0, 0.0]], [[0.0, 1.0, 0.0]])
    b1 = np.cross(f, helper)
    b1 /= np.linalg.norm(b1, axis=1, keepdims=True)
    b2 = np.cross(f, b1)
    uv = rng.uniform(-sigma, sigma, size=(len(f), 2))
    g = f + uv[:, [0]] * b1 + uv[:, [1]] * b2
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _magnitude(rng, spec) -> float:
    if spec is None:
        # uniform on (0, MAX]
        return float(MAX_TRANSLATION * (1.0 - rng.uniform()))
    if np.ndim(spec) == 0:
        return float(spec)
    lo, hi = spec
    return float(rng.uniform(lo, hi))


def generate_scene(config: SceneConfig, rng: Optional[np.random.Generator] = None) -> SyntheticInstance:
    """Sample a scene; camera 0 sits at the origin with identity orientation.

    Points are uniform in a spherical shell about the origin. Camera 1 has
    pose ``(R, t)`` with ``p0 = R p1 + t``.
    """
    rng = rng if rng is not None else make_rng(config.seed)
    b = config.rotation_bound_rad
    R = Rotation.from_euler(EULER_SEQUENCE, rng.uniform(-b, b, size=3)).as_matrix()
    direction = rng.normal(size=3)
    direction /= np.linalg.norm(direction)
    mag = _magnitude(rng, config.translation_magnitude)
    t = mag * direction

    lo, hi = config.depth_range
    radius = np.cbrt(rng.uniform(lo**3, hi**3, size=config.n))
    dirs = rng.normal(size=(config.n, 3))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    p0 = dirs * radius[:, None]
    p1 = (p0 - t) @ R  # R' (p0 - t), row-wise

    d0 = np.linalg.norm(p0, axis=1)
    d1 = np.linalg.norm(p1, axis=1)
    f0, f1 = p0 / d0[:, None], p1 / d1[:, None]
    sigma = config.noise_px / config.focal_px
    clean = Correspondences(f0, f1)
    noisy = Correspondences(_tangent_noise(rng, f0, sigma), _tangent_noise(rng, f1, sigma))
    return SyntheticInstance(
        config=config,
        ground_truth=RelativePose(R, direction),
        translation_magnitude=mag,
        pairs=noisy,
        clean_pairs=clean,
        points=p0,
        depths0=d0,
        depths1=d1,
    )


def rotation_error_deg(R_true, R_est) -> float:
    """Geodesic angle ``arccos((trace(R_true' R_est) - 1) / 2)`` in degrees.

    Evaluated as ``atan2(sin, cos)`` so that angles below 1e-6 deg keep
    their precision; arccos alone bottoms out near 1e-6 deg.
    """
    D = np.asarray(R_true, dtype=float).T @ np.asarray(R_est, dtype=float)
    c = 0.5 * (np.trace(D) - 1.0)
    s = 0.5 * np.linalg.norm([D[2, 1] - D[1, 2], D[0, 2] - D[2, 0], D[1, 0] - D[0, 1]])
    return float(np.degrees(np.arctan2(s, c)))


def translation_error_deg(t_true, t_est) -> float:
    """Angle between translations; the sign is not folded."""
    a = np.asarray(t_true, dtype=float)
    b = np.asarray(t_est, dtype=float)
    return float(np.degrees(np.arctan2(np.linalg.norm(np.cross(a, b)), a @ b)))


def pose_errors(gt: RelativePose, est: RelativePose) -> Tuple[float, float]:
    """Rotation and translation errors in degrees."""
    return (
        rotation_error_deg(gt.rotation, est.rotation),
        translation_error_deg(gt.translation, est.translation),
    )


def magnitude_sweep(magnitudes: Sequence[float], n: int, noise_px: float, trials: int, seed: int = 0):
    """Yield ``(magnitude, instance)`` for a pure-rotation style sweep."""
    for g, mag in enumerate(magnitudes):
        for k in range(trials):
            cfg = SceneConfig(n=n, noise_px=noise_px, translation_magnitude=mag, seed=seed)
            yield mag, generate_scene(cfg, make_rng(seed, g, k))
