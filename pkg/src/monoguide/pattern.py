"""Frozen 256-pair intensity-comparison sampling pattern.

Each row is (ax, ay, bx, by): two pixel offsets inside a 31x31 patch.
Descriptor bit i is 1 when intensity at the (rotated) point a_i is
strictly below the intensity at b_i.

The table was produced once by :func:`generate_pattern` below, from a
seeded Gaussian with sigma = 31/5 clipped to the patch. It is committed
as a literal so the descriptor layout can never drift silently; a test
asserts the generator still reproduces it.
"""

import numpy as np

PATTERN_SEED = 2
PATCH_SIZE = 31
PATTERN_PAIRS = 256

# Largest rotated sample offset is 15*sqrt(2) ~ 21.2, which rounds to at
# most 21; one pixel of slack on top.
SAFE_MARGIN = 22


def generate_pattern(seed: int = PATTERN_SEED, n_pairs: int = PATTERN_PAIRS,
                     patch_size: int = PATCH_SIZE) -> np.ndarray:
    """Draw the comparison-point table: Gaussian(0, (patch/5)^2), rounded
    to integer offsets and clipped to the patch."""
    half = patch_size // 2
    sigma = patch_size / 5.0
    rng = np.random.default_rng(seed)
    draws = rng.normal(0.0, sigma, size=(n_pairs, 4))
    return np.clip(np.rint(draws), -half, half).astype(np.int8)


SAMPLING_PATTERN = np.array([
    (1, -3, -3, -15), (11, 7, -2, 5), (2, -3, 6, -2), (-2, -5, 3, -1), (3, -4, 1, -6), (5, 1, 2, 3), (-6, 5, 13, -10), (-11, -9, 5, 1),
    (7, 4, 1, 2), (-1, 5, -7, -3), (2, 11, -5, -7), (-3, 6, -1, 8), (-12, 7, 6, -9), (1, 8, 1, 6), (15, 2, -2, -5), (4, -1, -1, -1),
    (4, -7, -9, -15), (7, 0, 9, 0), (-5, 3, 0, -8), (-5, 11, 2, 3), (-2, -4, 6, -1), (-5, -1, -6, 1), (7, -5, 9, -4), (1, -5, -1, 0),
    (-3, -4, -4, -5), (-10, -2, 2, 6), (4, 15, 2, -3), (12, -6, 6, -6), (2, -12, 6, -1), (-6, 10, 5, 0), (-5, 0, -1, 4), (5, -4, -3, -3),
    (-8, -4, -1, 4), (8, -5, 3, -3), (13, 0, 3, -6), (-5, 1, -2, 2), (-10, 4, -6, 11), (-2, 7, -9, 3), (-6, -3, 0, -2), (2, 5, 4, -1),
    (-8, -5, -1, -13), (5, -1, -2, 6), (4, 1, -6, 2), (2, -5, 6, 3), (-12, 1, -8, 7), (5, -7, -5, 1), (-1, 9, 5, -2), (4, -13, 2, 5),
    (-1, -4, 4, 12), (1, -7, 9, -12), (3, -4, 6, -5), (8, 2, -11, -12), (-2, 8, 1, 0), (-1, 5, 2, 2), (-6, 7, 8, -8), (14, 4, -3, -12),
    (4, 3, -4, -11), (7, -4, -3, 15), (13, 6, -3, 4), (-14, 1, -5, -8), (-10, 3, 1, 1), (5, -5, -8, -11), (-2, 5, -1, 4), (-7, -3, -5, -8),
    (12, 5, -5, -5), (0, -9, 3, -8), (-2, -6, -3, -8), (-10, -6, -4, -2), (0, 9, 5, -2), (5, -4, 9, 3), (-8, 5, 5, -15), (-5, -3, -12, -7),
    (-6, 3, 2, 15), (-2, 7, 0, 2), (-7, -12, -5, 5), (10, 4, 3, -5), (10, 8, -3, 0), (-6, 9, 3, -1), (3, 3, -3, -8), (-8, -11, 3, 14),
    (-11, 1, 3, -6), (1, -7, 7, -4), (1, 4, -3, -11), (-3, 5, -1, 1), (-7, 1, 5, 0), (12, -1, -6, -10), (7, 0, 6, 3), (10, 8, -2, 2),
    (7, -8, 9, 8), (6, -1, 2, -7), (0, -4, 1, -3), (2, 7, -8, 6), (-12, -13, -1, 0), (3, -10, 0, 1), (8, -1, 3, -6), (-1, -3, 4, -6),
    (-5, 4, 11, 2), (2, -2, 7, 3), (11, 2, -6, -4), (-6, -8, 8, 5), (-8, 11, 2, -6), (2, 0, -5, -12), (0, 2, -15, 3), (4, -3, 1, -2),
    (-5, -2, 8, -9), (1, 1, -4, -3), (-9, -5, 0, 2), (-6, 15, -4, 1), (-1, -2, 8, -3), (8, 7, -6, 6), (-4, 15, -2, -6), (-12, -8, -4, -6),
    (-8, -4, -1, 9), (-11, -3, -6, -9), (-8, -6, 4, -1), (-3, 4, 2, -1), (2, -5, 4, 3), (-3, -8, 9, 1), (15, -4, 5, -3), (2, 5, -5, -1),
    (1, 1, 4, 6), (5, 2, -2, -7), (-5, -3, 4, -2), (-8, 4, -5, -5), (-1, 3, -15, -7), (1, -2, -5, -3), (9, -3, 4, 5), (-3, 3, -3, -4),
    (-7, 5, -2, -3), (-7, 11, 5, -1), (-4, -9, 2, 2), (-9, 7, 5, -6), (-3, -3, 1, -1), (-10, 9, 2, 8), (8, -1, 2, 5), (5, -1, -4, 0),
    (-5, -3, -13, 1), (-6, -3, 0, 2), (12, 1, -9, 1), (-4, 2, -4, -4), (-3, -4, -11, -4), (0, 7, -2, -2), (4, 3, 10, 4), (0, 8, 9, -3),
    (1, -10, -2, -5), (-1, -3, -1, -1), (3, 1, -3, -8), (8, 9, -3, 3), (-9, -10, -2, 9), (-6, -5, 10, -12), (4, 3, -1, 1), (15, -7, -2, -1),
    (-4, -8, 10, 1), (-11, -4, 3, 3), (-9, -1, 2, 2), (2, -11, 11, 1), (11, 15, -1, -8), (5, -1, -3, -6), (10, -3, -9, -3), (-7, 1, -3, -7),
    (4, -4, 4, 8), (-2, -4, 1, 6), (0, 1, 0, 2), (4, -4, -3, 0), (-4, 1, 3, 0), (-4, -5, 11, 5), (-7, -5, 12, 9), (1, 7, -9, 0),
    (5, -12, -5, 5), (7, -4, 2, 10), (-2, -8, 0, -2), (8, 1, -5, 15), (-3, 3, 4, 5), (1, 4, 0, -9), (-1, -1, -1, 1), (-4, 8, 10, -14),
    (0, -4, -15, 3), (-4, -2, -4, 7), (8, 2, 4, -1), (1, -5, 0, -4), (2, 5, 2, 7), (15, -13, 0, -4), (-3, -8, 0, -2), (-4, -2, -4, -15),
    (7, -2, -6, 2), (-4, -13, 5, -10), (-1, 1, 8, 7), (1, -5, -3, 7), (11, 3, -4, 6), (-2, -3, -2, 4), (2, 6, 8, 3), (-14, -11, 1, 0),
    (13, 0, -1, 6), (7, -1, 3, -7), (-6, 8, -9, 6), (4, 5, 6, 3), (-13, -6, -4, 6), (-7, -4, -2, 8), (-9, -8, 4, -13), (2, -3, -10, -3),
    (-6, 1, 2, 9), (0, 1, -4, 0), (7, -12, 4, -3), (0, 2, 5, 1), (-2, 2, 0, -1), (1, 5, 1, 1), (-8, -1, -12, 4), (-6, 8, 15, -2),
    (8, 3, -3, -5), (3, 9, 2, -9), (-6, -1, 8, 2), (2, 8, -1, -1), (-1, -11, 3, 3), (6, -7, -5, 6), (2, 9, -5, 1), (-4, 2, -3, 3),
    (7, 4, -11, 6), (3, -6, -5, 0), (4, -3, -10, 2), (1, 15, -8, 15), (11, 2, 10, 1), (6, -5, 0, -6), (-10, -2, -4, 4), (8, -1, 0, 1),
    (-10, 2, 0, 0), (-7, -12, -2, 2), (8, 7, 9, 2), (7, -1, 4, 6), (15, 2, -8, 9), (-5, 0, -2, -6), (8, 4, -4, 0), (-3, 4, -2, -5),
    (-4, -3, 2, -6), (-1, 3, 14, 5), (-15, -3, -2, 2), (10, 5, -14, 2), (1, 3, 8, -7), (7, -10, 0, 2), (14, -4, -11, 4), (-4, 10, -4, -5),
    (8, 1, 6, -9), (10, -4, 5, -6), (-10, -2, 1, 10), (2, 4, 4, 15), (-5, 8, -1, 2), (-3, 7, -8, -8), (-1, -7, 4, 6), (-5, 5, -4, 0),
    (0, 12, 0, -6), (-6, 7, -10, -3), (-2, -15, -3, 6), (1, -6, 4, 3), (13, -5, -2, 0), (-1, 1, -1, -4), (-10, -3, -9, -7), (-3, 3, 5, -6),
], dtype=np.int8)
SAMPLING_PATTERN.setflags(write=False)
