"""Independent oracles the tests check the library against.

Everything here is deliberately written from first principles (plain
loops, closed forms) and never calls the code paths it validates.
"""

import numpy as np

# same circle as the detector, but spelled out independently
CIRCLE = [
    (0, -3), (1, -3), (2, -2), (3, -1), (3, 0), (3, 1), (2, 2), (1, 3),
    (0, 3), (-1, 3), (-2, 2), (-3, 1), (-3, 0), (-3, -1), (-2, -2), (-1, -3),
]


def brute_force_segment_test(pixels: np.ndarray, threshold: int, arc: int = 9):
    """All pixels passing the contiguous-arc corner criterion, by direct
    enumeration of every pixel and every arc start."""
    h, w = pixels.shape
    out = set()
    img = pixels.astype(int)
    for y in range(3, h - 3):
        for x in range(3, w - 3):
            c = img[y, x]
            flags = []
            for dx, dy in CIRCLE:
                v = img[y + dy, x + dx]
                if v > c + threshold:
                    flags.append(1)
                elif v < c - threshold:
                    flags.append(-1)
                else:
                    flags.append(0)
            doubled = flags + flags
            for start in range(16):
                window = doubled[start:start + arc]
                if all(f == 1 for f in window) or all(f == -1 for f in window):
                    out.add((x, y))
                    break
    return out


def midpoint_triangulation(p_px, q_px, K_matrix, R, t_metric):
    """Closed-form midpoint of the two viewing rays.

    Camera 1 at the origin; camera 2 at center C = -R^T t (world frame of
    camera 1); rays through the normalized image points. Returns the
    midpoint of the closest-approach segment.
    """
    Kinv = np.linalg.inv(K_matrix)
    d1 = Kinv @ np.array([p_px[0], p_px[1], 1.0])
    d1 = d1 / np.linalg.norm(d1)
    C = -R.T @ t_metric
    d2 = R.T @ (Kinv @ np.array([q_px[0], q_px[1], 1.0]))
    d2 = d2 / np.linalg.norm(d2)
    # closest points of lines o1 + s*d1 and o2 + u*d2 with o1 = 0, o2 = C
    w0 = -C
    a = d1 @ d1
    b = d1 @ d2
    c = d2 @ d2
    d = d1 @ w0
    e = d2 @ w0
    denom = a * c - b * b
    if abs(denom) < 1e-15:
        raise ZeroDivisionError("parallel rays")
    s = (b * e - c * d) / denom
    u = (a * e - b * d) / denom
    return (s * d1 + C + u * d2) / 2.0


def brute_hamming(a_bytes, b_bytes) -> int:
    """Bit-by-bit descriptor distance via binary string expansion."""
    dist = 0
    for ba, bb in zip(a_bytes, b_bytes):
        dist += bin(int(ba) ^ int(bb)).count("1")
    return dist


def pinhole(K_matrix, R, C, point_world):
    """Scalar pinhole projection used to cross-check the simulator."""
    p_cam = R @ (np.asarray(point_world, dtype=float) - np.asarray(C, dtype=float))
    if p_cam[2] <= 0:
        raise ValueError("behind camera")
    uvw = K_matrix @ p_cam
    return np.array([uvw[0] / uvw[2], uvw[1] / uvw[2]])
