"""Shared helpers for the test suite."""

import numpy as np


def make_blobs(rng, n_blobs=None, centers=None, sizes=None, spread=0.2, sep=5.0):
    """Well-separated Gaussian blobs on the z=0-ish plane.

    Returns (points, truth) with truth = blob index per point. Centers are
    laid out on a jittered grid with at least ``sep`` between neighbours.
    """
    if centers is None:
        n = n_blobs
        side = int(np.ceil(np.sqrt(n)))
        centers = []
        for k in range(n):
            gx, gy = k % side, k // side
            centers.append(
                [
                    gx * sep + rng.uniform(-0.1 * sep, 0.1 * sep),
                    gy * sep + rng.uniform(-0.1 * sep, 0.1 * sep),
                    rng.uniform(0.0, 1.0),
                ]
            )
        centers = np.asarray(centers)
    if sizes is None:
        sizes = rng.integers(50, 501, size=len(centers))
    pts, truth = [], []
    for k, (c, n_pts) in enumerate(zip(centers, sizes)):
        pts.append(rng.normal(c, spread, size=(int(n_pts), 3)))
        truth.extend([k] * int(n_pts))
    return np.concatenate(pts), np.asarray(truth)


def same_partition(a, b):
    """True when two labelings are identical up to cluster renaming,
    with noise (-1) mapped onto noise."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        return False
    if ((a == -1) != (b == -1)).any():
        return False
    mapping = {}
    reverse = {}
    for x, y in zip(a, b):
        if x == -1:
            continue
        if mapping.setdefault(x, y) != y:
            return False
        if reverse.setdefault(y, x) != x:
            return False
    return True


def criterion(number, name, passed, detail=""):
    status = "PASS" if passed else "FAIL"
    print(f"ACCEPTANCE {number:02d} {name}: {status}" + (f" ({detail})" if detail else ""))
    assert passed, f"acceptance criterion {number} ({name}) failed: {detail}"
