import math

import numpy as np
import pytest


def brute_force_acceptable(spheres, metric):
    """All-pairs overlap check, no spatial index (independent oracle)."""
    n = len(spheres)
    for i in range(n):
        for j in range(i + 1, n):
            ci, ri = spheres[i]
            cj, rj = spheres[j]
            s = 0.0
            for a, b in zip(ci, cj):
                w = abs(a - b)
                if metric == "torus":
                    w = w % 1.0
                    w = min(w, 1.0 - w)
                s += w * w
            if math.sqrt(s) < ri + rj:
                return False
    return True


@pytest.fixture
def rng():
    return np.random.default_rng(20260810)
