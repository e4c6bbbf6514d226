"""Small shared constructions for the tests."""

import numpy as np


def disk_labels(grid, center, radius, inside=1, outside=2):
    pts = grid.points().reshape(grid.shape + (grid.n,))
    d = np.linalg.norm(grid.wrap(pts - np.asarray(center, dtype=float)), axis=-1)
    return np.where(d <= radius, inside, outside).astype(np.int64)
