"""Quasi-uniform unit directions on the sphere."""
from __future__ import annotations

import numpy as np

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))
DEFAULT_DIRECTIONS = 2562


def sphere_directions(n: int = DEFAULT_DIRECTIONS) -> np.ndarray:
    """Fibonacci lattice with its pole on the y axis, mirror-symmetric in y.

    Level ``i`` sits at ``y = (n - 1 - 2i) / n`` and its spiral phase grows
    with the distance from the equator, so direction ``n - 1 - i`` is exactly
    direction ``i`` with ``y`` negated. That bitwise symmetry is what lets a
    left-handed field on a scene reproduce the right-handed field on the
    scene's mirror image (mirror plane normal to y).
    """
    if n < 1:
        raise ValueError("need at least one direction")
    i = np.arange(n, dtype=np.float64)
    y = (n - 1 - 2 * i) / n
    r = np.sqrt(np.maximum(0.0, 1.0 - y * y))
    phase = GOLDEN_ANGLE * np.abs(2 * i - (n - 1)) / 2.0
    d = np.column_stack([r * np.cos(phase), y, r * np.sin(phase)])
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def mirror_index(n: int) -> np.ndarray:
    """Permutation taking direction i to its y-mirror."""
    return np.arange(n)[::-1].copy()
