import numpy as np
import pytest

from vexflow.grid import Grid2D, VectorField


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_field(rng, nx, ny, n=1, h=1.0, scale=1.0):
    grid = Grid2D(nx, ny, h)
    return VectorField(grid, scale * rng.standard_normal((nx, ny, n)))


def cosine_field(nx, ny, n=1, h=1.0, amplitude=1.0, offset=0.0, kx=1, ky=0):
    """Product-of-cosines mode sampled at cell centers (Neumann eigenvector)."""
    grid = Grid2D(nx, ny, h)
    x = (np.arange(nx) + 0.5) / nx
    y = (np.arange(ny) + 0.5) / ny
    v = np.cos(np.pi * kx * x)[:, None] * np.cos(np.pi * ky * y)[None, :]
    vals = offset + amplitude * np.repeat(v[:, :, None], n, axis=2)
    return VectorField(grid, vals)


def step_field(nx, ny, n=1, h=1.0, height=1.0, split=None):
    """Horizontal step: `height` on the left half (x index < split)."""
    grid = Grid2D(nx, ny, h)
    split = nx // 2 if split is None else split
    vals = np.zeros((nx, ny, n))
    vals[:split] = height
    return VectorField(grid, vals)
