"""Fields on a uniform rectangular grid and the discrete gradient/divergence pair.

The gradient is a forward difference with replicated (Neumann) ghost cells at
the far boundary; the divergence is its exact negative adjoint under the
h^2-weighted inner products, realized as a backward difference with zero-flux
boundary handling.  Exactness of the summation-by-parts identity is what the
energy-dissipation checks downstream rely on, so the stencils must stay paired.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Grid2D:
    """Uniform rectangular grid: nx-by-ny cells of spacing h."""

    nx: int
    ny: int
    h: float = 1.0

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError(f"grid needs at least 2x2 cells, got {self.nx}x{self.ny}")
        if not (self.h > 0):
            raise ValueError(f"grid spacing must be positive, got {self.h}")

    @property
    def cell_area(self) -> float:
        return self.h * self.h

    @property
    def shape(self):
        return (self.nx, self.ny)


@dataclass(frozen=True)
class VectorField:
    """Per-cell R^N values on a Grid2D; values has shape (nx, ny, N)."""

    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3 or v.shape[:2] != self.grid.shape:
            raise ValueError(
                f"vector field values must have shape (nx, ny, N)={self.grid.shape + ('N',)}, "
                f"got {v.shape}"
            )
        if v.shape[2] < 1:
            raise ValueError("vector field needs at least one channel")
        if not np.all(np.isfinite(v)):
            raise ValueError("vector field values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    @classmethod
    def zeros(cls, grid: Grid2D, channels: int = 1) -> "VectorField":
        return cls(grid, np.zeros((grid.nx, grid.ny, channels)))

    def with_values(self, values: np.ndarray) -> "VectorField":
        return VectorField(self.grid, values)


@dataclass(frozen=True)
class MatrixField:
    """Per-cell R^{N x 2} Jacobians/fluxes; values has shape (nx, ny, N, 2)."""

    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 4 or v.shape[:2] != self.grid.shape or v.shape[3] != 2:
            raise ValueError(
                f"matrix field values must have shape (nx, ny, N, 2), got {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("matrix field values must be finite")
        object.__setattr__(self, "values", v)

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    @classmethod
    def zeros(cls, grid: Grid2D, channels: int = 1) -> "MatrixField":
        return cls(grid, np.zeros((grid.nx, grid.ny, channels, 2)))


def gradient_values(v: np.ndarray, h: float) -> np.ndarray:
    """Forward-difference Jacobian of raw values (nx, ny, N) -> (nx, ny, N, 2)."""
    out = np.zeros(v.shape + (2,))
    out[:-1, :, :, 0] = (v[1:, :, :] - v[:-1, :, :]) / h
    out[:, :-1, :, 1] = (v[:, 1:, :] - v[:, :-1, :]) / h
    return out


def divergence_values(a: np.ndarray, h: float) -> np.ndarray:
    """Backward-difference divergence of raw values (nx, ny, N, 2) -> (nx, ny, N).

    Exact negative adjoint of :func:`gradient_values`; the far-boundary entry
    of each flux component is treated as zero (zero-flux telescoping).
    """
    ax = a[:, :, :, 0]
    ay = a[:, :, :, 1]
    out = np.zeros(a.shape[:3])
    out[0, :, :] = ax[0, :, :]
    out[1:-1, :, :] = ax[1:-1, :, :] - ax[:-2, :, :]
    out[-1, :, :] = -ax[-2, :, :]
    out[:, 0, :] += ay[:, 0, :]
    out[:, 1:-1, :] += ay[:, 1:-1, :] - ay[:, :-2, :]
    out[:, -1, :] += -ay[:, -2, :]
    out /= h
    return out


def gradient(u: VectorField) -> MatrixField:
    """Discrete Jacobian: forward differences, zero at the far boundary."""
    return MatrixField(u.grid, gradient_values(u.values, u.grid.h))


def divergence(a: MatrixField) -> VectorField:
    """Discrete divergence satisfying <grad u, A> = -<u, div A> exactly."""
    return VectorField(a.grid, divergence_values(a.values, a.grid.h))


def inner(a, b) -> float:
    """h^2-weighted inner product of two fields of matching shape.

    Works for VectorField/VectorField and MatrixField/MatrixField pairs
    (Frobenius dot per cell).
    """
    if type(a) is not type(b):
        raise ValueError(f"cannot pair {type(a).__name__} with {type(b).__name__}")
    if a.grid != b.grid or a.values.shape != b.values.shape:
        raise ValueError(
            f"field shapes differ: {a.values.shape} vs {b.values.shape}"
        )
    return a.grid.cell_area * float(np.vdot(a.values, b.values))


def norm(a) -> float:
    """h^2-weighted Euclidean/Frobenius norm of a field."""
    return float(np.sqrt(inner(a, a)))
