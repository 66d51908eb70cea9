"""Discrete variable-exponent functional calculus.

Modulars, Luxemburg norms, vectorial total variation, the space-time
functionals over trajectories (spatial-Jacobian form, left-endpoint rule in
time), and the mixed energy that drives the flows: total variation on the
critical set Y plus the exponent modular off it, with an eps-smoothed convex
version whose gradient is exactly the regularized flux.
"""

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import backends
from .exponent import ExponentField, ExponentSchedule, critical_mask
from .grid import Grid2D, MatrixField, VectorField, gradient_values


@dataclass(frozen=True)
class EnergyBreakdown:
    """Critical-set (total-variation) part and off-critical modular part."""

    y_part: float
    off_y_part: float

    @property
    def total(self) -> float:
        return self.y_part + self.off_y_part


@dataclass(frozen=True)
class Trajectory:
    """Time-indexed slices u(t_k), k = 0..K, with uniform step dt.

    values has shape (K+1, nx, ny, N).
    """

    grid: Grid2D
    dt: float
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 4 or v.shape[1:3] != self.grid.shape:
            raise ValueError(
                f"trajectory values must have shape (K+1, nx, ny, N), got {v.shape}"
            )
        if not (self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "values", v)

    @property
    def n_steps(self) -> int:
        return self.values.shape[0] - 1

    @property
    def duration(self) -> float:
        return self.n_steps * self.dt

    @property
    def channels(self) -> int:
        return self.values.shape[3]

    def slice(self, k: int) -> VectorField:
        return VectorField(self.grid, self.values[k])

    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.values.shape[0])

    @classmethod
    def from_slices(cls, slices, dt: float) -> "Trajectory":
        if not slices:
            raise ValueError("at least one slice is required")
        grid = slices[0].grid
        return cls(grid, dt, np.stack([s.values for s in slices]))


def _magnitude(values: np.ndarray) -> np.ndarray:
    """Per-cell Euclidean (vector) or Frobenius (matrix) magnitude."""
    axes = tuple(range(2, values.ndim))
    return np.sqrt((values * values).sum(axis=axes))


def _spatial_modular(values, p_values, cell_area, region_mask=None) -> float:
    mag = _magnitude(values)
    dens = mag**p_values
    if region_mask is not None:
        dens = dens[region_mask]
    return cell_area * float(dens.sum())


def modular(v, p, region_mask=None) -> float:
    """Sum of |v|^p over masked cells, h^2-weighted (dt-weighted over time).

    `v` may be a VectorField, MatrixField, or Trajectory; `p` an
    ExponentField (spatial) or ExponentSchedule (trajectory, left-endpoint
    rule).  `region_mask` is a boolean cell mask, spatial in all cases.
    """
    if isinstance(v, Trajectory):
        sched = p if isinstance(p, ExponentSchedule) else ExponentSchedule.constant(p)
        total = 0.0
        for k in range(v.n_steps):
            pk = sched.at(k * v.dt)
            total += _spatial_modular(
                v.values[k], pk.values, v.grid.cell_area, region_mask
            )
        return v.dt * total
    if not isinstance(p, ExponentField):
        raise ValueError("spatial modular needs an ExponentField exponent")
    if v.grid.shape != p.grid.shape:
        raise ValueError(
            f"field/exponent grids differ: {v.grid.shape} vs {p.grid.shape}"
        )
    return _spatial_modular(v.values, p.values, v.grid.cell_area, region_mask)


def luxemburg_norm(v, p, tol: float = 1e-10) -> float:
    """inf{lambda > 0 : modular(v/lambda) <= 1} by bisection.

    The bracket is grown geometrically from lambda = 1; the returned value is
    the feasible upper endpoint, so modular(v / result) <= 1 holds.
    """
    if not (tol > 0):
        raise ValueError(f"tol must be positive, got {tol}")
    if not np.all(np.isfinite(v.values)):
        raise ValueError("luxemburg_norm requires finite input")
    if not np.any(v.values):
        return 0.0

    def rho(lam):
        scaled = v.values / lam
        if isinstance(v, Trajectory):
            w = Trajectory(v.grid, v.dt, scaled)
        elif isinstance(v, MatrixField):
            w = MatrixField(v.grid, scaled)
        else:
            w = VectorField(v.grid, scaled)
        return modular(w, p)

    # bracket [lo, hi] with rho(lo) > 1 (infeasible) and rho(hi) <= 1 (feasible)
    lo = hi = 1.0
    if rho(1.0) > 1.0:
        while rho(hi) > 1.0:
            hi *= 2.0
            if hi > 1e300:
                raise ValueError("luxemburg_norm bracket overflow")
        lo = hi / 2.0
    else:
        while lo > 1e-300 and rho(lo / 2.0) <= 1.0:
            lo /= 2.0
        hi = lo
        lo = lo / 2.0
    while hi - lo > tol * hi:
        mid = 0.5 * (lo + hi)
        if rho(mid) <= 1.0:
            hi = mid
        else:
            lo = mid
    return hi


def total_variation(u: VectorField, region_mask=None) -> float:
    """Discrete isotropic vectorial TV: sum of |grad u| Frobenius, h^2-weighted."""
    g = gradient_values(u.values, u.grid.h)
    mag = _magnitude(g)
    if region_mask is not None:
        mag = mag[region_mask]
    return u.grid.cell_area * float(mag.sum())


def vpv(traj: Trajectory) -> float:
    """Space-time partial variation: sum_k dt * TV(u(t_k)), spatial Jacobian only."""
    return traj.dt * sum(
        total_variation(traj.slice(k)) for k in range(traj.n_steps)
    )


def vpv_p(traj: Trajectory, schedule, region_mask=None) -> EnergyBreakdown:
    """Mixed space-time functional: TV mass on Y, exponent modular off Y.

    `region_mask` optionally restricts both parts to a spatial cell set
    (must contain Y wherever used as the set U of the weak formulation).
    """
    if isinstance(schedule, ExponentField):
        schedule = ExponentSchedule.constant(schedule)
    y_part = 0.0
    off_part = 0.0
    area = traj.grid.cell_area
    for k in range(traj.n_steps):
        pk = schedule.at(k * traj.dt)
        if pk.grid.shape != traj.grid.shape:
            raise ValueError("trajectory and schedule grids differ")
        g = gradient_values(traj.values[k], traj.grid.h)
        mag = _magnitude(g)
        y = critical_mask(pk)
        off = ~y
        if region_mask is not None:
            y = y & region_mask
            off = off & region_mask
        y_part += area * float(mag[y].sum())
        off_part += area * float((mag[off] ** pk.values[off]).sum())
    return EnergyBreakdown(traj.dt * y_part, traj.dt * off_part)


def psi_energy(u: VectorField, p: ExponentField) -> EnergyBreakdown:
    """Restoration energy: TV on Y plus |grad u|^p / p off Y."""
    if u.grid.shape != p.grid.shape:
        raise ValueError("field and exponent grids differ")
    g = gradient_values(u.values, u.grid.h)
    mag = _magnitude(g)
    y = critical_mask(p)
    off = ~y
    area = u.grid.cell_area
    y_part = area * float(mag[y].sum())
    off_part = area * float((mag[off] ** p.values[off] / p.values[off]).sum())
    return EnergyBreakdown(y_part, off_part)


def psi_energy_smoothed(u: VectorField, p: ExponentField, eps: float) -> float:
    """Smoothed convex energy sum [|grad u|^p / p - (eps/p) log(eps + |grad u|^p)] h^2.

    Raw convention: the additive constant -(eps/p) log eps is not removed, so
    a zero-gradient cell contributes -(eps/p) log(eps) * h^2.  Its gradient
    with respect to u is -div of the regularized flux.
    """
    if not (eps > 0):
        raise ValueError(f"eps must be positive, got {eps}")
    if u.grid.shape != p.grid.shape:
        raise ValueError("field and exponent grids differ")
    g = gradient_values(u.values, u.grid.h)
    return smoothed_potential_total(g, p.values, eps, u.grid.cell_area)


def smoothed_potential_total(
    grad_values: np.ndarray, p_values: np.ndarray, eps: float, cell_area: float
) -> float:
    """Smoothed potential summed over cells, from raw gradient values."""
    flat = grad_values.reshape(grad_values.shape[0] * grad_values.shape[1], -1)
    dens = backends.potential(flat, p_values.ravel(), eps)
    return cell_area * float(dens.sum())


ENERGY_CSV_COLUMNS = ("step", "time", "y_part", "off_y_part", "total", "smoothed_total")


def write_energy_csv(path, rows) -> None:
    """Write an energy trace; rows are (step, time, y, off_y, total, smoothed)."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(ENERGY_CSV_COLUMNS)
        for row in rows:
            step, rest = row[0], row[1:]
            writer.writerow([step] + [f"{x:.17g}" for x in rest])


def read_energy_csv(path) -> np.ndarray:
    """Read an energy trace back as a float array of shape (rows, 6)."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if tuple(header) != ENERGY_CSV_COLUMNS:
            raise ValueError(f"unexpected energy CSV header: {header}")
        return np.array([[float(x) for x in row] for row in reader])
