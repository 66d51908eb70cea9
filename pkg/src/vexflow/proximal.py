"""Minimizing-movement (implicit Euler) solver for the time-independent flow.

Each outer step minimizes J(v) = Psi_eps(v) + ||v - u_prev||^2 / (2 tau)
with gradient descent and Armijo backtracking on the smoothed convex energy.
The subdifferential checker verifies the discrete optimality inequality
Psi(u + h) >= Psi(u) + <-(u^{k+1} - u^k)/tau, h> on probe fields.
"""

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.ndimage import gaussian_filter

from .exponent import ExponentField
from .flow import regularized_flux
from .functionals import Trajectory, smoothed_potential_total
from .grid import VectorField, divergence_values, gradient_values

ARMIJO_C = 1e-4
ARMIJO_SHRINK = 0.5


@dataclass
class ProxConfig:
    """Parameters of a semigroup (proximal) run."""

    u0: VectorField
    p: ExponentField
    tau: float
    eps_inner: float = 1e-6
    inner_tol: float = 1e-8
    max_inner: int = 500
    steps: int = 10

    def __post_init__(self):
        if not (self.tau > 0):
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not (self.eps_inner > 0):
            raise ValueError(f"eps_inner must be positive, got {self.eps_inner}")
        if self.steps < 0:
            raise ValueError(f"steps must be nonnegative, got {self.steps}")


def _objective_and_grad(v, u_prev, p, tau, eps, h, area):
    g = gradient_values(v, h)
    energy = smoothed_potential_total(g, p.values, eps, area)
    diff = v - u_prev
    obj = energy + area * float(np.vdot(diff, diff)) / (2.0 * tau)
    grad = -divergence_values(regularized_flux(g, p.values, eps), h) + diff / tau
    return obj, grad


def prox_step(
    u_prev: VectorField,
    p: ExponentField,
    tau: float,
    eps_inner: float,
    tol: float = 1e-8,
    max_inner: int = 500,
):
    """One proximal step; returns (VectorField, converged flag).

    Gradient descent with backtracking line search; the accepted iterate
    never increases J, so J(output) <= J(u_prev) holds by construction.
    On hitting max_inner the best iterate is returned with a warning.
    """
    grid = u_prev.grid
    h, area = grid.h, grid.cell_area
    u0 = u_prev.values
    v = u0.copy()
    obj, grad = _objective_and_grad(v, u0, p, tau, eps_inner, h, area)
    gnorm0 = np.sqrt(area * float(np.vdot(grad, grad)))
    step = tau
    converged = True
    for _ in range(max_inner):
        gnorm2 = area * float(np.vdot(grad, grad))
        if np.sqrt(gnorm2) <= tol * (1.0 + gnorm0):
            break
        stalled = False
        while True:
            cand = v - step * grad
            cand_obj, cand_grad = _objective_and_grad(cand, u0, p, tau, eps_inner, h, area)
            if cand_obj <= obj - ARMIJO_C * step * gnorm2:
                break
            step *= ARMIJO_SHRINK
            if step * gnorm2 < 1e-15 * (1.0 + abs(obj)):
                stalled = True  # descent below round-off; best iterate reached
                break
        if stalled:
            break
        v, obj, grad = cand, cand_obj, cand_grad
        step *= 2.0
    else:
        converged = False
        warnings.warn(
            f"prox_step hit max_inner={max_inner} before reaching tolerance",
            RuntimeWarning,
        )
    return VectorField(grid, v), converged


def run_semigroup(config: ProxConfig):
    """Iterate prox_step; returns (Trajectory, energy array of shape (steps+1,))."""
    grid = config.u0.grid
    slices = [config.u0.values]
    energies = []
    u = config.u0
    g = gradient_values(u.values, grid.h)
    energies.append(
        smoothed_potential_total(g, config.p.values, config.eps_inner, grid.cell_area)
    )
    for _ in range(config.steps):
        u, _ = prox_step(
            u, config.p, config.tau, config.eps_inner,
            tol=config.inner_tol, max_inner=config.max_inner,
        )
        slices.append(u.values)
        g = gradient_values(u.values, grid.h)
        energies.append(
            smoothed_potential_total(g, config.p.values, config.eps_inner, grid.cell_area)
        )
    traj = Trajectory(grid, config.tau, np.stack(slices))
    return traj, np.array(energies)


def _smooth_probe(rng, shape, scale):
    raw = rng.standard_normal(shape)
    sm = gaussian_filter(raw, sigma=(2.0, 2.0, 0), mode="nearest")
    nrm = np.abs(sm).max()
    return scale * sm / nrm if nrm > 0 else sm


def subgradient_check(
    traj: Trajectory,
    p: ExponentField,
    eps_inner: float,
    probes: int = 20,
    seed: int = 0,
    probe_scale: float = 0.1,
) -> float:
    """Most negative slack of Psi(u+h) - Psi(u) - <-(u^{k+1}-u^k)/tau, h>.

    Probes are smooth random fields plus the backward step direction.
    Nonnegative up to the inner-solve tolerance for semigroup output.
    """
    grid = traj.grid
    h, area = grid.h, grid.cell_area
    tau = traj.dt
    rng = np.random.default_rng(seed)

    def psi(values):
        g = gradient_values(values, h)
        return smoothed_potential_total(g, p.values, eps_inner, area)

    min_slack = 0.0
    for k in range(traj.n_steps):
        u_next = traj.values[k + 1]
        w = -(u_next - traj.values[k]) / tau
        psi_u = psi(u_next)
        probe_fields = [traj.values[k] - u_next]
        probe_fields += [
            _smooth_probe(rng, u_next.shape, probe_scale) for _ in range(probes)
        ]
        for hf in probe_fields:
            slack = psi(u_next + hf) - psi_u - area * float(np.vdot(w, hf))
            min_slack = min(min_slack, slack)
    return min_slack
