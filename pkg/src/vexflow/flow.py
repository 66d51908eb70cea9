"""Explicit time stepping for the regularized variable-exponent diffusion flow.

The flux Z(A) = |A|^(2p-2) A / (eps + |A|^p) is a smooth monotone
approximation of |A|^(p-2) A whose magnitude is strictly below 1 where p = 1.
The stepper is explicit Euler with a step size derived from a probed
Lipschitz bound of the flux, which makes each step a guaranteed descent of
the smoothed energy (frozen exponent).  Residual checkers transcribe the
variational inequality and flux constraints that solver output must satisfy.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import backends
from .exponent import ExponentField, ExponentSchedule, critical_mask
from .functionals import (
    EnergyBreakdown,
    Trajectory,
    _magnitude,
    psi_energy,
    smoothed_potential_total,
)
from .grid import Grid2D, VectorField, divergence_values, gradient_values, inner


class FlowDivergedError(RuntimeError):
    """Raised when the explicit stepper produces non-finite values."""

    def __init__(self, step: int):
        super().__init__(
            f"non-finite values at step {step}; the time step is too large"
        )
        self.step = step


@dataclass(frozen=True)
class FidelitySpec:
    """Reaction term tethering the flow to data.

    Restricted to f = 0 and the linear tether f = lam (g - u): both satisfy
    the sublinearity bound |f| <= lam |g| + lam |u| and concavity of
    u . f = lam u.g - lam |u|^2, so the hypotheses stay checkable.
    """

    kind: str = "zero"
    lam: float = 0.0
    target: Optional[VectorField] = None

    def __post_init__(self):
        if self.kind not in ("zero", "linear_tether"):
            raise ValueError(f"unsupported fidelity kind: {self.kind!r}")
        if self.lam < 0:
            raise ValueError(f"lam must be nonnegative, got {self.lam}")
        if self.kind == "linear_tether" and self.target is None:
            raise ValueError("linear_tether fidelity needs a target field")

    @classmethod
    def zero(cls) -> "FidelitySpec":
        return cls()

    @classmethod
    def linear_tether(cls, lam: float, target: VectorField) -> "FidelitySpec":
        return cls(kind="linear_tether", lam=lam, target=target)

    @property
    def is_zero(self) -> bool:
        return self.kind == "zero" or self.lam == 0.0

    def evaluate(self, t: float, u_values: np.ndarray) -> np.ndarray:
        if self.is_zero:
            return np.zeros_like(u_values)
        return self.lam * (self.target.values - u_values)


@dataclass
class FlowConfig:
    """Configuration of one explicit flow run.

    Exactly one of (steps, T) fixes the run length; dt = None selects the
    stability-bound step automatically.
    """

    u0: VectorField
    schedule: ExponentSchedule
    eps: float
    delta: float = 0.0
    T: Optional[float] = None
    dt: Optional[float] = None
    steps: Optional[int] = None
    fidelity: FidelitySpec = field(default_factory=FidelitySpec.zero)
    trace_every: Optional[int] = None

    def __post_init__(self):
        if isinstance(self.schedule, ExponentField):
            self.schedule = ExponentSchedule.constant(self.schedule)
        if not (self.eps > 0):
            raise ValueError(f"eps must be positive, got {self.eps}")
        if self.delta < 0:
            raise ValueError(f"delta must be nonnegative, got {self.delta}")
        if self.steps is None and self.T is None:
            raise ValueError("either steps or T must be given")
        if self.steps is not None and self.steps < 1:
            raise ValueError(f"steps must be >= 1, got {self.steps}")
        if self.T is not None and not (self.T > 0):
            raise ValueError(f"T must be positive, got {self.T}")
        if self.dt is not None and not (self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt}")


@dataclass(frozen=True)
class FlowResult:
    """Trajectory, sampled fluxes, energy trace, and run diagnostics."""

    config: FlowConfig
    trajectory: Trajectory
    dt: float
    steps: int
    flux_times: list
    flux_values: list
    energy_rows: list
    frozen_energy: np.ndarray  # (steps, 2): smoothed energy before/after, frozen p
    mean_drift_per_step: float


def regularized_flux(a: np.ndarray, p, eps: float) -> np.ndarray:
    """Pointwise regularized flux; `a` is one matrix or an array of them.

    The matrix occupies the trailing axes beyond those of `p` (scalar p pairs
    with a single matrix, an (nx, ny) p with an (nx, ny, N, 2) array).
    Exactly zero where a = 0.
    """
    a = np.asarray(a, dtype=np.float64)
    p_arr = np.asarray(p, dtype=np.float64)
    lead = p_arr.shape
    if a.shape[: p_arr.ndim] != lead:
        raise ValueError(f"p shape {lead} does not prefix matrix shape {a.shape}")
    m = int(np.prod(lead)) if lead else 1
    flat = a.reshape(m, -1)
    out = backends.flux(flat, p_arr.ravel(), float(eps))
    return out.reshape(a.shape)


def monotonicity_gap(xi: np.ndarray, eta: np.ndarray, p, eps: float):
    """(Z(xi) - Z(eta)) . (xi - eta); nonnegative up to round-off.

    Broadcasts over leading axes shared with `p` like :func:`regularized_flux`.
    """
    xi = np.asarray(xi, dtype=np.float64)
    eta = np.asarray(eta, dtype=np.float64)
    diff = (regularized_flux(xi, p, eps) - regularized_flux(eta, p, eps)) * (xi - eta)
    p_ndim = np.asarray(p).ndim
    axes = tuple(range(p_ndim, xi.ndim))
    out = diff.sum(axis=axes)
    return float(out) if out.ndim == 0 else out


def rhs(
    u: VectorField,
    p_slice: ExponentField,
    eps: float,
    delta: float = 0.0,
    fidelity: Optional[FidelitySpec] = None,
    t: float = 0.0,
) -> VectorField:
    """div Z(grad u) + f(t, ., u) + delta * (div grad u), the dissipative stabilizer."""
    g = gradient_values(u.values, u.grid.h)
    z = regularized_flux(g, p_slice.values, eps)
    out = divergence_values(z, u.grid.h)
    if delta > 0:
        out += delta * divergence_values(g, u.grid.h)
    if fidelity is not None and not fidelity.is_zero:
        out += fidelity.evaluate(t, u.values)
    return VectorField(u.grid, out)


def estimate_flux_lipschitz(
    schedule: ExponentSchedule,
    eps: float,
    grad_max: float = 4.0,
    probes: int = 10000,
    seed: int = 0,
) -> float:
    """Probed Lipschitz bound of A -> Z(A) over magnitudes up to grad_max.

    Supremum of directional difference quotients over random base points and
    directions, with exponent values sampled from the schedule's initial
    slice.  Two probe steps per point: one below eps to catch the steep
    near-zero regime of low exponents, one proportional to |A|.
    """
    rng = np.random.default_rng(seed)
    p0 = schedule.at(0.0).values.ravel()
    qs = np.quantile(p0, np.linspace(0.0, 1.0, 17))
    p_pool = np.unique(np.concatenate([qs, [p0.min(), p0.max()]]))
    p_s = rng.choice(p_pool, size=probes)

    d = 6  # 3x2 matrices; the flux is isotropic so the bound is N-independent
    dirs = rng.standard_normal((probes, d))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    base_dirs = rng.standard_normal((probes, d))
    base_dirs /= np.linalg.norm(base_dirs, axis=1, keepdims=True)
    mags = np.exp(rng.uniform(np.log(1e-8), np.log(max(grad_max, 1e-6)), probes))
    mags[: probes // 10] = 0.0  # probe at the origin too
    a = base_dirs * mags[:, None]

    lip = 0.0
    za = backends.flux(a, p_s, eps)
    for step in (min(eps, 1e-8), 1e-3):
        h_step = step * (1.0 + mags)
        zb = backends.flux(a + dirs * h_step[:, None], p_s, eps)
        quot = np.linalg.norm(zb - za, axis=1) / h_step
        lip = max(lip, float(quot.max()))
    return lip


def stability_dt(
    schedule: ExponentSchedule,
    eps: float,
    delta: float,
    grid: Grid2D,
    grad_max: float = 4.0,
    probes: int = 10000,
    seed: int = 0,
) -> float:
    """Explicit-Euler step bound: 0.9 h^2 / (2 n (L_flux + delta)), n = 2."""
    if not (eps > 0):
        raise ValueError(f"eps must be positive, got {eps}")
    lip = estimate_flux_lipschitz(schedule, eps, grad_max=grad_max, probes=probes, seed=seed)
    n = 2
    return 0.9 * grid.h**2 / (2 * n * (lip + delta))


def run_flow(config: FlowConfig) -> FlowResult:
    """Explicit Euler evolution u^{k+1} = u^k + dt * rhs(u^k, p(t_k)).

    Records the energy trace per slice and sampled flux fields; the frozen-p
    energy pair per step is what the dissipation invariant is asserted on.
    """
    grid = config.u0.grid
    sched = config.schedule
    eps = config.eps
    dt = config.dt
    if dt is None:
        g0 = _magnitude(gradient_values(config.u0.values, grid.h))
        gmax = max(1.0, 2.0 * float(g0.max()))
        dt = stability_dt(sched, eps, config.delta, grid, grad_max=gmax)
    steps = config.steps
    if steps is None:
        steps = max(1, math.ceil(config.T / dt - 1e-12))
    trace_every = config.trace_every
    if trace_every is None:
        trace_every = max(1, steps // 10)

    u = config.u0.values.copy()
    n_ch = u.shape[2]
    traj = np.empty((steps + 1,) + u.shape)
    traj[0] = u
    area = grid.cell_area
    energy_rows = []
    frozen = np.empty((steps, 2))
    flux_times = []
    flux_values = []
    h = grid.h

    for k in range(steps):
        t = k * dt
        pk = sched.at(t)
        g = gradient_values(u, h)
        z = regularized_flux(g, pk.values, eps)
        r = divergence_values(z, h)
        if config.delta > 0:
            r += config.delta * divergence_values(g, h)
        if not config.fidelity.is_zero:
            r += config.fidelity.evaluate(t, u)

        eb = psi_energy(VectorField(grid, u), pk)
        e_smooth = smoothed_potential_total(g, pk.values, eps, area)
        energy_rows.append((k, t, eb.y_part, eb.off_y_part, eb.total, e_smooth))
        if k % trace_every == 0 or k == steps - 1:
            flux_times.append(t)
            flux_values.append(z)

        u = u + dt * r
        if not np.all(np.isfinite(u)):
            raise FlowDivergedError(k)
        traj[k + 1] = u
        g_next = gradient_values(u, h)
        frozen[k, 0] = e_smooth
        frozen[k, 1] = smoothed_potential_total(g_next, pk.values, eps, area)

    t_end = steps * dt
    p_end = sched.at(t_end)
    eb = psi_energy(VectorField(grid, u), p_end)
    g_end = gradient_values(u, h)
    e_smooth = smoothed_potential_total(g_end, p_end.values, eps, area)
    energy_rows.append((steps, t_end, eb.y_part, eb.off_y_part, eb.total, e_smooth))

    means0 = traj[0].reshape(-1, n_ch).mean(axis=0)
    means1 = traj[-1].reshape(-1, n_ch).mean(axis=0)
    drift = float(np.abs(means1 - means0).max()) / steps

    return FlowResult(
        config=config,
        trajectory=Trajectory(grid, dt, traj),
        dt=dt,
        steps=steps,
        flux_times=flux_times,
        flux_values=flux_values,
        energy_rows=energy_rows,
        frozen_energy=frozen,
        mean_drift_per_step=drift,
    )


def _nonsmooth_flux(gw: np.ndarray, p_values: np.ndarray) -> np.ndarray:
    """|A|^(p-2) A with the zero branch at A = 0 (subdifferential selection)."""
    mag = _magnitude(gw)
    coef = np.zeros_like(mag)
    m = mag > 0
    coef[m] = mag[m] ** (p_values[m] - 2.0)
    return gw * coef[:, :, None, None]


def _as_spacetime_mask(u_mask: np.ndarray, steps: int, shape) -> np.ndarray:
    u_mask = np.asarray(u_mask, dtype=bool)
    if u_mask.ndim == 2:
        if u_mask.shape != shape:
            raise ValueError(f"mask shape {u_mask.shape} does not match grid {shape}")
        return np.broadcast_to(u_mask, (steps,) + shape)
    if u_mask.ndim == 3:
        if u_mask.shape != (steps,) + shape:
            raise ValueError(
                f"space-time mask must have shape {(steps,) + shape}, got {u_mask.shape}"
            )
        return u_mask
    raise ValueError("mask must be a 2D or 3D boolean array")


def weak_residual(
    result: FlowResult,
    w: Trajectory,
    u_mask: np.ndarray,
    schedule: Optional[ExponentSchedule] = None,
    t_star: Optional[float] = None,
    fidelity: Optional[FidelitySpec] = None,
) -> float:
    """LHS minus RHS of the discrete variational inequality, truncated at t_star.

    All time integrals use the left-endpoint rule; the flux is recomputed
    from the trajectory with the run's eps.  The mask U must contain the
    critical set Y of every used slice.  Solver output satisfies
    residual <= tolerance (negative up to eps- and dt-sized terms).
    """
    sched = schedule if schedule is not None else result.config.schedule
    fid = fidelity if fidelity is not None else result.config.fidelity
    eps = result.config.eps
    traj = result.trajectory
    grid = traj.grid
    h = grid.h
    area = grid.cell_area
    dt = traj.dt
    if not np.isclose(w.dt, dt):
        raise ValueError(f"test trajectory dt {w.dt} differs from solver dt {dt}")
    k_star = traj.n_steps if t_star is None else int(round(t_star / dt))
    if not (1 <= k_star <= traj.n_steps):
        raise ValueError(f"t_star maps to step {k_star}, outside 1..{traj.n_steps}")
    if w.n_steps < k_star:
        raise ValueError("test trajectory is shorter than the truncation time")
    mask = _as_spacetime_mask(u_mask, k_star, grid.shape)

    u_arr = traj.values
    w_arr = w.values

    def l2sq(x):
        return area * float(np.vdot(x, x))

    lhs = l2sq(u_arr[k_star] - w_arr[k_star])
    rhs_total = l2sq(u_arr[0] - w_arr[0])
    rhs_total += l2sq(w_arr[k_star]) - l2sq(w_arr[0])

    for k in range(k_star):
        t = k * dt
        pk = sched.at(t)
        y = critical_mask(pk)
        mk = mask[k]
        if np.any(y & ~mk):
            raise ValueError(f"mask does not contain the critical set at step {k}")
        gu = gradient_values(u_arr[k], h)
        gw = gradient_values(w_arr[k], h)
        z = regularized_flux(gu, pk.values, eps)

        # LHS: 2 int dw/dt . u  +  2 VPV^p(u) on U
        lhs += 2.0 * area * float(np.vdot(w_arr[k + 1] - w_arr[k], u_arr[k]))
        mag = _magnitude(gu)
        on_y = mk & y
        off_y = mk & ~y
        lhs += 2.0 * dt * area * float(mag[on_y].sum())
        lhs += 2.0 * dt * area * float((mag[off_y] ** pk.values[off_y]).sum())

        # RHS: 2 int_U Z . grad w
        zw = (z * gw).sum(axis=(2, 3))
        rhs_total += 2.0 * dt * area * float(zw[mk].sum())

        # RHS: 2 int_{Q\U} |grad w|^{p-2} grad w . (grad w - grad u)
        outside = ~mk
        if np.any(outside):
            zns = _nonsmooth_flux(gw, pk.values)
            term = (zns * (gw - gu)).sum(axis=(2, 3))
            rhs_total += 2.0 * dt * area * float(term[outside].sum())

        # RHS: 2 int f(u) . (u - w)
        if not fid.is_zero:
            fv = fid.evaluate(t, u_arr[k])
            rhs_total += 2.0 * dt * area * float(np.vdot(fv, u_arr[k] - w_arr[k]))

    return lhs - rhs_total


@dataclass(frozen=True)
class FluxReport:
    """Constraint diagnostics of the traced fluxes.

    max_flux_on_y: max |Z| over critical cells (contract: <= 1, strictly).
    max_y_duality_gap: max over Y of ||grad u| - Z.grad u| / (eps + |grad u|).
    max_off_y_gap: max off Y of |Z - |grad u|^{p-2} grad u| / (1 + |grad u|^{p-1}).
    """

    max_flux_on_y: float
    max_y_duality_gap: float
    max_off_y_gap: float
    samples: int


def flux_constraints(result: FlowResult, schedule: Optional[ExponentSchedule] = None) -> FluxReport:
    """Audit the traced fluxes against the weak-solution class constraints."""
    sched = schedule if schedule is not None else result.config.schedule
    traj = result.trajectory
    h = traj.grid.h
    dt = traj.dt
    max_y = 0.0
    max_dual = 0.0
    max_off = 0.0
    eps = result.config.eps
    for t, z in zip(result.flux_times, result.flux_values):
        k = int(round(t / dt))
        pk = sched.at(t)
        y = critical_mask(pk)
        gu = gradient_values(traj.values[k], h)
        mag = _magnitude(gu)
        zmag = _magnitude(z)
        if np.any(y):
            max_y = max(max_y, float(zmag[y].max()))
            zdot = (z * gu).sum(axis=(2, 3))
            dual = np.abs(mag - zdot) / (eps + mag)
            max_dual = max(max_dual, float(dual[y].max()))
        off = ~y
        if np.any(off):
            zns = _nonsmooth_flux(gu, pk.values)
            gap = _magnitude(z - zns)
            pm1 = np.zeros_like(mag)
            m = mag > 0
            pm1[m] = mag[m] ** (pk.values[m] - 1.0)
            rel = gap / (1.0 + pm1)
            max_off = max(max_off, float(rel[off].max()))
    return FluxReport(
        max_flux_on_y=max_y,
        max_y_duality_gap=max_dual,
        max_off_y_gap=max_off,
        samples=len(result.flux_times),
    )
