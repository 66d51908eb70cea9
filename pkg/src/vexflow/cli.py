"""Batch front end: restoration runs, exponent maps, invariant audits.

Every run writes a flat key = value manifest containing all resolved
configuration, sufficient to reproduce the run bit-for-bit.  Config files
are INI-style with a [run] section whose keys mirror the CLI flags; explicit
flags take precedence over the config file, which takes precedence over
defaults.
"""

import argparse
import configparser
import math
import os
import sys

import numpy as np

from . import backends, fileio
from .exponent import (
    ExponentField,
    ExponentSchedule,
    critical_mask,
    edge_adaptive_exponent,
    validate_gap,
)
from .flow import (
    FidelitySpec,
    FlowConfig,
    flux_constraints,
    monotonicity_gap,
    run_flow,
)
from .functionals import (
    Trajectory,
    luxemburg_norm,
    modular,
    psi_energy,
    smoothed_potential_total,
    total_variation,
    write_energy_csv,
)
from .grid import Grid2D, MatrixField, VectorField, divergence, gradient, gradient_values, inner
from .proximal import ProxConfig, run_semigroup

DEFAULTS = {
    "scheme": "explicit",
    "seed": 0,
    "sigma": 0.0,
    "eps": 1e-2,
    "delta": 0.0,
    "tau": 0.01,
    "T": 1.0,
    "dt": None,
    "p_max": 2.0,
    "eta": 0.1,
    "k": 10.0,
    "gauss_sigma": 1.0,
    "fidelity_lambda": 0.0,
}

_TYPES = {
    "scheme": str,
    "seed": int,
    "sigma": float,
    "eps": float,
    "delta": float,
    "tau": float,
    "T": float,
    "dt": float,
    "p_max": float,
    "eta": float,
    "k": float,
    "gauss_sigma": float,
    "fidelity_lambda": float,
}


def _read_config_file(path) -> dict:
    parser = configparser.ConfigParser()
    parser.optionxform = str  # keys are case-sensitive (T vs t)
    with open(path) as f:
        parser.read_file(f)
    out = {}
    for section in parser.sections():
        for key, raw in parser[section].items():
            key = key.replace("-", "_")
            if key not in _TYPES:
                raise ValueError(f"unknown config key: {key}")
            out[key] = _TYPES[key](raw) if raw.lower() != "none" else None
    return out


def resolve_settings(args) -> dict:
    """Merge defaults, config file, and explicit flags into one dict."""
    settings = dict(DEFAULTS)
    if getattr(args, "config", None):
        settings.update(_read_config_file(args.config))
    for key in DEFAULTS:
        val = getattr(args, key, None)
        if val is not None:
            settings[key] = val
    return settings


def write_manifest(path, settings: dict) -> None:
    lines = []
    for key in sorted(settings):
        v = settings[key]
        if isinstance(v, float):
            v = f"{v:.17g}"
        lines.append(f"{key} = {v}")
    fileio.atomic_write_text(path, "\n".join(lines) + "\n")


def parse_manifest(path) -> dict:
    out = {}
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            key, _, raw = line.partition(" = ")
            if key in _TYPES:
                out[key] = _TYPES[key](raw) if raw != "None" else None
            else:
                out[key] = raw
    return out


def _build_exponent(u: VectorField, s: dict) -> ExponentField:
    return edge_adaptive_exponent(
        u, sigma=s["gauss_sigma"], k=s["k"], p_max=s["p_max"], gap=s["eta"]
    )


def cmd_denoise(args) -> int:
    s = resolve_settings(args)
    outdir = args.output_dir
    os.makedirs(outdir, exist_ok=True)
    clean = fileio.load_image(args.input)
    noisy = fileio.add_gaussian_noise(clean, s["sigma"], s["seed"])
    p = _build_exponent(noisy, s)
    fidelity = FidelitySpec.zero()
    if s["fidelity_lambda"] > 0:
        fidelity = FidelitySpec.linear_tether(s["fidelity_lambda"], noisy)

    if s["scheme"] == "explicit":
        cfg = FlowConfig(
            u0=noisy,
            schedule=ExponentSchedule.constant(p),
            eps=s["eps"],
            delta=s["delta"],
            T=s["T"],
            dt=s["dt"],
            fidelity=fidelity,
        )
        result = run_flow(cfg)
        restored = result.trajectory.slice(result.trajectory.n_steps)
        energy_rows = result.energy_rows
        s["dt"] = result.dt
        s["steps"] = result.steps
    elif s["scheme"] == "prox":
        steps = max(0, int(round(s["T"] / s["tau"])))
        cfg = ProxConfig(
            u0=noisy, p=p, tau=s["tau"], eps_inner=s["eps"], steps=steps
        )
        traj, smoothed = run_semigroup(cfg)
        restored = traj.slice(traj.n_steps)
        energy_rows = []
        for k in range(traj.n_steps + 1):
            eb = psi_energy(traj.slice(k), p)
            energy_rows.append(
                (k, k * s["tau"], eb.y_part, eb.off_y_part, eb.total, smoothed[k])
            )
        s["steps"] = steps
    else:
        raise ValueError(f"unknown scheme: {s['scheme']!r}")

    s["input"] = os.path.abspath(args.input)
    s["output_dir"] = os.path.abspath(outdir)
    s["backend"] = backends.BACKEND

    fileio.save_image(os.path.join(outdir, "restored.png"), restored)
    fileio.save_field(os.path.join(outdir, "restored.fgrid"), restored)
    write_energy_csv(os.path.join(outdir, "energy.csv"), energy_rows)
    fileio.save_exponent(os.path.join(outdir, "exponent.pgrid"), p)
    write_manifest(os.path.join(outdir, "manifest.txt"), s)
    if s["sigma"] > 0:
        fileio.save_image(os.path.join(outdir, "noisy.png"), noisy)
        print(f"psnr_noisy = {fileio.psnr(noisy, clean):.4f}")
        print(f"psnr_restored = {fileio.psnr(restored, clean):.4f}")
    print(f"wrote {outdir}")
    return 0


def cmd_exponent_map(args) -> int:
    s = resolve_settings(args)
    outdir = args.output_dir
    os.makedirs(outdir, exist_ok=True)
    u = fileio.load_image(args.input)
    p = _build_exponent(u, s)
    fileio.save_exponent(os.path.join(outdir, "exponent.pgrid"), p)

    rendered = fileio.render_exponent(p)
    pf = VectorField(p.grid, rendered[:, :, None] / 255.0)
    fileio.save_image(os.path.join(outdir, "exponent.png"), pf)
    y = critical_mask(p)
    yf = VectorField(p.grid, y[:, :, None].astype(np.float64))
    fileio.save_image(os.path.join(outdir, "critical_mask.png"), yf)

    stats = {
        "p_minus": p.p_minus,
        "p_plus": p.p_plus,
        "critical_cells": int(y.sum()),
    }
    lines = [f"{k} = {v}" for k, v in sorted(stats.items())]
    fileio.atomic_write_text(os.path.join(outdir, "exponent_stats.txt"), "\n".join(lines) + "\n")
    for line in lines:
        print(line)
    return 0


def cmd_trace_compare(args) -> int:
    from .functionals import read_energy_csv

    a = read_energy_csv(args.traces[0])
    b = read_energy_csv(args.traces[1])
    if a.shape != b.shape:
        print(f"shape mismatch: {a.shape} vs {b.shape}")
        return 1
    diff = float(np.abs(a - b).max())
    ok = diff <= args.tol
    print(f"max_abs_diff = {diff:.6e} tol = {args.tol:.6e} {'PASS' if ok else 'FAIL'}")
    return 0 if ok else 1


# ---------------------------------------------------------------------------
# verify: registered invariant checks


def _check_adjointness(rng, div_fn):
    grid = Grid2D(16, 16, 0.5)
    worst = 0.0
    for _ in range(10):
        u = VectorField(grid, rng.standard_normal((16, 16, 3)))
        a = MatrixField(grid, rng.standard_normal((16, 16, 3, 2)))
        g = gradient(u)
        lhs = inner(g, a)
        rhs_ = inner(u, div_fn(a))
        scale = max(1e-30, np.sqrt(inner(g, g) * inner(a, a)))
        worst = max(worst, abs(lhs + rhs_) / scale)
    return worst, 1e-12


def _check_conservation(rng, div_fn):
    grid = Grid2D(16, 16, 1.0)
    worst = 0.0
    for _ in range(10):
        a = MatrixField(grid, rng.standard_normal((16, 16, 3, 2)))
        sums = np.abs(div_fn(a).values.sum(axis=(0, 1))).max()
        worst = max(worst, float(sums) / a.values.size)
    return worst, 1e-13


def _check_monotonicity(rng, div_fn):
    n = 10000
    xi = rng.standard_normal((n, 3, 2))
    et = rng.standard_normal((n, 3, 2))
    p = rng.uniform(1.0, 4.0, n)
    eps = 10.0 ** rng.uniform(-6, 0, n)
    gaps = np.array([
        monotonicity_gap(xi[i], et[i], p[i], eps[i]) for i in range(0, n, 97)
    ])
    scale = 1.0
    return float(max(0.0, -(gaps.min()))), 1e-12 * scale


def _check_luxemburg(rng, div_fn):
    grid = Grid2D(8, 8, 1.0 / 8.0)
    worst = 0.0
    for _ in range(5):
        v = VectorField(grid, rng.standard_normal((8, 8, 2)))
        p = ExponentField.constant(grid, 2.0)
        classical = np.sqrt(modular(v, p))
        lux = luxemburg_norm(v, p)
        worst = max(worst, abs(lux - classical) / classical)
    return worst, 1e-8


def _check_gap_property(rng, div_fn):
    grid = Grid2D(16, 16, 1.0)
    ok = True
    for _ in range(5):
        u = VectorField(grid, rng.uniform(0, 1, (16, 16, 3)))
        p = edge_adaptive_exponent(u, sigma=1.0, k=50.0, p_max=2.0, gap=0.1)
        ok = ok and validate_gap(p, 0.1)
    return 0.0 if ok else 1.0, 0.5


def _dissipation_run(rng):
    grid = Grid2D(32, 32, 1.0)
    u0 = VectorField(grid, np.clip(
        0.5 + 0.2 * rng.standard_normal((32, 32, 3)), 0, 1))
    p = edge_adaptive_exponent(u0, sigma=1.0, k=50.0, p_max=2.0, gap=0.1)
    cfg = FlowConfig(u0=u0, schedule=ExponentSchedule.constant(p), eps=1e-2, steps=50, T=None)
    return run_flow(cfg)


def _check_dissipation(rng, div_fn):
    result = _dissipation_run(rng)
    e0 = abs(result.frozen_energy[0, 0])
    rise = float((result.frozen_energy[:, 1] - result.frozen_energy[:, 0]).max())
    return max(0.0, rise) / max(e0, 1e-30), 1e-12


def _check_mean_conservation(rng, div_fn):
    result = _dissipation_run(rng)
    return result.mean_drift_per_step, 1e-10


def _check_tv_monotone(rng, div_fn):
    grid = Grid2D(32, 32, 1.0)
    u0 = VectorField(grid, np.clip(0.5 + 0.2 * rng.standard_normal((32, 32, 1)), 0, 1))
    p = ExponentField.constant(grid, 1.0)
    cfg = FlowConfig(u0=u0, schedule=ExponentSchedule.constant(p), eps=1e-2, steps=50, T=None)
    result = run_flow(cfg)
    tvs = np.array([
        total_variation(result.trajectory.slice(k))
        for k in range(result.trajectory.n_steps + 1)
    ])
    rise = float(np.diff(tvs).max())
    return max(0.0, rise) / tvs[0], 1e-10


def _check_flux_bound(rng, div_fn):
    grid = Grid2D(32, 32, 1.0)
    u0 = VectorField(grid, np.clip(0.5 + 0.2 * rng.standard_normal((32, 32, 1)), 0, 1))
    p = ExponentField.constant(grid, 1.0)
    cfg = FlowConfig(u0=u0, schedule=ExponentSchedule.constant(p), eps=1e-2,
                     steps=20, T=None, trace_every=1)
    result = run_flow(cfg)
    report = flux_constraints(result)
    return report.max_flux_on_y, 1.0


def _check_prox_descent(rng, div_fn):
    grid = Grid2D(16, 16, 1.0)
    u0 = VectorField(grid, rng.uniform(0, 1, (16, 16, 1)))
    p = ExponentField.constant(grid, 1.5)
    cfg = ProxConfig(u0=u0, p=p, tau=0.1, eps_inner=1e-6, inner_tol=1e-5,
                     max_inner=2000, steps=5)
    _, energies = run_semigroup(cfg)
    rise = float(np.diff(energies).max())
    return max(0.0, rise) / max(abs(energies[0]), 1e-30), 1e-12


CHECKS = [
    ("adjointness", _check_adjointness),
    ("conservation", _check_conservation),
    ("monotonicity", _check_monotonicity),
    ("luxemburg_vs_l2", _check_luxemburg),
    ("exponent_gap", _check_gap_property),
    ("energy_dissipation", _check_dissipation),
    ("mean_conservation", _check_mean_conservation),
    ("tv_monotone", _check_tv_monotone),
    ("flux_bound_on_Y", _check_flux_bound),
    ("prox_descent", _check_prox_descent),
]


def cmd_verify(args, divergence_fn=None) -> int:
    """Run the registered invariant checks; exit 0 iff all pass.

    `divergence_fn` is a test hook for mutation canaries; the default is the
    production divergence operator.
    """
    div_fn = divergence_fn or divergence
    seed = args.seed if getattr(args, "seed", None) is not None else 0
    failures = 0
    for name, fn in CHECKS:
        rng = np.random.default_rng(seed)
        value, bound = fn(rng, div_fn)
        ok = value <= bound
        failures += 0 if ok else 1
        print(f"{name} value={value:.6e} bound={bound:.6e} {'PASS' if ok else 'FAIL'}")
    return 0 if failures == 0 else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vexflow",
        description="Variable-exponent diffusion flows for image restoration",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", default=None, help="INI config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--sigma", type=float, default=None, help="noise level")
        p.add_argument("--eps", type=float, default=None)
        p.add_argument("--delta", type=float, default=None)
        p.add_argument("--tau", type=float, default=None)
        p.add_argument("--T", type=float, default=None)
        p.add_argument("--dt", type=float, default=None)
        p.add_argument("--p-max", dest="p_max", type=float, default=None)
        p.add_argument("--eta", type=float, default=None)
        p.add_argument("--k", type=float, default=None)
        p.add_argument("--gauss-sigma", dest="gauss_sigma", type=float, default=None)
        p.add_argument("--fidelity-lambda", dest="fidelity_lambda", type=float, default=None)

    d = sub.add_parser("denoise", help="run a restoration flow on an image")
    d.add_argument("--input", required=True)
    d.add_argument("--output-dir", required=True)
    d.add_argument("--scheme", choices=("explicit", "prox"), default=None)
    add_common(d)
    d.set_defaults(func=cmd_denoise)

    e = sub.add_parser("exponent-map", help="write the exponent field of an image")
    e.add_argument("--input", required=True)
    e.add_argument("--output-dir", required=True)
    add_common(e)
    e.set_defaults(func=cmd_exponent_map)

    v = sub.add_parser("verify", help="run the invariant audit suite")
    v.add_argument("--seed", type=int, default=None)
    v.set_defaults(func=cmd_verify)

    t = sub.add_parser("trace-compare", help="compare two energy CSV traces")
    t.add_argument("traces", nargs=2)
    t.add_argument("--tol", type=float, default=0.0)
    t.set_defaults(func=cmd_trace_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
