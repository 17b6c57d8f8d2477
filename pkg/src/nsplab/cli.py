"""Command-line front end.

Subcommands:
  kg-verify         acoustic propagator property suite + multiplier table
  simulate          one trajectory; writes ledger.csv and a checkpoint
  sweep             full epsilon sweep; writes metrics.csv and rates.csv
  mollifier-verify  forward/inverse kernel-scaling measurements
  compare           coupled-path scaled-vs-incompressible distances
  report            re-render text summaries from stored CSV files

The output directory is resolved as: --output flag, else the
NSPLAB_OUTPUT_ROOT environment variable, else the config's output_dir.
--seed overrides the config seed everywhere.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from . import spectral as sp
from .acoustic import (
    KGParams,
    kg_homogeneous_propagate,
    per_mode_energy,
    strichartz_l2_check,
)
from .fluid import make_ill_prepared_data
from .harness import (
    RunConfig,
    RATES_HEADER,
    load_config,
    kappa_for,
    fit_rate,
    run_sweep,
    verify_multiplier_bounds,
    write_checkpoint,
    write_ledger_csv,
    write_metrics_csv,
    write_multipliers_csv,
    write_rates_csv,
    read_metrics_csv,
    read_rates_csv,
    _write_csv,
)
from .noise import NoiseModel
from .solvers import (
    StepScheme,
    admissible_dt,
    ins_step,
    nsp_step,
    simulate_with_ledger,
)
from .spectral import MollifierSpec, SpectralGrid


def _load(args):
    config = load_config(args.config) if args.config else RunConfig()
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    return config


def _outdir(args, config):
    out = args.output or os.environ.get("NSPLAB_OUTPUT_ROOT") or \
        config.output_dir
    os.makedirs(out, exist_ok=True)
    return out


def _add_common(p):
    p.add_argument("--config", help="flat key=value config file")
    p.add_argument("--seed", type=int, default=None,
                   help="override the config seed")
    p.add_argument("--output", help="output directory "
                   "(overrides NSPLAB_OUTPUT_ROOT and the config)")


def cmd_kg_verify(args):
    config = _load(args)
    out = _outdir(args, config)
    grid = SpectralGrid(args.n or config.n, config.length)

    rows = verify_multiplier_bounds(grid)
    path = os.path.join(out, "multipliers.csv")
    write_multipliers_csv(path, rows)
    bad = [r for r in rows if not r[-1]]
    print(f"multiplier bounds: {len(rows) - len(bad)}/{len(rows)} checks "
          f"pass -> {path}")

    # propagator properties on random data
    rng = np.random.Generator(np.random.Philox(key=[config.seed, 0x4B]))
    params = KGParams(eps_beta=0.3, gamma=config.gamma)
    sig = rng.standard_normal(grid.shape)
    sig -= np.mean(sig)
    pot = rng.standard_normal(grid.shape)
    from .acoustic import AcousticState
    state = AcousticState(sigma=sig, grad_psi=sp.gradient(pot, grid))
    one = kg_homogeneous_propagate(state, params, grid, 1.1)
    two = kg_homogeneous_propagate(
        kg_homogeneous_propagate(state, params, grid, 0.6), params, grid, 0.5
    )
    group_err = sp.l2_norm(one.sigma - two.sigma, grid) + sp.l2_norm(
        one.grad_psi - two.grad_psi, grid
    )
    e0 = per_mode_energy(state, params, grid)
    e1 = per_mode_energy(one, params, grid)
    energy_err = float(np.max(np.abs(e1 - e0)) / max(np.max(e0), 1e-300))
    transfer = strichartz_l2_check(params, grid, batch=2, samples=16,
                                   seed=config.seed)
    ok = group_err < 1e-10 and energy_err < 1e-10 and not bad
    print(f"group property error:       {group_err:.3e}")
    print(f"per-mode energy drift:      {energy_err:.3e}")
    print(f"transfer constants:         c_sigma={transfer['c_sigma']:.3f} "
          f"c_gradpsi={transfer['c_gradpsi']:.3f}")
    print("kg-verify:", "PASS" if ok else "FAIL")
    return 0 if ok else 1


def cmd_simulate(args):
    config = _load(args)
    out = _outdir(args, config)
    epsilon = args.epsilon if args.epsilon is not None else \
        config.epsilon_list[0]
    params = config.phys_params(epsilon)
    grid = SpectralGrid(config.n, config.length)
    noise = NoiseModel(
        grid, mode_count=config.noise_modes, seed=config.seed,
        decay=config.noise_decay, support_fraction=config.noise_support,
        amplitude=config.noise_amplitude,
    )
    state0 = make_ill_prepared_data(params, grid, seed=config.seed,
                                    amplitude=config.data_amplitude)
    base = config.dt_safety * admissible_dt(grid, params, safety=1.0)
    n_steps = max(1, int(np.ceil(config.T / base)))
    dt = config.T / n_steps
    print(f"epsilon={epsilon} dt={dt:.3e} steps={n_steps} path={args.path}")
    final, ledger = simulate_with_ledger(
        state0, params, StepScheme(dt), noise, n_steps, path=args.path
    )
    ledger_path = os.path.join(out, "ledger.csv")
    write_ledger_csv(ledger_path, ledger)
    chk = os.path.join(out, f"checkpoint-eps{epsilon}-path{args.path}")
    write_checkpoint(chk, final, grid, params)
    print(f"ledger -> {ledger_path}")
    print(f"checkpoint -> {chk}.bin / .manifest")
    print(f"max violation {ledger.max_violation:.3e} "
          f"(tau={ledger.tau:.3e}), "
          f"violating steps {100 * ledger.violation_fraction:.1f}%")
    return 0


def cmd_sweep(args):
    config = _load(args)
    out = _outdir(args, config)

    def progress(eps, path, steps):
        print(f"  epsilon={eps} path={path} done ({steps} steps)",
              flush=True)

    result = run_sweep(config, progress=progress if args.verbose else None)
    metrics_path = os.path.join(out, "metrics.csv")
    rates_path = os.path.join(out, "rates.csv")
    write_metrics_csv(metrics_path, result.metrics_rows)
    write_rates_csv(rates_path, result.reports)
    print(f"metrics -> {metrics_path}")
    print(f"rates   -> {rates_path}")
    for r in result.reports:
        print(f"{r.quantity:16s} slope={r.fitted_slope:+.3f} "
              f"predicted={r.predicted_exponent:+.3f} "
              f"R2={r.r_squared:.3f} monotone={r.monotone} "
              f"{'PASS' if r.passed else 'FAIL'}")
    print(f"energy uniformity ratio: {result.uniform_energy_ratio:.3f}")
    if result.failed_paths:
        print(f"flagged paths: {result.failed_paths}")
    return 0


def cmd_mollifier_verify(args):
    config = _load(args)
    out = _outdir(args, config)
    n = args.n or 64
    grid = SpectralGrid(n, config.length)
    kappas = np.geomspace(4.0 * grid.h, grid.length / 8.0, 5)

    rows = []
    ok = True
    for p, alpha in ((2, 2.6), (6, 1.2)):
        predicted = 1.0 - 3.0 * (0.5 - 1.0 / p)
        errs = np.zeros(len(kappas))
        for seed in range(1, 5):
            rng = np.random.Generator(np.random.Philox(key=seed))
            fh = rng.standard_normal(grid.spectral_shape) \
                + 1j * rng.standard_normal(grid.spectral_shape)
            with np.errstate(divide="ignore"):
                amp = np.where(
                    grid.xi_sq_flat > 0,
                    grid.xi_sq_flat ** (-alpha / 2.0), 0.0,
                )
            f = sp.inverse(fh * amp * grid.dealias_mask, grid)
            for i, kappa in enumerate(kappas):
                sm = sp.mollify(f, MollifierSpec(float(kappa)), grid)
                errs[i] += sp.lp_norm(f - sm, p, grid)
        fit = fit_rate(kappas, errs)
        passed = abs(fit.slope - predicted) <= 0.15 * max(1.0, abs(predicted))
        ok = ok and passed
        rows.append((f"forward_estimate_p{p}", predicted, fit.slope,
                     fit.r_squared, passed))
        print(f"p={p}: slope={fit.slope:+.3f} predicted={predicted:+.3f} "
              f"{'PASS' if passed else 'FAIL'}")

    path = os.path.join(out, "mollifier.csv")
    _write_csv(path, RATES_HEADER, rows)
    print(f"table -> {path}")
    return 0 if ok else 1


def cmd_compare(args):
    config = _load(args)
    out = _outdir(args, config)
    epsilon = args.epsilon if args.epsilon is not None else \
        config.epsilon_list[0]
    params = config.phys_params(epsilon)
    grid = SpectralGrid(config.n, config.length)
    noise = NoiseModel(
        grid, mode_count=config.noise_modes, seed=config.seed,
        decay=config.noise_decay, support_fraction=config.noise_support,
        amplitude=config.noise_amplitude,
    )
    state = make_ill_prepared_data(params, grid, seed=config.seed,
                                   amplitude=config.data_amplitude)
    u = sp.project_solenoidal(state.momentum, grid)
    base = config.dt_safety * admissible_dt(grid, params, safety=1.0)
    n_steps = max(1, int(np.ceil(config.T / base)))
    dt = config.T / n_steps
    acc = 0.0
    for j in range(n_steps):
        pm = sp.project_solenoidal(state.momentum, grid)
        acc += dt * sp.l2_norm(pm - u, grid) ** 2
        state = nsp_step(state, params, StepScheme(dt), noise, j,
                         path=args.path)
        u = ins_step(u, params, StepScheme(dt), noise, j, path=args.path)
    dist = float(np.sqrt(acc))
    rows = [(config.run_id, epsilon, args.path, "limit_l2", dist)]
    path = os.path.join(out, "compare.csv")
    write_metrics_csv(path, rows)
    print(f"epsilon={epsilon}: ||P(rho u) - U||_(L2 t,x) = {dist:.6e}")
    print(f"row -> {path}")
    return 0


def cmd_report(args):
    any_found = False
    metrics_path = os.path.join(args.indir, "metrics.csv")
    rates_path = os.path.join(args.indir, "rates.csv")
    if os.path.exists(rates_path):
        any_found = True
        print(f"== {rates_path}")
        for quantity, pred, slope, r2, passed in read_rates_csv(rates_path):
            print(f"{quantity:16s} slope={slope:+.3f} predicted={pred:+.3f} "
                  f"R2={r2:.3f} {'PASS' if passed else 'FAIL'}")
    if os.path.exists(metrics_path):
        any_found = True
        rows = read_metrics_csv(metrics_path)
        print(f"== {metrics_path} ({len(rows)} rows)")
        by_metric = {}
        for _, eps, _, metric, value in rows:
            by_metric.setdefault(metric, {}).setdefault(eps, []).append(value)
        for metric in sorted(by_metric):
            parts = []
            for eps in sorted(by_metric[metric], reverse=True):
                vals = by_metric[metric][eps]
                parts.append(f"eps={eps:g}: {np.mean(vals):.4e}")
            print(f"{metric:16s} " + "  ".join(parts))
    if not any_found:
        print(f"no metrics.csv or rates.csv found in {args.indir}",
              file=sys.stderr)
        return 1
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="nsplab",
        description="numerical laboratory for the scaled stochastic "
                    "Navier-Stokes-Poisson system and its quasineutral/"
                    "incompressible limit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("kg-verify", help="acoustic subsystem checks")
    _add_common(p)
    p.add_argument("--n", type=int, default=None, help="grid override")
    p.set_defaults(func=cmd_kg_verify)

    p = sub.add_parser("simulate", help="single trajectory with ledger")
    _add_common(p)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--path", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="full rate study")
    _add_common(p)
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("mollifier-verify", help="kernel scaling checks")
    _add_common(p)
    p.add_argument("--n", type=int, default=None, help="grid size (>=64)")
    p.set_defaults(func=cmd_mollifier_verify)

    p = sub.add_parser("compare", help="coupled-path limit comparison")
    _add_common(p)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--path", type=int, default=0)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("report", help="summarize stored CSVs")
    p.add_argument("--indir", default=".", help="directory with CSV files")
    p.set_defaults(func=cmd_report)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
