"""Experiment orchestration: configuration, epsilon sweeps, rate fitting,
multiplier-bound tables, and CSV/checkpoint persistence.

The sweep measures, per (epsilon, path), time-integrated and sup-in-time
functionals of a coupled pair of trajectories -- the scaled compressible
system and the incompressible reference driven by the identical Wiener
path -- and fits log-log decay rates against the epsilon grid:

  qmom_kappa_sq   int_0^T ||Q [rho u]_kappa||_2^2 dt   (kappa from the rule)
  qvel_sq         int_0^T ||Q u||_2^2 dt
  sup_kinetic / sup_internal / sup_electric   (energy components)
  sigma_small_sup   sup_t int sigma^2 1_{2|sigma| <= 1}
  sigma_large_sup   sup_t int |sigma|^gamma 1_{2|sigma| > 1}
  limit_l2        (int_0^T ||P(rho u) - U_ref||_2^2 dt)^(1/2)
  electric_pair   |int_0^T int eps^-2 (rho-1) grad V . phi dx dt|

with phi a fixed unit-norm band-limited solenoidal test field shared by
every run.  Decay exponents are accepted at an 80% floor of the predicted
envelope, plus a strict monotonicity requirement across the grid.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import spectral as sp
from .fluid import PhysParams, FluidState, make_ill_prepared_data
from .noise import NoiseModel
from .acoustic import KGParams, kg_multiplier_m, kg_multiplier_n
from .solvers import (
    StepRejected,
    StepScheme,
    admissible_dt,
    ins_step,
    nsp_step,
)
from .spectral import MollifierSpec, SpectralGrid, mollifier_symbol

__all__ = [
    "RunConfig",
    "RateReport",
    "SweepResult",
    "parse_config",
    "load_config",
    "config_to_text",
    "kappa_for",
    "fit_rate",
    "run_sweep",
    "electric_term_decay",
    "verify_multiplier_bounds",
    "write_metrics_csv",
    "read_metrics_csv",
    "write_rates_csv",
    "read_rates_csv",
    "write_ledger_csv",
    "read_ledger_csv",
    "write_multipliers_csv",
    "write_checkpoint",
    "read_checkpoint",
    "METRIC_NAMES",
    "METRICS_HEADER",
    "RATES_HEADER",
    "MULTIPLIERS_HEADER",
]

MODES = ("quasineutral", "zero-electron-mass")
KAPPA_RULES = ("epsilon-power", "fixed")

METRIC_NAMES = (
    "qmom_kappa_sq",
    "qvel_sq",
    "sup_kinetic",
    "sup_internal",
    "sup_electric",
    "sigma_small_sup",
    "sigma_large_sup",
    "limit_l2",
    "electric_pair",
)

METRICS_HEADER = ("run_id", "epsilon", "path", "metric", "value")
RATES_HEADER = ("quantity", "predicted_exponent", "fitted_slope",
                "r_squared", "pass")
MULTIPLIERS_HEADER = ("gamma", "eps_beta", "case", "quantity", "measured",
                      "bound", "pass")


@dataclass(frozen=True)
class RunConfig:
    """Flat sweep configuration; every field is a documented config key."""

    n: int = 32
    length: float = 2.0 * math.pi
    gamma: float = 2.0
    nu1: float = 0.1
    nu2: float = 0.0
    beta: float = 0.2
    delta: float = 0.1
    mode: str = "quasineutral"
    epsilon_list: tuple = (0.1, 0.0707, 0.05, 0.0354, 0.025)
    T: float = 0.25
    dt_safety: float = 0.5
    noise_modes: int = 16
    noise_amplitude: float = 0.05
    noise_decay: float = 2.0
    noise_support: float = 0.5
    paths: int = 8
    kappa_rule: str = "epsilon-power"
    kappa_fixed: float = 0.3
    data_amplitude: float = 0.5
    seed: int = 0
    output_dir: str = "."

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.kappa_rule not in KAPPA_RULES:
            raise ValueError(
                f"kappa_rule must be one of {KAPPA_RULES}, got "
                f"{self.kappa_rule!r}"
            )
        eps = self.epsilon_list
        if len(eps) < 1 or any(e <= 0 for e in eps):
            raise ValueError("epsilon_list must contain positive values")
        if any(a <= b for a, b in zip(eps, eps[1:])):
            raise ValueError("epsilon_list must be strictly decreasing")
        if self.mode == "quasineutral":
            if not 0.0 < self.beta < 1.0 / (2.0 + self.delta):
                raise ValueError(
                    f"quasineutral mode needs 0 < beta < 1/(2+delta) = "
                    f"{1.0 / (2.0 + self.delta):.4f}, got {self.beta}"
                )
        else:
            if self.beta != 0.0:
                raise ValueError("zero-electron-mass mode needs beta = 0")
        if self.T <= 0:
            raise ValueError("T must be positive")
        if not 0.0 < self.dt_safety <= 1.0:
            raise ValueError("dt_safety must lie in (0,1]")
        if self.paths < 1:
            raise ValueError("paths must be positive")

    def phys_params(self, epsilon):
        return PhysParams(gamma=self.gamma, nu1=self.nu1, nu2=self.nu2,
                          epsilon=epsilon, beta=self.beta,
                          delta_slack=self.delta)

    @property
    def run_id(self):
        return f"{self.mode}-n{self.n}-seed{self.seed}"


_CONFIG_PARSERS = {
    "n": int,
    "length": float,
    "gamma": float,
    "nu1": float,
    "nu2": float,
    "beta": float,
    "delta": float,
    "mode": str,
    "epsilon_list": lambda s: tuple(float(x) for x in s.split(",") if x.strip()),
    "T": float,
    "dt_safety": float,
    "noise_modes": int,
    "noise_amplitude": float,
    "noise_decay": float,
    "noise_support": float,
    "paths": int,
    "kappa_rule": str,
    "kappa_fixed": float,
    "data_amplitude": float,
    "seed": int,
    "output_dir": str,
}


def parse_config(text):
    """RunConfig from flat 'key = value' lines; '#' starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value': {raw!r}")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in _CONFIG_PARSERS:
            raise ValueError(f"line {lineno}: unknown config key {key!r}")
        if key in values:
            raise ValueError(f"line {lineno}: duplicate config key {key!r}")
        try:
            values[key] = _CONFIG_PARSERS[key](val)
        except ValueError as exc:
            raise ValueError(
                f"line {lineno}: bad value for {key!r}: {val!r}"
            ) from exc
    return RunConfig(**values)


def load_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def config_to_text(config):
    lines = []
    for key in _CONFIG_PARSERS:
        val = getattr(config, key)
        if key == "epsilon_list":
            val = ",".join(repr(e) for e in val)
        lines.append(f"{key} = {val}")
    return "\n".join(lines) + "\n"


def kappa_for(config, epsilon):
    """Mollifier width: kappa = eps^(2 delta beta / 5) or the fixed value."""
    if config.kappa_rule == "fixed":
        return config.kappa_fixed
    kappa = epsilon ** (2.0 * config.delta * config.beta / 5.0)
    # beta = 0 gives kappa = 1; clamp just inside the admissible range
    return min(kappa, 1.0 - 1e-9)


@dataclass
class FitResult:
    slope: float
    intercept: float
    r_squared: float
    excluded: tuple = ()


def fit_rate(epsilons, values):
    """OLS fit of log(value) against log(epsilon).

    Nonpositive values are excluded (flagged in the result); fewer than 3
    usable points is an error.
    """
    epsilons = np.asarray(epsilons, dtype=float)
    values = np.asarray(values, dtype=float)
    if epsilons.shape != values.shape:
        raise ValueError("epsilons and values must have equal length")
    keep = values > 0.0
    excluded = tuple(float(e) for e in epsilons[~keep])
    if int(np.count_nonzero(keep)) < 3:
        raise ValueError(
            f"need at least 3 positive values, got {int(np.count_nonzero(keep))}"
        )
    x = np.log(epsilons[keep])
    y = np.log(values[keep])
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    sstot = float(np.sum((y - np.mean(y)) ** 2))
    r2 = 1.0 if sstot == 0.0 else 1.0 - float(np.sum(resid ** 2)) / sstot
    return FitResult(slope=float(slope), intercept=float(intercept),
                     r_squared=r2, excluded=excluded)


@dataclass
class RateReport:
    quantity: str
    epsilons: tuple
    means: tuple
    std_errors: tuple
    fitted_slope: float
    r_squared: float
    predicted_exponent: float
    monotone: bool
    passed: bool
    floor_fraction: float = 0.8
    excluded: tuple = ()


def _make_report(quantity, epsilons, per_eps_values, predicted,
                 floor=0.8, require_slope=True, require_monotone=True):
    """per_eps_values: list (per epsilon) of per-path value lists."""
    means = tuple(float(np.mean(v)) for v in per_eps_values)
    ses = tuple(
        float(np.std(v, ddof=1) / np.sqrt(len(v))) if len(v) > 1 else 0.0
        for v in per_eps_values
    )
    monotone = all(a > b for a, b in zip(means, means[1:]))
    try:
        fit = fit_rate(epsilons, means)
        slope, r2, excluded = fit.slope, fit.r_squared, fit.excluded
    except ValueError:
        slope, r2, excluded = float("nan"), float("nan"), ()
    passed = True
    if require_monotone:
        passed = passed and monotone
    if require_slope:
        passed = passed and np.isfinite(slope) \
            and slope >= floor * predicted
    return RateReport(
        quantity=quantity, epsilons=tuple(float(e) for e in epsilons),
        means=means, std_errors=ses, fitted_slope=float(slope),
        r_squared=float(r2), predicted_exponent=float(predicted),
        monotone=monotone, passed=bool(passed), floor_fraction=floor,
        excluded=excluded,
    )


def electric_term_decay(epsilons, per_eps_values, gamma, beta, delta,
                        floor=0.8):
    """RateReport for the density-fluctuation/electric-field pairing.

    Predicted exponent: 1 - beta(3+delta) when gamma >= 2, else
    gamma - beta/2 - 1 (valid for beta < 2(gamma-1)).
    """
    if gamma >= 2.0:
        predicted = 1.0 - beta * (3.0 + delta)
    else:
        if beta >= 2.0 * (gamma - 1.0):
            raise ValueError(
                f"gamma<2 branch needs beta < 2(gamma-1) = "
                f"{2.0 * (gamma - 1.0):.4f}, got beta={beta}"
            )
        predicted = gamma - 0.5 * beta - 1.0
    # the pairing integral is a signed, nearly mean-zero quantity, so its
    # sample means need not be monotone; only the fitted slope is checked
    return _make_report("electric_pair", epsilons, per_eps_values,
                        predicted, floor=floor, require_monotone=False)


def _solenoidal_test_field(grid, seed):
    """Fixed unit-norm band-limited solenoidal field (shared across runs)."""
    rng = np.random.Generator(np.random.Philox(key=[seed, 0x7E]))
    k = np.fft.fftfreq(grid.n, d=1.0 / grid.n)
    kr = np.fft.rfftfreq(grid.n, d=1.0 / grid.n)
    band = (
        (np.abs(k[:, None, None]) <= 2)
        & (np.abs(k[None, :, None]) <= 2)
        & (np.abs(kr[None, None, :]) <= 2)
    )
    fh = np.where(
        band,
        rng.standard_normal((3,) + grid.spectral_shape)
        + 1j * rng.standard_normal((3,) + grid.spectral_shape),
        0.0,
    )
    phi = sp.project_solenoidal(sp.inverse(fh, grid), grid)
    phi -= np.mean(phi, axis=(-3, -2, -1), keepdims=True)
    return phi / sp.l2_norm(phi, grid)


class _PathAccumulator:
    """Left-point quadrature of all per-path metrics along one trajectory."""

    def __init__(self, grid, params, kappa, phi, kind="gaussian-fourier"):
        self.grid = grid
        self.params = params
        self.phi = phi
        self.symbol = mollifier_symbol(MollifierSpec(kappa, kind), grid)
        self.totals = {name: 0.0 for name in METRIC_NAMES}

    def update(self, state, u_ref, dt):
        grid = self.grid
        params = self.params
        t = self.totals
        mh = sp.forward(state.momentum, grid)
        dot = (
            grid.xi[0] * mh[0] + grid.xi[1] * mh[1] + grid.xi[2] * mh[2]
        )
        with np.errstate(divide="ignore", invalid="ignore"):
            coef = np.where(grid.xi_d_sq > 0, dot / grid.xi_d_sq, 0.0)
        qh = np.stack([grid.xi[i] * coef for i in range(3)])

        t["qmom_kappa_sq"] += dt * sum(
            sp.spectral_l2(self.symbol * qh[i], grid) ** 2 for i in range(3)
        )
        u = state.velocity()
        uh = sp.forward(u, grid)
        udot = (
            grid.xi[0] * uh[0] + grid.xi[1] * uh[1] + grid.xi[2] * uh[2]
        )
        with np.errstate(divide="ignore", invalid="ignore"):
            ucoef = np.where(grid.xi_d_sq > 0, udot / grid.xi_d_sq, 0.0)
        t["qvel_sq"] += dt * sum(
            sp.spectral_l2(grid.xi[i] * ucoef, grid) ** 2 for i in range(3)
        )

        p_m = state.momentum - sp.inverse(qh, grid)
        t["limit_l2"] += dt * sp.l2_norm(p_m - u_ref, grid) ** 2

        kin = 0.5 * grid.h ** 3 * float(
            np.sum(state.rho * np.sum(u * u, axis=0))
        )
        sigma = (state.rho - 1.0) / params.epsilon
        h3 = grid.h ** 3
        if params.gamma == 2.0:
            internal = h3 * float(np.sum(sigma * sigma))
        else:
            from .fluid import relative_energy
            internal = h3 * float(
                np.sum(relative_energy(state.rho, params.gamma))
            ) / params.epsilon ** 2
        gv = sp.gradient(state.potential, grid)
        electric = 0.5 * params.epsilon ** (params.beta - 2.0) * h3 * float(
            np.sum(gv * gv)
        )
        t["sup_kinetic"] = max(t["sup_kinetic"], kin)
        t["sup_internal"] = max(t["sup_internal"], internal)
        t["sup_electric"] = max(t["sup_electric"], electric)

        small = np.abs(sigma) <= 0.5
        t["sigma_small_sup"] = max(
            t["sigma_small_sup"], h3 * float(np.sum(sigma[small] ** 2))
        )
        t["sigma_large_sup"] = max(
            t["sigma_large_sup"],
            h3 * float(np.sum(np.abs(sigma[~small]) ** params.gamma)),
        )

        pair = h3 * float(
            np.sum((state.rho - 1.0) * np.sum(gv * self.phi, axis=0))
        ) / params.epsilon ** 2
        t["electric_pair"] += dt * pair

    def finalize(self):
        out = dict(self.totals)
        out["limit_l2"] = math.sqrt(out["limit_l2"])
        out["electric_pair"] = abs(out["electric_pair"])
        return out


@dataclass
class SweepResult:
    config: RunConfig
    metrics_rows: list
    reports: list
    failed_paths: list = field(default_factory=list)
    uniform_energy_ratio: float = float("nan")


def run_sweep(config, progress=None):
    """Full epsilon sweep; returns metric rows and rate reports.

    For every (epsilon, path) the scaled system and the incompressible
    reference are advanced by the same Wiener path.  A path that aborts
    (positivity failure after retries) is flagged; an epsilon with fewer
    than half its paths surviving fails the sweep.
    """
    grid = SpectralGrid(config.n, config.length)
    noise = NoiseModel(
        grid, mode_count=config.noise_modes, seed=config.seed,
        decay=config.noise_decay, support_fraction=config.noise_support,
        amplitude=config.noise_amplitude,
    )
    phi = _solenoidal_test_field(grid, config.seed)

    rows = []
    failed = []
    per_metric = {
        name: [[] for _ in config.epsilon_list] for name in METRIC_NAMES
    }

    for ie, epsilon in enumerate(config.epsilon_list):
        params = config.phys_params(epsilon)
        kappa = kappa_for(config, epsilon)
        state0 = make_ill_prepared_data(
            params, grid, seed=config.seed, amplitude=config.data_amplitude
        )
        u0 = sp.project_solenoidal(state0.momentum, grid)
        base = config.dt_safety * admissible_dt(grid, params, safety=1.0)
        n_steps = max(1, int(math.ceil(config.T / base)))
        dt = config.T / n_steps
        scheme = StepScheme(dt)

        survivors = 0
        for path in range(config.paths):
            acc = _PathAccumulator(grid, params, kappa, phi)
            state = state0
            u_ref = u0
            try:
                for j in range(n_steps):
                    acc.update(state, u_ref, dt)
                    state = nsp_step(state, params, scheme, noise, j,
                                     path=path)
                    u_ref = ins_step(u_ref, params, scheme, noise, j,
                                     path=path)
            except StepRejected as exc:
                failed.append((epsilon, path, str(exc)))
                continue
            survivors += 1
            values = acc.finalize()
            for name in METRIC_NAMES:
                rows.append(
                    (config.run_id, epsilon, path, name, values[name])
                )
                per_metric[name][ie].append(values[name])
            if progress is not None:
                progress(epsilon, path, n_steps)
        if survivors * 2 < config.paths:
            raise RuntimeError(
                f"epsilon={epsilon}: only {survivors}/{config.paths} paths "
                f"survived"
            )

    predicted = 1.0 - (2.0 + config.delta) * config.beta
    reports = [
        _make_report("qmom_kappa_sq", config.epsilon_list,
                     per_metric["qmom_kappa_sq"], predicted),
        _make_report("qvel_sq", config.epsilon_list,
                     per_metric["qvel_sq"], predicted),
        electric_term_decay(config.epsilon_list,
                            per_metric["electric_pair"],
                            config.gamma, config.beta, config.delta),
        _make_report("limit_l2", config.epsilon_list,
                     per_metric["limit_l2"], 0.0, require_slope=False),
    ]

    sup_totals = [
        np.mean(per_metric["sup_kinetic"][ie])
        + np.mean(per_metric["sup_internal"][ie])
        + np.mean(per_metric["sup_electric"][ie])
        for ie in range(len(config.epsilon_list))
    ]
    ratio = float(np.max(sup_totals) / max(np.min(sup_totals), 1e-300))

    return SweepResult(config=config, metrics_rows=rows, reports=reports,
                       failed_paths=failed, uniform_energy_ratio=ratio)


def verify_multiplier_bounds(grid, gammas=(1.5000001, 2.0, 3.0),
                             eps_betas=(0.5, 0.25, 0.1)):
    """Exhaustive lattice check of the dispersive multiplier bounds.

    Case A: eps^beta < |xi| <= 1 -> m <= 1/(gamma+1);
    case B: |xi| > 1            -> m < 1/gamma;
    all modes: n < (gamma+1)/eps^(2beta) and n*m = eps^beta to 1e-12.
    Returns rows matching MULTIPLIERS_HEADER.
    """
    xi_sq = grid.xi_d_sq_flat[grid.deriv_mask]
    rows = []
    for gamma in gammas:
        for eps_beta in eps_betas:
            params = KGParams(eps_beta=eps_beta, gamma=gamma)
            m = kg_multiplier_m(xi_sq, params)
            n = kg_multiplier_n(xi_sq, params)
            case_a = (xi_sq > eps_beta ** 2) & (xi_sq <= 1.0)
            case_b = xi_sq > 1.0
            checks = []
            if np.any(case_a):
                checks.append(
                    ("A", "m", float(np.max(m[case_a])), 1.0 / (gamma + 1.0))
                )
            if np.any(case_b):
                checks.append(
                    ("B", "m", float(np.max(m[case_b])), 1.0 / gamma)
                )
            checks.append(
                ("all", "n", float(np.max(n)), (gamma + 1.0) / eps_beta ** 2)
            )
            checks.append(
                ("all", "nm_identity",
                 float(np.max(np.abs(n * m - eps_beta))), 1e-12)
            )
            for case, quantity, measured, bound in checks:
                rows.append((gamma, eps_beta, case, quantity, measured,
                             bound, measured <= bound))
    return rows


# ---------------------------------------------------------------------------
# persistence

def _fmt(x):
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def _read_csv(path, header):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        got = tuple(next(reader))
        if got != tuple(header):
            raise ValueError(
                f"schema mismatch in {path}: expected header {header}, "
                f"got {got}"
            )
        return [tuple(row) for row in reader]


def write_metrics_csv(path, rows):
    _write_csv(path, METRICS_HEADER, rows)


def read_metrics_csv(path):
    return [
        (r[0], float(r[1]), int(r[2]), r[3], float(r[4]))
        for r in _read_csv(path, METRICS_HEADER)
    ]


def write_rates_csv(path, reports):
    rows = [
        (r.quantity, r.predicted_exponent, r.fitted_slope, r.r_squared,
         r.passed)
        for r in reports
    ]
    _write_csv(path, RATES_HEADER, rows)


def read_rates_csv(path):
    return [
        (r[0], float(r[1]), float(r[2]), float(r[3]), r[4] == "1")
        for r in _read_csv(path, RATES_HEADER)
    ]


def write_ledger_csv(path, ledger):
    from .solvers import LEDGER_COLUMNS
    _write_csv(path, LEDGER_COLUMNS, ledger.rows())


def read_ledger_csv(path):
    from .solvers import LEDGER_COLUMNS
    rows = _read_csv(path, LEDGER_COLUMNS)
    return [(int(r[0]),) + tuple(float(x) for x in r[1:]) for r in rows]


def write_multipliers_csv(path, rows):
    _write_csv(path, MULTIPLIERS_HEADER, rows)


def write_checkpoint(prefix, state, grid, params):
    """Binary checkpoint: little-endian float64 arrays + text manifest."""
    fields = [
        ("rho", state.rho),
        ("momentum", state.momentum),
        ("potential", state.potential),
    ]
    offsets = []
    with open(prefix + ".bin", "wb") as fh:
        pos = 0
        for name, arr in fields:
            data = np.ascontiguousarray(arr, dtype="<f8")
            fh.write(data.tobytes())
            offsets.append((name, pos, data.size, data.shape))
            pos += data.nbytes
    lines = [
        "format nsplab-checkpoint-1",
        f"n {grid.n}",
        f"length {repr(grid.length)}",
        f"gamma {repr(params.gamma)}",
        f"nu1 {repr(params.nu1)}",
        f"nu2 {repr(params.nu2)}",
        f"epsilon {repr(params.epsilon)}",
        f"beta {repr(params.beta)}",
        f"delta_slack {repr(params.delta_slack)}",
        f"time {repr(state.time)}",
    ]
    for name, pos, size, shape in offsets:
        shape_s = "x".join(str(s) for s in shape)
        lines.append(f"field {name} {pos} {size} {shape_s}")
    with open(prefix + ".manifest", "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def read_checkpoint(prefix):
    """Returns (FluidState, SpectralGrid, PhysParams); exact round trip."""
    meta = {}
    fields = []
    with open(prefix + ".manifest", "r", encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "field":
                name, pos, size, shape_s = parts[1:5]
                shape = tuple(int(s) for s in shape_s.split("x"))
                fields.append((name, int(pos), int(size), shape))
            else:
                meta[parts[0]] = parts[1]
    if meta.get("format") != "nsplab-checkpoint-1":
        raise ValueError(
            f"unsupported checkpoint format: {meta.get('format')!r}"
        )
    grid = SpectralGrid(int(meta["n"]), float(meta["length"]))
    params = PhysParams(
        gamma=float(meta["gamma"]), nu1=float(meta["nu1"]),
        nu2=float(meta["nu2"]), epsilon=float(meta["epsilon"]),
        beta=float(meta["beta"]), delta_slack=float(meta["delta_slack"]),
    )
    arrays = {}
    with open(prefix + ".bin", "rb") as fh:
        raw = fh.read()
    for name, pos, size, shape in fields:
        arrays[name] = np.frombuffer(
            raw, dtype="<f8", count=size, offset=pos
        ).reshape(shape).copy()
    state = FluidState(
        rho=arrays["rho"], momentum=arrays["momentum"],
        potential=arrays["potential"], time=float(meta["time"]),
    )
    return state, grid, params
