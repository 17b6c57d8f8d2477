"""Figure builders for the harness CSV tables.

Each builder writes one image file plus a sidecar text summary
(`<image>.txt`) that echoes every plotted value at full precision, so
figures can be audited against the source tables without re-parsing
pixels.
"""

from dataclasses import dataclass, field

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .schemas import (  # noqa: E402
    SchemaError,
    read_ledger,
    read_metrics,
    read_multipliers,
    read_rates,
)

LEDGER_SERIES = ["kinetic", "internal", "electric",
                 "dissipation_cum", "ito_cum", "martingale_cum"]


@dataclass
class FigureSpec:
    """What to draw and where to put it."""

    inputs: list
    output: str
    quantities: list = field(default_factory=list)
    scale: str = "loglog"
    annotate_predicted: bool = True

    def __post_init__(self):
        if self.scale not in ("loglog", "linear"):
            raise ValueError(f"unknown scale {self.scale!r}")
        if not self.inputs:
            raise ValueError("no input files given")


def _sidecar(path):
    return path + ".txt"


def _write_sidecar(path, lines):
    with open(_sidecar(path), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def plot_rates(spec):
    """Log-log decay figure: per-epsilon means with error bars, a dashed
    fitted-slope line, and a dotted predicted-exponent reference anchored
    at the largest epsilon.

    Expects spec.inputs = [rates.csv, metrics.csv].
    """
    if len(spec.inputs) != 2:
        raise SchemaError("rates figure needs exactly two inputs: "
                          "rates.csv and metrics.csv")
    rates = {r[0]: r for r in read_rates(spec.inputs[0])}
    metrics = read_metrics(spec.inputs[1])

    quantities = spec.quantities or sorted(rates)
    missing = [q for q in quantities if q not in rates]
    if missing:
        raise SchemaError(f"quantities {missing} not present in "
                          f"{spec.inputs[0]}")

    fig, axes = plt.subplots(
        1, len(quantities), figsize=(4.2 * len(quantities), 3.6),
        squeeze=False,
    )
    lines = []
    for ax, quantity in zip(axes[0], quantities):
        per_eps = {}
        for _, eps, _, metric, value in metrics:
            if metric == quantity:
                per_eps.setdefault(eps, []).append(value)
        if len(per_eps) < 2:
            plt.close(fig)
            raise SchemaError(
                f"insufficient points for {quantity!r}: need at least two "
                f"epsilon values, found {len(per_eps)}"
            )
        eps = np.array(sorted(per_eps, reverse=True))
        means = np.array([np.mean(per_eps[e]) for e in eps])
        stds = np.array([np.std(per_eps[e]) for e in eps])
        _, predicted, slope, r_sq, _ = rates[quantity]

        ax.errorbar(eps, means, yerr=stds, fmt="o", capsize=3,
                    label="per-epsilon mean")
        positive = means > 0
        if np.any(positive):
            anchor_e = eps[positive][0]
            anchor_v = means[positive][0]
            ax.plot(eps, anchor_v * (eps / anchor_e) ** slope, "--",
                    label=f"fit slope {slope:.3f}")
            if spec.annotate_predicted:
                ax.plot(eps, anchor_v * (eps / anchor_e) ** predicted,
                        ":", label=f"predicted {predicted:.3f}")
        if spec.scale == "loglog":
            ax.set_xscale("log")
            ax.set_yscale("log")
        ax.set_xlabel("epsilon")
        ax.set_title(f"{quantity} (R2={r_sq:.3f})")
        ax.legend(fontsize=8)

        lines.append(f"quantity {quantity}")
        lines.append(f"fitted_slope {slope!r}")
        lines.append(f"predicted_exponent {predicted!r}")
        lines.append(f"r_squared {r_sq!r}")
        for e, m, s in zip(eps, means, stds):
            lines.append(
                f"point {float(e)!r} {float(m)!r} {float(s)!r}"
            )

    fig.tight_layout()
    fig.savefig(spec.output, dpi=150)
    plt.close(fig)
    _write_sidecar(spec.output, lines)
    return spec.output


def plot_ledger(spec):
    """Energy-ledger time series with violation markers.

    The cumulative dissipation column must be nondecreasing; this is
    re-checked from the parsed values before anything is drawn.
    """
    if len(spec.inputs) != 1:
        raise SchemaError("ledger figure needs exactly one input: "
                          "ledger.csv")
    cols = read_ledger(spec.inputs[0])
    diss = np.array(cols["dissipation_cum"])
    if diss.size and np.any(np.diff(diss) < -1e-12 * max(1.0, diss[-1])):
        raise SchemaError(
            f"{spec.inputs[0]}: cumulative dissipation is not "
            "nondecreasing; refusing to plot a corrupt ledger"
        )

    time = np.array(cols["time"])
    fig, (ax, axv) = plt.subplots(
        2, 1, figsize=(6.4, 5.4), sharex=True,
        gridspec_kw={"height_ratios": [3, 1]},
    )
    lines = []
    for name in LEDGER_SERIES:
        vals = np.array(cols[name])
        ax.plot(time, vals, label=name)
        lines.append(f"series {name} " +
                     " ".join(repr(v) for v in cols[name]))
    ax.set_ylabel("energy / cumulative terms")
    ax.legend(fontsize=8, ncol=2)

    viol = np.array(cols["violation"])
    axv.plot(time, viol, color="k", lw=0.8)
    bad = viol > 0
    if np.any(bad):
        axv.plot(time[bad], viol[bad], "rx", label="violation > tau")
        axv.legend(fontsize=8)
    axv.set_xlabel("time")
    axv.set_ylabel("violation")
    lines.append("series violation " +
                 " ".join(repr(v) for v in cols["violation"]))
    lines.append("series time " + " ".join(repr(v) for v in cols["time"]))

    fig.tight_layout()
    fig.savefig(spec.output, dpi=150)
    plt.close(fig)
    _write_sidecar(spec.output, lines)
    return spec.output


def plot_multipliers(spec):
    """Heatmaps of measured multiplier values over the (gamma, eps_beta)
    lattice, one panel per (case, quantity) pair, with failed bound
    checks marked."""
    if len(spec.inputs) != 1:
        raise SchemaError("multipliers figure needs exactly one input: "
                          "multipliers.csv")
    rows = read_multipliers(spec.inputs[0])
    if not rows:
        raise SchemaError(f"{spec.inputs[0]}: no data rows")

    panels = {}
    for gamma, eps_beta, case, quantity, measured, bound, passed in rows:
        panels.setdefault((case, quantity), []).append(
            (gamma, eps_beta, measured, bound, passed)
        )
    keys = sorted(panels)
    fig, axes = plt.subplots(
        1, len(keys), figsize=(3.4 * len(keys), 3.2), squeeze=False,
    )
    lines = []
    for ax, key in zip(axes[0], keys):
        entries = panels[key]
        gammas = sorted({e[0] for e in entries})
        betas = sorted({e[1] for e in entries})
        img = np.full((len(betas), len(gammas)), np.nan)
        for gamma, eps_beta, measured, bound, passed in entries:
            i = betas.index(eps_beta)
            j = gammas.index(gamma)
            img[i, j] = measured
            mark = "" if passed else " FAIL"
            lines.append(f"cell {key[0]} {key[1]} {gamma!r} {eps_beta!r} "
                         f"{measured!r} {bound!r}{mark}")
            if not passed:
                ax.text(j, i, "x", color="red", ha="center", va="center")
        im = ax.imshow(img, origin="lower", aspect="auto")
        ax.set_xticks(range(len(gammas)),
                      [f"{g:g}" for g in gammas], fontsize=8)
        ax.set_yticks(range(len(betas)),
                      [f"{b:g}" for b in betas], fontsize=8)
        ax.set_xlabel("gamma")
        ax.set_ylabel("eps^beta")
        ax.set_title(f"case {key[0]}: {key[1]}", fontsize=9)
        fig.colorbar(im, ax=ax, shrink=0.85)

    fig.tight_layout()
    fig.savefig(spec.output, dpi=150)
    plt.close(fig)
    _write_sidecar(spec.output, lines)
    return spec.output
