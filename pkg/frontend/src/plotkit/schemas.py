"""Readers for the fixed CSV schemas emitted by the simulation harness.

plotkit never recomputes physics: every number that reaches a figure is
parsed from one of these tables. The headers are part of the interface
contract and any mismatch is rejected with a diagnostic.
"""

import csv

METRICS_HEADER = ["run_id", "epsilon", "path", "metric", "value"]
RATES_HEADER = [
    "quantity", "predicted_exponent", "fitted_slope", "r_squared", "pass"
]
LEDGER_HEADER = [
    "step", "time", "kinetic", "internal", "electric",
    "dissipation_cum", "ito_cum", "martingale_cum", "violation",
]
MULTIPLIERS_HEADER = [
    "gamma", "eps_beta", "case", "quantity", "measured", "bound", "pass"
]


class SchemaError(ValueError):
    """Raised when a CSV file does not match its expected schema."""


def _read_table(path, header):
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            found = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file, expected header "
                              f"{','.join(header)}")
        if found != header:
            raise SchemaError(
                f"{path}: header mismatch, expected "
                f"{','.join(header)} but found {','.join(found)}"
            )
        rows = []
        for i, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise SchemaError(
                    f"{path}:{i}: expected {len(header)} fields, "
                    f"found {len(row)}"
                )
            rows.append(row)
    return rows


def read_metrics(path):
    """Returns rows as (run_id, epsilon, path_index, metric, value)."""
    rows = _read_table(path, METRICS_HEADER)
    try:
        return [(r[0], float(r[1]), int(r[2]), r[3], float(r[4]))
                for r in rows]
    except ValueError as exc:
        raise SchemaError(f"{path}: bad numeric field: {exc}") from exc


def read_rates(path):
    """Returns rows as (quantity, predicted, slope, r_squared, passed)."""
    rows = _read_table(path, RATES_HEADER)
    try:
        return [(r[0], float(r[1]), float(r[2]), float(r[3]),
                 r[4].strip() == "1") for r in rows]
    except ValueError as exc:
        raise SchemaError(f"{path}: bad numeric field: {exc}") from exc


def read_ledger(path):
    """Returns a dict of column name -> float list, plus integer steps."""
    rows = _read_table(path, LEDGER_HEADER)
    try:
        cols = {name: [] for name in LEDGER_HEADER}
        for r in rows:
            cols["step"].append(int(r[0]))
            for name, val in zip(LEDGER_HEADER[1:], r[1:]):
                cols[name].append(float(val))
    except ValueError as exc:
        raise SchemaError(f"{path}: bad numeric field: {exc}") from exc
    return cols


def read_multipliers(path):
    """Returns rows as (gamma, eps_beta, case, quantity, measured,
    bound, passed)."""
    rows = _read_table(path, MULTIPLIERS_HEADER)
    try:
        return [(float(r[0]), float(r[1]), r[2], r[3], float(r[4]),
                 float(r[5]), r[6].strip() == "1") for r in rows]
    except ValueError as exc:
        raise SchemaError(f"{path}: bad numeric field: {exc}") from exc
