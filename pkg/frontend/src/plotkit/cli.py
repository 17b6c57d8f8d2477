"""plotkit command line: batch CSV tables -> figure files."""

import argparse
import sys

from .figures import FigureSpec, plot_ledger, plot_multipliers, plot_rates
from .schemas import SchemaError


def build_parser():
    parser = argparse.ArgumentParser(
        prog="plotkit",
        description="render figures from nsplab CSV output tables",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rates", help="log-log decay plots with slopes")
    p.add_argument("--in", dest="inputs", nargs=2, required=True,
                   metavar=("RATES_CSV", "METRICS_CSV"))
    p.add_argument("--out", required=True, help="output image path")
    p.add_argument("--quantity", action="append", default=[],
                   help="restrict to this quantity (repeatable)")
    p.add_argument("--scale", choices=["loglog", "linear"],
                   default="loglog")
    p.add_argument("--no-predicted", action="store_true",
                   help="omit the predicted-exponent reference line")
    p.set_defaults(builder=plot_rates)

    p = sub.add_parser("ledger", help="energy ledger time series")
    p.add_argument("--in", dest="inputs", nargs=1, required=True,
                   metavar="LEDGER_CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(builder=plot_ledger, quantity=[], scale="linear",
                   no_predicted=True)

    p = sub.add_parser("multipliers", help="bound-check heatmaps")
    p.add_argument("--in", dest="inputs", nargs=1, required=True,
                   metavar="MULTIPLIERS_CSV")
    p.add_argument("--out", required=True)
    p.set_defaults(builder=plot_multipliers, quantity=[], scale="linear",
                   no_predicted=True)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    spec = FigureSpec(
        inputs=list(args.inputs),
        output=args.out,
        quantities=list(args.quantity),
        scale=args.scale,
        annotate_predicted=not args.no_predicted,
    )
    try:
        out = args.builder(spec)
    except (SchemaError, OSError) as exc:
        print(f"plotkit: error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {out} and {out}.txt")
    return 0


if __name__ == "__main__":
    sys.exit(main())
