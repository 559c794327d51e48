"""Command line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from fractions import Fraction

from ..assembly import save_coefficient
from ..correctors import DEFAULT_DOF_CAP
from ..mesh import is_power_of_two
from ..errors import ConfigError, DofCapExceeded, NumericalError
from .models import ModelSpec, generate_coefficient
from .results import to_csv
from .studies import StudyConfig, run_study

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3

SUBCOMMANDS = {
    "solve": "single",
    "h-sweep": "h-sweep",
    "ell-sweep": "ell-sweep",
    "decay": "decay",
}


def parse_size(text: str) -> int:
    """Mesh size as cells per axis: accepts ``1/8``, ``0.125``, ``2^-3`` or ``2**-3``."""
    t = text.strip().replace("**", "^")
    try:
        if t.startswith("2^"):
            value = Fraction(2) ** int(t[2:])
        else:
            value = Fraction(t)
    except (ValueError, ZeroDivisionError):
        raise ConfigError(f"cannot parse mesh size {text!r}") from None
    if value <= 0 or value > 1 or (1 / value).denominator != 1 or not is_power_of_two(int(1 / value)):
        raise ConfigError(f"mesh size {text!r} must be 1/n with n a power of two")
    return int(1 / value)


def _sizes(text: str) -> list[int]:
    return [parse_size(t) for t in text.split(",") if t.strip()]


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"expected a comma-separated list of integers, got {text!r}") from None


def _ells(text: str) -> list[int | None]:
    out = []
    for t in text.split(","):
        t = t.strip()
        if not t:
            continue
        if t in ("sat", "ideal", "inf"):
            out.append(None)
        else:
            try:
                out.append(int(t))
            except ValueError:
                raise ConfigError(f"ell must be an integer or 'sat', got {t!r}") from None
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hplod", description="High-order localized multiscale solver and studies.")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--dim", type=int, default=2, choices=(1, 2))
    common.add_argument("--eps", default="1/32", help="coefficient scale (default 1/32)")
    common.add_argument("--model", default="rough-a1", choices=("rough-a1", "rough-a2", "constant", "file"))
    common.add_argument("--coeff-file", default=None, help="coefficient CSV for --model file")
    common.add_argument("--value", type=float, default=1.0, help="value of the constant model")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=None, help="output CSV (stdout if omitted)")
    common.add_argument("-v", "--verbose", action="store_true")

    for name in SUBCOMMANDS:
        sp = sub.add_parser(name, parents=[common])
        sp.add_argument("--H", default="1/4,1/8,1/16" if name == "h-sweep" else "1/8", metavar="SIZES", help="coarse mesh sizes, comma separated")
        sp.add_argument("--h", default="1/128", metavar="SIZE", help="fine mesh size (default 1/128)")
        sp.add_argument("--p", default="1", help="polynomial degrees")
        default_ell = {"h-sweep": "sat", "ell-sweep": "1,2,3,4,5", "decay": "1,2,3,4,5", "solve": "2"}[name]
        sp.add_argument("--ell", default=default_ell, help="localization parameters (integers or 'sat')")
        sp.add_argument("--rhs", default="f1", help="f1, f2, const or expr=<formula in x1, x2>")
        sp.add_argument("--threads", type=int, default=1)
        sp.add_argument("--dof-cap", type=int, default=DEFAULT_DOF_CAP)

    sub.add_parser("gen-coeff", parents=[common])
    return parser


def _model(args) -> ModelSpec:
    return ModelSpec(
        kind=args.model,
        dim=args.dim,
        n_eps=parse_size(args.eps),
        seed=args.seed,
        value=args.value,
        path=args.coeff_file,
    )


def _emit(text: str, out) -> None:
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        model = _model(args)
        if args.command == "gen-coeff":
            coef = generate_coefficient(model)
            save_coefficient(coef, args.out if args.out else sys.stdout)
            return EXIT_OK
        config = StudyConfig(
            study=SUBCOMMANDS[args.command],
            dim=args.dim,
            H=_sizes(args.H),
            p=_ints(args.p),
            ell=_ells(args.ell),
            h=parse_size(args.h),
            model=model,
            rhs=args.rhs,
            threads=args.threads,
            dof_cap=args.dof_cap,
        )
        result = run_study(config)
    except (ConfigError, DofCapExceeded, FileNotFoundError) as exc:
        print(f"hplod: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"hplod: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    _emit(to_csv(result), args.out)
    if "failures" in result.metadata:
        print(f"hplod: some rows failed: {result.metadata['failures']}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
