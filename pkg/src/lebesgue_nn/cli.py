"""Command-line entry point: ``lebnn <subcommand> [options]``.

Exit status: 0 on success, 1 when ``--assert`` finds a violated invariant
(or a verify suite fails), 2 on usage or configuration errors.
"""

from __future__ import annotations

import argparse
import os
import sys

from .experiments import RUNNERS, ExperimentConfig
from .lebesgue import TrivialCase
from .space import UndefinedRatio, UnsupportedOperation
from .tiebreak import UnsupportedRuleError

EXIT_OK, EXIT_ASSERT, EXIT_USAGE = 0, 1, 2

SEED_ENV = "LEBNN_SEED"

HELP = {
    "nnconv": "NN estimation error E|eta(X^x_m) - anchor| over an m-grid",
    "ratio": "closed- and open-ball Lebesgue ratios at given radii",
    "alphaseq": "alpha-sequence radii r_m and M_alpha(r_m)",
    "conditions": "measure-continuity and tie-bias constants",
    "alongseq": "ratios and Lebesgue verdict along a radius sequence",
    "lebvalue": "Lebesgue value estimate by ball means or NN means",
    "classify": "1-NN classification risk, surrogate and Bayes risk",
}


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    return int(raw) if raw else 42


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--space", default="signed_harmonic:N=8",
                   help="signed_harmonic:N=8 | dyadic:D=3 | unit_interval | finite_atomic:atoms=x:p;x:p")
    p.add_argument("--field", default="positive", help="positive | const:c=.. | dyadic | linear:slope=..,intercept=.. | table:x=v;..")
    p.add_argument("--x", default="0", help="query point")
    p.add_argument("--anchor", default=None, help="reference value (default: eta(x))")
    p.add_argument("--rule", default="lex", help="lex | uniform | positive | bernoulli:C=2.0")
    p.add_argument("--m-grid", "--m", dest="m_grid", default="1:1e6:log", help="'lo:hi:log' or comma list")
    p.add_argument("--radii", default="table", help="table | theta:even | theta:odd | alpha | comma list of radii")
    p.add_argument("--alpha", default="1/2")
    p.add_argument("--trials", type=lambda s: int(float(s)), default=10**5)
    p.add_argument("--seed", type=int, default=None, help=f"default: ${SEED_ENV} or 42")
    p.add_argument("--mode", default="auto", help="auto | exact | mc (lebvalue: ratio | nn)")
    p.add_argument("--tol", type=float, default=1e-2)
    p.add_argument("--m-max", type=lambda s: int(float(s)), default=10**6)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default=None, help="CSV path (default: stdout)")
    p.add_argument("--assert", dest="check", action="store_true", help="exit 1 when an invariant fails")
    p.add_argument("--config", default=None, help="INI file with an [experiment] section of the same keys")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lebnn", description="Lebesgue points and 1-NN estimation laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in HELP.items():
        _common(sub.add_parser(name, help=text))
    v = sub.add_parser("verify", help="run an acceptance suite and print a pass/fail table")
    v.add_argument("--suite", choices=("acceptance", "oracle"), default="acceptance")
    v.add_argument("--workers", type=int, default=1)
    v.add_argument("--out", default=None, help="CSV of results")
    return parser


def _config_from(args) -> ExperimentConfig:
    values = {}
    if args.config:
        import configparser

        cp = configparser.ConfigParser()
        with open(args.config) as fh:
            cp.read_file(fh)
        if "experiment" not in cp:
            raise ValueError(f"{args.config}: no [experiment] section")
        for key, raw in cp["experiment"].items():
            key = key.replace("-", "_")
            if key not in ExperimentConfig.__dataclass_fields__:
                raise ValueError(f"{args.config}: unknown key '{key}'")
            values[key] = raw
    defaults = vars(build_parser().parse_args([args.command]))
    for key in ExperimentConfig.__dataclass_fields__:
        val = getattr(args, key)
        if key not in values or val != defaults.get(key):
            values[key] = val
    if values.get("seed") is None:
        values["seed"] = _default_seed()
    for key in ("trials", "seed", "workers", "m_max"):
        values[key] = int(float(values[key]))
    values["tol"] = float(values["tol"])
    return ExperimentConfig(**values)


def _verify(args) -> int:
    from .verify import render_results, run_suite

    results = run_suite(args.suite, workers=args.workers)
    for r in results:
        print(r.line())
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} criteria passed")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            fh.write(render_results(results))
    return EXIT_OK if passed == len(results) else EXIT_ASSERT


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "verify":
        return _verify(args)
    try:
        cfg = _config_from(args)
        table = RUNNERS[args.command](cfg)
    except (ValueError, KeyError, OSError, TrivialCase) as err:
        print(f"lebnn {args.command}: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (UnsupportedRuleError, UnsupportedOperation, UndefinedRatio) as err:
        print(f"lebnn {args.command}: unsupported combination: {err}", file=sys.stderr)
        return EXIT_USAGE
    table.write(cfg.out)
    if table.summary:
        print(table.summary, file=sys.stderr)
    if args.check and table.violations:
        for v in table.violations:
            print(f"assertion failed: {v}", file=sys.stderr)
        return EXIT_ASSERT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
