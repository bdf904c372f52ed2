from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Any, Sequence

from pydantic import ValidationError

from mfe.config import settings
from mfe.errors import ConfigurationError, MfeError, NonConvergenceError
from mfe.io import dumps_result, read_config
from mfe.models import RunConfig

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NOT_CONVERGED = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise ConfigurationError(message)


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="meq", description="Matching function equilibrium: solve, estimate, counterfactuals")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON run config; flags override its fields")
    common.add_argument("--family", help="Family name (choo-siow, menzel, search, etu, harmonic-mean, cobb-douglas)")
    common.add_argument("--family-params", help="JSON object with family-specific parameters")
    common.add_argument("--matching", help="Observed matching CSV")
    common.add_argument("--out", help="Write the JSON result here instead of stdout")
    common.add_argument("--tol", type=float, help="Solver tolerance")
    common.add_argument("--max-iter", type=int, help="Outer iteration cap")
    common.add_argument("--parallel", action="store_true", default=None, help="Parallel IPFP half-steps")
    common.add_argument("--theta", type=_floats, help="Comma-separated starting or fixed theta")
    common.add_argument("--seed", type=int)

    p = sub.add_parser("solve", parents=[common], help="Equilibrium at theta on the observed margins")
    p.add_argument("--method", choices=["ipfp", "newton"])
    p = sub.add_parser("fit", parents=[common], help="Maximum-likelihood estimation")
    p.add_argument("--method", choices=["nested", "mpec"])
    p = sub.add_parser("ci", parents=[common], help="Estimation with standard errors")
    p.add_argument("--method", choices=["nested", "mpec"])
    p = sub.add_parser("counterfactual", parents=[common], help="Equilibrium under new margins")
    p.add_argument("--method", choices=["parametric", "parameter-free"])
    p.add_argument("--new-margins", help="Counterfactual margins CSV")
    sub.add_parser("surplus", parents=[common], help="Nonparametric logit TU surplus")
    p = sub.add_parser("simulate", parents=[common], help="Benchmark harness")
    p.add_argument("--benchmark", choices=["system", "estimation"])
    p.add_argument("--sizes", type=_ints, help="Comma-separated market sizes |X|")
    p.add_argument("--replications", type=int)
    return parser


def _section(data: dict[str, Any], key: str) -> dict[str, Any]:
    value = data.get(key, {})
    if not isinstance(value, dict):
        raise ConfigurationError(f"config field '{key}' must be an object")
    return dict(value)


def _merge(args: argparse.Namespace) -> RunConfig:
    data: dict[str, Any] = {}
    if args.config:
        data = read_config(args.config)
    data["command"] = args.command

    family = _section(data, "family")
    if args.family:
        family["name"] = args.family
    if args.family_params:
        try:
            family["params"] = json.loads(args.family_params)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"--family-params is not valid JSON: {exc.msg}") from exc
    data["family"] = family

    solver = _section(data, "solver")
    for flag, key in (("tol", "tol"), ("max_iter", "max_outer_iter"), ("parallel", "parallel")):
        if getattr(args, flag, None) is not None:
            solver[key] = getattr(args, flag)
    method = getattr(args, "method", None)
    if method is not None:
        if args.command == "solve":
            solver["method"] = method
        elif args.command in ("fit", "ci"):
            data["fit_method"] = method
        else:
            data["counterfactual_method"] = method
    data["solver"] = solver

    for flag, key in (
        ("matching", "matching"),
        ("new_margins", "new_margins"),
        ("out", "out"),
        ("theta", "theta_init"),
        ("seed", "seed"),
        ("benchmark", "benchmark"),
        ("sizes", "sizes"),
        ("replications", "replications"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            data[key] = value

    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(p) for p in first["loc"])
        raise ConfigurationError(f"{where}: {first['msg']}" if where else first["msg"]) from exc


def cli_main(argv: Sequence[str] | None = None) -> int:
    logging.basicConfig(level=settings.log_level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        config = _merge(build_parser().parse_args(argv))
        from mfe.pipeline import execute

        record = execute(config)
    except NonConvergenceError as exc:
        print(f"meq: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (MfeError, OSError) as exc:
        print(f"meq: {exc}", file=sys.stderr)
        return EXIT_INPUT

    if config.out:
        print(config.out)
    else:
        print(dumps_result(record))
    return EXIT_OK


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
