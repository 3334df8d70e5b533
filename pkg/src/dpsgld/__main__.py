import argparse
import json
import logging
import os
import sys
import typing as t
from pathlib import Path

from . import (
    ConfigurationError,
    Constant,
    Decreasing,
    DpsgldError,
    Method,
    PrivacyParams,
    StepSchedule,
    VerificationError,
    cmd_account,
    cmd_bench,
    cmd_calibrate,
    cmd_schema,
    cmd_train,
    cmd_verify,
    load_config,
    optimize_alpha,
    prepare,
)
from ._commands import VERIFY_SEEDS, VERIFY_SUITES
from ._errors import colored
from ._io import write_json, write_table

EXIT_OK = 0
EXIT_VERIFICATION = 1
EXIT_CONFIGURATION = 2

parser = argparse.ArgumentParser(prog=os.path.basename(sys.executable) + " -m dpsgld")
parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for INFO, -vv for DEBUG logging")
subparsers = parser.add_subparsers(dest="command", required=True)

train_parser = subparsers.add_parser("train", help="train a model and write report.json, metrics.csv")
train_parser.add_argument("--config", required=True, type=Path)
train_parser.add_argument("--method", choices=[m.value for m in Method])
train_parser.add_argument("--out", type=Path)
train_parser.add_argument("--seed", type=int)
train_parser.add_argument("--snapshot-stride", type=int)

account_parser = subparsers.add_parser("account", help="tabulate epsilon against the iteration count")
account_parser.add_argument("--config", type=Path, help="derive L, lambda, beta, n, sigma2 and the schedule")
account_parser.add_argument("--L", type=float, dest="lipschitz")
account_parser.add_argument("--lam", type=float)
account_parser.add_argument("--beta", type=float)
account_parser.add_argument("--n", type=int)
account_parser.add_argument("--sigma2", type=float)
account_parser.add_argument("--eta", type=float, help="constant step size (default 1/(2 beta))")
account_parser.add_argument("--decreasing", action="store_true", help="use eta_k = 1/(2 beta + lambda k/2)")
account_parser.add_argument("--k-max", type=int)
account_parser.add_argument("--points", type=int, default=101)
account_parser.add_argument("--delta", type=float)
account_parser.add_argument("--alpha", type=float, help="fixed Renyi order (default: optimised at --k-max)")
account_parser.add_argument("--out", type=Path)

calibrate_parser = subparsers.add_parser("calibrate", help="derive sigma2, K and alpha from a privacy target")
calibrate_parser.add_argument("--config", type=Path, help="derive L, lambda, beta, n and d")
calibrate_parser.add_argument("--epsilon", type=float, default=1.0)
calibrate_parser.add_argument("--delta", type=float)
calibrate_parser.add_argument("--alpha", type=float)
calibrate_parser.add_argument("--L", type=float, dest="lipschitz")
calibrate_parser.add_argument("--lam", type=float)
calibrate_parser.add_argument("--beta", type=float)
calibrate_parser.add_argument("--n", type=int)
calibrate_parser.add_argument("--d", type=int)
calibrate_parser.add_argument("--xi2", type=float, default=0.0)
calibrate_parser.add_argument("--out", type=Path)

verify_parser = subparsers.add_parser("verify", help="run the verification suites")
verify_parser.add_argument("--suite", action="append", choices=VERIFY_SUITES, help="may be repeated (default: all)")
verify_parser.add_argument("--seeds", type=int, default=VERIFY_SEEDS)
verify_parser.add_argument("--seed", type=int, default=0)
verify_parser.add_argument("--workers", type=int)
verify_parser.add_argument("--fixture", type=Path, help="CSV with the rows of the quadratic workload")
verify_parser.add_argument("--out", type=Path)

bench_parser = subparsers.add_parser("bench", help="compare DP-SGLD, DP-SGD and non-private SGD")
bench_parser.add_argument("--config", required=True, type=Path, action="append", help="may be repeated")
bench_parser.add_argument("--method", action="append", choices=[m.value for m in Method])
bench_parser.add_argument("--seeds", type=int, default=1)
bench_parser.add_argument("--workers", type=int)
bench_parser.add_argument("--out", type=Path)

subparsers.add_parser("schema", help="print the JSON schema of the run configuration")


def _require(args: argparse.Namespace, *names: str) -> None:
    missing = [name for name in names if getattr(args, name) is None]
    if missing:
        raise ConfigurationError(f"missing arguments without --config: {', '.join('--' + n for n in missing)}")


def _train(args: argparse.Namespace) -> int:
    config = load_config(args.config).override(
        method=args.method,
        seed=args.seed,
        snapshot_stride=args.snapshot_stride,
        out=str(args.out) if args.out else None,
    )
    bundle = cmd_train(config)
    directory = bundle.write(config.out)
    final = bundle.to_json()["final"]
    line = f"train accuracy {final['train_accuracy']}, test accuracy {final['test_accuracy']}"
    if bundle.privacy is not None:
        p = bundle.privacy
        line += f", ({p.epsilon:.6g}, {p.delta:g})-DP at alpha={p.alpha:g}"
    print(line)
    print(f"wrote {directory}")
    return EXIT_OK


def _account(args: argparse.Namespace) -> int:
    schedule: StepSchedule
    if args.config:
        prepared = prepare(load_config(args.config))
        c = prepared.constants
        params = PrivacyParams.of(c, prepared.train.n, prepared.sigma2, d=prepared.dimension)
        schedule = prepared.schedule
        k_max = args.k_max if args.k_max is not None else prepared.iterations
        delta = args.delta or prepared.delta
        alphas: t.Optional[t.List[float]] = prepared.alphas
    else:
        _require(args, "lipschitz", "lam", "beta", "n", "sigma2", "k_max")
        params = PrivacyParams(2.0, args.lipschitz, args.lam, args.beta, args.n, args.sigma2)
        if args.decreasing:
            schedule = Decreasing(args.beta, args.lam)
        else:
            schedule = Constant(args.eta if args.eta is not None else 1 / (2 * args.beta))
        k_max, delta, alphas = args.k_max, args.delta or 1e-5, None
    if args.alpha is not None:
        params = params.with_alpha(args.alpha)
    else:
        params = params.with_alpha(optimize_alpha(params, schedule, k_max, delta, alphas)[0])
    ks = sorted({round(k_max * i / max(args.points - 1, 1)) for i in range(args.points)})
    table = cmd_account(params, schedule, ks, delta, alphas)
    if args.out:
        args.out.mkdir(parents=True, exist_ok=True)
        write_table(args.out / "epsilon_curve.csv", table)
        records = table.astype(object).where(table.notna(), None).to_dict(orient="records")
        write_json(args.out / "epsilon_curve.json", records)
    else:
        print(table.to_string(index=False))
    return EXIT_OK


def _calibrate(args: argparse.Namespace) -> int:
    if args.config:
        prepared = prepare(load_config(args.config))
        c = prepared.constants
        L, lam, beta, n, d = c.L, c.lam, c.beta, prepared.train.n, prepared.dimension
    else:
        _require(args, "lipschitz", "lam", "beta", "n", "d")
        L, lam, beta, n, d = args.lipschitz, args.lam, args.beta, args.n, args.d
    delta = args.delta if args.delta is not None or args.alpha is not None else 1e-5
    table = cmd_calibrate(args.epsilon, L, lam, beta, n, d, delta=delta, alpha=args.alpha, xi2=args.xi2)
    if args.out:
        write_table(args.out, table)
    print(table.to_string(index=False))
    return EXIT_OK


def _verify(args: argparse.Namespace) -> int:
    report = cmd_verify(args.suite, args.seeds, args.seed, args.workers, args.fixture)
    payload = report.to_json()
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        write_json(args.out, payload)
    print(json.dumps(payload, indent=2, sort_keys=True))
    for suite in report.suites:
        verdict = colored("PASS", "green") if suite.passed else colored(f"FAIL {suite.assertion}", "red")
        print(f"{suite.name}: {verdict}", file=sys.stderr)
    return EXIT_OK if report.passed else EXIT_VERIFICATION


def _bench(args: argparse.Namespace) -> int:
    configs = [load_config(path) for path in args.config]
    methods = [Method(m) for m in args.method] if args.method else list(Method)
    table = cmd_bench(configs, methods, args.seeds, args.workers)
    if args.out:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        write_table(args.out, table)
    print(table.to_string(index=False, na_rep=""))
    return EXIT_OK


def _schema(args: argparse.Namespace) -> int:
    print(json.dumps(cmd_schema(), indent=2))
    return EXIT_OK


_COMMANDS: t.Dict[str, t.Callable[[argparse.Namespace], int]] = {
    "train": _train,
    "account": _account,
    "calibrate": _calibrate,
    "verify": _verify,
    "bench": _bench,
    "schema": _schema,
}


def run(argv: t.Optional[t.Sequence[str]] = None) -> int:
    """Parse *argv*, run the subcommand and return its exit code: 0 success, 1 failed verification, 2 bad input."""

    args = parser.parse_args(argv)
    level = logging.DEBUG if args.verbose >= 2 else logging.INFO if args.verbose == 1 else logging.WARNING
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return _COMMANDS[args.command](args)
    except VerificationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VERIFICATION
    except DpsgldError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIGURATION


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
