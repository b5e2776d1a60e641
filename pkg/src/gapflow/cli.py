"""Command-line entry point: ``gapflow <command> [options]``.

Results go to stdout (or ``--output``) as JSON; logs go to stderr.
Exit codes: 0 success, 2 invalid input, 3 solver did not converge (the best
iterate is still written), 4 other runtime failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from gapflow import __version__
from gapflow.approx import SampledLaw, approx_invert
from gapflow.chain import RATE_CONSTANT, build_chain, law_at
from gapflow.errors import GapflowError, ValidationError
from gapflow.finance import CallCurve, calibrate_calls
from gapflow.invert import invert_discrete
from gapflow.martingale import classify_true
from gapflow.measure import SpeedMeasure, TargetLaw
from gapflow.serialize import dumps, load_json, read_csv_columns
from gapflow.simulate import simulate_jump, simulate_timechange

log = logging.getLogger("gapflow")

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NOT_CONVERGED = 3
EXIT_RUNTIME = 4


@dataclass(frozen=True, slots=True)
class RunConfig:
    tol: float = 1e-9
    seed: int = 42
    paths: int = 100_000
    output: Path | None = None
    log_level: str = "WARNING"
    meta: bool = True

    def __post_init__(self) -> None:
        if not self.tol > 0.0:
            raise ValidationError("--tol must be positive")
        if self.paths < 1:
            raise ValidationError("--paths must be at least 1")
        if not 0 <= self.seed < 2**64:
            raise ValidationError("--seed must fit in 64 unsigned bits")


def version_string() -> str:
    num, den = RATE_CONSTANT.as_integer_ratio()
    return f"gapflow {__version__} (rate constant {num}/{den})"


def _common(p: argparse.ArgumentParser, tol: float | None = 1e-9) -> None:
    if tol is not None:
        p.add_argument("--tol", type=float, default=tol)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--paths", type=int, default=100_000)
    p.add_argument("--output", type=Path)
    p.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    p.add_argument("--no-meta", action="store_true", help="omit version and timestamp metadata")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gapflow", description="Gap diffusions from speed measures.")
    parser.add_argument("--version", action="version", version=version_string())
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("forward", help="law of X_t for an atomic speed measure")
    p.add_argument("--measure", required=True, type=Path)
    p.add_argument("--x0", required=True, type=float)
    p.add_argument("--t", type=float, default=1.0)
    _common(p, tol=1e-10)

    p = sub.add_parser("invert", help="speed measure realising a finite-support law at t=1")
    p.add_argument("--target", required=True, type=Path)
    p.add_argument("--x0", required=True, type=float)
    p.add_argument("--max-iter", type=int, default=200)
    _common(p)

    p = sub.add_parser("approx", help="discretize a quantile table and invert it")
    p.add_argument("--law", required=True, type=Path, help="CSV with columns u,quantile")
    p.add_argument("--x0", required=True, type=float)
    p.add_argument("--n", required=True, type=int)
    p.add_argument("--mean", type=float, help="declared mean (defaults to x0)")
    p.add_argument("--variance", type=float, help="declared variance; enables the E A_1 check")
    p.add_argument("--mc-paths", type=int, default=2000)
    p.add_argument("--max-iter", type=int, default=200)
    _common(p)

    p = sub.add_parser("simulate", help="Monte Carlo samples of X_t (and A_t)")
    p.add_argument("--measure", required=True, type=Path)
    p.add_argument("--x0", required=True, type=float)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--engine", choices=["jump", "timechange"], default="jump")
    p.add_argument("--step", type=float, default=1e-5)
    p.add_argument("--bandwidth", type=float)
    _common(p, tol=None)

    p = sub.add_parser("classify", help="martingale verdict for a speed measure")
    p.add_argument("--measure", required=True, type=Path)
    p.add_argument("--x0", required=True, type=float)
    p.add_argument("--left-tail", choices=["finite", "infinite"])
    p.add_argument("--right-tail", choices=["finite", "infinite"])
    _common(p, tol=None)

    p = sub.add_parser("calibrate-calls", help="gap diffusion matching a call-price curve")
    p.add_argument("--curve", required=True, type=Path, help="CSV with columns strike,price")
    p.add_argument("--T", dest="maturity", type=float, default=1.0)
    p.add_argument("--max-iter", type=int, default=200)
    _common(p)
    return parser


def _run(args: argparse.Namespace, cfg: RunConfig) -> tuple[dict[str, Any], int]:
    cmd = args.command
    if cmd == "forward":
        measure = SpeedMeasure.from_dict(load_json(args.measure))
        law = law_at(build_chain(measure, args.x0), args.t, cfg.tol)
        return law.to_dict(), EXIT_OK
    if cmd == "invert":
        target = TargetLaw.from_dict(load_json(args.target))
        result = invert_discrete(target, args.x0, cfg.tol, args.max_iter)
        return result.to_dict(), EXIT_OK if result.converged else EXIT_NOT_CONVERGED
    if cmd == "approx":
        u, q = read_csv_columns(args.law, ("u", "quantile"))
        mean = args.x0 if args.mean is None else args.mean
        law = SampledLaw.from_table(u, q, mean, args.variance)
        res = approx_invert(
            law, args.x0, args.n, cfg.tol, args.max_iter, mc_paths=args.mc_paths, seed=cfg.seed
        )
        code = EXIT_OK if res.calibration.converged else EXIT_NOT_CONVERGED
        return res.to_dict(), code
    if cmd == "simulate":
        measure = SpeedMeasure.from_dict(load_json(args.measure))
        if args.engine == "jump":
            bundle = simulate_jump(measure, args.x0, args.t, cfg.paths, cfg.seed)
        else:
            bundle = simulate_timechange(
                measure, args.x0, args.t, cfg.paths, args.step, args.bandwidth, cfg.seed
            )
        return bundle.summary(), EXIT_OK
    if cmd == "classify":
        measure = SpeedMeasure.from_dict(load_json(args.measure))
        tails = None
        if args.left_tail or args.right_tail:
            tails = (args.left_tail, args.right_tail)
        return classify_true(measure, args.x0, tails).to_dict(), EXIT_OK
    if cmd == "calibrate-calls":
        strikes, prices = read_csv_columns(args.curve, ("strike", "price"))
        curve = CallCurve.from_pairs(list(zip(strikes, prices)), args.maturity)
        res = calibrate_calls(curve, cfg.tol, args.max_iter)
        code = EXIT_OK if res.calibration.converged and res.within_tolerance else EXIT_NOT_CONVERGED
        return res.to_dict(), code
    raise ValidationError(f"unknown command {cmd!r}")


def _write(payload: dict[str, Any], output: Path | None) -> None:
    text = dumps(payload)
    if output is None:
        sys.stdout.write(text)
    else:
        output.write_text(text)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse already printed usage or the version
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=args.log_level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")

    meta = {
        "version": __version__,
        "rate_constant": RATE_CONSTANT,
        "command": args.command,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    try:
        cfg = RunConfig(
            tol=getattr(args, "tol", 1e-9),
            seed=args.seed,
            paths=args.paths,
            output=args.output,
            log_level=args.log_level,
            meta=not args.no_meta,
        )
        payload, code = _run(args, cfg)
    except ValidationError as exc:
        log.error("%s: %s", exc.code, exc)
        payload, code = {"error": {"code": exc.code, "message": str(exc)}}, EXIT_INVALID
    except GapflowError as exc:
        log.error("%s: %s", exc.code, exc)
        payload, code = {"error": {"code": exc.code, "message": str(exc)}}, EXIT_RUNTIME
    if code == EXIT_NOT_CONVERGED:
        log.warning("solver did not reach the requested tolerance; writing the best iterate")
    if not args.no_meta:
        payload = {**payload, "meta": meta}
    _write(payload, args.output)
    return code


if __name__ == "__main__":
    sys.exit(main())
