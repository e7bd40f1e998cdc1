"""Command-line pipeline tying the modules together.

Subcommands: simulate, tally, estimate, calibrate, extract, optimize,
testsuite, pipeline. Exit codes: 0 success, 1 usage/config error,
2 estimation abort (nothing certifiable), 3 statistical-suite failure,
4 I/O or file-format error.
"""
from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import detector_sim, io_formats, optimizer, protocol_math, stat_suite
from .errors import (
    CalibrationError,
    ConfigError,
    EstimationAbort,
    FormatError,
    InsufficientBitsError,
    SiqrngError,
    SuiteFailure,
)
from .extractor import RawBitBlock, extract
from .io_formats import RunConfig

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_ABORT = 2
EXIT_SUITE = 3
EXIT_IO = 4


class _Parser(argparse.ArgumentParser):
    """argparse that raises instead of exiting, so exit codes stay ours."""

    def error(self, message):
        raise ConfigError(message)


def _build_parser() -> _Parser:
    p = _Parser(prog="siqrng", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def add_config(sp):
        sp.add_argument("--config", help="config file (key = value lines)")
        sp.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override one config key",
        )

    sp = sub.add_parser("simulate", help="write an event file")
    add_config(sp)
    sp.add_argument("--out", required=True)
    sp.add_argument("--text", action="store_true", help="text instead of binary")

    sp = sub.add_parser("tally", help="summarize an event file")
    sp.add_argument("--events", required=True)
    sp.add_argument("--out", help="write summary here instead of stdout")

    sp = sub.add_parser("estimate", help="certified-length estimation")
    add_config(sp)
    sp.add_argument("--tally", help="tally file from the tally subcommand")
    sp.add_argument("--n-z", type=int, help="generation-basis detections")
    sp.add_argument("--e-bx", type=float, help="check-basis error rate")
    sp.add_argument("--n-x", type=int, help="check-basis detections")
    sp.add_argument("--duration", type=float, help="run seconds for the rate")
    sp.add_argument(
        "--solve-theta",
        type=float,
        metavar="EPS",
        help="pick the smallest theta meeting this estimation failure bound",
    )
    sp.add_argument("--out", help="write estimate here instead of stdout")

    sp = sub.add_parser("calibrate", help="overlap bound from count pairs")
    sp.add_argument(
        "--z-counts", nargs=2, type=int, required=True, metavar=("D0", "D1")
    )
    sp.add_argument(
        "--x-counts", nargs=2, type=int, required=True, metavar=("D0", "D1")
    )

    sp = sub.add_parser("extract", help="certified bits from events+estimate")
    sp.add_argument("--events", required=True)
    sp.add_argument("--estimate", required=True)
    sp.add_argument("--seed-file", required=True)
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("optimize", help="rate curve and best mean photon number")
    add_config(sp)
    sp.add_argument("--out", help="CSV path for the rate curve")
    sp.add_argument("--grid-step", type=float, default=0.5)

    sp = sub.add_parser("testsuite", help="statistical battery on a bit file")
    sp.add_argument("--bits", required=True)
    sp.add_argument("--alpha", type=float, default=stat_suite.ALPHA_DEFAULT)
    sp.add_argument("--max-failures", type=int, default=1)
    sp.add_argument("--out", help="CSV path for the report")

    sp = sub.add_parser("pipeline", help="simulate through testsuite")
    add_config(sp)
    sp.add_argument("--outdir", required=True)
    return p


def _load_config(args) -> RunConfig:
    cfg = (
        RunConfig.from_file(args.config)
        if getattr(args, "config", None)
        else RunConfig.defaults()
    )
    for item in getattr(args, "set", []):
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, raw = item.split("=", 1)
        cfg.set(key.strip(), raw.strip())
    return cfg


def _emit(text: str, out_path: str | None) -> None:
    if out_path:
        io_formats.atomic_write_text(out_path, text)
    else:
        sys.stdout.write(text)


def _cmd_simulate(args) -> int:
    cfg = _load_config(args)
    stream = detector_sim.run_simulation(
        cfg.source_params(),
        cfg.detector_params(),
        cfg.measurement_config(),
        cfg["run.n_pulses"],
        cfg["run.seed"],
    )
    io_formats.write_events(args.out, stream, binary=not args.text)
    return EXIT_OK


def _cmd_tally(args) -> int:
    stream = io_formats.read_events(args.events)
    summary = detector_sim.tally(stream)
    _emit(io_formats.tally_to_text(summary), args.out)
    return EXIT_OK


def _tally_from_args(args, cfg: RunConfig) -> protocol_math.TallySummary:
    if args.tally:
        with open(args.tally, encoding="utf-8") as f:
            return io_formats.tally_from_text(f.read())
    if args.n_z is None or args.e_bx is None:
        raise ConfigError("estimate needs --tally or both --n-z and --e-bx")
    n_z = args.n_z
    if args.n_x is not None:
        n_x = args.n_x
    else:
        # assume the detected ratio matches the configured basis choice
        q = cfg["measure.prob_x"]
        n_x = max(1, round(n_z * q / (1.0 - q)))
    wrong = round(args.e_bx * n_x)
    n = n_x + n_z
    # synthesize a consistent tally around the stated error rate
    return protocol_math.TallySummary(
        N_total=n,
        N_X=n_x,
        N_Z=n_z,
        n_x=n_x,
        n_z=n_z,
        x_wrong_singles=wrong,
        x_doubles=0,
        z_doubles_discarded=0,
        e_bx=wrong / n_x,
    )


def _estimate_text(
    est: protocol_math.ProtocolEstimate, duration: float
) -> str:
    rates = est.rates
    sec = est.security
    pairs = {
        "r0": repr(rates.R0),
        "r1": repr(rates.R1),
        "r_final": repr(rates.R_final),
        "bits": rates.whole_bits,
        "rate_bps": repr(rates.R_final / duration),
        "duration_s": repr(duration),
        "rescale_factor": repr(rates.rescale_factor),
        "coefficient": repr(rates.coefficient),
        "entropy_cost": repr(rates.entropy_cost),
        "theta": repr(sec.theta),
        "t_e": sec.t_e,
        "epsilon_theta": repr(sec.epsilon_theta),
        "epsilon_total": repr(sec.epsilon_total),
        "q_x": repr(est.q_x),
    }
    text = io_formats.dump_keyvals(pairs)
    for w in est.warnings:
        text += f"# warning: {w}\n"
    return text


def _run_estimate(args, cfg: RunConfig):
    tally = _tally_from_args(args, cfg)
    theta = cfg["security.theta"]
    t_e = cfg["security.t_e"]
    if args.solve_theta is not None:
        e_reg = protocol_math.regularize_error_rate(tally.e_bx, tally.n_x)
        theta = protocol_math.solve_theta(
            tally.n_detected, tally.q_x, e_reg, args.solve_theta
        )
    imperfection = protocol_math.MeasurementImperfection.from_coefficient(
        cfg["calibration.coefficient"],
        cfg["detector.eta0"],
        cfg["detector.eta1"],
    )
    est = protocol_math.estimate_protocol(tally, theta, t_e, imperfection)
    duration = args.duration if args.duration else cfg.duration
    return est, duration


def _cmd_estimate(args) -> int:
    cfg = _load_config(args)
    est, duration = _run_estimate(args, cfg)
    _emit(_estimate_text(est, duration), args.out)
    if not est.rates.certifiable:
        raise EstimationAbort(
            f"certified length {est.rates.R_final:.6g} <= 0"
        )
    return EXIT_OK


def _cmd_calibrate(args) -> int:
    result = protocol_math.overlap_bound_from_calibration(
        args.x_counts[0], args.x_counts[1], z_counts=tuple(args.z_counts)
    )
    sys.stdout.write(
        io_formats.dump_keyvals(
            {
                "overlap_c": repr(result.overlap_c),
                "coefficient": repr(result.coefficient),
                "p_max": repr(result.p_max),
                "z_gate_db": repr(
                    protocol_math.z_gate_ratio_db(*args.z_counts)
                ),
            }
        )
    )
    return EXIT_OK


def _cmd_extract(args) -> int:
    stream = io_formats.read_events(args.events)
    with open(args.estimate, encoding="utf-8") as f:
        kv = io_formats.parse_keyvals(f.read())
    try:
        rates = protocol_math.RateBreakdown(
            R0=float(kv["r0"]),
            R1=float(kv["r1"]),
            R_final=float(kv["r_final"]),
            rescale_factor=float(kv["rescale_factor"]),
            entropy_cost=float(kv["entropy_cost"]),
            coefficient=float(kv["coefficient"]),
        )
        epsilon_total = float(kv["epsilon_total"])
    except KeyError as exc:
        raise FormatError(f"estimate file missing key {exc}") from exc
    bits = detector_sim.raw_bits_from_events(stream)
    block = RawBitBlock(bits=bits, origin="ingested")
    seed = io_formats.read_seed_file(args.seed_file)
    result = extract(block, rates, seed)
    io_formats.write_bits(args.out, result.bits, epsilon_total)
    return EXIT_OK


def _rate_params(cfg: RunConfig) -> optimizer.RateModelParams:
    model_name = cfg["optimize.e_model"]
    if model_name == "constant":
        model = optimizer.ConstantErrorModel(cfg["optimize.e_bx"])
    elif model_name == "double_click":
        model = optimizer.DoubleClickErrorModel(cfg["optimize.e_d"])
    else:
        raise ConfigError(f"unknown optimize.e_model {model_name!r}")
    return optimizer.RateModelParams(
        rep_rate_G=cfg["source.pulse_rate"],
        coefficient=cfg["calibration.coefficient"],
        theta=cfg["security.theta"],
        t_e=cfg["security.t_e"],
        eta=cfg["detector.eta0"],
        e_bx_model=model,
    )


def _cmd_optimize(args) -> int:
    cfg = _load_config(args)
    params = _rate_params(cfg)
    lo, hi = cfg["optimize.lambda_lo"], cfg["optimize.lambda_hi"]
    lam_star, rate_star = optimizer.optimize_lambda(params, (lo, hi))
    if args.out:
        step = args.grid_step
        grid = [lo + i * step for i in range(int((hi - lo) / step) + 1)]
        rows = optimizer.flatness_report(params, grid)
        io_formats.atomic_write_text(args.out, optimizer.flatness_csv(rows))
    sys.stdout.write(
        io_formats.dump_keyvals(
            {"lambda_star": f"{lam_star:.6g}", "rate_star_bps": f"{rate_star:.6g}"}
        )
    )
    return EXIT_OK


def _battery(bits: np.ndarray, alpha: float, max_failures: int, out: str | None):
    reports = stat_suite.run_battery(bits, alpha=alpha)
    csv = stat_suite.battery_csv(reports)
    if out:
        io_formats.atomic_write_text(out, csv)
    else:
        sys.stdout.write(csv)
    failures = sum(not r.passed for r in reports)
    if failures > max_failures:
        raise SuiteFailure(
            f"{failures} of {len(reports)} tests under alpha={alpha}"
        )


def _cmd_testsuite(args) -> int:
    bits, _ = io_formats.read_bits(args.bits)
    _battery(bits, args.alpha, args.max_failures, args.out)
    return EXIT_OK


def _cmd_pipeline(args) -> int:
    cfg = _load_config(args)
    outdir = args.outdir
    os.makedirs(outdir, exist_ok=True)

    stream = detector_sim.run_simulation(
        cfg.source_params(),
        cfg.detector_params(),
        cfg.measurement_config(),
        cfg["run.n_pulses"],
        cfg["run.seed"],
    )
    io_formats.write_events(os.path.join(outdir, cfg["path.events"]), stream)

    summary = detector_sim.tally(stream)
    io_formats.atomic_write_text(
        os.path.join(outdir, "tally.txt"), io_formats.tally_to_text(summary)
    )

    imperfection = protocol_math.MeasurementImperfection.from_coefficient(
        cfg["calibration.coefficient"],
        cfg["detector.eta0"],
        cfg["detector.eta1"],
    )
    est = protocol_math.estimate_protocol(
        summary, cfg["security.theta"], cfg["security.t_e"], imperfection
    )
    io_formats.atomic_write_text(
        os.path.join(outdir, "estimate.txt"),
        _estimate_text(est, cfg.duration),
    )
    if not est.rates.certifiable:
        raise EstimationAbort(f"certified length {est.rates.R_final:.6g} <= 0")

    raw = detector_sim.raw_bits_from_events(stream)
    block = RawBitBlock(bits=raw, origin="simulated")
    seed_path = cfg["path.seed"]
    need = len(raw) + est.rates.whole_bits - 1
    if seed_path:
        seed = io_formats.read_seed_file(seed_path)
    else:
        seed = io_formats.derived_seed_bytes(cfg["run.extractor_seed"], need)
    result = extract(block, est.rates, seed)
    bits_path = os.path.join(outdir, cfg["path.output"])
    io_formats.write_bits(bits_path, result.bits, est.security.epsilon_total)

    _battery(
        result.bits,
        cfg["suite.alpha"],
        cfg["suite.max_failures"],
        os.path.join(outdir, "battery.csv"),
    )

    params = _rate_params(cfg)
    lo, hi = cfg["optimize.lambda_lo"], cfg["optimize.lambda_hi"]
    lam_star, rate_star = optimizer.optimize_lambda(params, (lo, hi))
    grid = [lo + i * 0.5 for i in range(int((hi - lo) / 0.5) + 1)]
    io_formats.atomic_write_text(
        os.path.join(outdir, "rate_curve.csv"),
        optimizer.flatness_csv(optimizer.flatness_report(params, grid)),
    )
    sys.stdout.write(
        io_formats.dump_keyvals(
            {
                "events": len(stream),
                "n_z": summary.n_z,
                "e_bx": f"{summary.e_bx:.6g}",
                "certified_bits": est.rates.whole_bits,
                "epsilon_total": f"{est.security.epsilon_total:.6e}",
                "lambda_star": f"{lam_star:.6g}",
                "rate_star_bps": f"{rate_star:.6g}",
            }
        )
    )
    return EXIT_OK


_COMMANDS = {
    "simulate": _cmd_simulate,
    "tally": _cmd_tally,
    "estimate": _cmd_estimate,
    "calibrate": _cmd_calibrate,
    "extract": _cmd_extract,
    "optimize": _cmd_optimize,
    "testsuite": _cmd_testsuite,
    "pipeline": _cmd_pipeline,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except EstimationAbort as exc:
        print(f"abort: {exc}", file=sys.stderr)
        return EXIT_ABORT
    except SuiteFailure as exc:
        print(f"suite failure: {exc}", file=sys.stderr)
        return EXIT_SUITE
    except FormatError as exc:
        print(f"format error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, CalibrationError, InsufficientBitsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SiqrngError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
