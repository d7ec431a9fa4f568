"""Command-line front end: ``bb84rate {rate,optimize,figure1,simulate}``.

Exit codes: 0 success, 2 invalid parameters, 3 zero-rate regime, 4 I/O error.
Relative output paths resolve against ``$BB84RATE_OUTPUT_DIR`` when set.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import plotting
from .mathcore import binary_entropy, coef_a, coef_b
from .protocol_sim import (
    RECONCILERS,
    ChannelModel,
    ProtocolConfig,
    expected_key_length,
    run_ensemble,
    summary_text,
    write_outcomes_csv,
)
from .rate_engine import (
    RateParams,
    Ratios,
    UnestimableSideError,
    ZeroRateError,
    _averaged_terms,
    averaged_key_length,
    finite_key_length,
    max_key_length,
    numeric_optimize,
    optimal_ratios,
    rate_curve,
)

EXIT_OK, EXIT_USAGE, EXIT_ZERO_RATE, EXIT_IO = 0, 2, 3, 4
OUTPUT_DIR_ENV = "BB84RATE_OUTPUT_DIR"
FIGURE1_SCHEMA = "bb84rate.figure1/v1"
RATE_SCHEMA = "bb84rate.rate/v1"

REFERENCE_P2 = 0.05
REFERENCE_BETA = 0.642243
REFERENCE_EPS = (1e-2, 1e-4, 1e-6, 1e-8, 1e-10)

CONFIG_KEYS = {
    "p1": float, "p2": float, "eps": float, "beta": float, "n": int,
    "r0": float, "r1": float, "r2": float, "q1": float, "q2": float,
    "seed": int, "trials": int, "reconciliation": str, "margin": float,
    "workers": int, "out": str, "plot": str,
}


class UsageError(Exception):
    pass


def reference_beta(p2=REFERENCE_P2):
    """Reconciliation rate ``0.9 (1 - h(p2))`` used for the reference figure."""
    return 0.9 * (1.0 - binary_entropy(p2))


def _g(x):
    return format(x, ".6g")


def _full(x):
    return format(float(x), ".17g")


def _count(text):
    # Accepts 1e6-style counts.
    v = float(text)
    if v != int(v):
        raise argparse.ArgumentTypeError(f"expected an integer count, got {text}")
    return int(v)


def output_path(path) -> Path:
    p = Path(path)
    base = os.environ.get(OUTPUT_DIR_ENV)
    if base and not p.is_absolute():
        p = Path(base) / p
    return p


def load_config(path) -> dict:
    """Parse a ``key = value`` file; ``#`` starts a comment. Unknown keys are rejected."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in CONFIG_KEYS:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            conv = CONFIG_KEYS[key]
            try:
                values[key] = _count(value) if conv is int else conv(value)
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return values


# ---------------------------------------------------------------------------
# rate
# ---------------------------------------------------------------------------

def _params(args):
    try:
        return RateParams(args.p1, args.p2, args.eps, args.beta, args.n)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _require_positive_rate(params):
    a_best = max(coef_a(params.p1, params.beta), coef_a(params.p2, params.beta))
    if a_best <= 0:
        raise ZeroRateError(f"zero-rate regime: beta = {params.beta} does not exceed h(p)")


def cmd_rate(args, out):
    params = _params(args)
    _require_positive_rate(params)
    if args.r0 is None:
        ratios = optimal_ratios(params).ratios
    else:
        try:
            ratios = Ratios(args.r0, args.r1, args.r2)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    n = int(params.n)
    n1 = args.n1 if args.n1 is not None else int(round(n * (1 - ratios.r0) ** 2))
    n2 = args.n2 if args.n2 is not None else int(round(n * ratios.r0 ** 2))
    try:
        report = finite_key_length(n1, n2, ratios, params.p1, params.p2, params.eps, params.beta, n)
        avg = averaged_key_length(params, ratios)
    except UnestimableSideError as exc:
        raise UsageError(str(exc)) from None
    a1, a2 = coef_a(params.p1, params.beta), coef_a(params.p2, params.beta)
    b1, b2 = coef_b(params.p1, params.eps), coef_b(params.p2, params.eps)
    first, sec_bit, sec_phase = (float(t) for t in _averaged_terms(
        params.n, a2, a1, b2, b1, *ratios.as_tuple()))

    print(f"A({_g(params.p1)}) = {a1:.6f}  A({_g(params.p2)}) = {a2:.6f}", file=out)
    print(f"B({_g(params.p1)}, {_g(params.eps)}) = {_g(b1)}  "
          f"B({_g(params.p2)}, {_g(params.eps)}) = {_g(b2)}", file=out)
    print(f"n = {_g(params.n)}  ratios = ({_g(ratios.r0)}, {_g(ratios.r1)}, {_g(ratios.r2)})",
          file=out)
    print(f"sifted counts n1 = {n1}  n2 = {n2}", file=out)
    print(f"finite: m1 = {report.sacrificed1}  m2 = {report.sacrificed2}  "
          f"m3 = {report.verification_bits}", file=out)
    print(f"finite: bit side = {report.length_bit_side}  phase side = {report.length_phase_side}"
          f"  total = {report.total}", file=out)
    print(f"averaged: first order = {_g(first)}  second order bit = {_g(sec_bit)}  "
          f"second order phase = {_g(sec_phase)}  total = {_g(avg)}", file=out)

    rows = [
        ("p1", params.p1), ("p2", params.p2), ("eps", params.eps), ("beta", params.beta),
        ("n", params.n), ("r0", ratios.r0), ("r1", ratios.r1), ("r2", ratios.r2),
        ("n1", n1), ("n2", n2), ("m1", report.sacrificed1), ("m2", report.sacrificed2),
        ("m3", report.verification_bits), ("length_bit_side", report.length_bit_side),
        ("length_phase_side", report.length_phase_side), ("finite_total", report.total),
        ("averaged_first_order", first), ("averaged_second_order_bit", sec_bit),
        ("averaged_second_order_phase", sec_phase), ("averaged_total", avg),
    ]
    buf = io.StringIO()
    buf.write(f"# schema: {RATE_SCHEMA}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["quantity", "value"])
    for k, v in rows:
        w.writerow([k, v if isinstance(v, int) else _full(v)])
    if args.csv:
        path = output_path(args.csv)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(buf.getvalue())
        print(f"wrote {path}", file=out)
    else:
        out.write(buf.getvalue())
    return EXIT_OK


# ---------------------------------------------------------------------------
# optimize
# ---------------------------------------------------------------------------

def cmd_optimize(args, out):
    params = _params(args)
    choice = optimal_ratios(params)
    r = choice.ratios
    analytic_value = averaged_key_length(params, r)
    print(f"analytic ratios: r0 = {_g(r.r0)}  r1 = {_g(r.r1)}  r2 = {_g(r.r2)}", file=out)
    if choice.swapped:
        print("note: h(p1) < h(p2), so keys are generated from the phase basis", file=out)
    if choice.clamped:
        print(f"warning: asymptotic regime not reached (r0 = {_g(choice.r0_unclamped)} clamped "
              f"to {_g(r.r0 if not choice.swapped else 1 - r.r0)})", file=out)
    print(f"max key length (second order) = {_g(max_key_length(params))}  "
          f"rate = {_g(max_key_length(params) / params.n)}", file=out)
    print(f"averaged key length at analytic ratios = {_g(analytic_value)}", file=out)
    if args.oracle:
        num_r, num_v = numeric_optimize(params)
        gap = (num_v - analytic_value) / abs(num_v)
        print(f"oracle ratios: r0 = {_g(num_r.r0)}  r1 = {_g(num_r.r1)}  r2 = {_g(num_r.r2)}",
              file=out)
        print(f"oracle key length = {_g(num_v)}", file=out)
        print(f"relative gap = {gap * 100:.4g}%", file=out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# figure1
# ---------------------------------------------------------------------------

def figure1_csv(curve) -> str:
    buf = io.StringIO()
    buf.write(f"# schema: {FIGURE1_SCHEMA}\n")
    w = csv.writer(buf, lineterminator="\n")
    labels = [plotting.eps_label(e) for e in curve.series]
    w.writerow(["log10_n", "asymptote"] + [f"rate_eps_{lab}" for lab in labels])
    for i, x in enumerate(np.round(curve.log10_n, 10)):
        w.writerow([_full(x), _full(curve.asymptote)]
                   + [_full(rates[i]) for rates in curve.series.values()])
    return buf.getvalue()


def figure1_curve(p2=REFERENCE_P2, beta=REFERENCE_BETA, eps_list=REFERENCE_EPS,
                  log10_min=4.0, log10_max=12.0, points=161, clip=False):
    log10_grid = np.round(np.linspace(log10_min, log10_max, points), 10)
    return rate_curve(p2, eps_list, beta, 10.0 ** log10_grid, clip=clip)


def cmd_figure1(args, out):
    try:
        eps_list = tuple(float(e) for e in args.eps.split(","))
        curve = figure1_curve(args.p2, args.beta, eps_list, args.log10_n[0], args.log10_n[1],
                              args.points, args.clip)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    text = figure1_csv(curve)
    csv_path = output_path(args.out)
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        fh.write(text)
    print(f"A({_g(args.p2)}) = {curve.asymptote:.6f}  beta = {args.beta:.6f}", file=out)
    print(f"wrote {csv_path}", file=out)
    if args.plot_script:
        script_path = output_path(args.plot_script)
        png = csv_path.with_suffix(".png")
        with open(script_path, "w", encoding="utf-8") as fh:
            fh.write(plotting.figure1_plot_script(csv_path, png))
        print(f"wrote {script_path}", file=out)
    if args.plot:
        png_path = output_path(args.plot)
        plotting.render_figure1(curve, png_path)
        print(f"wrote {png_path}", file=out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

SIM_DEFAULTS = {
    "n": 10 ** 6, "eps": 1e-2, "beta": REFERENCE_BETA, "q1": 0.05, "q2": 0.05,
    "r1": None, "r2": None, "r0": None, "p1": None, "p2": None, "seed": 0, "trials": 100,
    "reconciliation": "idealized", "margin": 0.0, "workers": 1, "out": "trials.csv",
    "plot": None,
}


def _sim_settings(args):
    settings = dict(SIM_DEFAULTS)
    if args.config:
        try:
            settings.update(load_config(args.config))
        except OSError as exc:
            raise OSError(f"cannot read config {args.config}: {exc}") from exc
    for key in SIM_DEFAULTS:
        v = getattr(args, key, None)
        if v is not None:
            settings[key] = v
    return settings


def build_protocol_config(s) -> ProtocolConfig:
    try:
        channel = ChannelModel(s["q1"], s["q2"])
        if s["r0"] is None:
            p1 = s["p1"] if s["p1"] is not None else s["q1"]
            p2 = s["p2"] if s["p2"] is not None else s["q2"]
            if not (0 < p1 < 0.5 and 0 < p2 < 0.5):
                raise UsageError("give --r0 or error rates in (0, 1/2) to optimise the ratios")
            ratios = optimal_ratios(RateParams(p1, p2, s["eps"], s["beta"], s["n"])).ratios
        else:
            ratios = Ratios(s["r0"], s["r1"] if s["r1"] is not None else 0.0,
                            s["r2"] if s["r2"] is not None else 1.0)
        return ProtocolConfig(int(s["n"]), ratios, s["eps"], s["beta"], channel,
                              master_seed=int(s["seed"]), reconciliation=s["reconciliation"],
                              margin=s["margin"])
    except ValueError as exc:
        if isinstance(exc, ZeroRateError):
            raise
        raise UsageError(str(exc)) from None


def cmd_simulate(args, out):
    s = _sim_settings(args)
    if s["trials"] < 1:
        raise UsageError("trials must be at least 1")
    config = build_protocol_config(s)
    r = config.ratios
    print(f"n = {config.n}  ratios = ({_g(r.r0)}, {_g(r.r1)}, {_g(r.r2)})  "
          f"q = ({_g(config.channel.q1)}, {_g(config.channel.q2)})  seed = {config.master_seed}",
          file=out)
    summary = run_ensemble(config, s["trials"], workers=s["workers"])
    try:
        predicted = expected_key_length(config).total
    except ValueError:
        predicted = None
    csv_path = output_path(s["out"])
    write_outcomes_csv(summary.outcomes, csv_path)
    out.write(summary_text(summary, predicted))
    print(f"wrote {csv_path}", file=out)
    if s["plot"]:
        png = output_path(s["plot"])
        plotting.render_key_histogram(summary, png, predicted)
        print(f"wrote {png}", file=out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _add_rate_flags(p, n_default):
    p.add_argument("--p1", type=float, default=0.05, help="bit-basis error rate")
    p.add_argument("--p2", type=float, default=REFERENCE_P2, help="phase-basis error rate")
    p.add_argument("--eps", type=float, default=1e-2, help="security level")
    p.add_argument("--beta", type=float, default=REFERENCE_BETA, help="reconciliation code rate")
    p.add_argument("--n", type=float, default=n_default, help="number of transmissions")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bb84rate",
                                     description="Second-order key rates for asymmetric BB84.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("rate", help="finite and averaged key lengths for given ratios")
    _add_rate_flags(p, 1e8)
    p.add_argument("--r0", type=float, help="phase-basis probability (default: analytic optimum)")
    p.add_argument("--r1", type=float, default=0.0, help="bit-basis check fraction")
    p.add_argument("--r2", type=float, default=1.0, help="phase-basis check fraction")
    p.add_argument("--n1", type=_count, help="realised bit-basis sifted count")
    p.add_argument("--n2", type=_count, help="realised phase-basis sifted count")
    p.add_argument("--csv", help="write the CSV here instead of stdout")
    p.set_defaults(func=cmd_rate)

    p = sub.add_parser("optimize", help="optimal ratios and maximum key length")
    _add_rate_flags(p, 1e8)
    p.add_argument("--oracle", action="store_true", help="also run the numerical optimiser")
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("figure1", help="tabulate the optimised rate against log10 n")
    p.add_argument("--p2", type=float, default=REFERENCE_P2)
    p.add_argument("--beta", type=float, default=REFERENCE_BETA)
    p.add_argument("--eps", default=",".join(plotting.eps_label(e) for e in REFERENCE_EPS),
                   help="comma-separated security levels")
    p.add_argument("--log10-n", type=float, nargs=2, default=(4.0, 12.0), metavar=("MIN", "MAX"))
    p.add_argument("--points", type=int, default=161)
    p.add_argument("--clip", action="store_true", help="floor negative rates at zero")
    p.add_argument("--out", default="figure1.csv")
    p.add_argument("--plot-script", help="write a standalone matplotlib script here")
    p.add_argument("--plot", help="render the figure to this image file")
    p.set_defaults(func=cmd_figure1)

    p = sub.add_parser("simulate", help="Monte-Carlo runs of the protocol")
    p.add_argument("--config", help="key = value configuration file")
    p.add_argument("--n", type=_count)
    p.add_argument("--eps", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--q1", type=float, help="bit-basis flip probability")
    p.add_argument("--q2", type=float, help="phase-basis flip probability")
    p.add_argument("--p1", type=float, help="error rate used to optimise ratios (default q1)")
    p.add_argument("--p2", type=float, help="error rate used to optimise ratios (default q2)")
    p.add_argument("--r0", type=float)
    p.add_argument("--r1", type=float)
    p.add_argument("--r2", type=float)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--reconciliation", choices=sorted(RECONCILERS))
    p.add_argument("--margin", type=float)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="per-trial CSV path")
    p.add_argument("--plot", help="render a key-length histogram to this image file")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args, out)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ZeroRateError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ZERO_RATE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
