"""Command-line entry point: ``kawahara-memory <subcommand> ...``.

Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure
(blow-up, failed solve), 3 kernel validation or smallness-condition failure.
"""

import argparse
import itertools
import os
import sys
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import config as cfgmod
from .diagnostics import TimeSeries, fit_decay
from .errors import ConfigError, KawaharaError
from .kernel import Family, default_s_max, validate_hypotheses
from .solver import check_smallness_condition, run

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME, EXIT_VALIDATION = 0, 1, 2, 3


def _exit_code(exc):
    if isinstance(exc, ConfigError):
        return EXIT_USAGE
    if isinstance(exc, ValueError):
        return EXIT_VALIDATION
    return EXIT_RUNTIME


def _fit_model(settings, kernel):
    model = (settings.get("fit.model") or "auto").lower()
    if model == "auto":
        return "exp" if kernel.family is Family.EXPONENTIAL else "xi"
    return model


def _fit_window(settings):
    t0, t1 = settings.get("fit.t0"), settings.get("fit.t1")
    return None if t0 is None and t1 is None else (t0, t1)


def _resolve_window(window, series):
    if window is None:
        return None
    T = float(series.column("t")[-1])
    t0 = T / 4.0 if window[0] is None else window[0]
    t1 = T if window[1] is None else window[1]
    return (t0, t1)


def simulate_to_dir(config, out):
    """Run ``config`` and write series.csv, summary.txt and config.resolved."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.resolved").write_text(cfgmod.emit_config(config), encoding="utf-8")
    report = validate_hypotheses(config.kernel, default_s_max(config.kernel))
    if not report.all_passed:
        (out / "summary.txt").write_text("\n".join(report.lines()) + "\n", encoding="utf-8")
        return EXIT_VALIDATION, report.lines()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        result = run(config)
    result.series.to_csv(out / "series.csv")

    cond = result.condition
    lines = [
        f"condition.holds = {str(cond.holds).lower()}",
        f"condition.lhs = {cond.lhs!r}",
        f"condition.rhs = {cond.rhs!r}",
        f"condition.margin = {cond.margin!r}",
        f"condition.U0_norm = {cond.U0_norm!r}",
        f"condition.threshold_norm = {cond.threshold_norm!r}",
        f"run.dt = {result.dt!r}",
        f"run.steps = {result.state.step_index}",
        f"run.error = {result.error or 'none'}",
    ]
    settings = config.settings or {}
    try:
        fit = fit_decay(result.series, model=_fit_model(settings, config.kernel),
                        window=_resolve_window(_fit_window(settings), result.series),
                        kernel=config.kernel)
        lines += [f"fit.{line}" for line in fit.summary_lines()]
    except KawaharaError as exc:
        lines.append(f"fit.error = {exc}")
    (out / "summary.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")
    if result.error is not None:
        return EXIT_RUNTIME, lines
    if not cond.holds:
        return EXIT_VALIDATION, lines
    return EXIT_OK, lines


def cmd_simulate(args):
    config = cfgmod.parse_config(args.config)
    code, lines = simulate_to_dir(config, args.out)
    print("\n".join(lines))
    return code


def cmd_preset(args):
    config = cfgmod.get_preset(args.name).config()
    code, lines = simulate_to_dir(config, args.out)
    print("\n".join(lines))
    return code


def cmd_validate_kernel(args):
    config = cfgmod.parse_config(args.config)
    report = validate_hypotheses(config.kernel, default_s_max(config.kernel))
    print("\n".join(report.lines()))
    return EXIT_OK if report.all_passed else EXIT_VALIDATION


def cmd_check_condition(args):
    config = cfgmod.parse_config(args.config)
    res = check_smallness_condition(config)
    print(f"holds = {str(res.holds).lower()}")
    print(f"lhs = {res.lhs!r}")
    print(f"rhs = {res.rhs!r}")
    print(f"margin = {res.margin!r}")
    print(f"U0_norm = {res.U0_norm!r}")
    print(f"threshold_norm = {res.threshold_norm!r}")
    return EXIT_OK if res.holds else EXIT_VALIDATION


def cmd_fit(args):
    series = TimeSeries.from_csv(args.series)
    kernel = None
    window = None
    if args.model == "xi" or args.config:
        path = Path(args.config) if args.config else Path(args.series).with_name("config.resolved")
        if not path.exists():
            raise ConfigError(f"the xi model needs a kernel: pass --config (no {path} found)")
        config = cfgmod.parse_config(path)
        kernel = config.kernel
        window = _resolve_window(_fit_window(config.settings), series)
    if args.t0 is not None or args.t1 is not None:
        window = _resolve_window((args.t0, args.t1), series)
    fit = fit_decay(series, model=args.model, window=window, kernel=kernel)
    print("\n".join(fit.summary_lines()))
    return EXIT_OK


def _sweep_one(job):
    text, out = job
    try:
        config = cfgmod.parse_config(text)
        code, _ = simulate_to_dir(config, out)
    except KawaharaError as exc:
        Path(out).mkdir(parents=True, exist_ok=True)
        (Path(out) / "summary.txt").write_text(f"error = {exc}\n", encoding="utf-8")
        code = _exit_code(exc)
    return out, code


def _parse_vary(items):
    axes = []
    for item in items:
        key, sep, values = item.partition("=")
        key = key.strip()
        if not sep or not values.strip():
            raise ConfigError(f"--vary expects key=a,b,c, got {item!r}")
        if key not in cfgmod.SCHEMA:
            raise ConfigError(f"--vary: unknown key {key!r}")
        axes.append((key, [v.strip() for v in values.split(",") if v.strip()]))
    return axes


def sweep_workers():
    raw = os.environ.get("KAWAHARA_THREADS", "").strip()
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ConfigError(f"KAWAHARA_THREADS must be an integer, got {raw!r}") from None
        return max(n, 1)
    return os.cpu_count() or 1


def cmd_sweep(args):
    text = Path(args.config).read_text(encoding="utf-8")
    base = cfgmod.parse_settings(text)
    axes = _parse_vary(args.vary)
    jobs = []
    for combo in itertools.product(*[[(k, v) for v in vals] for k, vals in axes]):
        settings = dict(base)
        for key, raw in combo:
            settings = cfgmod.set_key(settings, key, raw)
        name = "_".join(f"{k}={v}" for k, v in combo)
        cfgmod.build_config(settings)  # fail fast on bad values
        jobs.append((cfgmod.emit_settings(cfgmod.resolve(settings)), str(Path(args.out) / name)))
    workers = min(sweep_workers(), len(jobs))
    if workers <= 1:
        results = [_sweep_one(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_one, jobs))
    for out, code in results:
        print(f"{out}: exit {code}")
    return max(code for _, code in results)


def build_parser():
    p = argparse.ArgumentParser(prog="kawahara-memory",
                                description="Kawahara equation with infinite memory")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="run a configuration and write outputs")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("validate-kernel", help="check the kernel hypotheses")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_validate_kernel)

    s = sub.add_parser("check-condition", help="evaluate the smallness condition")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_check_condition)

    s = sub.add_parser("fit", help="fit a decay envelope to a series CSV")
    s.add_argument("--series", required=True)
    s.add_argument("--model", choices=("exp", "xi"), default="exp")
    s.add_argument("--config", help="config for the kernel (default: config.resolved next to the CSV)")
    s.add_argument("--t0", type=float)
    s.add_argument("--t1", type=float)
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("preset", help="run a named preset")
    s.add_argument("--name", required=True, choices=sorted(cfgmod.PRESETS))
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_preset)

    s = sub.add_parser("sweep", help="run a parameter sweep in parallel")
    s.add_argument("--config", required=True)
    s.add_argument("--vary", required=True, action="append", metavar="KEY=A,B,C")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return args.func(args)
    except KawaharaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
