"""Command-line entry point: ``rlfalsify {falsify,bench,monitor,oracle}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from importlib import resources
from pathlib import Path

from .formula import FormulaError, to_past_dependent

EXIT_RUNTIME = 1
EXIT_USAGE = 2

log = logging.getLogger("rlfalsify")


class UsageError(Exception):
    pass


def _params(pairs) -> dict:
    out = {}
    for p in pairs or []:
        name, sep, value = p.partition("=")
        if not sep:
            raise UsageError(f"--param expects NAME=VALUE, got {p!r}")
        try:
            out[name.strip()] = float(value)
        except ValueError:
            raise UsageError(f"--param {name}: {value!r} is not a number") from None
    return out


def _load_prop(args):
    from .presets import load_property

    ref = args.spec or args.preset
    if ref is None:
        raise UsageError("one of --spec or --preset is required")
    return load_property(ref, _params(args.param))


def _bounds(text):
    """``name=lo:hi,name=lo:hi`` -> (names, bounds)."""
    names, bounds = [], []
    for part in text.split(","):
        name, _, rng = part.partition("=")
        lo, _, hi = rng.partition(":")
        try:
            bounds.append((float(lo), float(hi)))
        except ValueError:
            raise UsageError(f"bad input bound {part!r}; expected name=lo:hi") from None
        names.append(name.strip())
    return names, bounds


def _model(args, prop):
    from .bench import build_model

    spec = {"id": args.model}
    if args.model.startswith("external:"):
        if not args.inputs:
            raise UsageError("external models need --inputs name=lo:hi,...")
        spec["inputs"], spec["input_bounds"] = _bounds(args.inputs)
        spec["timeout"] = args.timeout
    elif args.model not in ("surrogate-at", "echo"):
        raise UsageError(f"unknown model {args.model!r}")
    return build_model(spec, args.dt, prop)


def _agent_cfg(args) -> dict:
    cfg = {"kind": args.agent}
    if args.agent_config:
        path = Path(args.agent_config)
        cfg.update(json.loads(path.read_text()))
        cfg["kind"] = cfg.get("kind", args.agent)
    return cfg


def cmd_falsify(args) -> int:
    import math

    from .agents import make_agent
    from .falsify import falsify

    pf = _load_prop(args)
    psi = pf.life_long()
    if not args.dt > 0 or not args.t_end > 0 or args.episodes < 1:
        raise UsageError("--dt and --t-end must be positive and --episodes at least 1")
    model = _model(args, pf)
    try:
        n_steps = max(1, math.ceil(args.t_end / args.dt - 1e-9))
        agent = make_agent(_agent_cfg(args), model, n_steps, seed=args.seed, episodes=args.episodes)
        res = falsify(model, agent, psi, args.dt, args.t_end, args.episodes, seed=args.seed,
                      early_exit=args.early_exit)
    finally:
        if hasattr(model, "close"):
            model.close()
    if args.trace_out and res.episodes:
        from .robustness import write_trace_csv

        write_trace_csv(res.episodes[-1].trace, args.trace_out)
    if args.format == "csv":
        text = _rows_csv(["time", *model.input_schema.names],
                         res.counterexample.to_rows() if res.counterexample is not None else [])
    else:
        text = json.dumps(res.to_json(), indent=1) + "\n"
    _emit(text, args.out)
    return 0 if res.outcome != "aborted" else EXIT_RUNTIME


def _rows_csv(header, rows) -> str:
    import io

    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow(["" if v is None else repr(float(v)) for v in r])
    return buf.getvalue()


def _emit(text: str, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _resolve_config(ref: str) -> Path:
    p = Path(ref)
    if p.is_file():
        return p
    shipped = resources.files("rlfalsify") / "configs" / f"{p.stem}.toml"
    if shipped.is_file():
        return Path(str(shipped))
    raise UsageError(f"no config file {ref!r} and no shipped config named {p.stem!r}")


def cmd_bench(args) -> int:
    from .bench import ConfigError, load_config, run_experiment, write_outputs

    try:
        cfg = load_config(_resolve_config(args.config))
        if args.seed is not None:
            cfg.seed = args.seed
        if args.trials is not None:
            cfg.trials = args.trials
        if args.episodes is not None:
            cfg.episodes = args.episodes
        cfg.__post_init__()
    except ConfigError as e:
        raise UsageError(str(e)) from e
    result = run_experiment(cfg, jobs=args.jobs)
    if args.raw_out:
        write_outputs(result, raw_path=args.raw_out)
    if args.format == "json":
        text = json.dumps([r.__dict__ for r in result.rows], indent=1) + "\n"
    else:
        text = result.summary_csv()
    _emit(text, args.out)
    return 0


def _trace_and_formula(args):
    from .robustness import read_trace_csv

    if args.spec is None and args.preset is None:
        raise UsageError("one of --spec or --preset is required")
    pf = _load_prop(args)
    trace = read_trace_csv(args.trace, pf.schema)
    return pf, trace


def _series_out(args, trace, columns: dict):
    names = list(columns)
    if args.format == "json":
        data = [{"time": float(t), **{k: _jnum(columns[k][i]) for k in names}}
                for i, t in enumerate(trace.times)]
        _emit(json.dumps(data, indent=1) + "\n", args.out)
    else:
        rows = [[t, *(columns[k][i] for k in names)] for i, t in enumerate(trace.times)]
        _emit(_rows_csv(["time", *names], rows), args.out)


def _jnum(x):
    if x is None:
        return None
    if x in (float("inf"), float("-inf")):
        return "inf" if x > 0 else "-inf"
    return x


def cmd_monitor(args) -> int:
    """Robustness per sample.  For ``G phi`` files, the past-dependent body."""
    from .robustness import Monitor, rob_series

    pf, trace = _trace_and_formula(args)
    f = pf.formula
    if _is_life_long(pf):
        dt = args.dt
        if dt is None and len(trace) > 1:
            dt = float(trace.times[1] - trace.times[0])
        body = to_past_dependent(pf.life_long(), dt).body
        mon = Monitor(body, trace.schema, dt=dt)
        rho = [mon.push(t, x) for t, x in zip(trace.times, trace.states)]
        running, low = [], float("inf")
        for r in rho:
            low = min(low, r)
            running.append(low)
        _series_out(args, trace, {"rho": rho, "min_rho": running})
    else:
        _series_out(args, trace, {"rho": rob_series(f, trace)})
    return 0


def _is_life_long(pf) -> bool:
    try:
        pf.life_long()
        return True
    except FormulaError:
        return False


def cmd_oracle(args) -> int:
    """Brute-force robustness of the formula as written (empty where undefined)."""
    from .oracle import oracle_rob

    pf, trace = _trace_and_formula(args)
    f = pf.life_long().body if (args.body and _is_life_long(pf)) else pf.formula
    _series_out(args, trace, {"rho": oracle_rob(f, trace)})
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rlfalsify",
                                 description="Falsify temporal-logic properties by reward-driven input search.")
    ap.add_argument("--log-level", default="WARNING")
    sub = ap.add_subparsers(dest="command", required=True)

    def prop_flags(p):
        g = p.add_mutually_exclusive_group()
        g.add_argument("--spec", help="property file (.stl)")
        g.add_argument("--preset", help="shipped preset name, e.g. phi7")
        p.add_argument("--param", action="append", metavar="NAME=VALUE",
                       help="override a declared parameter (repeatable)")

    f = sub.add_parser("falsify", help="run one falsification")
    prop_flags(f)
    f.add_argument("--model", default="surrogate-at",
                   help="surrogate-at, echo, or external:CMD")
    f.add_argument("--inputs", help="external model inputs as name=lo:hi,...")
    f.add_argument("--timeout", type=float, default=30.0, help="external reply timeout (s)")
    f.add_argument("--agent", default="q", choices=["random", "q", "sa", "ce"])
    f.add_argument("--agent-config", help="JSON file with agent hyperparameters")
    f.add_argument("--dt", type=float, default=5.0)
    f.add_argument("--t-end", type=float, default=100.0)
    f.add_argument("--episodes", type=int, default=200)
    f.add_argument("--seed", type=int)
    f.add_argument("--early-exit", action="store_true", help="stop an episode at the first violation")
    f.add_argument("--out")
    f.add_argument("--format", choices=["json", "csv"], default="json")
    f.add_argument("--trace-out", help="write the last episode's trace as CSV")
    f.set_defaults(func=cmd_falsify)

    b = sub.add_parser("bench", help="run an experiment from a TOML config")
    b.add_argument("--config", required=True, help="TOML file or shipped config name (steering, table)")
    b.add_argument("--seed", type=int)
    b.add_argument("--trials", type=int)
    b.add_argument("--episodes", type=int)
    b.add_argument("--jobs", type=int)
    b.add_argument("--out")
    b.add_argument("--raw-out", help="write all trial records as JSON")
    b.add_argument("--format", choices=["csv", "json"], default="csv")
    b.set_defaults(func=cmd_bench)

    for name, fn, helptext in (("monitor", cmd_monitor, "robustness over a trace CSV"),
                               ("oracle", cmd_oracle, "brute-force robustness over a trace CSV")):
        m = sub.add_parser(name, help=helptext)
        prop_flags(m)
        m.add_argument("--trace", required=True)
        m.add_argument("--dt", type=float, help="grid for the past-dependent rewrite (default: trace spacing)")
        m.add_argument("--out")
        m.add_argument("--format", choices=["csv", "json"], default="csv")
        if name == "oracle":
            m.add_argument("--body", action="store_true", help="evaluate the body of a G property")
        m.set_defaults(func=fn)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=getattr(logging, str(args.log_level).upper(), logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except UsageError as e:
        ap.print_usage(sys.stderr)
        print(f"rlfalsify: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (FormulaError, KeyError, OSError, ValueError, RuntimeError) as e:
        print(f"rlfalsify {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
