"""Command-line front end.

    robust-bands <simulate|solve|tune|evaluate|reproduce-table1|plot> [flags]

Settings are merged as flags > ``--config`` file > built-in defaults. A
config file (JSON, or TOML by extension) may hold top-level keys and a
table named after the command; the table wins over the top level. Keys use
the long flag names with dashes or underscores.

Exit codes: 0 success, 1 usage or validation error, 2 I/O error, 3 solver
limit reached (the partial result is still written).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace

from .band import SLACK_SPREADS, default_budget
from .experiments import (
    MIN_EVAL_SIZE,
    TABLE1_SIZES,
    format_table1,
    table1_csv,
    table1_folds,
    table1_row,
)
from .pathset import (
    PathFormatError,
    band_from_dict,
    coverage_rate,
    empirical_quantiles,
    load_paths,
    save_paths,
)
from .simulators import (
    MCE_ERLANG_R,
    CASE_STUDY_VAR,
    RandomSource,
    average_rate_model,
    load_model,
    simulate_erlang_r,
    simulate_var,
)
from .solver import COVER_MODES, SolveOptions, solve_nominal, solve_robust
from .tuner import TunerConfig, sample_budget, tune_gamma

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_LIMIT = 0, 1, 2, 3

SIM_KINDS = ("var", "erlang-r", "erlang-r-stationary")

DEFAULTS = {
    "simulate": {"kind": None, "n": 100, "seed": 0, "stream": 0, "model": None, "output": None},
    "solve": {
        "mode": None, "paths": None, "alpha": 0.1, "gamma": None, "tune": False, "gap": 0.01,
        "slack_spread": "uniform", "cover_mode": "paper-beta", "margin": 0.0, "upper_bound": None,
        "lower_bound": None, "node_limit": 200_000, "time_limit": None, "folds": 2, "iterations": 10,
        "seed": 0, "output": None,
    },
    "tune": {
        "paths": None, "alpha": 0.1, "folds": 2, "iterations": 10, "seed": 0, "gap": 0.01,
        "final_gap": None, "slack_spread": "uniform", "cover_mode": "paper-beta", "margin": 0.0,
        "upper_bound": None, "lower_bound": None, "node_limit": 200_000, "warm_start": False,
        "budget_scope": "full", "output": None,
    },
    "evaluate": {"band": None, "eval_paths": None, "output": None},
    "reproduce-table1": {
        "n": list(TABLE1_SIZES[:3]), "seed": 1, "alpha": 0.1, "eval_sets": 4, "eval_size": 1000,
        "gap": 0.01, "iterations": 10, "force": False, "out_dir": None,
    },
    "plot": {"band": None, "paths": None, "reference": None, "reference_row": 1, "max_paths": 100,
             "title": None, "output": None},
}


class UsageError(Exception):
    pass


class CliIOError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _opt(p, *flags, **kw):
    kw.setdefault("default", argparse.SUPPRESS)
    p.add_argument(*flags, **kw)


def _common(p):
    _opt(p, "--config", help="JSON or TOML file with settings")
    _opt(p, "--print-config", action="store_true", help="print the effective settings and exit")


def _solver_flags(p):
    _opt(p, "--gap", type=float, help="relative optimality gap (default 0.01)")
    _opt(p, "--slack-spread", choices=SLACK_SPREADS)
    _opt(p, "--cover-mode", choices=COVER_MODES)
    _opt(p, "--node-limit", type=int)


def _budget_flags(p):
    _opt(p, "--margin", type=float, help="added to the sample-based widening allowances")
    _opt(p, "--upper-bound", type=float, help="hard upper bound replacing the sample maximum")
    _opt(p, "--lower-bound", type=float, help="hard lower bound replacing the sample minimum")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="robust-bands", description="Minimum-width confidence bands for sample paths.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, required=True)

    p = sub.add_parser("simulate", help="generate sample paths as CSV")
    _opt(p, "kind", nargs="?", help="one of " + ", ".join(SIM_KINDS))
    _opt(p, "--n", type=int, help="number of paths")
    _opt(p, "--seed", type=int)
    _opt(p, "--stream", type=int, help="stream family within the seed (default 0)")
    _opt(p, "--model", help="JSON/TOML model descriptor; defaults to the case-study parameters")
    _opt(p, "-o", "--output")
    _common(p)

    p = sub.add_parser("solve", help="minimum-width nominal or robust band")
    _opt(p, "mode", nargs="?", help="nominal or robust")
    _opt(p, "paths", nargs="?")
    _opt(p, "-a", "--alpha", type=float)
    _opt(p, "-g", "--gamma", type=float)
    _opt(p, "--tune", action="store_true", help="estimate gamma by cross-validated bisection")
    _opt(p, "--time-limit", type=float, help="seconds")
    _opt(p, "-K", "--folds", type=int)
    _opt(p, "-N", "--iterations", type=int)
    _opt(p, "--seed", type=int)
    _solver_flags(p)
    _budget_flags(p)
    _opt(p, "-o", "--output")
    _common(p)

    p = sub.add_parser("tune", help="estimate gamma and solve the final robust band")
    _opt(p, "paths", nargs="?")
    _opt(p, "-a", "--alpha", type=float)
    _opt(p, "-K", "--folds", type=int)
    _opt(p, "-N", "--iterations", type=int)
    _opt(p, "--seed", type=int)
    _opt(p, "--final-gap", type=float)
    _opt(p, "--warm-start", action="store_true")
    _opt(p, "--budget-scope", choices=("full", "fold"))
    _solver_flags(p)
    _budget_flags(p)
    _opt(p, "-o", "--output")
    _common(p)

    p = sub.add_parser("evaluate", help="coverage of a band on held-out path sets")
    _opt(p, "band", nargs="?")
    _opt(p, "eval_paths", nargs="*")
    _opt(p, "-o", "--output")
    _common(p)

    p = sub.add_parser("reproduce-table1", help="VAR(1) coverage study, nominal vs robust")
    _opt(p, "--n", type=int, nargs="+")
    _opt(p, "--seed", type=int)
    _opt(p, "-a", "--alpha", type=float)
    _opt(p, "--eval-sets", type=int)
    _opt(p, "--eval-size", type=int)
    _opt(p, "--gap", type=float)
    _opt(p, "-N", "--iterations", type=int)
    _opt(p, "--force", action="store_true", help=f"allow evaluation sets below {MIN_EVAL_SIZE} paths")
    _opt(p, "--out-dir")
    _common(p)

    p = sub.add_parser("plot", help="static SVG of a band")
    _opt(p, "band", nargs="?")
    _opt(p, "--paths", help="CSV of paths to overlay")
    _opt(p, "--reference", help="CSV holding the reference path")
    _opt(p, "--reference-row", type=int, help="1-based row of the reference CSV (default 1)")
    _opt(p, "--max-paths", type=int)
    _opt(p, "--title")
    _opt(p, "-o", "--output")
    _common(p)
    return parser


# ---------------------------------------------------------------------------
# settings
# ---------------------------------------------------------------------------


def _read_config(path: str) -> dict:
    try:
        if path.endswith(".toml"):
            try:
                import tomllib
            except ModuleNotFoundError:  # Python < 3.11
                import tomli as tomllib
            with open(path, "rb") as fh:
                return tomllib.load(fh)
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise CliIOError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    except ValueError as exc:
        raise UsageError(f"malformed config {path}: {exc}") from exc


def _norm(d: dict) -> dict:
    return {str(k).replace("-", "_"): v for k, v in d.items()}


def effective_settings(command: str, ns: argparse.Namespace) -> dict:
    flags = {k: v for k, v in vars(ns).items() if k not in ("command", "config", "print_config")}
    settings = dict(DEFAULTS[command])
    cfg_path = getattr(ns, "config", None)
    if cfg_path:
        raw = _read_config(cfg_path)
        if not isinstance(raw, dict):
            raise UsageError(f"config {cfg_path} must hold a mapping")
        top = _norm({k: v for k, v in raw.items() if not isinstance(v, dict) or k == "model"})
        section = raw.get(command, {})
        if not isinstance(section, dict):
            raise UsageError(f"config section {command!r} must be a mapping")
        for src in (top, _norm(section)):
            unknown = sorted(set(src) - set(settings))
            if src is not top and unknown:
                raise UsageError(f"unknown {command} settings in config: {', '.join(unknown)}")
            settings.update({k: v for k, v in src.items() if k in settings})
    settings.update(flags)
    return settings


def _need(s: dict, key: str, what: str | None = None):
    if s.get(key) in (None, [], ""):
        raise UsageError(f"missing {what or key.replace('_', '-')}")
    return s[key]


def _check_range(name, value, lo=None, hi=None, lo_open=False, hi_open=False):
    if value is None:
        return
    bad = (lo is not None and (value <= lo if lo_open else value < lo)) or \
          (hi is not None and (value >= hi if hi_open else value > hi))
    if bad:
        left = "(" if lo_open else "["
        right = ")" if hi_open else "]"
        raise UsageError(f"{name} must lie in {left}{lo if lo is not None else '-inf'}, "
                         f"{hi if hi is not None else 'inf'}{right}, got {value}")


def _validate(command: str, s: dict):
    _check_range("alpha", s.get("alpha"), 0, 1, lo_open=True, hi_open=True)
    _check_range("gap", s.get("gap"), 0, 1, hi_open=True)
    _check_range("final-gap", s.get("final_gap"), 0, 1, hi_open=True)
    _check_range("gamma", s.get("gamma"), 0, 1)
    _check_range("margin", s.get("margin"), 0)
    _check_range("node-limit", s.get("node_limit"), 1)
    _check_range("time-limit", s.get("time_limit"), 0, lo_open=True)
    if command in ("solve", "tune"):
        _check_range("K", s.get("folds"), 2)
        _check_range("iterations", s.get("iterations"), 1)
    if command == "simulate":
        if s.get("kind") not in SIM_KINDS:
            raise UsageError(f"simulate needs a kind from {SIM_KINDS}")
        _check_range("n", s["n"], 1)
        _check_range("seed", s["seed"], 0)
        _need(s, "output")
    elif command == "solve":
        if s.get("mode") not in ("nominal", "robust"):
            raise UsageError("solve needs a mode: nominal or robust")
        _need(s, "paths", "paths file")
        _need(s, "output")
        if s["mode"] == "robust" and s.get("gamma") is None and not s.get("tune"):
            raise UsageError("robust mode needs --gamma or --tune")
        if s["mode"] == "nominal" and (s.get("gamma") is not None or s.get("tune")):
            raise UsageError("nominal mode takes neither --gamma nor --tune")
    elif command == "tune":
        _need(s, "paths", "paths file")
        _need(s, "output")
    elif command == "evaluate":
        _need(s, "band", "band JSON")
        _need(s, "eval_paths", "evaluation CSV files")
    elif command == "reproduce-table1":
        ns = s["n"] if isinstance(s["n"], list) else [s["n"]]
        s["n"] = [int(v) for v in ns]
        for v in s["n"]:
            _check_range("n", v, 4)
        _check_range("eval-sets", s["eval_sets"], 1)
        _check_range("eval-size", s["eval_size"], 1)
        _check_range("iterations", s["iterations"], 1)
        if s["eval_size"] < MIN_EVAL_SIZE and not s["force"]:
            raise UsageError(f"eval size {s['eval_size']} is below the minimum {MIN_EVAL_SIZE}; "
                             "pass --force to override")
    elif command == "plot":
        _need(s, "band", "band JSON")
        _need(s, "output")
        _check_range("reference-row", s["reference_row"], 1)
        _check_range("max-paths", s["max_paths"], 0)


def _check_inputs(s: dict, keys):
    for key in keys:
        vals = s.get(key)
        for path in vals if isinstance(vals, list) else [vals]:
            if path is not None and not os.path.isfile(path):
                raise CliIOError(f"input file not found: {path}")


def _check_output_dir(path: str | None):
    if path is None:
        return
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise CliIOError(f"output directory does not exist: {parent}")


# ---------------------------------------------------------------------------
# I/O helpers
# ---------------------------------------------------------------------------


def _load_paths(path: str):
    try:
        return load_paths(path)
    except OSError as exc:
        raise CliIOError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except PathFormatError as exc:
        raise UsageError(f"{path}: {exc}") from exc


def _load_json(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except OSError as exc:
        raise CliIOError(f"cannot read {path}: {exc.strerror or exc}") from exc
    except ValueError as exc:
        raise UsageError(f"{path}: malformed JSON ({exc})") from exc


def _load_band(path: str):
    obj = _load_json(path)
    if isinstance(obj.get("band"), dict):  # tuner output
        obj = obj["band"]
    try:
        return band_from_dict(obj)
    except (KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"{path}: not a band JSON ({exc})") from exc


def _write_text(path: str, text: str):
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise CliIOError(f"cannot write {path}: {exc.strerror or exc}") from exc


def _write_json(path: str, obj):
    _write_text(path, json.dumps(obj, indent=2) + "\n")


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def _budget_rule(s):
    return sample_budget(s["margin"], upper_bound=s["upper_bound"], lower_bound=s["lower_bound"])


def cmd_simulate(s: dict) -> int:
    _check_output_dir(s["output"])
    kind = s["kind"]
    model_src = s.get("model")
    base = "var" if kind == "var" else "erlang-r"
    try:
        if model_src is None:
            model = CASE_STUDY_VAR if base == "var" else MCE_ERLANG_R
        else:
            if isinstance(model_src, str):
                _check_inputs(s, ["model"])
            model = load_model(model_src, base)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"invalid model: {exc}") from exc
    if kind == "erlang-r-stationary":
        model = average_rate_model(model)
    rng = RandomSource(s["seed"], s["stream"])
    paths = simulate_var(model, s["n"], rng) if base == "var" else simulate_erlang_r(model, s["n"], rng)
    try:
        save_paths(paths, s["output"])
    except OSError as exc:
        raise CliIOError(f"cannot write {s['output']}: {exc.strerror or exc}") from exc
    print(f"simulated {kind}: n={paths.n} H={paths.H} seed={s['seed']} -> {s['output']}")
    return EXIT_OK


def _solve_opts(s: dict) -> SolveOptions:
    return SolveOptions(gap_tolerance=s["gap"], node_limit=s["node_limit"], time_limit=s.get("time_limit"),
                        cover_mode=s["cover_mode"], slack_spread=s["slack_spread"])


def _tuner_config(s: dict) -> TunerConfig:
    return TunerConfig(K=s["folds"], max_iterations=s["iterations"], seed=s["seed"], gap_tolerance=s["gap"],
                       final_gap_tolerance=s.get("final_gap"), node_limit=s["node_limit"],
                       warm_start=bool(s.get("warm_start")), slack_spread=s["slack_spread"],
                       cover_mode=s["cover_mode"], budget_scope=s.get("budget_scope", "full"))


def _report_solve(res, label: str):
    print(f"{label}: objective={res.objective:.6g} covered={len(res.covered)}/{res.n} "
          f"gap={res.gap:.4g} nodes={res.nodes_explored}"
          + ("" if res.proven_optimal else " (limit reached, not proven)"))


def cmd_solve(s: dict) -> int:
    _check_inputs(s, ["paths"])
    _check_output_dir(s["output"])
    paths = _load_paths(s["paths"])
    opts = _solve_opts(s)
    if s["mode"] == "nominal":
        res = solve_nominal(paths, s["alpha"], opts)
        out = res.to_dict()
    elif s.get("tune"):
        tuned = tune_gamma(paths, s["alpha"], replace(_tuner_config(s), final_gap_tolerance=None),
                           _budget_rule(s))
        res = tuned.final
        out = res.to_dict()
        out["gamma_hat"] = tuned.gamma_hat
    else:
        q = empirical_quantiles(paths, s["alpha"])
        budget = default_budget(paths, q, s["margin"], s["gamma"], s["upper_bound"], s["lower_bound"])
        res = solve_robust(paths, s["alpha"], budget, opts)
        out = res.to_dict()
    _write_json(s["output"], out)
    _report_solve(res, s["mode"])
    return EXIT_OK if res.proven_optimal else EXIT_LIMIT


def cmd_tune(s: dict) -> int:
    _check_inputs(s, ["paths"])
    _check_output_dir(s["output"])
    paths = _load_paths(s["paths"])
    if s["folds"] > paths.n:
        raise UsageError(f"cannot split {paths.n} paths into {s['folds']} folds")
    tuned = tune_gamma(paths, s["alpha"], _tuner_config(s), _budget_rule(s))
    _write_json(s["output"], tuned.to_dict())
    print(f"gamma_hat={tuned.gamma_hat:.6g} after {len(tuned.trace)} iterations")
    _report_solve(tuned.final, "final")
    return EXIT_OK if tuned.final.proven_optimal else EXIT_LIMIT


def cmd_evaluate(s: dict) -> int:
    files = s["eval_paths"] if isinstance(s["eval_paths"], list) else [s["eval_paths"]]
    _check_inputs(s, ["band"])
    _check_inputs({"f": files}, ["f"])
    _check_output_dir(s.get("output"))
    band = _load_band(s["band"])
    sets = [_load_paths(f) for f in files]
    for f, ps in zip(files, sets):
        if ps.H != band.H:
            raise UsageError(f"{f} has {ps.H} steps but the band has {band.H}")
    rates = [coverage_rate(band, ps) for ps in sets]
    avg = sum(rates) / len(rates)
    for j, (f, r) in enumerate(zip(files, rates)):
        print(f"set #{j + 1} {f}: coverage {100 * r:.1f}%")
    print(f"average: {100 * avg:.1f}%")
    if s.get("output"):
        _write_json(s["output"], {
            "sets": [{"file": f, "n": ps.n, "coverage": r} for f, ps, r in zip(files, sets, rates)],
            "average": avg,
            "alpha": band.alpha,
            "gamma": band.gamma,
        })
    return EXIT_OK


def cmd_reproduce_table1(s: dict) -> int:
    out_dir = s.get("out_dir")
    if out_dir is not None and not os.path.isdir(out_dir):
        raise CliIOError(f"output directory does not exist: {out_dir}")
    rows = []
    for n in s["n"]:
        row = table1_row(n, s["seed"], alpha=s["alpha"], eval_sets=s["eval_sets"], eval_size=s["eval_size"],
                         gap=s["gap"], iterations=s["iterations"], K=table1_folds(n), force=s["force"])
        rows.append(row)
        print(f"n={n}: nominal {100 * row.nominal_avg:.1f}% robust {100 * row.robust_avg:.1f}% "
              f"gamma_hat={row.gamma_hat:.4f}", file=sys.stderr)
    text = format_table1(rows)
    print(text)
    if out_dir is not None:
        _write_text(os.path.join(out_dir, "table1.csv"), table1_csv(rows))
        _write_text(os.path.join(out_dir, "table1.txt"), text + "\n")
    return EXIT_OK


def cmd_plot(s: dict) -> int:
    from .plotting import render_band_svg

    _check_inputs(s, ["band", "paths", "reference"])
    _check_output_dir(s["output"])
    band = _load_band(s["band"])
    paths = _load_paths(s["paths"]) if s.get("paths") else None
    ref = None
    if s.get("reference"):
        refs = _load_paths(s["reference"])
        row = s["reference_row"]
        if row > refs.n:
            raise UsageError(f"{s['reference']} has {refs.n} rows; cannot take row {row}")
        ref = refs.paths[row - 1]
        if ref.shape[0] != band.H:
            raise UsageError(f"reference has {ref.shape[0]} steps but the band has {band.H}")
    if paths is not None and paths.H != band.H:
        raise UsageError(f"{s['paths']} has {paths.H} steps but the band has {band.H}")
    svg = render_band_svg(band, paths, ref, max_paths=s["max_paths"], title=s.get("title"))
    _write_text(s["output"], svg)
    print(f"wrote {s['output']}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "solve": cmd_solve,
    "tune": cmd_tune,
    "evaluate": cmd_evaluate,
    "reproduce-table1": cmd_reproduce_table1,
    "plot": cmd_plot,
}


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    try:
        settings = effective_settings(ns.command, ns)
        if getattr(ns, "print_config", False):
            print(json.dumps({"command": ns.command, **settings}, indent=2))
            return EXIT_OK
        _validate(ns.command, settings)
        return COMMANDS[ns.command](settings)
    except UsageError as exc:
        print(f"robust-bands {ns.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except CliIOError as exc:
        print(f"robust-bands {ns.command}: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"robust-bands {ns.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
