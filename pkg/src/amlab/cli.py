"""Command line: ``amlab run <config>``, ``amlab validate <config>``.

Artifacts written to the output directory:

``resolved_config.toml``
    The config with every default filled in.
``<scenario>.csv``
    One row per sweep point. Floats use ``repr``, the shortest decimal that
    round-trips.
``summary.json``
    Pass flags, the failing invariants by name and the full report, with keys
    sorted. Non-finite floats appear as the strings ``"inf"``, ``"-inf"``, ``"nan"``.

Exit codes: 0 all pass, 1 scenario failed or invalid, 2 config error,
3 numerical error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .config import DATA, RunConfig, build_model, emit_config, parse_config, with_overrides
from .errors import ConfigError, InputError, NumericalError
from .experiments import blowup_probe, flatness_sweep, stability_check
from .grid import GridField, build_grid
from .pde_solver import SolverConfig

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2, 3


def _clean(v):
    if isinstance(v, float) and not math.isfinite(v):
        return "nan" if math.isnan(v) else ("inf" if v > 0 else "-inf")
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.generic):
        return _clean(v.item())
    return v


def _cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return " ".join(_cell(x) for x in v)
    return str(v)


def _csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(row[k]) for k in header])
    return buf.getvalue()


def _solver(cfg: RunConfig) -> SolverConfig:
    return SolverConfig(**cfg.block("solver"))


def _flatness(cfg: RunConfig):
    s, g = cfg.block("scenario"), cfg.block("grid")
    sweep = flatness_sweep(
        build_model(cfg.block("model")), s["taus"], s["epsilons"], s["seeds"],
        g["coarse_nodes"], g["nodes"], s["margin"], s["mu"], _solver(cfg),
    )
    header = ["seed", "tau_target", "eps", "h", "tau_measured", "delta", "mu", "lhs",
              "rhs_tau", "rhs_delta", "rhs_tail", "rhs", "c_emp", "x0", "status"]
    rows = [r.to_dict() for r in sweep.reports]
    failing = []
    if any(not r.valid for r in sweep.reports + sweep.calibration):
        failing.append("delta_defect_window")
    if any(r.valid and not r.passed for r in sweep.reports):
        failing.append("frozen_constant_inequality")
    if not sweep.monotone:
        failing.append("lhs_monotone_in_tau")
    invalid = "delta_defect_window" in failing
    return header, rows, sweep.to_dict(), failing, invalid


def _stability(cfg: RunConfig):
    s, g = cfg.block("scenario"), cfg.block("grid")
    model = build_model(cfg.block("model"))
    grid = build_grid([(g["lower"], g["upper"])] * model.n, g["nodes"])
    data, scale = DATA[s["data"]], s["data_scale"]
    rep = stability_check(model, s["gammas"], grid, lambda x: scale * data(x), s["eps"], s["c_emp"], _solver(cfg))
    rows = []
    for k, gamma in enumerate(rep.gammas):
        rows.append({"gamma": gamma, "max_H": rep.max_H[k], "bound": rep.bound,
                     "distance_to_previous": rep.distances[k - 1] if k else math.nan})
    failing = []
    if not rep.bounded:
        failing.append("bounded_max_H")
    if not rep.decreasing:
        failing.append("decreasing_distances")
    return ["gamma", "max_H", "bound", "distance_to_previous"], rows, rep.to_dict(), failing, False


def _blowup(cfg: RunConfig):
    s, g = cfg.block("scenario"), cfg.block("grid")
    model = build_model(cfg.block("model"))
    grid = build_grid([(g["lower"], g["upper"])] * model.n, g["nodes"])
    u = GridField.from_function(grid, DATA[s["field"]], s["field"])
    rep = blowup_probe(u, s["center"], s["radii"], model, s["samples"])
    rows = [
        {"radius": r, "slope": rep.slopes[k], "deviation": rep.deviations[k], "H_slope": rep.H_slope[k], "H_max": rep.H_max[k]}
        for k, r in enumerate(rep.radii)
    ]
    return ["radius", "slope", "deviation", "H_slope", "H_max"], rows, rep.to_dict(), [], False


_SCENARIOS = {"flatness": _flatness, "stability": _stability, "blowup": _blowup}


def run_scenario(config: RunConfig) -> tuple[int, dict[str, str]]:
    """Run the configured scenario; returns the exit status and the artifact texts by file name."""
    name = config.scenario
    header, rows, report, failing, invalid = _SCENARIOS[name](config)
    status = "invalid" if invalid else ("fail" if failing else "pass")
    summary = {"scenario": name, "status": status, "passed": not failing, "failing": failing,
               "seed": config.seed, "report": report}
    artifacts = {"resolved_config.toml": emit_config(config)}
    formats = config.block("output")["formats"]
    if "csv" in formats:
        artifacts[f"{name}.csv"] = _csv(header, rows)
    if "json" in formats:
        artifacts["summary.json"] = json.dumps(_clean(summary), sort_keys=True, indent=2, allow_nan=False) + "\n"
    return (EXIT_PASS if not failing else EXIT_FAIL), artifacts


def write_artifacts(directory: str | Path, artifacts: dict[str, str]) -> None:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for name in sorted(artifacts):
        (out / name).write_text(artifacts[name], encoding="utf-8")


def _load(path: str) -> RunConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    return parse_config(text)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="amlab", description="Regularized Aronsson experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario and write artifacts")
    run.add_argument("config")
    run.add_argument("--out", help="output directory (overrides [output] directory)")
    run.add_argument("--seed", type=int, help="global seed (overrides the config)")
    run.add_argument("--threads", type=int, help="cap on BLAS/OpenMP threads")
    val = sub.add_parser("validate", help="parse a config and print it resolved")
    val.add_argument("config")
    args = parser.parse_args(argv)
    try:
        cfg = _load(args.config)
        if args.command == "validate":
            sys.stdout.write(emit_config(cfg))
            return EXIT_PASS
        cfg = with_overrides(cfg, seed=args.seed, directory=args.out)
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be positive")
        with threadpool_limits(limits=args.threads):
            status, artifacts = run_scenario(cfg)
        write_artifacts(cfg.block("output")["directory"], artifacts)
        summary = json.loads(artifacts.get("summary.json", "{}")) if "summary.json" in artifacts else {}
        print(f"{cfg.scenario}: {summary.get('status', 'pass' if status == 0 else 'fail')}")
        return status
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except InputError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
