"""Command-line front end.

Subcommands:

    solve      optimal schedules for each risk aversion (and correlation,
               under a stochastic turnover model); CSV per schedule plus a
               machine-readable report.json
    validate   run the self-validation suite and write validation.json
    expand     small-risk expansion around the volume-proportional schedule
               (deterministic turnover configurations only)
    simulate   solve, then Monte Carlo the realized cost of each schedule

Configuration is a JSON document (see _build_run from the schema below) given
either with --config PATH or as a named built-in preset with --preset.  Exit
codes: 0 success, 2 configuration problem, 3 solver or validation failure.
Diagnostics go to stderr; each command prints a one-line JSON summary to
stdout.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .cost import MarketParams
from .errors import SolverFailureError
from .grids import TimeGrid, build_grid
from .montecarlo import SimulationConfig, estimate_cost_moments
from .optimizer import solve_qp_deterministic, solve_sqp_gbm
from .strategies import asymptotic_expansion, strategy_to_csv, vwap_strategy
from .validation import run_validation
from .volume import (
    GbmVolumeModel,
    VolumeProfile,
    arcsine_profile,
    constant_profile,
    profile_from_samples,
)

SCHEMA_VERSION = 1
PRESETS = ("fig1", "fig2", "fig3")


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    volume: object            # VolumeProfile or GbmVolumeModel
    market: MarketParams
    grid: TimeGrid
    Phi: float
    lambdas: list
    rhos: list                # empty for deterministic turnover
    n_paths: int
    seed: int
    antithetic: bool
    dump_paths: bool
    out_dir: Optional[str]

    @property
    def stochastic(self) -> bool:
        return isinstance(self.volume, GbmVolumeModel)


def _require(mapping, key, kind, where):
    if key not in mapping:
        raise ConfigError(f"missing {where}.{key}")
    value = mapping[key]
    try:
        if kind is float:
            return float(value)
        if kind is int:
            out = int(value)
            if out != value:
                raise ValueError
            return out
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{key} must be a {kind.__name__}, got {value!r}") from None
    return value


def _build_run(doc: dict, seed_override=None, grid_n_override=None) -> RunConfig:
    """Validate the JSON document and build the run inputs.

    Schema (all lengths in horizon units, schedule size in shares):

        {"schema": 1,
         "volume": {"type": "arcsine" | "constant" | "samples" | "gbm", ...},
         "market": {"kappa", "kappa_tilde", "sigma_tilde", "s0"},
         "phi": 1.0, "horizon": 1.0, "grid_n": 500,
         "lambdas": [0.0, ...],
         "rhos": [0.0, ...],                      # gbm turnover only
         "mc": {"n_paths", "seed", "antithetic", "dump_paths"},
         "out_dir": "optional/path"}

    constant takes {"level"}, samples takes {"values": [grid_n + 1 samples]},
    gbm takes {"v0", "mu", "sigma", "rho"}.
    """
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    if doc.get("schema") != SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema {doc.get('schema')!r}, expected {SCHEMA_VERSION}")
    mdoc = doc.get("market")
    if not isinstance(mdoc, dict):
        raise ConfigError("missing market section")
    try:
        market = MarketParams(
            kappa=_require(mdoc, "kappa", float, "market"),
            kappa_tilde=_require(mdoc, "kappa_tilde", float, "market"),
            sigma_tilde=_require(mdoc, "sigma_tilde", float, "market"),
            s0=_require(mdoc, "s0", float, "market"),
        )
    except ValueError as e:
        raise ConfigError(f"bad market parameters: {e}") from None

    horizon = _require(doc, "horizon", float, "config")
    grid_n = grid_n_override if grid_n_override is not None else _require(doc, "grid_n", int, "config")
    try:
        grid = build_grid(horizon, grid_n)
    except ValueError as e:
        raise ConfigError(str(e)) from None

    vdoc = doc.get("volume")
    if not isinstance(vdoc, dict) or "type" not in vdoc:
        raise ConfigError("missing volume.type")
    vtype = vdoc["type"]
    try:
        if vtype == "arcsine":
            volume = arcsine_profile(grid)
        elif vtype == "constant":
            volume = constant_profile(grid, _require(vdoc, "level", float, "volume"))
        elif vtype == "samples":
            values = vdoc.get("values")
            if not isinstance(values, list) or len(values) != grid_n + 1:
                raise ConfigError(
                    f"volume.values must hold grid_n + 1 = {grid_n + 1} samples"
                )
            volume = profile_from_samples(grid, np.asarray(values, dtype=float))
        elif vtype == "gbm":
            volume = GbmVolumeModel(
                v0=_require(vdoc, "v0", float, "volume"),
                mu=_require(vdoc, "mu", float, "volume"),
                sigma=_require(vdoc, "sigma", float, "volume"),
                rho=_require(vdoc, "rho", float, "volume"),
            )
        else:
            raise ConfigError(f"unknown volume.type {vtype!r}")
    except ValueError as e:
        raise ConfigError(f"bad volume section: {e}") from None

    Phi = _require(doc, "phi", float, "config")
    if Phi <= 0.0:
        raise ConfigError(f"phi must be positive, got {Phi}")
    lambdas = doc.get("lambdas")
    if not isinstance(lambdas, list) or not lambdas:
        raise ConfigError("lambdas must be a non-empty list")
    lambdas = [float(x) for x in lambdas]
    if any(x < 0 for x in lambdas):
        raise ConfigError("lambdas must be nonnegative")
    rhos = doc.get("rhos", [])
    if not isinstance(rhos, list):
        raise ConfigError("rhos must be a list")
    rhos = [float(x) for x in rhos]
    if rhos and not isinstance(volume, GbmVolumeModel):
        raise ConfigError("rhos only applies to a gbm volume model")
    if any(abs(r) > 1.0 for r in rhos):
        raise ConfigError("rhos must lie in [-1, 1]")

    mc = doc.get("mc", {})
    if not isinstance(mc, dict):
        raise ConfigError("mc must be an object")
    n_paths = int(mc.get("n_paths", 20_000))
    if n_paths < 2:
        raise ConfigError("mc.n_paths must be at least 2")
    seed = seed_override if seed_override is not None else int(mc.get("seed", 0))
    return RunConfig(
        volume=volume,
        market=market,
        grid=grid,
        Phi=Phi,
        lambdas=lambdas,
        rhos=rhos,
        n_paths=n_paths,
        seed=seed,
        antithetic=bool(mc.get("antithetic", False)),
        dump_paths=bool(mc.get("dump_paths", False)),
        out_dir=doc.get("out_dir"),
    )


def _load_doc(args) -> dict:
    if args.config and args.preset:
        raise ConfigError("give either --config or --preset, not both")
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config: {e}") from None
    elif args.preset:
        try:
            text = resources.files("volexec.presets").joinpath(f"{args.preset}.json").read_text()
        except (FileNotFoundError, ModuleNotFoundError) as e:
            raise ConfigError(f"unknown preset {args.preset!r}: {e}") from None
    else:
        raise ConfigError("a configuration is required: --config PATH or --preset NAME")
    try:
        return json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config is not valid JSON: {e}") from None


def _out_dir(args, run: RunConfig) -> Path:
    out = args.out or run.out_dir or "."
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _fmt(x: float) -> str:
    return format(x, "g")


def _write_json(path: Path, doc: dict) -> None:
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _emit(doc: dict) -> None:
    print(json.dumps(doc, sort_keys=True))


def _solve_sweep(run: RunConfig):
    """Yield (lambda, rho-or-None, strategy, report) across the config sweep."""
    if run.stochastic:
        rhos = run.rhos or [run.volume.rho]
        for lam in run.lambdas:
            for rho in rhos:
                model = GbmVolumeModel(
                    v0=run.volume.v0, mu=run.volume.mu, sigma=run.volume.sigma, rho=rho
                )
                s, rep = solve_sqp_gbm(model, lam, run.market, run.Phi, run.grid)
                yield lam, rho, s, rep
    else:
        for lam in run.lambdas:
            s, rep = solve_qp_deterministic(run.volume, lam, run.market, run.Phi)
            yield lam, None, s, rep


def _strategy_filename(lam, rho) -> str:
    name = f"strategy_lam{_fmt(lam)}"
    if rho is not None:
        name += f"_rho{_fmt(rho)}"
    return name + ".csv"


def cmd_solve(args) -> int:
    run = _build_run(_load_doc(args), args.seed, args.grid_n)
    out = _out_dir(args, run)
    results = []
    failed = False
    for lam, rho, s, rep in _solve_sweep(run):
        fname = _strategy_filename(lam, rho)
        strategy_to_csv(s, str(out / fname))
        entry = {"lambda": lam, "file": fname, **rep.as_dict()}
        if rho is not None:
            entry["rho"] = rho
        results.append(entry)
        if rep.status != "converged":
            failed = True
            print(f"solver did not converge for lambda={lam} rho={rho}", file=sys.stderr)
    report = {"schema": SCHEMA_VERSION, "command": "solve", "results": results,
              "all_converged": not failed}
    _write_json(out / "report.json", report)
    _emit({"command": "solve", "out_dir": str(out), "n_results": len(results),
           "all_converged": not failed})
    return 3 if failed else 0


def cmd_validate(args) -> int:
    run = _build_run(_load_doc(args), args.seed, args.grid_n)
    out = _out_dir(args, run)
    lambdas = [x for x in run.lambdas if x > 0] or [0.5, 1.0, 2.0]
    report = run_validation(
        run.volume,
        run.market,
        run.grid,
        Phi=run.Phi,
        n_paths=run.n_paths,
        seed=run.seed,
        lambdas=lambdas,
    )
    _write_json(out / "validation.json", report)
    failed = [c["name"] for c in report["checks"] if not c["passed"]]
    for name in failed:
        print(f"validation check failed: {name}", file=sys.stderr)
    _emit({"command": "validate", "out_dir": str(out),
           "n_checks": len(report["checks"]), "all_passed": report["all_passed"]})
    return 0 if report["all_passed"] else 3


def cmd_expand(args) -> int:
    run = _build_run(_load_doc(args), args.seed, args.grid_n)
    if run.stochastic:
        raise ConfigError("expand requires a deterministic turnover profile")
    out = _out_dir(args, run)
    base = vwap_strategy(run.volume, run.Phi)
    columns = {"t": run.grid.nodes, "zeta0": base.zeta}
    zeta1 = None
    for lam in run.lambdas:
        comp, zeta1 = asymptotic_expansion(run.volume, run.market, lam, run.Phi)
        columns[f"composite_lam{_fmt(lam)}"] = comp.zeta
    columns["zeta1"] = zeta1
    names = ["t", "zeta0", "zeta1"] + [k for k in columns if k.startswith("composite_")]
    with open(out / "expansion.csv", "w") as f:
        f.write(",".join(names) + "\n")
        for row in zip(*(columns[k] for k in names)):
            f.write(",".join(f"{x:.17g}" for x in row) + "\n")
    _emit({"command": "expand", "out_dir": str(out), "n_lambdas": len(run.lambdas)})
    return 0


def cmd_simulate(args) -> int:
    run = _build_run(_load_doc(args), args.seed, args.grid_n)
    out = _out_dir(args, run)
    entries = []
    for lam, rho, s, rep in _solve_sweep(run):
        cfg = SimulationConfig(
            n_paths=run.n_paths,
            seed=run.seed,
            grid=run.grid,
            market=run.market,
            volume=run.volume,
            rho=rho if (rho is not None and run.stochastic) else None,
        )
        est, costs = estimate_cost_moments(
            s, cfg, antithetic=run.antithetic, return_costs=True
        )
        entry = {"lambda": lam, "objective": rep.objective, "status": rep.status,
                 "moments": est.as_dict()}
        if rho is not None:
            entry["rho"] = rho
        if run.dump_paths:
            fname = _strategy_filename(lam, rho).replace("strategy_", "costs_")
            with open(out / fname, "w") as f:
                f.write("path,cost\n")
                for i, c in enumerate(costs):
                    f.write(f"{i},{c:.17g}\n")
            entry["costs_file"] = fname
        entries.append(entry)
    report = {"schema": SCHEMA_VERSION, "command": "simulate", "results": entries}
    _write_json(out / "simulate.json", report)
    _emit({"command": "simulate", "out_dir": str(out), "n_results": len(entries)})
    return 0


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="volexec",
        description="Volume-weighted execution scheduling under linear market impact.",
    )
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, help_ in (
        ("solve", cmd_solve, "solve the schedule sweep and write CSV/JSON artifacts"),
        ("validate", cmd_validate, "run the self-validation suite"),
        ("expand", cmd_expand, "small-risk expansion around volume-proportional"),
        ("simulate", cmd_simulate, "solve, then Monte Carlo the realized costs"),
    ):
        q = sub.add_parser(name, help=help_)
        q.add_argument("--config", help="path to a JSON run configuration")
        q.add_argument("--preset", choices=PRESETS, help="named built-in configuration")
        q.add_argument("--out", help="output directory (overrides config out_dir)")
        q.add_argument("--seed", type=int, help="override mc.seed")
        q.add_argument("--grid-n", type=int, help="override grid_n")
        q.set_defaults(handler=fn)
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.handler(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except SolverFailureError as e:
        print(f"solver failure: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
