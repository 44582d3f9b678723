"""Command-line surface: generate, solve, evaluate, compare, benchmark.

Outputs are self-describing JSON documents embedding a run manifest
(command, configuration snapshot, instance hash, seed, tool version);
instance files omit timestamps so repeated generation is byte-identical.
Exit codes: 0 ok, 2 validation error, 3 solve failure, 4 I/O error.
"""

from __future__ import annotations

import datetime as _dt
import itertools
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import click
import numpy as np

from . import __version__, solver
from .algorithms import (BENDERS, CCG_CLASSIC, CCG_PLUS, CONVERGED, MONOLITHIC,
                         AlgorithmConfig, AlgorithmError, solve_instance)
from .evaluation import (ALL_VARIANTS, EvaluationSpec, compare_variants, evaluate_plan,
                         report_to_csv, sample_scenarios, statistics)
from .formulations import FormulationError
from .instances import (GeneratorSpec, InstanceLoadError, ambiguity_warnings,
                        generate_random, instance_hash, load_case_study, load_instance,
                        save_instance, with_capacity_moment)
from .models import InvestmentPlan, MomentVariant, validate_instance

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SOLVE = 3
EXIT_IO = 4

_ALGO_CHOICES = {"ccg+": CCG_PLUS, "ccg": CCG_CLASSIC, "benders": BENDERS,
                 "monolithic": MONOLITHIC}
_MOMENT_CHOICES = {"location": MomentVariant.LOCATION_LINEAR,
                   "location-bounded": MomentVariant.LOCATION_BOUNDED,
                   "capacity": MomentVariant.CAPACITY}


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _manifest(command: str, config: dict, seed=None, inst_hash=None,
              timestamps: bool = True) -> dict:
    man = {"command": command, "config": config, "seed": seed,
           "instanceHash": inst_hash, "toolVersion": __version__}
    if timestamps:
        man["startedAt"] = _now()
    return man


def _write_json(path, doc) -> None:
    try:
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1)
            fh.write("\n")
    except OSError as exc:
        raise click.ClickException(f"cannot write {path}: {exc}") from exc


def _apply_config_file(path) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        cfg = json.load(fh)
    engine = cfg.get("solver", {}).get("engine")
    if engine:
        solver.set_default_engine(engine)
    return cfg


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


@click.group()
@click.version_option(version=__version__, prog_name="ddro")
def main():
    """Robust hydrogen-network expansion planning toolkit."""


# ----------------------------------------------------------------------
@main.command()
@click.option("--supply", type=int, default=4, show_default=True)
@click.option("--demand", type=int, default=8, show_default=True)
@click.option("--ports", type=int, default=1, show_default=True)
@click.option("--periods", type=int, default=3, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--target-sum", type=float, default=None,
              help="Column sum of the location impact factors.")
@click.option("--epsilon-factor", type=float, default=None,
              help="Mean-deviation budget as a fraction of the base mean.")
@click.option("--case-study", is_flag=True, help="Emit the Northern-Netherlands instance.")
@click.option("--import-premium", type=float, default=0.30, show_default=True,
              help="Case study: import cost premium over production cost in 2050.")
@click.option("--demand-cap", type=float, default=None,
              help="Uniform relative demand-increase cap (location-bounded variant).")
@click.option("--capacity-ranges", type=str, default=None,
              help="Capacity moment ranges in MW, e.g. '0:200,200:400,400:inf'.")
@click.option("--capacity-targets", type=str, default=None,
              help="Per-range impact-factor column sums, e.g. '0,0.15,0.3'.")
@click.option("--out", type=click.Path(), required=True)
def generate(supply, demand, ports, periods, seed, target_sum, epsilon_factor, case_study,
             import_premium, demand_cap, capacity_ranges, capacity_targets, out):
    """Write an instance file (random protocol or the case study)."""
    try:
        if case_study:
            kw = {"periods": min(periods, 5), "import_premium_2050": import_premium}
            if target_sum is not None:
                kw["lam_target"] = target_sum
            if epsilon_factor is not None:
                kw["epsilon_factor"] = epsilon_factor
            inst = load_case_study(**kw)
        else:
            kw = {"n_supply": supply, "n_demand": demand, "n_ports": ports,
                  "n_periods": periods, "seed": seed}
            if target_sum is not None:
                kw["lam_target"] = target_sum
            if epsilon_factor is not None:
                kw["epsilon_factor"] = epsilon_factor
            inst = generate_random(GeneratorSpec(**kw))
        if demand_cap is not None:
            from dataclasses import replace
            inst = replace(inst, moment=replace(
                inst.moment, variant=MomentVariant.LOCATION_BOUNDED,
                demand_cap=np.full(inst.moment.base_mean.shape, float(demand_cap))))
        if capacity_ranges is not None:
            ranges = []
            for part in capacity_ranges.split(","):
                a, b = part.split(":")
                ranges.append((float(a), None if b.strip() in ("inf", "") else float(b)))
            targets = [float(x) for x in (capacity_targets or "").split(",") if x != ""]
            inst = with_capacity_moment(inst, ranges, targets)
    except (ValueError, InstanceLoadError) as exc:
        _fail(EXIT_VALIDATION, json.dumps({"error": "validation", "detail": str(exc)}))

    problems = validate_instance(inst)
    if problems:
        _fail(EXIT_VALIDATION, json.dumps({"error": "validation", "detail": problems[:5]}))
    config = {"supply": supply, "demand": demand, "ports": ports, "periods": periods,
              "caseStudy": case_study, "targetSum": target_sum,
              "epsilonFactor": epsilon_factor, "importPremium": import_premium}
    # no timestamps here: generation must be byte-identical per seed
    man = _manifest("generate", config, seed=seed, timestamps=False)
    try:
        save_instance(inst, out, manifest=man)
    except OSError as exc:
        _fail(EXIT_IO, f"cannot write {out}: {exc}")
    click.echo(f"instance {inst.name}: {inst.n_supply} supply / {inst.n_ports} port / "
               f"{inst.n_demand} demand nodes, {inst.periods} periods -> {out}")
    click.echo(f"validation: ok ({len(problems)} violations)")
    for w in ambiguity_warnings(inst):
        click.echo(f"warning: {w}", err=True)


# ----------------------------------------------------------------------
@main.command()
@click.option("--instance", "instance_path", type=click.Path(exists=True), required=True)
@click.option("--algorithm", type=click.Choice(sorted(_ALGO_CHOICES)), default="ccg+",
              show_default=True)
@click.option("--moment", type=click.Choice(sorted(_MOMENT_CHOICES)), default=None,
              help="Override the reformulation variant (instance data permitting).")
@click.option("--gap", type=float, default=0.001, show_default=True,
              help="Stop gap as a fraction (0.001 = 0.1%).")
@click.option("--time-limit", type=float, default=None)
@click.option("--threads", type=int, default=0, show_default=True)
@click.option("--master-gap-initial", type=float, default=0.05, show_default=True)
@click.option("--master-gap-final", type=float, default=1e-4, show_default=True)
@click.option("--gap-factor", type=float, default=0.5, show_default=True)
@click.option("--no-pregenerate", is_flag=True)
@click.option("--parallel-subproblems", is_flag=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--log-file", type=click.Path(), default=None,
              help="Line-delimited JSON iteration log.")
@click.option("--dump-lp", type=click.Path(), default=None,
              help="Directory for LP-format model dumps.")
@click.option("--plot-data", type=click.Path(), default=None,
              help="Directory for bounds-vs-iteration and capacity-by-year CSVs.")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def solve(instance_path, algorithm, moment, gap, time_limit, threads, master_gap_initial,
          master_gap_final, gap_factor, no_pregenerate, parallel_subproblems, out,
          log_file, dump_lp, plot_data, config_path):
    """Solve an instance and write the outcome document."""
    started = _now()
    try:
        file_cfg = _apply_config_file(config_path)
        inst = load_instance(instance_path)
    except (InstanceLoadError, OSError, json.JSONDecodeError) as exc:
        _fail(EXIT_VALIDATION if isinstance(exc, InstanceLoadError) else EXIT_IO, str(exc))
    problems = validate_instance(inst)
    if problems:
        _fail(EXIT_VALIDATION, json.dumps({"error": "validation", "detail": problems[:5]}))
    threads = threads or int(file_cfg.get("solver", {}).get("threads", 0))
    variant = _MOMENT_CHOICES[moment] if moment else None
    try:
        cfg = AlgorithmConfig(algorithm=_ALGO_CHOICES[algorithm], stop_gap=gap,
                              time_limit=time_limit, threads=threads,
                              master_gap_initial=master_gap_initial,
                              master_gap_final=master_gap_final, gap_factor=gap_factor,
                              pregenerate=not no_pregenerate,
                              parallel_subproblems=parallel_subproblems)
    except ValueError as exc:
        _fail(EXIT_VALIDATION, str(exc))

    sink = None
    log_fh = None
    if log_file:
        log_fh = open(log_file, "w")

        def sink(rec):
            log_fh.write(json.dumps(rec.to_dict()) + "\n")
            log_fh.flush()

    try:
        outcome = solve_instance(inst, cfg, variant=variant, log_sink=sink)
    except (AlgorithmError, FormulationError, solver.SolverError) as exc:
        _fail(EXIT_SOLVE, str(exc))
    except ValueError as exc:
        _fail(EXIT_VALIDATION, str(exc))
    finally:
        if log_fh:
            log_fh.close()

    if dump_lp:
        os.makedirs(dump_lp, exist_ok=True)
        from .formulations import build_master
        build_master(inst, outcome.scenario_pool, variant=variant).model.write_lp(
            os.path.join(dump_lp, "master_final.lp"))

    doc = outcome.to_dict()
    doc["manifest"] = _manifest("solve", {
        "algorithm": algorithm, "moment": moment, "gap": gap, "timeLimit": time_limit,
        "threads": threads, "masterGapInitial": master_gap_initial,
        "masterGapFinal": master_gap_final, "gapFactor": gap_factor,
        "pregenerate": not no_pregenerate,
    }, inst_hash=instance_hash(inst))
    doc["manifest"]["startedAt"] = started
    doc["manifest"]["finishedAt"] = _now()
    _write_json(out, doc)

    if plot_data:
        os.makedirs(plot_data, exist_ok=True)
        with open(os.path.join(plot_data, "bounds.csv"), "w") as fh:
            fh.write("iter,LB,UB\n")
            for r in outcome.log:
                fh.write(f"{r.iteration},{r.lb},{r.ub}\n")
        if outcome.plan is not None:
            cum = outcome.plan.cumulative_capacity
            with open(os.path.join(plot_data, "capacity.csv"), "w") as fh:
                fh.write("site,period,cumulative_capacity_mw\n")
                for i, sid in enumerate(inst.supply_ids):
                    for t in range(inst.periods):
                        fh.write(f"{sid},{t},{cum[i, t]}\n")

    click.echo(f"{algorithm}: status={outcome.status} objective={outcome.objective:.6g} "
               f"bound={outcome.bound:.6g} gap%={outcome.gap_pct:.4g} "
               f"iterations={outcome.iterations} time={outcome.solve_time:.2f}s")
    sys.exit(EXIT_OK if outcome.status == CONVERGED else EXIT_SOLVE)


# ----------------------------------------------------------------------
def _load_plan(path) -> InvestmentPlan:
    with open(path) as fh:
        doc = json.load(fh)
    plan = doc.get("plan", doc)
    if plan is None or "x" not in plan or "y" not in plan:
        raise InstanceLoadError(f"{path} holds no investment plan (need keys x, y)")
    e = plan.get("e")
    return InvestmentPlan(x=np.asarray(plan["x"], dtype=int),
                          y=np.asarray(plan["y"], dtype=float),
                          e=None if e is None else np.asarray(e, dtype=int))


@main.command()
@click.option("--instance", "instance_path", type=click.Path(exists=True), required=True)
@click.option("--plan", "plan_path", type=click.Path(exists=True), required=True,
              help="Solve outcome JSON (or bare plan document).")
@click.option("--scenarios", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--cv", type=float, default=0.1, show_default=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--plot-data", type=click.Path(), default=None,
              help="CSV of per-scenario objective values for external plotting.")
def evaluate(instance_path, plan_path, scenarios, seed, cv, out, plot_data):
    """Out-of-sample evaluation of a fixed plan."""
    started = _now()
    try:
        inst = load_instance(instance_path)
        plan = _load_plan(plan_path)
    except (InstanceLoadError, json.JSONDecodeError) as exc:
        _fail(EXIT_VALIDATION, str(exc))
    except OSError as exc:
        _fail(EXIT_IO, str(exc))
    spec = EvaluationSpec(n_scenarios=scenarios, seed=seed, cv=cv)
    try:
        draws = sample_scenarios(inst, plan, spec)
        row = evaluate_plan(inst, plan, draws)
    except ValueError as exc:
        _fail(EXIT_VALIDATION, str(exc))
    except (RuntimeError, solver.SolverError) as exc:
        _fail(EXIT_SOLVE, str(exc))
    doc = {"statistics": row.to_dict(), "perScenario": row.values.tolist(),
           "manifest": _manifest("evaluate", {"scenarios": scenarios, "cv": cv},
                                 seed=seed, inst_hash=instance_hash(inst))}
    doc["manifest"]["startedAt"] = started
    doc["manifest"]["finishedAt"] = _now()
    _write_json(out, doc)
    if plot_data:
        with open(plot_data, "w") as fh:
            fh.write("scenario,objective\n")
            for w, v in enumerate(row.values):
                fh.write(f"{w},{v}\n")
    click.echo(json.dumps(row.to_dict(), indent=1))
    sys.exit(EXIT_OK)


# ----------------------------------------------------------------------
@main.command()
@click.option("--instance", "instance_path", type=click.Path(exists=True), required=True)
@click.option("--variants", type=str, default=",".join(ALL_VARIANTS), show_default=True)
@click.option("--scenarios", type=int, default=1000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--cv", type=float, default=0.1, show_default=True)
@click.option("--gap", type=float, default=0.001, show_default=True)
@click.option("--time-limit", type=float, default=None)
@click.option("--algorithm", type=click.Choice(sorted(_ALGO_CHOICES)), default="ccg+",
              show_default=True)
@click.option("--common-mean", is_flag=True,
              help="Score every plan against the dro+ddu plan's sampling mean.")
@click.option("--out", type=click.Path(), required=True,
              help="JSON report path; a .csv sibling is written as well.")
def compare(instance_path, variants, scenarios, seed, cv, gap, time_limit, algorithm,
            common_mean, out):
    """Solve and evaluate the model variants side by side."""
    started = _now()
    try:
        inst = load_instance(instance_path)
        spec = EvaluationSpec(n_scenarios=scenarios, seed=seed, cv=cv,
                              variants=tuple(v.strip() for v in variants.split(",") if v.strip()),
                              common_mean=common_mean)
    except (InstanceLoadError, ValueError) as exc:
        _fail(EXIT_VALIDATION, str(exc))
    cfg = AlgorithmConfig(algorithm=_ALGO_CHOICES[algorithm], stop_gap=gap,
                          time_limit=time_limit)
    try:
        report = compare_variants(inst, spec, cfg)
    except (AlgorithmError, solver.SolverError) as exc:
        _fail(EXIT_SOLVE, str(exc))
    doc = report.to_dict()
    doc["manifest"] = _manifest("compare", {"variants": spec.variants, "scenarios": scenarios,
                                            "cv": cv, "gap": gap, "algorithm": algorithm,
                                            "commonMean": common_mean},
                                seed=seed, inst_hash=instance_hash(inst))
    doc["manifest"]["startedAt"] = started
    doc["manifest"]["finishedAt"] = _now()
    _write_json(out, doc)
    csv_path = os.path.splitext(out)[0] + ".csv"
    with open(csv_path, "w") as fh:
        fh.write(report_to_csv(report))
    click.echo(report_to_csv(report).rstrip())
    if report.errors:
        click.echo(f"variant errors: {report.errors}", err=True)
    sys.exit(EXIT_OK if report.rows else EXIT_SOLVE)


# ----------------------------------------------------------------------
def _parse_grid(spec: str):
    """Grid spec 'sizes=4/8,6/12;periods=2,3;seeds=0,1'."""
    parts = dict(kv.split("=", 1) for kv in spec.split(";") if kv)
    sizes = []
    for token in parts.get("sizes", "4/8").split(","):
        s, d = token.split("/")
        sizes.append((int(s), int(d)))
    periods = [int(p) for p in parts.get("periods", "3").split(",")]
    seeds = [int(s) for s in parts.get("seeds", "0").split(",")]
    return sizes, periods, seeds


@main.command()
@click.option("--grid", type=str, required=True,
              help="e.g. 'sizes=4/8,6/12;periods=2,3;seeds=0,1'")
@click.option("--algorithms", type=str, default="ccg+", show_default=True,
              help="Comma list from ccg+,ccg,benders.")
@click.option("--gap", type=float, default=0.001, show_default=True)
@click.option("--time-limit", type=float, default=None)
@click.option("--jobs", type=int, default=1, show_default=True)
@click.option("--out", "out_dir", type=click.Path(), required=True)
def benchmark(grid, algorithms, gap, time_limit, jobs, out_dir):
    """Run the size x periods x seeds grid and emit a per-cell results CSV."""
    try:
        sizes, periods, seeds = _parse_grid(grid)
        algos = [a.strip() for a in algorithms.split(",") if a.strip()]
        bad = [a for a in algos if a not in _ALGO_CHOICES]
        if bad:
            raise ValueError(f"unknown algorithms {bad}")
    except ValueError as exc:
        _fail(EXIT_VALIDATION, f"bad grid spec: {exc}")
    os.makedirs(out_dir, exist_ok=True)
    cells = list(itertools.product(sizes, periods, seeds))

    def run_cell(cell):
        (s, d), t, seed = cell
        inst = generate_random(GeneratorSpec(n_supply=s, n_demand=d, n_periods=t, seed=seed))
        row = {"supply": s, "demand": d, "periods": t, "seed": seed}
        for a in algos:
            cfg = AlgorithmConfig(algorithm=_ALGO_CHOICES[a], stop_gap=gap,
                                  time_limit=time_limit)
            try:
                o = solve_instance(inst, cfg)
                row[a] = {"gapPct": o.gap_pct, "iterations": o.iterations,
                          "time": o.solve_time, "status": o.status,
                          "objective": o.objective}
            except Exception as exc:
                row[a] = {"gapPct": float("nan"), "iterations": 0, "time": float("nan"),
                          "status": f"error: {exc}", "objective": float("nan")}
        return row

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            rows = list(ex.map(run_cell, cells))
    else:
        rows = [run_cell(c) for c in cells]

    csv_path = os.path.join(out_dir, "results.csv")
    with open(csv_path, "w") as fh:
        header = ["supply", "demand", "periods", "seed"]
        for a in algos:
            header += [f"{a}_gap_pct", f"{a}_iterations", f"{a}_time_s"]
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells_out = [str(row["supply"]), str(row["demand"]), str(row["periods"]),
                         str(row["seed"])]
            for a in algos:
                r = row[a]
                cells_out += [f"{r['gapPct']:.4f}", str(r["iterations"]), f"{r['time']:.2f}"]
            fh.write(",".join(cells_out) + "\n")
    _write_json(os.path.join(out_dir, "manifest.json"),
                {"manifest": _manifest("benchmark", {"grid": grid, "algorithms": algos,
                                                     "gap": gap, "timeLimit": time_limit}),
                 "rows": rows})
    click.echo(f"benchmark: {len(rows)} cells -> {csv_path}")
    sys.exit(EXIT_OK)


if __name__ == "__main__":
    main()
