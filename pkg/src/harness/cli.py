"""
Command-line interface.

Every subcommand writes its report (JSON, plus CSV tables with
``--format csv``) and a ``manifest.json`` into the output directory. Toolkit
errors exit with status 2 and a single ``error[<code>]: ...`` line on
stderr; failed checks exit with status 1.
"""

import functools
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional

import click

from .config_parser import MetricSection, ResolvedConfig, parse_config, parse_layered
from .manifest import RunManifest
from .registry import (
    build_budget, build_initial_law, build_run_cost, build_run_model, build_run_policy,
    build_sim_config, load_initial_measure, run_seed
)
from .suites import CHECK_SUITES, SuiteReport, SuiteScale, run_check_suite, run_suite
from ..control.policy import PolicyFamily
from ..control.value import check_dpp, approximate_value, default_template
from ..dynamics.simulator import simulate
from ..metrics.domination import check_domination
from ..metrics.fourier import LambdaIndex, QuadratureScheme, rho_F, sobolev_neg_norm
from ..metrics.wasserstein import distance_trial, truncated_w1, w1_dual_lower_bound
from ..storage.measure_io import read_measure
from ..storage.models import CheckReport
from ..storage.results import ResultStore
from ..utils.config import settings
from ..utils.errors import ConfigError, ToolkitError
from ..utils.logger import set_log_level, setup_logger

logger = setup_logger(__name__)

EXIT_FAILED_CHECK = 1
EXIT_ERROR = 2


class RunContext:
    """Global options shared by every subcommand."""

    def __init__(self, seed: Optional[int], out_dir: str, output_format: str):
        self.seed = seed
        self.store = ResultStore(out_dir)
        self.output_format = output_format
        self.logger = setup_logger(self.__class__.__name__)

    @property
    def csv(self) -> bool:
        return self.output_format == "csv"

    def finish(self, subcommand: str, seed: int, config: Dict[str, Any], inputs: List[Path] = ()) -> None:
        RunManifest.build(subcommand, seed, config, inputs).write(self.store)
        self.logger.info(f"'{subcommand}' outputs written to {self.store.out_dir}")


def reporting_errors(func):
    """Turn toolkit errors into one diagnostic line and exit status 2."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except ToolkitError as exc:
            logger.error(f"{func.__name__} failed: {exc.message}")
            click.echo(exc.diagnostic(), err=True)
            sys.exit(EXIT_ERROR)

    return wrapper


def _exit_on_failure(checks: List[CheckReport]) -> None:
    failed = [c.name for c in checks if not c.passed]
    if failed:
        logger.warning(f"Failed checks: {', '.join(failed)}")
        sys.exit(EXIT_FAILED_CHECK)


def _override(cfg: ResolvedConfig, section: str, **changes) -> ResolvedConfig:
    """Apply command-line overrides to one section, revalidating it."""
    changes = {k: v for k, v in changes.items() if v is not None}
    if not changes:
        return cfg
    current = getattr(cfg, section)
    try:
        updated = type(current)(**{**current.model_dump(), **changes})
    except ValueError as exc:
        raise ConfigError(f"[{section}] override: {exc}") from exc
    return cfg.model_copy(update={section: updated})


def _check_rows(checks: List[CheckReport]) -> List[Dict[str, Any]]:
    return [
        {"name": c.name, "status": c.status.value, "budgets": ";".join(f"{k}={v!r}" for k, v in sorted(c.budgets.items()))}
        for c in checks
    ]


@click.group()
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None, help="Master seed (overrides the config)")
@click.option("--threads", type=click.IntRange(min=1), default=None, help="Worker threads for optimizer restarts")
@click.option("--out-dir", type=click.Path(file_okay=False), default=None, help="Output directory")
@click.option("--format", "output_format", type=click.Choice(["json", "csv"]), default=None,
              help="json: reports only; csv: reports plus tables")
@click.option("--log-level", type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
              default=None, help="Overrides BMKV_LOG_LEVEL")
@click.pass_context
def cli(ctx, seed, threads, out_dir, output_format, log_level):
    """Controlled branching McKean-Vlasov toolkit."""
    if log_level is not None:
        set_log_level(log_level)
    if threads is not None:
        settings.threads = threads
    ctx.obj = RunContext(seed, out_dir or settings.out_dir, output_format or settings.output_format)


def _metric_config(inputs) -> ResolvedConfig:
    """CONFIG, two measure files A B, or CONFIG A B (the files replace the pair)."""
    if len(inputs) not in (1, 2, 3):
        raise ConfigError(f"metric takes CONFIG, A B or CONFIG A B; got {len(inputs)} arguments")
    if len(inputs) == 1:
        return parse_config(inputs[0], "metric")
    first, second = inputs[-2:]
    for name in (first, second):
        if not Path(name).is_file():
            raise ConfigError(f"measure file '{name}' does not exist")
    if len(inputs) == 2:
        return ResolvedConfig(command="metric", source="<command line>",
                              metric=MetricSection(first=first, second=second))
    cfg = parse_config(inputs[0], "metric")
    return _override(cfg, "metric", first=str(Path(first).resolve()), second=str(Path(second).resolve()))


@cli.command()
@click.argument("inputs", nargs=-1, required=True, type=click.Path(dir_okay=False))
@click.option("--metric", "metric_name", type=click.Choice(["rhoF", "sobolev", "w1", "dual", "domination", "all"]),
              default=None, help="Overrides [metric] metric")
@click.option("--lambda-auto", is_flag=True, default=False, help="Smallest admissible lambda for the dimension")
@click.option("--radius", type=float, default=None, help="Quadrature truncation radius R")
@click.option("--nodes", type=int, default=None, help="Quadrature nodes per axis")
@click.pass_obj
@reporting_errors
def metric(run: RunContext, inputs, metric_name, lambda_auto, radius, nodes):
    """Distances between two measures, given as files or by a [metric] section."""
    cfg = _metric_config(inputs)
    cfg = _override(cfg, "metric", metric=metric_name, radius=radius, nodes=nodes)
    if lambda_auto:
        cfg = cfg.model_copy(update={"metric": cfg.metric.model_copy(update={"lam": None})})
    section = cfg.metric
    m1 = read_measure(cfg.resolve_path(section.first))
    m2 = read_measure(cfg.resolve_path(section.second))
    idx = LambdaIndex(d=m1.dim, lam=section.lam) if section.lam else LambdaIndex.for_dim(m1.dim)
    scheme_args = {"mode": section.mode, "radius": section.radius, "nodes_per_axis": section.nodes}
    scheme_args = {k: v for k, v in scheme_args.items() if v is not None}
    scheme = QuadratureScheme(**scheme_args) if scheme_args else None
    wanted = section.metric

    report: Dict[str, Any] = {}
    if wanted in ("rhoF", "all"):
        report["rhoF"] = rho_F(m1, m2, idx, scheme)
    if wanted in ("sobolev", "all"):
        report["sobolev"] = sobolev_neg_norm(m1, m2, idx, scheme)
    if wanted in ("w1", "all"):
        w1 = truncated_w1(m1, m2, base_point=section.base_point)
        report["w1"] = {"value": w1.value, "padded_mass": w1.padded_mass, "base_point": list(w1.base_point)}
    if wanted in ("dual", "all"):
        trials = [distance_trial(x) for x in list(m1.positions) + list(m2.positions)]
        report["dual"] = w1_dual_lower_bound(m1, m2, trials, section.base_point)
    checks = []
    if wanted in ("domination", "all"):
        domination = check_domination(m1, m2, idx, scheme, section.base_point)
        report["domination"] = domination
        checks.append(domination)

    seed = run_seed(cfg, run.seed)
    run.store.write_json("metric.json", report)
    if run.csv:
        rows = [{"metric": name, "value": (r["value"] if isinstance(r, dict) else getattr(r, "value", None))}
                for name, r in report.items() if name != "domination"]
        run.store.write_table("metric.csv", rows, columns=["metric", "value"])
    run.finish("metric", seed, cfg.materialized(), cfg.input_files())
    _exit_on_failure(checks)


@cli.command(name="simulate")
@click.argument("config", required=False, type=click.Path(dir_okay=False))
@click.option("--model", "model_file", type=click.Path(dir_okay=False), default=None,
              help="Run file whose sections (at least [model]) replace CONFIG's")
@click.option("--policy", "policy_file", type=click.Path(dir_okay=False), default=None,
              help="Run file whose sections (at least [policy]) replace CONFIG's")
@click.option("--t0", type=float, default=None)
@click.option("--T", "horizon", type=float, default=None)
@click.option("--dt", type=float, default=None)
@click.option("--replicas", type=int, default=None)
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None, help="Overrides the global --seed")
@click.pass_obj
@reporting_errors
def simulate_command(run: RunContext, config, model_file, policy_file, t0, horizon, dt, replicas, seed):
    """Simulate the particle system of a [model] / [policy] / [initial] configuration."""
    overlays = [(f, section) for f, section in ((model_file, "model"), (policy_file, "policy")) if f is not None]
    if overlays or config is None:
        cfg = parse_layered(config, "simulate", overlays)
    else:
        cfg = parse_config(config, "simulate")
    cfg = _override(cfg, "run", t0=t0, T=horizon, dt=dt, replicas=replicas)
    seed = run_seed(cfg, seed if seed is not None else run.seed)
    model = build_run_model(cfg)
    policy = build_run_policy(cfg, model)
    law = build_initial_law(cfg, load_initial_measure(cfg, model.dim))
    path = simulate(model, policy, law, build_sim_config(cfg, seed))

    run.store.write_json("simulation.json", path.summary())
    if run.csv:
        table = path.particle_table()
        run.store.write_table("particles.csv", table.to_dict("records"), columns=list(table.columns))
        moments = path.moment_table()
        run.store.write_table("moments.csv", moments.to_dict("records"), columns=list(moments.columns))
    run.finish("simulate", seed, cfg.materialized(), cfg.input_files())


def _control_problem(cfg: ResolvedConfig, seed: int):
    model = build_run_model(cfg)
    cost = build_run_cost(cfg)
    nu = load_initial_measure(cfg, model.dim)
    template = default_template(model, cfg.search.family, cfg.policy.action_low[0], cfg.policy.action_high[0])
    if len(cfg.policy.action_low) == model.action_dim:
        template = template.model_copy(update={
            "action_low": tuple(cfg.policy.action_low),
            "action_high": tuple(cfg.policy.action_high),
        })
    return model, cost, nu, template, build_budget(cfg), build_sim_config(cfg, seed)


def _search_overrides(cfg: ResolvedConfig, family, restarts, iters, replicas, split_time=None) -> ResolvedConfig:
    return _override(cfg, "search", family=family, restarts=restarts, iterations=iters, replicas=replicas,
                     s=split_time)


search_options = [
    click.option("--family", type=click.Choice([f.value for f in PolicyFamily]), default=None),
    click.option("--restarts", type=int, default=None),
    click.option("--iters", type=int, default=None),
    click.option("--replicas", type=int, default=None),
]


def with_search_options(func):
    for option in reversed(search_options):
        func = option(func)
    return func


@cli.command()
@click.argument("config", type=click.Path(dir_okay=False))
@with_search_options
@click.pass_obj
@reporting_errors
def value(run: RunContext, config, family, restarts, iters, replicas):
    """Approximate v(t, nu) over a policy family."""
    cfg = _search_overrides(parse_config(config, "value"), family, restarts, iters, replicas)
    seed = run_seed(cfg, run.seed)
    model, cost, nu, template, budget, sim_cfg = _control_problem(cfg, seed)
    result = approximate_value(model, cost, nu, cfg.search.t, cfg.search.family, budget, sim_cfg, template,
                               law=cfg.initial.law if cfg.initial.law != "dirac" else "rounded")
    run.store.write_json("value.json", result)
    if run.csv:
        rows = [tr.model_dump() for tr in result.trace]
        run.store.write_table("value_trace.csv", rows)
    run.finish("value", seed, cfg.materialized(), cfg.input_files())


@cli.command()
@click.argument("config", type=click.Path(dir_okay=False))
@with_search_options
@click.option("--split-time", type=float, default=None, help="Split time s (defaults to (t + T) / 2)")
@click.pass_obj
@reporting_errors
def dpp(run: RunContext, config, family, restarts, iters, replicas, split_time):
    """Compare v(t, nu) with the dynamic-programming right-hand side at a split time."""
    cfg = _search_overrides(parse_config(config, "dpp"), family, restarts, iters, replicas, split_time)
    seed = run_seed(cfg, run.seed)
    model, cost, nu, template, budget, sim_cfg = _control_problem(cfg, seed)
    t = cfg.search.t
    s = cfg.search.s
    if s is None:
        k0, k1 = sim_cfg.grid_step(t), sim_cfg.grid_step(sim_cfg.T)
        s = (k0 + (k1 - k0) // 2) * sim_cfg.dt
    report = check_dpp(model, cost, nu, t, s, cfg.search.family, budget, sim_cfg, template)
    run.store.write_json("dpp.json", report)
    if run.csv:
        run.store.write_table("dpp.csv", _check_rows([report]))
    run.finish("dpp", seed, cfg.materialized(), cfg.input_files())
    _exit_on_failure([report])


def _write_suite(run: RunContext, report: SuiteReport, subcommand: str) -> None:
    run.store.write_json(f"{subcommand}_{report.suite}.json", report)
    if run.csv:
        run.store.write_table(f"{subcommand}_{report.suite}.csv", _check_rows(report.checks))
    run.finish(subcommand, report.seed, {"suite": report.suite, "scale": report.scale.value})
    _exit_on_failure(report.checks)


@cli.command()
@click.option("--suite", "suite_name", type=click.Choice(sorted(CHECK_SUITES)), required=True)
@click.option("--quick", is_flag=True, help="Reduced sample sizes")
@click.pass_obj
@reporting_errors
def check(run: RunContext, suite_name, quick):
    """Run one calculus battery and emit its pass/fail table."""
    scale = SuiteScale.QUICK if quick else SuiteScale.FULL
    _write_suite(run, run_check_suite(suite_name, run.seed, scale), "check")


@cli.command()
@click.argument("name")
@click.option("--quick", is_flag=True, help="Reduced sample sizes")
@click.pass_obj
@reporting_errors
def suite(run: RunContext, name, quick):
    """Run an acceptance suite (metrics, dynamics, control, calculus or all)."""
    scale = SuiteScale.QUICK if quick else SuiteScale.FULL
    _write_suite(run, run_suite(name, run.seed, scale), "suite")


__all__ = ["cli"]
