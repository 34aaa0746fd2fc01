"""Command-line interface for heritable-growth."""

import functools
import json
import math
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import click

from heritable_growth import __version__
from heritable_growth.config import CACHE_ENABLED, default_seed
from heritable_growth.dynamics import (
    DEFAULT_DT,
    integrate_dynasty_mass,
    integrate_mass_dynamics,
    integrate_share_dynamics,
)
from heritable_growth.errors import ComputationError, ValidationError
from heritable_growth.logger import logger, set_verbosity
from heritable_growth.lottery import GrowthProcess, Lottery, mean, parse_lottery_literal
from heritable_growth.output import FULL_PRECISION, RunManifest, dumps_json, write_csv
from heritable_growth.popsim import (
    FIGURE2_RATIOS,
    FIGURE3_RATIOS,
    RNG_ALGORITHM,
    SimConfig,
    ratio_sweep,
    run_batch,
)
from heritable_growth.risk import ConsumptionLottery, assess
from heritable_growth.solver import growth_curve, lambda_grid, solve_x_star
from heritable_growth.storage import StorageBackend, cleanup, get_run_cache

EXIT_VALIDATION = 2
EXIT_RUNTIME = 3


class FloatList(click.ParamType):
    """Comma-separated floats, e.g. ``0,0.02``."""

    name = "floats"

    def convert(self, value, param, ctx):
        if isinstance(value, (list, tuple)):
            return [float(v) for v in value]
        try:
            return [float(part) for part in value.split(",") if part.strip()]
        except ValueError:
            self.fail(f"{value!r} is not a comma-separated list of numbers", param, ctx)


FLOATS = FloatList()


def _parse_sweep(ctx, param, value) -> Optional[List[float]]:
    if value is None:
        return None
    parts = value.split(":")
    if len(parts) != 3:
        raise click.BadParameter(f"expected start:stop:count, got {value!r}")
    try:
        return [float(parts[0]), float(parts[1]), int(parts[2])]
    except ValueError:
        raise click.BadParameter(f"expected start:stop:count, got {value!r}")


def _parse_assignments(ctx, param, value) -> Dict[str, Any]:
    overrides = {}
    for item in value:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise click.BadParameter(f"expected KEY=VALUE, got {item!r}")
        try:
            overrides[key] = json.loads(raw)
        except json.JSONDecodeError:
            overrides[key] = raw
    return overrides


def handle_errors(func: Callable) -> Callable:
    """Map package errors to exit codes: validation 2, everything else 3."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except ValidationError as e:
            click.echo(f"Error: {e}", err=True)
            sys.exit(EXIT_VALIDATION)
        except ComputationError as e:
            logger.error(f"Computation failed: {e}")
            click.echo(f"Error: {e}", err=True)
            sys.exit(EXIT_RUNTIME)
        except (click.ClickException, click.Abort):
            raise
        except Exception as e:
            logger.error(f"Unexpected error: {e}")
            click.echo(f"Error: {e}", err=True)
            sys.exit(EXIT_RUNTIME)

    return wrapper


def _load_json_config(path: Optional[str]) -> Dict[str, Any]:
    if path is None:
        return {}
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ValidationError(f"config {path} must hold a JSON object")
    return data


def _merge(base: Dict[str, Any], **flags: Any) -> Dict[str, Any]:
    """Flags that were given override config-file values."""
    merged = dict(base)
    merged.update({k: v for k, v in flags.items() if v is not None})
    return merged


def _resolve_lottery(params: Dict[str, Any], literal: Optional[str]) -> None:
    if literal is not None:
        lottery = parse_lottery_literal(literal)
        params["support"] = list(lottery.support)
        params["probs"] = list(lottery.probs)
    if "support" not in params or "probs" not in params:
        raise ValidationError("a lottery is required: give --support and --probs, --lottery or --config")


def _lottery(params: Dict[str, Any]) -> Lottery:
    return Lottery(tuple(params["support"]), tuple(params["probs"]))


def _required(params: Dict[str, Any], name: str) -> Any:
    if params.get(name) is None:
        raise ValidationError(f"--{name.replace('_', '-')} is required")
    return params[name]


def _finite(params: Dict[str, Any], name: str, default: float = 0.0) -> float:
    value = params.get(name)
    value = default if value is None else float(value)
    if not math.isfinite(value):
        raise ValidationError(f"{name} must be finite, got {value!r}")
    return value


def _emit(text: str, output: Optional[str], manifest: RunManifest) -> None:
    if output is None:
        click.echo(text, nl=False)
        return
    Path(output).write_text(text)
    manifest.outputs = [str(output)]
    manifest.write(output)
    click.echo(f"Results saved to: {output}")


def _emit_csv(frame, output: Optional[str], manifest: RunManifest, precision: int) -> None:
    _emit(write_csv(frame, precision=precision), output, manifest)


def _emit_json(payload: Any, output: Optional[str], manifest: RunManifest, precision: int) -> None:
    _emit(dumps_json(payload, precision) + "\n", output, manifest)


def _execute_solve(params: Dict[str, Any], output: Optional[str], **_: Any) -> None:
    lottery = _lottery(params)
    precision = params["precision"]
    manifest = RunManifest(command="solve", parameters=params)

    if params.get("sweep_lambda"):
        if len(lottery) != 2:
            raise ValidationError("--sweep-lambda needs a two-point lottery")
        start, stop, count = params["sweep_lambda"]
        frame = growth_curve(
            lottery.support[0],
            lottery.support[1],
            lottery.probs[1],
            lambda_grid(start, stop, int(count)),
        )
        if not params.get("with_sync"):
            frame = frame.drop(columns=["g_sync"])
        _emit_csv(frame, output, manifest, precision)
        return

    lambda_x = _required(params, "lambda_x")
    delta = _finite(params, "delta")
    if delta < 0.0:
        raise ValidationError(f"death rate must be >= 0, got {delta!r}")
    state = solve_x_star(lottery, lambda_x)
    g = state.x_star + _finite(params, "mu_y") + _finite(params, "mu_z") - delta
    payload = state.to_dict(g=g)
    payload["mu_x"] = mean(lottery)
    logger.info(f"x*={state.x_star!r} g={g!r}")
    _emit_json(payload, output, manifest, precision)


def _execute_dynamics(params: Dict[str, Any], output: Optional[str], **_: Any) -> None:
    lottery = _lottery(params)
    variant = params["variant"]
    t_end = _required(params, "t_end")
    dt = params.get("dt") or DEFAULT_DT
    manifest = RunManifest(command="dynamics", parameters=params)

    if variant == "share":
        p0 = params.get("p0") or list(lottery.probs)
        trajectory = integrate_share_dynamics(lottery, _required(params, "lambda_x"), p0, t_end, dt)
    elif variant == "mass":
        process = GrowthProcess(
            delta=_finite(params, "delta"),
            heritable=lottery,
            lambda_x=_required(params, "lambda_x"),
            idiosyncratic=Lottery.point(_finite(params, "mu_y")),
            aggregate=Lottery.point(_finite(params, "mu_z")),
        )
        w0 = params.get("w0") or list(lottery.probs)
        trajectory = integrate_mass_dynamics(process, w0, t_end, dt)
    else:
        w0 = params.get("w0") or list(lottery.probs)
        trajectory = integrate_dynasty_mass(
            lottery,
            _required(params, "lambda_m"),
            _required(params, "lambda_r"),
            _finite(params, "delta"),
            w0,
            t_end,
            dt,
        )
    _emit_csv(trajectory.to_frame(), output, manifest, params["precision"])


def _execute_risk(params: Dict[str, Any], output: Optional[str], **_: Any) -> None:
    consumption = ConsumptionLottery(_lottery(params))
    report = assess(consumption, _required(params, "beta"), _required(params, "lambda_x"))
    payload = report.to_dict()
    if payload["beta_threshold"] is None:
        payload["beta_threshold"] = "none"
    manifest = RunManifest(command="risk", parameters=params)
    _emit_json(payload, output, manifest, params["precision"])


def _execute_sim(
    params: Dict[str, Any],
    output: Optional[str],
    cache: Optional[StorageBackend] = None,
    **_: Any,
) -> None:
    config = SimConfig.from_dict(params["config"])
    traces, _summary = run_batch(config, n_runs=1, seed_base=config.seed, cache=cache)
    trace = traces[0]
    logger.info(f"Run ended with {trace.status.value} after {trace.n_years} years")
    manifest = RunManifest(
        command="sim",
        parameters=params,
        seeds=[config.seed],
        rng_algorithm=RNG_ALGORITHM,
    )
    _emit_csv(trace.to_frame(every=params["every"]), output, manifest, params["precision"])


def _execute_sweep(
    params: Dict[str, Any],
    output: Optional[str],
    cache: Optional[StorageBackend] = None,
    jobs: int = 1,
    **_: Any,
) -> None:
    base = SimConfig.from_dict(params["config"])
    frame = ratio_sweep(
        base,
        params["ratios"],
        params["total"],
        params["runs"],
        seed_base=params["seed_base"],
        jobs=jobs,
        cache=cache,
    )
    manifest = RunManifest(
        command="sweep",
        parameters=params,
        seeds=list(range(params["seed_base"], params["seed_base"] + params["runs"])),
        rng_algorithm=RNG_ALGORITHM,
    )
    _emit_csv(frame, output, manifest, params["precision"])


_EXECUTORS: Dict[str, Callable[..., None]] = {
    "solve": _execute_solve,
    "dynamics": _execute_dynamics,
    "risk": _execute_risk,
    "sim": _execute_sim,
    "sweep": _execute_sweep,
}


def _sim_config(config_path: Optional[str], overrides: Dict[str, Any], seed: Optional[int]) -> Dict[str, Any]:
    data = _merge(_load_json_config(config_path), **overrides)
    if seed is not None:
        data["seed"] = seed
    elif "seed" not in data:
        data["seed"] = default_seed()
    return SimConfig.from_dict(data).to_dict()


def _cache_backend(enabled: Optional[bool]) -> Optional[StorageBackend]:
    if enabled is None:
        enabled = CACHE_ENABLED
    return get_run_cache() if enabled else None


def lottery_options(func: Callable) -> Callable:
    """Options shared by commands that take a lottery."""
    decorators = [
        click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                     help="JSON file with parameters; flags override its values"),
        click.option("--support", type=FLOATS, help="Comma-separated increasing support, e.g. 0,0.02"),
        click.option("--probs", type=FLOATS, help="Comma-separated probabilities, e.g. 0.5,0.5"),
        click.option("--lottery", "lottery_literal",
                     help="Lottery literal 'support=0,0.02 probs=0.5,0.5' or JSON object"),
    ]
    for decorator in reversed(decorators):
        func = decorator(func)
    return func


def output_options(func: Callable) -> Callable:
    func = click.option(
        "--precision",
        type=click.IntRange(1, FULL_PRECISION),
        default=FULL_PRECISION,
        show_default=True,
        help="Significant digits in numeric output",
    )(func)
    return click.option(
        "--output", "-o",
        type=click.Path(dir_okay=False),
        help="Write to this file (plus a .manifest.json) instead of stdout",
    )(func)


@click.group()
@click.version_option(version=__version__)
@click.option("--verbose", "-v", count=True, help="Log progress to stderr (-vv for debug output)")
def cli(verbose: int):
    """Long-run growth under heritable fertility risk.

    Solve the heritable fixed point, integrate the population dynamics,
    compare risk attitudes and run finite-population dynasty simulations.
    """
    set_verbosity(verbose)


@cli.command()
@lottery_options
@click.option("--lambda-x", type=float, help="Redraw rate of the heritable component")
@click.option("--delta", type=float, help="Death rate (default 0)")
@click.option("--mu-y", type=float, help="Mean idiosyncratic birth rate (default 0)")
@click.option("--mu-z", type=float, help="Mean aggregate birth rate (default 0)")
@click.option("--sweep-lambda", callback=_parse_sweep,
              help="Emit the growth curve of a two-point lottery over START:STOP:COUNT log-spaced rates")
@click.option("--with-sync", is_flag=True,
              help="Add the synchronous-redraw benchmark column to --sweep-lambda output")
@output_options
@handle_errors
def solve(config_path, support, probs, lottery_literal, output, **flags):
    """Solve x*, the steady-state shares and the long-run growth rate g."""
    params = _merge(_load_json_config(config_path), support=support, probs=probs, **flags)
    _resolve_lottery(params, lottery_literal)
    _execute_solve(params, output)


@cli.command()
@lottery_options
@click.option("--variant", type=click.Choice(["share", "mass", "dynasty"]), default="share",
              show_default=True, help="Which system of equations to integrate")
@click.option("--lambda-x", type=float, help="Redraw rate (share and mass variants)")
@click.option("--lambda-m", type=float, help="Migration rate (dynasty variant)")
@click.option("--lambda-r", type=float, help="Dynasty redraw rate (dynasty variant)")
@click.option("--delta", type=float, help="Death rate (default 0)")
@click.option("--mu-y", type=float, help="Mean idiosyncratic birth rate (mass variant)")
@click.option("--mu-z", type=float, help="Mean aggregate birth rate (mass variant)")
@click.option("--p0", type=FLOATS, help="Initial shares (default: the lottery probabilities)")
@click.option("--w0", type=FLOATS, help="Initial masses (default: the lottery probabilities)")
@click.option("--t-end", type=float, help="Integration horizon in years")
@click.option("--dt", type=float, help=f"Step size (default {DEFAULT_DT})")
@output_options
@handle_errors
def dynamics(config_path, support, probs, lottery_literal, output, **flags):
    """Integrate share or mass dynamics and print the trajectory as CSV."""
    params = _merge(_load_json_config(config_path), support=support, probs=probs, **flags)
    _resolve_lottery(params, lottery_literal)
    _execute_dynamics(params, output)


@cli.command()
@lottery_options
@click.option("--beta", type=float, help="Exponent of the fertility map c**beta, in (0, 1]")
@click.option("--lambda-x", type=float, help="Redraw rate of the heritable component")
@output_options
@handle_errors
def risk(config_path, support, probs, lottery_literal, output, **flags):
    """Compare a consumption lottery with its mean under a power fertility map."""
    params = _merge(_load_json_config(config_path), support=support, probs=probs, **flags)
    _resolve_lottery(params, lottery_literal)
    _execute_risk(params, output)


def sim_options(func: Callable) -> Callable:
    decorators = [
        click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False),
                     help="JSON file with simulation parameters"),
        click.option("--set", "overrides", multiple=True, callback=_parse_assignments,
                     help="Override one parameter, e.g. --set lambda_m=0.02 (repeatable)"),
        click.option("--cache/--no-cache", default=None,
                     help="Reuse finished runs from the Redis run cache (default: HG_CACHE)"),
    ]
    for decorator in reversed(decorators):
        func = decorator(func)
    return func


@cli.command()
@sim_options
@click.option("--seed", type=click.IntRange(min=0), help="Random seed (default: HG_SEED)")
@click.option("--every", type=click.IntRange(min=1), default=1, show_default=True,
              help="Keep every N-th year in the trace (the last year is always kept)")
@output_options
@handle_errors
def sim(config_path, overrides, cache, seed, every, output, precision):
    """Simulate one dynasty population and print its yearly trace as CSV."""
    params = {
        "config": _sim_config(config_path, overrides, seed),
        "every": every,
        "precision": precision,
    }
    _execute_sim(params, output, cache=_cache_backend(cache))


@cli.command()
@sim_options
@click.option("--ratios", type=FLOATS,
              help="Migration-to-redraw ratios (default: " + ",".join(str(r) for r in FIGURE3_RATIOS) + ")")
@click.option("--representative", is_flag=True,
              help="Sweep only the representative ratios " + ",".join(str(r) for r in FIGURE2_RATIOS))
@click.option("--runs", type=click.IntRange(min=1), default=15, show_default=True,
              help="Runs per ratio")
@click.option("--total", type=float,
              help="Total switching rate lambda_m + lambda_r (default: from the config)")
@click.option("--seed-base", type=click.IntRange(min=0),
              help="Seed of the first run; run i uses seed-base + i (default: HG_SEED)")
@click.option("--jobs", "-j", type=click.IntRange(min=1), default=1, show_default=True,
              help="Worker processes")
@output_options
@handle_errors
def sweep(config_path, overrides, cache, ratios, representative, runs, total, seed_base, jobs, output, precision):
    """Batch simulations across migration-to-redraw ratios; prints a summary CSV."""
    config = _sim_config(config_path, overrides, None)
    if total is None:
        total = config["lambda_m"] + config["lambda_r"]
    if representative and ratios is not None:
        raise ValidationError("--ratios and --representative are mutually exclusive")
    if ratios is None:
        ratios = FIGURE2_RATIOS if representative else FIGURE3_RATIOS
    params = {
        "config": config,
        "ratios": list(ratios),
        "runs": runs,
        "total": total,
        "seed_base": default_seed() if seed_base is None else seed_base,
        "precision": precision,
    }
    _execute_sweep(params, output, cache=_cache_backend(cache), jobs=jobs)


@cli.command()
@click.argument("manifest_file", type=click.Path(exists=True, dir_okay=False))
@click.option("--output", "-o", type=click.Path(dir_okay=False),
              help="Write here instead of the path recorded in the manifest")
@handle_errors
def replay(manifest_file, output):
    """Re-run the command recorded in MANIFEST_FILE with its recorded parameters."""
    manifest = RunManifest.from_file(manifest_file)
    executor = _EXECUTORS.get(manifest.command)
    if executor is None:
        raise ValidationError(f"unknown command {manifest.command!r} in manifest")
    if manifest.tool_version != __version__:
        logger.warning(
            f"Manifest written by version {manifest.tool_version}, replaying with {__version__}"
        )
    if output is None and manifest.outputs:
        output = manifest.outputs[0]
    executor(manifest.parameters, output)


@cli.group("cache")
def cache_group():
    """Manage the Redis run cache."""


@cache_group.command("clean")
@click.option("--days", type=int, default=14, show_default=True,
              help="Remove cached runs older than this many days")
@click.option("--all", "clean_all", is_flag=True, help="Remove ALL cached runs regardless of age")
@click.option("--force", is_flag=True, help="Skip the confirmation prompt")
@handle_errors
def cache_clean(days, clean_all, force):
    """Clean up cached simulation runs."""
    if clean_all:
        days = 0
        confirmation_msg = "This will permanently delete ALL cached runs. Continue?"
    else:
        confirmation_msg = f"Clean up cached runs older than {days} days?"

    if not force and not click.confirm(confirmation_msg):
        click.echo("Cleanup cancelled.")
        return

    deleted_count = cleanup(days=days)
    if clean_all:
        click.echo(f"Cleaned up {deleted_count} cached run(s)")
    else:
        click.echo(f"Cleaned up {deleted_count} cached run(s) older than {days} days")


@cache_group.command("list")
@click.option("--limit", type=click.IntRange(min=1), default=10, show_default=True)
@click.option("--offset", type=click.IntRange(min=0), default=0, show_default=True)
@handle_errors
def cache_list(limit, offset):
    """List cached runs, oldest first."""
    runs = get_run_cache().list_runs(limit=limit, offset=offset)
    if not runs:
        click.echo("No cached runs.")
        return
    for entry in runs:
        click.echo(f"{entry['key'][:12]}  {entry['saved_at']}")


if __name__ == "__main__":
    cli()
