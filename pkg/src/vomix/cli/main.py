"""Main CLI entry point for VoMix."""

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Annotated, Any

import typer
from rich.console import Console
from rich.table import Table

from vomix import __version__
from vomix.cli.helpers import (
    EXIT_CONFIG,
    EXIT_FAILURE,
    configure_logging,
    handle_error,
    serialize_for_json,
)
from vomix.config import get_settings
from vomix.core.engine.vit import expand_schedule, forward
from vomix.core.engine.weights import save_weights
from vomix.core.exceptions import ConfigurationError
from vomix.core.models.reports import FlopsReport
from vomix.core.models.strategy import (
    AttnMix,
    Fanout,
    Feature,
    Metric,
    QueryMix,
    Selection,
    StrategyConfig,
)
from vomix.core.models.vit import PruneSchedule, ViTConfig
from vomix.core.services.ablation_service import parse_grid, run_ablation
from vomix.core.services.bench_service import sweep
from vomix.core.services.config_loader import (
    RunConfig,
    load_config,
    resolve_model_config,
    resolve_strategy,
)
from vomix.core.services.flops_service import model_flops, reduction_label, write_flops_csv
from vomix.core.services.inference_service import (
    format_trace,
    load_image,
    resolve_weights,
    write_logits,
    write_traces,
)
from vomix.core.services.provenance_service import (
    ProvenanceTracker,
    TokenLayout,
    render_heatmap,
    render_region_map,
)
from vomix.core.services.selftest_service import FAULTS, SUITES, run_selftest

# Console instances for stdout/stderr
console = Console()
err_console = Console(stderr=True)


class OutputFormat(str, Enum):
    """Output format options."""

    json = "json"
    table = "table"


# Main app
app = typer.Typer(
    name="vomix",
    help="Vision transformer inference with vote-and-mix token reduction.",
    no_args_is_help=True,
    rich_markup_mode="rich",
)


def version_callback(value: bool) -> None:
    """Print version and exit."""
    if value:
        console.print(f"vomix {__version__}")
        raise typer.Exit()


def output_result(data: dict | list, format: OutputFormat) -> None:
    """Output data in the specified format."""
    if format == OutputFormat.json:
        console.print_json(json.dumps(serialize_for_json(data)))
    else:
        if isinstance(data, list) and data:
            table = Table()
            for key in data[0]:
                table.add_column(key)
            for row in data:
                table.add_row(*[_cell(v) for v in row.values()])
            console.print(table)
        elif isinstance(data, dict):
            table = Table(show_header=False)
            table.add_column("Key", style="bold")
            table.add_column("Value")
            for key, value in data.items():
                table.add_row(key, _cell(value))
            console.print(table)
        else:
            console.print(data)


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.4g}"
    return str(serialize_for_json(value))


@app.callback()
def main(
    version: Annotated[
        bool | None,
        typer.Option(
            "--version",
            "-v",
            help="Show version and exit.",
            callback=version_callback,
            is_eager=True,
        ),
    ] = None,
    verbose: Annotated[
        bool, typer.Option("--verbose", help="Log at DEBUG level to stderr.")
    ] = False,
) -> None:
    """VoMix - ViT forward passes, cost analysis and provenance maps."""
    configure_logging(get_settings().log_level, verbose)


# =============================================================================
# Shared options
# =============================================================================

PresetOption = Annotated[
    str | None,
    typer.Option("--preset", "-p", help="Model preset, e.g. vit-b16-224."),
]
ConfigOption = Annotated[
    Path | None,
    typer.Option("--config", "-c", help="Run configuration (key=value or YAML)."),
]
ScheduleOption = Annotated[
    str | None,
    typer.Option("--schedule", "-s", help="Pruning schedule, e.g. const:0.05:12."),
]
SelectionOption = Annotated[Selection | None, typer.Option("--selection", help="Pruning scorer.")]
FanoutOption = Annotated[Fanout | None, typer.Option("--fanout", help="Votes cast per token.")]
FeatureOption = Annotated[
    Feature | None, typer.Option("--feature", help="Projection used for similarity.")
]
MetricOption = Annotated[Metric | None, typer.Option("--metric", help="Similarity metric.")]
QueryMixOption = Annotated[
    QueryMix | None, typer.Option("--query-mix", help="How pruned queries are mixed.")
]
AttnMixOption = Annotated[
    AttnMix | None, typer.Option("--attn-mix", help="Attention variant after mixing.")
]
ProtectOption = Annotated[
    str | None,
    typer.Option(
        "--protect",
        help="Comma-separated original token indices never pruned, or 'none'.",
    ),
]
SeedOption = Annotated[int | None, typer.Option("--seed", help="Seed for weights and inputs.")]
WeightsOption = Annotated[
    Path | None,
    typer.Option("--weights", "-w", help="VMTW weight file (seeded weights if omitted)."),
]
ImageOption = Annotated[
    Path | None,
    typer.Option("--image", "-i", help="P6 PPM input (seeded synthetic image if omitted)."),
]
FormatOption = Annotated[OutputFormat, typer.Option("--format", "-f", help="Output format.")]


@dataclass
class RunContext:
    """Everything a command needs after flags, config file and preset are merged."""

    cfg: ViTConfig
    sched: PruneSchedule
    strategy: StrategyConfig
    protected: tuple[int, ...]
    seed: int
    run: RunConfig


def default_schedule(cfg: ViTConfig) -> str:
    """5% per layer over the first (up to) twelve layers."""
    return f"const:0.05:{min(cfg.depth, 12)}"


def parse_protect(value: str, cfg: ViTConfig) -> tuple[int, ...]:
    """``"0,5"`` -> (0, 5); ``"none"`` or an empty string -> ()."""
    text = value.strip().lower()
    if text in ("", "none"):
        return ()
    try:
        indices = tuple(sorted({int(item) for item in text.split(",") if item.strip()}))
    except ValueError:
        raise ConfigurationError(f"Invalid --protect value {value!r}") from None
    return check_protected(indices, cfg)


def check_protected(indices: tuple[int, ...], cfg: ViTConfig) -> tuple[int, ...]:
    bad = [i for i in indices if not 0 <= i < cfg.num_tokens]
    if bad:
        raise ConfigurationError(
            f"Protected token index {bad[0]} out of range for {cfg.num_tokens} tokens"
        )
    return indices


def build_context(
    preset: str | None = None,
    config: Path | None = None,
    schedule: str | None = None,
    strategy_flags: dict[str, Any] | None = None,
    protect: str | None = None,
    seed: int | None = None,
) -> RunContext:
    """Merge settings with precedence flags > config file > preset."""
    settings = get_settings()
    run = load_config(config) if config is not None else RunConfig()

    cfg = resolve_model_config(
        preset or run.preset or settings.default_preset, run.model_overrides()
    )
    sched = expand_schedule(schedule or run.schedule or default_schedule(cfg), cfg.depth)
    strategy = resolve_strategy(run.strategy_values(), strategy_flags)

    if protect is not None:
        protected = parse_protect(protect, cfg)
    elif run.protect is not None:
        protected = check_protected(tuple(sorted(set(run.protect))), cfg)
    else:
        protected = cfg.default_protected()

    if seed is None:
        seed = run.seed if run.seed is not None else settings.default_seed
    return RunContext(
        cfg=cfg, sched=sched, strategy=strategy, protected=protected, seed=seed, run=run
    )


def strategy_flags(
    selection: Selection | None,
    fanout: Fanout | None,
    feature: Feature | None,
    metric: Metric | None,
    query_mix: QueryMix | None,
    attn_mix: AttnMix | None,
) -> dict[str, Any]:
    return {
        "selection": selection,
        "fanout": fanout,
        "feature": feature,
        "metric": metric,
        "query_mix": query_mix,
        "attn_mix": attn_mix,
    }


def output_path(out: Path | None, default_name: str) -> Path:
    if out is not None:
        return out
    return get_settings().ensure_output_dir() / default_name


# =============================================================================
# Cost analysis
# =============================================================================


def _print_flops_table(report: FlopsReport) -> None:
    table = Table(title=f"{report.model} [{report.schedule}]")
    for column in ("layer", "N_in", "N_out", "r", "attn", "mlp", "overhead"):
        table.add_column(column, justify="right")
    for lf in report.per_layer:
        table.add_row(
            str(lf.layer),
            str(lf.n_in),
            str(lf.n_out),
            f"{lf.ratio:g}",
            f"{lf.attn_ops / 1e6:.1f}M",
            f"{lf.mlp_ops / 1e6:.1f}M",
            f"{lf.overhead_ops / 1e6:.2f}M",
        )
    console.print(table)
    console.print(
        f"Total [bold]{report.gflops:.2f} G[/bold] ops "
        f"(baseline {report.baseline_total / 1e9:.2f} G, "
        f"{reduction_label(report)}, speed-up x{report.speedup_estimate:.2f})"
    )


@app.command("flops")
def flops_command(
    preset: PresetOption = None,
    config: ConfigOption = None,
    schedule: ScheduleOption = None,
    protect: ProtectOption = None,
    vanilla: Annotated[
        bool, typer.Option("--vanilla", help="Cost of the unreduced model.")
    ] = False,
    csv_out: Annotated[
        Path | None, typer.Option("--csv", help="Write the per-layer table as CSV.")
    ] = None,
    format: FormatOption = OutputFormat.json,
) -> None:
    """Analytic multiply-accumulate count for a model and schedule."""
    try:
        ctx = build_context(preset, config, schedule, protect=protect)
        report = model_flops(
            ctx.cfg, ctx.sched, vomix_enabled=not vanilla, protected=len(ctx.protected)
        )
        if csv_out is not None:
            write_flops_csv(report, csv_out)

        if format == OutputFormat.table:
            _print_flops_table(report)
        else:
            result = report.model_dump(exclude={"per_layer"})
            result["gflops"] = round(report.gflops, 3)
            result["reduction"] = reduction_label(report)
            output_result(result, format)
    except Exception as e:
        code = handle_error(e)
        raise typer.Exit(code) from None


# =============================================================================
# Forward pass
# =============================================================================


@app.command("forward")
def forward_command(
    preset: PresetOption = None,
    config: ConfigOption = None,
    schedule: ScheduleOption = None,
    selection: SelectionOption = None,
    fanout: FanoutOption = None,
    feature: FeatureOption = None,
    metric: MetricOption = None,
    query_mix: QueryMixOption = None,
    attn_mix: AttnMixOption = None,
    protect: ProtectOption = None,
    seed: SeedOption = None,
    weights: WeightsOption = None,
    image: ImageOption = None,
    out: Annotated[
        Path | None, typer.Option("--out", "-o", help="Write logits, one per line.")
    ] = None,
    trace: Annotated[
        bool, typer.Option("--trace", help="Report retained tokens per layer.")
    ] = False,
    trace_out: Annotated[
        Path | None, typer.Option("--trace-out", help="Write the per-layer trace as text.")
    ] = None,
    save_weights_to: Annotated[
        Path | None,
        typer.Option("--save-weights", help="Write the weights used to a VMTW file."),
    ] = None,
    vanilla: Annotated[
        bool, typer.Option("--vanilla", help="Run the unreduced attention path.")
    ] = False,
    format: FormatOption = OutputFormat.json,
) -> None:
    """Run one image through the model."""
    try:
        ctx = build_context(
            preset,
            config,
            schedule,
            strategy_flags(selection, fanout, feature, metric, query_mix, attn_mix),
            protect,
            seed,
        )
        store = resolve_weights(ctx.cfg, weights, ctx.seed)
        if save_weights_to is not None:
            save_weights(store, save_weights_to)
        pixels = load_image(image, ctx.cfg, ctx.seed, ctx.run.mean, ctx.run.std)

        result = forward(
            pixels,
            store,
            ctx.cfg,
            ctx.sched,
            ctx.strategy,
            ctx.protected,
            enabled=False if vanilla else None,
        )
        if out is not None:
            write_logits(result.logits, out)
        if trace_out is not None:
            write_traces(result.traces, trace_out)

        summary: dict[str, Any] = {
            "model": ctx.cfg.name,
            "schedule": ctx.sched.spec,
            "strategy": ctx.strategy.label(),
            "trajectory": result.trajectory,
            "top_class": int(result.logits.argmax()),
            "logits": result.logits,
        }
        if trace:
            summary["trace"] = [format_trace(t) for t in result.traces]
        if format == OutputFormat.table:
            summary.pop("logits")
        output_result(summary, format)
    except Exception as e:
        code = handle_error(e)
        raise typer.Exit(code) from None


# =============================================================================
# Benchmarks and ablation
# =============================================================================


@app.command("bench")
def bench_command(
    preset: PresetOption = None,
    config: ConfigOption = None,
    schedules: Annotated[
        list[str] | None,
        typer.Option("--schedule", "-s", help="Schedule to time; repeat to sweep."),
    ] = None,
    selection: SelectionOption = None,
    fanout: FanoutOption = None,
    feature: FeatureOption = None,
    metric: MetricOption = None,
    query_mix: QueryMixOption = None,
    attn_mix: AttnMixOption = None,
    seed: SeedOption = None,
    batch: Annotated[int, typer.Option("--batch", min=1, help="Images per timed run.")] = 1,
    repeats: Annotated[
        int | None, typer.Option("--repeats", min=5, help="Timed runs (median reported).")
    ] = None,
    threads: Annotated[
        int | None,
        typer.Option("--threads", min=1, help="Worker threads (default VOMIX_THREADS)."),
    ] = None,
    out: Annotated[
        Path | None, typer.Option("--out", "-o", help="Write results as CSV.")
    ] = None,
    format: FormatOption = OutputFormat.json,
) -> None:
    """Time forward passes and compare op counts with the analytic model."""
    try:
        settings = get_settings()
        ctx = build_context(
            preset,
            config,
            schedules[0] if schedules else None,
            strategy_flags(selection, fanout, feature, metric, query_mix, attn_mix),
            seed=seed,
        )
        specs = list(schedules) if schedules else [ctx.sched.spec]

        with err_console.status(f"Benchmarking {len(specs)} schedule(s) on {ctx.cfg.name}..."):
            results = sweep(
                ctx.cfg,
                specs,
                out,
                ctx.strategy,
                batch=batch,
                repeats=repeats or settings.bench_repeats,
                seed=ctx.seed,
                threads=threads or settings.threads,
            )

        rows = [
            {
                "schedule": r.schedule,
                "tokens_out": r.tokens_out,
                "median_ms": round(r.median_s * 1000, 3),
                "images_per_s": round(r.images_per_s, 2),
                "measured_macs": r.measured_macs,
                "predicted_macs": r.predicted_macs,
                "mac_ratio": round(r.mac_ratio, 4),
                "threads": r.threads,
            }
            for r in results
        ]
        output_result(rows if format == OutputFormat.table else results, format)
    except Exception as e:
        code = handle_error(e)
        raise typer.Exit(code) from None


@app.command("ablate")
def ablate_command(
    grid: Annotated[
        str,
        typer.Option(
            "--grid", "-g", help="Axis values, e.g. 'selection=vote,random;metric=cosine,l2'."
        ),
    ] = "",
    preset: PresetOption = None,
    config: ConfigOption = None,
    schedule: ScheduleOption = None,
    protect: ProtectOption = None,
    seed: SeedOption = None,
    out: Annotated[
        Path | None, typer.Option("--out", "-o", help="Write rows as CSV.")
    ] = None,
    format: FormatOption = OutputFormat.json,
) -> None:
    """Run every strategy combination of a grid on one seeded input."""
    try:
        ctx = build_context(preset, config, schedule, protect=protect, seed=seed)
        rows = run_ablation(
            ctx.cfg, ctx.sched, parse_grid(grid), ctx.seed, out, protected=ctx.protected
        )
        output_result([row.model_dump() for row in rows], format)
    except Exception as e:
        code = handle_error(e)
        raise typer.Exit(code) from None


# =============================================================================
# Provenance maps
# =============================================================================


def _track(ctx: RunContext, weights: Path | None, image: Path | None) -> ProvenanceTracker:
    store = resolve_weights(ctx.cfg, weights, ctx.seed)
    pixels = load_image(image, ctx.cfg, ctx.seed, ctx.run.mean, ctx.run.std)
    tracker = ProvenanceTracker(ctx.cfg.num_tokens)
    forward(pixels, store, ctx.cfg, ctx.sched, ctx.strategy, ctx.protected, tracker=tracker)
    return tracker


@app.command("heatmap")
def heatmap_command(
    token: Annotated[
        int, typer.Option("--token", "-t", min=0, help="Surviving token to map (0 = first).")
    ] = 0,
    preset: PresetOption = None,
    config: ConfigOption = None,
    schedule: ScheduleOption = None,
    selection: SelectionOption = None,
    fanout: FanoutOption = None,
    feature: FeatureOption = None,
    metric: MetricOption = None,
    query_mix: QueryMixOption = None,
    attn_mix: AttnMixOption = None,
    protect: ProtectOption = None,
    seed: SeedOption = None,
    weights: WeightsOption = None,
    image: ImageOption = None,
    scale: Annotated[int, typer.Option("--scale", min=1, help="Pixels per patch.")] = 8,
    out: Annotated[
        Path | None, typer.Option("--out", "-o", help="Output PPM path.")
    ] = None,
    format: FormatOption = OutputFormat.json,
) -> None:
    """Render where one surviving token draws its content from."""
    try:
        ctx = build_context(
            preset,
            config,
            schedule,
            strategy_flags(selection, fanout, feature, metric, query_mix, attn_mix),
            protect,
            seed,
        )
        tracker = _track(ctx, weights, image)
        path = output_path(out, "heatmap.ppm")
        rendered = render_heatmap(
            tracker.assignment, token, TokenLayout.for_model(ctx.cfg), path, scale
        )
        output_result(
            {
                "out": path,
                "token": token,
                "tokens_out": tracker.assignment.num_tokens,
                "width": rendered.shape[1],
                "height": rendered.shape[0],
            },
            format,
        )
    except Exception as e:
        code = handle_error(e)
        raise typer.Exit(code) from None


@app.command("regionmap")
def regionmap_command(
    preset: PresetOption = None,
    config: ConfigOption = None,
    schedule: ScheduleOption = None,
    selection: SelectionOption = None,
    fanout: FanoutOption = None,
    feature: FeatureOption = None,
    metric: MetricOption = None,
    query_mix: QueryMixOption = None,
    attn_mix: AttnMixOption = None,
    protect: ProtectOption = None,
    seed: SeedOption = None,
    weights: WeightsOption = None,
    image: ImageOption = None,
    scale: Annotated[int, typer.Option("--scale", min=1, help="Pixels per patch.")] = 8,
    out: Annotated[
        Path | None, typer.Option("--out", "-o", help="Output PPM path.")
    ] = None,
    format: FormatOption = OutputFormat.json,
) -> None:
    """Color every patch by the surviving token that holds most of it."""
    try:
        ctx = build_context(
            preset,
            config,
            schedule,
            strategy_flags(selection, fanout, feature, metric, query_mix, attn_mix),
            protect,
            seed,
        )
        tracker = _track(ctx, weights, image)
        path = output_path(out, "regionmap.ppm")
        rendered = render_region_map(
            tracker.assignment, TokenLayout.for_model(ctx.cfg), path, scale
        )
        output_result(
            {
                "out": path,
                "tokens_out": tracker.assignment.num_tokens,
                "width": rendered.shape[1],
                "height": rendered.shape[0],
            },
            format,
        )
    except Exception as e:
        code = handle_error(e)
        raise typer.Exit(code) from None


# =============================================================================
# Self-test
# =============================================================================


@app.command("selftest")
def selftest_command(
    quick: Annotated[
        bool, typer.Option("--quick", help="Reduced trial counts on a tiny model.")
    ] = False,
    suites: Annotated[
        list[str] | None,
        typer.Option("--suite", help=f"Suite to run; repeatable ({', '.join(SUITES)})."),
    ] = None,
    seed: SeedOption = None,
    inject_fault: Annotated[
        str | None, typer.Option("--inject-fault", hidden=True)
    ] = None,
    format: FormatOption = OutputFormat.json,
) -> None:
    """Property suites: oracle, conservation, equivalence and more."""
    try:
        unknown = [name for name in suites or [] if name not in SUITES]
        if unknown:
            err_console.print(f"[red]Error:[/red] Unknown suite(s): {', '.join(unknown)}")
            err_console.print(f"[dim]Available suites: {', '.join(SUITES)}[/dim]")
            raise typer.Exit(EXIT_CONFIG)
        if inject_fault is not None and inject_fault not in FAULTS:
            err_console.print(f"[red]Error:[/red] Unknown fault: {inject_fault!r}")
            raise typer.Exit(EXIT_CONFIG)

        with err_console.status("Running self-test suites..."):
            results = run_selftest(
                suites,
                seed=seed if seed is not None else get_settings().default_seed,
                quick=quick,
                inject_fault=inject_fault,
            )

        if format == OutputFormat.table:
            output_result(
                [r.model_dump(exclude={"failures"}) for r in results], format
            )
        else:
            output_result(results, format)

        failed = [r for r in results if not r.ok]
        for suite in failed:
            for failure in suite.failures:
                err_console.print(f"[red]{suite.name}:[/red] {failure}")
        if failed:
            raise typer.Exit(EXIT_FAILURE)
    except typer.Exit:
        raise
    except Exception as e:
        code = handle_error(e)
        raise typer.Exit(code) from None


if __name__ == "__main__":
    app()
