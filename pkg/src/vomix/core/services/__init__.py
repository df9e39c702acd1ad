"""Services behind the CLI commands."""

from vomix.core.services.ablation_service import expand_grid, parse_grid, run_ablation
from vomix.core.services.bench_service import run_bench, sweep
from vomix.core.services.config_loader import (
    RunConfig,
    load_config,
    resolve_model_config,
    resolve_strategy,
    substitute_env_vars,
)
from vomix.core.services.flops_service import (
    layer_flops,
    model_flops,
    token_trajectory,
    write_flops_csv,
)
from vomix.core.services.inference_service import (
    format_trace,
    load_image,
    resolve_weights,
    write_logits,
)
from vomix.core.services.provenance_service import (
    AssignmentMatrix,
    ProvenanceTracker,
    TokenLayout,
    init_assignment,
    render_heatmap,
    render_region_map,
    update_assignment,
)
from vomix.core.services.selftest_service import run_selftest

__all__ = [
    # Configuration
    "RunConfig",
    "load_config",
    "resolve_model_config",
    "resolve_strategy",
    "substitute_env_vars",
    # FLOPs
    "layer_flops",
    "model_flops",
    "token_trajectory",
    "write_flops_csv",
    # Provenance
    "AssignmentMatrix",
    "ProvenanceTracker",
    "TokenLayout",
    "init_assignment",
    "render_heatmap",
    "render_region_map",
    "update_assignment",
    # Forward pass I/O
    "format_trace",
    "load_image",
    "resolve_weights",
    "write_logits",
    # Benchmarks, ablation and self-test
    "expand_grid",
    "parse_grid",
    "run_ablation",
    "run_bench",
    "run_selftest",
    "sweep",
]
