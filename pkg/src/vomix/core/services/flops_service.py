"""Analytic cost model for vanilla and token-reducing ViTs.

One multiply-accumulate counts as one op. Softmax, layer-norm, GELU and the
mixture softmax are element-wise work; they are tallied separately and kept
out of the headline totals.
"""

import csv
import logging
from pathlib import Path

from vomix.core.engine.attention import pruned_count
from vomix.core.models.reports import FlopsReport, LayerFlops
from vomix.core.models.vit import PruneSchedule, ViTConfig

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("layer", "N_in", "N_out", "r", "attn_ops", "mlp_ops", "overhead_ops")


def token_trajectory(n0: int, sched: PruneSchedule, protected: int = 0) -> list[int]:
    """Token counts entering each layer, followed by the final count."""
    counts = [n0]
    n = n0
    for ratio in sched.ratios:
        n -= pruned_count(n, ratio, protected) if n >= 2 else 0
        counts.append(n)
    return counts


def layer_flops(
    n_in: int,
    ratio: float,
    cfg: ViTConfig,
    protected: int = 0,
    vomix_enabled: bool = True,
    layer: int = 0,
) -> LayerFlops:
    """Per-component op counts for one layer fed ``n_in`` tokens."""
    d = cfg.embed_dim
    reducing = vomix_enabled and n_in >= 2
    k_p = pruned_count(n_in, ratio, protected) if reducing else 0
    n_out = n_in - k_p

    element = cfg.heads * n_out * n_in + (n_in + n_out) * d + n_out * cfg.mlp_hidden
    if reducing:
        element += k_p * n_out

    return LayerFlops(
        layer=layer,
        n_in=n_in,
        n_out=n_out,
        ratio=ratio if vomix_enabled else 0.0,
        qkv=3 * n_in * d * d,
        attention=2 * n_out * n_in * d,
        proj=n_out * d * d,
        mlp=2 * n_out * d * cfg.mlp_hidden,
        similarity=n_in * n_in * cfg.head_dim if reducing else 0,
        vote=n_in * n_in if reducing else 0,
        query_mix=k_p * n_out * d,
        element_ops=element,
    )


def _per_layer(
    cfg: ViTConfig, sched: PruneSchedule, protected: int, vomix_enabled: bool
) -> list[LayerFlops]:
    layers = []
    n = cfg.num_tokens
    for index, ratio in enumerate(sched.ratios):
        lf = layer_flops(n, ratio, cfg, protected, vomix_enabled, index)
        layers.append(lf)
        n = lf.n_out
    return layers


def model_flops(
    cfg: ViTConfig,
    sched: PruneSchedule,
    vomix_enabled: bool = True,
    protected: int | None = None,
) -> FlopsReport:
    """Whole-model cost, with the vanilla model as the baseline."""
    if protected is None:
        protected = len(cfg.default_protected())
    front_end = cfg.num_patches * cfg.patch_dim * cfg.embed_dim
    head = cfg.embed_dim * cfg.classes

    per_layer = _per_layer(cfg, sched, protected, vomix_enabled)
    vanilla = PruneSchedule(spec=f"const:0:{cfg.depth}", ratios=(0.0,) * cfg.depth)
    baseline = front_end + head + sum(lf.total for lf in _per_layer(cfg, vanilla, protected, False))

    report = FlopsReport(
        model=cfg.name,
        schedule=sched.spec,
        vomix_enabled=vomix_enabled,
        front_end=front_end,
        head=head,
        per_layer=per_layer,
        trajectory=[per_layer[0].n_in] + [lf.n_out for lf in per_layer],
        baseline_total=baseline,
        element_ops=sum(lf.element_ops for lf in per_layer),
    )
    logger.debug(
        f"{cfg.name} [{sched.spec}]: {report.gflops:.2f} G ops ({report.reduction_pct:+.1f}%)"
    )
    return report


def reduction_label(report: FlopsReport) -> str:
    """Human-readable change versus baseline, e.g. ``-25%``."""
    return f"{report.reduction_pct:+.0f}%" if report.reduction_pct else "0%"


def write_flops_csv(report: FlopsReport, path: Path) -> None:
    """One row per layer plus a ``total`` row summing the layers."""
    path = Path(path)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        for lf in report.per_layer:
            writer.writerow(
                {
                    "layer": lf.layer,
                    "N_in": lf.n_in,
                    "N_out": lf.n_out,
                    "r": f"{lf.ratio:g}",
                    "attn_ops": lf.attn_ops,
                    "mlp_ops": lf.mlp_ops,
                    "overhead_ops": lf.overhead_ops,
                }
            )
        writer.writerow(
            {
                "layer": "total",
                "N_in": report.trajectory[0],
                "N_out": report.trajectory[-1],
                "r": "",
                "attn_ops": sum(lf.attn_ops for lf in report.per_layer),
                "mlp_ops": sum(lf.mlp_ops for lf in report.per_layer),
                "overhead_ops": report.overhead_total,
            }
        )
    logger.info(f"Wrote FLOPs table to {path}")
