"""Wall-clock and op-count benchmarks over pruning schedules."""

import csv
import logging
import statistics
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from vomix.core.engine.rng import SplitMix64
from vomix.core.engine.tensor import OpCounter, counting
from vomix.core.engine.vit import expand_schedule, forward
from vomix.core.engine.weights import WeightStore, init_weights
from vomix.core.exceptions import ConfigurationError
from vomix.core.models.reports import BenchResult
from vomix.core.models.strategy import StrategyConfig
from vomix.core.models.tokens import ForwardResult
from vomix.core.models.vit import PruneSchedule, ViTConfig
from vomix.core.services.flops_service import model_flops

logger = logging.getLogger(__name__)

MIN_REPEATS = 5
WARMUP_RUNS = 1
OVERHEAD_CATEGORIES = ("similarity", "vote", "mix")

BENCH_COLUMNS: tuple[str, ...] = (
    *BenchResult.model_fields,
    *BenchResult.model_computed_fields,
)


def synthetic_images(cfg: ViTConfig, batch: int, seed: int) -> NDArray[np.float32]:
    """Deterministic normalized inputs in [-1, 1)."""
    shape = (batch, cfg.image_size, cfg.image_size, cfg.channels)
    count = int(np.prod(shape))
    return SplitMix64(seed).uniform_range(count, -1.0, 1.0).reshape(shape)


def estimate_peak_memory(cfg: ViTConfig, weights: WeightStore, concurrent: int) -> int:
    """Weights plus the largest live activations of each in-flight image."""
    n, d = cfg.num_tokens, cfg.embed_dim
    activations = 4 * n * (4 * d + cfg.mlp_hidden)
    attention = 8 * cfg.heads * n * n + 8 * n * n
    return weights.nbytes + concurrent * (activations + attention)


def _counted_forward(
    image: NDArray[np.float32],
    weights: WeightStore,
    cfg: ViTConfig,
    sched: PruneSchedule,
    strategy: StrategyConfig,
) -> tuple[ForwardResult, OpCounter]:
    # counters live in a context variable, so each worker installs its own
    with counting(OpCounter()) as counter:
        result = forward(image, weights, cfg, sched, strategy)
    return result, counter


def run_bench(
    cfg: ViTConfig,
    sched: PruneSchedule,
    strategy: StrategyConfig | None = None,
    batch: int = 1,
    repeats: int = MIN_REPEATS,
    seed: int = 0,
    threads: int = 1,
    weights: WeightStore | None = None,
) -> BenchResult:
    """Time ``repeats`` batches after a warm-up and count multiply-accumulates.

    Raises:
        ConfigurationError: If fewer than five repeats are requested, or batch
            or threads is not positive.
    """
    if repeats < MIN_REPEATS:
        raise ConfigurationError(f"repeats must be at least {MIN_REPEATS}, got {repeats}")
    if batch < 1 or threads < 1:
        raise ConfigurationError("batch and threads must be positive")
    strategy = strategy or StrategyConfig()
    weights = weights if weights is not None else init_weights(cfg, seed)
    images = synthetic_images(cfg, batch, seed + 1)

    def run_batch(pool: ThreadPoolExecutor) -> list[tuple[ForwardResult, OpCounter]]:
        return list(
            pool.map(lambda img: _counted_forward(img, weights, cfg, sched, strategy), images)
        )

    timings = []
    with ThreadPoolExecutor(max_workers=threads) as pool:
        for _ in range(WARMUP_RUNS):
            run_batch(pool)
        for _ in range(repeats):
            start = time.perf_counter()
            outputs = run_batch(pool)
            timings.append(time.perf_counter() - start)

    counters = [counter for _, counter in outputs]
    measured = sum(c.total() for c in counters) // batch
    measured_overhead = sum(c.total(OVERHEAD_CATEGORIES) for c in counters) // batch
    report = model_flops(cfg, sched, vomix_enabled=not sched.is_zero)
    trajectory = outputs[0][0].trajectory
    median = statistics.median(timings)

    result = BenchResult(
        config_id=f"{cfg.name}:{sched.spec}:{strategy.label()}",
        schedule=sched.spec,
        strategy=strategy.label(),
        batch=batch,
        repeats=repeats,
        threads=threads,
        seed=seed,
        tokens_in=trajectory[0],
        tokens_out=trajectory[-1],
        median_s=median,
        min_s=min(timings),
        max_s=max(timings),
        images_per_s=batch / median if median > 0 else 0.0,
        tokens_per_s=batch * trajectory[0] / median if median > 0 else 0.0,
        measured_macs=measured,
        predicted_macs=report.total,
        measured_overhead_macs=measured_overhead,
        predicted_overhead_macs=report.overhead_total,
        peak_memory_bytes=estimate_peak_memory(cfg, weights, min(threads, batch)),
    )
    logger.info(
        f"{result.config_id}: median {median * 1000:.1f} ms, MAC ratio {result.mac_ratio:.3f}"
    )
    return result


def write_bench_csv(results: list[BenchResult], path: Path) -> None:
    path = Path(path)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=BENCH_COLUMNS)
        writer.writeheader()
        for result in results:
            writer.writerow(result.model_dump())
    logger.info(f"Wrote {len(results)} benchmark rows to {path}")


def sweep(
    cfg: ViTConfig,
    schedules: list[str],
    out: Path | None = None,
    strategy: StrategyConfig | None = None,
    batch: int = 1,
    repeats: int = MIN_REPEATS,
    seed: int = 0,
    threads: int = 1,
) -> list[BenchResult]:
    """Benchmark each schedule with shared weights; optionally write a CSV."""
    results: list[BenchResult] = []
    if schedules:
        weights = init_weights(cfg, seed)
        for spec in schedules:
            sched = expand_schedule(spec, cfg.depth)
            results.append(
                run_bench(cfg, sched, strategy, batch, repeats, seed, threads, weights)
            )
    if out is not None:
        write_bench_csv(results, out)
    return results
