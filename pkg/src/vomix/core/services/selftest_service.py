"""Property suites run by ``vomix selftest``.

Each suite draws seeded random trials and returns a :class:`SuiteResult`.
``quick`` sizes keep the whole run to seconds; full sizes match the release
acceptance runs (1000 oracle trials, 100 ViT-S equivalence pairs).
"""

import logging
import math
from collections.abc import Callable, Iterator, Sequence
from contextlib import contextmanager
from dataclasses import dataclass
from typing import TypeVar

import numpy as np
from numpy.typing import NDArray

from vomix.core.engine.attention import select_tokens, vote_scores
from vomix.core.engine.block import qkv_matrix, vomix_attention_block
from vomix.core.engine.oracle import DECISION_MARGIN, reference_attention_block
from vomix.core.engine.rng import SplitMix64
from vomix.core.engine.tensor import argsort_desc, reversed_tie_break
from vomix.core.engine.vit import expand_schedule, forward
from vomix.core.engine.weights import BlockWeights, init_weights
from vomix.core.exceptions import VomixError
from vomix.core.models.reports import SuiteResult
from vomix.core.models.strategy import (
    AttnMix,
    Fanout,
    Feature,
    Metric,
    QueryMix,
    Selection,
    StrategyConfig,
)
from vomix.core.models.tokens import LayerTrace, SimilarityMatrix, TokenState
from vomix.core.models.vit import PRESETS, ViTConfig
from vomix.core.services.flops_service import token_trajectory
from vomix.core.services.provenance_service import ProvenanceTracker

logger = logging.getLogger(__name__)

T = TypeVar("T")

FAULTS = ("tie-break",)
MAX_REPORTED_FAILURES = 10

# Draws allowed per requested comparison before a suite gives up on skips.
MAX_DRAWS_PER_TRIAL = 10


class TrialRandom:
    """Small convenience layer over SplitMix64 for drawing trial parameters."""

    def __init__(self, seed: int) -> None:
        self._rng = SplitMix64(seed)

    def unit(self) -> float:
        return float(self._rng.uniform(1)[0])

    def integer(self, low: int, high: int) -> int:
        """Uniform integer in [low, high]."""
        return low + min(high - low, int(self.unit() * (high - low + 1)))

    def choice(self, options: Sequence[T]) -> T:
        return options[self.integer(0, len(options) - 1)]

    def array(self, shape: tuple[int, ...], low: float, high: float) -> NDArray[np.float32]:
        count = int(np.prod(shape))
        return self._rng.uniform_range(count, low, high).reshape(shape)

    def seed(self) -> int:
        return int(self._rng.next_u64(1)[0] >> np.uint64(1))


@dataclass
class SuiteSizes:
    oracle: int
    conservation: int
    equivalence: int
    tie_break: int
    trajectory: int
    permutation: int
    equivalence_preset: str
    trajectory_max_grid: int

    @classmethod
    def quick(cls) -> "SuiteSizes":
        return cls(100, 10, 5, 50, 10, 50, "vit-tiny-32", 14)

    @classmethod
    def full(cls) -> "SuiteSizes":
        return cls(1000, 50, 100, 200, 50, 200, "vit-s16-224", 37)


class _Collector:
    """Tallies outcomes. ``trials`` counts comparisons made; skips are kept apart."""

    def __init__(self, name: str) -> None:
        self.result = SuiteResult(name=name)

    def draws(self, trials: int) -> Iterator[int]:
        """Yield draw indices until ``trials`` comparisons have been made."""
        limit = trials * MAX_DRAWS_PER_TRIAL
        draw = 0
        while self.result.trials < trials:
            if draw >= limit:
                self.result.failures.append(
                    f"only {self.result.trials} of {trials} trials comparable after {limit} draws"
                )
                return
            yield draw
            draw += 1

    def passed(self) -> None:
        self.result.trials += 1
        self.result.passed += 1

    def skipped(self) -> None:
        self.result.skipped += 1

    def failed(self, message: str) -> None:
        self.result.trials += 1
        if len(self.result.failures) < MAX_REPORTED_FAILURES:
            self.result.failures.append(message)
        elif len(self.result.failures) == MAX_REPORTED_FAILURES:
            self.result.failures.append("... further failures omitted")


def random_block(rnd: TrialRandom, d: int) -> BlockWeights:
    """Block parameters with unit-scale norms and O(1 / sqrt(D)) projections."""
    a = 0.5 / math.sqrt(d)

    def vec(n: int, low: float, high: float) -> NDArray[np.float32]:
        return rnd.array((n,), low, high)

    return BlockWeights(
        norm1_w=vec(d, 0.8, 1.2),
        norm1_b=vec(d, -0.1, 0.1),
        qkv_w=rnd.array((d, 3 * d), -a, a),
        qkv_b=vec(3 * d, -0.1, 0.1),
        proj_w=rnd.array((d, d), -a, a),
        proj_b=vec(d, -0.1, 0.1),
        norm2_w=vec(d, 0.8, 1.2),
        norm2_b=vec(d, -0.1, 0.1),
        fc1_w=rnd.array((d, 4 * d), -a, a),
        fc1_b=vec(4 * d, -0.1, 0.1),
        fc2_w=rnd.array((4 * d, d), -a, a),
        fc2_b=vec(d, -0.1, 0.1),
    )


def random_strategy(
    rnd: TrialRandom, selections: Sequence[Selection] = tuple(Selection)
) -> StrategyConfig:
    return StrategyConfig(
        selection=rnd.choice(selections),
        fanout=rnd.choice(tuple(Fanout)),
        feature=rnd.choice(tuple(Feature)),
        metric=rnd.choice(tuple(Metric)),
        query_mix=rnd.choice(tuple(QueryMix)),
        attn_mix=rnd.choice(tuple(AttnMix)),
        random_seed=rnd.integer(0, 1000),
    )


def run_oracle_suite(trials: int, seed: int = 0) -> SuiteResult:
    """Engine block versus the loop-level reference on random small inputs."""
    rnd = TrialRandom(seed)
    suite = _Collector("oracle")
    for trial in suite.draws(trials):
        heads = rnd.choice((1, 2, 4))
        d = heads * rnd.choice((2, 4, 8))
        n = rnd.integer(4, 64)
        ratio = rnd.choice((0.1, 0.25, 0.4))
        strategy = random_strategy(rnd)
        protected = (0,) if rnd.unit() < 0.5 else ()
        w = random_block(rnd, d)
        x = rnd.array((n, d), -1.0, 1.0)
        sizes = rnd.array((n,), 1.0, 3.0).astype(np.float64)

        qkv = qkv_matrix(x, w)
        ref = reference_attention_block(
            x, sizes, w, heads, ratio, strategy, list(protected), trial, qkv=qkv
        )
        if ref.margin < DECISION_MARGIN:
            suite.skipped()
            continue

        state = TokenState(x=x, sizes=sizes, layer=trial)
        out, trace = vomix_attention_block(state, w, ratio, strategy, heads, protected)
        label = f"trial {trial} ({strategy.label()}, n={n}, d={d}, r={ratio})"
        if trace.pruned.tolist() != ref.pruned or trace.retained.tolist() != ref.retained:
            suite.failed(f"{label}: pruned {trace.pruned.tolist()} != {ref.pruned}")
            continue
        x_err = float(np.abs(out.x.astype(np.float64) - ref.x).max(initial=0.0))
        s_err = float(np.abs(out.sizes - ref.sizes).max(initial=0.0))
        if x_err > 1e-6 or s_err > 1e-6:
            suite.failed(f"{label}: output error {x_err:.2e}, size error {s_err:.2e}")
        else:
            suite.passed()
    return suite.result


class _ConservationChecker(ProvenanceTracker):
    """Tracker that checks every conservation law as layers arrive."""

    def __init__(self, n0: int) -> None:
        super().__init__(n0)
        self.n0 = n0
        self.problems: list[str] = []

    def observe(self, trace: LayerTrace) -> None:
        super().observe(trace)
        where = f"layer {trace.layer}"
        total = float(trace.sizes_after.sum())
        if not math.isclose(total, self.n0, rel_tol=1e-4):
            self.problems.append(f"{where}: size total {total} != {self.n0}")
        if trace.weights.shape[0]:
            row_err = float(np.abs(trace.weights.sum(axis=1) - 1.0).max())
            if row_err > 1e-6 or trace.weights.min() < 0:
                self.problems.append(f"{where}: mixture rows off by {row_err:.2e}")
        col_err = float(np.abs(self.assignment.column_sums() - 1.0).max())
        if col_err > 1e-5:
            self.problems.append(f"{where}: assignment columns off by {col_err:.2e}")
        mass_err = float(np.abs(self.token_mass() - 1.0).max())
        if mass_err > 1e-4:
            self.problems.append(f"{where}: provenance mass off by {mass_err:.2e}")


def run_conservation_suite(trials: int, seed: int = 0) -> SuiteResult:
    """Size, mixture-weight and provenance conservation through full forwards."""
    rnd = TrialRandom(seed)
    cfg = PRESETS["vit-tiny-32"]
    suite = _Collector("conservation")
    for trial in range(trials):
        weights = init_weights(cfg, rnd.seed())
        image = rnd.array((cfg.image_size, cfg.image_size, cfg.channels), -1.0, 1.0)
        ratio = rnd.choice((0.1, 0.25, 0.4))
        sched = expand_schedule(f"{rnd.choice(('const', 'decr'))}:{ratio}:{cfg.depth}", cfg.depth)
        strategy = StrategyConfig(
            selection=rnd.choice(tuple(Selection)),
            metric=rnd.choice(tuple(Metric)),
            query_mix=rnd.choice((QueryMix.global_, QueryMix.max)),
            random_seed=trial,
        )
        checker = _ConservationChecker(cfg.num_tokens)
        try:
            forward(image, weights, cfg, sched, strategy, tracker=checker)
        except VomixError as e:
            suite.failed(f"trial {trial}: {e.message}")
            continue
        if checker.problems:
            suite.failed(f"trial {trial} ({strategy.label()}): {checker.problems[0]}")
        else:
            suite.passed()
    return suite.result


def run_equivalence_suite(trials: int, seed: int = 0, preset: str = "vit-tiny-32") -> SuiteResult:
    """All-zero schedule through the reducing path equals the vanilla model."""
    rnd = TrialRandom(seed)
    cfg = PRESETS[preset]
    sched = expand_schedule(f"const:0:{cfg.depth}", cfg.depth)
    suite = _Collector("equivalence")
    for trial in range(trials):
        weights = init_weights(cfg, rnd.seed())
        image = rnd.array((cfg.image_size, cfg.image_size, cfg.channels), -1.0, 1.0)
        reduced = forward(image, weights, cfg, sched, enabled=True).logits
        vanilla = forward(image, weights, cfg, sched, enabled=False).logits
        err = float(np.abs(reduced.astype(np.float64) - vanilla).max())
        if err > 1e-5 or not np.all(np.isfinite(reduced)):
            suite.failed(f"trial {trial}: logits differ by {err:.2e}")
        else:
            suite.passed()
    return suite.result


def run_tie_break_suite(trials: int, seed: int = 0) -> SuiteResult:
    """All-equal similarities must resolve to the lowest index everywhere."""
    rnd = TrialRandom(seed)
    suite = _Collector("tie-break")
    for trial in range(trials):
        n = rnd.integer(3, 64)
        c = float(np.float32(rnd.unit()))
        values = np.full((n, n), c, dtype=np.float32)
        np.fill_diagonal(values, -np.inf)
        votes = vote_scores(SimilarityMatrix(values=values))
        expected_z = [1] + [0] * (n - 1)

        ratio = rnd.choice((0.1, 0.25, 0.4))
        part = select_tokens(np.zeros(n), ratio)
        k_p = part.num_pruned

        problems = []
        if votes.z.tolist() != expected_z:
            problems.append(f"vote targets {votes.z.tolist()[:5]}...")
        if argsort_desc(np.full(n, c)).tolist() != list(range(n)):
            problems.append("argsort of equal values is not the identity")
        if part.pruned.tolist() != list(range(k_p)):
            problems.append(f"equal scores pruned {part.pruned.tolist()}")
        if problems:
            suite.failed(f"trial {trial} (n={n}): {'; '.join(problems)}")
        else:
            suite.passed()
    return suite.result


def run_trajectory_suite(trials: int, seed: int = 0, max_grid: int = 37) -> SuiteResult:
    """Engine token counts equal the analytic trajectory for random schedules."""
    rnd = TrialRandom(seed)
    suite = _Collector("trajectory")
    for trial in range(trials):
        depth = rnd.integer(1, 32)
        grid = rnd.integer(1, max_grid)
        cfg = ViTConfig(
            name=f"trajectory-{trial}",
            image_size=grid,
            patch_size=1,
            channels=1,
            depth=depth,
            embed_dim=8,
            heads=2,
            classes=4,
            class_token=rnd.unit() < 0.5,
        )
        a = round(rnd.unit() * 0.5, 3)
        kind = rnd.choice(("const", "decr", "trunc", "list"))
        if kind == "trunc":
            spec = f"trunc:{a}"
        elif kind == "list":
            spec = "list:" + ",".join(str(round(rnd.unit() * 0.5, 3)) for _ in range(depth))
        else:
            spec = f"{kind}:{a}:{rnd.integer(0, depth)}"
        sched = expand_schedule(spec, depth)

        weights = init_weights(cfg, rnd.seed())
        image = rnd.array((grid, grid, 1), -1.0, 1.0)
        result = forward(image, weights, cfg, sched)
        expected = token_trajectory(cfg.num_tokens, sched, len(cfg.default_protected()))
        if result.trajectory != expected:
            suite.failed(
                f"trial {trial} [{spec}], N0={cfg.num_tokens}: {result.trajectory} != {expected}"
            )
        else:
            suite.passed()
    return suite.result


def run_permutation_suite(trials: int, seed: int = 0) -> SuiteResult:
    """Permuting input tokens permutes the reduced outputs."""
    rnd = TrialRandom(seed)
    suite = _Collector("permutation")
    deterministic = (Selection.vote, Selection.max_sim)
    for trial in suite.draws(trials):
        heads = rnd.choice((1, 2))
        d = heads * rnd.choice((4, 8))
        n = rnd.integer(4, 32)
        ratio = rnd.choice((0.1, 0.25, 0.4))
        strategy = random_strategy(rnd, deterministic)
        w = random_block(rnd, d)
        x = rnd.array((n, d), -1.0, 1.0)
        sizes = np.ones(n, dtype=np.float64)
        perm = np.argsort(rnd.array((n,), 0.0, 1.0), kind="stable")

        qkv = qkv_matrix(x, w)
        ref = reference_attention_block(x, sizes, w, heads, ratio, strategy, [], qkv=qkv)
        if ref.margin < DECISION_MARGIN:
            suite.skipped()
            continue

        base, base_trace = vomix_attention_block(
            TokenState(x=x, sizes=sizes), w, ratio, strategy, heads
        )
        moved, moved_trace = vomix_attention_block(
            TokenState(x=np.ascontiguousarray(x[perm]), sizes=sizes), w, ratio, strategy, heads
        )
        mapped = perm[moved_trace.retained]
        if sorted(mapped.tolist()) != base_trace.retained.tolist():
            suite.failed(f"trial {trial}: retained sets differ under permutation")
            continue
        rows = np.searchsorted(base_trace.retained, mapped)
        err = float(np.abs(moved.x - base.x[rows]).max(initial=0.0))
        if err > 1e-5:
            suite.failed(
                f"trial {trial} ({strategy.label()}): permuted outputs differ by {err:.2e}"
            )
        else:
            suite.passed()
    return suite.result


SUITES: dict[str, Callable[[SuiteSizes, int], SuiteResult]] = {
    "oracle": lambda sizes, seed: run_oracle_suite(sizes.oracle, seed),
    "conservation": lambda sizes, seed: run_conservation_suite(sizes.conservation, seed),
    "equivalence": lambda sizes, seed: run_equivalence_suite(
        sizes.equivalence, seed, sizes.equivalence_preset
    ),
    "tie-break": lambda sizes, seed: run_tie_break_suite(sizes.tie_break, seed),
    "trajectory": lambda sizes, seed: run_trajectory_suite(
        sizes.trajectory, seed, sizes.trajectory_max_grid
    ),
    "permutation": lambda sizes, seed: run_permutation_suite(sizes.permutation, seed),
}


@contextmanager
def injected_fault(fault: str | None) -> Iterator[None]:
    """Deliberately break the engine so the suites can be seen failing."""
    if fault is None:
        yield
        return
    if fault not in FAULTS:
        raise ValueError(f"unknown fault {fault!r}; choose from {', '.join(FAULTS)}")
    logger.warning(f"running with injected fault: {fault}")
    with reversed_tie_break():
        yield


def run_selftest(
    suites: Sequence[str] | None = None,
    seed: int = 0,
    quick: bool = False,
    inject_fault: str | None = None,
) -> list[SuiteResult]:
    """Run the named suites (all by default) and return their results.

    Raises:
        ValueError: On unknown suite or fault names.
    """
    names = list(suites) if suites else list(SUITES)
    unknown = [name for name in names if name not in SUITES]
    if unknown:
        raise ValueError(f"unknown suite(s): {', '.join(unknown)}")
    sizes = SuiteSizes.quick() if quick else SuiteSizes.full()

    results = []
    with injected_fault(inject_fault):
        for name in names:
            result = SUITES[name](sizes, seed)
            logger.info(
                f"suite {name}: {result.passed}/{result.trials} passed, {result.skipped} skipped"
            )
            results.append(result)
    return results
