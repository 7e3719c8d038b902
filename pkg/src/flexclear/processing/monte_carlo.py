"""Monte Carlo study of perturbed bids under both formulations."""

import math
from collections.abc import Callable, Iterator
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from flexclear.models.bids import ScenarioConfig
from flexclear.models.market import MarketInstance
from flexclear.models.report import CV_FLAG_RATIO, ConvergenceTrace, MonteCarloStats
from flexclear.models.system import Formulation
from flexclear.processing.bid_generator import perturb_bids
from flexclear.processing.market import ClearingError, MarketConsistencyError, clear
from flexclear.solver import DEFAULT_TOLERANCE, make_solver
from flexclear.utils.logging_config import get_logger

logger = get_logger(__name__)

MAX_FAILURE_RATE = 0.05
DEFAULT_CHECKPOINT = 50
DEFAULT_DRIFT_WINDOW = 0.2
DEFAULT_DRIFT_THRESHOLD = 0.01

FORMULATIONS = (Formulation.LP, Formulation.SOCP)
QUANTITIES = ("dlmp", "flow")

ProgressCallback = Callable[[int, int], None]


class MonteCarloAbort(Exception):
    """Too many samples failed to clear."""

    def __init__(self, summary: dict[str, object]):
        self.summary = summary
        super().__init__(
            f"Monte Carlo aborted: {summary.get('failed')} failed sample(s) out of "
            f"{summary.get('attempted')} attempted (limit {MAX_FAILURE_RATE:.0%} of {summary.get('requested')})"
        )


@dataclass
class SampleOutcome:
    """Per-formulation DLMP and flow vectors of one sample (None when it failed)."""

    sample: int
    dlmp: dict[Formulation, np.ndarray | None] = field(default_factory=dict)
    flow: dict[Formulation, np.ndarray | None] = field(default_factory=dict)
    errors: dict[Formulation, str] = field(default_factory=dict)


def run_sample(
    base: MarketInstance, cfg: ScenarioConfig, sample: int, backend: str = "ipm", tol: float = DEFAULT_TOLERANCE
) -> SampleOutcome:
    """Perturb the bids for one sample index and clear both formulations."""
    inst = base.with_bids(perturb_bids(list(base.bids), cfg, sample))
    buses = inst.net.bus_ids
    outcome = SampleOutcome(sample=sample)
    for formulation in FORMULATIONS:
        try:
            # HiGHS has no cone support, so SOCP samples always use the interior-point backend.
            name = backend if formulation is Formulation.LP else "ipm"
            result = clear(inst.with_formulation(formulation), make_solver(name, tol=tol))
        except (ClearingError, MarketConsistencyError) as e:
            outcome.dlmp[formulation] = None
            outcome.flow[formulation] = None
            outcome.errors[formulation] = str(e)
            continue
        outcome.dlmp[formulation] = np.array([result.dlmp[b] for b in buses])
        outcome.flow[formulation] = np.array([result.flows[b].s for b in buses])
    return outcome


def run_monte_carlo(
    base: MarketInstance,
    cfg: ScenarioConfig,
    workers: int = 1,
    backend: str = "ipm",
    tol: float = DEFAULT_TOLERANCE,
    progress: ProgressCallback | None = None,
) -> tuple[MonteCarloStats, MonteCarloStats]:
    """Clear ``cfg.samples`` perturbed copies of an instance under LP and SOCP.

    Samples are reduced in sample-index order whatever the worker count, so
    the moments do not depend on parallelism. A sample that fails under one
    formulation is dropped from both.

    Args:
        base: Instance whose bids are perturbed.
        cfg: Perturbation spreads, seed and sample count.
        workers: Worker processes; 1 runs in-process.
        backend: Solver backend name (the SOCP side always needs ``ipm``).
        tol: Solver tolerance.
        progress: Called with (done, total) after every sample.

    Returns:
        Tuple of (LP stats, SOCP stats).

    Raises:
        MonteCarloAbort: More than 5% of the samples failed under either formulation.
    """
    total = cfg.samples
    budget = math.floor(MAX_FAILURE_RATE * total)
    buses = base.net.bus_ids
    rows: dict[Formulation, dict[str, list[np.ndarray]]] = {f: {q: [] for q in QUANTITIES} for f in FORMULATIONS}
    used: list[int] = []
    # A sample that fails under either formulation is excluded from both, so the moments stay paired.
    failed: list[int] = []
    failed_by: dict[Formulation, list[int]] = {f: [] for f in FORMULATIONS}
    errors: dict[str, str] = {}

    task = partial(run_sample, base, cfg, backend=backend, tol=tol)
    executor: ProcessPoolExecutor | None = None
    outcomes: Iterator[SampleOutcome]
    if workers > 1:
        executor = ProcessPoolExecutor(max_workers=workers)
        outcomes = executor.map(task, range(total), chunksize=max(1, total // (4 * workers)))
    else:
        outcomes = map(task, range(total))
    attempted = 0
    try:
        for outcome in outcomes:
            attempted += 1
            broken = [f for f in FORMULATIONS if outcome.dlmp[f] is None or outcome.flow[f] is None]
            if broken:
                failed.append(outcome.sample)
                for f in broken:
                    failed_by[f].append(outcome.sample)
                    errors.setdefault(f"{f.value}:{outcome.sample}", outcome.errors.get(f, "unknown"))
                    logger.warning(f"Sample {outcome.sample} failed under {f.value}: {outcome.errors.get(f)}")
            else:
                used.append(outcome.sample)
                for f in FORMULATIONS:
                    dlmp, flow = outcome.dlmp[f], outcome.flow[f]
                    assert dlmp is not None and flow is not None
                    rows[f]["dlmp"].append(dlmp)
                    rows[f]["flow"].append(flow)
            if progress is not None:
                progress(attempted, total)
            if len(failed) > budget:
                break
    finally:
        if executor is not None:
            executor.shutdown(wait=True, cancel_futures=True)

    if len(failed) > budget:
        summary: dict[str, object] = {
            "requested": total,
            "attempted": attempted,
            "failed": len(failed),
            "failed_samples": {f.value: list(v) for f, v in failed_by.items()},
            "errors": dict(list(errors.items())[:10]),
        }
        raise MonteCarloAbort(summary)

    stats = []
    for f in FORMULATIONS:
        values = {q: np.vstack(rows[f][q]) if rows[f][q] else np.zeros((0, len(buses))) for q in QUANTITIES}
        stats.append(
            MonteCarloStats(
                formulation=f,
                seed=cfg.seed,
                entities={q: list(buses) for q in QUANTITIES},
                values=values,
                sample_ids=list(used),
                failed=list(failed),
                attempted=attempted,
            )
        )
    lp_stats, socp_stats = stats
    logger.info(
        f"Monte Carlo on {base.label}: {attempted} samples, {len(failed)} excluded "
        f"(lp failures {len(failed_by[Formulation.LP])}, socp failures {len(failed_by[Formulation.SOCP])})"
    )
    for s in stats:
        flagged = int(np.sum(s.cv_flags("flow"))) if s.samples else 0
        if flagged:
            logger.warning(f"{s.formulation.value}: {flagged} branch CV value(s) flagged for near-zero mean flow")
    return lp_stats, socp_stats


def convergence_trace(
    stats: MonteCarloStats,
    quantity: str = "dlmp",
    checkpoint: int = DEFAULT_CHECKPOINT,
    window: float = DEFAULT_DRIFT_WINDOW,
    threshold: float = DEFAULT_DRIFT_THRESHOLD,
    entities: list[int] | None = None,
) -> ConvergenceTrace:
    """Running mean and CV of a sampled quantity against the sample count.

    Args:
        stats: Populated Monte Carlo stats.
        quantity: ``dlmp`` or ``flow``.
        checkpoint: Sample interval between recorded estimates; the final
            count is always recorded.
        window: Trailing fraction of samples the drift is measured over.
        threshold: Drift below which the trace counts as converged.
        entities: Subset of entity ids; all when None.

    Returns:
        ConvergenceTrace. Drift is the largest (max - min) of any running mean
        inside the window, relative to that entity's final mean.

    Raises:
        ValueError: No samples, unknown quantity or bad parameters.
    """
    if quantity not in stats.values:
        raise ValueError(f"unknown quantity '{quantity}', expected one of {', '.join(stats.values)}")
    if checkpoint < 1 or not 0 < window <= 1:
        raise ValueError(f"checkpoint must be >= 1 and window in (0, 1], got {checkpoint} and {window}")
    data = stats.values[quantity]
    ids = stats.entities[quantity]
    if entities is not None:
        cols = [ids.index(e) for e in entities]
        data, ids = data[:, cols], list(entities)
    n = data.shape[0]
    if n == 0:
        raise ValueError("convergence trace needs at least one sample")

    counts = np.arange(1, n + 1, dtype=float)[:, None]
    running_mean = np.cumsum(data, axis=0) / counts
    running_var = np.maximum(np.cumsum(data**2, axis=0) / counts - running_mean**2, 0.0)
    running_std = np.sqrt(running_var)
    abs_mean = np.abs(running_mean)
    with np.errstate(divide="ignore", invalid="ignore"):
        running_cv = np.where(abs_mean > 0, running_std / np.where(abs_mean > 0, abs_mean, 1.0), np.nan)
    running_cv = np.where((abs_mean == 0) & (running_std == 0), 0.0, running_cv)

    checkpoints = list(range(checkpoint, n + 1, checkpoint))
    if not checkpoints or checkpoints[-1] != n:
        checkpoints.append(n)
    picked = [c - 1 for c in checkpoints]

    start = min(max(int(math.floor((1.0 - window) * n)), 1), n) - 1
    tail = running_mean[start:]
    final = np.abs(running_mean[-1])
    floor = max(CV_FLAG_RATIO * float(final.mean()), np.finfo(float).tiny)
    spread = tail.max(axis=0) - tail.min(axis=0)
    drift = float(np.max(spread / np.maximum(final, floor))) if spread.size else 0.0

    return ConvergenceTrace(
        quantity=quantity,
        formulation=stats.formulation,
        entities=list(ids),
        checkpoints=checkpoints,
        running_mean=running_mean[picked],
        running_cv=running_cv[picked],
        drift=drift,
        threshold=threshold,
    )
