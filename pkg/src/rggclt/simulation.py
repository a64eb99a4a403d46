"""Replicated simulation of the edge count, keyed by stream index."""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .edge_count import Strategy, count_edges
from .model import ModelParams
from .point_process import DEFAULT_MAX_EXPECTED, derive_stream, expected_count, sample_configuration, FeasibilityError


@dataclass(frozen=True)
class ReplicationResult:
    replication: int
    n_points: int
    edges: int
    ms: float


def support_radius(delta: float) -> float:
    """Every pair contributing to the statistic has both endpoints within this radius."""
    return 1.0 + delta / 2.0


def check_feasible(params: ModelParams, radius: float, max_expected: float) -> None:
    mean = expected_count(params.intensity, radius, params.dimension)
    if not mean.is_zero and mean.log_abs > np.log(max_expected):
        raise FeasibilityError(mean.log_abs, max_expected)


def run_one(
    params: ModelParams,
    master_seed: int,
    stream_index: int,
    replication: int | None = None,
    radius: float | None = None,
    strategy: Strategy | str = Strategy.AUTO,
    max_expected: float = DEFAULT_MAX_EXPECTED,
) -> ReplicationResult:
    radius = support_radius(params.delta) if radius is None else radius
    t0 = time.perf_counter()
    config = sample_configuration(params, radius, derive_stream(master_seed, stream_index), max_expected)
    edges = count_edges(config, params.delta, strategy).count
    ms = (time.perf_counter() - t0) * 1e3
    rep = stream_index if replication is None else replication
    return ReplicationResult(rep, config.n_points, edges, ms)


def run_replications(
    params: ModelParams,
    replications: int,
    master_seed: int,
    first_stream: int = 0,
    threads: int = 1,
    radius: float | None = None,
    strategy: Strategy | str = Strategy.AUTO,
    max_expected: float = DEFAULT_MAX_EXPECTED,
) -> list[ReplicationResult]:
    """Run replications ``0..replications-1`` on streams ``first_stream + i``.

    Results come back in replication order whatever the thread count.
    """
    radius = support_radius(params.delta) if radius is None else radius
    check_feasible(params, radius, max_expected)

    def one(i):
        return run_one(params, master_seed, first_stream + i, i, radius, strategy, max_expected)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, range(replications)))
    return [one(i) for i in range(replications)]


def edge_counts(results: list[ReplicationResult]) -> np.ndarray:
    return np.array([r.edges for r in results], dtype=float)
