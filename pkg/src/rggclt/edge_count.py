"""The edge-counting statistic and its difference operators.

Both search strategies feed candidate pairs through the same kernel
evaluation (:func:`_qualifying`), so their counts agree bit for bit.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .point_process import PointConfiguration

_PAIR_CHUNK = 1 << 20
_EARLY_EXIT_EVERY = 8
_CELL_PAD = 1.0 + 1e-9


class Strategy(str, enum.Enum):
    BRUTE_FORCE = "brute_force"
    SPARSE_GRID = "sparse_grid"
    AUTO = "auto"


@dataclass(frozen=True)
class EdgeCountResult:
    count: int
    strategy_used: Strategy
    pairs_examined: int


def _as_points(config) -> np.ndarray:
    if isinstance(config, PointConfiguration):
        return config.points
    pts = np.asarray(config, dtype=np.float64)
    if pts.ndim != 2:
        raise ValueError("points must be an (N, d) array")
    return pts


def _qualifying(pts: np.ndarray, i: np.ndarray, j: np.ndarray, delta: float) -> np.ndarray:
    """Mask of pairs ``(pts[i], pts[j])`` with kernel value 1.

    Squared norms are accumulated coordinate by coordinate in a fixed order;
    partial sums are monotone, so pairs already beyond ``delta**2`` are dropped
    early without changing any result.
    """
    delta_sq = delta * delta
    d = pts.shape[1]
    alive = np.arange(i.shape[0])
    ii, jj = i, j
    acc = np.zeros(i.shape[0])
    for k in range(d):
        diff = pts[ii, k] - pts[jj, k]
        acc += diff * diff
        if (k + 1) % _EARLY_EXIT_EVERY == 0 and k + 1 < d:
            ok = acc <= delta_sq
            if not ok.all():
                alive, ii, jj, acc = alive[ok], ii[ok], jj[ok], acc[ok]
    close = acc <= delta_sq
    alive, ii, jj = alive[close], ii[close], jj[close]
    mid = np.zeros(ii.shape[0])
    for k in range(d):
        s = pts[ii, k] + pts[jj, k]
        mid += s * s
    keep = np.zeros(i.shape[0], dtype=bool)
    keep[alive[mid <= 4.0]] = True
    return keep


def kernel(x, y, delta: float) -> int:
    """1 if ``|x - y| <= delta`` and the midpoint lies in the closed unit ball."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    y = np.asarray(y, dtype=np.float64).reshape(1, -1)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape[1]} vs {y.shape[1]}")
    pts = np.vstack([x, y])
    return int(_qualifying(pts, np.array([0]), np.array([1]), delta)[0])


# ---------------------------------------------------------------------------
# candidate generation


def _brute_candidates(n: int) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    if n < 2:
        return
    rows_per_chunk = max(1, _PAIR_CHUNK // n)
    for start in range(0, n - 1, rows_per_chunk):
        stop = min(n - 1, start + rows_per_chunk)
        rows = np.arange(start, stop)
        lengths = n - 1 - rows
        i = np.repeat(rows, lengths)
        offsets = np.arange(i.shape[0]) - np.repeat(np.cumsum(lengths) - lengths, lengths)
        j = i + 1 + offsets
        yield i, j


def _expand_cell_pairs(ca, cb, starts, counts, order, same):
    """All point-index pairs between cells ``ca[k]`` and ``cb[k]``."""
    na = counts[ca]
    nb = counts[cb]
    sizes = na * nb
    total = int(sizes.sum())
    if total == 0:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    pid = np.repeat(np.arange(ca.shape[0]), sizes)
    local = np.arange(total) - np.repeat(np.cumsum(sizes) - sizes, sizes)
    nb_rep = nb[pid]
    ia = local // nb_rep
    ib = local % nb_rep
    i = order[starts[ca][pid] + ia]
    j = order[starts[cb][pid] + ib]
    if same:
        m = ia < ib
        i, j = i[m], j[m]
    return i, j


def _neighbor_cell_pairs(keys_u: np.ndarray, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Pairs ``(a, b)``, ``a != b``, of occupied cells whose keys differ by at most
    1 in every coordinate; each unordered pair once.

    When ``3**d`` probes per cell would exceed the number of occupied cells the
    occupancy map is scanned directly instead; both routes return the same set.
    """
    c = keys_u.shape[0]
    kmin = keys_u.min(axis=0) - 1
    span = keys_u.max(axis=0) - kmin + 2
    log_cells = float(np.sum(np.log2(span.astype(float))))
    if d * math.log(3) <= math.log(max(c, 1)) and log_cells < 62:
        strides = np.ones(d, dtype=np.int64)
        for k in range(d - 2, -1, -1):
            strides[k] = strides[k + 1] * span[k + 1]
        codes = (keys_u - kmin) @ strides
        sort = np.argsort(codes)
        sorted_codes = codes[sort]
        grids = np.array(np.meshgrid(*([np.array([-1, 0, 1])] * d), indexing="ij")).reshape(d, -1).T
        off_codes = grids @ strides
        off_codes = off_codes[off_codes > 0]
        probes = codes[:, None] + off_codes[None, :]
        pos = np.searchsorted(sorted_codes, probes)
        pos_c = np.minimum(pos, c - 1)
        hit = sorted_codes[pos_c] == probes
        a = np.nonzero(hit)[0]
        b = sort[pos_c[hit]]
        return a, b
    a_all, b_all = [], []
    block = max(1, _PAIR_CHUNK // max(c * d, 1))
    for s in range(0, c, block):
        blk = keys_u[s:s + block]
        cheb = np.abs(blk[:, None, :] - keys_u[None, :, :]).max(axis=2)
        ia, ib = np.nonzero(cheb <= 1)
        ia = ia + s
        m = ia < ib
        a_all.append(ia[m])
        b_all.append(ib[m])
    return np.concatenate(a_all), np.concatenate(b_all)


def _grid_candidates(pts: np.ndarray, delta: float) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    n, d = pts.shape
    if n < 2:
        return
    # cell side padded so a pair at distance exactly delta can never land two
    # cells apart through rounding in the division
    keys = np.floor(pts / (delta * _CELL_PAD)).astype(np.int64)
    keys_u, cell_of = np.unique(keys, axis=0, return_inverse=True)
    cell_of = cell_of.reshape(-1)
    order = np.argsort(cell_of, kind="stable")
    counts = np.bincount(cell_of, minlength=keys_u.shape[0])
    starts = np.cumsum(counts) - counts

    cells = np.arange(keys_u.shape[0])
    multi = cells[counts >= 2]
    for lo, hi in _chunk_bounds(counts[multi] ** 2):
        yield _expand_cell_pairs(multi[lo:hi], multi[lo:hi], starts, counts, order, same=True)

    a, b = _neighbor_cell_pairs(keys_u, d)
    for lo, hi in _chunk_bounds(counts[a] * counts[b]):
        yield _expand_cell_pairs(a[lo:hi], b[lo:hi], starts, counts, order, same=False)


def _chunk_bounds(sizes: np.ndarray) -> list[tuple[int, int]]:
    """Split a run of work items into slices of roughly ``_PAIR_CHUNK`` pairs."""
    if sizes.shape[0] == 0:
        return []
    cum = np.cumsum(sizes)
    cuts = np.searchsorted(cum, np.arange(_PAIR_CHUNK, int(cum[-1]), _PAIR_CHUNK), side="right")
    edges = np.unique(np.concatenate([[0], cuts, [sizes.shape[0]]]))
    return [(int(lo), int(hi)) for lo, hi in zip(edges[:-1], edges[1:])]


def _choose(strategy: Strategy, n: int, d: int) -> Strategy:
    strategy = Strategy(strategy)
    if strategy is not Strategy.AUTO:
        return strategy
    # 3**d <= 4N, compared in logs
    return Strategy.SPARSE_GRID if d * math.log(3) <= math.log(4 * max(n, 1)) else Strategy.BRUTE_FORCE


def _candidates(pts, delta, strategy):
    if strategy is Strategy.SPARSE_GRID:
        return _grid_candidates(pts, delta)
    return _brute_candidates(pts.shape[0])


def count_edges(config, delta: float, strategy: Strategy | str = Strategy.AUTO) -> EdgeCountResult:
    """Number of unordered pairs with kernel value 1."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    pts = _as_points(config)
    used = _choose(strategy, pts.shape[0], pts.shape[1])
    count = 0
    examined = 0
    for i, j in _candidates(pts, delta, used):
        examined += i.shape[0]
        if i.shape[0]:
            count += int(np.count_nonzero(_qualifying(pts, i, j, delta)))
    return EdgeCountResult(count, used, examined)


def edge_pairs(config, delta: float, strategy: Strategy | str = Strategy.AUTO) -> np.ndarray:
    """``(E, 2)`` array of qualifying index pairs ``(i, j)`` with ``i < j``."""
    pts = _as_points(config)
    used = _choose(strategy, pts.shape[0], pts.shape[1])
    out = []
    for i, j in _candidates(pts, delta, used):
        if i.shape[0]:
            m = _qualifying(pts, i, j, delta)
            out.append(np.column_stack([np.minimum(i[m], j[m]), np.maximum(i[m], j[m])]))
    if not out:
        return np.empty((0, 2), dtype=np.int64)
    pairs = np.vstack(out)
    return pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]


def first_difference(config, x, delta: float) -> int:
    """``D_x`` of the edge count: existing points ``y`` with ``kernel(y, x) = 1``."""
    pts = _as_points(config)
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if pts.shape[0] == 0:
        if x.shape[0] != pts.shape[1]:
            raise ValueError("dimension mismatch")
        return 0
    if x.shape[0] != pts.shape[1]:
        raise ValueError(f"dimension mismatch: {x.shape[0]} vs {pts.shape[1]}")
    both = np.vstack([pts, x[None, :]])
    n = pts.shape[0]
    i = np.arange(n)
    j = np.full(n, n)
    return int(np.count_nonzero(_qualifying(both, i, j, delta)))


def second_difference(x1, x2, delta: float) -> int:
    """``D_{x1,x2}`` of the edge count, which does not depend on the configuration."""
    return kernel(x1, x2, delta)
