"""Exact within-view K-nearest-neighbor tables and their refresh schedule."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ConfigError

_CHUNK = 2048


class Space(enum.Enum):
    INPUT = "input"
    LATENT = "latent"


@dataclass(frozen=True)
class NeighborIndex:
    """K-NN table for one view.

    ``table[r]`` holds the global instance ids of the K nearest neighbors of
    ``built_over[r]``, nearest first. ``position`` maps a global id to its row
    in ``table`` (or -1 when the instance was not part of the build).
    """

    table: np.ndarray  # (n_built, K) int64, global ids
    distances: np.ndarray  # (n_built, K)
    built_over: np.ndarray  # (n_built,) global ids, ascending
    position: np.ndarray  # (n_all,) int64
    space: Space

    @property
    def k(self) -> int:
        return self.table.shape[1]

    def has(self, ids) -> np.ndarray:
        return self.position[np.asarray(ids)] >= 0

    def neighbors_of(self, ids) -> np.ndarray:
        pos = self.position[np.asarray(ids)]
        if np.any(pos < 0):
            raise KeyError("instance not covered by this neighbor index")
        return self.table[pos]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["instance", "rank", "neighbor", "distance"])
            for i, row, dist in zip(self.built_over, self.table, self.distances):
                for r, (j, d) in enumerate(zip(row, dist), start=1):
                    w.writerow([int(i), r, int(j), repr(float(d))])


def _smallest_k(d: np.ndarray, k: int) -> np.ndarray:
    """Column ids of the k smallest entries per row, sorted by (value, column).

    Equivalent to ``argsort(d, kind="stable")[:, :k]`` but only sorts the
    entries at or below each row's k-th smallest value.
    """
    kth = np.partition(d, k - 1, axis=1)[:, k - 1]
    rows, cols = np.nonzero(d <= kth[:, None])
    vals = d[rows, cols]
    order = np.lexsort((cols, vals, rows))
    counts = np.bincount(rows, minlength=d.shape[0])
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    pick = order[starts[:, None] + np.arange(k)]
    return cols[pick]


def build_knn(points: np.ndarray, present, k: int, space: Space = Space.INPUT,
              n_all: int | None = None) -> NeighborIndex:
    """Exact Euclidean K-NN over the rows ``present`` of ``points``.

    ``points`` is indexed by global instance id; rows outside ``present`` are
    ignored. Ties are broken by ascending instance id.
    """
    present = np.sort(np.asarray(present, dtype=np.int64))
    if present.size <= k:
        raise ConfigError(f"need more than K={k} present instances, got {present.size}")
    if k < 1:
        raise ConfigError("K must be positive")
    n_all = points.shape[0] if n_all is None else n_all
    sub = np.asarray(points, dtype=np.float64)[present]
    n = present.size
    table = np.empty((n, k), dtype=np.int64)
    dists = np.empty((n, k))
    for start in range(0, n, _CHUNK):
        stop = min(start + _CHUNK, n)
        d = cdist(sub[start:stop], sub, "sqeuclidean")
        d[np.arange(stop - start), np.arange(start, stop)] = np.inf
        order = _smallest_k(d, k)
        table[start:stop] = order
        dists[start:stop] = np.sqrt(np.take_along_axis(d, order, axis=1))
    position = np.full(n_all, -1, dtype=np.int64)
    position[present] = np.arange(n)
    return NeighborIndex(present[table], dists, present, position, space)


@dataclass(frozen=True)
class RefreshPolicy:
    """Input-feature neighbors until ``switch_epoch``, latent neighbors afterwards.

    In latent mode the tables are rebuilt every ``refresh_interval`` epochs,
    counted from the switch.
    """

    switch_epoch: int = 50
    refresh_interval: int = 5

    def space(self, epoch: int) -> Space:
        return Space.INPUT if epoch < self.switch_epoch else Space.LATENT

    def rebuild_due(self, epoch: int, last_build: int | None, last_space: Space | None) -> bool:
        space = self.space(epoch)
        if last_build is None or last_space is not space:
            return True
        if space is Space.INPUT:
            return False
        return (epoch - self.switch_epoch) % self.refresh_interval == 0 and epoch != last_build


def refresh_policy(epoch: int, switch_epoch: int = 50) -> Space:
    return RefreshPolicy(switch_epoch).space(epoch)
