"""Cross-view relation transfer (CRT) for missing-view latents.

A missing latent ``z_i^(v)`` is recovered from an observed view ``u`` of the
same instance: take the K nearest neighbors of ``z_i^(u)`` inside view ``u``,
look up their view-``v`` latents, drop the ones that are not observed, and
average the rest. With several observed source views the per-source
estimates are averaged.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ImputationDeferred
from .neighbors import NeighborIndex, Space, build_knn

MISSING, OBSERVED, IMPUTED = 0, 1, 2


@dataclass
class LatentViews:
    latents: list[np.ndarray]  # per view, (n_all, d)
    status: np.ndarray  # (n_all, V) int8 of MISSING / OBSERVED / IMPUTED
    imputed_epoch: np.ndarray  # (n_all, V) epoch of first imputation, -1 if never

    @classmethod
    def from_observed(cls, latents, presence) -> "LatentViews":
        presence = np.asarray(presence, dtype=bool)
        lat = [np.where(presence[:, v, None], z, 0.0) for v, z in enumerate(latents)]
        status = np.where(presence, OBSERVED, MISSING).astype(np.int8)
        return cls(lat, status, np.full(presence.shape, -1, dtype=np.int64))

    @property
    def n_views(self) -> int:
        return len(self.latents)

    @property
    def n_all(self) -> int:
        return self.status.shape[0]

    def available(self, v: int) -> np.ndarray:
        return self.status[:, v] != MISSING

    def complete_rows(self) -> np.ndarray:
        return np.flatnonzero(np.all(self.status != MISSING, axis=1))

    def refresh_observed(self, latents, presence) -> None:
        """Overwrite observed rows with freshly encoded latents, keeping imputed rows."""
        presence = np.asarray(presence, dtype=bool)
        for v, z in enumerate(latents):
            self.latents[v][presence[:, v]] = z[presence[:, v]]

    def copy(self) -> "LatentViews":
        return LatentViews([z.copy() for z in self.latents], self.status.copy(), self.imputed_epoch.copy())


def build_source_indexes(latents: LatentViews, k: int) -> list[NeighborIndex | None]:
    """Per-view K-NN tables over observed latents (None when a view has too few rows)."""
    out = []
    for v in range(latents.n_views):
        obs = np.flatnonzero(latents.status[:, v] == OBSERVED)
        out.append(build_knn(latents.latents[v], obs, k, Space.LATENT, latents.n_all) if obs.size > k else None)
    return out


def crt_impute(latents: LatentViews, indexes, target_view: int, instance: int, k: int | None = None) -> np.ndarray:
    """Estimate ``instance``'s latent in ``target_view``.

    Raises :class:`ImputationDeferred` when no neighbor counterpart is
    observed in the target view.
    """
    estimates = []
    for u in range(latents.n_views):
        if u == target_view or latents.status[instance, u] != OBSERVED or indexes[u] is None:
            continue
        nbrs = indexes[u].neighbors_of([instance])[0]
        if k is not None:
            nbrs = nbrs[:k]
        usable = nbrs[latents.status[nbrs, target_view] == OBSERVED]
        if usable.size:
            estimates.append(latents.latents[target_view][usable].mean(axis=0))
    if not estimates:
        raise ImputationDeferred(f"instance {instance}, view {target_view}")
    return np.mean(estimates, axis=0)


def impute_all(latents: LatentViews, k: int, indexes=None, epoch: int = 0) -> dict:
    """Impute every non-observed entry once, in ascending instance order.

    Only observed latents act as sources, so the result depends on the
    observed rows alone and repeated calls are idempotent. Deferred entries
    keep their previous value (or stay missing).
    """
    if indexes is None:
        indexes = build_source_indexes(latents, k)
    stats = {"attempted": [0] * latents.n_views, "imputed": 0, "deferred": []}
    updates = []
    for v in range(latents.n_views):
        for i in np.flatnonzero(latents.status[:, v] != OBSERVED):
            if not np.any(latents.status[i] == OBSERVED):
                continue
            stats["attempted"][v] += 1
            try:
                updates.append((v, i, crt_impute(latents, indexes, v, i, k)))
            except ImputationDeferred:
                stats["deferred"].append((int(i), v))
    for v, i, z in updates:
        latents.latents[v][i] = z
        if latents.status[i, v] == MISSING:
            latents.imputed_epoch[i, v] = epoch
        latents.status[i, v] = IMPUTED
    stats["imputed"] = len(updates)
    return stats


def fill_unimputed(latents: LatentViews) -> int:
    """Replace entries still missing with the mean observed latent of their view.

    Scoring needs a latent for every view; this only triggers for instances
    whose CRT was deferred. Returns the number of filled entries.
    """
    filled = 0
    for v in range(latents.n_views):
        miss = latents.status[:, v] == MISSING
        if miss.any():
            obs = latents.status[:, v] == OBSERVED
            latents.latents[v][miss] = latents.latents[v][obs].mean(axis=0)
            latents.status[miss, v] = IMPUTED
            filled += int(miss.sum())
    return filled


def zero_imputation(latents: LatentViews, presence) -> list[np.ndarray]:
    presence = np.asarray(presence, dtype=bool)
    return [np.where(presence[:, v, None], z, 0.0) for v, z in enumerate(latents.latents)]


def mean_imputation(latents: LatentViews, presence) -> list[np.ndarray]:
    presence = np.asarray(presence, dtype=bool)
    out = []
    for v, z in enumerate(latents.latents):
        mean = z[presence[:, v]].mean(axis=0)
        out.append(np.where(presence[:, v, None], z, mean))
    return out


def imputation_quality(imputed, truth, presence) -> list[tuple[int, int, float, float]]:
    """``(instance, view, cosine, l2_error)`` for every missing entry."""
    from .numeric import pairwise_cosine

    rows = []
    presence = np.asarray(presence, dtype=bool)
    for v in range(presence.shape[1]):
        for i in np.flatnonzero(~presence[:, v]):
            cos = float(pairwise_cosine(imputed[v][i], truth[v][i])[0, 0])
            rows.append((int(i), v, cos, float(np.linalg.norm(imputed[v][i] - truth[v][i]))))
    return rows


def write_imputation_csv(path, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["instance", "view", "cosine", "l2_error"])
        for r in rows:
            w.writerow([r[0], r[1], repr(r[2]), repr(r[3])])
