"""Multi-view datasets: CSV directory I/O, normalization, synthetic data,
outlier injection and missing-view masking.

Directory format::

    view_1.csv ... view_V.csv   rows = instances, header-free float columns
    mask.csv                    optional, N x V of {0,1} (absent: all present)
    labels.csv                  optional, N x 1 of {0 inlier, 1 attribute, 2 class, 3 class-attribute}
    provenance.json             optional, written by the inject/mask commands
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError, DataFormatError
from .objectives import ratio_count

INLIER, ATTRIBUTE, CLASS, CLASS_ATTRIBUTE = 0, 1, 2, 3


@dataclass
class MultiViewDataset:
    views: list[np.ndarray]
    presence: np.ndarray  # (N, V) bool
    types: np.ndarray | None = None  # (N,) int, 0 = inlier
    full_views: list[np.ndarray] | None = None  # complete views before masking, when known
    clusters: np.ndarray | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.presence = np.asarray(self.presence, dtype=bool)
        n = self.presence.shape[0]
        if any(x.shape[0] != n for x in self.views):
            raise ContractError("every view needs one row per instance")
        if self.presence.shape[1] != len(self.views):
            raise ContractError("presence mask must have one column per view")

    @property
    def n(self) -> int:
        return self.presence.shape[0]

    @property
    def n_views(self) -> int:
        return len(self.views)

    @property
    def dims(self) -> list[int]:
        return [x.shape[1] for x in self.views]

    def complete_rows(self) -> np.ndarray:
        return np.flatnonzero(self.presence.all(axis=1))

    def labels_or_zeros(self) -> np.ndarray:
        return np.zeros(self.n, dtype=np.int64) if self.types is None else self.types

    def copy(self) -> "MultiViewDataset":
        return replace(
            self,
            views=[x.copy() for x in self.views],
            presence=self.presence.copy(),
            types=None if self.types is None else self.types.copy(),
            full_views=None if self.full_views is None else [x.copy() for x in self.full_views],
            provenance=json.loads(json.dumps(self.provenance)),
        )


def _read_csv(path: Path) -> np.ndarray:
    try:
        arr = np.loadtxt(path, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as exc:
        raise DataFormatError(f"{path.name}: {exc}") from None
    return arr


def load_dataset(directory) -> MultiViewDataset:
    directory = Path(directory)
    views = []
    v = 1
    while (directory / f"view_{v}.csv").exists():
        views.append(_read_csv(directory / f"view_{v}.csv"))
        v += 1
    if not views:
        raise DataFormatError(f"no view_1.csv in {directory}")
    n = views[0].shape[0]
    for k, x in enumerate(views, start=1):
        if x.shape[0] != n:
            raise DataFormatError(f"row-count mismatch: view_1 has {n} rows, view_{k} has {x.shape[0]}")
    if (directory / "mask.csv").exists():
        mask = _read_csv(directory / "mask.csv")
        if mask.shape != (n, len(views)):
            raise DataFormatError(f"mask.csv must be {n}x{len(views)}, got {mask.shape[0]}x{mask.shape[1]}")
        if not np.all((mask == 0) | (mask == 1)):
            raise DataFormatError("mask.csv values must be 0 or 1")
        presence = mask.astype(bool)
    else:
        presence = np.ones((n, len(views)), dtype=bool)
    if not presence.any(axis=1).all():
        raise DataFormatError("mask.csv leaves an instance with no view")
    types = None
    if (directory / "labels.csv").exists():
        lab = _read_csv(directory / "labels.csv").ravel()
        if lab.size != n:
            raise DataFormatError(f"row-count mismatch: labels.csv has {lab.size} rows, views have {n}")
        if not np.all(np.isin(lab, [0, 1, 2, 3])):
            raise DataFormatError("labels.csv values must be in {0,1,2,3}")
        types = lab.astype(np.int64)
    provenance = {}
    if (directory / "provenance.json").exists():
        provenance = json.loads((directory / "provenance.json").read_text())
    for k in range(len(views)):
        views[k][~presence[:, k]] = 0.0
    return MultiViewDataset(views, presence, types, provenance=provenance)


def save_dataset(dataset: MultiViewDataset, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for k, x in enumerate(dataset.views, start=1):
        np.savetxt(directory / f"view_{k}.csv", x, delimiter=",", fmt="%.17g")
    np.savetxt(directory / "mask.csv", dataset.presence.astype(int), delimiter=",", fmt="%d")
    if dataset.types is not None:
        np.savetxt(directory / "labels.csv", dataset.types.reshape(-1, 1), fmt="%d")
    (directory / "provenance.json").write_text(json.dumps(dataset.provenance, indent=2, sort_keys=True) + "\n")


def normalize(dataset: MultiViewDataset) -> MultiViewDataset:
    """Per-view, per-feature min-max scaling to [0, 1] over present rows; constant features become 0."""
    out = dataset.copy()
    for k, x in enumerate(out.views):
        rows = out.presence[:, k]
        lo = x[rows].min(axis=0)
        span = x[rows].max(axis=0) - lo
        safe = np.where(span > 0, span, 1.0)
        y = np.where(span > 0, (x - lo) / safe, 0.0)
        y[~rows] = 0.0
        out.views[k] = y
    out.provenance["normalized"] = True
    return out


def synthesize(clusters: int, per_view_dims, n: int, noise: float, rng: np.random.Generator) -> MultiViewDataset:
    """Round-robin cluster assignment shared by all views; each view draws its own
    uniform cluster centers and independent Gaussian noise of scale ``noise``."""
    if clusters < 2:
        raise ContractError("need at least two clusters")
    assign = np.arange(n) % clusters
    views = []
    for d in per_view_dims:
        centers = rng.uniform(0.0, 1.0, size=(clusters, d))
        views.append(centers[assign] + noise * rng.standard_normal((n, d)))
    ds = MultiViewDataset(views, np.ones((n, len(views)), dtype=bool), np.zeros(n, dtype=np.int64), clusters=assign)
    ds.provenance = {"synthetic": {"clusters": clusters, "dims": list(per_view_dims), "n": n, "noise": noise}}
    return ds


def _clean_pool(ds: MultiViewDataset) -> np.ndarray:
    return np.flatnonzero(ds.labels_or_zeros() == INLIER)


def inject_attribute(dataset: MultiViewDataset, rho1: float, rng: np.random.Generator) -> MultiViewDataset:
    """Replace every view of ``ceil(rho1 * N)`` clean instances by uniform(0, 1) values."""
    out = dataset.copy()
    out.types = out.labels_or_zeros().copy()
    count = ratio_count(rho1, out.n)
    if count == 0:
        return out
    pool = _clean_pool(out)
    if pool.size < count:
        raise ConfigError(f"only {pool.size} clean instances for {count} attribute outliers")
    chosen = np.sort(rng.choice(pool, size=count, replace=False))
    for k, x in enumerate(out.views):
        x[chosen] = rng.uniform(0.0, 1.0, size=(count, x.shape[1]))
    out.types[chosen] = ATTRIBUTE
    return out


def _draw_pairs(ds: MultiViewDataset, rho: float, rng: np.random.Generator, kind: str) -> np.ndarray:
    n_pairs = int(np.ceil(ratio_count(rho, ds.n) / 2.0))
    if n_pairs == 0:
        return np.empty((0, 2), dtype=np.int64)
    pool = _clean_pool(ds)
    if pool.size < 2 * n_pairs:
        raise ConfigError(f"only {pool.size} clean instances for {n_pairs} {kind} pairs")
    return rng.choice(pool, size=2 * n_pairs, replace=False).reshape(n_pairs, 2)


def swap_views(views, pair, view_ids) -> None:
    a, b = pair
    for k in view_ids:
        views[k][[a, b]] = views[k][[b, a]]


def inject_class(dataset: MultiViewDataset, rho2: float, rng: np.random.Generator) -> MultiViewDataset:
    """Swap floor(V/2) randomly chosen views between random clean pairs."""
    out = dataset.copy()
    out.types = out.labels_or_zeros().copy()
    n_swap = out.n_views // 2
    for pair in _draw_pairs(out, rho2, rng, "class"):
        swap_views(out.views, pair, rng.choice(out.n_views, size=n_swap, replace=False))
        out.types[pair] = CLASS
    return out


def inject_class_attribute(dataset: MultiViewDataset, rho3: float, rng: np.random.Generator) -> MultiViewDataset:
    """Swap floor(V/2) views between clean pairs and randomize the remaining views of both."""
    out = dataset.copy()
    out.types = out.labels_or_zeros().copy()
    n_swap = out.n_views // 2
    for pair in _draw_pairs(out, rho3, rng, "class-attribute"):
        swapped = rng.choice(out.n_views, size=n_swap, replace=False)
        swap_views(out.views, pair, swapped)
        for k in range(out.n_views):
            if k not in swapped:
                out.views[k][pair] = rng.uniform(0.0, 1.0, size=(2, out.views[k].shape[1]))
        out.types[pair] = CLASS_ATTRIBUTE
    return out


def inject(dataset: MultiViewDataset, rho1: float, rho2: float, rho3: float,
           rng: np.random.Generator) -> MultiViewDataset:
    """Attribute, then class, then class-attribute outliers on disjoint instances."""
    for r in (rho1, rho2, rho3):
        if not 0.0 <= r < 1.0:
            raise ConfigError("outlier ratios must lie in [0, 1)")
    if rho1 + rho2 + rho3 >= 1.0:
        raise ConfigError("outlier ratios must sum to less than 1")
    out = inject_attribute(dataset, rho1, rng)
    out = inject_class(out, rho2, rng)
    out = inject_class_attribute(out, rho3, rng)
    out.provenance["injection"] = {"rho1": rho1, "rho2": rho2, "rho3": rho3,
                                   "order": ["attribute", "class", "class-attribute"]}
    return out


def apply_missing(dataset: MultiViewDataset, missing_rate: float, rng: np.random.Generator) -> MultiViewDataset:
    """Remove one uniformly chosen view from ``ceil(rate * N)`` distinct instances.

    Only instances with at least two present views are eligible, so nobody
    loses every view. Removed rows are zeroed; the pre-masking views are kept
    in ``full_views``.
    """
    if not 0.0 <= missing_rate < 1.0:
        raise ConfigError("missing rate must lie in [0, 1)")
    out = dataset.copy()
    if out.full_views is None:
        out.full_views = [x.copy() for x in out.views]
    count = ratio_count(missing_rate, out.n)
    eligible = np.flatnonzero(out.presence.sum(axis=1) >= 2)
    if count > eligible.size:
        raise ConfigError(f"cannot drop a view from {count} instances, only {eligible.size} eligible")
    chosen = np.sort(rng.choice(eligible, size=count, replace=False)) if count else np.empty(0, dtype=np.int64)
    for i in chosen:
        drop = rng.choice(np.flatnonzero(out.presence[i]))
        out.presence[i, drop] = False
        out.views[drop][i] = 0.0
    out.provenance["masking"] = {"missing_rate": missing_rate, "instances": int(count)}
    return out
