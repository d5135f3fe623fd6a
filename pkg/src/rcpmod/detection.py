"""Outlier scores (reconstruction + cross-view consistency) and ROC AUC."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import ContractError
from .objectives import multiview_contrastive

OUTLIER_TYPES = {1: "attribute", 2: "class", 3: "class-attribute"}


def reconstruction_scores(views, reconstructions, presence) -> np.ndarray:
    """Per-instance half squared reconstruction error summed over present views."""
    presence = np.asarray(presence, dtype=bool)
    if not presence.any(axis=1).all():
        raise ContractError("every instance needs at least one present view")
    out = np.zeros(presence.shape[0])
    for v, (x, xh) in enumerate(zip(views, reconstructions)):
        r = np.asarray(x, dtype=np.float64) - xh
        out += 0.5 * np.einsum("ij,ij->i", r, r) * presence[:, v]
    return out


def reconstruction_score(instance: int, views, reconstructions, presence) -> float:
    presence = np.asarray(presence, dtype=bool)
    if not presence[instance].any():
        raise ContractError(f"instance {instance} has no present view")
    total = 0.0
    for v in np.flatnonzero(presence[instance]):
        r = np.asarray(views[v][instance], dtype=np.float64) - reconstructions[v][instance]
        total += 0.5 * float(r @ r)
    return total


def consistency_scores(latents, tau: float) -> np.ndarray:
    """Per-instance contrastive value against the whole dataset as negative pool.

    ``latents`` must be complete (observed or imputed) for every view.
    """
    if any(not np.all(np.isfinite(z)) for z in latents):
        raise ContractError("latents contain non-finite or uninitialized entries")
    return multiview_contrastive(latents, tau)[1]


def consistency_score(instance: int, latents, tau: float) -> float:
    return float(consistency_scores(latents, tau)[instance])


def auc(scores, labels) -> float:
    """Probability that a random positive outscores a random negative, ties counting one half.

    Computed from tie-averaged ranks (Mann-Whitney U).
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels).ravel().astype(bool)
    if scores.shape != labels.shape:
        raise ContractError("scores and labels differ in length")
    n_pos = int(labels.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ContractError("AUC needs at least one positive and one negative label")
    ranks = rankdata(scores)  # average ranks for ties
    u = ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def per_type_auc(scores, types) -> dict[str, float]:
    """AUC of each outlier type against inliers (types: 0 inlier, 1..3 outlier kinds)."""
    types = np.asarray(types)
    out = {}
    for code, name in OUTLIER_TYPES.items():
        sel = (types == 0) | (types == code)
        if np.any(types == code) and np.any(types == 0):
            out[name] = auc(np.asarray(scores)[sel], types[sel] == code)
    return out


@dataclass
class ScoreReport:
    s_r: np.ndarray
    s_c: np.ndarray
    s: np.ndarray
    types: np.ndarray | None = None
    overall_auc: float | None = None
    type_auc: dict[str, float] = field(default_factory=dict)

    def __len__(self) -> int:
        return self.s.size

    def write_scores(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            head = ["instance_id", "s_r", "s_c", "s"]
            if self.types is not None:
                head += ["label", "type"]
            w.writerow(head)
            for i in range(self.s.size):
                row = [i, repr(float(self.s_r[i])), repr(float(self.s_c[i])), repr(float(self.s[i]))]
                if self.types is not None:
                    t = int(self.types[i])
                    row += [int(t > 0), OUTLIER_TYPES.get(t, "inlier")]
                w.writerow(row)

    def histogram(self, bins: int = 20) -> list[tuple[float, float, int, int]]:
        edges = np.histogram_bin_edges(self.s, bins=bins)
        if self.types is None:
            counts = np.histogram(self.s, edges)[0]
            return [(edges[b], edges[b + 1], int(counts[b]), 0) for b in range(bins)]
        inl = np.histogram(self.s[self.types == 0], edges)[0]
        out = np.histogram(self.s[self.types > 0], edges)[0]
        return [(edges[b], edges[b + 1], int(inl[b]), int(out[b])) for b in range(bins)]

    def write_histogram(self, path, bins: int = 20) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["bin_lo", "bin_hi", "inlier_count", "outlier_count"])
            for lo, hi, a, b in self.histogram(bins):
                w.writerow([repr(float(lo)), repr(float(hi)), a, b])

    def metrics(self) -> dict:
        return {"auc": self.overall_auc, "type_auc": dict(self.type_auc), "n_instances": int(self.s.size)}


def total_score(s_r, s_c, types=None) -> ScoreReport:
    s_r = np.asarray(s_r, dtype=np.float64)
    s_c = np.asarray(s_c, dtype=np.float64)
    s = s_r + s_c
    report = ScoreReport(s_r, s_c, s, None if types is None else np.asarray(types))
    if types is not None and np.any(report.types > 0) and np.any(report.types == 0):
        report.overall_auc = auc(s, report.types > 0)
        report.type_auc = per_type_auc(s, report.types)
    return report


def write_metrics(path, metrics: dict) -> None:
    with open(path, "w") as fh:
        json.dump(metrics, fh, indent=2, sort_keys=True)
        fh.write("\n")
