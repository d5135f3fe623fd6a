"""Loss terms of the training objective, the suspect-outlier memory bank and the mu schedule.

Every loss that participates in training can return gradients with respect
to its latent inputs (``grad=True``). Those gradients are pushed through the
encoders by :mod:`rcpmod.training`.

Multi-view generalisation: contrastive terms are computed for every
unordered view pair with the bi-view formula and averaged over pairs, which
for two views is exactly the bi-view loss.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ContractError
from .numeric import logsumexp_rows, normalize_rows, normalize_rows_backward, row_norms

KOLEO_CLAMP = 1e-9
_SCORE_CHUNK = 1024


def ratio_count(ratio: float, n: int) -> int:
    """``ceil(ratio * n)`` without float round-up noise (0.07 * 100 -> 7, not 8)."""
    return int(math.ceil(ratio * n - 1e-9))


def view_pairs(n_views: int) -> list[tuple[int, int]]:
    return list(itertools.combinations(range(n_views), 2))


# --------------------------------------------------------------------- reconstruction

def reconstruction_loss(views, reconstructions, present=None, grad: bool = False):
    """Half the summed squared residual over view-present rows.

    ``present`` is an optional list of boolean row masks, one per view.
    With ``grad=True`` also returns d loss / d reconstruction per view.
    """
    total = 0.0
    grads = []
    for v, (x, xh) in enumerate(zip(views, reconstructions)):
        x = np.asarray(x, dtype=np.float64)
        xh = np.asarray(xh, dtype=np.float64)
        if x.shape != xh.shape:
            raise ContractError(f"view {v}: input {x.shape} vs reconstruction {xh.shape}")
        resid = xh - x
        if present is not None:
            resid = resid * np.asarray(present[v], dtype=bool)[:, None]
        total += 0.5 * float(np.sum(resid * resid))
        grads.append(resid)
    return (total, grads) if grad else total


# --------------------------------------------------------------------- contrastive core

def _pair_loss_grad(a: np.ndarray, b: np.ndarray, tau: float, bank: np.ndarray | None):
    """Bi-view contrastive loss on row-aligned ``a``/``b`` with optional extra negatives.

    Anchors and candidates are the 2N normalized rows ``[a; b]``; the
    denominator of every anchor runs over all 2N candidates (self term
    included) plus every bank row.
    """
    n = a.shape[0]
    u, nu = normalize_rows(a)
    w, nw = normalize_rows(b)
    c = np.vstack([u, w])
    logits = (c @ c.T) / tau
    pos_idx = np.concatenate([np.arange(n, 2 * n), np.arange(n)])
    rows = np.arange(2 * n)
    if bank is not None and bank.shape[0]:
        mb, _ = normalize_rows(bank)
        full = np.hstack([logits, (c @ mb.T) / tau])
    else:
        mb = None
        full = logits
    # one exp pass serves both the value and the softmax
    shift = full.max(axis=1)
    e = np.exp(full - shift[:, None])
    total = e.sum(axis=1)
    lse = shift + np.log(total)
    per_anchor = lse - logits[rows, pos_idx]
    per_instance = 0.5 * (per_anchor[:n] + per_anchor[n:])

    g = e * ((0.5 / tau) / total)[:, None]
    g[rows, pos_idx] -= 0.5 / tau
    gc = g[:, : 2 * n]
    dc = gc @ c + gc.T @ c
    if mb is not None:
        dc += g[:, 2 * n:] @ mb
    da = normalize_rows_backward(dc[:n], u, nu)
    db = normalize_rows_backward(dc[n:], w, nw)
    return float(per_instance.sum()), per_instance, da, db


def _pair_per_instance(a: np.ndarray, b: np.ndarray, tau: float, bank: np.ndarray | None = None,
                       chunk: int = _SCORE_CHUNK) -> np.ndarray:
    """Value-only version of :func:`_pair_loss_grad`, evaluated in anchor chunks."""
    n = a.shape[0]
    u, _ = normalize_rows(a)
    w, _ = normalize_rows(b)
    c = np.vstack([u, w])
    mb = normalize_rows(bank)[0] if bank is not None and bank.shape[0] else None
    per_anchor = np.empty(2 * n)
    for start in range(0, 2 * n, chunk):
        stop = min(start + chunk, 2 * n)
        block = (c[start:stop] @ c.T) / tau
        if mb is not None:
            block = np.hstack([block, (c[start:stop] @ mb.T) / tau])
        idx = np.arange(start, stop)
        pos = block[np.arange(stop - start), (idx + n) % (2 * n)]
        per_anchor[start:stop] = logsumexp_rows(block) - pos
    return 0.5 * (per_anchor[:n] + per_anchor[n:])


def _check_aligned(zs):
    if len(zs) < 2:
        raise ContractError("contrastive losses need at least two views")
    n = zs[0].shape[0]
    if any(z.shape[0] != n for z in zs):
        raise ContractError("latent matrices are not row-aligned")
    if n == 0:
        raise ContractError("empty batch")


def multiview_contrastive(zs, tau: float, bank=None, grad: bool = False):
    """Pair-averaged contrastive loss; ``bank`` is a per-view list of extra negatives.

    Returns ``(loss, per_instance)`` or, with ``grad=True``,
    ``(loss, per_instance, [dZ_v])``.
    """
    if tau <= 0:
        raise ContractError("temperature must be positive")
    zs = [np.asarray(z, dtype=np.float64) for z in zs]
    _check_aligned(zs)
    pairs = view_pairs(len(zs))
    scale = 1.0 / len(pairs)
    loss = 0.0
    per_instance = np.zeros(zs[0].shape[0])
    grads = [np.zeros_like(z) for z in zs]
    for m, mp in pairs:
        pb = None
        if bank is not None:
            pb = np.vstack([bank[m], bank[mp]])
        if grad:
            l, pi, da, db = _pair_loss_grad(zs[m], zs[mp], tau, pb)
            grads[m] += scale * da
            grads[mp] += scale * db
        else:
            pi = _pair_per_instance(zs[m], zs[mp], tau, pb)
            l = float(pi.sum())
        loss += scale * l
        per_instance += scale * pi
    if grad:
        return loss, per_instance, grads
    return loss, per_instance


# --------------------------------------------------------------------- memory bank

def select_potential_outliers(zs, eta: float) -> np.ndarray:
    """Rows with the smallest cross-view cosine similarity (ceil(eta * n) of them).

    For more than two views the similarity is averaged over view pairs.
    Ties go to the lower row index.
    """
    zs = [np.asarray(z, dtype=np.float64) for z in zs]
    _check_aligned(zs)
    if not 0.0 < eta < 1.0:
        raise ContractError("eta must lie in (0, 1)")
    normed = [normalize_rows(z)[0] for z in zs]
    pairs = view_pairs(len(zs))
    sims = sum(np.einsum("ij,ij->i", normed[a], normed[b]) for a, b in pairs) / len(pairs)
    k = ratio_count(eta, sims.size)
    return np.argsort(sims, kind="stable")[:k]


@dataclass
class MemoryBank:
    """Bounded FIFO of detached latent snapshots, pushed and evicted per instance across all views."""

    n_views: int
    capacity: int
    entries: list[np.ndarray] = field(default_factory=list)
    origins: np.ndarray = field(default_factory=lambda: np.empty((0, 3), dtype=np.int64))

    def __post_init__(self):
        if self.capacity < 0:
            raise ContractError("bank capacity must be nonnegative")

    def __len__(self) -> int:
        return 0 if not self.entries else self.entries[0].shape[0]

    def views(self) -> list[np.ndarray] | None:
        return self.entries if len(self) else None

    def push(self, zs, indices, epoch: int = -1, batch: int = -1, instance_ids=None) -> "MemoryBank":
        indices = np.asarray(indices, dtype=np.int64)
        if len(zs) != self.n_views:
            raise ContractError("one latent matrix per view is required")
        new = [np.array(z, dtype=np.float64, copy=True)[indices] for z in zs]
        ids = indices if instance_ids is None else np.asarray(instance_ids)[indices]
        org = np.column_stack([np.full(indices.size, epoch), np.full(indices.size, batch), ids]).astype(np.int64)
        if self.entries:
            new = [np.vstack([old, add]) for old, add in zip(self.entries, new)]
            org = np.vstack([self.origins, org])
        keep = max(new[0].shape[0] - self.capacity, 0)
        self.entries = [e[keep:] for e in new]
        self.origins = org[keep:]
        return self


def bank_push(bank: MemoryBank, zs, indices, **origin) -> MemoryBank:
    return bank.push(zs, indices, **origin)


def outlier_aware_contrastive(zs, bank: MemoryBank | None, tau: float, grad: bool = False):
    """Contrastive loss whose denominators also include every bank entry of the anchor's view pair."""
    views = None if bank is None else bank.views()
    return multiview_contrastive(zs, tau, views, grad=grad)


# --------------------------------------------------------------------- neighbor alignment

def neighbor_alignment_loss(tables, neighbor_ids, tau: float | None = None, grad: bool = False):
    """Contrastive alignment of rank-t neighbors across views, averaged over t.

    ``tables[v]`` holds latent rows addressed by ``neighbor_ids[v]``, an
    ``(N, K)`` array whose row ``i`` lists the neighbors of batch instance
    ``i`` found within view ``v``. No temperature is applied unless ``tau`` is
    given. Gradients are returned with respect to ``tables``.
    """
    tables = [np.asarray(t, dtype=np.float64) for t in tables]
    neighbor_ids = [np.asarray(n, dtype=np.int64) for n in neighbor_ids]
    if len(tables) != len(neighbor_ids):
        raise ContractError("one neighbor table per view is required")
    k = neighbor_ids[0].shape[1]
    if any(n.shape != neighbor_ids[0].shape for n in neighbor_ids):
        raise ContractError("neighbor lists must have the same shape in every view")
    t_eff = 1.0 if tau is None else tau
    loss = 0.0
    grads = [np.zeros_like(t) for t in tables]
    for t in range(k):
        zs = [tab[nb[:, t]] for tab, nb in zip(tables, neighbor_ids)]
        if grad:
            l, _, gz = multiview_contrastive(zs, t_eff, grad=True)
            for v, g in enumerate(gz):
                np.add.at(grads[v], neighbor_ids[v][:, t], g / k)
        else:
            l, _ = multiview_contrastive(zs, t_eff)
        loss += l / k
    return (loss, grads) if grad else loss


# --------------------------------------------------------------------- spreading regularization

def koleo_loss(zs, grad: bool = False):
    """``-1/2 * sum_v sum_i log(max(nearest-neighbor distance, 1e-9))`` within each view's rows."""
    loss = 0.0
    grads = []
    for z in zs:
        z = np.asarray(z, dtype=np.float64)
        n = z.shape[0]
        if n < 2:
            raise ContractError("KoLeo needs at least two rows per view")
        d = cdist(z, z)
        np.fill_diagonal(d, np.inf)
        j = np.argmin(d, axis=1)
        delta = d[np.arange(n), j]
        loss += -0.5 * float(np.sum(np.log(np.maximum(delta, KOLEO_CLAMP))))
        if grad:
            g = np.zeros_like(z)
            live = delta > KOLEO_CLAMP
            coef = np.zeros(n)
            coef[live] = -0.5 / delta[live] ** 2
            diff = (z - z[j]) * coef[:, None]
            g += diff
            np.add.at(g, j, -diff)
            grads.append(g)
    return (loss, grads) if grad else loss


RANK_SIGNS = {"printed": -1.0, "triplet": 1.0}


def draw_positive_ranks(n: int, k_pos: int, rng: np.random.Generator) -> np.ndarray:
    """Zero-based neighbor ranks of the sampled positives, uniform over the k_pos nearest."""
    return rng.integers(0, k_pos, size=n)


def rank_loss(tables, anchors, neighbor_ids, k_pos: int, k_neg: int, rng=None,
              sign: str = "printed", positive_ranks=None, grad: bool = False):
    """Hinge on (distance to a near positive) minus (distance to the k_neg-th neighbor).

    Per view ``v``: ``anchors[v]`` are row ids into ``tables[v]`` and
    ``neighbor_ids[v]`` their neighbor lists (same row space, nearest first).
    ``sign='printed'`` keeps a leading minus sign on the hinge sum (the
    default); ``'triplet'`` gives the usual nonnegative triplet hinge.
    Positive ranks are drawn from ``rng`` unless ``positive_ranks`` (one array
    per view) is supplied.
    """
    if sign not in RANK_SIGNS:
        raise ContractError(f"rank sign must be one of {sorted(RANK_SIGNS)}")
    if not 1 <= k_pos <= k_neg:
        raise ContractError("need 1 <= k_pos <= k_neg")
    s = RANK_SIGNS[sign]
    loss = 0.0
    grads = []
    for v, (tab, a, nb) in enumerate(zip(tables, anchors, neighbor_ids)):
        tab = np.asarray(tab, dtype=np.float64)
        a = np.asarray(a, dtype=np.int64)
        nb = np.asarray(nb, dtype=np.int64)
        if nb.ndim != 2 or nb.shape[1] < k_neg:
            raise ContractError(f"view {v}: neighbor lists shorter than k_neg={k_neg}")
        if positive_ranks is not None:
            p = np.asarray(positive_ranks[v], dtype=np.int64)
        else:
            p = draw_positive_ranks(a.size, k_pos, rng)
        pos_ids = nb[np.arange(a.size), p]
        neg_ids = nb[:, k_neg - 1]
        dp_vec = tab[a] - tab[pos_ids]
        dn_vec = tab[a] - tab[neg_ids]
        dp = row_norms(dp_vec)
        dn = row_norms(dn_vec)
        h = np.maximum(dp - dn, 0.0)
        loss += s * 0.5 * float(h.sum())
        if grad:
            g = np.zeros_like(tab)
            live = dp - dn > 0
            coef = s * 0.5 * live
            gp = dp_vec * (coef / np.maximum(dp, 1e-12))[:, None]
            gn = dn_vec * (coef / np.maximum(dn, 1e-12))[:, None]
            np.add.at(g, a, gp - gn)
            np.add.at(g, pos_ids, -gp)
            np.add.at(g, neg_ids, gn)
            grads.append(g)
    return (loss, grads) if grad else loss


def spreading_regularization(koleo_views, rank_args: dict, grad: bool = False):
    """Returns ``(l_koleo, l_rank, l_sr)`` (plus both gradient lists with ``grad=True``)."""
    if grad:
        lk, gk = koleo_loss(koleo_views, grad=True)
        lr, gr = rank_loss(**rank_args, grad=True)
        return lk, lr, lk + lr, gk, gr
    lk = koleo_loss(koleo_views)
    lr = rank_loss(**rank_args)
    return lk, lr, lk + lr


# --------------------------------------------------------------------- schedule and total

@dataclass(frozen=True)
class MuSchedule:
    mu1: float
    mu2: float
    warm_epochs: int = 100
    total_epochs: int = 200

    def __post_init__(self):
        if not 0.0 <= self.mu1 <= self.mu2:
            raise ContractError("need 0 <= mu1 <= mu2")
        if not 0 < self.warm_epochs < self.total_epochs:
            raise ContractError("need 0 < warm_epochs < total_epochs")


def mu_at(epoch: float, schedule: MuSchedule) -> float:
    """Piecewise-linear: 0 -> mu1 over the warm-up, then mu1 -> mu2 until the last epoch."""
    if not 0 <= epoch <= schedule.total_epochs:
        raise ContractError(f"epoch {epoch} outside [0, {schedule.total_epochs}]")
    if epoch <= schedule.warm_epochs:
        return schedule.mu1 * epoch / schedule.warm_epochs
    frac = (epoch - schedule.warm_epochs) / (schedule.total_epochs - schedule.warm_epochs)
    return schedule.mu1 + (schedule.mu2 - schedule.mu1) * frac


@dataclass
class LossBreakdown:
    l_ar: float = 0.0
    l_oa: float = 0.0
    l_na: float = 0.0
    l_koleo: float = 0.0
    l_rank: float = 0.0
    l_sr: float = 0.0
    lambda1: float = 1.0
    lambda2: float = 1.0
    mu: float = 0.0
    total: float = 0.0
    per_instance_contrastive: np.ndarray = field(default_factory=lambda: np.empty(0))

    def __iadd__(self, other: "LossBreakdown") -> "LossBreakdown":
        for name in ("l_ar", "l_oa", "l_na", "l_koleo", "l_rank", "l_sr", "total"):
            setattr(self, name, getattr(self, name) + getattr(other, name))
        return self


def total_loss(l_ar: float, l_oa: float, l_na: float, l_koleo: float, l_rank: float,
               lambda1: float = 1.0, lambda2: float = 1.0, mu: float = 0.0,
               per_instance=None) -> LossBreakdown:
    l_sr = l_koleo + l_rank
    return LossBreakdown(
        l_ar=l_ar, l_oa=l_oa, l_na=l_na, l_koleo=l_koleo, l_rank=l_rank, l_sr=l_sr,
        lambda1=lambda1, lambda2=lambda2, mu=mu,
        total=l_ar + lambda1 * l_oa + lambda2 * l_na + mu * l_sr,
        per_instance_contrastive=np.empty(0) if per_instance is None else np.asarray(per_instance),
    )
