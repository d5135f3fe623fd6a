"""Central finite-difference check of every batch-objective gradient.

The test problem is deliberately tiny: two views, encoder widths 5-3, a
batch of six rows (one of which carries an imputed view), a non-empty
memory bank and input-space neighbor tables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autoencoder import init_params
from .imputation import IMPUTED, OBSERVED, LatentViews
from .neighbors import Space, build_knn
from .numeric import make_rng
from .objectives import MemoryBank, draw_positive_ranks
from .training import TERMS, BatchContext, batch_objective

_FIELDS = {"ar": "l_ar", "oa": "l_oa", "na": "l_na", "koleo": "l_koleo", "rank": "l_rank"}
# weights used when checking the assembled total
TOTAL_COEF = {"ar": 1.0, "oa": 0.7, "na": 1.3, "koleo": 0.4, "rank": 0.4}


@dataclass
class GradCheckResult:
    seed: int
    term: str
    rel_error: float
    analytic_norm: float
    fd_norm: float

    def ok(self, tol: float) -> bool:
        return self.rel_error <= tol


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), floor))


def _problem(seed: int, n: int = 14, dims=(4, 5), widths=(5, 3), batch: int = 6, k: int = 3):
    rng = make_rng(seed, 21)
    views = [rng.random((n, d)) for d in dims]
    presence = np.ones((n, 2), dtype=bool)
    presence[n - 1, 1] = False
    views[1][n - 1] = 0.0
    stack = init_params(list(dims), [list(widths)] * 2, rng)
    # zero biases can give an exactly-zero latent (all hidden units off), which
    # sits on a ReLU kink and inside the normalization clamp; jitter them away
    for p in stack.parameters()[1::2]:
        p[...] = 0.1 * rng.standard_normal(p.shape)

    lat = LatentViews([rng.standard_normal((n, widths[-1])) for _ in dims],
                      np.where(presence, OBSERVED, 0).astype(np.int8), np.full(presence.shape, -1))
    lat.status[n - 1, 1] = IMPUTED
    lat.imputed_epoch[n - 1, 1] = 0

    neighbors = [build_knn(views[v], np.flatnonzero(presence[:, v]), k, Space.INPUT, n) for v in range(2)]
    bank = MemoryBank(2, 8).push([rng.standard_normal((4, widths[-1])) for _ in dims], np.arange(4))
    rows = np.append(rng.choice(n - 1, size=batch - 1, replace=False), n - 1)
    ranks = [draw_positive_ranks(rows.size, 2, rng) for _ in dims]
    ctx = BatchContext(views, presence, lat, neighbors, bank, tau=0.5, k_pos=2, k_neg=3,
                       imputing=True, epoch=1)
    return stack, ctx, rows, ranks


def _finite_differences(stack, contexts, rows, ranks, h: float) -> np.ndarray:
    """FD of every term for each context, shaped (n_ctx, n_terms, n_params)."""
    params = stack.parameters()
    n_par = sum(p.size for p in params)
    out = np.empty((len(contexts), len(TERMS), n_par))
    zero = dict.fromkeys(TERMS, 0.0)

    def values():
        res = []
        for ctx in contexts:
            bd = batch_objective(stack, ctx, rows, zero, ranks, grad=False).breakdown
            res.append([getattr(bd, _FIELDS[t]) for t in TERMS])
        return np.array(res)

    col = 0
    for p in params:
        flat = p.reshape(-1)
        for j in range(flat.size):
            keep = flat[j]
            flat[j] = keep + h
            up = values()
            flat[j] = keep - h
            down = values()
            flat[j] = keep
            out[:, :, col] = (up - down) / (2.0 * h)
            col += 1
    return out


def _flat(grads) -> np.ndarray:
    return np.concatenate([g.ravel() for g in grads])


def check_seed(seed: int, h: float = 1e-5, **problem) -> list[GradCheckResult]:
    """``problem`` overrides the test-problem shape (n, dims, widths, batch, k)."""
    stack, ctx, rows, ranks = _problem(seed, **problem)
    triplet = BatchContext(**{**ctx.__dict__, "rank_sign": "triplet"})
    fd = _finite_differences(stack, [ctx, triplet], rows, ranks, h)
    results = []

    def record(name, coef, c, numeric):
        res = batch_objective(stack, c, rows, coef, ranks, grad=True)
        analytic = _flat(res.grads)
        results.append(GradCheckResult(seed, name, relative_error(analytic, numeric),
                                       float(np.linalg.norm(analytic)), float(np.linalg.norm(numeric))))

    for t_idx, term in enumerate(TERMS):
        coef = {t: float(t == term) for t in TERMS}
        name = "rank_printed" if term == "rank" else term
        record(name, coef, ctx, fd[0, t_idx])
    rank_idx = TERMS.index("rank")
    record("rank_triplet", {t: float(t == "rank") for t in TERMS}, triplet, fd[1, rank_idx])
    weights = np.array([TOTAL_COEF[t] for t in TERMS])
    record("total_printed", TOTAL_COEF, ctx, weights @ fd[0])
    record("total_triplet", TOTAL_COEF, triplet, weights @ fd[1])
    return results


def run_gradcheck(seeds=range(10), h: float = 1e-5) -> list[GradCheckResult]:
    out = []
    for s in seeds:
        out.extend(check_seed(int(s), h))
    return out
