"""Training loop, batch objective assembly and scoring for the whole pipeline."""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import datakit
from .autoencoder import (AdamState, AutoencoderStack, adam_step, decode, encode,
                          init_params, mlp_backward, mlp_forward, save_checkpoint)
from .config import TrainConfig
from .detection import ScoreReport, consistency_scores, reconstruction_scores, total_score, write_metrics
from .errors import ConfigError, TrainingDivergence
from .imputation import (IMPUTED, LatentViews, fill_unimputed, impute_all,
                         imputation_quality, mean_imputation, write_imputation_csv, zero_imputation)
from .neighbors import NeighborIndex, RefreshPolicy, Space, build_knn
from .numeric import make_rng, pairwise_cosine
from .objectives import (LossBreakdown, MemoryBank, MuSchedule, draw_positive_ranks, koleo_loss, mu_at,
                         neighbor_alignment_loss, outlier_aware_contrastive, rank_loss,
                         select_potential_outliers, total_loss)

log = logging.getLogger(__name__)

TERMS = ("ar", "oa", "na", "koleo", "rank")

# rng stream tags derived from the master seed
_DATA, _INIT, _SHUFFLE, _RANK = 11, 12, 13, 14


# --------------------------------------------------------------------- data preparation

def prepare_dataset(config: TrainConfig) -> datakit.MultiViewDataset:
    """Synthesize or load, then normalize, inject outliers and mask views as configured.

    Loaded directories that already carry labels (or a mask) are not
    re-injected (or re-masked); directories marked normalized are not rescaled.
    """
    rng = make_rng(config.seed, _DATA)
    if config.dataset == "synth":
        ds = datakit.synthesize(config.synth_clusters, config.synth_dims, config.synth_n, config.synth_noise, rng)
        ds.types = None
        had_mask = False
    else:
        ds = datakit.load_dataset(config.dataset)
        had_mask = not ds.presence.all() or (Path(config.dataset) / "mask.csv").exists()
    if not ds.provenance.get("normalized"):
        ds = datakit.normalize(ds)
    if ds.types is None:
        ds = datakit.inject(ds, config.rho1, config.rho2, config.rho3, rng)
    if not had_mask:
        ds = datakit.apply_missing(ds, config.missing_rate, rng)
    ds.provenance["seed"] = config.seed
    return ds


# --------------------------------------------------------------------- batch objective

@dataclass
class BatchContext:
    """Everything a batch objective reads besides the parameters."""

    views: list[np.ndarray]
    presence: np.ndarray
    latents: LatentViews | None  # imputed latents are read only when ``imputing``
    neighbors: list[NeighborIndex | None]
    bank: MemoryBank | None
    tau: float
    k_pos: int
    k_neg: int
    rank_sign: str = "printed"
    na_tau: float | None = None
    imputing: bool = False
    epoch: int = 0


@dataclass
class BatchResult:
    breakdown: LossBreakdown
    grads: list[np.ndarray] | None
    pair_rows: np.ndarray  # global ids of rows with a latent in every view
    pair_latents: list[np.ndarray]  # their latents (forward values)


def _coefficients(lambda1, lambda2, mu):
    return {"ar": 1.0, "oa": lambda1, "na": lambda2, "koleo": mu, "rank": mu}


def batch_objective(stack: AutoencoderStack, ctx: BatchContext, rows, coef: dict,
                    positive_ranks=None, grad: bool = True) -> BatchResult:
    """Evaluate the weighted objective on one mini-batch and (optionally) its parameter gradients.

    ``coef`` maps each term in :data:`TERMS` to its weight. Terms with weight
    zero are still evaluated for logging but contribute no gradient.
    Latents of rows missing in a view come from ``ctx.latents`` (imputed,
    constant) and only when ``ctx.imputing`` is set.
    """
    rows = np.asarray(rows, dtype=np.int64)
    V = len(ctx.views)
    pres = ctx.presence
    has_imp = ctx.imputing and ctx.latents is not None

    def available(v, ids):
        ok = pres[ids, v].copy()
        if has_imp:
            ok |= ctx.latents.status[ids, v] == IMPUTED
        return ok

    avail = np.column_stack([available(v, rows) for v in range(V)])
    pair_rows = rows[avail.all(axis=1)]

    # rows whose neighbor lists are usable in each view
    nbr_ok = np.zeros((rows.size, V), dtype=bool)
    for v in range(V):
        idx = ctx.neighbors[v] if ctx.neighbors else None
        if idx is not None:
            nbr_ok[:, v] = idx.has(rows) & avail[:, v]
    nbr_lists = []
    for v in range(V):
        idx = ctx.neighbors[v] if ctx.neighbors else None
        lists = np.full((rows.size, idx.k if idx is not None else 0), -1, dtype=np.int64)
        if idx is not None and nbr_ok[:, v].any():
            lists[nbr_ok[:, v]] = idx.neighbors_of(rows[nbr_ok[:, v]])
            # a neighbor without a usable latent invalidates the row
            flat = lists[nbr_ok[:, v]]
            good = available(v, flat.ravel()).reshape(flat.shape).all(axis=1)
            sel = np.flatnonzero(nbr_ok[:, v])
            nbr_ok[sel[~good], v] = False
        nbr_lists.append(lists)

    # local latent tables: batch rows plus the neighbors they reference
    tables, locs, caches, enc_ids = [], [], [], []
    for v in range(V):
        need = [rows[avail[:, v]]]
        if nbr_ok[:, v].any():
            need.append(nbr_lists[v][nbr_ok[:, v]].ravel())
        ids = np.unique(np.concatenate(need))
        loc = np.full(pres.shape[0], -1, dtype=np.int64)
        loc[ids] = np.arange(ids.size)
        table = np.zeros((ids.size, stack.views[v].latent_dim))
        enc = ids[pres[ids, v]]
        z, cache = mlp_forward(stack.views[v].encoder, ctx.views[v][enc])
        table[loc[enc]] = z
        if has_imp:
            imp = ids[~pres[ids, v]]
            table[loc[imp]] = ctx.latents.latents[v][imp]
        tables.append(table)
        locs.append(loc)
        caches.append(cache)
        enc_ids.append(enc)

    d_tab = [np.zeros_like(t) for t in tables]
    dec_grads = []

    # reconstruction over batch rows present in each view
    l_ar = 0.0
    for v in range(V):
        pr = rows[pres[rows, v]]
        x = ctx.views[v][pr]
        xh, dcache = mlp_forward(stack.views[v].decoder, tables[v][locs[v][pr]])
        resid = xh - x
        l_ar += 0.5 * float(np.sum(resid * resid))
        if grad:
            gz, gdec = mlp_backward(stack.views[v].decoder, dcache, coef["ar"] * resid)
            np.add.at(d_tab[v], locs[v][pr], gz)
            dec_grads.append(gdec)

    # outlier-aware contrastive over rows with every view available
    l_oa = 0.0
    per_inst = np.empty(0)
    pair_lat = [t[l[pair_rows]] for t, l in zip(tables, locs)]
    if pair_rows.size:
        if grad and coef["oa"] != 0.0:
            l_oa, per_inst, gz = outlier_aware_contrastive(pair_lat, ctx.bank, ctx.tau, grad=True)
            for v in range(V):
                np.add.at(d_tab[v], locs[v][pair_rows], coef["oa"] * gz[v])
        else:
            l_oa, per_inst = outlier_aware_contrastive(pair_lat, ctx.bank, ctx.tau)

    # neighbor alignment over rows with neighbor lists in every view
    l_na = 0.0
    na_sel = nbr_ok.all(axis=1) & avail.all(axis=1)
    if na_sel.any():
        local_nbrs = [locs[v][nbr_lists[v][na_sel]] for v in range(V)]
        if grad and coef["na"] != 0.0:
            l_na, gt = neighbor_alignment_loss(tables, local_nbrs, ctx.na_tau, grad=True)
            for v in range(V):
                d_tab[v] += coef["na"] * gt[v]
        else:
            l_na = neighbor_alignment_loss(tables, local_nbrs, ctx.na_tau)

    # KoLeo within the batch; imputed rows join from the epoch after their creation
    l_koleo = 0.0
    for v in range(V):
        ok = pres[rows, v].copy()
        if has_imp:
            ok |= (ctx.latents.status[rows, v] == IMPUTED) & (ctx.latents.imputed_epoch[rows, v] < ctx.epoch)
        kr = rows[ok]
        if kr.size < 2:
            continue
        if grad and coef["koleo"] != 0.0:
            lk, (gk,) = koleo_loss([tables[v][locs[v][kr]]], grad=True)
            np.add.at(d_tab[v], locs[v][kr], coef["koleo"] * gk)
        else:
            lk = koleo_loss([tables[v][locs[v][kr]]])
        l_koleo += lk

    # rank preservation against sampled near positives and the k_neg-th neighbor
    l_rank = 0.0
    if positive_ranks is None:
        positive_ranks = [np.zeros(rows.size, dtype=np.int64)] * V
    for v in range(V):
        sel = nbr_ok[:, v]
        if not sel.any():
            continue
        args = dict(tables=[tables[v]], anchors=[locs[v][rows[sel]]],
                    neighbor_ids=[locs[v][nbr_lists[v][sel]]], k_pos=ctx.k_pos, k_neg=ctx.k_neg,
                    sign=ctx.rank_sign, positive_ranks=[positive_ranks[v][sel]])
        if grad and coef["rank"] != 0.0:
            lr, (gr,) = rank_loss(**args, grad=True)
            d_tab[v] += coef["rank"] * gr
        else:
            lr = rank_loss(**args)
        l_rank += lr

    bd = total_loss(l_ar, l_oa, l_na, l_koleo, l_rank, coef["oa"], coef["na"], coef["koleo"], per_inst)
    # general weighting; equals the breakdown identity when ar=1 and koleo=rank=mu
    bd.total = sum(coef[t] * val for t, val in zip(TERMS, (l_ar, l_oa, l_na, l_koleo, l_rank)))
    if not np.isfinite(bd.total):
        bad = [n for n in ("l_ar", "l_oa", "l_na", "l_koleo", "l_rank") if not np.isfinite(getattr(bd, n))]
        raise TrainingDivergence(",".join(bad) or "total", "loss")

    grads = None
    if grad:
        grads = []
        for v in range(V):
            genc_in = d_tab[v][locs[v][enc_ids[v]]]
            _, genc = mlp_backward(stack.views[v].encoder, caches[v], genc_in)
            grads.extend(genc)
            grads.extend(dec_grads[v])
        if not all(np.all(np.isfinite(g)) for g in grads):
            raise TrainingDivergence("+".join(t for t in TERMS if coef[t] != 0.0), "gradient")
    return BatchResult(bd, grads, pair_rows, pair_lat)


# --------------------------------------------------------------------- evaluation

def encode_all(stack: AutoencoderStack, ds: datakit.MultiViewDataset) -> list[np.ndarray]:
    out = []
    for v in range(ds.n_views):
        z = np.zeros((ds.n, stack.views[v].latent_dim))
        rows = ds.presence[:, v]
        z[rows] = encode(ds.views[v][rows], stack, v)
        out.append(z)
    return out


def completed_latents(stack: AutoencoderStack, ds: datakit.MultiViewDataset, k: int,
                      previous: LatentViews | None = None, epoch: int = 0) -> LatentViews:
    """Encode every observed view and CRT-impute the rest (mean fallback for deferrals)."""
    if previous is None:
        lat = LatentViews.from_observed(encode_all(stack, ds), ds.presence)
    else:
        lat = previous.copy()
        lat.refresh_observed(encode_all(stack, ds), ds.presence)
    impute_all(lat, k, epoch=epoch)
    fill_unimputed(lat)
    return lat


def score_dataset(stack: AutoencoderStack, ds: datakit.MultiViewDataset, config: TrainConfig,
                  previous: LatentViews | None = None) -> tuple[ScoreReport, LatentViews]:
    lat = completed_latents(stack, ds, config.k, previous)
    recon = [decode(lat.latents[v], stack, v) for v in range(ds.n_views)]
    s_r = reconstruction_scores(ds.views, recon, ds.presence)
    s_c = consistency_scores(lat.latents, config.tau)
    return total_score(s_r, s_c, ds.types), lat


def imputation_comparison(stack: AutoencoderStack, ds: datakit.MultiViewDataset, lat: LatentViews) -> dict:
    """Mean cosine between imputed and ground-truth latents for CRT, zero and mean imputation."""
    if ds.full_views is None:
        raise ConfigError("dataset has no ground-truth complete views")
    truth = [encode(x, stack, v) for v, x in enumerate(ds.full_views)]
    miss = ~ds.presence
    base = LatentViews.from_observed(encode_all(stack, ds), ds.presence)
    candidates = {
        "crt": lat.latents,
        "zero": zero_imputation(base, ds.presence),
        "mean": mean_imputation(base, ds.presence),
    }
    out = {}
    for name, zs in candidates.items():
        cos = [float(pairwise_cosine(zs[v][i], truth[v][i])[0, 0])
               for v in range(ds.n_views) for i in np.flatnonzero(miss[:, v])]
        out[name] = float(np.mean(cos)) if cos else float("nan")
    out["rows"] = imputation_quality(lat.latents, truth, ds.presence)
    return out


# --------------------------------------------------------------------- training loop

@dataclass
class RunResult:
    config: TrainConfig
    dataset: datakit.MultiViewDataset
    stack: AutoencoderStack
    adam: AdamState
    report: ScoreReport
    latents: LatentViews
    curves: list[dict] = field(default_factory=list)
    auc_history: list[tuple[int, float]] = field(default_factory=list)
    wall_clock: float = 0.0

    @property
    def auc(self) -> float | None:
        return self.report.overall_auc


CURVE_FIELDS = ["epoch", "l_ar", "l_oa", "l_na", "l_koleo", "l_rank", "l_sr", "lambda1", "lambda2", "mu",
                "total", "contrastive_inlier_mean", "contrastive_outlier_mean", "auc"]


class Trainer:
    def __init__(self, config: TrainConfig, dataset: datakit.MultiViewDataset | None = None):
        self.config = config
        self.ds = prepare_dataset(config) if dataset is None else dataset
        ds = self.ds
        if ds.complete_rows().size <= config.k:
            raise ConfigError("complete subset is too small for the neighbor count K")
        widths = [list(config.widths)] * ds.n_views
        self.stack = init_params(ds.dims, widths, make_rng(config.seed, _INIT))
        self.adam = AdamState.for_stack(self.stack, config.learning_rate)
        self.bank = MemoryBank(ds.n_views, config.bank_capacity)
        self.policy = RefreshPolicy(config.knn_switch_epoch, config.knn_refresh_interval)
        self.schedule = MuSchedule(config.mu1, config.mu2, config.warm_epochs, config.total_epochs)
        self.latents = LatentViews.from_observed(encode_all(self.stack, ds), ds.presence)
        self.neighbors: list[NeighborIndex | None] = [None] * ds.n_views
        self._nbr_epoch: int | None = None
        self._nbr_space: Space | None = None
        self.curves: list[dict] = []
        self.auc_history: list[tuple[int, float]] = []

    def weights(self, epoch: int) -> dict:
        c = self.config
        mu = mu_at(epoch, self.schedule) if c.use_sr else 0.0
        return _coefficients(c.lambda1 if c.use_oa else 0.0, c.lambda2 if c.use_na else 0.0, mu)

    def _rebuild_neighbors(self, epoch: int, imputing: bool) -> None:
        ds, c = self.ds, self.config
        space = self.policy.space(epoch)
        if space is Space.LATENT:
            self.latents.refresh_observed(encode_all(self.stack, ds), ds.presence)
        for v in range(ds.n_views):
            if space is Space.INPUT:
                self.neighbors[v] = build_knn(ds.views[v], np.flatnonzero(ds.presence[:, v]), c.k, space)
            else:
                ok = ds.presence[:, v].copy()
                if imputing:
                    ok |= self.latents.status[:, v] == IMPUTED
                self.neighbors[v] = build_knn(self.latents.latents[v], np.flatnonzero(ok), c.k, space)
        self._nbr_epoch, self._nbr_space = epoch, space

    def train_epoch(self, epoch: int) -> dict:
        ds, c = self.ds, self.config
        coef = self.weights(epoch)
        imputing = epoch >= c.impute_start_epoch
        if self.policy.rebuild_due(epoch, self._nbr_epoch, self._nbr_space):
            self._rebuild_neighbors(epoch, imputing)
        if imputing:
            self.latents.refresh_observed(encode_all(self.stack, ds), ds.presence)
            impute_all(self.latents, c.k, epoch=epoch)
            scope = np.flatnonzero(ds.presence.any(axis=1))
        else:
            scope = ds.complete_rows()
        ctx = BatchContext(ds.views, ds.presence, self.latents, self.neighbors, self.bank, c.tau,
                           c.k_pos, c.k_neg, c.rank_sign, c.tau if c.na_temperature else None,
                           imputing, epoch)
        order = make_rng(c.seed, _SHUFFLE, epoch).permutation(scope)
        rank_rng = make_rng(c.seed, _RANK, epoch)
        acc = LossBreakdown(lambda1=coef["oa"], lambda2=coef["na"], mu=coef["koleo"])
        per_in, per_out = [], []
        types = ds.labels_or_zeros()
        for b, start in enumerate(range(0, order.size, c.batch_size)):
            rows = order[start:start + c.batch_size]
            ranks = [draw_positive_ranks(rows.size, c.k_pos, rank_rng) for _ in range(ds.n_views)]
            res = batch_objective(self.stack, ctx, rows, coef, ranks)
            adam_step(self.stack, res.grads, self.adam)
            acc += res.breakdown
            if res.pair_rows.size:
                pi = res.breakdown.per_instance_contrastive
                t = types[res.pair_rows]
                per_in.append(pi[t == 0])
                per_out.append(pi[t > 0])
                complete = ds.presence[res.pair_rows].all(axis=1)
                if complete.sum() >= 1:
                    cz = [z[complete] for z in res.pair_latents]
                    sel = select_potential_outliers(cz, c.eta)
                    self.bank.push(cz, sel, epoch=epoch, batch=b, instance_ids=res.pair_rows[complete])
        row = {
            "epoch": epoch, "l_ar": acc.l_ar, "l_oa": acc.l_oa, "l_na": acc.l_na, "l_koleo": acc.l_koleo,
            "l_rank": acc.l_rank, "l_sr": acc.l_sr, "lambda1": coef["oa"], "lambda2": coef["na"],
            "mu": coef["koleo"], "total": acc.total,
            "contrastive_inlier_mean": _mean(per_in), "contrastive_outlier_mean": _mean(per_out), "auc": "",
        }
        self.curves.append(row)
        return row

    def evaluate(self) -> tuple[ScoreReport, LatentViews]:
        return score_dataset(self.stack, self.ds, self.config, self.latents)

    def fit(self, progress=None) -> RunResult:
        c = self.config
        t0 = time.perf_counter()
        labelled = self.ds.types is not None and np.any(self.ds.types > 0)
        for epoch in range(c.total_epochs):
            row = self.train_epoch(epoch)
            last = epoch == c.total_epochs - 1
            if labelled and ((epoch + 1) % c.eval_every == 0 or last):
                report, _ = self.evaluate()
                row["auc"] = report.overall_auc
                self.auc_history.append((epoch, report.overall_auc))
            if progress is not None:
                progress(row)
            log.debug("epoch %d total %.4f auc %s", epoch, row["total"], row["auc"])
        report, lat = self.evaluate()
        return RunResult(c, self.ds, self.stack, self.adam, report, lat, self.curves, self.auc_history,
                         time.perf_counter() - t0)


def _mean(chunks) -> float | str:
    vals = np.concatenate(chunks) if chunks else np.empty(0)
    return float(vals.mean()) if vals.size else ""


def write_artifacts(result: RunResult, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    c = result.config
    result.report.write_scores(out / "scores.csv")
    result.report.write_histogram(out / "histogram.csv")
    with open(out / "loss_curves.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, CURVE_FIELDS, lineterminator="\n")
        w.writeheader()
        for row in result.curves:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    (out / "config.txt").write_text(c.dumps())
    metrics = {
        **result.report.metrics(),
        "config_hash": c.hash(),
        "seed": c.seed,
        "epochs": c.total_epochs,
        "wall_clock_seconds": round(result.wall_clock, 3),
        "auc_history": [[e, a] for e, a in result.auc_history],
    }
    ds = result.dataset
    if ds.full_views is not None and not ds.presence.all():
        cmp = imputation_comparison(result.stack, ds, result.latents)
        metrics["imputation_cosine"] = {k: cmp[k] for k in ("crt", "zero", "mean")}
        write_imputation_csv(out / "imputation.csv", cmp["rows"])
    write_metrics(out / "metrics.json", metrics)
    save_checkpoint(out / "checkpoint.npz", result.stack, result.adam, c.hash(),
                    extra={"epochs": c.total_epochs, "seed": c.seed})


def run_experiment(config: TrainConfig, out_dir=None, dataset=None, progress=None) -> RunResult:
    result = Trainer(config, dataset).fit(progress)
    if out_dir is not None:
        write_artifacts(result, out_dir)
    return result


def sweep(config: TrainConfig, param: str, values, out_path=None) -> list[tuple[float, float]]:
    """One run per grid value (shared seed); rows sorted by parameter value."""
    rows = []
    for value in sorted(values):
        res = run_experiment(config.replace(**{param: value}))
        rows.append((value, res.auc))
    if out_path is not None:
        with open(out_path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([param, "auc"])
            for value, a in rows:
                w.writerow([value, "" if a is None else repr(a)])
    return rows
