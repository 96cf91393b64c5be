"""Training loop, scoring report and rank metrics."""

import csv
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from . import autodiff as ad
from . import bandit
from .errors import ArgumentError, ConsistencyError, NumericError, UndefinedMetricError
from .model import GraphData, ModelConfig, ModelParams, forward
from .pool import STRATEGIES, PoolConfig, build_pool
from .rng import stream

log = logging.getLogger(__name__)

LR_GRID = (5e-2, 1e-2, 5e-3, 1e-3)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 300
    lr: float = 5e-3
    seed: int = 0
    # model
    hidden: int = 64
    mask_rate: float = 0.03
    alpha: float = 0.5
    lam: float = 1e-5
    decoder: str = "gcn"
    topo_batch: int = 0
    # bandit
    p_min: float = 0.05
    delta1: float = 1.0
    delta2: float = 0.1
    T: int = 5
    U: int = 3
    freeze_bandit: bool = False
    # neighbor pool
    sample_size: int = 20
    knn_k: int = 10
    teleport: float = 0.15
    ppr_top: int = 10
    ppr_tol: float = 1e-5
    strategies: tuple = STRATEGIES

    def __post_init__(self):
        if self.epochs < self.U or self.U < 0:
            raise ArgumentError(f"epochs ({self.epochs}) must be >= warm-up U ({self.U})")
        if not self.lr > 0:
            raise ArgumentError(f"learning rate must be positive, got {self.lr}")
        if self.T < 1:
            raise ArgumentError("update interval T must be >= 1")
        object.__setattr__(self, "strategies", tuple(self.strategies))

    def model_config(self):
        return ModelConfig(self.hidden, self.mask_rate, self.alpha, self.lam, self.decoder, self.topo_batch)

    def pool_config(self):
        return PoolConfig(self.knn_k, self.teleport, self.ppr_top, self.ppr_tol, self.sample_size, tuple(self.strategies))

    def to_dict(self):
        d = asdict(self)
        d["strategies"] = list(self.strategies)
        return d

    @classmethod
    def from_dict(cls, values):
        known = {f.name: f for f in fields(cls)}
        kwargs = {}
        for key, val in values.items():
            if key not in known:
                raise KeyError(key)
            kwargs[key] = tuple(val) if key == "strategies" else val
        return cls(**kwargs)


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    loss_topo: float
    loss_attr: float
    probs: np.ndarray
    rewards: np.ndarray
    seconds: float
    auc: float = float("nan")


@dataclass
class ScoreReport:
    scores: np.ndarray
    auc: float = float("nan")
    ap: float = float("nan")
    history: list = field(default_factory=list)
    probs: np.ndarray = None
    masked: np.ndarray = None
    embeddings: np.ndarray = None
    neighborhoods: tuple = None
    strategies: tuple = STRATEGIES

    def best_epoch(self):
        """Epoch with the highest monitored AUC (diagnostic only)."""
        aucs = [rec.auc for rec in self.history]
        if not aucs or np.all(np.isnan(aucs)):
            return None
        return int(np.nanargmax(aucs))

    def write_scores(self, path, labels=None):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["node", "score"] + (["label"] if labels is not None else []))
            for i, s in enumerate(self.scores):
                row = [i, repr(float(s))]
                if labels is not None:
                    row.append(int(labels[i]))
                w.writerow(row)

    def write_history(self, path):
        k = len(self.strategies)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(
                ["epoch", "loss", "loss_topo", "loss_attr"]
                + [f"p_{s}" for s in self.strategies]
                + [f"r_{s}" for s in self.strategies]
                + ["seconds", "auc"]
            )
            for rec in self.history:
                rewards = rec.rewards if rec.rewards is not None else np.full(k, np.nan)
                w.writerow(
                    [rec.epoch, repr(rec.loss), repr(rec.loss_topo), repr(rec.loss_attr)]
                    + [repr(float(v)) for v in rec.probs]
                    + [repr(float(v)) for v in rewards]
                    + [f"{rec.seconds:.6f}", repr(rec.auc)]
                )

    def summary(self):
        return {
            "auc": None if np.isnan(self.auc) else self.auc,
            "ap": None if np.isnan(self.ap) else self.ap,
            "final_probs": dict(zip(self.strategies, map(float, self.probs))) if self.probs is not None else None,
            "best_auc_epoch": self.best_epoch(),
            "epochs": len(self.history),
        }


class TrainingAborted(NumericError):
    """Numeric failure during training; carries the epoch and last good parameters."""

    def __init__(self, message, epoch, last_good):
        super().__init__(message)
        self.epoch = epoch
        self.last_good = last_good


# ------------------------------------------------------------------ metrics


def _check_labels(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ConsistencyError(f"{scores.size} scores vs {labels.size} labels")
    pos = labels == 1
    if pos.all() or not pos.any():
        raise UndefinedMetricError("labels must contain both classes")
    return scores, pos


def auc(scores, labels):
    """Mann-Whitney statistic: P(anomaly score > normal score), ties count one half."""
    from scipy.stats import rankdata

    scores, pos = _check_labels(scores, labels)
    ranks = rankdata(scores)
    n1 = int(pos.sum())
    n0 = pos.size - n1
    return float((ranks[pos].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


def ap(scores, labels):
    """Average precision over the descending-score sweep, ties by node index."""
    scores, pos = _check_labels(scores, labels)
    order = np.argsort(-scores, kind="stable")
    hits = pos[order]
    tp = np.cumsum(hits)
    precision = tp / np.arange(1, hits.size + 1)
    return float(precision[hits].sum() / hits.sum())


# ------------------------------------------------------------------ training


def _neighborhood_pair(pool):
    return pool.sel_ptr.copy(), pool.indices[pool.sel_pos]


def train(g, cfg=TrainConfig(), monitor=None):
    """Unsupervised training; labels on ``g`` are dropped before anything runs.

    ``monitor(epoch, scores)`` may return a diagnostic AUC that is stored
    in the history; it never influences training.
    """
    g = g.without_labels()
    mcfg = cfg.model_config()
    pool = build_pool(g, cfg.pool_config(), stream(cfg.seed, "pool"))
    state = bandit.init_bandit(pool.K, cfg.p_min, cfg.delta1, cfg.delta2, cfg.T, cfg.U)
    params = ModelParams.init(g.d, mcfg, stream(cfg.seed, "init"))
    data = GraphData.from_graph(g, dense=not (mcfg.topo_batch and mcfg.topo_batch < g.n))
    opt = ad.OptimizerState(lr=cfg.lr)
    sampling = stream(cfg.seed, "sampling")
    history = []
    last_good = params.snapshot()
    for epoch in range(cfg.epochs):
        t0 = time.perf_counter()
        try:
            # overflow surfaces as NumericError from the finiteness checks
            with np.errstate(over="ignore", invalid="ignore"):
                phi = pool.mixture(state.p)
                pool.sample(phi, cfg.sample_size, sampling)
                out = forward(data, params, mcfg, _neighborhood_pair(pool), sampling)
                ad.backward(out.loss, params.tensors())
                ad.adam_step(params.tensors(), opt)
                rewards = None
                if not cfg.freeze_bandit and bandit.due(state, epoch):
                    rewards = bandit.reward(state, pool, out.scores, phi)
                    state = bandit.step(state, rewards, g.n)
            state = replace(state, t=epoch + 1)
            for p in params.tensors():
                if not np.all(np.isfinite(p.data)):
                    raise NumericError(f"non-finite parameter {p.name}")
        except NumericError as exc:
            raise TrainingAborted(f"epoch {epoch}: {exc}", epoch, last_good) from exc
        last_good = params.snapshot()
        rec = EpochRecord(
            epoch, float(out.loss.data), out.loss_topo, out.loss_attr,
            state.p.copy(), rewards, time.perf_counter() - t0,
        )
        if monitor is not None:
            value = monitor(epoch, out.scores)
            if value is not None:
                rec.auc = float(value)
        history.append(rec)
        log.debug("epoch %d loss %.6g p %s", epoch, rec.loss, np.round(state.p, 4))

    neighborhoods = _neighborhood_pair(pool) if pool.sel_ptr is not None else None
    if neighborhoods is None:
        pool.sample(pool.mixture(state.p), cfg.sample_size, sampling)
        neighborhoods = _neighborhood_pair(pool)
    final = forward(data, params, mcfg, neighborhoods, sampling)
    report = ScoreReport(
        scores=final.scores,
        history=history,
        probs=state.p.copy(),
        masked=final.masked,
        embeddings=final.h.data,
        neighborhoods=neighborhoods,
        strategies=tuple(cfg.strategies),
    )
    return params, report


def evaluate(g, params, cfg=TrainConfig(), neighborhoods=None, probs=None):
    """Score a labelled graph with fixed parameters and attach AUC/AP.

    Neighborhoods default to a fresh draw from the mixture at ``probs``
    (uniform if omitted) using the sampling stream of ``cfg.seed``.
    """
    if g.labels is None:
        raise UndefinedMetricError("evaluation needs labels")
    mcfg = cfg.model_config()
    rng = stream(cfg.seed, "sampling")
    if neighborhoods is None:
        pool = build_pool(g.without_labels(), cfg.pool_config(), stream(cfg.seed, "pool"))
        p = np.full(pool.K, 1.0 / pool.K) if probs is None else np.asarray(probs)
        pool.sample(pool.mixture(p), cfg.sample_size, rng)
        neighborhoods = _neighborhood_pair(pool)
    data = GraphData.from_graph(g, dense=not (mcfg.topo_batch and mcfg.topo_batch < g.n))
    out = forward(data, params, mcfg, neighborhoods, rng)
    return ScoreReport(
        scores=out.scores,
        auc=auc(out.scores, g.labels),
        ap=ap(out.scores, g.labels),
        probs=None if probs is None else np.asarray(probs),
        masked=out.masked,
        embeddings=out.h.data,
        neighborhoods=neighborhoods,
        strategies=tuple(cfg.strategies),
    )


def fit(g, cfg=TrainConfig(), track_auc=True):
    """Train, then attach AUC/AP when ``g`` carries labels."""
    labels = g.labels
    scorable = labels is not None and labels.any() and not labels.all()
    monitor = (lambda epoch, scores: auc(scores, labels)) if scorable and track_auc else None
    params, report = train(g, cfg, monitor)
    if scorable:
        report.auc = auc(report.scores, labels)
        report.ap = ap(report.scores, labels)
    return params, report


def write_summary(path, report, cfg, extra=None):
    from . import version_string

    payload = report.summary()
    payload.update({"config": cfg.to_dict(), "seed": cfg.seed, "version": version_string()})
    if extra:
        payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
