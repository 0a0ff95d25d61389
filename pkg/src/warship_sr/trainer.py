"""Mini-batch SGD with momentum, patience-driven lr decay, early stop.

The loop is deterministic for a fixed (seed, config, dataset): the
validation split and every epoch's shuffle come from counter-derived
sub-seeds of the run seed, and the default sequential mode reduces
gradients in a fixed order. With threads > 1 the mini-batch is split
into contiguous chunks whose backward passes run concurrently; the
chunk-order reduction keeps runs repeatable, though single-precision
sums may differ from the sequential mode by tiny rounding amounts.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import losses as L
from .model import Model, PARAM_NAMES, backward, forward, infer
from .rng import Xoshiro256, derive_seeds
from .tensor_ops import ConfigurationError


class TrainingError(RuntimeError):
    pass


class TrainingDivergedError(TrainingError):
    """Raised on non-finite loss or gradients.

    Carries the best model seen so far (plus history) so callers can
    preserve the last good checkpoint before exiting.
    """

    def __init__(self, message, best_model=None, history=None):
        super().__init__(message)
        self.best_model = best_model
        self.history = history


@dataclass(frozen=True)
class TrainConfig(object):
    batch_size: int = 64
    lr_initial: float = 0.01
    lr_decay_factor: float = 10.0
    patience_epochs: int = 5
    lr_stop_threshold: float = 1e-6
    momentum: float = 0.9
    clip_tau: float = 0.01
    seed: int = 0
    val_fraction: float = 0.05
    max_epochs: int = 10000
    threads: int = 1

    def validate(self) -> None:
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.lr_initial <= self.lr_stop_threshold:
            raise ConfigurationError("lr_initial must exceed lr_stop_threshold")
        if self.lr_decay_factor <= 1.0:
            raise ConfigurationError("lr_decay_factor must be > 1")
        if self.patience_epochs < 1:
            raise ConfigurationError("patience_epochs must be >= 1")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigurationError("momentum must be in [0, 1)")
        if self.clip_tau < 0.0:
            raise ConfigurationError("clip_tau must be >= 0")
        if not 0.0 < self.val_fraction < 0.5:
            raise ConfigurationError("val_fraction must be in (0, 0.5)")
        if self.max_epochs < 1:
            raise ConfigurationError("max_epochs must be >= 1")
        if self.threads < 1:
            raise ConfigurationError("threads must be >= 1")


@dataclass
class EpochRecord(object):
    epoch: int
    lr: float
    train_l1: float
    train_l2: float
    train_l3: float
    train_total: float
    val_error: float
    wall_time: float  # in-memory only, never written to the log


@dataclass
class TrainHistory(object):
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)


def format_log_line(rec: EpochRecord) -> str:
    """Fixed field order: epoch lr l1 l2 l3 total val.

    Floats are written with repr (shortest round-trip form), so equal
    values always produce equal text. Wall time is deliberately absent.
    """
    return "%d %s %s %s %s %s %s" % (
        rec.epoch,
        repr(float(rec.lr)),
        repr(float(rec.train_l1)),
        repr(float(rec.train_l2)),
        repr(float(rec.train_l3)),
        repr(float(rec.train_total)),
        repr(float(rec.val_error)),
    )


def sgd_step(params, grads, velocity, lr: float, cfg: TrainConfig) -> None:
    """In-place momentum update: v <- momentum*v - lr*g; theta <- theta + v.

    When clip_tau > 0, each gradient element is first clipped into
    [-clip_tau/lr, +clip_tau/lr], bounding the raw step magnitude by
    clip_tau + |momentum carry| however small lr gets.
    """
    bound = cfg.clip_tau / lr if cfg.clip_tau > 0 else None
    for name in PARAM_NAMES:
        gw, gb = grads[name]
        if not np.all(np.isfinite(gw)) or (gb is not None and not np.all(np.isfinite(gb))):
            raise TrainingDivergedError("non-finite gradient in entry '%s'" % name)
        vw, vb = velocity[name]
        if bound is not None:
            gw = np.clip(gw, -bound, bound)
        vw *= cfg.momentum
        vw -= (lr * gw).astype(vw.dtype, copy=False)
        params[name].weights += vw
        if gb is not None:
            if bound is not None:
                gb = np.clip(gb, -bound, bound)
            vb *= cfg.momentum
            vb -= (lr * gb).astype(vb.dtype, copy=False)
            params[name].bias += vb


def zero_velocity(params) -> dict:
    out = {}
    for name in PARAM_NAMES:
        e = params[name]
        out[name] = (
            np.zeros_like(e.weights),
            None if e.bias is None else np.zeros_like(e.bias),
        )
    return out


def lr_schedule_update(
    history: TrainHistory, current_lr: float, cfg: TrainConfig
) -> tuple[float, bool]:
    """Patience rule over the recorded validation errors.

    An epoch "improves" when its validation error is strictly below
    every earlier one. Once patience_epochs consecutive epochs at the
    current lr have passed without an improvement, the lr divides by
    lr_decay_factor; the counter then restarts at the new lr. Stop is
    signalled when the (possibly just lowered) lr falls strictly below
    lr_stop_threshold.
    """
    recs = history.records
    if not recs:
        raise ConfigurationError("history must be non-empty")
    last = len(recs) - 1
    first_at_lr = last
    while first_at_lr > 0 and recs[first_at_lr - 1].lr == current_lr:
        first_at_lr -= 1
    best = np.inf
    last_improvement = -1
    for i, rec in enumerate(recs):
        if rec.val_error < best:
            best = rec.val_error
            last_improvement = i
    anchor = max(last_improvement, first_at_lr - 1)
    new_lr = current_lr
    if last - anchor >= cfg.patience_epochs:
        new_lr = current_lr / cfg.lr_decay_factor
    return new_lr, new_lr < cfg.lr_stop_threshold


def _chunk_slices(n: int, parts: int) -> list[slice]:
    parts = min(parts, n)
    base, extra = divmod(n, parts)
    out, start = [], 0
    for i in range(parts):
        size = base + (1 if i < extra else 0)
        out.append(slice(start, start + size))
        start += size
    return out


def _batch_grads(model: Model, x, y, alpha: float, beta: float, pool):
    """Loss breakdown and parameter gradients for one mini-batch.

    The batch is processed in contiguous chunks (one when sequential).
    Output-side gradients are computed once on the concatenated outputs
    so every chunk sees the full-batch normalization; parameter
    gradients are reduced in chunk order.
    """
    slices = _chunk_slices(x.shape[0], pool._max_workers if pool else 1)
    if pool is None or len(slices) == 1:
        traces = [forward(model, x[s]) for s in slices]
    else:
        traces = list(pool.map(lambda s: forward(model, x[s]), slices))
    final = np.concatenate([t.final_image for t in traces], axis=0)
    big_r = model.config.recurrences
    inters = [
        np.concatenate([t.intermediate_images[r] for t in traces], axis=0)
        for r in range(big_r)
    ]
    breakdown = L.composite_loss(model, y, final, inters, alpha, beta)
    gf, gis = L.composite_grads(y, final, inters, alpha)

    def back(i):
        s = slices[i]
        return backward(model, traces[i], gf[s], [g[s] for g in gis])

    if pool is None or len(slices) == 1:
        parts = [back(i) for i in range(len(slices))]
    else:
        parts = list(pool.map(back, range(len(slices))))
    grads = parts[0]
    for part in parts[1:]:
        for name in PARAM_NAMES:
            gw, gb = grads[name]
            pw, pb = part[name]
            gw += pw
            if gb is not None:
                gb += pb
    dec = L.decay_grads(model, beta)
    for name in PARAM_NAMES:
        gw, gb = grads[name]
        grads[name] = (gw + dec[name], gb)
    return breakdown, grads


def validation_error(model: Model, x, y, batch_size: int) -> float:
    """Mean of per-batch final-image L2 terms over the held-out split."""
    total = 0.0
    count = 0
    for start in range(0, x.shape[0], batch_size):
        xb = x[start:start + batch_size]
        final, _ = infer(model, xb)
        total += L.final_loss(y[start:start + batch_size], final) * xb.shape[0]
        count += xb.shape[0]
    return total / count


def split_indices(n: int, val_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic train/val index split; depends only on (n, seed)."""
    perm = Xoshiro256(seed).permutation(n)
    val_count = max(1, int(n * val_fraction))
    val = np.sort(perm[:val_count])
    tr = np.sort(perm[val_count:])
    return tr, val


@dataclass
class TrainResult(object):
    final_model: Model
    best_model: Model
    history: TrainHistory


def train(
    model: Model,
    dataset,
    tcfg: TrainConfig,
    lcfg: L.LossConfig,
    on_epoch=None,
) -> TrainResult:
    """Run the full loop; dataset must expose .inputs and .targets.

    on_epoch, when given, is called with each EpochRecord after it is
    appended (the cli uses this to stream the log).
    """
    tcfg.validate()
    lcfg.validate()
    inputs, targets = dataset.inputs, dataset.targets
    n = inputs.shape[0]
    if n == 0:
        raise TrainingError("dataset is empty")
    split_seed, shuffle_seed = derive_seeds(tcfg.seed, 2)
    train_idx, val_idx = split_indices(n, tcfg.val_fraction, split_seed)
    if train_idx.size == 0:
        raise TrainingError("validation split leaves no training samples")
    shuffler = Xoshiro256(shuffle_seed)
    pool = ThreadPoolExecutor(max_workers=tcfg.threads) if tcfg.threads > 1 else None

    history = TrainHistory()
    velocity = zero_velocity(model.params)
    lr = tcfg.lr_initial
    best_val = np.inf
    best_model = model.copy()
    try:
        for epoch in range(tcfg.max_epochs):
            t0 = time.monotonic()
            alpha = L.alpha_at_epoch(lcfg, epoch)
            order = train_idx.copy()
            shuffler.shuffle(order)
            sum_l1 = sum_l2 = sum_l3 = 0.0
            steps = 0
            for start in range(0, order.size, tcfg.batch_size):
                idx = order[start:start + tcfg.batch_size]
                bd, grads = _batch_grads(
                    model, inputs[idx], targets[idx], alpha, lcfg.beta, pool
                )
                if not np.isfinite(bd.total):
                    raise TrainingDivergedError(
                        "non-finite loss at epoch %d" % epoch,
                        best_model=best_model,
                        history=history,
                    )
                sgd_step(model.params, grads, velocity, lr, tcfg)
                sum_l1 += bd.recurrence
                sum_l2 += bd.final
                sum_l3 += bd.decay
                steps += 1
            l1m, l2m, l3m = sum_l1 / steps, sum_l2 / steps, sum_l3 / steps
            total = alpha * l1m + (1.0 - alpha) * l2m + l3m
            val = validation_error(model, inputs[val_idx], targets[val_idx], tcfg.batch_size)
            if not np.isfinite(val):
                raise TrainingDivergedError(
                    "non-finite validation error at epoch %d" % epoch,
                    best_model=best_model,
                    history=history,
                )
            rec = EpochRecord(
                epoch, lr, l1m, l2m, l3m, total, val, time.monotonic() - t0
            )
            history.records.append(rec)
            if on_epoch is not None:
                on_epoch(rec)
            if val < best_val:
                best_val = val
                best_model = model.copy()
            lr, stop = lr_schedule_update(history, lr, tcfg)
            if stop:
                break
    except TrainingDivergedError as exc:
        if exc.best_model is None:
            exc.best_model = best_model
            exc.history = history
        raise
    finally:
        if pool is not None:
            pool.shutdown(wait=True)
    return TrainResult(model, best_model, history)
