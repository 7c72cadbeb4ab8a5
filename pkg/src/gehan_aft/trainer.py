"""Mini-batch training of the predictor under the Gehan loss with AdamWR.

Records are first put in a content-determined order, then shuffled each
epoch from ``seed``, so results do not depend on input row order. The
validation split is scored after every epoch with the full-split loss, but a
checkpoint is only taken at warm-restart cycle boundaries (and the last
epoch), where the annealed learning rate makes the iterate meaningful.
"""

import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .dataset import canonical_order
from .network import NetworkConfig, NetworkModel
from .optim import AdamWR, OptimConfig, restart_epochs
from .rankloss import gehan_loss, gehan_loss_and_gradient

log = logging.getLogger(__name__)

LR_GRID = (1e-2, 3e-3, 1e-3, 3e-4)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 1024
    max_epochs: int = 63
    early_stop_patience: int = 2
    seed: int = 0
    optim: OptimConfig = field(default_factory=OptimConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 0 or self.early_stop_patience < 1:
            raise ValueError("batch_size >= 1, max_epochs >= 0, early_stop_patience >= 1 required")
        if self.network.use_batch_norm and self.network.num_layers and self.batch_size < 2:
            raise ValueError("batch-norm needs batch_size >= 2")

    def to_dict(self):
        d = asdict(self)
        d["optim"] = self.optim.to_dict()
        d["network"] = self.network.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["optim"] = OptimConfig.from_dict(d["optim"])
        d["network"] = NetworkConfig.from_dict(d["network"])
        return cls(**d)


@dataclass
class TrainReport:
    train_loss: list = field(default_factory=list)
    valid_loss: list = field(default_factory=list)
    learning_rate: list = field(default_factory=list)
    epoch_seconds: list = field(default_factory=list)
    checkpoint_epochs: list = field(default_factory=list)
    initial_valid_loss: float = float("nan")
    best_valid_loss: float = float("nan")
    best_epoch: int = 0
    epochs_run: int = 0
    stopped_reason: str = "max_epochs"

    def to_dict(self, include_timing=True):
        d = asdict(self)
        if not include_timing:
            d.pop("epoch_seconds")
        return d


def _check_splits(train, valid):
    if len(train) == 0 or len(valid) == 0:
        raise ValueError("training and validation splits must be nonempty")
    if not (train.is_standardized and valid.is_standardized):
        raise ValueError("splits must be standardized")
    if train.params.to_dict() != valid.params.to_dict():
        raise ValueError("splits were standardized with different parameters")
    if train.schema.fingerprint() != valid.schema.fingerprint():
        raise ValueError("splits have different feature schemas")


def _batches(n, batch_size, rng, merge_singleton):
    perm = rng.permutation(n)
    out = [perm[i:i + batch_size] for i in range(0, n, batch_size)]
    if merge_singleton and len(out) > 1 and out[-1].size == 1:
        out[-2] = np.concatenate([out[-2], out[-1]])
        out.pop()
    return out


def validation_loss(model, ds):
    """Full-split Gehan loss in eval mode."""
    was_training = model.training
    model.eval()
    try:
        pred = model.forward(ds.x_num, ds.x_cat)
    finally:
        model.training = was_training
    if not np.all(np.isfinite(pred)):
        return float("nan")
    return gehan_loss(ds.target - pred, ds.event)


def train(train_ds, valid_ds, config):
    """Fit a :class:`NetworkModel`; returns ``(best_model, report)``.

    The returned model holds the parameters of the best cycle-boundary
    checkpoint by validation loss, the initialization included, and is left
    in eval mode.
    """
    _check_splits(train_ds, valid_ds)
    train_ds = train_ds.subset(canonical_order(train_ds))
    valid_ds = valid_ds.subset(canonical_order(valid_ds))

    model = NetworkModel(config.network, train_ds.schema)
    model.standardization = train_ds.params
    net = config.network
    uses_bn = net.use_batch_norm and net.num_layers > 0
    if uses_bn and len(train_ds) < 2:
        raise ValueError("batch-norm needs at least two training records")

    rng = np.random.default_rng(config.seed)
    n = len(train_ds)
    steps_per_epoch = len(_batches(n, config.batch_size, np.random.default_rng(0), uses_bn))
    opt = AdamWR(config.optim, model.params, steps_per_epoch)
    boundaries = set(restart_epochs(config.optim.initial_cycle_epochs,
                                    config.optim.cycle_multiplier,
                                    count=max(1, config.max_epochs)))
    boundaries.add(config.max_epochs)

    report = TrainReport()
    best_state = model.state_dict()
    best = validation_loss(model, valid_ds)
    report.initial_valid_loss = report.best_valid_loss = best
    stall = 0
    step = 0
    z, d = train_ds.target, train_ds.event
    for epoch in range(1, config.max_epochs + 1):
        started = time.perf_counter()
        model.train()
        total = 0.0
        diverged = False
        for idx in _batches(n, config.batch_size, rng, uses_bn):
            pred = model.forward(train_ds.x_num[idx], train_ds.x_cat[idx])
            if not np.all(np.isfinite(pred)):
                diverged = True
                break
            loss, g_e = gehan_loss_and_gradient(z[idx] - pred, d[idx])
            model.backward(-g_e)
            try:
                lr = opt.step(model.params, model.grads, step)
            except FloatingPointError:
                diverged = True
                break
            report.learning_rate.append(lr)
            total += loss * idx.size
            step += 1
        report.epochs_run = epoch
        if diverged:
            report.stopped_reason = "diverged"
            log.warning("training diverged in epoch %d; keeping last good checkpoint", epoch)
            break
        v = validation_loss(model, valid_ds)
        report.train_loss.append(total / n)
        report.valid_loss.append(v)
        report.epoch_seconds.append(time.perf_counter() - started)
        if math.isnan(v):
            report.stopped_reason = "diverged"
            log.warning("validation loss is NaN after epoch %d; keeping last good checkpoint", epoch)
            break
        log.debug("epoch %d train %.6f valid %.6f", epoch, total / n, v)
        if epoch in boundaries:
            report.checkpoint_epochs.append(epoch)
            if v < best:
                best, stall = v, 0
                best_state = model.state_dict()
                report.best_epoch = epoch
            else:
                stall += 1
                if stall >= config.early_stop_patience:
                    report.stopped_reason = "early_stop"
                    break
    report.best_valid_loss = best
    model.load_state_dict(best_state)
    model.eval()
    return model, report


def lr_sweep(train_ds, valid_ds, config, grid=LR_GRID):
    """Train once per learning rate; return ``(best_lr, {lr: best_valid_loss})``.

    Ties go to the earlier grid entry.
    """
    results = {}
    for lr in grid:
        cfg = replace(config, optim=replace(config.optim, base_learning_rate=lr))
        _, rep = train(train_ds, valid_ds, cfg)
        results[lr] = rep.best_valid_loss
    best_lr = min(grid, key=lambda lr: (np.nan_to_num(results[lr], nan=np.inf), grid.index(lr)))
    return best_lr, results
