"""End-to-end training of the unfolded network: tape gradients, Adam, finite-difference checks."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tape
from .errors import DivergenceError, ShapeError
from .model import FusionPair
from .network import mse_loss, network_forward, tree_leaves, tree_unflatten

logger = logging.getLogger(__name__)

ETA_FLOOR = 1e-6


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-4
    decay_factor: float = 0.9
    decay_every: int = 50
    epochs: int = 100
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.decay_factor <= 0:
            raise ValueError("learning rate and decay factor must be positive")
        if self.decay_every < 1 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("decay_every and batch_size must be positive, epochs nonnegative")

    def lr_at(self, epoch):
        """Learning rate for a 0-based epoch index."""
        return self.learning_rate * self.decay_factor ** (epoch // self.decay_every)


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, leaves, **kw):
        return cls([np.zeros_like(x) for x in leaves], [np.zeros_like(x) for x in leaves], **kw)


@dataclass(frozen=True)
class TrainingSet:
    """Stacked samples: ``pan (N,H,W,1)``, ``ms_up (N,H,W,B)``, ``gt (N,H,W,B)``."""

    pan: np.ndarray
    ms_up: np.ndarray
    gt: np.ndarray

    def __len__(self):
        return self.pan.shape[0]


@dataclass
class TrainResult:
    params: object
    history: list = field(default_factory=list)  # (epoch, mean_loss, lr)


def adam_update(leaves, grads, state, lr):
    """One Adam step with bias correction. Returns ``(new_leaves, new_state)``."""
    if len(leaves) != len(grads) or len(leaves) != len(state.m):
        raise ShapeError("parameter, gradient and state lists differ in length")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    new_leaves, new_m, new_v = [], [], []
    for p, g, m, v in zip(leaves, grads, state.m, state.v):
        if np.shape(p) != np.shape(g):
            raise ShapeError(f"gradient shape {np.shape(g)} does not match parameter {np.shape(p)}")
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        step = lr * m_hat / (np.sqrt(v_hat) + state.eps)
        new_leaves.append((p - step).astype(np.asarray(p).dtype))
        new_m.append(m)
        new_v.append(v)
    return new_leaves, AdamState(new_m, new_v, t, b1, b2, state.eps)


def loss_and_grads(pair, truth, params):
    """Loss of one forward pass and its gradient for every parameter tensor."""
    leaves = tree_leaves(params)
    tape = Tape()
    variables = [tape.leaf(x) for x in leaves]
    out, _ = network_forward(pair, tree_unflatten(params, variables))
    loss = mse_loss(out, truth)
    grads = tape.backward(loss)
    return float(loss.value), [
        np.zeros_like(x) if grads[v.index] is None else grads[v.index].astype(np.asarray(x).dtype)
        for x, v in zip(leaves, variables)
    ]


def _loss_with_masks(pair, truth, leaves, template):
    tape = Tape()
    variables = [tape.leaf(x) for x in leaves]
    out, _ = network_forward(pair, tree_unflatten(template, variables))
    loss = mse_loss(out, truth)
    masks = [n.saved["mask"] for n in tape.nodes if n.op == "relu"]
    return float(loss.value), masks


def finite_diff_check(params, pair, truth, perturbation=1e-5, n_samples=200, seed=0,
                      atol=1e-8, return_details=False):
    """Worst relative error between tape gradients and central differences.

    Draws one scalar from each tensor (last tensor first) and then
    size-weighted extras, ``n_samples`` in all.
    A sample whose perturbation flips any relu activation is replaced by a
    fresh draw, since central differences are meaningless across a kink.
    The relative error is ``|g_tape - g_fd| / max(|g_tape|, |g_fd|, atol)``.
    """
    if perturbation <= 0:
        raise ValueError("perturbation must be positive")
    leaves = [np.array(x, dtype=np.float64) for x in tree_leaves(params)]
    pair = FusionPair(np.asarray(pair.pan, np.float64), np.asarray(pair.ms_up, np.float64))
    truth = np.asarray(truth, np.float64)
    _, grads = loss_and_grads(pair, truth, tree_unflatten(params, leaves))
    _, base_masks = _loss_with_masks(pair, truth, leaves, params)

    rng = np.random.default_rng(seed)
    sizes = np.array([x.size for x in leaves])
    picks = [(i, int(rng.integers(sizes[i]))) for i in range(len(leaves))]
    worst, checked, skipped, records = 0.0, 0, 0, []
    attempts = 0
    while checked < n_samples:
        if picks:
            li, flat = picks.pop()
        else:
            li = int(rng.choice(len(leaves), p=sizes / sizes.sum()))
            flat = int(rng.integers(sizes[li]))
        attempts += 1
        if attempts > 20 * n_samples:
            raise RuntimeError("could not find enough kink-free samples")
        orig = leaves[li].flat[flat]
        leaves[li].flat[flat] = orig + perturbation
        lp, mp = _loss_with_masks(pair, truth, leaves, params)
        leaves[li].flat[flat] = orig - perturbation
        lm, mm = _loss_with_masks(pair, truth, leaves, params)
        leaves[li].flat[flat] = orig
        if any(not np.array_equal(a, b) for a, b in zip(mp, base_masks)) or any(
            not np.array_equal(a, b) for a, b in zip(mm, base_masks)
        ):
            skipped += 1
            continue
        fd = (lp - lm) / (2 * perturbation)
        ag = float(grads[li].flat[flat])
        err = abs(ag - fd) / max(abs(ag), abs(fd), atol)
        worst = max(worst, err)
        checked += 1
        records.append((li, flat, ag, fd, err))
    if skipped:
        logger.info("finite_diff_check skipped %d samples crossing a relu kink", skipped)
    if return_details:
        return worst, records
    return worst


def _batch(data, idx):
    return FusionPair(data.pan[idx], data.ms_up[idx]), data.gt[idx]


def train(data, params, cfg=TrainConfig(), callback=None):
    """Adam training on seeded shuffled mini-batches.

    ``data`` is a :class:`TrainingSet` or a dataset manifest (see
    :func:`proxpan.wald.load_training_set`). The recorded loss per epoch is
    the mean per-sample squared error.
    """
    if not isinstance(data, TrainingSet):
        from .wald import load_training_set

        data = load_training_set(data)
    n = len(data)
    if n < 1:
        raise ValueError("training set is empty")
    cfg_net = params.config
    if data.ms_up.shape[-1] != cfg_net.bands:
        raise ShapeError(f"data has {data.ms_up.shape[-1]} bands, network expects {cfg_net.bands}")

    rng = np.random.default_rng(cfg.seed)
    leaves = [np.asarray(x) for x in tree_leaves(params)]
    eta_slots = list(range(len(leaves) - 3, len(leaves)))
    state = AdamState.zeros_like(leaves)
    result = TrainResult(params)
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        order = rng.permutation(n)
        total = 0.0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            pair, truth = _batch(data, idx)
            loss, grads = loss_and_grads(pair, truth, tree_unflatten(params, leaves))
            if not math.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch} batch {b}")
            leaves, state = adam_update(leaves, grads, state, lr)
            for i in eta_slots:
                leaves[i] = np.maximum(leaves[i], ETA_FLOOR).astype(leaves[i].dtype)
            total += loss
        mean = total / n
        result.history.append((epoch, mean, lr))
        logger.info("epoch %d mean loss %.6g lr %.3g", epoch, mean, lr)
        if callback is not None:
            callback(epoch, mean, lr)
    result.params = tree_unflatten(params, leaves)
    return result


def write_history_csv(history, path):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_loss", "lr"])
        for epoch, loss, lr in history:
            writer.writerow([epoch, repr(float(loss)), repr(float(lr))])
