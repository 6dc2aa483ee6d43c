"""Adam and the training loop.

The loop is deliberately plain: seeded shuffling into fixed batches,
forward / loss / backward / step, an append-only loss-curve CSV, and
periodic checkpoints. Identical seeds give identical curves.
"""
import csv
import os
import time

import numpy as np

from . import autodiff as ad
from . import colorspace, losses, model
from .errors import (ArgumentError, DatasetError, NumericError, StateError,
                     TrainingDiverged)

# converted training tensors are kept in memory when the dataset is at
# most this many triples; past that, images are converted per batch
CACHE_LIMIT = 64


class AdamState:
    """First/second moment buffers, one pair per parameter tensor."""

    def __init__(self, tensors, lr=2e-4, beta1=0.9, beta2=0.999, eps=1e-8):
        self.m = [np.zeros_like(t.data) for t in tensors]
        self.v = [np.zeros_like(t.data) for t in tensors]
        self.steps = 0
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps


def adam_step(tensors, state):
    """One bias-corrected Adam update, in place."""
    if len(tensors) != len(state.m):
        raise StateError(f"optimizer tracks {len(state.m)} tensors, got {len(tensors)}")
    for t in tensors:
        if t.grad is None:
            raise StateError(f"parameter {t.name or '<unnamed>'} has no gradient")
    state.steps += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.steps
    c2 = 1.0 - b2 ** state.steps
    for t, m, v in zip(tensors, state.m, state.v):
        g = t.grad
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        t.data -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


def triple_to_tensors(shadow_rgb, mask, free_rgb, dtype=np.float32,
                      color_space="lab"):
    """One training triple -> network-domain arrays (3,h,w), (1,h,w), (3,h,w).

    color_space "rgb" skips the LAB transform and feeds raw [0, 1]
    channels, for the single-branch ablation that learns in RGB.
    """
    if color_space == "lab":
        x = colorspace.rgb_image_to_net(shadow_rgb, dtype=dtype)
        y = colorspace.rgb_image_to_net(free_rgb, dtype=dtype)
    elif color_space == "rgb":
        x = np.transpose(np.asarray(shadow_rgb, dtype=dtype), (2, 0, 1))
        y = np.transpose(np.asarray(free_rgb, dtype=dtype), (2, 0, 1))
    else:
        raise ArgumentError(f"color_space must be 'lab' or 'rgb', got {color_space!r}")
    m = np.asarray(mask, dtype=dtype)[None]
    return x, m, y


def predict_rgb(params, shadow_rgb, mask, color_space="lab"):
    """Run one image through the network; returns an (h, w, 3) array in [0, 1]."""
    x, m, _ = triple_to_tensors(shadow_rgb, mask, shadow_rgb,
                                color_space=color_space)
    pred = model.forward(params, ad.Tensor(x[None]), m[None])
    planes = pred.data[0]
    if color_space == "lab":
        return colorspace.net_to_rgb_image(planes)
    return np.clip(np.transpose(planes, (1, 2, 0)), 0.0, 1.0)


class TrainResult:
    __slots__ = ("steps", "curve_path", "checkpoint_path", "first_loss",
                 "last_loss", "seconds")

    def __init__(self, steps, curve_path, checkpoint_path, first_loss,
                 last_loss, seconds):
        self.steps = steps
        self.curve_path = curve_path
        self.checkpoint_path = checkpoint_path
        self.first_loss = first_loss
        self.last_loss = last_loss
        self.seconds = seconds


def train(params, dataset, out_dir, epochs, batch_size, seed=0, lr=2e-4,
          weights=None, extractor=None, checkpoint_every=0, max_steps=None,
          log=None, color_space="lab"):
    """Run the loop over `dataset` (a sequence of (shadow, mask, free) image
    triples in [0, 1]); writes loss_curve.csv and model.ckpt under out_dir.

    checkpoint_every > 0 also saves model_epochN.ckpt every N epochs.
    max_steps caps total steps for smoke and overfit runs.
    """
    if len(dataset) == 0:
        raise ArgumentError("training dataset is empty")
    if batch_size < 1 or epochs < 1:
        raise ArgumentError("batch_size and epochs must be >= 1")
    weights = weights or losses.LossWeights()
    extractor = extractor or losses.default_extractor()
    os.makedirs(out_dir, exist_ok=True)
    curve_path = os.path.join(out_dir, "loss_curve.csv")
    ckpt_path = os.path.join(out_dir, "model.ckpt")

    def load(i):
        item = dataset[i]
        shadow, mask, free = item[0], item[1], item[2]
        return triple_to_tensors(shadow, mask, free, color_space=color_space)

    cache = None
    if len(dataset) <= CACHE_LIMIT:
        cache = [load(i) for i in range(len(dataset))]
    shape0 = (cache[0][0].shape if cache else load(0)[0].shape)
    opt = AdamState(params.tensors(), lr=lr)
    rng = np.random.default_rng(seed)
    first_loss = None
    last_loss = None
    step = 0
    t_start = time.time()
    with open(curve_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "epoch", "mse", "percep", "grad", "total"])
        for epoch in range(1, epochs + 1):
            order = rng.permutation(len(dataset))
            for lo in range(0, len(order), batch_size):
                idx = order[lo:lo + batch_size]
                items = [cache[i] if cache else load(i) for i in idx]
                for x, _, _ in items:
                    if x.shape != shape0:
                        raise DatasetError(
                            f"mixed image sizes in dataset: {x.shape} vs {shape0}")
                xb = ad.Tensor(np.stack([it[0] for it in items]))
                mb = np.stack([it[1] for it in items])
                yb = ad.Tensor(np.stack([it[2] for it in items]))
                try:
                    pred = model.forward(params, xb, mb)
                    total, parts = losses.loss_breakdown(pred, yb, weights,
                                                         extractor)
                except NumericError as exc:
                    raise TrainingDiverged(
                        f"non-finite values at step {step + 1} "
                        f"(epoch {epoch}): {exc}") from exc
                if not np.isfinite(parts["total"]):
                    raise TrainingDiverged(
                        f"non-finite loss at step {step + 1} (epoch {epoch}): {parts}")
                params.zero_grads()
                ad.backward(total)
                adam_step(params.tensors(), opt)
                step += 1
                if first_loss is None:
                    first_loss = parts["total"]
                last_loss = parts["total"]
                writer.writerow([step, epoch, f"{parts['mse']:.8g}",
                                 f"{parts['percep']:.8g}", f"{parts['grad']:.8g}",
                                 f"{parts['total']:.8g}"])
                if log and (step % 10 == 0 or step == 1):
                    log(f"step {step} epoch {epoch} total {parts['total']:.5g}")
                if max_steps is not None and step >= max_steps:
                    break
            if checkpoint_every and epoch % checkpoint_every == 0:
                model.save_checkpoint(
                    os.path.join(out_dir, f"model_epoch{epoch}.ckpt"), params)
            if max_steps is not None and step >= max_steps:
                break
    model.save_checkpoint(ckpt_path, params)
    return TrainResult(step, curve_path, ckpt_path, first_loss, last_loss,
                       time.time() - t_start)
