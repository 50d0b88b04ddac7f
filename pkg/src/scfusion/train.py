"""SGD with momentum, masked updates, and the desk-scale training loop.

Structural sparsity is enforced twice per step: gradients at masked-out
kernel positions are already exactly 0 (the sparse backward kernel never
writes them), and after the parameter update both the velocity buffer and the
weights are re-masked. Zero weights therefore stay exactly 0.0 through any
number of steps, including with weight decay in play.

Augmentation follows the usual 32x32 recipe: pad 4 pixels of zeros on each
side, crop a random window of the original size, flip horizontally with
probability 1/2, then normalize with per-channel mean/std computed from the
training set. Draws are keyed by (seed, epoch, sample index), so a sample's
augmentation never depends on batch composition.
"""

from dataclasses import dataclass

import numpy as np

from .autodiff import GradTape


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class SGDConfig:
    lr: float
    momentum: float = 0.9
    schedule: tuple = ()          # ((epoch, lr), ...) step drops, epochs strictly increasing
    weight_decay: float = 0.0

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError(f"lr must be >= 0, got {self.lr}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be >= 0, got {self.weight_decay}")
        epochs = [e for e, _ in self.schedule]
        if any(b <= a for a, b in zip(epochs, epochs[1:])):
            raise ValueError(f"schedule epochs must be strictly increasing, got {epochs}")

    def lr_at(self, epoch):
        lr = self.lr
        for e, v in self.schedule:
            if epoch >= e:
                lr = v
        return lr


class SGD:
    """Momentum SGD over Parameter objects, masking velocity and weights."""

    def __init__(self, params, cfg):
        self.params = list(params)
        self.cfg = cfg
        self.lr = cfg.lr
        self._velocity = [np.zeros_like(p.value) for p in self.params]

    def step(self):
        m, wd = self.cfg.momentum, self.cfg.weight_decay
        for p, v in zip(self.params, self._velocity):
            g = p.grad
            if g is None:
                continue
            if not np.all(np.isfinite(g)):
                raise TrainingDivergedError(
                    f"non-finite gradient for parameter {p.name!r}; aborting"
                )
            if wd:
                g = g + wd * p.value
            v *= m
            v += g
            if p.mask is not None:
                v[..., p.mask == 0] = 0.0
            p.value -= np.asarray(self.lr, dtype=p.value.dtype) * v
            if p.mask is not None:
                p.value[..., p.mask == 0] = 0.0


def sgd_step(params, cfg, state=None, lr=None):
    """One functional momentum step; returns the velocity state for chaining."""
    if state is None:
        state = [np.zeros_like(p.value) for p in params]
    opt = SGD(params, cfg)
    opt._velocity = state
    if lr is not None:
        opt.lr = lr
    opt.step()
    return state


def softmax_cross_entropy(logits, labels):
    """Mean cross-entropy over (n, c, 1, 1) logits; returns (loss, dlogits).

    Stabilized with log-sum-exp; the gradient is (softmax - onehot) / n in
    the logits' dtype.
    """
    n, c = logits.shape[0], logits.shape[1]
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise ValueError(f"labels shape {labels.shape} does not match batch {n}")
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError(f"labels must be in [0, {c}), got range "
                         f"[{labels.min()}, {labels.max()}]")
    z = logits.reshape(n, c)
    zmax = z.max(axis=1, keepdims=True)
    zs = z - zmax
    lse = np.log(np.exp(zs).sum(axis=1, keepdims=True))
    logp = zs - lse
    loss = float(-logp[np.arange(n), labels].mean())
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    grad = (grad / n).astype(logits.dtype).reshape(logits.shape)
    return loss, grad


def channel_stats(images):
    """Per-channel mean/std of a (n, c, h, w) stack, shaped for broadcasting."""
    mean = images.mean(axis=(0, 2, 3), keepdims=True)[0]
    std = images.std(axis=(0, 2, 3), keepdims=True)[0]
    std = np.maximum(std, 1e-6)
    return mean.astype(np.float32), std.astype(np.float32)


def normalize(images, mean, std):
    return ((images - mean) / std).astype(np.float32)


def augment_sample(img, rng, pad=4):
    """Zero-pad, random crop back to size, random horizontal flip."""
    c, h, w = img.shape
    padded = np.zeros((c, h + 2 * pad, w + 2 * pad), dtype=img.dtype)
    padded[:, pad:pad + h, pad:pad + w] = img
    oy = int(rng.integers(0, 2 * pad + 1))
    ox = int(rng.integers(0, 2 * pad + 1))
    out = padded[:, oy:oy + h, ox:ox + w]
    if rng.random() < 0.5:
        out = out[:, :, ::-1]
    return np.ascontiguousarray(out)


def augment_batch(images, sample_indices, seed, epoch):
    out = np.empty_like(images)
    for j, idx in enumerate(sample_indices):
        rng = np.random.default_rng((seed, epoch, int(idx)))
        out[j] = augment_sample(images[j], rng)
    return out


@dataclass
class EpochLog:
    epoch: int
    lr: float
    train_loss: float
    train_acc: float
    eval_acc: float

    def csv_row(self):
        return (f"{self.epoch},{self.lr:.6g},{self.train_loss:.6f},"
                f"{self.train_acc:.6f},{self.eval_acc:.6f}")


LOG_HEADER = "epoch,lr,train_loss,train_acc,eval_acc"


def evaluate(model, images, labels, batch_size=256):
    """Top-1 accuracy; fixed batch grouping so results are bit-reproducible."""
    if model.norm_mean is not None:
        images = normalize(images, model.norm_mean, model.norm_std)
    hits = 0
    for at in range(0, len(images), batch_size):
        xb = images[at:at + batch_size]
        logits = model.forward(xb).value
        pred = np.argmax(logits.reshape(len(xb), -1), axis=1)
        hits += int((pred == labels[at:at + batch_size]).sum())
    return hits / len(images)


def train(model, images, labels, cfg, epochs, seed=0, batch_size=50,
          augment=True, eval_images=None, eval_labels=None, on_epoch=None):
    """Train in place; returns the per-epoch log.

    `images` are raw [0, 1] pixels (n, c, h, w); normalization stats are
    computed here from the training set and stored on the model so that
    later evaluation reproduces the logged accuracy exactly. The eval split
    defaults to the training set, scored without augmentation. Deterministic
    for a fixed seed.
    """
    n = len(images)
    if n == 0:
        raise ValueError("training dataset is empty")
    if labels.shape[0] != n:
        raise ValueError(f"{n} images but {labels.shape[0]} labels")
    mean, std = channel_stats(images)
    model.norm_mean, model.norm_std = mean, std
    if eval_images is None:
        eval_images, eval_labels = images, labels
    params = model.parameters()
    opt = SGD(params, cfg)
    logs = []
    for epoch in range(epochs):
        opt.lr = cfg.lr_at(epoch)
        order = np.random.default_rng((seed, epoch)).permutation(n)
        losses = []
        hits = tot = 0
        for at in range(0, n, batch_size):
            idxs = order[at:at + batch_size]
            xb = images[idxs]
            if augment:
                xb = augment_batch(xb, idxs, seed, epoch)
            xb = normalize(xb, mean, std)
            yb = labels[idxs]
            model.zero_grads()
            tape = GradTape()
            logits = model.forward(xb, tape=tape)
            loss, dlogits = softmax_cross_entropy(logits.value, yb)
            tape.backward(logits, dlogits)
            opt.step()
            losses.append(loss)
            pred = np.argmax(logits.value.reshape(len(yb), -1), axis=1)
            hits += int((pred == yb).sum())
            tot += len(yb)
        eval_acc = evaluate(model, eval_images, eval_labels)
        logs.append(EpochLog(epoch=epoch, lr=opt.lr,
                             train_loss=float(np.mean(losses)),
                             train_acc=hits / tot, eval_acc=eval_acc))
        if on_epoch is not None:
            on_epoch(logs[-1])
    return logs
