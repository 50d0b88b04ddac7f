"""Synthetic class-structured image data for desk-scale experiments.

Each class is an oriented sinusoid with a class-specific spatial frequency
pair; samples vary by random phase, per-channel gain, brightness and additive
noise. The task is chance-level for an untrained net and comfortably
learnable by a small convnet, which is exactly what the desk-scale training
checks need. Deterministic for a fixed seed.
"""

import numpy as np

# one (fy, fx) cycle-count pair per class; distinct orientations/frequencies
CLASS_FREQS = [
    (0, 1), (1, 0), (1, 1), (0, 2), (2, 0),
    (2, 1), (1, 2), (2, 2), (0, 3), (3, 0),
]


def class_pattern_dataset(n, num_classes=10, size=32, seed=0, noise=0.12):
    """Balanced dataset of (images (n,3,size,size) in [0,1], labels)."""
    if not 1 <= num_classes <= len(CLASS_FREQS):
        raise ValueError(f"num_classes must be in [1, {len(CLASS_FREQS)}]")
    rng = np.random.default_rng(seed)
    labels = rng.permutation(np.arange(n) % num_classes).astype(np.int64)
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    images = np.empty((n, 3, size, size), dtype=np.float32)
    for i in range(n):
        fy, fx = CLASS_FREQS[labels[i]]
        phase = rng.uniform(0, 2 * np.pi)
        wave = np.sin(2 * np.pi * (fy * yy + fx * xx) / size + phase)
        gains = rng.uniform(0.5, 1.0, size=3)
        base = rng.uniform(0.35, 0.65)
        img = base + 0.35 * gains[:, None, None] * wave[None]
        img += rng.normal(0.0, noise, size=img.shape)
        images[i] = np.clip(img, 0.0, 1.0)
    return images, labels
