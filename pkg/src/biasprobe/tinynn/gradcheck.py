"""Finite-difference verification of every parameter tensor's gradient."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..rng import SplitMix64, gaussian_stream, uniform_stream
from .builders import ModelConfig, build_network
from .layers import softmax_cross_entropy


@dataclass
class GradCheckReport:
    max_rel_err: float
    per_tensor: dict[str, float]
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_err < self.tolerance


def grad_check(
    config: ModelConfig,
    tolerance: float = 1e-4,
    input_hw: int = 16,
    batch: int = 2,
    samples_per_tensor: int = 4,
    h: float = 1e-5,
    seed: int = 2024,
    _flip_sign_of: str | None = None,
) -> GradCheckReport:
    """Central finite differences vs analytic gradients, in double precision.

    For each parameter tensor the elements with the largest analytic-gradient
    magnitudes are re-derived as (loss(p+h) - loss(p-h)) / 2h and compared
    relatively. `_flip_sign_of` corrupts one tensor's analytic gradient and is
    only for negative-control tests.
    """
    net = build_network(config, seed=seed, dtype=np.float64)
    # Gently randomize the zero-initialized classifier head and the BN affine
    # parameters so every tensor carries a non-zero gradient, while keeping
    # activations in a tame regime (saturated softmax would blow up the
    # curvature and with it the finite-difference truncation error).
    perturb = SplitMix64(seed)
    params = net.params()
    for name in sorted(params):
        p = params[name]
        g = gaussian_stream(perturb.next_u64(), p.size).reshape(p.shape)
        if p.ndim == 2:
            p[...] = 0.1 * g
        elif p.ndim == 1 and name.endswith("gamma"):
            p[...] = 1.0 + 0.05 * g
        elif p.ndim == 1:
            p[...] = 0.05 * g
    x = uniform_stream(seed + 1, batch * 3 * input_hw * input_hw).reshape(
        batch, 3, input_hw, input_hw)
    labels_rng = SplitMix64(seed + 2)
    y = np.array([labels_rng.next_below(config.num_classes) for _ in range(batch)])

    def loss_only() -> float:
        logits = net.forward(x, train=True)
        loss, _, _ = softmax_cross_entropy(logits, y)
        return loss

    logits = net.forward(x, train=True)
    _, _, dlogits = softmax_cross_entropy(logits, y)
    net.backward(dlogits)
    analytic = {k: v.copy() for k, v in net.grads().items()}
    if _flip_sign_of is not None:
        analytic[_flip_sign_of] *= -1.0

    params = net.params()
    per_tensor: dict[str, float] = {}
    for name in sorted(params):
        p = params[name]
        g = analytic[name]
        flat_g = np.abs(g).ravel()
        k = min(samples_per_tensor, flat_g.size)
        picks = np.argsort(flat_g)[::-1][:k]
        worst = 0.0
        for flat_idx in picks:
            idx = np.unravel_index(flat_idx, p.shape)
            orig = p[idx]
            p[idx] = orig + h
            lp = loss_only()
            p[idx] = orig - h
            lm = loss_only()
            p[idx] = orig
            fd = (lp - lm) / (2.0 * h)
            a = g[idx]
            if abs(fd) < 1e-8 and abs(a) < 1e-8:
                continue
            rel = abs(fd - a) / max(abs(fd), abs(a), 1e-6)
            worst = max(worst, rel)
        per_tensor[name] = worst
    max_rel = max(per_tensor.values()) if per_tensor else 0.0
    return GradCheckReport(max_rel, per_tensor, tolerance)
