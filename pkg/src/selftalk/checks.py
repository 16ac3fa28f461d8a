"""Gradient verification harness for both neural models.

Builds tiny models (well under 2000 parameters), redraws their weights
at unit-ish scale, and compares analytic backpropagation against central
finite differences over a summed multi-sample loss. The redraw matters:
at the training initialization scale of 0.1 the networks are nearly
linear and many gate gradients drop into finite-difference noise, which
would make the check flag a correct gradient.
"""

from __future__ import annotations

import numpy as np

from .answerer import AnswererConfig, VisualAnswerer
from .generator import GeneratorConfig, QuestionGenerator
from .kernel import GradCheckReport, ParamStore, grad_check
from .vocab import SPECIALS, TokenSequence, vocab_from_words

CHECK_SCALE = 0.8
CHECK_SAMPLES = 5


def _redraw(store: ParamStore, rng: np.random.Generator, scale: float = CHECK_SCALE) -> None:
    for name in store.names():
        store[name] = rng.uniform(-scale, scale, store[name].shape)


def _summed_loss(store: ParamStore, per_sample_losses) -> callable:
    """Sum per-sample losses, accumulating their per-sample gradients."""

    def loss_and_grad() -> float:
        total = 0.0
        acc = {name: np.zeros_like(store.grad(name)) for name in store.names()}
        for sample_loss in per_sample_losses:
            total += sample_loss()
            for name in store.names():
                acc[name] += store.grad(name)
        store.zero_grads()
        for name in store.names():
            store.grad(name)[:] = acc[name]
        return total

    return loss_and_grad


def generator_grad_check(epsilon: float = 1e-5, tolerance: float = 1e-4, seed: int = 0) -> GradCheckReport:
    """Check BPTT through the question generator (V=6, H=4, F=3, D=3)."""
    vocab = vocab_from_words(list(SPECIALS) + ["what", "color", "cube"])
    config = GeneratorConfig(vocab_size=vocab.size, feature_dim=3, embed_dim=3, hidden_dim=4, max_len=8)
    model = QuestionGenerator.initialize(config, vocab, seed)
    rng = np.random.default_rng(seed + 1)
    _redraw(model.params, rng)
    samples = [
        (rng.normal(size=3), TokenSequence(list(rng.integers(3, vocab.size, size=6))))
        for _ in range(CHECK_SAMPLES)
    ]
    losses = [
        (lambda f=f, q=q: model.sequence_loss(f, q))
        for f, q in samples
    ]
    return grad_check(model.params, _summed_loss(model.params, losses), epsilon=epsilon, tolerance=tolerance)


def answerer_grad_check(epsilon: float = 1e-5, tolerance: float = 1e-4, seed: int = 0) -> GradCheckReport:
    """Check BPTT through the visual answerer (V=8, A=4, D=3, H=4, F=3)."""
    vocab = vocab_from_words(list(SPECIALS) + ["what", "color", "is", "the", "cube"])
    config = AnswererConfig(vocab_size=vocab.size, answer_size=4, feature_dim=3, embed_dim=3, hidden_dim=4)
    model = VisualAnswerer.initialize(config, vocab, ["red", "green", "blue", "yellow"], seed)
    rng = np.random.default_rng(seed + 1)
    _redraw(model.params, rng)
    samples = [
        (rng.normal(size=3), TokenSequence(list(rng.integers(3, vocab.size, size=6))), int(rng.integers(4)))
        for _ in range(CHECK_SAMPLES)
    ]
    losses = [
        (lambda f=f, q=q, t=t: model.answer_loss(f, q, t))
        for f, q, t in samples
    ]
    return grad_check(model.params, _summed_loss(model.params, losses), epsilon=epsilon, tolerance=tolerance)
