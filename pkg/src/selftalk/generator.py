"""Question generator: a multimodal Elman RNN over image features.

The image enters once, as a learned projection added to the first
hidden-state pre-activation; afterwards the recurrence runs on word
embeddings alone. Decoding is greedy ("max") or multinomial ("sample").
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import checkpoint
from .errors import DataError, NumericalError
from .kernel import ParamStore, init_uniform, init_zeros, sgd_step, softmax
from .vocab import END_ID, START_ID, TokenSequence, Vocabulary, decode, vocab_from_words

MODE_MAX = "max"
MODE_SAMPLE = "sample"


@dataclass(frozen=True)
class GeneratorConfig:
    vocab_size: int
    feature_dim: int
    embed_dim: int = 64
    hidden_dim: int = 512
    max_len: int = 20

    def __post_init__(self):
        for name in ("vocab_size", "feature_dim", "embed_dim", "hidden_dim", "max_len"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.max_len < 2:
            raise ValueError("max_len must be >= 2")

    def to_json(self) -> dict:
        return {
            "V": self.vocab_size,
            "D": self.embed_dim,
            "H": self.hidden_dim,
            "F": self.feature_dim,
            "max_len": self.max_len,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "GeneratorConfig":
        return cls(
            vocab_size=obj["V"],
            embed_dim=obj["D"],
            hidden_dim=obj["H"],
            feature_dim=obj["F"],
            max_len=obj["max_len"],
        )


@dataclass
class GenerationResult:
    question: TokenSequence
    log_prob: float
    mode: str
    step_probs: list[float] = field(default_factory=list)


def init_params(config: GeneratorConfig, rng: np.random.Generator) -> ParamStore:
    """Uniform [-0.1, 0.1] weights, zero biases. Embedding row 0 is the START vector."""
    store = ParamStore()
    init_uniform(store, "emb", (config.vocab_size, config.embed_dim), rng)
    init_uniform(store, "w_img", (config.hidden_dim, config.feature_dim), rng)
    init_uniform(store, "w_xh", (config.hidden_dim, config.embed_dim), rng)
    init_uniform(store, "w_hh", (config.hidden_dim, config.hidden_dim), rng)
    init_uniform(store, "w_hy", (config.vocab_size, config.hidden_dim), rng)
    init_zeros(store, "b_h", config.hidden_dim)
    init_zeros(store, "b_y", config.vocab_size)
    return store


class QuestionGenerator:
    def __init__(self, config: GeneratorConfig, vocab: Vocabulary, params: ParamStore):
        if vocab.size != config.vocab_size:
            raise ValueError(f"vocab size {vocab.size} != config vocab_size {config.vocab_size}")
        self.config = config
        self.vocab = vocab
        self.params = params

    @classmethod
    def initialize(cls, config: GeneratorConfig, vocab: Vocabulary, seed: int) -> "QuestionGenerator":
        return cls(config, vocab, init_params(config, np.random.default_rng(seed)))

    # -- forward pieces ----------------------------------------------------

    def image_bias(self, features: np.ndarray) -> np.ndarray:
        """Project image features into hidden space (linear, no bias)."""
        features = np.asarray(features, dtype=np.float64)
        w_img = self.params["w_img"]
        if features.shape != (w_img.shape[1],):
            raise ValueError(f"feature dim {features.shape} does not match w_img {w_img.shape}")
        return w_img @ features

    def rnn_step(self, x_t: np.ndarray, h_prev: np.ndarray, b_img: np.ndarray, t: int):
        """One recurrence step; the image bias participates only at t == 1."""
        if t < 1:
            raise ValueError("step index t starts at 1")
        p = self.params
        a = p["w_xh"] @ x_t + p["w_hh"] @ h_prev + p["b_h"]
        if t == 1:
            a = a + b_img
        h_t = np.tanh(a)
        y_t = softmax(p["w_hy"] @ h_t + p["b_y"])
        return h_t, y_t

    # -- training ----------------------------------------------------------

    def sequence_loss(self, features: np.ndarray, question: TokenSequence) -> float:
        """Teacher-forced cross-entropy over (w_1..w_T, END); fills gradients.

        Inputs are (START, w_1..w_T); full backpropagation through time,
        including the embedding rows and the image projection.
        """
        ids = list(question.ids)
        if not ids:
            raise ValueError("question must be non-empty")
        if any(not 0 <= i < self.config.vocab_size for i in ids):
            raise DataError(f"token id out of range for vocab size {self.config.vocab_size}")
        p = self.params
        p.zero_grads()

        input_ids = [START_ID] + ids
        targets = ids + [END_ID]
        steps = len(targets)

        b_img = self.image_bias(features)
        hidden = self.config.hidden_dim
        hs = np.zeros((steps + 1, hidden))
        xs = p["emb"][input_ids]
        probs = []
        loss = 0.0
        for t in range(1, steps + 1):
            h_t, y_t = self.rnn_step(xs[t - 1], hs[t - 1], b_img, t)
            hs[t] = h_t
            probs.append(y_t)
            loss -= float(np.log(max(y_t[targets[t - 1]], 1e-12)))
        if not np.isfinite(loss):
            raise NumericalError("non-finite sequence loss")

        # per-step logit and pre-activation gradients are collected, then
        # folded into the weight gradients with one matmul per matrix
        dzs = np.vstack(probs)
        dzs[np.arange(steps), targets] -= 1.0
        das = np.empty((steps, hidden))
        d_h_next = np.zeros(hidden)
        features = np.asarray(features, dtype=np.float64)
        for t in range(steps, 0, -1):
            dh = p["w_hy"].T @ dzs[t - 1] + d_h_next
            das[t - 1] = dh * (1.0 - hs[t] ** 2)
            d_h_next = p["w_hh"].T @ das[t - 1]
        p.grad("w_hy")[:] += dzs.T @ hs[1:]
        p.grad("b_y")[:] += dzs.sum(axis=0)
        p.grad("w_xh")[:] += das.T @ xs
        p.grad("w_hh")[:] += das.T @ hs[:-1]
        p.grad("b_h")[:] += das.sum(axis=0)
        p.grad("w_img")[:] += np.outer(das[0], features)
        emb_grad = p["w_xh"].T @ das.T
        emb_grads = p.grad("emb")
        for t, idx in enumerate(input_ids):
            emb_grads[idx] += emb_grad[:, t]
        return loss

    # -- decoding ----------------------------------------------------------

    def sample(
        self,
        features: np.ndarray,
        mode: str = MODE_SAMPLE,
        seed: int | None = 0,
        max_len: int | None = None,
        temperature: float = 1.0,
    ) -> GenerationResult:
        """Generate one question; stops at END or after max_len tokens.

        "max" takes the argmax each step (ties resolved to the lowest id)
        and ignores the seed; "sample" draws by inverse CDF from a
        generator seeded with ``seed``. START can never be emitted: its
        probability is zeroed and the distribution renormalized.
        """
        if mode not in (MODE_MAX, MODE_SAMPLE):
            raise ValueError(f"unknown decoding mode {mode!r}")
        limit = self.config.max_len if max_len is None else max_len
        rng = np.random.default_rng(seed)
        b_img = self.image_bias(features)
        p = self.params

        h = np.zeros(self.config.hidden_dim)
        x = p["emb"][START_ID]
        ids: list[int] = []
        step_probs: list[float] = []
        log_prob = 0.0
        for t in range(1, limit + 1):
            h, y = self.rnn_step(x, h, b_img, t)
            if temperature != 1.0:
                y = softmax(np.log(np.maximum(y, 1e-300)) / temperature)
            y = y.copy()
            y[START_ID] = 0.0
            y /= y.sum()
            if mode == MODE_MAX:
                choice = int(np.argmax(y))
            else:
                cdf = np.cumsum(y)
                cdf[-1] = 1.0
                choice = int(np.searchsorted(cdf, rng.random(), side="right"))
            step_probs.append(float(y[choice]))
            log_prob += float(np.log(y[choice]))
            if choice == END_ID:
                break
            ids.append(choice)
            if len(ids) >= limit:
                break
            x = p["emb"][choice]
        surface = decode(self.vocab, ids)
        return GenerationResult(TokenSequence(ids, surface=surface), log_prob, mode, step_probs)

    # -- persistence ---------------------------------------------------------

    def save(self, path) -> None:
        checkpoint.write_checkpoint(path, "qgen", self.config.to_json(), self.vocab.words, self.params)

    @classmethod
    def load(cls, path) -> "QuestionGenerator":
        doc = checkpoint.read_checkpoint(path, expected_model="qgen")
        config = GeneratorConfig.from_json(doc["config"])
        vocab = vocab_from_words(doc["vocab"])
        return cls(config, vocab, checkpoint.params_from_doc(doc))


def train_generator(
    dataset: list[tuple[np.ndarray, TokenSequence]],
    config: GeneratorConfig,
    vocab: Vocabulary,
    epochs: int,
    seed: int,
    learning_rate: float = 0.1,
    clip: float = 5.0,
    lr_halving_epochs: int = 5,
    log_every: int | None = None,
) -> tuple[QuestionGenerator, list[float]]:
    """Pure-SGD training (batch size 1); deterministic given the seed.

    Returns the trained model and the per-epoch mean loss trace. The
    learning rate is halved every ``lr_halving_epochs`` epochs.
    """
    if not dataset:
        raise DataError("empty training dataset")
    feat_dims = {np.asarray(f).shape for f, _ in dataset}
    if len(feat_dims) != 1:
        raise DataError(f"inconsistent feature dims in dataset: {sorted(feat_dims)}")

    rng = np.random.default_rng(seed)
    model = QuestionGenerator(config, vocab, init_params(config, rng))
    trace: list[float] = []
    order = np.arange(len(dataset))
    for epoch in range(epochs):
        lr = learning_rate * 0.5 ** (epoch // lr_halving_epochs)
        rng.shuffle(order)
        total = 0.0
        for idx in order:
            features, question = dataset[idx]
            total += model.sequence_loss(features, question)
            sgd_step(model.params, lr, clip)
        trace.append(total / len(dataset))
        if log_every and (epoch + 1) % log_every == 0:
            print(f"epoch {epoch + 1}/{epochs} mean loss {trace[-1]:.4f}")
    return model, trace
